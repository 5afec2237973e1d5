"""Command-line entry point: simulate, cluster, analyze, export, validate.

Exit codes: 0 success, 2 user or input error, 3 resource bound reached,
4 internal invariant failure (including oracle containment violations).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .analysis import cluster_gstg
from .dsl import parse_model, serialize_model
from .export import (
    ExportError,
    ExportOptions,
    QuadrantHint,
    SCHEMA_ID,
    SCHEMA_VERSION,
    dumps,
    export_graph,
    export_report,
    gstg_from_json,
    gstg_to_json,
    load_document,
    sha256_text,
    stg_from_json,
    stg_to_json,
)
from .numeric import load_sidecar, validate_against_stg
from .pipeline import DirCondition, SelectorError, analyze
from .qcore import ModelError, TimeLabel
from .sim import PreconditionError, SimConfig, StateLimitExceeded, build_stg, stg_summary

log = logging.getLogger("qdesim")

EXIT_OK, EXIT_INPUT, EXIT_LIMIT, EXIT_INTERNAL = 0, 2, 3, 4
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _count(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("must not be negative")
    return v


def _globals(p: argparse.ArgumentParser, top: bool) -> None:
    # top-level copies carry the defaults; subcommand copies only override
    d = (lambda v: v) if top else (lambda v: argparse.SUPPRESS)
    p.add_argument("--out", default=d(None), help="output path (default depends on the command)")
    p.add_argument("--seed", type=_u64, default=d(0), help="random seed for validate")
    p.add_argument("--jobs", type=_positive, default=d(1), help="worker cap (runs are single-threaded)")
    p.add_argument("--max-states", type=_positive, default=d(100_000), help="STG vertex bound")
    p.add_argument(
        "--allow-marginal",
        action="store_true",
        default=d(False),
        help="keep coincident landmark events and ignore cornot constraints",
    )


def _knobs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--allow-steady-intervals", action="store_true", help="do not require steady-over-interval to be forced")
    p.add_argument("--closed-bounds", action="store_true", help="let variables reach outer non-zero landmarks")
    p.add_argument("--full-envisionment", action="store_true", help="start from every consistent state")
    p.add_argument("--initial-label", choices=("P", "I"), default="P", help="time label of the initial states")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qdesim", description="Qualitative simulation of QDE models.")
    p.add_argument("--version", action="version", version=f"qdesim {__version__}")
    _globals(p, top=True)
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("simulate", help="build the state-transition graph of a model")
    _globals(s, top=False)
    s.add_argument("model")
    _knobs(s)

    c = sub.add_parser("cluster", help="quotient an STG artifact by relevant variables")
    _globals(c, top=False)
    c.add_argument("artifact")
    c.add_argument("--relevant", help="comma-separated variables (default: the model's relevant section)")

    a = sub.add_parser("analyze", help="run structural analyses on a GSTG artifact")
    _globals(a, top=False)
    a.add_argument("artifact")
    a.add_argument("--irreversible", action="store_true")
    a.add_argument("--branchings", action="store_true")
    a.add_argument("--overcap", metavar="HARVEST,CAPITAL")
    a.add_argument("--unavoidable", metavar="START,GATE,TARGETS")
    a.add_argument("--precedes", metavar="VAR:DIR,VAR:DIR", help="first condition must not come after the second")
    a.add_argument("--calibration", action="store_true", help="re-simulate under each semantic knob and report counts")

    e = sub.add_parser("export", help="render an STG or GSTG artifact as DOT or JSON")
    _globals(e, top=False)
    e.add_argument("artifact")
    fmt = e.add_mutually_exclusive_group()
    fmt.add_argument("--dot", dest="format", action="store_const", const="dot")
    fmt.add_argument("--json", dest="format", action="store_const", const="json")
    e.add_argument("--quadrants", metavar="XVAR,XLM,HVAR,HLM")
    e.add_argument("--self-loops", action="store_true")
    e.add_argument("--unicode", action="store_true", help="use arrow characters for directions")

    v = sub.add_parser("validate", help="check numeric instances against the STG")
    _globals(v, top=False)
    v.add_argument("model")
    v.add_argument("--samples", type=_count, default=100)
    v.add_argument("--sidecar", help="sidecar path (default: MODEL with .sidecar.json)")
    v.add_argument("--stg", help="check against this STG artifact instead of a full envisionment")
    _knobs(v)
    return p


# ---------------------------------------------------------------------------
# helpers


def _config(args, *, full: bool | None = None) -> SimConfig:
    return SimConfig(
        max_states=args.max_states,
        exclude_marginal=not args.allow_marginal,
        generic_intervals=not args.allow_steady_intervals,
        open_bounds=not args.closed_bounds,
        initial_label=TimeLabel(args.initial_label),
        full_envisionment=args.full_envisionment if full is None else full,
    )


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def _stem(path: str, suffixes: Sequence[str]) -> Path:
    p = Path(path)
    name = p.name
    for s in suffixes:
        if name.endswith(s):
            return p.with_name(name[: -len(s)])
    return p.with_name(p.stem)


class Run:
    """Collects inputs and outputs for the manifest written next to the artifact."""

    def __init__(self, command: str, args):
        self.command = command
        self.args = args
        self.inputs: list[dict] = []
        self.outputs: list[dict] = []
        self.config: dict = {}

    def input(self, path: str, text: str) -> None:
        self.inputs.append({"path": str(path), "sha256": sha256_text(text)})

    def write(self, path: Path, text: str) -> None:
        path.write_text(text, encoding="utf-8")
        self.outputs.append({"path": str(path), "sha256": sha256_text(text)})
        log.info("wrote %s", path)

    def manifest(self, primary: Path) -> None:
        doc = {
            "schema": SCHEMA_ID,
            "version": SCHEMA_VERSION,
            "kind": "manifest",
            "command": self.command,
            "engine": f"qdesim {__version__}",
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
        }
        Path(str(primary) + ".manifest.json").write_text(dumps(doc), encoding="utf-8")

    def emit(self, text: str, default: Path | None) -> None:
        """Write to --out, else ``default``, else stdout.  Files get a manifest."""
        target = Path(self.args.out) if self.args.out else default
        if target is None:
            sys.stdout.write(text)
            return
        self.write(target, text)
        self.manifest(target)


def _load(path: str, run: Run) -> dict:
    text = _read(path)
    run.input(path, text)
    return load_document(text)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    run = Run("simulate", args)
    text = _read(args.model)
    run.input(args.model, text)
    model = parse_model(text)
    cfg = _config(args)
    run.config = {"sim": cfg.as_dict()}
    default = _stem(args.model, (".qde",)).with_suffix(".stg.json")
    try:
        g = build_stg(model, cfg)
    except StateLimitExceeded as exc:
        run.emit(dumps(stg_to_json(exc.graph, partial=True)), default)
        print(f"error: {exc}; partial graph with {len(exc.graph.vertices)} states written", file=sys.stderr)
        return EXIT_LIMIT
    run.emit(dumps(stg_to_json(g)), default)
    s = stg_summary(g)
    t = s["terminals"]
    print(
        f"{model.name}: {s['states']} states ({s['point_states']} point, {s['interval_states']} interval, "
        f"{s['distinct_assignments']} distinct assignments), {s['edges']} edges, "
        f"{t['equilibrium']} equilibria, {t['dead-end']} dead ends, {t['bound-saturation']} bound saturations"
    )
    return EXIT_OK


def cmd_cluster(args) -> int:
    run = Run("cluster", args)
    doc = _load(args.artifact, run)
    g = stg_from_json(doc)
    if doc.get("partial"):
        log.warning("clustering a partial STG")
    relevant = tuple(v.strip() for v in args.relevant.split(",")) if args.relevant else g.model.relevant
    if not relevant:
        raise UsageError("no relevant variables: pass --relevant or add a (relevant ...) section")
    gs = cluster_gstg(g, relevant)
    run.config = {"sim": g.config.as_dict(), "relevant": list(relevant)}
    run.emit(dumps(gstg_to_json(gs)), _stem(args.artifact, (".stg.json", ".json")).with_suffix(".gstg.json"))
    print(f"{len(gs.clusters)} clusters over ({', '.join(relevant)}), {len(gs.edges)} edges")
    return EXIT_OK


def _pair(text: str, what: str) -> tuple[str, str]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2 or not all(parts):
        raise SelectorError(f"{what} expects two comma-separated items")
    return parts[0], parts[1]


def cmd_analyze(args) -> int:
    run = Run("analyze", args)
    gs = gstg_from_json(_load(args.artifact, run))
    overcap = _pair(args.overcap, "--overcap") if args.overcap else None
    precedes = None
    if args.precedes:
        a, b = _pair(args.precedes, "--precedes")
        precedes = (DirCondition.parse(a), DirCondition.parse(b))
    for v in (overcap or ()) + tuple(c.var for c in precedes or ()):
        if v not in gs.relevant and v not in gs.model.names:
            raise SelectorError(f"unknown variable {v!r}")
    rep = analyze(
        gs,
        irreversible=args.irreversible,
        branchings=args.branchings,
        overcap=overcap,
        unavoidable=args.unavoidable,
        precedes=precedes,
        calibration=args.calibration,
    )
    run.config = {
        "sim": gs.stg.config.as_dict(),
        "relevant": list(gs.relevant),
        "analyses": {
            "irreversible": args.irreversible,
            "branchings": args.branchings,
            "overcap": args.overcap,
            "unavoidable": args.unavoidable,
            "precedes": args.precedes,
            "calibration": args.calibration,
        },
    }
    run.emit(export_report(rep), None)
    return EXIT_OK


def cmd_export(args) -> int:
    run = Run("export", args)
    doc = _load(args.artifact, run)
    g = gstg_from_json(doc) if doc.get("kind") == "gstg" else stg_from_json(doc)
    o = ExportOptions(
        format=args.format or "dot",
        layout_hint=QuadrantHint.parse(args.quadrants) if args.quadrants else None,
        include_self_loops=args.self_loops,
        unicode_arrows=args.unicode,
    )
    run.config = {"export": {"format": o.format, "quadrants": args.quadrants, "self_loops": o.include_self_loops}}
    run.emit(export_graph(g, o), None)
    return EXIT_OK


def cmd_validate(args) -> int:
    run = Run("validate", args)
    text = _read(args.model)
    run.input(args.model, text)
    model = parse_model(text)
    sidecar = args.sidecar or str(_stem(args.model, (".qde",)).with_suffix(".sidecar.json"))
    if not Path(sidecar).is_file():
        raise UsageError(f"sidecar not found: {sidecar}")
    run.input(sidecar, _read(sidecar))
    sc = load_sidecar(sidecar)
    sc.check(model)
    if args.stg:
        g = stg_from_json(_load(args.stg, run))
        if serialize_model(g.model) != serialize_model(model):
            raise UsageError("the STG artifact was built from a different model")
    else:
        g = build_stg(model, _config(args, full=True))
    if args.samples == 0:
        log.warning("no samples requested; the check is vacuous")
    rep = validate_against_stg(model, sc, g, args.samples, args.seed)
    run.config = {"sim": g.config.as_dict(), "samples": args.samples, "seed": args.seed}
    doc = {"report_type": "validation", "model": model.name, "states": len(g.vertices), **rep.as_dict()}
    run.emit(export_report(doc), None)
    print(
        f"{model.name}: {args.samples} instances, {len(rep.violations)} violations, "
        f"{len(rep.unresolved)} unresolved, {rep.visited_states} distinct states visited",
        file=sys.stderr,
    )
    if rep.violations:
        return EXIT_INTERNAL
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "cluster": cmd_cluster,
    "analyze": cmd_analyze,
    "export": cmd_export,
    "validate": cmd_validate,
}


def _setup_logging() -> None:
    raw = os.environ.get("QDESIM_LOG", "warn").strip().lower()
    level = LOG_LEVELS.get(raw)
    logging.basicConfig(level=level or logging.WARNING, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if level is None:
        log.warning("QDESIM_LOG=%r is not one of %s; using warn", raw, ", ".join(LOG_LEVELS))


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    if args.jobs > 1:
        log.info("--jobs %d accepted; simulation runs in one worker", args.jobs)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ModelError, ExportError, SelectorError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.debug("internal failure", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
