"""Analysis runs shared by the command line and the fixture self-test."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Iterable, Sequence

from .analysis import (
    GeneralizedStg,
    check_unavoidable,
    cluster_gstg,
    default_quadrant_axes,
    find_critical_branchings,
    find_equilibria,
    find_irreversible,
    mark_overcapitalization,
    precedes_on_all_paths,
    region_transitions,
)
from .dsl import QdeModel
from .qcore import ModelError, QDir, TimeLabel
from .sim import SimConfig, StateLimitExceeded, StateTransitionGraph, build_stg, stg_summary

STATE_TARGET, STATE_WINDOW = 467, (350, 600)
CLUSTER_TARGET, CLUSTER_WINDOW = 19, (15, 25)


class SelectorError(ValueError):
    pass


@dataclass(frozen=True)
class DirCondition:
    var: str
    dir: QDir

    @classmethod
    def parse(cls, text: str) -> "DirCondition":
        var, sep, word = text.partition(":")
        if not sep or not var:
            raise SelectorError(f"expected VAR:DIR, got {text!r}")
        try:
            return cls(var.strip(), QDir.parse(word.strip()))
        except ModelError as exc:
            raise SelectorError(str(exc)) from None


def _ids(text: str, g: GeneralizedStg) -> list[int]:
    try:
        out = [int(p) for p in text.split("+")]
    except ValueError:
        raise SelectorError(f"malformed cluster list {text!r}") from None
    for i in out:
        if not 0 <= i < len(g.clusters):
            raise SelectorError(f"cluster {i} does not exist")
    return out


def start_clusters(g: GeneralizedStg) -> list[int]:
    return sorted({g.cluster_of[i] for i in g.stg.initials})


def resolve_unavoidable(
    g: GeneralizedStg, spec: str, overcap: Sequence[int] | None
) -> tuple[list[int], list[int], list[int]]:
    parts = spec.split(",")
    if len(parts) != 3 or not all(p.strip() for p in parts):
        raise SelectorError("--unavoidable expects START,GATE,TARGETS")
    start, gate, targets = (p.strip() for p in parts)
    starts = start_clusters(g) if start == "init" else _ids(start, g)
    if gate == "overcap":
        if overcap is None:
            raise SelectorError("gate 'overcap' needs --overcap HARVEST,CAPITAL")
        gates = list(overcap)
    else:
        gates = _ids(gate, g)
    tgts = find_equilibria(g) if targets == "equilibria" else _ids(targets, g)
    return starts, gates, tgts


def _sig(g: GeneralizedStg, c: int) -> dict:
    return {
        "id": c,
        "signature": {
            v: [g.model.space(v).mag_name(val.mag), val.dir.word]
            for v, val in zip(g.relevant, g.clusters[c].signature)
        },
    }


def counts(g: GeneralizedStg) -> dict:
    s = stg_summary(g.stg)
    s["clusters"] = len(g.clusters)
    s["cluster_edges"] = len(g.edges)
    return s


def analyze(
    g: GeneralizedStg,
    *,
    irreversible: bool = True,
    branchings: bool = True,
    overcap: tuple[str, str] | None = None,
    unavoidable: str | None = None,
    precedes: tuple[DirCondition, DirCondition] | None = None,
    calibration: bool = False,
) -> dict[str, Any]:
    rep: dict[str, Any] = {
        "model": g.model.name,
        "config": g.stg.config.as_dict(),
        "relevant": list(g.relevant),
        "counts": counts(g),
        "equilibria": [_sig(g, c) for c in find_equilibria(g)],
    }
    if irreversible:
        rep["irreversible"] = [{"from": a, "to": b} for a, b in find_irreversible(g)]
        axes = default_quadrant_axes(g)
        if axes is not None:
            rep["quadrant_transitions"] = [
                {"from": t.source, "to": t.target, "regions": list(t.regions), "irreversible": t.irreversible}
                for t in region_transitions(g, *axes)
            ]
    if branchings:
        rep["critical_branchings"] = find_critical_branchings(g)
    oc = None
    if overcap is not None:
        oc = mark_overcapitalization(g, *overcap)
        rep["overcapitalization"] = {"harvest": overcap[0], "capital": overcap[1], "clusters": oc}
    if unavoidable is not None:
        starts, gates, tgts = resolve_unavoidable(g, unavoidable, oc)
        verdicts = []
        for s in starts:
            res = check_unavoidable(g, s, gates, tgts)
            verdicts.append(
                {"start": s, "holds": res.holds, "witness": [_sig(g, c) for c in res.witness]}
            )
        rep["unavoidability"] = {
            "gate": gates,
            "targets": tgts,
            "holds": all(v["holds"] for v in verdicts),
            "verdicts": verdicts,
        }
    if precedes is not None:
        rep["precedence"] = precedence(g, *precedes)
    if calibration:
        rep["calibration"] = calibration_sweep(g.model, g.relevant, g.stg.config)
    return rep


def precedence(g: GeneralizedStg, first: DirCondition, second: DirCondition) -> dict:
    """Along every path from the start clusters, ``second`` never occurs before ``first``."""
    stg = g.stg
    i1, i2 = stg.model.index(first.var), stg.model.index(second.var)
    starts = [i for c in start_clusters(g) for i in g.clusters[c].members]
    ok, cex = precedes_on_all_paths(
        stg,
        starts,
        lambda i: stg.vertices[i].values[i1].dir == first.dir,
        lambda i: stg.vertices[i].values[i2].dir == second.dir,
    )
    return {
        "first": f"{first.var}:{first.dir.word}",
        "second": f"{second.var}:{second.dir.word}",
        "holds": ok,
        "counterexample": [stg.format_state(i) for i in cex],
    }


SWEEP = (
    ("defaults", {}),
    ("coincident events and cornot kept", {"exclude_marginal": False}),
    ("steady-over-interval allowed", {"generic_intervals": False}),
    ("outer bounds attainable", {"open_bounds": False}),
    ("seeded with every consistent state", {"full_envisionment": True}),
    ("interval initial label", {"initial_label": TimeLabel.INTERVAL}),
)


def _row(name: str, model: QdeModel, relevant: Sequence[str], cfg: SimConfig) -> dict:
    row: dict[str, Any] = {"setting": name, "config": cfg.as_dict()}
    try:
        g = build_stg(model, cfg)
    except StateLimitExceeded:
        row["exceeded_max_states"] = True
        return row
    gs = cluster_gstg(g, relevant)
    interval_sigs = {
        gs.cluster_of[i] for i, s in enumerate(g.vertices) if s.label is TimeLabel.INTERVAL or s.is_equilibrium
    }
    row.update(
        {
            "states": len(g.vertices),
            "point_states": g.n_point,
            "interval_states": g.n_interval,
            "distinct_assignments": g.n_assignments,
            "clusters": len(gs.clusters),
            "interval_and_equilibrium_clusters": len(interval_sigs),
        }
    )
    return row


def calibration_sweep(model: QdeModel, relevant: Sequence[str], base: SimConfig) -> dict:
    rows = [_row(name, model, relevant, replace(base, **kw)) for name, kw in SWEEP]
    d = rows[0]
    lo, hi = STATE_WINDOW
    clo, chi = CLUSTER_WINDOW
    lines = [
        f"Default semantics: {d['states']} states ({d['point_states']} point, {d['interval_states']} interval, "
        f"{d['distinct_assignments']} distinct assignments) and {d['clusters']} clusters over "
        f"({', '.join(relevant)}); targets {STATE_TARGET} and {CLUSTER_TARGET}, windows {lo}-{hi} and {clo}-{chi}.",
    ]
    for r in rows[1:]:
        if r.get("exceeded_max_states"):
            lines.append(f"{r['setting']}: exceeds the state limit.")
        else:
            lines.append(f"{r['setting']}: {r['states']} states, {r['clusters']} clusters.")
    lines.append(
        f"Counting only interval states gives {d['interval_states']}; clustering only interval and "
        f"equilibrium states gives {d['interval_and_equilibrium_clusters']} clusters."
    )
    in_window = [
        r["setting"]
        for r in rows
        if not r.get("exceeded_max_states") and lo <= r["states"] <= hi and clo <= r["clusters"] <= chi
    ]
    done = [r for r in rows if not r.get("exceeded_max_states")]
    near = min(done, key=lambda r: abs(r["states"] - STATE_TARGET))
    near_c = min(done, key=lambda r: abs(r["clusters"] - CLUSTER_TARGET))
    lines.append(
        f"Closest to the state target: {near['setting']} ({near['states']}); "
        f"closest to the cluster target: {near_c['setting']} ({near_c['clusters']})."
    )
    lines.append(
        "Settings inside both windows: " + (", ".join(in_window) if in_window else "none") + "."
    )
    return {
        "state_target": STATE_TARGET,
        "state_window": list(STATE_WINDOW),
        "cluster_target": CLUSTER_TARGET,
        "cluster_window": list(CLUSTER_WINDOW),
        "rows": rows,
        "account": " ".join(lines),
    }


def full_run(
    model: QdeModel,
    cfg: SimConfig | None = None,
    relevant: Iterable[str] | None = None,
) -> tuple[StateTransitionGraph, GeneralizedStg]:
    g = build_stg(model, cfg or SimConfig())
    gs = cluster_gstg(g, tuple(relevant) if relevant is not None else model.relevant)
    return g, gs
