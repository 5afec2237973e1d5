"""Deterministic DOT and JSON serialization of graphs and reports.

JSON documents follow ``schema/stg-v1.json``.  STG documents embed the
canonical model text so later pipeline stages can rebuild everything from
the file alone.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from typing import Any, Mapping

from .analysis import GeneralizedStg, find_irreversible, quadrant
from .dsl import parse_model, serialize_model
from .qcore import ModelError, QDir, QualitativeState, QualitativeValue, TimeLabel
from .sim import SimConfig, StateTransitionGraph, Terminal

SCHEMA_ID = "qdesim/stg-v1"
SCHEMA_VERSION = 1


class ExportError(ValueError):
    pass


@dataclass(frozen=True)
class QuadrantHint:
    x_var: str
    x_landmark: str
    h_var: str
    h_landmark: str

    @classmethod
    def parse(cls, text: str) -> "QuadrantHint":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4 or not all(parts):
            raise ExportError("quadrant hint must read XVAR,XLANDMARK,HVAR,HLANDMARK")
        return cls(*parts)


@dataclass(frozen=True)
class ExportOptions:
    format: str = "dot"
    layout_hint: QuadrantHint | None = None
    include_self_loops: bool = False
    unicode_arrows: bool = False

    def __post_init__(self) -> None:
        if self.format not in ("dot", "json"):
            raise ExportError(f"unknown export format {self.format!r}")


def dumps(doc: Mapping[str, Any]) -> str:
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# JSON


def _value_json(space, v: QualitativeValue) -> list[str]:
    return [space.mag_name(v.mag), v.dir.word]


def _model_json(model) -> dict:
    text = serialize_model(model)
    return {"name": model.name, "source": text, "sha256": sha256_text(text)}


def stg_to_json(g: StateTransitionGraph, *, partial: bool = False) -> dict:
    m = g.model
    return {
        "schema": SCHEMA_ID,
        "version": SCHEMA_VERSION,
        "kind": "stg",
        "model": _model_json(m),
        "config": g.config.as_dict(),
        "partial": partial,
        "variables": list(m.names),
        "vertices": [
            {
                "id": i,
                "signature": [_value_json(sp, v) for sp, v in zip(m.spaces, s.values)],
                "timeLabel": s.label.value,
                **({"terminal": g.terminals[i].value} if i in g.terminals else {}),
            }
            for i, s in enumerate(g.vertices)
        ],
        "edges": [{"from": a, "to": b} for a, b in g.edges],
        "annotations": {"initial": list(g.initials)},
    }


def _parse_value(space, pair) -> QualitativeValue:
    try:
        mag, word = pair
    except (TypeError, ValueError):
        raise ExportError(f"malformed value {pair!r}") from None
    return QualitativeValue(space.parse_mag(mag), QDir.parse(word))


def _check_header(doc: Mapping[str, Any], kind: str) -> None:
    if not isinstance(doc, Mapping) or doc.get("schema") != SCHEMA_ID:
        raise ExportError(f"not a {SCHEMA_ID} document")
    if doc.get("version") != SCHEMA_VERSION:
        raise ExportError(f"unsupported document version {doc.get('version')!r}")
    if doc.get("kind") != kind:
        raise ExportError(f"expected a {kind} document, found {doc.get('kind')!r}")


def stg_from_json(doc: Mapping[str, Any]) -> StateTransitionGraph:
    _check_header(doc, "stg")
    try:
        model = parse_model(doc["model"]["source"])
        c = doc["config"]
        cfg = SimConfig(
            max_states=c["max_states"],
            exclude_marginal=c["exclude_marginal"],
            generic_intervals=c["generic_intervals"],
            open_bounds=c["open_bounds"],
            initial_label=TimeLabel(c["initial_label"]),
            full_envisionment=c["full_envisionment"],
        )
        g = StateTransitionGraph(model, cfg)
        for k, v in enumerate(doc["vertices"]):
            if v["id"] != k:
                raise ExportError("vertex ids must be consecutive from 0")
            vals = tuple(_parse_value(sp, p) for sp, p in zip(model.spaces, v["signature"]))
            if len(vals) != len(model.names):
                raise ExportError(f"vertex {k} does not assign every variable")
            _, new = g.add(QualitativeState(vals, TimeLabel(v["timeLabel"])))
            if not new:
                raise ExportError(f"vertex {k} repeats an earlier vertex")
            if "terminal" in v:
                g.terminals[k] = Terminal(v["terminal"])
        n = len(g.vertices)
        for e in doc["edges"]:
            a, b = int(e["from"]), int(e["to"])
            if not (0 <= a < n and 0 <= b < n):
                raise ExportError(f"edge {a}->{b} refers to a missing vertex")
            g.edges.append((a, b))
        g.initials = [int(i) for i in doc["annotations"]["initial"]]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, (ExportError, ModelError)):
            raise
        raise ExportError(f"malformed STG document: {exc}") from None
    return g


def gstg_to_json(g: GeneralizedStg, hint: QuadrantHint | None = None) -> dict:
    m = g.model
    spaces = [m.space(v) for v in g.relevant]
    irr = set(find_irreversible(g))
    ann: dict[str, Any] = {
        "relevant": list(g.relevant),
        "selfLoops": sorted(g.self_loops),
        "overcapitalization": sorted(c for c, a in g.annotations.items() if a.get("overcapitalization")),
    }
    if hint is not None:
        _check_hint(g, hint)
        ann["quadrants"] = {
            str(c.id): quadrant(g, c.id, (hint.x_var, hint.x_landmark), (hint.h_var, hint.h_landmark))
            for c in g.clusters
        }
    return {
        "schema": SCHEMA_ID,
        "version": SCHEMA_VERSION,
        "kind": "gstg",
        "model": _model_json(m),
        "variables": list(g.relevant),
        "vertices": [
            {
                "id": c.id,
                "signature": [_value_json(sp, v) for sp, v in zip(spaces, c.signature)],
                "members": list(c.members),
                **({"terminal": Terminal.EQUILIBRIUM.value} if g.annotations[c.id].get("equilibrium") else {}),
            }
            for c in g.clusters
        ],
        "edges": [{"from": a, "to": b, "irreversible": (a, b) in irr} for a, b in g.edges],
        "annotations": ann,
        "stg": stg_to_json(g.stg),
    }


def gstg_from_json(doc: Mapping[str, Any]) -> GeneralizedStg:
    from .analysis import cluster_gstg

    _check_header(doc, "gstg")
    try:
        stg = stg_from_json(doc["stg"])
        relevant = doc["annotations"]["relevant"]
    except (KeyError, TypeError) as exc:
        raise ExportError(f"malformed GSTG document: {exc}") from None
    g = cluster_gstg(stg, relevant)
    over = set(doc["annotations"].get("overcapitalization", []))
    for c in g.clusters:
        g.annotations[c.id]["overcapitalization"] = c.id in over
    return g


# ---------------------------------------------------------------------------
# DOT

_ID_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def _dot_id(text: str) -> str:
    return text if _ID_RE.match(text) else _quote(text)


def _check_hint(g: GeneralizedStg, hint: QuadrantHint) -> None:
    for var, lm in ((hint.x_var, hint.x_landmark), (hint.h_var, hint.h_landmark)):
        if var not in g.relevant:
            raise ExportError(f"quadrant hint names {var!r}, which is not a relevant variable")
        if lm not in g.model.space(var):
            raise ExportError(f"quadrant hint names landmark {lm!r}, which {var!r} does not have")


def _label(names, spaces, values, arrows: bool, header: str) -> str:
    mags = " ".join(f"{n}={sp.mag_name(v.mag)}" for n, sp, v in zip(names, spaces, values))
    dirs = " ".join(v.dir.arrow if arrows else v.dir.glyph for v in values)
    return f"{header}\n{mags}\n{dirs}"


def export_graph(g: StateTransitionGraph | GeneralizedStg, o: ExportOptions = ExportOptions()) -> str:
    if o.format == "json":
        if isinstance(g, GeneralizedStg):
            return dumps(gstg_to_json(g, o.layout_hint))
        if o.layout_hint is not None:
            raise ExportError("quadrant hints apply to generalized graphs only")
        return dumps(stg_to_json(g))
    if isinstance(g, GeneralizedStg):
        return _gstg_dot(g, o)
    if o.layout_hint is not None:
        raise ExportError("quadrant hints apply to generalized graphs only")
    return _stg_dot(g, o)


def _stg_dot(g: StateTransitionGraph, o: ExportOptions) -> str:
    m = g.model
    lines = [f"digraph {_dot_id(m.name)} {{", "  node [shape=box];"]
    for i, s in enumerate(g.vertices):
        attrs = [f"label={_quote(_label(m.names, m.spaces, s.values, o.unicode_arrows, f'#{i} {s.label.value}'))}"]
        if s.is_equilibrium:
            attrs.append("shape=circle")
        lines.append(f"  n{i} [{', '.join(attrs)}];")
    for a, b in sorted(set(g.edges)):
        if a != b or o.include_self_loops:
            lines.append(f"  n{a} -> n{b};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _gstg_dot(g: GeneralizedStg, o: ExportOptions) -> str:
    m = g.model
    spaces = [m.space(v) for v in g.relevant]
    irr = set(find_irreversible(g))
    lines = [f"digraph {_dot_id(m.name + '_gstg')} {{", "  node [shape=box];"]

    def node(c) -> str:
        attrs = [f"label={_quote(_label(g.relevant, spaces, c.signature, o.unicode_arrows, f'#{c.id}'))}"]
        ann = g.annotations.get(c.id, {})
        if ann.get("equilibrium"):
            attrs.append("shape=circle")
        if ann.get("overcapitalization"):
            attrs.append("style=dashed")
        return f"n{c.id} [{', '.join(attrs)}];"

    if o.layout_hint is not None:
        h = o.layout_hint
        _check_hint(g, h)
        groups: dict[str, list] = {}
        for c in g.clusters:
            q = quadrant(g, c.id, (h.x_var, h.x_landmark), (h.h_var, h.h_landmark)) or "boundary"
            groups.setdefault(q, []).append(c)
        for q in ("I", "II", "III", "IV", "boundary"):
            if q not in groups:
                continue
            lines.append(f"  subgraph cluster_{q} {{")
            lines.append(f"    label={_quote(q)};")
            lines.extend(f"    {node(c)}" for c in groups[q])
            lines.append("  }")
    else:
        lines.extend(f"  {node(c)}" for c in g.clusters)
    for a, b in g.edges:
        lines.append(f"  n{a} -> n{b}{' [style=bold]' if (a, b) in irr else ''};")
    if o.include_self_loops:
        lines.extend(f"  n{c} -> n{c};" for c in sorted(g.self_loops))
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# reports


def export_report(results: Mapping[str, Any]) -> str:
    """Aggregate analysis results into one versioned JSON document."""
    doc = {"schema": SCHEMA_ID, "version": SCHEMA_VERSION, "kind": "report"}
    doc.update(results)
    return dumps(doc)


def load_document(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ExportError(f"not a JSON document: {exc}") from None
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA_ID:
        raise ExportError(f"not a {SCHEMA_ID} document")
    return doc
