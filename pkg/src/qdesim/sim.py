"""Successor generation and state-transition graph construction."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .constraints import PartialState, Semantics, check_state, enumerate_states, propagate
from .dsl import QdeModel
from .qcore import (
    ModelError,
    QDir,
    QMag,
    QualitativeState,
    QualitativeValue,
    QuantitySpace,
    TimeLabel,
    adjacent_regions,
    sort_key,
    state_key,
)

log = logging.getLogger(__name__)

DEFAULT_MAX_STATES = 100_000


class Terminal(str, Enum):
    EQUILIBRIUM = "equilibrium"
    DEAD_END = "dead-end"
    BOUND_SATURATION = "bound-saturation"


@dataclass(frozen=True)
class SimConfig:
    max_states: int = DEFAULT_MAX_STATES
    exclude_marginal: bool = True  # drop coincident events and honour cornot
    generic_intervals: bool = True  # steady over an interval only when forced
    open_bounds: bool = True  # outer non-zero landmarks are never attained
    initial_label: TimeLabel = TimeLabel.POINT
    full_envisionment: bool = False  # seed with every consistent state instead of the model's init

    def __post_init__(self) -> None:
        if self.max_states < 1:
            raise ValueError("max_states must be at least 1")

    @property
    def semantics(self) -> Semantics:
        return Semantics(open_bounds=self.open_bounds, exclusions=self.exclude_marginal)

    def as_dict(self) -> dict:
        return {
            "max_states": self.max_states,
            "exclude_marginal": self.exclude_marginal,
            "generic_intervals": self.generic_intervals,
            "open_bounds": self.open_bounds,
            "initial_label": self.initial_label.value,
            "full_envisionment": self.full_envisionment,
        }


class StateLimitExceeded(RuntimeError):
    def __init__(self, graph: "StateTransitionGraph"):
        self.graph = graph
        super().__init__(f"state limit of {graph.config.max_states} exceeded")


class PreconditionError(ValueError):
    pass


def candidate_transitions(v: QualitativeValue, label: TimeLabel, space: QuantitySpace) -> list[QualitativeValue]:
    """Continuity table: values a variable may take in the state following ``label``."""
    below, above = adjacent_regions(v.mag, space)
    inc, std, dec = QDir.INC, QDir.STD, QDir.DEC
    out: list[tuple[QMag | None, QDir]]
    if label is TimeLabel.POINT:
        if v.mag.is_landmark:
            out = {
                std: [(v.mag, std), (above, inc), (below, dec)],
                inc: [(above, inc)],
                dec: [(below, dec)],
            }[v.dir]
        else:
            out = {
                std: [(v.mag, std), (v.mag, inc), (v.mag, dec)],
                inc: [(v.mag, inc)],
                dec: [(v.mag, dec)],
            }[v.dir]
    else:
        if v.mag.is_landmark:
            # over an interval a landmark value is necessarily steady
            out = [(v.mag, std)] if v.dir == std else []
        else:
            out = {
                std: [(v.mag, std), (v.mag, inc), (v.mag, dec)],
                inc: [(above, inc), (above, std), (v.mag, inc), (v.mag, std)],
                dec: [(below, dec), (below, std), (v.mag, dec), (v.mag, std)],
            }[v.dir]
    return [QualitativeValue(m, d) for m, d in out if m is not None]


def _events(src: QualitativeState, dst: QualitativeState) -> frozenset[int]:
    return frozenset(i for i, (a, b) in enumerate(zip(src.values, dst.values)) if a != b)


def _marginal(successors: list[QualitativeState], src: QualitativeState) -> set[QualitativeState]:
    """Successors whose events are exactly a coincidence of other successors' events."""
    events = {s: _events(src, s) for s in successors}
    out = set()
    for s, ev in events.items():
        if len(ev) < 2:
            continue
        parts = [e for e in events.values() if e and e < ev]
        if parts and frozenset().union(*parts) == ev:
            out.add(s)
    return out


def _alternatives(v: QualitativeValue, space: QuantitySpace) -> frozenset[QualitativeValue]:
    if v.mag.is_landmark:
        return frozenset(QualitativeValue(m, d) for m in adjacent_regions(v.mag, space) if m is not None for d in QDir)
    return frozenset({QualitativeValue(v.mag, QDir.INC), QualitativeValue(v.mag, QDir.DEC)})


def _derivative_partners(model: QdeModel) -> dict[str, frozenset[str]]:
    out: dict[str, set[str]] = {n: set() for n in model.names}
    for c in model.constraints:
        if c.kind == "d/dt":
            a, b = c.args
            out[a].add(b)
            out[b].add(a)
    return {k: frozenset(v) for k, v in out.items()}


def is_generic(model: QdeModel, s: QualitativeState, sem: Semantics | None = None) -> bool:
    """True unless some variable is steady over an interval without being forced to.

    A steady value is forced when no other nearby value for that variable (its
    d/dt partners left free, everything else fixed) is consistent.  Point
    states are always generic.
    """
    if s.label is TimeLabel.POINT:
        return True
    sem = sem or Semantics()
    partners = _derivative_partners(model)
    for i, (name, v) in enumerate(zip(model.names, s.values)):
        if v.dir != QDir.STD:
            continue
        cands: dict[str, frozenset[QualitativeValue] | None] = {
            n: frozenset([w]) for n, w in zip(model.names, s.values)
        }
        cands[name] = _alternatives(v, model.spaces[i])
        for p in partners[name]:
            cands[p] = None
        if propagate(model, PartialState(s.label, cands), sem):
            return False
    return True


def generate_successors(model: QdeModel, s: QualitativeState, cfg: SimConfig | None = None) -> list[QualitativeState]:
    cfg = cfg or SimConfig()
    sem = cfg.semantics
    res = check_state(model, s, sem)
    if not res:
        raise PreconditionError(f"state is inconsistent: {res.reason}")
    if s.is_equilibrium:
        return []
    cands = {
        name: frozenset(candidate_transitions(v, s.label, space))
        for (name, space), v in zip(model.variables.items(), s.values)
    }
    succ = propagate(model, PartialState(s.label.flipped(), cands), sem)
    if s.label is TimeLabel.POINT and cfg.generic_intervals:
        succ = [t for t in succ if is_generic(model, t, sem)]
    if s.label is TimeLabel.INTERVAL:
        # staying inside the same interval is not an event
        succ = [t for t in succ if t.values != s.values]
        if cfg.exclude_marginal:
            drop = _marginal(succ, s)
            succ = [t for t in succ if t not in drop]
    return sorted(succ, key=sort_key)


@dataclass
class StateTransitionGraph:
    model: QdeModel
    config: SimConfig
    vertices: list[QualitativeState] = field(default_factory=list)
    edges: list[tuple[int, int]] = field(default_factory=list)
    initials: list[int] = field(default_factory=list)
    terminals: dict[int, Terminal] = field(default_factory=dict)
    index: dict[bytes, int] = field(default_factory=dict, repr=False)

    def add(self, s: QualitativeState) -> tuple[int, bool]:
        key = state_key(s)
        if key in self.index:
            return self.index[key], False
        self.index[key] = len(self.vertices)
        self.vertices.append(s)
        return len(self.vertices) - 1, True

    def find(self, s: QualitativeState) -> int | None:
        return self.index.get(state_key(s))

    def successors(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {i: [] for i in range(len(self.vertices))}
        for a, b in self.edges:
            out[a].append(b)
        return out

    def format_state(self, i: int) -> str:
        s = self.vertices[i]
        vals = ", ".join(
            f"{name}={space.format(v)}" for (name, space), v in zip(self.model.variables.items(), s.values)
        )
        return f"#{i} [{s.label.value}] {vals}"

    @property
    def n_point(self) -> int:
        return sum(1 for s in self.vertices if s.label is TimeLabel.POINT)

    @property
    def n_interval(self) -> int:
        return len(self.vertices) - self.n_point

    @property
    def n_assignments(self) -> int:
        return len({s.values for s in self.vertices})


def _classify(model: QdeModel, s: QualitativeState) -> Terminal:
    if s.is_equilibrium:
        return Terminal.EQUILIBRIUM
    if any(space.is_bound(v.mag) and v.dir != QDir.STD for space, v in zip(model.spaces, s.values)):
        return Terminal.BOUND_SATURATION
    return Terminal.DEAD_END


def initial_states(model: QdeModel, cfg: SimConfig) -> list[QualitativeState]:
    sem = cfg.semantics
    if cfg.full_envisionment:
        pts = enumerate_states(model, TimeLabel.POINT, sem)
        ivs = [s for s in enumerate_states(model, TimeLabel.INTERVAL, sem) if not s.all_steady]
        out = pts + ivs
    else:
        if not model.init:
            raise PreconditionError("model has no initial values (use full envisionment)")
        out = propagate(model, PartialState.from_init(model, cfg.initial_label), sem)
    if cfg.generic_intervals:
        out = [s for s in out if is_generic(model, s, sem)]
    return sorted(out, key=sort_key)


def build_stg(model: QdeModel, cfg: SimConfig | None = None) -> StateTransitionGraph:
    """Breadth-first closure of :func:`generate_successors` from the initial states."""
    cfg = cfg or SimConfig()
    g = StateTransitionGraph(model, cfg)
    inits = initial_states(model, cfg)
    if not inits:
        raise PreconditionError("no consistent initial state")
    frontier: deque[int] = deque()
    for s in inits:
        if g.find(s) is None and len(g.vertices) >= cfg.max_states:
            raise StateLimitExceeded(g)
        i, new = g.add(s)
        if new:
            g.initials.append(i)
            frontier.append(i)
    while frontier:
        i = frontier.popleft()
        succ = generate_successors(model, g.vertices[i], cfg)
        if not succ:
            g.terminals[i] = _classify(model, g.vertices[i])
        for t in succ:
            if g.find(t) is None and len(g.vertices) >= cfg.max_states:
                raise StateLimitExceeded(g)
            j, new = g.add(t)
            g.edges.append((i, j))
            if new:
                frontier.append(j)
    log.info("STG for %s: %d states, %d edges", model.name, len(g.vertices), len(g.edges))
    return g


def stg_summary(g: StateTransitionGraph) -> dict:
    kinds = {k.value: 0 for k in Terminal}
    for t in g.terminals.values():
        kinds[t.value] += 1
    return {
        "states": len(g.vertices),
        "point_states": g.n_point,
        "interval_states": g.n_interval,
        "distinct_assignments": g.n_assignments,
        "edges": len(g.edges),
        "initial": len(g.initials),
        "terminals": kinds,
    }
