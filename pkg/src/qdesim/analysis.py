"""Generalized state-transition graphs and structural analyses.

A GSTG is the quotient of an STG by equality of the relevant variables'
qualitative values (time labels ignored).  The analyses answer questions
about that quotient: where the system can come to rest, which transitions
cannot be undone, where development branches irreversibly, and whether a
set of situations is unavoidable on the way to any rest point.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import networkx as nx

from .qcore import ModelError, QDir, QualitativeValue, sign_relative
from .sim import StateTransitionGraph, Terminal

Signature = tuple[QualitativeValue, ...]


@dataclass(frozen=True)
class Cluster:
    id: int
    signature: Signature
    members: tuple[int, ...]


@dataclass
class GeneralizedStg:
    stg: StateTransitionGraph
    relevant: tuple[str, ...]
    clusters: list[Cluster]
    edges: list[tuple[int, int]]
    self_loops: set[int]
    cluster_of: list[int]
    annotations: dict[int, dict] = field(default_factory=dict)

    @property
    def model(self):
        return self.stg.model

    def successors(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {c.id: [] for c in self.clusters}
        for a, b in self.edges:
            out[a].append(b)
        return out

    def value(self, cluster: int, var: str) -> QualitativeValue:
        try:
            return self.clusters[cluster].signature[self.relevant.index(var)]
        except ValueError:
            raise ModelError(f"{var!r} is not a relevant variable of this graph") from None

    def find(self, pred: Callable[[Signature], bool]) -> list[int]:
        return [c.id for c in self.clusters if pred(c.signature)]

    def format_signature(self, cluster: int) -> str:
        sig = self.clusters[cluster].signature
        return ", ".join(
            f"{v}={self.model.space(v).format(val)}" for v, val in zip(self.relevant, sig)
        )

    def glyphs(self, cluster: int) -> str:
        return "".join(v.dir.glyph for v in self.clusters[cluster].signature)

    def digraph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(c.id for c in self.clusters)
        g.add_edges_from(self.edges)
        return g


def _sig_key(sig: Signature) -> tuple:
    return tuple((v.mag.region, int(v.dir)) for v in sig)


def cluster_gstg(g: StateTransitionGraph, relevant: Iterable[str]) -> GeneralizedStg:
    relevant = tuple(relevant)
    if not relevant:
        raise ModelError("relevant variable set is empty")
    if len(set(relevant)) != len(relevant):
        raise ModelError("relevant variables repeat")
    idx = [g.model.index(v) for v in relevant]

    members: dict[Signature, list[int]] = {}
    for i, s in enumerate(g.vertices):
        members.setdefault(tuple(s.values[j] for j in idx), []).append(i)
    raw_edges: dict[Signature, set[Signature]] = {sig: set() for sig in members}
    sig_of = [tuple(s.values[j] for j in idx) for s in g.vertices]
    loops_raw: set[Signature] = set()
    for a, b in g.edges:
        sa, sb = sig_of[a], sig_of[b]
        if sa == sb:
            loops_raw.add(sa)
        else:
            raw_edges[sa].add(sb)

    # number clusters breadth-first from the initial clusters
    order: dict[Signature, int] = {}
    queue: deque[Signature] = deque()
    for sig in sorted({sig_of[i] for i in g.initials}, key=_sig_key):
        order[sig] = len(order)
        queue.append(sig)
    while queue:
        sig = queue.popleft()
        for nxt in sorted(raw_edges[sig], key=_sig_key):
            if nxt not in order:
                order[nxt] = len(order)
                queue.append(nxt)
    for sig in sorted(members, key=_sig_key):  # unreachable leftovers, if any
        order.setdefault(sig, len(order))

    clusters = sorted(
        (Cluster(n, sig, tuple(members[sig])) for sig, n in order.items()), key=lambda c: c.id
    )
    edges = sorted((order[a], order[b]) for a, outs in raw_edges.items() for b in outs)
    cluster_of = [order[s] for s in sig_of]
    out = GeneralizedStg(g, relevant, clusters, edges, {order[s] for s in loops_raw}, cluster_of)
    for c in clusters:
        out.annotations[c.id] = {"equilibrium": any(g.vertices[i].is_equilibrium for i in c.members)}
    return out


def find_equilibria(g: StateTransitionGraph | GeneralizedStg) -> list[int]:
    if isinstance(g, GeneralizedStg):
        return [c.id for c in g.clusters if any(g.stg.vertices[i].is_equilibrium for i in c.members)]
    return sorted(i for i, t in g.terminals.items() if t is Terminal.EQUILIBRIUM)


def find_irreversible(g: GeneralizedStg) -> list[tuple[int, int]]:
    comp: dict[int, int] = {}
    for n, scc in enumerate(nx.strongly_connected_components(g.digraph())):
        for v in scc:
            comp[v] = n
    return [(a, b) for a, b in g.edges if comp[a] != comp[b]]


def find_critical_branchings(g: GeneralizedStg) -> list[int]:
    irr = {a for a, _ in find_irreversible(g)}
    succ = g.successors()
    return [c for c in sorted(succ) if len(succ[c]) >= 2 and c in irr]


def mark_overcapitalization(g: GeneralizedStg, harvest: str, capital: str) -> list[int]:
    for v in (harvest, capital):
        if v not in g.relevant:
            raise ModelError(f"{v!r} is not a relevant variable of this graph")
    out = [
        c.id
        for c in g.clusters
        if g.value(c.id, harvest).dir == QDir.DEC and g.value(c.id, capital).dir == QDir.INC
    ]
    for c in g.clusters:
        g.annotations.setdefault(c.id, {})["overcapitalization"] = c.id in out
    return out


@dataclass(frozen=True)
class Unavoidability:
    holds: bool
    witness: tuple[int, ...] = ()  # gate-avoiding path start -> target when not holds

    def __bool__(self) -> bool:
        return self.holds


def check_unavoidable(
    g: GeneralizedStg, start: int, gate: Iterable[int], targets: Iterable[int]
) -> Unavoidability:
    """Whether every path from ``start`` to a target passes through ``gate``."""
    gate, targets = set(gate), set(targets)
    if not 0 <= start < len(g.clusters):
        raise ModelError(f"cluster {start} is not in the graph")
    if start in gate:
        return Unavoidability(True)
    succ = g.successors()
    parent = {start: None}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        if u in targets:
            path = [u]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return Unavoidability(False, tuple(reversed(path)))
        for w in succ[u]:
            if w not in gate and w not in parent:
                parent[w] = u
                queue.append(w)
    return Unavoidability(True)


@dataclass(frozen=True)
class Behavior:
    vertices: tuple[int, ...]
    end: str  # terminal kind, "target" or "cycle"


class BehaviorLimitExceeded(RuntimeError):
    pass


def extract_behaviors(
    g: StateTransitionGraph,
    start: int,
    to: int | None = None,
    max_revisits: int = 0,
    limit: int | None = None,
) -> list[Behavior]:
    """Paths from ``start`` to a terminal (or ``to``), each vertex used at most
    ``max_revisits + 1`` times.  A path that can only continue by exceeding
    that bound ends with a ``cycle`` marker.
    """
    if not 0 <= start < len(g.vertices):
        raise ModelError(f"vertex {start} is not in the graph")
    succ = {i: sorted(set(v)) for i, v in g.successors().items()}
    cap = max_revisits + 1
    uses = [0] * len(g.vertices)
    path: list[int] = []
    out: list[Behavior] = []

    def emit(end: str) -> None:
        out.append(Behavior(tuple(path), end))
        if limit is not None and len(out) > limit:
            raise BehaviorLimitExceeded(f"more than {limit} behaviors")

    # explicit stack keeps deep graphs away from the recursion limit
    path.append(start)
    uses[start] += 1
    if to == start:
        emit("target")
        return out
    if not succ[start]:
        emit(g.terminals.get(start, Terminal.DEAD_END).value)
        return out
    stack = [iter(succ[start])]
    progressed = [False]
    while stack:
        nxt = next((w for w in stack[-1] if uses[w] < cap), None)
        if nxt is None:
            if not progressed[-1]:
                emit("cycle")
            stack.pop()
            progressed.pop()
            v = path.pop()
            uses[v] -= 1
            continue
        progressed[-1] = True
        path.append(nxt)
        uses[nxt] += 1
        if nxt == to:
            emit("target")
        elif not succ[nxt]:
            emit(g.terminals.get(nxt, Terminal.DEAD_END).value)
        else:
            stack.append(iter(succ[nxt]))
            progressed.append(False)
            continue
        path.pop()
        uses[nxt] -= 1
    return sorted(out, key=lambda b: b.vertices)


def precedes_on_all_paths(
    g: StateTransitionGraph,
    starts: Iterable[int],
    first: Callable[[int], bool],
    second: Callable[[int], bool],
) -> tuple[bool, tuple[int, ...]]:
    """Whether along every path from ``starts`` the first ``second``-vertex
    does not come before the first ``first``-vertex.

    Equivalent to: no ``second``-vertex is reachable through vertices that
    all fail ``first``.  Returns a counterexample path on failure.
    """
    succ = g.successors()
    parent: dict[int, int | None] = {}
    queue: deque[int] = deque()
    for s in sorted(set(starts)):
        if not first(s):
            parent[s] = None
            queue.append(s)
    while queue:
        u = queue.popleft()
        if second(u):
            path = [u]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])  # type: ignore[arg-type]
            return False, tuple(reversed(path))
        for w in succ[u]:
            if w not in parent and not first(w):
                parent[w] = u
                queue.append(w)
    return True, ()


QUADRANTS = {(1, -1): "I", (1, 1): "II", (-1, 1): "III", (-1, -1): "IV"}


def quadrant(
    g: GeneralizedStg, cluster: int, stock: tuple[str, str], harvest: tuple[str, str]
) -> str | None:
    """Quadrant of a cluster: stock above/below its landmark crossed with
    harvest above/below its landmark.  ``None`` on a boundary.
    """
    (xv, xl), (hv, hl) = stock, harvest
    sx = sign_relative(g.value(cluster, xv), xl, g.model.space(xv))
    sh = sign_relative(g.value(cluster, hv), hl, g.model.space(hv))
    return QUADRANTS.get((int(sx), int(sh)))


def default_quadrant_axes(g: GeneralizedStg) -> tuple[tuple[str, str], tuple[str, str]] | None:
    """Stock/harvest axes when the graph has the fishery layout, else ``None``."""
    axes = (("x", "xmsy"), ("h", "MSY"))
    for var, lm in axes:
        if var not in g.relevant or lm not in g.model.space(var):
            return None
    return axes


def behaviors_avoiding(behaviors: Sequence[Behavior], members: set[int]) -> list[Behavior]:
    return [b for b in behaviors if not members.intersection(b.vertices)]


@dataclass(frozen=True)
class RegionTransition:
    source: int
    target: int
    regions: tuple[str, str]
    irreversible: bool


def region_transitions(
    g: GeneralizedStg, stock: tuple[str, str], harvest: tuple[str, str]
) -> list[RegionTransition]:
    """Moves between quadrants, possibly through boundary clusters.

    Irreversible when the source cluster cannot be reached again from the
    target cluster.
    """
    region = {c.id: quadrant(g, c.id, stock, harvest) for c in g.clusters}
    succ = g.successors()
    dg = g.digraph()
    out = []
    for a in sorted(region):
        if region[a] is None:
            continue
        seen = {a}
        queue = deque(succ[a])
        while queue:
            b = queue.popleft()
            if b in seen:
                continue
            seen.add(b)
            if region[b] is None:
                queue.extend(succ[b])
            elif region[b] != region[a]:
                back = nx.has_path(dg, b, a)
                out.append(RegionTransition(a, b, (region[a], region[b]), not back))
    return out
