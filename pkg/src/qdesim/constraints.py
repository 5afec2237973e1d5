"""Local consistency checks for each constraint kind, and propagation.

Every constraint is compiled once per model into a predicate over the
qualitative values of its arguments.  :func:`propagate` narrows candidate
sets with generalized arc consistency and then enumerates the survivors
exhaustively, so it returns *every* total state that extends the input.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

from .dsl import ADD, DDT, EXCLUDE, MONO, UMINUS, ZERO_LANDMARK, ConstraintSpec, QdeModel
from .qcore import (
    ModelError,
    QDir,
    QualitativeState,
    QualitativeValue,
    Sign,
    TimeLabel,
    aggregate,
    sign_add,
    sign_of,
    sort_key,
)


@dataclass(frozen=True)
class CheckResult:
    ok: bool
    constraint: int | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


CONSISTENT = CheckResult(True)


@dataclass(frozen=True)
class Semantics:
    """Switches that change which states count as consistent.

    ``open_bounds``: outer landmarks other than ``0`` act as unreachable
    limits, so no value may sit on them.
    ``exclusions``: honour ``cornot`` constraints.
    """

    open_bounds: bool = True
    exclusions: bool = True


DEFAULT_SEMANTICS = Semantics()


def _rel(v: QualitativeValue, lm: int) -> Sign:
    return sign_of(v.mag.region - 2 * lm)


def _names(vals: Sequence[QualitativeValue]) -> str:
    return ", ".join(f"{v.mag.region}/{v.dir.word}" for v in vals)


# ---------------------------------------------------------------------------
# per-kind rules; each returns None when satisfied, otherwise a reason


def _mono_rule(sig: tuple[Sign, ...], cvs: tuple[tuple[int, ...], ...]):
    def rule(vals: Sequence[QualitativeValue]) -> str | None:
        args, res = vals[:-1], vals[-1]
        req = aggregate([Sign(s * a.dir) for s, a in zip(sig, args)])
        if req is not Sign.ANY and res.dir.sign != req:
            return f"direction rule requires result {QDir(req).word}, found {res.dir.word}"
        for tup in cvs:
            req = aggregate([Sign(s * _rel(a, p)) for s, a, p in zip(sig, args, tup)])
            if req is not Sign.ANY and _rel(res, tup[-1]) != req:
                return f"corresponding values {tup} require result sign {req.symbol}"
        return None

    return rule


def _add_rule(cvs: tuple[tuple[int, ...], ...]):
    def rule(vals: Sequence[QualitativeValue]) -> str | None:
        a, b, c = vals
        req = sign_add(a.dir.sign, b.dir.sign)
        if req is not Sign.ANY and c.dir.sign != req:
            return f"direction of sum must be {QDir(req).word}, found {c.dir.word}"
        for p, q, r in cvs:
            req = sign_add(_rel(a, p), _rel(b, q))
            if req is not Sign.ANY and _rel(c, r) != req:
                return f"corresponding values ({p} {q} {r}) require sum sign {req.symbol}"
        return None

    return rule


def _ddt_rule(zero: int):
    def rule(vals: Sequence[QualitativeValue]) -> str | None:
        x, dx = vals
        if _rel(dx, zero) != x.dir.sign:
            return f"derivative sign {_rel(dx, zero).symbol} disagrees with direction {x.dir.word}"
        return None

    return rule


def _ushape_rule(crit: tuple[int, int], extra: tuple[tuple[int, int], ...]):
    xs, ys = crit

    def rule(vals: Sequence[QualitativeValue]) -> str | None:
        x, y = vals
        side = _rel(x, xs)
        if side == Sign.NEG:
            if y.dir != x.dir:
                return "rising branch: result must move with the argument"
            if _rel(y, ys) != Sign.NEG:
                return "rising branch: result must lie below its peak"
        elif side == Sign.ZERO:
            if y.dir != QDir.STD or _rel(y, ys) != Sign.ZERO:
                return "at the critical point the result is at its peak and steady"
        else:
            if y.dir != QDir(-x.dir):
                return "falling branch: result must move against the argument"
            if _rel(y, ys) != Sign.NEG:
                return "falling branch: result must lie below its peak"
        for p, q in extra:
            if p < xs and side != Sign.POS and _rel(y, q) != _rel(x, p):
                return f"corresponding values ({p} {q}) on the rising branch"
            if p > xs and side != Sign.NEG and _rel(y, q) != Sign(-_rel(x, p)):
                return f"corresponding values ({p} {q}) on the falling branch"
        return None

    return rule


def _exclude_rule(tuples: tuple[tuple[int, ...], ...]):
    def rule(vals: Sequence[QualitativeValue]) -> str | None:
        for tup in tuples:
            if all(v.mag.region == 2 * lm for v, lm in zip(vals, tup)):
                return f"forbidden combination {tup}"
        return None

    return rule


@dataclass(eq=False)
class Compiled:
    """A constraint bound to variable indices, with a memoised predicate."""

    number: int
    spec: ConstraintSpec
    scope: tuple[int, ...]
    rule: Callable[[Sequence[QualitativeValue]], str | None]
    _memo: dict = field(default_factory=dict, repr=False)

    def violation(self, vals: tuple[QualitativeValue, ...]) -> str | None:
        try:
            return self._memo[vals]
        except KeyError:
            out = self._memo[vals] = self.rule(vals)
            return out

    def ok(self, vals: tuple[QualitativeValue, ...]) -> bool:
        return self.violation(vals) is None

    def check(self, state: QualitativeState) -> CheckResult:
        why = self.violation(tuple(state.values[i] for i in self.scope))
        if why is None:
            return CONSISTENT
        src = self.spec.source or self.spec.text()
        return CheckResult(False, self.number, f"{src}: {why}")


def compile_constraint(model: QdeModel, number: int, spec: ConstraintSpec) -> Compiled:
    scope = tuple(model.index(a) for a in spec.args)
    spaces = [model.space(a) for a in spec.args]
    cvs = tuple(tuple(s.index(lm) for s, lm in zip(spaces, tup)) for tup in spec.cv)
    if spec.kind == MONO:
        rule = _mono_rule(tuple(spec.signature), cvs)
    elif spec.kind == ADD:
        rule = _add_rule(cvs)
    elif spec.kind == DDT:
        if ZERO_LANDMARK not in spaces[1]:
            raise ModelError(f"derivative variable {spec.args[1]!r} has no landmark '0'")
        rule = _ddt_rule(spaces[1].index(ZERO_LANDMARK))
    elif spec.kind == UMINUS:
        if not cvs:
            raise ModelError("U- constraint without critical point")
        crit = cvs[0]
        if crit[0] in (0, len(spaces[0].landmarks) - 1):
            raise ModelError(f"critical landmark of {spec.text()} is not interior")
        rule = _ushape_rule(crit, tuple(c for c in cvs[1:] if c[0] != crit[0]))
    elif spec.kind == EXCLUDE:
        rule = _exclude_rule(cvs)
    else:
        raise ModelError(f"unknown constraint kind {spec.kind!r}")
    return Compiled(number, spec, scope, rule)


@lru_cache(maxsize=64)
def _compiled_all(model: QdeModel) -> tuple[Compiled, ...]:
    return tuple(compile_constraint(model, i, c) for i, c in enumerate(model.constraints))


def compiled(model: QdeModel, sem: Semantics = DEFAULT_SEMANTICS) -> tuple[Compiled, ...]:
    cons = _compiled_all(model)
    if sem.exclusions:
        return cons
    return tuple(c for c in cons if c.spec.kind != EXCLUDE)


def _check_kind(kind: str, model: QdeModel, spec: ConstraintSpec, state: QualitativeState) -> CheckResult:
    if spec.kind != kind:
        raise ModelError(f"expected a {kind} constraint, got {spec.kind}")
    for c in _compiled_all(model):
        if c.spec == spec:
            return c.check(state)
    return compile_constraint(model, -1, spec).check(state)


def check_mono(model: QdeModel, spec: ConstraintSpec, state: QualitativeState) -> CheckResult:
    return _check_kind(MONO, model, spec, state)


def check_add(model: QdeModel, spec: ConstraintSpec, state: QualitativeState) -> CheckResult:
    return _check_kind(ADD, model, spec, state)


def check_ddt(model: QdeModel, spec: ConstraintSpec, state: QualitativeState) -> CheckResult:
    return _check_kind(DDT, model, spec, state)


def check_ushape(model: QdeModel, spec: ConstraintSpec, state: QualitativeState) -> CheckResult:
    return _check_kind(UMINUS, model, spec, state)


def check_exclude(model: QdeModel, spec: ConstraintSpec, state: QualitativeState) -> CheckResult:
    return _check_kind(EXCLUDE, model, spec, state)


def value_admissible(
    model: QdeModel, var: int, v: QualitativeValue, label: TimeLabel, sem: Semantics = DEFAULT_SEMANTICS
) -> bool:
    """Unary filter on a single value.

    The magnitude must lie in the space, a value resting on a landmark over an
    interval must be steady, and nothing may sit on a bound while heading out
    of the space.  With open bounds, outer landmarks other than ``0`` are
    never attained.
    """
    space = model.spaces[var]
    if not space.valid(v.mag):
        return False
    if sem.open_bounds and space.is_bound(v.mag) and space.landmarks[v.mag.landmark] != ZERO_LANDMARK:
        return False
    if label is TimeLabel.INTERVAL and v.mag.is_landmark and v.dir != QDir.STD:
        return False
    if v.mag.region == 0 and v.dir == QDir.DEC:
        return False
    return not (v.mag.region == space.top and v.dir == QDir.INC)


def check_state(model: QdeModel, state: QualitativeState, sem: Semantics = DEFAULT_SEMANTICS) -> CheckResult:
    if len(state.values) != len(model.variables):
        return CheckResult(False, None, "assignment is not total over the model variables")
    for i, (name, v) in enumerate(zip(model.names, state.values)):
        if not model.spaces[i].valid(v.mag):
            return CheckResult(False, None, f"{name}: magnitude outside its quantity space")
        if not value_admissible(model, i, v, state.label, sem):
            return CheckResult(False, None, f"{name}: value cannot persist or leave the space this way")
    for c in compiled(model, sem):
        res = c.check(state)
        if not res:
            return res
    return CONSISTENT


# ---------------------------------------------------------------------------
# propagation


@dataclass(frozen=True)
class PartialState:
    """Candidate values per variable; ``None`` means the whole quantity space."""

    label: TimeLabel
    candidates: Mapping[str, frozenset[QualitativeValue] | None]

    @classmethod
    def from_values(cls, label: TimeLabel, values: Mapping[str, QualitativeValue]) -> "PartialState":
        return cls(label, {k: frozenset([v]) for k, v in values.items()})

    @classmethod
    def from_init(cls, model: QdeModel, label: TimeLabel = TimeLabel.POINT) -> "PartialState":
        cands = {}
        for var, spec in model.init.items():
            dirs = [spec.dir] if spec.dir is not None else list(QDir)
            cands[var] = frozenset(QualitativeValue(spec.mag, d) for d in dirs)
        return cls(label, cands)


def _domains(model: QdeModel, p: PartialState, sem: Semantics) -> list[list[QualitativeValue]]:
    doms = []
    for i, (name, space) in enumerate(model.variables.items()):
        cand = p.candidates.get(name)
        pool = space.values() if cand is None else sorted(cand, key=lambda v: (v.mag.region, v.dir))
        doms.append([v for v in pool if value_admissible(model, i, v, p.label, sem)])
    for name in p.candidates:
        model.index(name)
    return doms


def _arc_consistency(cons: Sequence[Compiled], doms: list[list[QualitativeValue]]) -> bool:
    watchers: dict[int, list[Compiled]] = {}
    for c in cons:
        for i in c.scope:
            watchers.setdefault(i, []).append(c)
    queue = list(cons)
    queued = set(id(c) for c in queue)
    while queue:
        c = queue.pop(0)
        queued.discard(id(c))
        support = [set() for _ in c.scope]
        for vals in itertools.product(*(doms[i] for i in c.scope)):
            if c.ok(vals):
                for pos, v in enumerate(vals):
                    support[pos].add(v)
        for pos, i in enumerate(c.scope):
            if len(support[pos]) == len(doms[i]):
                continue
            doms[i] = [v for v in doms[i] if v in support[pos]]
            if not doms[i]:
                return False
            for other in watchers[i]:
                if other is not c and id(other) not in queued:
                    queue.append(other)
                    queued.add(id(other))
    return True


def _search(cons: Sequence[Compiled], doms: list[list[QualitativeValue]]) -> Iterable[tuple[QualitativeValue, ...]]:
    n = len(doms)
    order = sorted(range(n), key=lambda i: (len(doms[i]), i))  # first-fail, ties by declaration
    depth_of = {var: d for d, var in enumerate(order)}
    ready: list[list[Compiled]] = [[] for _ in range(n)]
    for c in cons:
        ready[max(depth_of[i] for i in c.scope)].append(c)
    assign: list[QualitativeValue | None] = [None] * n

    def rec(d: int):
        if d == n:
            yield tuple(assign)  # type: ignore[arg-type]
            return
        var = order[d]
        for v in doms[var]:
            assign[var] = v
            if all(c.ok(tuple(assign[i] for i in c.scope)) for c in ready[d]):
                yield from rec(d + 1)
        assign[var] = None

    yield from rec(0)


def propagate(model: QdeModel, p: PartialState, sem: Semantics = DEFAULT_SEMANTICS) -> list[QualitativeState]:
    """All consistent total states extending ``p``, canonically ordered."""
    cons = compiled(model, sem)
    doms = _domains(model, p, sem)
    if not all(doms) or not _arc_consistency(cons, doms):
        return []
    states = {QualitativeState(vals, p.label) for vals in _search(cons, doms)}
    return sorted(states, key=sort_key)


def enumerate_states(
    model: QdeModel, label: TimeLabel, sem: Semantics = DEFAULT_SEMANTICS
) -> list[QualitativeState]:
    """Every consistent state with the given label (full envisionment seed)."""
    return propagate(model, PartialState(label, {}), sem)
