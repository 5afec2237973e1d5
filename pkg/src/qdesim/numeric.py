"""Numeric abstraction oracle.

A sidecar file gives concrete function families for a model (for example a
logistic recruitment and a power-form harvest) with parameter ranges.  Each
sampled instance is integrated, its trajectory is abstracted back to
qualitative states, and the resulting sequence must be a path of the STG.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import sympy as sp
from scipy.integrate import solve_ivp
from scipy.optimize import root

from .dsl import QdeModel
from .qcore import ModelError, QDir, QMag, QualitativeState, QualitativeValue, TimeLabel
from .sim import StateTransitionGraph, candidate_transitions

log = logging.getLogger(__name__)

DEFAULT_REL_TOL = 1e-6
AMBIGUITY_FACTOR = 10.0
GUARD_REL = 1e-4  # grid samples this close to an event are not used
SETTLE_TOL = 1e-2  # relative speed below which a trajectory counts as settled


class TraceResolutionError(ValueError):
    """The trace skips qualitative events, so it cannot be abstracted safely."""


class AmbiguousSampleWarning(UserWarning):
    """A sample lies too close to a tolerance boundary to classify."""


@dataclass
class NumericTrace:
    times: np.ndarray
    values: dict[str, np.ndarray]
    derivatives: dict[str, np.ndarray] | None = None  # exact d/dt when the integrator knows it

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or len(self.times) == 0:
            raise ValueError("trace needs at least one sample")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        for name, arr in list(self.values.items()):
            self.values[name] = np.asarray(arr, dtype=float)
            if self.values[name].shape != self.times.shape:
                raise ValueError(f"samples of {name!r} do not match the timestamps")
        if self.derivatives is not None:
            for name, arr in list(self.derivatives.items()):
                self.derivatives[name] = np.asarray(arr, dtype=float)


# ---------------------------------------------------------------------------
# abstraction


def _finite(xs: Sequence[float]) -> list[float]:
    return [x for x in xs if math.isfinite(x)]


def _scale(samples: np.ndarray, landmarks: Sequence[float]) -> float:
    pts = list(samples[np.isfinite(samples)]) + _finite(landmarks)
    span = max(pts) - min(pts) if pts else 0.0
    return span if span > 0 else 1.0


def _magnitude(v: float, lms: Sequence[float], eps: float) -> tuple[QMag, bool]:
    for j, lm in enumerate(lms):
        if math.isfinite(lm) and abs(v - lm) <= eps:
            return QMag.at(j), False
    amb = any(math.isfinite(lm) and abs(v - lm) <= AMBIGUITY_FACTOR * eps for lm in lms)
    for j in range(len(lms) - 1):
        if lms[j] < v < lms[j + 1]:
            return QMag.between(j), amb
    raise TraceResolutionError(f"value {v!r} lies outside the quantity space")


def _direction(d: float, eps: float) -> tuple[QDir, bool]:
    if abs(d) <= eps:
        return QDir.STD, False
    return (QDir.INC if d > 0 else QDir.DEC), abs(d) <= AMBIGUITY_FACTOR * eps


def _interval_ok(values: Sequence[QualitativeValue]) -> bool:
    return all(v.dir == QDir.STD for v in values if v.mag.is_landmark)


def _is_event(prev, cur, nxt) -> bool:
    for a, b, c in zip(prev, cur, nxt):
        if b.dir != QDir.STD:
            continue
        if not b.mag.is_landmark and a.dir != QDir.STD and c.dir != QDir.STD:
            return True  # extremum inside an interval
        if b.mag.is_landmark and a.mag != b.mag and c.mag != b.mag:
            return True  # touches a landmark and leaves again
    return False


def _starts_moving(cur, nxt) -> bool:
    """Some variable rests at the first sample and moves right after."""
    return any(b.dir == QDir.STD and (c.dir != QDir.STD or c.mag != b.mag) for b, c in zip(cur, nxt))


def _implied_point(a: tuple[QualitativeValue, ...], b: tuple[QualitativeValue, ...], spaces) -> tuple:
    out = []
    for u, w in zip(a, b):
        if u == w:
            out.append(u)
        elif u.mag == w.mag:
            out.append(QualitativeValue(u.mag, QDir.STD))
        elif w.mag.is_landmark and abs(u.mag.region - w.mag.region) == 1:
            out.append(QualitativeValue(w.mag, QDir.STD))  # arrives and rests
        elif u.mag.is_landmark and abs(u.mag.region - w.mag.region) == 1:
            out.append(u)  # leaves a resting landmark
        elif abs(u.mag.region - w.mag.region) == 2 and u.dir == w.dir:
            out.append(QualitativeValue(QMag((u.mag.region + w.mag.region) // 2), u.dir))
        else:
            raise TraceResolutionError("consecutive samples differ by more than one event")
    return tuple(out)


def abstract_numeric_trace(
    t: NumericTrace,
    m: QdeModel,
    landmark_values: Mapping[str, Mapping[str, float]],
    eps_a: Mapping[str, float] | None = None,
    eps_d: Mapping[str, float] | None = None,
    rel_tol: float = DEFAULT_REL_TOL,
) -> list[QualitativeState]:
    """Qualitative states visited by a sampled trajectory, alternating labels."""
    lms: dict[str, list[float]] = {}
    for name, space in m.variables.items():
        if name not in t.values:
            raise ModelError(f"trace has no samples for {name!r}")
        try:
            vals = [float(landmark_values[name][lm]) for lm in space.landmarks]
        except KeyError as exc:
            raise ModelError(f"no numeric value for landmark {exc} of {name!r}") from None
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ModelError(f"landmark values of {name!r} are not increasing")
        lms[name] = vals

    duration = float(t.times[-1] - t.times[0]) or 1.0
    derivs = t.derivatives or {name: _centered(t.times, t.values[name]) for name in m.names}
    ea = {n: (eps_a or {}).get(n, rel_tol * _scale(t.values[n], lms[n])) for n in m.names}
    ed = {n: (eps_d or {}).get(n, rel_tol * _scale(t.values[n], lms[n]) / duration) for n in m.names}

    assignments: list[tuple[QualitativeValue, ...]] = []
    for k in range(len(t.times)):
        vals, amb = [], False
        for n in m.names:
            mag, a1 = _magnitude(float(t.values[n][k]), lms[n], ea[n])
            d, a2 = _direction(float(derivs[n][k]), ed[n])
            amb = amb or a1 or a2
            vals.append(QualitativeValue(mag, d))
        if amb:
            warnings.warn(f"sample at t={t.times[k]:.6g} is ambiguous; skipped", AmbiguousSampleWarning, 2)
            continue
        if not assignments or assignments[-1] != tuple(vals):
            assignments.append(tuple(vals))
    if not assignments:
        return []

    labels = []
    last = len(assignments) - 1
    for j, a in enumerate(assignments):
        if not _interval_ok(a):
            labels.append(TimeLabel.POINT)
        elif j == last and all(v.dir == QDir.STD for v in a):
            labels.append(TimeLabel.POINT)
        elif 0 < j < last and _is_event(assignments[j - 1], a, assignments[j + 1]):
            labels.append(TimeLabel.POINT)
        elif j == 0 < last and _starts_moving(a, assignments[1]):
            labels.append(TimeLabel.POINT)
        else:
            labels.append(TimeLabel.INTERVAL)

    out: list[QualitativeState] = []
    for a, lab in zip(assignments, labels):
        if out and out[-1].label is lab:
            if lab is TimeLabel.POINT:
                raise TraceResolutionError("two time points without an interval between them")
            out.append(QualitativeState(_implied_point(out[-1].values, a, m.spaces), TimeLabel.POINT))
        out.append(QualitativeState(a, lab))
    for s, u in zip(out, out[1:]):
        for space, v, w in zip(m.spaces, s.values, u.values):
            if w not in candidate_transitions(v, s.label, space):
                raise TraceResolutionError(
                    f"{space.format(v)} cannot be followed by {space.format(w)}; sample more densely"
                )
    return out


def _centered(times: np.ndarray, vals: np.ndarray) -> np.ndarray:
    if len(times) < 2:
        return np.zeros_like(vals)
    return np.gradient(vals, times)


# ---------------------------------------------------------------------------
# containment


@dataclass(frozen=True)
class Violation:
    kind: str  # "state" or "edge"
    position: int
    detail: str


def check_containment(g: StateTransitionGraph, seq: Sequence[QualitativeState]) -> list[Violation]:
    edges = set(g.edges)
    out: list[Violation] = []
    ids = []
    for k, s in enumerate(seq):
        i = g.find(s)
        ids.append(i)
        if i is None:
            vals = ", ".join(sp.format(v) for sp, v in zip(g.model.spaces, s.values))
            out.append(Violation("state", k, f"[{s.label.value}] {vals}"))
    for k, (a, b) in enumerate(zip(ids, ids[1:])):
        if a is not None and b is not None and (a, b) not in edges:
            out.append(Violation("edge", k, f"#{a} -> #{b}"))
    return out


# ---------------------------------------------------------------------------
# sidecars


def _expr(text: str | float | int, symbols: Mapping[str, sp.Symbol]) -> sp.Expr:
    if isinstance(text, (int, float)):
        return sp.Float(text)
    if text.strip() in ("inf", "+inf"):
        return sp.oo
    if text.strip() == "-inf":
        return -sp.oo
    return sp.sympify(text, locals=dict(symbols))


@dataclass
class Instance:
    params: dict[str, float]
    landmarks: dict[str, dict[str, float]]
    initial: dict[str, float]


@dataclass
class Sidecar:
    model: str
    params: dict[str, tuple[float, float]]
    states: tuple[str, ...]
    odes: dict[str, sp.Expr]
    initial: dict[str, tuple[sp.Expr, sp.Expr]]
    observables: dict[str, sp.Expr]
    landmarks: dict[str, dict[str, sp.Expr]]
    horizon: sp.Expr
    samples: int = 400
    symbols: dict[str, sp.Symbol] = field(default_factory=dict, repr=False)

    def check(self, m: QdeModel) -> None:
        missing = [n for n in m.names if n not in self.observables]
        if missing:
            raise ModelError(f"sidecar has no expression for {', '.join(missing)}")
        for name, space in m.variables.items():
            if set(self.landmarks.get(name, {})) != set(space.landmarks):
                raise ModelError(f"sidecar landmarks for {name!r} do not match the model")

    def sample(self, rng: np.random.Generator) -> Instance:
        params = {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in sorted(self.params.items())}
        subs = {self.symbols[k]: v for k, v in params.items()}
        lms = {v: {lm: float(e.subs(subs)) for lm, e in d.items()} for v, d in self.landmarks.items()}
        init = {}
        for s in self.states:
            lo, hi = (float(e.subs(subs)) for e in self.initial[s])
            init[s] = float(rng.uniform(lo, hi))
        return Instance(params, lms, init)

    def integrate(self, inst: Instance) -> NumericTrace:
        tol = SETTLE_TOL
        for _ in range(3):
            try:
                return _integrate(self, inst, tol)
            except _SettledTooEarly as exc:
                log.debug("rest point of %s lies past a landmark; settling later", exc)
                tol /= 100
        raise TraceResolutionError("trajectory settles too close to a landmark to resolve")


def load_sidecar(path: str | Path) -> Sidecar:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ModelError(f"sidecar not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ModelError(f"sidecar {path} is not valid JSON: {exc}") from None
    try:
        names = list(raw["parameters"]) + list(raw["state"])
        symbols = {n: sp.Symbol(n, real=True) for n in names}
        states = tuple(raw["state"])
        return Sidecar(
            model=raw["model"],
            params={k: (float(v[0]), float(v[1])) for k, v in raw["parameters"].items()},
            states=states,
            odes={s: _expr(raw["state"][s]["ode"], symbols) for s in states},
            initial={s: tuple(_expr(e, symbols) for e in raw["state"][s]["initial"]) for s in states},
            observables={k: _expr(v, symbols) for k, v in raw["observables"].items()},
            landmarks={v: {lm: _expr(e, symbols) for lm, e in d.items()} for v, d in raw["landmarks"].items()},
            horizon=_expr(raw["horizon"], symbols),
            samples=int(raw.get("samples", 400)),
            symbols=symbols,
        )
    except (KeyError, TypeError, ValueError, sp.SympifyError) as exc:
        raise ModelError(f"malformed sidecar {path}: {exc}") from None


class _SettledTooEarly(Exception):
    pass


def _integrate(sc: Sidecar, inst: Instance, settle_tol: float = SETTLE_TOL) -> NumericTrace:
    subs = {sc.symbols[k]: v for k, v in inst.params.items()}
    xs = [sc.symbols[s] for s in sc.states]
    rhs = [sc.odes[s].subs(subs) for s in sc.states]
    obs_names = list(sc.observables)
    obs = [sc.observables[n].subs(subs) for n in obs_names]
    dobs = [sum(sp.diff(o, x) * f for x, f in zip(xs, rhs)) for o in obs]
    f_rhs = sp.lambdify(xs, rhs, "numpy")
    f_obs = sp.lambdify(xs, obs, "numpy")
    f_dobs = sp.lambdify(xs, dobs, "numpy")
    horizon = float(sc.horizon.subs(subs))

    def fun(_t, y):
        return np.asarray(f_rhs(*y), dtype=float)

    events = []
    for k, n in enumerate(obs_names):
        for lm_val in inst.landmarks[n].values():
            if math.isfinite(lm_val):
                events.append(lambda _t, y, k=k, c=lm_val: float(f_obs(*y)[k]) - c)
        events.append(lambda _t, y, k=k: float(f_dobs(*y)[k]))

    scales = []
    for s in sc.states:
        fin = _finite(list(inst.landmarks[s].values()))
        scales.append((max(fin) - min(fin) if len(fin) > 1 else 1.0) / horizon)

    def settled(_t, y):
        return float(np.max(np.abs(fun(0.0, y)) / scales)) - settle_tol

    settled.terminal = True
    settled.direction = -1
    y0 = np.array([inst.initial[s] for s in sc.states])
    sol = solve_ivp(
        fun, (0.0, horizon), y0, method="RK45", rtol=1e-10, atol=1e-12,
        events=events + [settled], dense_output=True,
    )
    if sol.status < 0:
        raise TraceResolutionError(f"integration failed: {sol.message}")
    t_end = float(sol.t[-1])
    ev_times = sorted({float(tt) for arr in sol.t_events[:-1] for tt in arr if 0.0 < tt < t_end})
    guard = 1e-4 * max(t_end, 1e-12)
    grid = np.linspace(0.0, t_end, sc.samples)
    keep = [g for g in grid if all(abs(g - e) > guard for e in ev_times)]
    times = np.array(sorted(set(keep) | set(ev_times)))
    ys = sol.sol(times)
    values = {n: np.empty(len(times)) for n in obs_names}
    ders = {n: np.empty(len(times)) for n in obs_names}
    for j in range(len(times)):
        o, d = f_obs(*ys[:, j]), f_dobs(*ys[:, j])
        for k, n in enumerate(obs_names):
            values[n][j], ders[n][j] = float(o[k]), float(d[k])

    # grid samples close to an event are dropped; the exact event sample stands in
    is_event = np.isin(times, ev_times)
    margin = np.full(len(times), np.inf)  # relative distance to the nearest tolerance boundary
    span = max(t_end, 1e-12)
    for n in obs_names:
        lm = _finite(list(inst.landmarks[n].values()))
        sc_n = _scale(values[n], lm)
        for c in lm:
            margin = np.minimum(margin, np.abs(values[n] - c) / sc_n)
        margin = np.minimum(margin, np.abs(ders[n]) * span / sc_n)
    keep_mask = is_event | (margin > GUARD_REL)
    if not keep_mask.any():
        keep_mask[int(np.argmax(margin))] = True
    # the start gets no exemption: a trace may begin at its first clear sample
    # a run of dropped samples still contributes its clearest member
    kept = np.flatnonzero(keep_mask)
    for lo, hi in zip(kept, kept[1:]):
        if hi - lo > 1:
            j = lo + 1 + int(np.argmax(margin[lo + 1 : hi]))
            if margin[j] > 2 * AMBIGUITY_FACTOR * DEFAULT_REL_TOL:
                keep_mask[j] = True
    times = times[keep_mask]
    values = {n: v[keep_mask] for n, v in values.items()}
    ders = {n: v[keep_mask] for n, v in ders.items()}

    if sol.status == 1 and sol.t_events[-1].size:  # settled: append the exact rest point
        res = root(lambda y: fun(0.0, y), sol.y[:, -1], method="hybr", tol=1e-14)
        log.debug("rest point search from %s: %s", sol.y[:, -1], res.message)
        if not np.all(np.isfinite(res.x)) or np.max(np.abs(fun(0.0, res.x)) / scales) > 1e-9:
            raise TraceResolutionError("could not locate the equilibrium the trajectory settles at")
        o = f_obs(*res.x)
        for k, n in enumerate(obs_names):
            a, b = sorted((values[n][-1], float(o[k])))
            tiny = 1e-9 * _scale(values[n], _finite(list(inst.landmarks[n].values())))
            if any(a + tiny < c < b - tiny for c in inst.landmarks[n].values()):
                raise _SettledTooEarly(n)
        t_eq = t_end + max(t_end, 1.0) * 1e-6
        times = np.append(times, t_eq)
        for k, n in enumerate(obs_names):
            values[n] = np.append(values[n], float(o[k]))
            ders[n] = np.append(ders[n], 0.0)
    return NumericTrace(times, values, ders)


# ---------------------------------------------------------------------------
# validation driver


@dataclass
class ValidationReport:
    samples: int
    seed: int
    violations: list[tuple[int, Violation]] = field(default_factory=list)
    unresolved: list[tuple[int, str]] = field(default_factory=list)
    ambiguous_samples: int = 0
    visited_states: int = 0

    def as_dict(self) -> dict:
        return {
            "samples": self.samples,
            "seed": self.seed,
            "violations": [
                {"instance": i, "kind": v.kind, "position": v.position, "detail": v.detail}
                for i, v in self.violations
            ],
            "unresolved": [{"instance": i, "reason": r} for i, r in self.unresolved],
            "ambiguous_samples": self.ambiguous_samples,
            "visited_states": self.visited_states,
        }


def validate_against_stg(
    m: QdeModel, sc: Sidecar, g: StateTransitionGraph, n: int, seed: int
) -> ValidationReport:
    sc.check(m)
    rng = np.random.default_rng(seed)
    rep = ValidationReport(n, seed)
    seen: set = set()
    for i in range(n):
        inst = sc.sample(rng)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", AmbiguousSampleWarning)
            try:
                trace = sc.integrate(inst)
                seq = abstract_numeric_trace(trace, m, inst.landmarks)
            except TraceResolutionError as exc:
                rep.unresolved.append((i, str(exc)))
                continue
        rep.ambiguous_samples += sum(1 for w in caught if issubclass(w.category, AmbiguousSampleWarning))
        seen.update(s for s in seq)
        for v in check_containment(g, seq):
            rep.violations.append((i, v))
    rep.visited_states = len(seen)
    return rep
