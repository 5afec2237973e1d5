"""The shipped fishery models, their numeric sidecars and a structural self-test."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

from ..analysis import check_unavoidable, cluster_gstg, find_equilibria, mark_overcapitalization
from ..constraints import PartialState, propagate
from ..dsl import QdeModel, load_model, validate_model
from ..numeric import Sidecar, load_sidecar
from ..qcore import QDir, QualitativeState, TimeLabel
from ..sim import SimConfig, build_stg, generate_successors

HERE = Path(__file__).resolve().parent
NAMES = ("naive", "fishery")

# (var, region text, direction) patterns of the two successors of the worked example
NAIVE_CASES = (
    {"x": ("(0,xmsy)", "dec"), "h": ("(MSY,hmax)", "dec"), "R": ("(0,Rmsy)", "dec")},
    {"x": ("(xmsy,Q)", "dec"), "h": ("(0,MSY)", "dec"), "R": ("(0,Rmsy)", "inc")},
)


def path(name: str) -> Path:
    if name not in NAMES:
        raise KeyError(f"no fixture named {name!r}")
    return HERE / f"{name}.qde"


def sidecar_path(name: str) -> Path:
    return path(name).with_suffix(".sidecar.json")


def load(name: str) -> QdeModel:
    return load_model(path(name))


def sidecar(name: str) -> Sidecar:
    return load_sidecar(sidecar_path(name))


def worked_example_state(m: QdeModel) -> QualitativeState:
    """The naive model's initial assignment as an interval state."""
    states = propagate(m, PartialState.from_init(m, TimeLabel.INTERVAL))
    if len(states) != 1:
        raise AssertionError(f"initial assignment is not unique ({len(states)} states)")
    return states[0]


def matches(m: QdeModel, s: QualitativeState, pattern: dict) -> bool:
    for var, (region, word) in pattern.items():
        sp = m.space(var)
        v = s.values[m.index(var)]
        if v.mag != sp.parse_mag(region) or v.dir != QDir.parse(word):
            return False
    return True


def two_step_cases(m: QdeModel, s: QualitativeState, cfg: SimConfig) -> list[int | None]:
    """For each successor of ``s``, the index of the case its interval follow-up matches."""
    out = []
    for p in generate_successors(m, s, cfg):
        hit = None
        for nxt in generate_successors(m, p, cfg):
            for k, pat in enumerate(NAIVE_CASES):
                if matches(m, nxt, pat):
                    hit = k
        out.append(hit)
    return out


@dataclass
class SelfTest:
    checks: list[tuple[str, bool, str]] = field(default_factory=list)

    def add(self, name: str, ok: bool, detail: str = "") -> None:
        self.checks.append((name, bool(ok), detail))

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def lines(self) -> list[str]:
        return [f"{'PASS' if ok else 'FAIL'} {name}{': ' + d if d else ''}" for name, ok, d in self.checks]


def fixture_selftest() -> SelfTest:
    t = SelfTest()
    models = {}
    for name in NAMES:
        m = load(name)
        models[name] = m
        diags = validate_model(m)
        t.add(f"{name} validates", not diags, "; ".join(map(str, diags)))
        sidecar(name).check(m)

    naive = models["naive"]
    s0 = worked_example_state(naive)
    cases = two_step_cases(naive, s0, SimConfig())
    t.add("naive worked example has two successors matching both cases", sorted(cases) == [0, 1], str(cases))
    g = build_stg(naive)
    gs = cluster_gstg(g, naive.relevant)
    t.add("naive has three equilibrium clusters", len(find_equilibria(gs)) == 3, str(find_equilibria(gs)))
    ih, ix = naive.index("h"), naive.index("x")
    msy = naive.space("h").index("MSY")
    bad = [
        i
        for i, s in enumerate(g.vertices)
        if s.values[ih].mag.region > 2 * msy and not (s.values[ix].dir == s.values[ih].dir == QDir.DEC)
    ]
    t.add("naive: h above MSY implies x and h decreasing", not bad, str(bad[:5]))

    fish = models["fishery"]
    g = build_stg(fish)
    ix = fish.index("x")
    catastrophic = [i for i, s in enumerate(g.vertices) if s.values[ix].mag.region == 0 and s.is_equilibrium]
    t.add("fishery has an x=0 equilibrium", bool(catastrophic), str(catastrophic))
    gs = cluster_gstg(g, fish.relevant)
    eq_x0 = [c for c in find_equilibria(gs) if gs.value(c, "x").mag.region == 0]
    t.add("fishery has exactly one x=0 equilibrium cluster", len(eq_x0) == 1, str(eq_x0))
    oc = mark_overcapitalization(gs, "h", "k")
    t.add("fishery over-capitalization set is nonempty", bool(oc), f"{len(oc)} clusters")
    start = gs.cluster_of[g.initials[0]]
    res = check_unavoidable(gs, start, oc, find_equilibria(gs))
    t.add("fishery over-capitalization is unavoidable", res.holds, f"witness {list(res.witness)}")
    return t


def main() -> int:
    t = fixture_selftest()
    print("\n".join(t.lines()))
    return 0 if t.passed else 1


if __name__ == "__main__":
    sys.exit(main())
