"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest -s tests/test_acceptance.py`` to see the lines, or execute
this file directly.
"""

import os
import random
import time
from pathlib import Path

import pytest

from oracles import brute_force_states, brute_propagate, encode, random_partial
from qdesim import fixtures
from qdesim.analysis import cluster_gstg, find_equilibria
from qdesim.cli import main as cli
from qdesim.constraints import propagate
from qdesim.dsl import ParseError, parse_model, serialize_model
from qdesim.numeric import validate_against_stg
from qdesim.pipeline import (
    CLUSTER_TARGET,
    CLUSTER_WINDOW,
    STATE_TARGET,
    STATE_WINDOW,
    DirCondition,
    analyze,
    calibration_sweep,
)
from qdesim.qcore import ModelError, QDir, TimeLabel
from qdesim.sim import SimConfig, build_stg, generate_successors

# pinned tolerances
LIMIT_1 = 1.0  # seconds
LIMIT_2 = 1.0
LIMIT_3 = 30.0
LIMIT_4 = 60.0
LIMIT_6 = 60.0
SAMPLES_6 = 100
SEED_6 = 0
PARTIALS_7 = 20
SEED_7 = 7
FUZZ_9 = 100_000
SEED_9 = 9


def verdict(n, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


def test_criterion_1_worked_example():
    naive = fixtures.load("naive")
    t0 = time.perf_counter()
    s0 = fixtures.worked_example_state(naive)
    on = generate_successors(naive, s0)
    cases = fixtures.two_step_cases(naive, s0, SimConfig())
    off = generate_successors(naive, s0, SimConfig(exclude_marginal=False))
    dt = time.perf_counter() - t0
    ok = len(on) == 2 and sorted(cases) == [0, 1] and len(off) == 3 and dt < LIMIT_1
    verdict(1, ok, f"{len(on)} successors with the filter (cases {cases}), {len(off)} without, {dt:.3f}s < {LIMIT_1}s")


def test_criterion_2_naive_structure():
    naive = fixtures.load("naive")
    t0 = time.perf_counter()
    g = build_stg(naive)
    gs = cluster_gstg(g, naive.relevant)
    eq = find_equilibria(gs)
    sx, sh = naive.space("x"), naive.space("h")
    sigs = sorted((sx.mag_name(gs.value(c, "x").mag), sh.mag_name(gs.value(c, "h").mag)) for c in eq)
    want_x = {"0", "(0,xmsy)", "(xmsy,Q)"}
    shape_ok = len(eq) == 3 and {x for x, _ in sigs} == want_x and ("0", "0") in sigs
    ih, ix = naive.index("h"), naive.index("x")
    msy = sh.index("MSY")
    above = [s for s in g.vertices if s.values[ih].mag.region > 2 * msy]
    prop = all(s.values[ix].dir == QDir.DEC and s.values[ih].dir == QDir.DEC for s in above)
    dt = time.perf_counter() - t0
    ok = shape_ok and prop and bool(above) and dt < LIMIT_2
    verdict(2, ok, f"equilibrium clusters {sigs}; h>MSY property on {len(above)}/{len(above)} vertices: {prop}; {dt:.3f}s < {LIMIT_2}s")


def test_criterion_3_calibration():
    fish = fixtures.load("fishery")
    t0 = time.perf_counter()
    cal = calibration_sweep(fish, fish.relevant, SimConfig())
    dt = time.perf_counter() - t0
    d = cal["rows"][0]
    lo, hi = STATE_WINDOW
    clo, chi = CLUSTER_WINDOW
    print(cal["account"])
    ok = lo <= d["states"] <= hi and clo <= d["clusters"] <= chi and bool(cal["account"]) and dt < LIMIT_3
    verdict(
        3,
        ok,
        f"{d['states']} states (target {STATE_TARGET}, window {lo}-{hi}), {d['clusters']} clusters "
        f"(target {CLUSTER_TARGET}, window {clo}-{chi}), {dt:.1f}s < {LIMIT_3}s",
    )


def test_criterion_4_unavoidability():
    fish = fixtures.load("fishery")
    t0 = time.perf_counter()
    g = build_stg(fish)
    gs = cluster_gstg(g, fish.relevant)
    rep = analyze(
        gs,
        overcap=("h", "k"),
        unavoidable="init,overcap,equilibria",
        precedes=(DirCondition.parse("h:dec"), DirCondition.parse("k:dec")),
    )
    dt = time.perf_counter() - t0
    u, p = rep["unavoidability"], rep["precedence"]
    witness = [w["id"] for v in u["verdicts"] for w in v["witness"]]
    ok = u["holds"] and p["holds"] and dt < LIMIT_4
    verdict(
        4,
        ok,
        f"unavoidable={u['holds']} (gate {len(u['gate'])} clusters, witness {witness}); "
        f"h:dec precedes k:dec={p['holds']}; {dt:.1f}s < {LIMIT_4}s",
    )


def test_criterion_5_catastrophic_equilibrium():
    fish = fixtures.load("fishery")
    gs = cluster_gstg(build_stg(fish), fish.relevant)
    x0 = [c for c in find_equilibria(gs) if gs.value(c, "x").mag.region == 0]
    sigs = [gs.format_signature(c) for c in x0]
    verdict(5, len(x0) == 1, f"{len(x0)} equilibrium clusters with x=0: {sigs}")


def test_criterion_6_numeric_coverage():
    naive = fixtures.load("naive")
    sc = fixtures.sidecar("naive")
    t0 = time.perf_counter()
    g = build_stg(naive, SimConfig(full_envisionment=True))
    rep = validate_against_stg(naive, sc, g, SAMPLES_6, SEED_6)
    dt = time.perf_counter() - t0
    ok = not rep.violations and dt < LIMIT_6
    verdict(
        6,
        ok,
        f"{SAMPLES_6} instances (seed {SEED_6}): {len(rep.violations)} violations, "
        f"{len(rep.unresolved)} unresolved, {rep.visited_states} states visited, {dt:.1f}s < {LIMIT_6}s",
    )


def test_criterion_7_propagation_completeness():
    naive = fixtures.load("naive")
    universe = {lab: set(brute_force_states(naive, lab.value)) for lab in TimeLabel}
    rng = random.Random(SEED_7)
    bad = 0
    for _ in range(PARTIALS_7):
        label = rng.choice(list(TimeLabel))
        p = random_partial(rng, naive, label)
        got = {encode(s)[0] for s in propagate(naive, p)}
        bad += got != brute_propagate(naive, universe[label], p)
    verdict(7, bad == 0, f"{PARTIALS_7 - bad}/{PARTIALS_7} seeded partial states agree with brute force")


def _pipeline(work: Path, name: str) -> dict[str, bytes]:
    model = work / f"{name}.qde"
    stg, gstg = work / f"{name}.stg.json", work / f"{name}.gstg.json"
    codes = [
        cli(["simulate", str(model)]),
        cli(["cluster", str(stg)]),
        cli(["analyze", str(gstg), "--irreversible", "--branchings", "--out", str(work / f"{name}.report.json")]),
        cli(["export", str(gstg), "--dot", "--out", str(work / f"{name}.dot")]),
    ]
    assert codes == [0, 0, 0, 0], codes
    return {p.name: p.read_bytes() for p in sorted(work.iterdir()) if p.suffix != ".qde"}


def test_criterion_8_determinism(tmp_path, capsys):
    same, total = 0, 0
    for name in fixtures.NAMES:
        (tmp_path / f"{name}.qde").write_text(fixtures.path(name).read_text())
        first = _pipeline(tmp_path, name)
        second = _pipeline(tmp_path, name)
        total += len(first)
        same += sum(first[k] == second.get(k) for k in first)
    capsys.readouterr()
    verdict(8, same == total and total > 0, f"{same}/{total} artifacts byte-identical across two runs")


def _mutate(rng, text):
    chars = list(text)
    for _ in range(rng.randint(1, 4)):
        op = rng.random()
        i = rng.randrange(len(chars) + 1)
        if op < 0.4 and chars:
            del chars[min(i, len(chars) - 1)]
        elif op < 0.8:
            chars.insert(i, rng.choice("()  ;\nMx+-0aéd/\"\\"))
        else:
            j = rng.randrange(len(chars) + 1)
            chars[i:j] = chars[i:j][::-1]
    return "".join(chars)


def test_criterion_9_parser_robustness():
    round_trip = all(
        parse_model(serialize_model(fixtures.load(n))) == fixtures.load(n) for n in fixtures.NAMES
    )
    rng = random.Random(SEED_9)
    sources = [fixtures.path(n).read_text() for n in fixtures.NAMES]
    crashes, unpositioned, errors = [], 0, 0
    for k in range(FUZZ_9):
        if k % 10 == 9:
            data = bytes(rng.randrange(256) for _ in range(rng.randrange(64)))
        else:
            data = _mutate(rng, rng.choice(sources))
        try:
            parse_model(data)
        except ParseError as exc:
            errors += 1
            unpositioned += exc.line < 1 or exc.col < 1
        except ModelError:
            unpositioned += 1
        except Exception as exc:  # noqa: BLE001
            crashes.append(f"{type(exc).__name__}: {exc}")
    ok = round_trip and not crashes and unpositioned == 0
    verdict(
        9,
        ok,
        f"round trip {round_trip}; {FUZZ_9} seeded inputs, {errors} positioned errors, "
        f"{unpositioned} unpositioned, {len(crashes)} crashes",
    )


if __name__ == "__main__":
    raise SystemExit(pytest.main([os.path.abspath(__file__), "-s", "-q", "-p", "no:cacheprovider"]))
