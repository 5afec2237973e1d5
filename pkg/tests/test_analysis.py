import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import count_paths, irreversible_by_reachability, reach
from qdesim import fixtures
from qdesim.analysis import (
    Cluster,
    GeneralizedStg,
    behaviors_avoiding,
    check_unavoidable,
    cluster_gstg,
    default_quadrant_axes,
    extract_behaviors,
    find_critical_branchings,
    find_equilibria,
    find_irreversible,
    mark_overcapitalization,
    precedes_on_all_paths,
    quadrant,
    region_transitions,
)
from qdesim.qcore import ModelError, QDir
from qdesim.sim import Terminal


def toy(n, edges):
    """A bare quotient graph over ``n`` clusters for purely structural checks."""
    edges = sorted({(a, b) for a, b in edges if a != b})
    return GeneralizedStg(None, ("x",), [Cluster(i, (), ()) for i in range(n)], edges, set(), [])


# -- clustering


def _grouping(g, relevant):
    idx = [g.model.index(v) for v in relevant]
    groups = {}
    for i, s in enumerate(g.vertices):
        groups.setdefault(tuple(s.values[j] for j in idx), set()).add(i)
    return groups


@pytest.mark.parametrize("name", fixtures.NAMES)
def test_clusters_partition_the_stg(name, naive_stg, naive_gstg, fishery_stg, fishery_gstg):
    g, gs = (naive_stg, naive_gstg) if name == "naive" else (fishery_stg, fishery_gstg)
    want = _grouping(g, gs.relevant)
    got = {c.signature: set(c.members) for c in gs.clusters}
    assert got == want
    for c in gs.clusters:
        assert all(gs.cluster_of[i] == c.id for i in c.members)


@pytest.mark.parametrize("name", fixtures.NAMES)
def test_quotient_edges_are_exactly_the_projected_edges(name, naive_stg, naive_gstg, fishery_stg, fishery_gstg):
    g, gs = (naive_stg, naive_gstg) if name == "naive" else (fishery_stg, fishery_gstg)
    proj = {(gs.cluster_of[a], gs.cluster_of[b]) for a, b in g.edges}
    assert set(gs.edges) == {e for e in proj if e[0] != e[1]}
    assert gs.self_loops == {a for a, b in proj if a == b}
    assert len(gs.edges) == len(set(gs.edges))


def test_all_variables_relevant_counts_distinct_assignments(fishery_stg, fishery):
    gs = cluster_gstg(fishery_stg, fishery.names)
    distinct = {s.values for s in fishery_stg.vertices}
    assert len(gs.clusters) == len(distinct) <= len(fishery_stg.vertices)


def test_single_relevant_variable(fishery_stg):
    gs = cluster_gstg(fishery_stg, ["x"])
    assert len(gs.clusters) == len({s.values[0] for s in fishery_stg.vertices})


def test_cluster_rejects_bad_relevant_sets(naive_stg):
    with pytest.raises(ModelError):
        cluster_gstg(naive_stg, [])
    with pytest.raises(ModelError):
        cluster_gstg(naive_stg, ["x", "x"])
    with pytest.raises(ModelError):
        cluster_gstg(naive_stg, ["nope"])


def test_cluster_numbering_starts_at_initials(fishery_stg, fishery_gstg):
    starts = {fishery_gstg.cluster_of[i] for i in fishery_stg.initials}
    assert starts == set(range(len(starts)))


def test_quotient_is_sound_for_reachability(naive_stg, naive_gstg):
    """Every STG path projects onto a GSTG path."""
    r_stg = reach(len(naive_stg.vertices), naive_stg.edges)
    r_g = reach(len(naive_gstg.clusters), naive_gstg.edges)
    co = naive_gstg.cluster_of
    for a, targets in r_stg.items():
        for b in targets:
            assert co[b] in r_g[co[a]]


# -- equilibria and irreversibility


def test_naive_equilibria(naive_gstg):
    eq = find_equilibria(naive_gstg)
    assert len(eq) == 3
    for c in eq:
        assert all(v.dir == QDir.STD for v in naive_gstg.clusters[c].signature)


def test_stg_equilibria_are_terminals(naive_stg):
    assert find_equilibria(naive_stg) == sorted(
        i for i, t in naive_stg.terminals.items() if t is Terminal.EQUILIBRIUM
    )


def test_irreversible_examples():
    assert find_irreversible(toy(2, [(0, 1)])) == [(0, 1)]
    assert find_irreversible(toy(2, [(0, 1), (1, 0)])) == []


graphs = st.integers(1, 50).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=120))
)


@settings(max_examples=200)
@given(graphs)
def test_irreversible_matches_reachability(gr):
    n, edges = gr
    g = toy(n, edges)
    assert sorted(find_irreversible(g)) == irreversible_by_reachability(n, g.edges)


@settings(max_examples=100)
@given(graphs)
def test_critical_branchings_definition(gr):
    n, edges = gr
    g = toy(n, edges)
    irr = {a for a, _ in irreversible_by_reachability(n, g.edges)}
    outdeg = {i: sum(1 for a, _ in g.edges if a == i) for i in range(n)}
    assert find_critical_branchings(g) == sorted(i for i in range(n) if outdeg[i] >= 2 and i in irr)


def test_chain_and_reversible_star_have_no_critical_branchings():
    assert find_critical_branchings(toy(4, [(0, 1), (1, 2), (2, 3)])) == []
    star = [(0, k) for k in (1, 2, 3)] + [(k, 0) for k in (1, 2, 3)]
    assert find_critical_branchings(toy(4, star)) == []
    assert find_critical_branchings(toy(3, [(0, 1), (0, 2)])) == [0]


# -- over-capitalization and unavoidability


def test_overcap_marks_harvest_down_capital_up(fishery_gstg):
    oc = mark_overcapitalization(fishery_gstg, "h", "k")
    want = [
        c.id
        for c in fishery_gstg.clusters
        if fishery_gstg.value(c.id, "h").dir == QDir.DEC and fishery_gstg.value(c.id, "k").dir == QDir.INC
    ]
    assert oc == want and oc
    assert all(fishery_gstg.annotations[c]["overcapitalization"] for c in oc)


def test_overcap_needs_relevant_variables(naive_gstg):
    with pytest.raises(ModelError):
        mark_overcapitalization(naive_gstg, "h", "k")


def test_unavoidable_trivial_gates():
    g = toy(4, [(0, 1), (1, 3), (0, 2), (2, 3)])
    assert check_unavoidable(g, 0, {1, 2}, {3}).holds
    res = check_unavoidable(g, 0, set(), {3})
    assert not res and res.witness[0] == 0 and res.witness[-1] == 3
    assert all(e in g.edges for e in zip(res.witness, res.witness[1:]))
    assert not check_unavoidable(g, 0, {1}, {3})
    assert check_unavoidable(g, 0, {0}, {3})
    with pytest.raises(ModelError):
        check_unavoidable(g, 9, set(), {3})


@settings(max_examples=100)
@given(graphs, st.data())
def test_unavoidable_matches_reachability(gr, data):
    n, edges = gr
    g = toy(n, edges)
    start = data.draw(st.integers(0, n - 1))
    gate = set(data.draw(st.lists(st.integers(0, n - 1), max_size=n)))
    targets = set(data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=n)))
    res = check_unavoidable(g, start, gate, targets)
    if start in gate:
        assert res.holds
        return
    pruned = [(a, b) for a, b in g.edges if a not in gate and b not in gate]
    assert res.holds == (not (reach(n, pruned)[start] & targets))
    if not res.holds:
        assert not gate.intersection(res.witness)
        assert all(e in g.edges for e in zip(res.witness, res.witness[1:]))


def test_unavoidable_holds_means_no_avoiding_behavior(naive_gstg, naive_stg):
    """A gate unavoidable on the quotient leaves no gate-free STG behavior to a rest point."""
    eq = set(find_equilibria(naive_gstg))
    start = naive_stg.initials[0]
    bs = extract_behaviors(naive_stg, start)
    n = len(naive_gstg.clusters)
    checked = 0
    for mask in range(1 << n):
        gate = {c for c in range(n) if mask >> c & 1}
        res = check_unavoidable(naive_gstg, naive_gstg.cluster_of[start], gate, eq)
        members = {i for c in gate for i in naive_gstg.clusters[c].members}
        avoiding = [b for b in behaviors_avoiding(bs, members) if b.end == "equilibrium"]
        if res.holds:
            assert not avoiding, gate
            checked += 1
        else:
            assert res.witness[-1] in eq and not gate.intersection(res.witness)
    assert checked


# -- behaviors


def test_behaviors_match_recursive_count(naive_stg, naive_full):
    for g in (naive_stg, naive_full):
        succ = g.successors()
        for start in g.initials[:5]:
            for rev in (0, 1):
                bs = extract_behaviors(g, start, max_revisits=rev)
                assert len(bs) == count_paths(succ, start, rev + 1)
                assert len(set(b.vertices for b in bs)) == len(bs)
                for b in bs:
                    assert all(w in succ[v] for v, w in zip(b.vertices, b.vertices[1:]))


def test_behaviors_to_target(naive_stg):
    succ = naive_stg.successors()
    start = naive_stg.initials[0]
    for to in range(len(naive_stg.vertices)):
        bs = extract_behaviors(naive_stg, start, to=to)
        assert len(bs) == count_paths(succ, start, 1, to=to)


def test_behavior_from_equilibrium_is_single(naive_stg):
    for e in find_equilibria(naive_stg):
        assert [b.vertices for b in extract_behaviors(naive_stg, e)] == [(e,)]


def test_naive_behaviors_begin_with_a_worked_example_case(naive_stg, naive):
    """From the initial point the interval state follows, then one of the two cases."""
    bs = extract_behaviors(naive_stg, naive_stg.initials[0])
    assert bs
    for b in bs:
        assert len(b.vertices) >= 4
        s = naive_stg.vertices[b.vertices[3]]
        assert any(fixtures.matches(naive, s, pat) for pat in fixtures.NAIVE_CASES)


def test_precedence_matches_behaviors(naive_stg, naive):
    ix, ih = naive.index("x"), naive.index("h")
    verts = naive_stg.vertices
    preds = {
        "x_dec": lambda i: verts[i].values[ix].dir == QDir.DEC,
        "h_dec": lambda i: verts[i].values[ih].dir == QDir.DEC,
        "x_std": lambda i: verts[i].values[ix].dir == QDir.STD,
        "h_inc": lambda i: verts[i].values[ih].dir == QDir.INC,
    }
    bs = []
    for s in naive_stg.initials:
        bs += extract_behaviors(naive_stg, s)
    for fa, first in preds.items():
        for fb, second in preds.items():
            ok, witness = precedes_on_all_paths(naive_stg, naive_stg.initials, first, second)
            brute = True
            for b in bs:
                for v in b.vertices:
                    if first(v):
                        break
                    if second(v):
                        brute = False
                        break
            assert ok == brute, (fa, fb)
            if not ok:
                assert second(witness[-1]) and not any(first(v) for v in witness)


# -- quadrants


def test_quadrants_and_transitions(fishery_gstg):
    axes = default_quadrant_axes(fishery_gstg)
    assert axes is not None
    seen = {quadrant(fishery_gstg, c.id, *axes) for c in fishery_gstg.clusters}
    assert seen <= {"I", "II", "III", "IV", None}
    r = reach(len(fishery_gstg.clusters), fishery_gstg.edges)
    for t in region_transitions(fishery_gstg, *axes):
        assert t.target in r[t.source] and t.regions[0] != t.regions[1]
        assert t.irreversible == (t.source not in r[t.target])


def test_quadrant_axes_need_both_variables(naive_stg):
    assert default_quadrant_axes(cluster_gstg(naive_stg, ["x", "R"])) is None
    assert default_quadrant_axes(cluster_gstg(naive_stg, ["x", "h"])) is not None


def _ii_to_iii(gs):
    return [t for t in region_transitions(gs, *default_quadrant_axes(gs)) if t.regions == ("II", "III")]


def test_fishery_has_quadrant_ii_to_iii_transitions(fishery_gstg):
    assert _ii_to_iii(fishery_gstg)


@pytest.mark.xfail(strict=True, reason="every II to III move of the shipped model can be undone; see the decisions ledger")
def test_fishery_quadrant_ii_to_iii_is_irreversible(fishery_gstg):
    assert any(t.irreversible for t in _ii_to_iii(fishery_gstg))


def test_fishery_has_critical_branchings(fishery_gstg):
    crit = find_critical_branchings(fishery_gstg)
    succ = fishery_gstg.successors()
    irr = set(find_irreversible(fishery_gstg))
    assert crit
    assert all(len(succ[c]) >= 2 and any((c, w) in irr for w in succ[c]) for c in crit)
