import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdesim.qcore import (
    ModelError,
    QDir,
    QMag,
    QualitativeState,
    QualitativeValue,
    QuantitySpace,
    Sign,
    TimeLabel,
    adjacent_regions,
    aggregate,
    sign_add,
    sign_relative,
    state_key,
)

X = QuantitySpace(("0", "xmsy", "Q", "xmax"))


def val(space, text, word):
    return QualitativeValue(space.parse_mag(text), QDir.parse(word))


def test_sign_relative_examples():
    assert sign_relative(val(X, "(xmsy,Q)", "dec"), "xmsy", X) is Sign.POS
    assert sign_relative(val(X, "xmsy", "std"), "xmsy", X) is Sign.ZERO
    assert sign_relative(val(X, "(0,xmsy)", "inc"), "Q", X) is Sign.NEG


def test_sign_relative_unknown_landmark():
    with pytest.raises(ModelError):
        sign_relative(val(X, "Q", "std"), "K", X)


def test_adjacent_regions_examples():
    assert adjacent_regions(X.parse_mag("xmsy"), X) == (X.parse_mag("(0,xmsy)"), X.parse_mag("(xmsy,Q)"))
    assert adjacent_regions(X.parse_mag("0"), X)[0] is None
    assert adjacent_regions(X.parse_mag("(xmsy,Q)"), X) == (X.parse_mag("xmsy"), X.parse_mag("Q"))
    assert adjacent_regions(X.parse_mag("xmax"), X)[1] is None


spaces = st.lists(st.text("abcdefgh", min_size=1, max_size=3), min_size=2, max_size=6, unique=True).map(
    lambda ls: QuantitySpace(tuple(ls))
)


@given(spaces, st.data())
def test_adjacency_involution(space, data):
    m = QMag(data.draw(st.integers(0, space.top)))
    below, above = adjacent_regions(m, space)
    if above is not None:
        assert adjacent_regions(above, space)[0] == m
    if below is not None:
        assert adjacent_regions(below, space)[1] == m


@given(spaces, st.data())
def test_sign_relative_monotone(space, data):
    a = data.draw(st.integers(0, space.top))
    b = data.draw(st.integers(a, space.top))
    lm = data.draw(st.integers(0, len(space.landmarks) - 1))
    assert sign_relative(QMag(a), lm, space) <= sign_relative(QMag(b), lm, space)


@given(spaces)
def test_mag_name_round_trip(space):
    for m in space.magnitudes():
        assert space.parse_mag(space.mag_name(m)) == m


def test_quantity_space_invariants():
    with pytest.raises(ModelError):
        QuantitySpace(("0",))
    with pytest.raises(ModelError):
        QuantitySpace(("0", "a", "0"))
    with pytest.raises(ModelError):
        X.parse_mag("(0,Q)")


def test_sign_table():
    P, N, Z, A = Sign.POS, Sign.NEG, Sign.ZERO, Sign.ANY
    assert sign_add(P, P) is P and sign_add(N, N) is N
    assert sign_add(Z, N) is N and sign_add(P, Z) is P
    assert sign_add(P, N) is A and sign_add(A, Z) is A
    assert aggregate([Z, Z]) is Z and aggregate([P, Z]) is P and aggregate([N, P]) is A


def test_direction_vocabulary():
    assert [d.word for d in QDir] == ["dec", "std", "inc"]
    assert [d.glyph for d in QDir] == ["v", "o", "^"]
    with pytest.raises(ModelError):
        QDir.parse("up")


def test_state_key_examples():
    a = QualitativeState((val(X, "Q", "std"),), TimeLabel.POINT)
    assert state_key(a) == state_key(QualitativeState((val(X, "Q", "std"),), TimeLabel.POINT))
    assert state_key(a) != state_key(a.with_label(TimeLabel.INTERVAL))
    assert state_key(a) != state_key(QualitativeState((val(X, "Q", "inc"),), TimeLabel.POINT))


def test_state_key_collision_free_over_naive(naive):
    doms = [sp.values() for sp in naive.spaces]
    keys = set()
    n = 0
    for vals in itertools.product(*doms):
        for label in TimeLabel:
            keys.add(state_key(QualitativeState(vals, label)))
            n += 1
    assert len(keys) == n


def test_equilibrium_needs_point_label():
    s = QualitativeState((val(X, "Q", "std"),), TimeLabel.POINT)
    assert s.is_equilibrium
    assert not s.with_label(TimeLabel.INTERVAL).is_equilibrium
