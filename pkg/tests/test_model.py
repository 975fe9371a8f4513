import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srwalk.coupling import CouplingField, constant_K
from srwalk.model import (
    ModelParams,
    OutsideRangeWarning,
    SpinChain,
    StepIncrements,
    Walk,
    end_to_end_sq,
    spin_energy,
    spins_to_walk,
    walk_energy,
    walk_from_codes,
    walk_to_spins,
)

E1, E2 = (1, 0), (0, 1)


def walk_of(*steps):
    return StepIncrements(np.array(steps)).to_walk()


@pytest.mark.parametrize(
    "step, expected",
    [((1, 0), (1, 1)), ((0, 1), (1, -1)), ((-1, 0), (-1, -1)), ((0, -1), (-1, 1))],
)
def test_single_step_spins(step, expected):
    s, t = walk_to_spins(walk_of(step))
    assert (s.spins[0], t.spins[0]) == expected


def test_spins_to_walk_examples():
    w = spins_to_walk(SpinChain([1]), SpinChain([1]))
    assert w.positions.tolist() == [[0, 0], [1, 0]]
    w = spins_to_walk(SpinChain([1, 1]), SpinChain([1, 1]))
    assert w.positions.tolist() == [[0, 0], [1, 0], [2, 0]]


def test_spins_to_walk_length_mismatch():
    with pytest.raises(ValueError):
        spins_to_walk(SpinChain([1, 1]), SpinChain([1]))


@pytest.mark.parametrize("bad", [[[0, 0], [1, 1]], [[0, 0], [2, 0]], [[0, 0], [0, 0]], [[1, 0], [2, 0]]])
def test_invalid_walks_rejected(bad):
    with pytest.raises(ValueError):
        Walk(bad)


def test_invalid_spins_rejected():
    with pytest.raises(ValueError):
        SpinChain([1, 0, -1])


@pytest.mark.parametrize("N", range(1, 9))
def test_bijection_exhaustive(N):
    seen = set()
    for codes in itertools.product(range(4), repeat=N):
        w = walk_from_codes(codes)
        s, t = walk_to_spins(w)
        assert spins_to_walk(s, t) == w
        seen.add((s.spins.tobytes(), t.spins.tobytes()))
    assert len(seen) == 4**N


def test_end_to_end_examples():
    assert end_to_end_sq(walk_of(E1, E1)) == 4
    assert end_to_end_sq(walk_of(E1, E2)) == 2
    assert end_to_end_sq(walk_of(E1, (-1, 0))) == 0


def test_walk_energy_examples():
    p = ModelParams(2, 4.0, 1.0)
    assert walk_energy(walk_of(E1, E1), p) == pytest.approx(2.25, rel=1e-15)
    assert walk_energy(walk_of(E1, E2), p) == pytest.approx(2.125, rel=1e-15)
    for a in (3.2, 3.5, 4.0):
        assert walk_energy(walk_of(E2), ModelParams(1, a, 0.0)) == 1.0


def test_spin_energy_examples():
    c = CouplingField(ModelParams(2, 4.0, 1.0))
    assert spin_energy(SpinChain([1, 1]), c) == pytest.approx(0.0625, rel=1e-15)
    assert spin_energy(SpinChain([1, -1]), c) == pytest.approx(-0.0625, rel=1e-15)
    assert spin_energy(SpinChain([-1]), CouplingField(ModelParams(1, 3.5, 1.0))) == 0.0
    with pytest.raises(ValueError):
        spin_energy(SpinChain([1, 1, 1]), c)


def _brute_energy(codes, alpha):
    # independent double loop over time pairs
    w = walk_from_codes(codes).positions
    e = 0.0
    for i in range(len(w)):
        for j in range(i + 1, len(w)):
            e += (j - i) ** -alpha * float(((w[i] - w[j]) ** 2).sum())
    return e


walk_codes = st.lists(st.integers(0, 3), min_size=1, max_size=24)


@settings(max_examples=150, deadline=None)
@given(codes=walk_codes, alpha=st.sampled_from([2.5, 3.2, 3.5, 4.0, 5.0]))
def test_energy_identity_random_walks(codes, alpha):
    p = ModelParams(len(codes), alpha, 1.0)
    c = CouplingField(p)
    w = walk_from_codes(codes)
    s, t = walk_to_spins(w)
    lhs = walk_energy(w, p)
    assert lhs == pytest.approx(_brute_energy(codes, alpha), rel=1e-12)
    rhs = spin_energy(s, c) + spin_energy(t, c) + constant_K(p)
    assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-11)


@settings(max_examples=200, deadline=None)
@given(codes=walk_codes)
def test_end_to_end_is_half_magnetisation_sum(codes):
    s, t = walk_to_spins(walk_from_codes(codes))
    assert 2 * end_to_end_sq(walk_from_codes(codes)) == s.magnetization**2 + t.magnetization**2


@settings(max_examples=200, deadline=None)
@given(codes=walk_codes)
def test_roundtrip_random(codes):
    w = walk_from_codes(codes)
    assert spins_to_walk(*walk_to_spins(w)) == w


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(0, 3.5, 1.0)
    with pytest.raises(ValueError):
        ModelParams(4, 2.0, 1.0)
    with pytest.raises(ValueError):
        ModelParams(4, 3.5, -0.1)


def test_params_outside_range_warns():
    with pytest.warns(OutsideRangeWarning):
        ModelParams(4, 2.5, 1.0)
    with pytest.warns(OutsideRangeWarning):
        ModelParams(4, 4.5, 1.0)


def test_walk_is_immutable():
    w = walk_of(E1, E2)
    with pytest.raises(ValueError):
        w.positions[0, 0] = 3
