import math

import numpy as np
import pytest

from srwalk.coupling import CouplingField, fit_bounds
from srwalk.model import ModelParams
from srwalk.oracle import enumerate_spins
from srwalk.sampler import (
    Majorant,
    MajorantViolation,
    RunPlan,
    _Engine,
    advance,
    binning_analysis,
    cluster_update,
    flip_delta,
    metropolis_sweep,
    naive_cluster_update,
    new_state,
    run,
    stationarity_test,
)


def field(N, alpha=3.5, beta=1.0):
    p = ModelParams(N, alpha, beta)
    return p, CouplingField(p)


def test_flip_delta_example():
    _, c = field(2, 4.0)
    s = new_state(c, 0, "ordered")
    assert flip_delta(s, 1) == pytest.approx(-0.125, rel=1e-15)
    assert abs(flip_delta(s, 2)) == pytest.approx(0.125, rel=1e-15)


def test_free_metropolis_accepts_everything():
    _, c = field(50, beta=0.0)
    s = new_state(c, 1, "random")
    res = advance(s, c, 0.0, 200, update_mix=0.0)
    assert res["accepted"] == res["proposed"] == 200 * 50


def test_free_clusters_are_single_sites():
    _, c = field(50, beta=0.0)
    s = new_state(c, 1, "random")
    for _ in range(100):
        before = s.spins.copy()
        cluster_update(s, c, 0.0)
        assert s.last_cluster_size == 1
        assert np.count_nonzero(before != s.spins) == 1


def test_metropolis_sweep_updates_counters():
    p, c = field(20)
    s = new_state(c, 4)
    metropolis_sweep(s, c, p.beta)
    assert s.sweep_count == 1 and 0 <= s.last_acceptance <= 1


def test_thinning_ratio_never_exceeds_one():
    for alpha in (3.2, 3.5, 4.0):
        p, c = field(300, alpha, 2.0)
        maj = Majorant.build(c, p.beta, fit_bounds(c, 0.1))
        i, j = np.triu_indices(300, k=1)
        p_true = -np.expm1(-2 * p.beta * c.dense()[i, j])
        ratio = p_true / maj.p_bar[j - i]
        assert np.all(ratio > 0) and np.all(ratio <= 1)


def test_majorant_violation_aborts():
    p, c = field(64, 3.5, 2.0)
    good = Majorant.build(c, p.beta)
    small = 0.3 * good.c
    rate = np.zeros(64)
    rate[1:] = 2 * p.beta * small * np.arange(1, 64) ** (2 - 3.5)
    bad = Majorant(small, p.beta, 3.5, np.cumsum(rate), -np.expm1(-rate))
    s = new_state(c, 0, "ordered")
    with pytest.raises(MajorantViolation):
        for _ in range(50):
            cluster_update(s, c, p.beta, majorant=bad)
    cluster_update(s, c, p.beta, majorant=good)


def test_naive_and_majorant_cluster_sizes_agree():
    p, c = field(200, 3.5, 0.8)
    sizes = {}
    for naive in (False, True):
        s = new_state(c, 11, "random")
        res = advance(s, c, p.beta, 4000, update_mix=1.0, naive=naive)
        sizes[naive] = res["cluster_sum"] / res["clusters"]
    assert sizes[False] == pytest.approx(sizes[True], rel=0.1)


@pytest.mark.parametrize("mix", [0.0, 1.0, 0.5])
def test_stationarity_n6(mix):
    p, c = field(6, 3.5, 1.0)
    res = stationarity_test(p, c, mix, n_compound=300_000, seed=5)
    assert res["p_value"] > 1e-3, res


@pytest.mark.parametrize("N", [4, 8])
@pytest.mark.parametrize("alpha", [3.5, 4.0])
@pytest.mark.parametrize("beta", [0.25, 1.0, 4.0])
@pytest.mark.parametrize("mix", [0.0, 1.0, 0.5])
def test_stationarity_grid(N, alpha, beta, mix):
    p, c = field(N, alpha, beta)
    res = stationarity_test(p, c, mix, n_compound=200_000, seed=17)
    assert res["p_value"] > 1e-3, res


def test_naive_cluster_stationarity():
    from srwalk.oracle import exact_distribution, spin_states
    from scipy import stats

    p, c = field(5, 3.5, 1.0)
    s = new_state(c, 2, "random")
    res = advance(s, c, p.beta, 200_000, update_mix=1.0, record_code=True, naive=True)
    codes = res["codes"][::20]
    counts = np.bincount(codes, minlength=32)
    exp = exact_distribution(p, c) * codes.size
    assert stats.chisquare(counts, exp).pvalue > 1e-3


def test_free_chain_m2():
    p, c = field(1024, beta=0.0)
    st = run(p, RunPlan(n_therm=100, n_measure=4000, seed=3), c)
    assert abs(st.mean_M_sq - 1024) < 3 * st.err_M_sq
    assert st.acceptance == 1.0 and st.mean_cluster_size == 1.0


@pytest.mark.parametrize("mix", [0.0, 0.5, 1.0])
def test_matches_exact_n16(mix):
    p, c = field(16, 3.5, 1.0)
    exact = enumerate_spins(p, c).mean_M_sq
    st = run(p, RunPlan(n_therm=1000, n_measure=60_000, update_mix=mix, seed=21), c)
    assert abs(st.mean_M_sq - exact) < 3 * st.err_M_sq
    assert not st.error_underestimated


@pytest.mark.parametrize("N, beta", [(4, 4.0), (10, 0.5), (12, 2.0)])
def test_matches_exact_small(N, beta):
    p, c = field(N, 3.5, beta)
    exact = enumerate_spins(p, c).mean_M_sq
    st = run(p, RunPlan(n_therm=500, n_measure=40_000, seed=N), c)
    assert abs(st.mean_M_sq - exact) < 3 * st.err_M_sq


def test_determinism_and_seed_independence():
    p, c = field(128, 3.5, 1.0)
    plan = RunPlan(n_therm=200, n_measure=3000, seed=99)
    a, b = run(p, plan, c), run(p, plan, c)
    assert a == b
    other = run(p, RunPlan(n_therm=200, n_measure=3000, seed=100), c)
    assert other != a
    assert abs(a.mean_M_sq - other.mean_M_sq) < 3 * math.hypot(a.err_M_sq, other.err_M_sq)


def test_cached_energy_tracks_metropolis():
    p, c = field(40, 3.5, 1.0)
    s = new_state(c, 8, "random")
    advance(s, c, p.beta, 3000, update_mix=0.0)
    assert not s.energy_stale
    assert s.energy == pytest.approx(c.pair_energy(s.spins), rel=1e-8)
    s.validate_energy()


def test_cluster_marks_energy_stale_and_resyncs():
    p, c = field(40, 3.5, 1.0)
    s = new_state(c, 8, "random")
    advance(s, c, p.beta, 50, update_mix=0.5)
    assert s.energy_stale
    assert s.energy == pytest.approx(c.pair_energy(s.spins), rel=1e-12)
    assert not s.energy_stale


def test_large_n_uses_fast_couplings():
    p, c = field(3000, 3.5, 1.0)
    eng = _Engine(c, p.beta, fit=fit_bounds(c, 0.1))
    assert not eng.dense
    s = new_state(c, 0, "random")
    eng.simulate(s, 2, 0, 1)
    assert not s.energy_stale
    # increments come from the O(1) evaluator, the reference from prefix-table rows
    s.validate_energy(rtol=1e-8)


def test_auto_thermalisation():
    p, c = field(64, 3.5, 1.0)
    st = run(p, RunPlan(n_therm=None, n_measure=1000, seed=1), c)
    assert st.n_therm >= 1000


def test_plan_validation():
    with pytest.raises(ValueError):
        RunPlan(n_measure=99)
    with pytest.raises(ValueError):
        RunPlan(n_measure=1000, measure_stride=20)
    with pytest.raises(ValueError):
        RunPlan(update_mix=1.5)
    with pytest.raises(ValueError):
        RunPlan(start="hot")
    assert RunPlan(update_mix=0.5).moves == (1, 1)
    assert RunPlan(update_mix=0.0).moves == (0, 1)
    assert RunPlan(update_mix=1.0).moves == (1, 0)
    assert RunPlan(update_mix=0.75).moves == (3, 1)


def test_binning_iid():
    x = np.random.default_rng(0).normal(size=2**16)
    b = binning_analysis(x)
    assert b["tau_int"] == pytest.approx(0.5, abs=0.1)
    assert b["err"] == pytest.approx(1 / 2**8, rel=0.2)
    assert b["plateau"]


def test_binning_ar1_matches_closed_form():
    rho = 0.9
    rng = np.random.default_rng(1)
    n = 2**18
    x = np.empty(n)
    x[0] = rng.normal() / math.sqrt(1 - rho**2)
    eps = rng.normal(size=n)
    for t in range(1, n):
        x[t] = rho * x[t - 1] + eps[t]
    tau_exact = 0.5 * (1 + rho) / (1 - rho)
    b = binning_analysis(x)
    assert b["tau_int"] == pytest.approx(tau_exact, rel=0.2)


def test_binning_flags_missing_plateau():
    # a random walk never decorrelates
    x = np.cumsum(np.random.default_rng(2).normal(size=4096))
    assert not binning_analysis(x)["plateau"]


def test_binning_constant_series():
    b = binning_analysis(np.full(500, 7.0))
    assert (b["mean"], b["err"], b["tau_int"], b["plateau"]) == (7.0, 0.0, 0.5, True)


def test_cluster_only_acceptance_is_one():
    st = run(ModelParams(16, 3.5, 1.0), RunPlan(n_therm=50, n_measure=200, update_mix=1.0, seed=1))
    assert st.acceptance == 1.0 and st.mean_cluster_size >= 1.0
