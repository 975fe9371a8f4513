import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srwalk import analysis
from srwalk.analysis import (
    BALLISTIC,
    DIFFUSIVE,
    UNDETERMINED,
    GammaFit,
    ScalingPoint,
    ScanResult,
    cell_seed,
    classify,
    fit_gamma,
    fit_gamma_windowed,
    jackknife_gamma,
    scan,
)
from srwalk.sampler import RunPlan

NS = [64, 128, 256, 512]


def test_exact_power_laws():
    f = fit_gamma([ScalingPoint(n, float(n) ** 2) for n in NS])
    assert f.gamma == pytest.approx(2.0, abs=1e-12)
    assert f.chi2_per_dof == pytest.approx(0.0, abs=1e-20)
    assert f.gamma_err > 0
    f = fit_gamma([ScalingPoint(n, float(n), 0.01 * n) for n in NS])
    assert f.gamma == pytest.approx(1.0, abs=1e-12)
    assert f.intercept == pytest.approx(0.0, abs=1e-10)


def test_synthetic_noise_calibration():
    rng = np.random.default_rng(2024)
    inside, gammas, errs = 0, [], []
    for _ in range(100):
        pts = []
        for n in NS:
            m = 3 * n**1.5
            pts.append(ScalingPoint(n, m * (1 + 0.01 * rng.normal()), 0.01 * m))
        f = fit_gamma(pts)
        gammas.append(f.gamma)
        errs.append(f.gamma_err)
        inside += abs(f.gamma - 1.5) < 3 * f.gamma_err
    assert inside >= 97
    assert np.std(gammas) == pytest.approx(np.mean(errs), rel=0.2)
    assert np.mean(gammas) == pytest.approx(1.5, abs=3 * np.mean(errs) / 10)


@pytest.mark.parametrize(
    "pts",
    [
        [ScalingPoint(64, 1.0), ScalingPoint(128, 2.0)],
        [ScalingPoint(64, 1.0), ScalingPoint(64, 2.0), ScalingPoint(128, 3.0)],
    ],
)
def test_fit_gamma_rejects_bad_input(pts):
    with pytest.raises(ValueError):
        fit_gamma(pts)


def test_scaling_point_validation():
    with pytest.raises(ValueError):
        ScalingPoint(64, 0.0)
    with pytest.raises(ValueError):
        ScalingPoint(64, 1.0, -1.0)


@settings(max_examples=100, deadline=None)
@given(
    gamma=st.floats(0.5, 2.5),
    scale=st.floats(1e-3, 1e3),
    noise=st.lists(st.floats(-0.05, 0.05), min_size=4, max_size=4),
)
def test_scale_equivariance(gamma, scale, noise):
    base = [ScalingPoint(n, n**gamma * (1 + e), 0.02 * n**gamma) for n, e in zip(NS, noise)]
    scaled = [ScalingPoint(p.N, p.mean * scale, p.err * scale) for p in base]
    f0, f1 = fit_gamma(base), fit_gamma(scaled)
    assert f1.gamma == pytest.approx(f0.gamma, abs=1e-9)
    assert f1.gamma_err == pytest.approx(f0.gamma_err, rel=1e-9)
    assert f1.intercept - f0.intercept == pytest.approx(math.log(scale), abs=1e-9)


@pytest.mark.parametrize(
    "gamma, err, label",
    [(1.00, 0.03, DIFFUSIVE), (1.97, 0.04, BALLISTIC), (1.5, 0.05, UNDETERMINED),
     (1.15, 0.03, UNDETERMINED), (1.85, 0.03, UNDETERMINED)],
)
def test_classify_examples(gamma, err, label):
    assert classify(GammaFit(gamma, err, 0.0, 1.0)) == label


RANK = {DIFFUSIVE: 0, UNDETERMINED: 1, BALLISTIC: 2}


@settings(max_examples=300, deadline=None)
@given(g=st.floats(0.0, 3.0), dg=st.floats(0.0, 1.0), err=st.floats(1e-4, 0.5))
def test_classify_monotone(g, dg, err):
    lo = classify(GammaFit(g, err, 0.0, 1.0))
    hi = classify(GammaFit(g + dg, err, 0.0, 1.0))
    assert RANK[hi] >= RANK[lo]


def test_windowed_fit_drops_small_n():
    # strong finite-size correction at the smallest N only
    pts = [ScalingPoint(n, n**2.0 * (0.5 if n == 32 else 1.0), 1e-3 * n**2) for n in [32] + NS]
    f = fit_gamma_windowed(pts)
    assert f.dropped == (32,)
    assert f.gamma == pytest.approx(2.0, abs=1e-9)
    clean = fit_gamma_windowed([ScalingPoint(n, n**1.0, 0.01 * n) for n in NS])
    assert clean.dropped == ()


def test_cell_seeds_distinct_and_stable():
    seeds = {cell_seed(7, a, b, n) for a in range(2) for b in range(3) for n in range(4)}
    assert len(seeds) == 24
    assert cell_seed(7, 1, 2, 3) == cell_seed(7, 1, 2, 3)
    assert all(0 <= s < 2**64 for s in seeds)


PLAN = RunPlan(n_therm=200, n_measure=2000, seed=5)


def test_scan_small_grid_and_jackknife():
    res = scan([3.5], [0.0, 0.5, 4.0], [32, 64, 128, 256], PLAN)
    free = res.record(3.5, 0.0)
    assert abs(free.fit.gamma - 1.0) < 3 * free.fit.gamma_err + 0.02
    assert free.regime == DIFFUSIVE
    assert res.record(3.5, 4.0).regime == BALLISTIC
    lo, hi = res.brackets[3.5]
    assert lo is not None and hi is not None and lo < hi
    # jackknife over measurement bins cross-checks the least-squares error
    cell = res.record(3.5, 0.5)
    g_jk, e_jk = jackknife_gamma(cell.samples)
    assert g_jk == pytest.approx(fit_gamma([ScalingPoint(s.N, s.mean_M_sq, s.err_M_sq)
                                            for s in cell.samples]).gamma, abs=3 * e_jk)
    assert 0.3 < e_jk / cell.fit.gamma_err < 3.0


def test_scan_roundtrip_dict():
    import json

    res = scan([3.5], [0.0, 1.0], [16, 32, 128], PLAN)
    back = ScanResult.from_dict(json.loads(json.dumps(res.to_dict())))
    assert back.to_dict() == res.to_dict()


def test_scan_records_cell_failures(monkeypatch):
    real = analysis.run

    def flaky(p, plan, c=None, fit=None):
        if p.N == 32:
            raise RuntimeError("boom")
        return real(p, plan, c, fit)

    monkeypatch.setattr(analysis, "run", flaky)
    res = scan([3.5], [0.0], [16, 32, 64, 128], PLAN)
    rec = res.record(3.5, 0.0)
    assert len(rec.errors) == 1 and rec.errors[0]["N"] == 32
    assert len(rec.samples) == 3 and rec.fit is not None


def test_scan_independent_of_jobs():
    a = scan([3.5], [0.0, 1.0], [16, 32, 128], PLAN, jobs=1)
    b = scan([3.5], [0.0, 1.0], [16, 32, 128], PLAN, jobs=2)
    assert a.to_dict() == b.to_dict()


@pytest.mark.parametrize("Ns", [[64, 128], [64, 128, 256]])
def test_scan_grid_validation(Ns):
    with pytest.raises(ValueError):
        scan([3.5], [0.0], Ns, PLAN)


def test_monotonicity_flags():
    res = scan([3.5], [0.0, 0.5, 4.0], [32, 64, 256], PLAN)
    gam = [r.fit.gamma for r in res.records]
    assert gam == sorted(gam) or res.monotonicity_flags
