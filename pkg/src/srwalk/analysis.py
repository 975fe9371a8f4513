"""Scaling exponent of the mean square end-to-end distance and regime labels.

``<w_N^2> ~ N^gamma`` is fitted as a straight line in log-log space;
gamma = 1 is diffusive, gamma = 2 ballistic.  Finite-N fits get guard
bands, and anything between them is reported as ``undetermined``.
"""

from __future__ import annotations

import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from srwalk.coupling import CouplingField
from srwalk.model import ModelParams
from srwalk.sampler import RunPlan, SampleStats, run

__all__ = [
    "ScalingPoint",
    "GammaFit",
    "ScanRecord",
    "ScanResult",
    "fit_gamma",
    "fit_gamma_windowed",
    "classify",
    "jackknife_gamma",
    "cell_seed",
    "scan",
    "DIFFUSIVE",
    "BALLISTIC",
    "UNDETERMINED",
]

DIFFUSIVE = "diffusive"
BALLISTIC = "ballistic"
UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class ScalingPoint:
    N: int
    mean: float
    err: float = 0.0

    def __post_init__(self):
        if not self.mean > 0:
            raise ValueError(f"mean must be positive, got {self.mean}")
        if not self.err >= 0:
            raise ValueError(f"err must be nonnegative, got {self.err}")


@dataclass(frozen=True)
class GammaFit:
    gamma: float
    gamma_err: float
    intercept: float
    chi2_per_dof: float
    n_points: int = 0
    dropped: tuple = ()


def fit_gamma(points: Sequence[ScalingPoint]) -> GammaFit:
    """Weighted least squares of ``log(mean)`` on ``log(N)``.

    Weights are ``(mean / err)^2``.  If every error is zero the fit is
    unweighted and the slope error comes from the residual scatter.
    """
    pts = list(points)
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points, got {len(pts)}")
    Ns = [p.N for p in pts]
    if len(set(Ns)) != len(Ns):
        raise ValueError("points must have distinct N")
    x = np.log(np.array(Ns, dtype=np.float64))
    y = np.log(np.array([p.mean for p in pts]))
    sig = np.array([p.err / p.mean for p in pts])
    weighted = bool(np.all(sig > 0))
    if not weighted and np.any(sig > 0):
        sig = np.where(sig > 0, sig, sig[sig > 0].min())
        weighted = True
    w = 1.0 / sig**2 if weighted else np.ones_like(x)
    S, Sx, Sy = w.sum(), (w * x).sum(), (w * y).sum()
    Sxx, Sxy = (w * x * x).sum(), (w * x * y).sum()
    delta = S * Sxx - Sx * Sx
    slope = (S * Sxy - Sx * Sy) / delta
    icpt = (Sxx * Sy - Sx * Sxy) / delta
    resid = y - icpt - slope * x
    dof = len(pts) - 2
    chi2 = float((w * resid**2).sum())
    if weighted:
        var = S / delta
    else:
        var = chi2 / dof * S / delta
    err = max(math.sqrt(max(var, 0.0)), np.finfo(float).eps * max(1.0, abs(slope)))
    return GammaFit(float(slope), float(err), float(icpt), chi2 / dof, len(pts))


def fit_gamma_windowed(points: Sequence[ScalingPoint], max_chi2: float = 3.0) -> GammaFit:
    """Fit, dropping the smallest N while chi2/dof exceeds ``max_chi2`` and > 3 points remain."""
    pts = sorted(points, key=lambda p: p.N)
    dropped = []
    fit = fit_gamma(pts)
    while fit.chi2_per_dof > max_chi2 and len(pts) > 3:
        dropped.append(pts.pop(0).N)
        fit = fit_gamma(pts)
    return GammaFit(fit.gamma, fit.gamma_err, fit.intercept, fit.chi2_per_dof, fit.n_points,
                    tuple(dropped))


def classify(fit: GammaFit, low: float = 1.2, high: float = 1.8, guard: float = 2.0) -> str:
    if fit.gamma + guard * fit.gamma_err < low:
        return DIFFUSIVE
    if fit.gamma - guard * fit.gamma_err > high:
        return BALLISTIC
    return UNDETERMINED


def jackknife_gamma(samples: Sequence[SampleStats]) -> tuple[float, float]:
    """Delete-one-bin jackknife of gamma across runs sharing the same bin count."""
    nb = {len(s.bin_means) for s in samples}
    if len(nb) != 1 or nb.pop() < 2:
        raise ValueError("all runs need the same number (>= 2) of stored bins")
    B = np.array([s.bin_means for s in samples])
    n = B.shape[1]
    x = np.log([s.N for s in samples])
    totals = B.sum(axis=1)
    gam = np.empty(n)
    for k in range(n):
        y = np.log((totals - B[:, k]) / (n - 1))
        gam[k] = np.polyfit(x, y, 1)[0]
    full = np.polyfit(x, np.log(B.mean(axis=1)), 1)[0]
    err = math.sqrt((n - 1) / n * ((gam - gam.mean()) ** 2).sum())
    return float(full), err


def cell_seed(master_seed: int, ai: int, bi: int, ni: int) -> int:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(ai, bi, ni))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class ScanRecord:
    alpha: float
    beta: float
    fit: GammaFit | None
    regime: str
    samples: list = field(default_factory=list)
    errors: list = field(default_factory=list)


@dataclass
class ScanResult:
    records: list
    brackets: dict
    monotonicity_flags: list
    metadata: dict

    def record(self, alpha: float, beta: float) -> ScanRecord:
        for r in self.records:
            if r.alpha == alpha and r.beta == beta:
                return r
        raise KeyError((alpha, beta))

    def to_dict(self) -> dict:
        return {
            "records": [
                {
                    "alpha": r.alpha,
                    "beta": r.beta,
                    "fit": None if r.fit is None else asdict(r.fit),
                    "regime": r.regime,
                    "samples": [s.to_dict() for s in r.samples],
                    "errors": r.errors,
                }
                for r in self.records
            ],
            "brackets": {repr(a): list(b) for a, b in self.brackets.items()},
            "monotonicity_flags": self.monotonicity_flags,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScanResult":
        recs = []
        for r in d["records"]:
            fit = None
            if r["fit"] is not None:
                f = dict(r["fit"])
                f["dropped"] = tuple(f.get("dropped", ()))
                fit = GammaFit(**f)
            recs.append(ScanRecord(r["alpha"], r["beta"], fit, r["regime"],
                                   [SampleStats(**s) for s in r["samples"]], r["errors"]))
        brackets = {float(a): tuple(b) for a, b in d["brackets"].items()}
        return cls(recs, brackets, d["monotonicity_flags"], d["metadata"])


def _run_cell(args):
    alpha, beta, N, plan = args
    try:
        p = ModelParams(N, alpha, beta)
        return run(p, plan, CouplingField(p)), None
    except Exception as exc:  # recorded per cell; the scan goes on
        return None, f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"


def scan(alphas: Sequence[float], betas: Sequence[float], Ns: Sequence[int], plan: RunPlan,
         jobs: int = 1) -> ScanResult:
    """Sample every (alpha, beta, N), fit gamma per (alpha, beta) and classify.

    Cell seeds derive from ``plan.seed`` and the grid indices, so results do
    not depend on ``jobs`` or on execution order.
    """
    Ns = sorted(int(n) for n in Ns)
    if len(set(Ns)) < 3:
        raise ValueError("need at least 3 distinct N values")
    if Ns[-1] < 8 * Ns[0]:
        raise ValueError("N grid must span at least a factor of 8")
    alphas = [float(a) for a in alphas]
    betas = sorted(float(b) for b in betas)
    tasks, keys = [], []
    for ai, a in enumerate(alphas):
        for bi, b in enumerate(betas):
            for ni, n in enumerate(Ns):
                cell_plan = RunPlan(**{**plan.to_dict(), "seed": cell_seed(plan.seed, ai, bi, ni)})
                tasks.append((a, b, n, cell_plan))
                keys.append((ai, bi, ni))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    by_cell = dict(zip(keys, results))

    records = []
    for ai, a in enumerate(alphas):
        for bi, b in enumerate(betas):
            samples, errors = [], []
            for ni, n in enumerate(Ns):
                st, err = by_cell[(ai, bi, ni)]
                if st is None:
                    errors.append({"N": n, "error": err})
                else:
                    samples.append(st)
            fit, regime = None, UNDETERMINED
            pts = [ScalingPoint(s.N, s.mean_M_sq, s.err_M_sq) for s in samples if s.mean_M_sq > 0]
            if len(pts) >= 3:
                fit = fit_gamma_windowed(pts)
                regime = classify(fit)
            records.append(ScanRecord(a, b, fit, regime, samples, errors))

    brackets = {}
    flags = []
    for a in alphas:
        rows = [r for r in records if r.alpha == a]
        diff = [r.beta for r in rows if r.regime == DIFFUSIVE]
        ball = [r.beta for r in rows if r.regime == BALLISTIC]
        brackets[a] = (max(diff) if diff else None, min(ball) if ball else None)
        fitted = [r for r in rows if r.fit is not None]
        for r0, r1 in zip(fitted, fitted[1:]):
            tol = 2.0 * math.hypot(r0.fit.gamma_err, r1.fit.gamma_err)
            if r1.fit.gamma < r0.fit.gamma - tol:
                flags.append({"alpha": a, "beta_low": r0.beta, "beta_high": r1.beta,
                              "gamma_low": r0.fit.gamma, "gamma_high": r1.fit.gamma})
    meta = {"alphas": alphas, "betas": betas, "Ns": Ns, "plan": plan.to_dict(),
            "cell_seeds": {f"{t[0]!r},{t[1]!r},{t[2]}": t[3].seed for t in tasks}}
    return ScanResult(records, brackets, flags, meta)
