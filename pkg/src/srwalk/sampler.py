"""Monte Carlo for the long-range spin chain at large N.

Two moves leave the Gibbs measure ``exp(beta * sum_{i<j} U_ij s_i s_j)``
invariant:

* single-spin Metropolis, N random-site proposals per sweep;
* a Wolff cluster update.  With all-to-all couplings a plain Wolff step
  tests every spin from every cluster member.  Here bonds are first
  proposed from the translation-invariant majorant
  ``Ubar(d) = c_maj d^(2-alpha) >= U_ij`` by inverting the cumulative
  activation rate over distance, then thinned with probability
  ``(1 - exp(-2 beta U_ij)) / (1 - exp(-2 beta Ubar(d)))``.  The work per
  cluster member is proportional to the number of proposed bonds.

The end-to-end distance of the walk is estimated through
``<w_N^2> = <M^2>`` with ``M`` the chain magnetisation.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numba
import numpy as np
from scipy import stats

from srwalk.coupling import DENSE_LIMIT, BoundFit, CouplingField, fit_bounds
from srwalk.model import ModelParams

__all__ = [
    "RunPlan",
    "ChainState",
    "SampleStats",
    "Majorant",
    "MajorantViolation",
    "new_state",
    "make_rng",
    "flip_delta",
    "metropolis_sweep",
    "cluster_update",
    "naive_cluster_update",
    "advance",
    "run",
    "binning_analysis",
    "stationarity_test",
]

_ERR_MAJORANT = 1


class MajorantViolation(RuntimeError):
    """A true coupling exceeded the proposal majorant; cluster moves would be biased."""


def make_rng(seed) -> np.random.Generator:
    """Counter-based Philox stream; ``seed`` may be an int or a SeedSequence."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class RunPlan:
    n_therm: int | None = 1000
    n_measure: int = 10_000
    measure_stride: int = 1
    update_mix: float = 0.5
    seed: int = 0
    start: str = "ordered"
    validate_every: int = 1000
    n_jack_bins: int = 32

    def __post_init__(self):
        if self.start not in ("ordered", "random"):
            raise ValueError(f"start must be 'ordered' or 'random', got {self.start!r}")
        if not 0.0 <= self.update_mix <= 1.0:
            raise ValueError(f"update_mix must lie in [0, 1], got {self.update_mix}")
        if self.measure_stride < 1:
            raise ValueError("measure_stride must be >= 1")
        if self.n_measure // self.measure_stride < 100:
            raise ValueError("need n_measure / measure_stride >= 100 measurements for binning")
        if self.n_therm is not None and self.n_therm < 0:
            raise ValueError("n_therm must be >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def moves(self) -> tuple[int, int]:
        """(cluster updates, Metropolis sweeps) per compound sweep."""
        f = Fraction(self.update_mix).limit_denominator(8)
        return f.numerator, f.denominator - f.numerator

    def to_dict(self) -> dict:
        return asdict(self)


class ChainState:
    """One Markov chain: spins, cached pair energy, RNG stream and sweep counter.

    The cached energy is updated by every accepted Metropolis flip.  A
    cluster flip marks it stale; reading :attr:`energy` then recomputes it.
    """

    def __init__(self, spins, coupling: CouplingField, rng: np.random.Generator):
        s = np.array(spins, dtype=np.int8).reshape(-1)
        if s.size != coupling.N or not np.all(np.abs(s) == 1):
            raise ValueError("spins must be a +-1 array of length N")
        self.spins = s
        self.coupling = coupling
        self.rng = rng
        self.sweep_count = 0
        self.last_cluster_size = 0
        self._energy = coupling.pair_energy(s)
        self._stale = False

    @property
    def N(self) -> int:
        return self.spins.size

    @property
    def energy(self) -> float:
        if self._stale:
            self._energy = self.coupling.pair_energy(self.spins)
            self._stale = False
        return self._energy

    @property
    def energy_stale(self) -> bool:
        return self._stale

    @property
    def magnetization(self) -> int:
        return int(self.spins.sum(dtype=np.int64))

    def validate_energy(self, rtol: float = 1e-8) -> None:
        if self._stale:
            self._energy = self.coupling.pair_energy(self.spins)
            self._stale = False
            return
        exact = self.coupling.pair_energy(self.spins)
        if abs(self._energy - exact) > rtol * max(1.0, abs(exact)):
            raise RuntimeError(f"cached energy {self._energy!r} drifted from {exact!r}")
        self._energy = exact


def new_state(coupling: CouplingField, seed=0, start: str = "ordered") -> ChainState:
    rng = make_rng(seed)
    if start == "ordered":
        spins = np.ones(coupling.N, dtype=np.int8)
    elif start == "random":
        spins = np.where(rng.random(coupling.N) < 0.5, -1, 1).astype(np.int8)
    else:
        raise ValueError(f"unknown start {start!r}")
    return ChainState(spins, coupling, rng)


@dataclass(frozen=True, eq=False)
class Majorant:
    """Translation-invariant proposal envelope ``c d^(2-alpha)`` at fixed beta."""

    c: float
    beta: float
    alpha: float
    cum_rate: np.ndarray  # cum_rate[d] = 2 beta c sum_{t<=d} t^(2-alpha)
    p_bar: np.ndarray  # p_bar[d] = 1 - exp(-2 beta c d^(2-alpha))

    @classmethod
    def build(cls, coupling: CouplingField, beta: float, fit: BoundFit | None = None,
              exact_check_limit: int = DENSE_LIMIT) -> "Majorant":
        start = fit.c2_hat if fit is not None else 0.0
        c = coupling.majorant_constant(start) * (1.0 + 1e-9)
        N = coupling.N
        d = np.arange(N, dtype=np.float64)
        rate = np.zeros(N)
        rate[1:] = 2.0 * beta * c * d[1:] ** (2.0 - coupling.alpha)
        if N > 1:
            _verify_majorant(coupling, c, exact_check_limit)
        cum = np.cumsum(rate)
        return cls(c, float(beta), coupling.alpha, cum, -np.expm1(-rate))


def _verify_majorant(coupling: CouplingField, c: float, exact_check_limit: int) -> None:
    N = coupling.N
    if N <= exact_check_limit:
        i, j = np.triu_indices(N, k=1)
        U = coupling.dense()[i, j]
    else:
        rng = np.random.default_rng(N)
        i = rng.integers(0, N, 200_000)
        j = rng.integers(0, N, 200_000)
        keep = i != j
        i, j = np.minimum(i, j)[keep], np.maximum(i, j)[keep]
        U = coupling.fast(i + 1, j + 1)
    bound = c * (j - i).astype(np.float64) ** (2.0 - coupling.alpha)
    bad = U > bound
    if np.any(bad):
        k = int(np.argmax(U / bound))
        raise MajorantViolation(
            f"U[{i[k] + 1},{j[k] + 1}]={U[k]!r} exceeds majorant {bound[k]!r}")


@numba.njit(cache=True, inline="always")
def _coupling_at(i, j, N, U, dense, F2):
    if dense:
        return U[i, j]
    lo = min(i, j) + 1
    hi = max(i, j) + 1
    d = hi - lo
    b = N - hi + 1
    return (F2[d + 1] - F2[d + lo + 1]) - (F2[d + b + 1] - F2[d + lo + b + 1])


@numba.njit(cache=True)
def _local_field(i, spins, N, U, dense, F2):
    h = 0.0
    if dense:
        row = U[i]
        for j in range(N):
            h += row[j] * spins[j]
    else:
        for j in range(N):
            if j != i:
                h += _coupling_at(i, j, N, U, dense, F2) * spins[j]
    return h


@numba.njit(cache=True)
def _metropolis(spins, rng, beta, N, U, dense, F2, est, counters):
    # est[0] = cached energy, est[1] = 1.0 when stale
    for _ in range(N):
        i = rng.integers(0, N)
        counters[1] += 1
        if beta == 0.0:
            spins[i] = -spins[i]
            counters[0] += 1
            est[1] = 1.0
            continue
        h = _local_field(i, spins, N, U, dense, F2)
        dE = -2.0 * spins[i] * h
        if dE >= 0.0 or rng.random() < math.exp(beta * dE):
            spins[i] = -spins[i]
            est[0] += dE
            counters[0] += 1


@numba.njit(cache=True)
def _wolff_majorant(spins, rng, beta, N, U, dense, F2, cum_rate, p_bar, stack):
    seed = rng.integers(0, N)
    s0 = spins[seed]
    # members are flipped on entry, so spins[j] == s0 means "aligned and not yet in"
    spins[seed] = -s0
    stack[0] = seed
    top = 1
    size = 1
    while top > 0:
        top -= 1
        i = stack[top]
        for direction in (1, -1):
            dmax = N - 1 - i if direction == 1 else i
            d = 0
            while True:
                target = cum_rate[d] - math.log(1.0 - rng.random())
                nd = np.searchsorted(cum_rate, target)
                d = nd if nd > d else d + 1
                if d > dmax:
                    break
                j = i + direction * d
                if spins[j] != s0:
                    continue
                u = _coupling_at(i, j, N, U, dense, F2)
                p_true = -math.expm1(-2.0 * beta * u)
                pb = p_bar[d]
                if p_true > pb * (1.0 + 1e-9):
                    return -1
                if rng.random() * pb < p_true:
                    spins[j] = -s0
                    stack[top] = j
                    top += 1
                    size += 1
    return size


@numba.njit(cache=True)
def _wolff_naive(spins, rng, beta, N, U, dense, F2, stack):
    seed = rng.integers(0, N)
    s0 = spins[seed]
    spins[seed] = -s0
    stack[0] = seed
    top = 1
    size = 1
    while top > 0:
        top -= 1
        i = stack[top]
        for j in range(N):
            if spins[j] != s0:
                continue
            u = _coupling_at(i, j, N, U, dense, F2)
            if rng.random() < -math.expm1(-2.0 * beta * u):
                spins[j] = -s0
                stack[top] = j
                top += 1
                size += 1
    return size


@numba.njit(cache=True)
def _simulate(spins, rng, n_compound, stride, n_cluster, n_metro, naive, beta, N, U, dense, F2,
              cum_rate, p_bar, est, counters, out_M, out_code, record_code):
    # counters: accepted, proposed, cluster-size sum, clusters, error flag
    stack = np.empty(N, dtype=np.int64)
    k = 0
    for t in range(n_compound):
        for _ in range(n_cluster):
            if naive:
                size = _wolff_naive(spins, rng, beta, N, U, dense, F2, stack)
            else:
                size = _wolff_majorant(spins, rng, beta, N, U, dense, F2, cum_rate, p_bar, stack)
            if size < 0:
                counters[4] = 1
                return t
            counters[2] += size
            counters[3] += 1
            est[1] = 1.0
        for _ in range(n_metro):
            _metropolis(spins, rng, beta, N, U, dense, F2, est, counters)
        if (t + 1) % stride == 0 and k < out_M.shape[0]:
            m = 0
            for i in range(N):
                m += spins[i]
            out_M[k] = m
            if record_code:
                code = 0
                for i in range(N):
                    if spins[i] > 0:
                        code |= 1 << i
                out_code[k] = code
            k += 1
    return n_compound


class _Engine:
    """Arrays shared by the numba kernels for one (coupling, beta)."""

    def __init__(self, coupling: CouplingField, beta: float, fit: BoundFit | None = None,
                 majorant: Majorant | None = None, need_cluster: bool = True):
        self.coupling = coupling
        self.beta = float(beta)
        self.dense = coupling.N <= DENSE_LIMIT
        self.U = coupling.dense() if self.dense else np.zeros((1, 1))
        self.F2 = coupling.tail2 if not self.dense else np.zeros(1)
        if need_cluster:
            if majorant is None:
                majorant = Majorant.build(coupling, beta, fit)
            elif majorant.beta != self.beta:
                raise ValueError("majorant was built for a different beta")
            self.majorant = majorant
            self.cum_rate = majorant.cum_rate
            self.p_bar = majorant.p_bar
        else:
            self.majorant = None
            self.cum_rate = np.zeros(coupling.N)
            self.p_bar = np.zeros(coupling.N)

    def simulate(self, state: ChainState, n_compound: int, n_cluster: int, n_metro: int,
                 stride: int = 1, n_record: int = 0, record_code: bool = False,
                 naive: bool = False) -> dict:
        if record_code and state.N > 62:
            raise ValueError("state codes are only recorded for N <= 62")
        est = np.array([state._energy, 1.0 if state._stale else 0.0])
        counters = np.zeros(5, dtype=np.int64)
        out_M = np.zeros(n_record, dtype=np.int64)
        out_code = np.zeros(n_record if record_code else 0, dtype=np.int64)
        done = _simulate(state.spins, state.rng, int(n_compound), int(stride), int(n_cluster),
                         int(n_metro), bool(naive), self.beta, state.N, self.U, self.dense,
                         self.F2, self.cum_rate, self.p_bar, est, counters, out_M, out_code,
                         bool(record_code))
        state._energy = float(est[0])
        state._stale = bool(est[1])
        state.sweep_count += int(done)
        if counters[4]:
            raise MajorantViolation("a coupling exceeded the proposal majorant during a cluster update")
        return {"M": out_M, "codes": out_code, "accepted": int(counters[0]),
                "proposed": int(counters[1]), "cluster_sum": int(counters[2]),
                "clusters": int(counters[3])}


def flip_delta(state: ChainState, i: int) -> float:
    """Change of the pair energy ``sum U s s`` if spin ``i`` (1-based) were flipped."""
    row = state.coupling.row(i)
    return float(-2.0 * state.spins[i - 1] * (row @ state.spins.astype(np.float64)))


def metropolis_sweep(state: ChainState, c: CouplingField, beta: float) -> ChainState:
    eng = _Engine(c, beta, need_cluster=False)
    res = eng.simulate(state, 1, 0, 1)
    state.last_acceptance = res["accepted"] / max(res["proposed"], 1)
    return state


def cluster_update(state: ChainState, c: CouplingField, beta: float, fit: BoundFit | None = None,
                   majorant: Majorant | None = None) -> ChainState:
    eng = _Engine(c, beta, fit=fit, majorant=majorant)
    res = eng.simulate(state, 1, 1, 0)
    state.last_cluster_size = res["cluster_sum"]
    return state


def naive_cluster_update(state: ChainState, c: CouplingField, beta: float) -> ChainState:
    """Reference Wolff step that tests every spin from every cluster member."""
    eng = _Engine(c, beta, need_cluster=False)
    res = eng.simulate(state, 1, 1, 0, naive=True)
    state.last_cluster_size = res["cluster_sum"]
    return state


def advance(state: ChainState, c: CouplingField, beta: float, n_compound: int,
            update_mix: float = 0.5, stride: int = 1, record_code: bool = False,
            fit: BoundFit | None = None, naive: bool = False) -> dict:
    """Run ``n_compound`` compound sweeps and record M (and optionally state codes) every ``stride``."""
    n_cl, n_me = RunPlan(n_therm=0, n_measure=100, update_mix=update_mix).moves
    eng = _Engine(c, beta, fit=fit, need_cluster=n_cl > 0 and not naive)
    return eng.simulate(state, n_compound, n_cl, n_me, stride=stride,
                        n_record=n_compound // stride, record_code=record_code, naive=naive)


def binning_analysis(x, min_bins: int = 32, plateau_rtol: float = 0.2) -> dict:
    """Mean, binned standard error and integrated autocorrelation time of a series.

    Bins are doubled while at least ``min_bins`` remain.  ``tau_int`` is
    ``0.5 * (err_binned / err_naive)^2`` in units of the sampling interval;
    ``plateau`` is False when the last doubling still raised the error by
    more than ``plateau_rtol``.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n < 2:
        raise ValueError("need at least two samples")
    mean = float(x.mean())
    err0 = float(x.std(ddof=1) / math.sqrt(n))
    errs = [err0]
    b = x
    while b.size // 2 >= min_bins:
        m = b.size // 2
        b = 0.5 * (b[: 2 * m : 2] + b[1 : 2 * m : 2])
        errs.append(float(b.std(ddof=1) / math.sqrt(b.size)))
    err = errs[-1]
    if err0 == 0.0:
        return {"mean": mean, "err": 0.0, "tau_int": 0.5, "plateau": True, "errors": errs}
    tau = max(0.5, 0.5 * (err / err0) ** 2)
    plateau = len(errs) < 2 or errs[-1] <= (1.0 + plateau_rtol) * errs[-2]
    return {"mean": mean, "err": err, "tau_int": tau, "plateau": plateau, "errors": errs}


@dataclass
class SampleStats:
    N: int
    alpha: float
    beta: float
    seed: int
    mean_M_sq: float
    err_M_sq: float
    mean_abs_m: float
    tau_int: float
    n_sweeps: int
    n_therm: int
    acceptance: float
    mean_cluster_size: float
    error_underestimated: bool = False
    bin_means: list = field(default_factory=list)

    CSV_COLUMNS = ("N", "alpha", "beta", "seed", "mean_M_sq", "err_M_sq", "tau_int",
                   "acceptance", "mean_cluster_size", "n_sweeps")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _auto_therm(state, eng, n_cl, n_me, plan) -> int:
    pilot = 1000
    res = eng.simulate(state, pilot, n_cl, n_me, stride=1, n_record=pilot)
    tau = binning_analysis(res["M"].astype(np.float64) ** 2, min_bins=16)["tau_int"]
    extra = max(0, int(math.ceil(20 * tau)) - pilot)
    if extra:
        eng.simulate(state, extra, n_cl, n_me)
    return pilot + extra


def run(p: ModelParams, plan: RunPlan, c: CouplingField | None = None,
        fit: BoundFit | None = None) -> SampleStats:
    """Thermalise, measure ``M^2`` every ``measure_stride`` compound sweeps and bin the series.

    Deterministic for fixed ``(p, plan)``.
    """
    if c is None:
        c = CouplingField(p)
    if c.N != p.N or c.alpha != p.alpha:
        raise ValueError("coupling field does not match params")
    n_cl, n_me = plan.moves
    if n_cl and fit is None and 0.1 * p.N >= 2:
        fit = fit_bounds(c, 0.1)
    eng = _Engine(c, p.beta, fit=fit, need_cluster=n_cl > 0)
    state = new_state(c, plan.seed, plan.start)
    if plan.n_therm is None:
        n_therm = _auto_therm(state, eng, n_cl, n_me, plan)
    else:
        n_therm = plan.n_therm
        eng.simulate(state, n_therm, n_cl, n_me)
    state.validate_energy()
    n_rec = plan.n_measure // plan.measure_stride
    block = max(plan.validate_every, plan.measure_stride)
    block -= block % plan.measure_stride
    Ms, acc, prop, csum, ncl = [], 0, 0, 0, 0
    done = 0
    while done < n_rec * plan.measure_stride:
        todo = min(block, n_rec * plan.measure_stride - done)
        res = eng.simulate(state, todo, n_cl, n_me, stride=plan.measure_stride,
                           n_record=todo // plan.measure_stride)
        Ms.append(res["M"])
        acc += res["accepted"]
        prop += res["proposed"]
        csum += res["cluster_sum"]
        ncl += res["clusters"]
        done += todo
        state.validate_energy()
    M = np.concatenate(Ms).astype(np.float64)
    M2 = M * M
    b = binning_analysis(M2)
    nb = min(plan.n_jack_bins, M2.size)
    per = M2.size // nb
    bins = M2[: per * nb].reshape(nb, per).mean(axis=1)
    return SampleStats(
        N=p.N,
        alpha=p.alpha,
        beta=p.beta,
        seed=int(plan.seed),
        mean_M_sq=b["mean"],
        err_M_sq=b["err"],
        mean_abs_m=float(np.abs(M).mean() / p.N),
        tau_int=b["tau_int"] * plan.measure_stride,
        n_sweeps=int(done),
        n_therm=int(n_therm),
        acceptance=acc / prop if prop else 1.0,  # cluster moves are rejection-free
        mean_cluster_size=csum / ncl if ncl else 0.0,
        error_underestimated=not b["plateau"],
        bin_means=bins.tolist(),
    )


def stationarity_test(p: ModelParams, c: CouplingField | None, update_mix: float,
                      n_compound: int = 1_000_000, seed: int = 0, exact: np.ndarray | None = None,
                      min_expected: float = 5.0) -> dict:
    """Chi-square test of long-run state frequencies against the exact Boltzmann law.

    Successive states are correlated, so the recorded series is thinned to
    one state per ``ceil(10 * tau)`` compound sweeps, with ``tau`` the largest
    integrated autocorrelation time among M, M^2 and the energy.  Cells
    with expected count below ``min_expected`` are pooled.
    """
    from srwalk.oracle import exact_distribution, spin_states

    if c is None:
        c = CouplingField(p)
    if exact is None:
        exact = exact_distribution(p, c)
    state = new_state(c, seed, "random")
    advance(state, c, p.beta, 1000, update_mix=update_mix)
    res = advance(state, c, p.beta, n_compound, update_mix=update_mix, record_code=True)
    codes = res["codes"]
    S = spin_states(p.N).astype(np.float64)
    M = S.sum(axis=1)
    E = 0.5 * np.einsum("si,ij,sj->s", S, c.dense(), S)
    taus = [binning_analysis(obs[codes], min_bins=64)["tau_int"] for obs in (M, M * M, E)]
    tau = max(taus)
    step = int(math.ceil(10 * tau))
    thinned = codes[::step]
    counts = np.bincount(thinned, minlength=exact.size).astype(np.float64)
    expected = exact * thinned.size
    order = np.argsort(expected, kind="stable")
    n_small = int(np.count_nonzero(expected < min_expected))
    while 0 < n_small < order.size and expected[order[:n_small]].sum() < min_expected:
        n_small += 1
    small = order[:n_small]
    keep = np.sort(order[n_small:])
    obs = list(counts[keep])
    exp_ = list(expected[keep])
    if small.size:
        obs.append(counts[small].sum())
        exp_.append(expected[small].sum())
    obs = np.asarray(obs)
    exp_ = np.asarray(exp_)
    exp_ *= obs.sum() / exp_.sum()
    chi2, pval = stats.chisquare(obs, exp_)
    return {"chi2": float(chi2), "p_value": float(pval), "dof": obs.size - 1, "tau": tau,
            "stride": step, "n_samples": int(thinned.size),
            "acceptance": res["accepted"] / res["proposed"] if res["proposed"] else 1.0,
            "mean_cluster_size": res["cluster_sum"] / max(res["clusters"], 1)}
