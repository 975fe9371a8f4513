"""Effective spin-spin coupling of the self-repelling walk.

Summing the walk potential ``V_kl = |k-l|^-alpha`` over every time pair
``(k, l)`` that encloses steps ``i < j`` gives the ferromagnetic coupling

    U_ij = sum_{k=0}^{i-1} sum_{l=j}^{N} |l - k|^-alpha,   1 <= i < j <= N.

Everything here is evaluated from a compensated prefix table of
``d^-alpha`` so that range sums keep full relative precision even for
the far-apart, tiny couplings.
"""

from __future__ import annotations

import math
import threading
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import special

from srwalk.model import ModelParams, OutsideRangeWarning

__all__ = [
    "PrefixTable",
    "CouplingField",
    "BoundFit",
    "build_prefix",
    "coupling",
    "coupling_row",
    "constant_K",
    "fit_bounds",
    "infinite_volume_coupling",
]

DENSE_LIMIT = 2048


@numba.njit(cache=True)
def _compensated_prefix(alpha, n):
    hi = np.zeros(n + 1)
    lo = np.zeros(n + 1)
    s = 0.0
    c = 0.0
    for d in range(1, n + 1):
        x = float(d) ** (-alpha)
        t = s + x
        # exact rounding error of s + x (Knuth two-sum)
        bp = t - s
        err = (s - (t - bp)) + (x - bp)
        s = t
        c += err
        hi[d] = s
        lo[d] = c
    return hi, lo


@dataclass(frozen=True, eq=False)
class PrefixTable:
    """``P[m] = sum_{d=1}^m d^-alpha`` stored as an unevaluated sum ``hi + lo``."""

    alpha: float
    N: int
    P: np.ndarray
    lo: np.ndarray

    def range_sum(self, a, b):
        """``sum_{d=a+1}^{b} d^-alpha`` for ``0 <= a <= b <= N``; vectorised."""
        a = np.asarray(a)
        b = np.asarray(b)
        # both P values lie in [1, zeta(alpha)) < 2, so hi[b] - hi[a] is exact
        return (self.P[b] - self.P[a]) + (self.lo[b] - self.lo[a])

    def value(self, m):
        return self.P[m] + self.lo[m]


def build_prefix(alpha: float, N: int, strict: bool = False) -> PrefixTable:
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if alpha <= 2:
        msg = f"alpha={alpha} <= 2: couplings are not summable"
        if strict:
            raise ValueError(msg)
        warnings.warn(msg, OutsideRangeWarning, stacklevel=2)
    hi, lo = _compensated_prefix(float(alpha), int(N))
    hi.setflags(write=False)
    lo.setflags(write=False)
    return PrefixTable(float(alpha), int(N), hi, lo)


def _second_tail(alpha: float, top: int) -> np.ndarray:
    """``F2[m] = sum_{t>=m} (t-m+1) t^-alpha`` for ``m = 1..top`` (index 0 unused)."""
    m = np.arange(1, top + 2, dtype=np.float64)
    F1 = special.zeta(alpha, m)
    F2 = np.empty(top + 2)
    F2[top] = special.zeta(alpha - 1.0, float(top)) - (top - 1) * special.zeta(alpha, float(top))
    for k in range(top - 1, 0, -1):
        F2[k] = F2[k + 1] + F1[k - 1]
    F2[0] = np.nan
    F2[top + 1] = F2[top] - F1[top - 1]
    return F2


def infinite_volume_coupling(alpha: float, d) -> np.ndarray:
    """Coupling at distance ``d`` deep in the bulk: ``sum_{a,b>=1} (d+a+b-1)^-alpha``.

    It bounds ``U_ij`` from above for every ``N`` and every pair at distance ``d``.
    """
    d = np.asarray(d, dtype=np.float64)
    m = d + 1.0
    return special.zeta(alpha - 1.0, m) - d * special.zeta(alpha, m)


class CouplingField:
    """Couplings ``U_ij`` for one ``(N, alpha)`` with a bounded row cache.

    Rows are computed in O(N) from the prefix table and kept in an LRU cache
    capped at ``cache_bytes``.  ``materialize=True`` builds the dense matrix
    up front.  All public reads are safe from several threads.
    """

    def __init__(self, params: ModelParams, prefix: PrefixTable | None = None,
                 cache_bytes: int = 64 * 2**20, materialize: bool = False):
        self.params = params
        self.N = params.N
        self.alpha = params.alpha
        if prefix is None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", OutsideRangeWarning)
                prefix = build_prefix(params.alpha, params.N)
        if prefix.N < self.N or prefix.alpha != self.alpha:
            raise ValueError("prefix table does not cover this (alpha, N)")
        self.prefix = prefix
        self._max_rows = max(1, cache_bytes // (8 * self.N))
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()
        self._lock = threading.Lock()
        self._dense: np.ndarray | None = None
        self._tail2: np.ndarray | None = None
        if materialize:
            self.dense()

    def __repr__(self):
        return f"CouplingField(N={self.N}, alpha={self.alpha})"

    def _check(self, i: int, j: int):
        if not (1 <= i <= self.N and 1 <= j <= self.N) or i == j:
            raise ValueError(f"need distinct indices in [1, {self.N}], got ({i}, {j})")

    def coupling(self, i: int, j: int) -> float:
        self._check(i, j)
        if i > j:
            i, j = j, i
        N = self.N
        # U^N_ij = U^N_{N+1-j, N+1-i}; use whichever side has fewer outer terms
        if N + 1 - j < i:
            i, j = N + 1 - j, N + 1 - i
        k = np.arange(i)
        terms = self.prefix.range_sum(j - 1 - k, N - k)
        return math.fsum(terms.tolist())

    def _compute_row(self, i: int) -> np.ndarray:
        N = self.N
        pt = self.prefix
        row = np.zeros(N)
        if i < N:
            j = np.arange(i + 1, N + 1)
            inc = pt.range_sum(j - i, j)
            row[i:] = np.cumsum(inc[::-1])[::-1]
        if i > 1:
            j = np.arange(1, i)
            inc = pt.range_sum(i - j, N - j + 1)
            row[: i - 1] = np.cumsum(inc)
        return row

    def row(self, i: int) -> np.ndarray:
        """``U_{i, j}`` for ``j = 1..N`` as an array indexed ``j - 1``; the diagonal entry is 0."""
        if not 1 <= i <= self.N:
            raise ValueError(f"row index must be in [1, {self.N}], got {i}")
        if self._dense is not None:
            return self._dense[i - 1]
        with self._lock:
            r = self._rows.get(i)
            if r is not None:
                self._rows.move_to_end(i)
                return r
        r = self._compute_row(i)
        r.setflags(write=False)
        with self._lock:
            self._rows[i] = r
            while len(self._rows) > self._max_rows:
                self._rows.popitem(last=False)
        return r

    def dense(self) -> np.ndarray:
        """Full symmetric N x N matrix with zero diagonal (O(N^2) memory)."""
        with self._lock:
            if self._dense is None:
                U = np.empty((self.N, self.N))
                for i in range(1, self.N + 1):
                    U[i - 1] = self._compute_row(i)
                # rows come from two different recurrences; enforce exact symmetry
                U = 0.5 * (U + U.T)
                U.setflags(write=False)
                self._dense = U
                self._rows.clear()
            return self._dense

    @property
    def tail2(self) -> np.ndarray:
        """Second tail sums used for O(1) evaluation of arbitrary pairs."""
        with self._lock:
            if self._tail2 is None:
                t = _second_tail(self.alpha, self.N + 2)
                t.setflags(write=False)
                self._tail2 = t
            return self._tail2

    def fast(self, i, j) -> np.ndarray:
        """Vectorised O(1)-per-pair coupling via inclusion-exclusion of second tails.

        Accurate to roughly ``1e-16 * (N / |i-j|)^2`` relative; meant for the
        sampler, not for reference values.
        """
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        lo = np.minimum(i, j)
        hi = np.maximum(i, j)
        F2 = self.tail2
        d = hi - lo
        A = lo
        B = self.N - hi + 1
        return (F2[d + 1] - F2[d + A + 1]) - (F2[d + B + 1] - F2[d + A + B + 1])

    def pair_energy(self, spins) -> float:
        s = np.asarray(spins, dtype=np.float64)
        if s.size != self.N:
            raise ValueError(f"expected {self.N} spins, got {s.size}")
        if self._dense is not None or self.N <= DENSE_LIMIT:
            return float(0.5 * s @ self.dense() @ s)
        total = 0.0
        for i in range(1, self.N):
            total += s[i - 1] * float(self._compute_row(i)[i:] @ s[i:])
        return total

    def majorant_constant(self, start: float = 0.0) -> float:
        """Smallest ``c >= start`` with ``U_ij <= c |i-j|^(2-alpha)`` for every pair.

        Uses the bulk envelope, which dominates every finite-N coupling at
        the same distance.
        """
        d = np.arange(1, self.N, dtype=np.float64)
        if d.size == 0:
            return max(start, 1.0)
        env = infinite_volume_coupling(self.alpha, d) * d ** (self.alpha - 2.0)
        return float(max(start, env.max()))


def coupling(i: int, j: int, c: CouplingField) -> float:
    return c.coupling(i, j)


def coupling_row(i: int, c: CouplingField) -> np.ndarray:
    return c.row(i)


def constant_K(p: ModelParams) -> float:
    """``K_N = sum_{d=1}^{N} (N+1-d) d^(1-alpha)``, the walk energy not carried by the spins."""
    d = np.arange(1, p.N + 1, dtype=np.float64)
    return math.fsum(((p.N + 1 - d) * d ** (1.0 - p.alpha)).tolist())


@dataclass(frozen=True)
class BoundFit:
    epsilon: float
    c1_hat: float
    c2_hat: float
    N: int = 0
    alpha: float = float("nan")
    n_pairs: int = 0
    outside_violations: int = 0
    worst_outside_ratio: float = 0.0
    negative_couplings: int = 0
    subsampled: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def spread(self) -> float:
        return self.c2_hat / self.c1_hat


def _bulk_sites(N: int, epsilon: float) -> np.ndarray:
    lo = math.ceil(epsilon * N - 1e-12)
    hi = math.floor((1.0 - epsilon) * N + 1e-12)
    return np.arange(max(lo, 1), min(hi, N) + 1)


def fit_bounds(c: CouplingField, epsilon: float = 0.1, max_full: int = 2048,
               max_rows: int = 1024) -> BoundFit:
    """Empirical constants of the bulk sandwich ``c1 d^(2-a) <= U_ij <= c2 d^(2-a)``.

    ``c1_hat``/``c2_hat`` are the min/max of ``U_ij |i-j|^(alpha-2)`` over
    bulk pairs ``eps N <= i < j <= (1-eps) N``.  Pairs outside the bulk are
    checked against ``0 <= U_ij <= c2_hat |i-j|^(2-alpha)``.  Above
    ``max_full`` sites, about ``max_rows`` evenly spaced rows are used.
    """
    N = c.N
    if not 0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 1/2), got {epsilon}")
    if epsilon * N < 2:
        raise ValueError(f"empty bulk: epsilon*N = {epsilon * N:.3g} < 2")
    bulk = _bulk_sites(N, epsilon)
    if bulk.size < 2:
        raise ValueError(f"empty bulk for N={N}, epsilon={epsilon}")
    subsampled = N > max_full
    if subsampled:
        rows = np.unique(np.linspace(1, N, max_rows).round().astype(np.int64))
    else:
        rows = np.arange(1, N + 1)
    in_bulk = np.zeros(N + 1, dtype=bool)
    in_bulk[bulk] = True
    j_all = np.arange(1, N + 1)
    power = c.alpha - 2.0
    rmin, rmax = np.inf, -np.inf
    n_pairs = 0
    outside = []  # (row, j array, ratio array) to test after c2_hat is known
    negatives = 0
    for i in rows:
        u = c._compute_row(int(i)) if c._dense is None else c.row(int(i))
        right = j_all > i
        jj = j_all[right]
        uu = u[i:]
        negatives += int(np.count_nonzero(uu < 0))
        ratio = uu * (jj - i).astype(np.float64) ** power
        if in_bulk[i]:
            mask = in_bulk[jj]
            if mask.any():
                rb = ratio[mask]
                rmin = min(rmin, rb.min())
                rmax = max(rmax, rb.max())
                n_pairs += rb.size
            outside.append(ratio[~mask])
        else:
            outside.append(ratio)
    if n_pairs == 0:
        raise ValueError(f"empty bulk for N={N}, epsilon={epsilon}")
    out = np.concatenate(outside) if outside else np.zeros(0)
    worst = float(out.max()) if out.size else 0.0
    violations = int(np.count_nonzero(out > rmax * (1 + 1e-12)))
    return BoundFit(
        epsilon=float(epsilon),
        c1_hat=float(rmin),
        c2_hat=float(rmax),
        N=N,
        alpha=c.alpha,
        n_pairs=n_pairs,
        outside_violations=violations,
        worst_outside_ratio=worst,
        negative_couplings=negatives,
        subsampled=subsampled,
    )
