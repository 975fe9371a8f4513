"""Exact enumeration of the walk ensemble (4^N walks) and the spin chain (2^N states).

The walk side never touches the spin representation: it builds every walk
step by step and accumulates ``exp(beta * E(walk))`` directly.  The spin
side runs a Gray-code sweep over the chain with the effective couplings.
Agreement of the two is the end-to-end check of the walk/spin mapping.

Spin state ``s`` (an integer in ``[0, 2^N)``) has ``sigma_{i+1} = +1`` when
bit ``i`` of ``s`` is set and ``-1`` otherwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from srwalk.coupling import CouplingField
from srwalk.model import STEP_VECTORS, ModelParams

__all__ = [
    "WALK_CAP",
    "SPIN_CAP",
    "DIST_CAP",
    "ExactResult",
    "GriffithsReport",
    "enumerate_walks",
    "enumerate_spins",
    "exact_distribution",
    "walk_distribution",
    "spin_states",
    "griffiths_check",
    "energy_identity_residual",
    "factorization_residual",
]

WALK_CAP = 12
SPIN_CAP = 20
DIST_CAP = 12
GRIFFITHS_CAP = 14


@dataclass
class ExactResult:
    params: ModelParams
    log_Z: float
    mean_omega_sq: float | None = None
    corr: np.ndarray | None = None
    mean_M_sq: float | None = None
    kind: str = "walk"

    @property
    def Z(self) -> float:
        return math.exp(self.log_Z)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params.to_dict(),
            "log_Z": self.log_Z,
            "mean_omega_sq": self.mean_omega_sq,
            "mean_M_sq": self.mean_M_sq,
            "corr": None if self.corr is None else self.corr.reshape(-1).tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ExactResult":
        p = ModelParams(**d["params"])
        corr = None
        if d.get("corr") is not None:
            corr = np.asarray(d["corr"], dtype=np.float64).reshape(p.N, p.N)
        return cls(p, d["log_Z"], d.get("mean_omega_sq"), corr, d.get("mean_M_sq"), d.get("kind", "walk"))


@numba.njit(cache=True)
def _walk_sums(N, alpha, beta, e_max, steps):
    # depth-first over all walks; E accumulated incrementally per added site
    V = np.zeros(N + 1)
    for d in range(1, N + 1):
        V[d] = float(d) ** (-alpha)
    px = np.zeros(N + 1, dtype=np.int64)
    py = np.zeros(N + 1, dtype=np.int64)
    energy = np.zeros(N + 1)
    choice = np.full(N + 1, -1, dtype=np.int64)
    z = 0.0
    s = 0.0
    m = 1
    while m > 0:
        choice[m] += 1
        if choice[m] == 4:
            choice[m] = -1
            m -= 1
            continue
        c = choice[m]
        x = px[m - 1] + steps[c, 0]
        y = py[m - 1] + steps[c, 1]
        px[m] = x
        py[m] = y
        e = energy[m - 1]
        for i in range(m):
            dx = x - px[i]
            dy = y - py[i]
            e += V[m - i] * (dx * dx + dy * dy)
        energy[m] = e
        if m == N:
            w = math.exp(beta * (e - e_max))
            z += w
            s += w * (x * x + y * y)
        else:
            m += 1
    return z, s


def _straight_walk_energy(N: int, alpha: float) -> float:
    # |w_i - w_j| <= |i - j|, so the straight walk has the largest energy
    d = np.arange(1, N + 1, dtype=np.float64)
    return math.fsum(((N + 1 - d) * d ** (2.0 - alpha)).tolist())


def enumerate_walks(p: ModelParams) -> ExactResult:
    if p.N > WALK_CAP:
        raise ValueError(f"walk enumeration is capped at N <= {WALK_CAP} (4^N states); got N={p.N}")
    e_max = _straight_walk_energy(p.N, p.alpha)
    z, s = _walk_sums(p.N, p.alpha, p.beta, e_max, STEP_VECTORS)
    log_Z = math.log(z) + p.beta * e_max
    return ExactResult(p, log_Z, mean_omega_sq=s / z, kind="walk")


def walk_distribution(p: ModelParams) -> np.ndarray:
    """Boltzmann probabilities of all 4^N walks, indexed by base-4 step codes.

    Step ``m`` (1-based) is digit ``m - 1`` of the index in base 4, codes
    0..3 meaning +e1, +e2, -e1, -e2.
    """
    if p.N > 8:
        raise ValueError(f"walk distribution is capped at N <= 8; got N={p.N}")
    n = 4**p.N
    codes = (np.arange(n)[:, None] // 4 ** np.arange(p.N)[None, :]) % 4
    pos = np.zeros((n, p.N + 1, 2), dtype=np.int64)
    pos[:, 1:, :] = np.cumsum(STEP_VECTORS[codes], axis=1)
    i, j = np.triu_indices(p.N + 1, k=1)
    V = (j - i).astype(np.float64) ** (-p.alpha)
    E = (((pos[:, i, :] - pos[:, j, :]) ** 2).sum(axis=2) * V).sum(axis=1)
    logw = p.beta * E
    logw -= logw.max()
    w = np.exp(logw)
    return w / w.sum()


def spin_states(N: int) -> np.ndarray:
    """All 2^N spin configurations as rows, in state-index order."""
    s = np.arange(2**N)[:, None]
    return np.where((s >> np.arange(N)[None, :]) & 1, 1, -1).astype(np.int8)


@numba.njit(cache=True)
def _gray_energies(U):
    N = U.shape[0]
    n = 1 << N
    sig = -np.ones(N)
    h = np.zeros(N)
    for i in range(N):
        for j in range(N):
            h[i] += U[i, j] * sig[j]
    e = 0.0
    for i in range(N):
        for j in range(i + 1, N):
            e += U[i, j]
    E = np.empty(n)
    state = 0
    E[0] = e
    for k in range(1, n):
        b = 0
        while not (k >> b) & 1:
            b += 1
        e -= 2.0 * sig[b] * h[b]
        old = sig[b]
        sig[b] = -old
        for j in range(N):
            h[j] -= 2.0 * old * U[j, b]
        state ^= 1 << b
        E[state] = e
    return E


@numba.njit(cache=True)
def _spin_moments(E, beta, e_max, N):
    n = E.shape[0]
    corr = np.zeros((N, N))
    z = 0.0
    sig = np.empty(N)
    for s in range(n):
        w = math.exp(beta * (E[s] - e_max))
        z += w
        for i in range(N):
            sig[i] = 1.0 if (s >> i) & 1 else -1.0
        for i in range(N):
            wi = w * sig[i]
            for j in range(i + 1, N):
                corr[i, j] += wi * sig[j]
    for i in range(N):
        corr[i, i] = z
        for j in range(i + 1, N):
            corr[j, i] = corr[i, j]
    return z, corr / z


def _log_weights(beta: float, E: np.ndarray) -> tuple[np.ndarray, float]:
    lw = beta * E
    top = lw.max()
    return lw - top, top


def enumerate_spins(p: ModelParams, c: CouplingField | None = None, scale: float = 1.0) -> ExactResult:
    """Exact spin correlations under ``exp(beta * scale * sum_{i<j} U_ij s_i s_j)``."""
    if p.N > SPIN_CAP:
        raise ValueError(f"spin enumeration is capped at N <= {SPIN_CAP} (2^N states); got N={p.N}")
    if c is None:
        c = CouplingField(p)
    if c.N != p.N:
        raise ValueError(f"coupling N={c.N} does not match params N={p.N}")
    U = np.ascontiguousarray(c.dense()) * scale
    E = _gray_energies(U)
    # aligned states maximise a ferromagnetic energy
    e_max = float(U.sum() / 2)
    z, corr = _spin_moments(E, p.beta, e_max, p.N)
    log_Z = math.log(z) + p.beta * e_max
    return ExactResult(p, log_Z, corr=corr, mean_M_sq=float(corr.sum()), kind="spin")


def exact_distribution(p: ModelParams, c: CouplingField | None = None) -> np.ndarray:
    if p.N > DIST_CAP:
        raise ValueError(f"exact distribution is capped at N <= {DIST_CAP}; got N={p.N}")
    if c is None:
        c = CouplingField(p)
    E = _gray_energies(np.ascontiguousarray(c.dense()))
    lw, _ = _log_weights(p.beta, E)
    w = np.exp(lw)
    return w / w.sum()


@dataclass
class GriffithsReport:
    N: int
    alpha: float
    betas: list[float]
    scale: float
    correlations: dict[float, np.ndarray] = field(default_factory=dict)
    negative: list[tuple] = field(default_factory=list)
    beta_decreasing: list[tuple] = field(default_factory=list)
    coupling_decreasing: list[tuple] = field(default_factory=list)

    @property
    def violations(self) -> list[tuple]:
        return self.negative + self.beta_decreasing + self.coupling_decreasing

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        return (f"griffiths N={self.N} alpha={self.alpha} betas={self.betas}: "
                f"{len(self.negative)} negative, {len(self.beta_decreasing)} beta-decreasing, "
                f"{len(self.coupling_decreasing)} coupling-decreasing")


def _corr_all(S: np.ndarray, U: np.ndarray, beta: float) -> np.ndarray:
    E = 0.5 * np.einsum("si,ij,sj->s", S, U, S, optimize=True)
    lw, _ = _log_weights(beta, E)
    w = np.exp(lw)
    w /= w.sum()
    return (S * w[:, None]).T @ S


def griffiths_check(p: ModelParams, c: CouplingField | None, beta_grid, scale: float = 1.5,
                    tol: float = 1e-12, single_pairs: bool = True) -> GriffithsReport:
    """Correlation inequalities for the ferromagnetic chain, checked by enumeration.

    (a) ``<s_i s_j> >= 0``; (b) ``<s_i s_j>`` nondecreasing along ``beta_grid``;
    (c) multiplying all couplings by ``scale`` (and, with ``single_pairs``,
    raising each single coupling by the same factor) does not lower any
    correlation.  Violations beyond ``tol`` are listed in the report.
    """
    if p.N > GRIFFITHS_CAP:
        raise ValueError(f"griffiths check is capped at N <= {GRIFFITHS_CAP}; got N={p.N}")
    betas = [float(b) for b in beta_grid]
    if any(b1 < b0 for b0, b1 in zip(betas, betas[1:])):
        raise ValueError("beta_grid must be increasing")
    if c is None:
        c = CouplingField(p)
    U = np.array(c.dense())
    S = spin_states(p.N).astype(np.float64)
    rep = GriffithsReport(p.N, p.alpha, betas, scale)
    iu = np.triu_indices(p.N, k=1)
    prev = None
    for b in betas:
        C = _corr_all(S, U, b)
        rep.correlations[b] = C
        for i, j in zip(*np.nonzero(C < -tol)):
            if i < j:
                rep.negative.append(("negative", b, int(i) + 1, int(j) + 1, float(C[i, j])))
        if prev is not None:
            dec = C - prev[1] < -tol
            for i, j in zip(*np.nonzero(dec)):
                if i < j:
                    rep.beta_decreasing.append(("beta", prev[0], b, int(i) + 1, int(j) + 1,
                                                float(C[i, j] - prev[1][i, j])))
        prev = (b, C)
        if b == 0:
            continue
        Cs = _corr_all(S, U * scale, b)
        for i, j in zip(*np.nonzero(Cs - C < -tol)):
            if i < j:
                rep.coupling_decreasing.append(("scale", b, scale, int(i) + 1, int(j) + 1,
                                                float(Cs[i, j] - C[i, j])))
        if single_pairs:
            for a, bb in zip(*iu):
                Up = U.copy()
                Up[a, bb] *= scale
                Up[bb, a] *= scale
                Cp = _corr_all(S, Up, b)
                bad = (Cp - C)[iu] < -tol
                for k in np.nonzero(bad)[0]:
                    rep.coupling_decreasing.append(("pair", b, (int(a) + 1, int(bb) + 1),
                                                    int(iu[0][k]) + 1, int(iu[1][k]) + 1,
                                                    float((Cp - C)[iu][k])))
    return rep


def _all_walk_codes(N: int) -> np.ndarray:
    n = 4**N
    return (np.arange(n)[:, None] // 4 ** np.arange(N)[None, :]) % 4


def energy_identity_residual(p: ModelParams, c: CouplingField | None = None) -> float:
    """Largest ``|E_walk - (E_spin(s) + E_spin(t) + K_N)|`` over all 4^N walks."""
    from srwalk.coupling import constant_K
    from srwalk.model import STEP_SPINS

    if p.N > 8:
        raise ValueError(f"energy identity check is capped at N <= 8; got N={p.N}")
    if c is None:
        c = CouplingField(p)
    codes = _all_walk_codes(p.N)
    pos = np.zeros((codes.shape[0], p.N + 1, 2), dtype=np.int64)
    pos[:, 1:, :] = np.cumsum(STEP_VECTORS[codes], axis=1)
    i, j = np.triu_indices(p.N + 1, k=1)
    V = (j - i).astype(np.float64) ** (-p.alpha)
    e_walk = (((pos[:, i, :] - pos[:, j, :]) ** 2).sum(axis=2) * V).sum(axis=1)
    spins = STEP_SPINS[codes].astype(np.float64)
    U = c.dense()
    s, t = spins[..., 0], spins[..., 1]
    e_spin = 0.5 * (np.einsum("wi,ij,wj->w", s, U, s) + np.einsum("wi,ij,wj->w", t, U, t))
    return float(np.max(np.abs(e_walk - e_spin - constant_K(p))))


def factorization_residual(p: ModelParams, c: CouplingField | None = None) -> float:
    """Largest ``|P(walk) - P(s) P(t)|`` over all walks, from two separate enumerations."""
    from srwalk.model import STEP_SPINS

    if p.N > 6:
        raise ValueError(f"factorization check is capped at N <= 6; got N={p.N}")
    if c is None:
        c = CouplingField(p)
    pw = walk_distribution(p)
    ps = exact_distribution(p, c)
    codes = _all_walk_codes(p.N)
    bits = 1 << np.arange(p.N)
    spins = STEP_SPINS[codes]
    si = ((spins[..., 0] > 0) * bits).sum(axis=1)
    ti = ((spins[..., 1] > 0) * bits).sum(axis=1)
    return float(np.max(np.abs(pw - ps[si] * ps[ti])))
