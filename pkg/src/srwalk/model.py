"""Walk and spin configurations of the self-repelling walk.

A walk of ``N`` unit steps on Z^2 is encoded step by step.  Each step
``mu`` is written as ``sigma * (e1 + e2) / 2 + sigma_t * (e1 - e2) / 2`` with
``sigma, sigma_t`` in {-1, +1}, which maps the four lattice steps one-to-one
onto pairs of Ising spins:

    +e1 -> (+1, +1)    +e2 -> (+1, -1)
    -e1 -> (-1, -1)    -e2 -> (-1, +1)

Under this map the walk energy splits into two independent spin chains
plus a configuration-independent constant (see :func:`walk_energy` and
:func:`spin_energy`).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from srwalk.coupling import CouplingField

__all__ = [
    "ModelParams",
    "Walk",
    "SpinChain",
    "StepIncrements",
    "OutsideRangeWarning",
    "STEP_VECTORS",
    "walk_to_spins",
    "spins_to_walk",
    "end_to_end_sq",
    "walk_energy",
    "spin_energy",
    "walk_from_codes",
]

# step code -> lattice vector; code order is +e1, +e2, -e1, -e2
STEP_VECTORS = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]], dtype=np.int64)
# step code -> (sigma, sigma_tilde)
STEP_SPINS = np.array([[1, 1], [1, -1], [-1, -1], [-1, 1]], dtype=np.int64)


class OutsideRangeWarning(UserWarning):
    """alpha lies outside 3 < alpha <= 4, where the two regimes are proven."""


@dataclass(frozen=True)
class ModelParams:
    N: int
    alpha: float
    beta: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if not self.beta >= 0:
            raise ValueError(f"beta must be >= 0, got {self.beta!r}")
        if not self.alpha > 2:
            raise ValueError(f"alpha must be > 2 for summable couplings, got {self.alpha!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))
        if not 3 < self.alpha <= 4:
            warnings.warn(
                f"alpha={self.alpha} is outside (3, 4]; results are not covered "
                "by the known diffusive/ballistic result",
                OutsideRangeWarning,
                stacklevel=3,
            )

    def with_beta(self, beta: float) -> "ModelParams":
        return ModelParams(self.N, self.alpha, beta)

    def to_dict(self) -> dict:
        return {"N": self.N, "alpha": self.alpha, "beta": self.beta}


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Walk:
    """Origin-rooted nearest-neighbour path, ``positions`` has shape (N+1, 2)."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.int64)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 2:
            raise ValueError("positions must have shape (N+1, 2) with N >= 1")
        if pos[0, 0] != 0 or pos[0, 1] != 0:
            raise ValueError("walk must start at the origin")
        steps = np.diff(pos, axis=0)
        if not np.all(np.abs(steps).sum(axis=1) == 1):
            raise ValueError("every step must be one of +-e1, +-e2")
        object.__setattr__(self, "positions", _frozen(pos))

    @property
    def N(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def steps(self) -> "StepIncrements":
        return StepIncrements(np.diff(self.positions, axis=0))

    def __eq__(self, other):
        if not isinstance(other, Walk):
            return NotImplemented
        return np.array_equal(self.positions, other.positions)

    def __hash__(self):
        return hash(self.positions.tobytes())


@dataclass(frozen=True, eq=False)
class SpinChain:
    spins: np.ndarray

    def __post_init__(self):
        s = np.array(self.spins, dtype=np.int64).reshape(-1)
        if s.size == 0:
            raise ValueError("spin chain must be non-empty")
        if not np.all(np.abs(s) == 1):
            raise ValueError("spins must be exactly +1 or -1")
        object.__setattr__(self, "spins", _frozen(s))

    @property
    def N(self) -> int:
        return self.spins.size

    @property
    def magnetization(self) -> int:
        return int(self.spins.sum())

    def __eq__(self, other):
        if not isinstance(other, SpinChain):
            return NotImplemented
        return np.array_equal(self.spins, other.spins)

    def __hash__(self):
        return hash(self.spins.tobytes())


@dataclass(frozen=True, eq=False)
class StepIncrements:
    steps: np.ndarray

    def __post_init__(self):
        st = np.array(self.steps, dtype=np.int64)
        if st.ndim != 2 or st.shape[1] != 2 or st.shape[0] == 0:
            raise ValueError("steps must have shape (N, 2) with N >= 1")
        if not np.all(np.abs(st).sum(axis=1) == 1):
            raise ValueError("every step must be one of +-e1, +-e2")
        object.__setattr__(self, "steps", _frozen(st))

    def to_walk(self) -> Walk:
        pos = np.vstack([np.zeros((1, 2), dtype=np.int64), np.cumsum(self.steps, axis=0)])
        return Walk(pos)


def walk_from_codes(codes: Sequence[int]) -> Walk:
    """Build a walk from step codes 0..3 (+e1, +e2, -e1, -e2)."""
    codes = np.asarray(codes, dtype=np.int64)
    return StepIncrements(STEP_VECTORS[codes]).to_walk()


def walk_to_spins(w: Walk) -> tuple[SpinChain, SpinChain]:
    steps = np.diff(w.positions, axis=0)
    # solving mu = s*(1,1)/2 + t*(1,-1)/2 gives s = mu_x + mu_y, t = mu_x - mu_y
    sigma = steps[:, 0] + steps[:, 1]
    sigma_t = steps[:, 0] - steps[:, 1]
    return SpinChain(sigma), SpinChain(sigma_t)


def spins_to_walk(s: SpinChain, st: SpinChain) -> Walk:
    if s.N != st.N:
        raise ValueError(f"spin chains differ in length: {s.N} != {st.N}")
    # integer form of the half-weights: mu_x = (s + t)/2, mu_y = (s - t)/2
    steps = np.column_stack([(s.spins + st.spins) // 2, (s.spins - st.spins) // 2])
    return StepIncrements(steps).to_walk()


def end_to_end_sq(w: Walk) -> int:
    x, y = w.positions[-1]
    return int(x * x + y * y)


def walk_energy(w: Walk, p: ModelParams) -> float:
    """Exponent of the walk weight without beta.

    ``E = sum_{0<=i<j<=N} |i-j|^-alpha * |w_i - w_j|^2``; larger E means a
    more spread-out walk and a larger Boltzmann weight ``exp(beta * E)``.
    """
    if w.N != p.N:
        raise ValueError(f"walk has {w.N} steps but params.N = {p.N}")
    pos = w.positions.astype(np.float64)
    idx = np.arange(p.N + 1)
    i, j = np.triu_indices(p.N + 1, k=1)
    d2 = ((pos[i] - pos[j]) ** 2).sum(axis=1)
    return float(np.sum(d2 * (idx[j] - idx[i]).astype(np.float64) ** (-p.alpha)))


def spin_energy(s: SpinChain, c: "CouplingField") -> float:
    """Ferromagnetic pair energy ``sum_{i<j} U_ij s_i s_j`` (that is, minus the Hamiltonian)."""
    if s.N != c.N:
        raise ValueError(f"chain length {s.N} does not match coupling N = {c.N}")
    return c.pair_energy(s.spins)
