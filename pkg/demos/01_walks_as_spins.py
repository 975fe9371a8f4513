"""Every lattice walk is a pair of spin chains.

Enumerate all 4^N walks and all 2^N spin states for a few small sizes and
show that the two routes give the same mean square end-to-end distance.
"""

from srwalk import ModelParams, enumerate_spins, enumerate_walks
from srwalk.model import walk_from_codes, walk_to_spins

walk = walk_from_codes([0, 0, 1, 2, 1])
sigma, sigma_t = walk_to_spins(walk)
print("walk      ", [tuple(int(v) for v in p) for p in walk.positions])
print("sigma     ", [int(v) for v in sigma.spins])
print("sigma-tilde", [int(v) for v in sigma_t.spins])
print()

print(f"{'N':>3} {'alpha':>6} {'beta':>5} {'<w^2> walks':>16} {'<M^2> spins':>16}")
for N in (4, 6, 8):
    for beta in (0.0, 0.5, 2.0):
        p = ModelParams(N, 3.5, beta)
        w, s = enumerate_walks(p), enumerate_spins(p)
        print(f"{N:>3} {p.alpha:>6} {beta:>5} {w.mean_omega_sq:>16.12f} {s.mean_M_sq:>16.12f}")
