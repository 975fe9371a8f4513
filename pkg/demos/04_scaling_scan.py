"""Diffusive at small beta, ballistic at large beta.

Fit <w_N^2> ~ N^gamma across a range of N for several temperatures.
Takes about a minute.
"""

from srwalk import RunPlan, scan

res = scan([3.5], [0.0, 0.5, 1.0, 2.0, 5.0], [64, 128, 256, 512, 1024],
           RunPlan(n_therm=None, n_measure=5000, seed=11))
for r in res.records:
    f = r.fit
    print(f"beta={r.beta:<4} gamma={f.gamma:.3f} +- {f.gamma_err:.3f}  {r.regime}")
lo, hi = res.brackets[3.5]
print(f"largest diffusive beta: {lo}, smallest ballistic beta: {hi}")
if res.monotonicity_flags:
    print("non-monotone gamma:", res.monotonicity_flags)
