"""Monte Carlo against exact enumeration.

At N=12 the spin chain is small enough to enumerate, so the sampler's
estimate of <M^2> can be compared with the exact answer for each update
scheme.
"""

from srwalk import ModelParams, RunPlan, enumerate_spins, run

for beta in (0.5, 2.0):
    p = ModelParams(12, 3.5, beta)
    exact = enumerate_spins(p).mean_M_sq
    print(f"beta={beta}: exact <M^2> = {exact:.4f}")
    for name, mix in (("metropolis", 0.0), ("cluster", 1.0), ("mixed", 0.5)):
        st = run(p, RunPlan(n_therm=1000, n_measure=50_000, update_mix=mix, seed=3))
        z = (st.mean_M_sq - exact) / st.err_M_sq
        print(f"  {name:<11} {st.mean_M_sq:8.4f} +- {st.err_M_sq:.4f}  z={z:+.2f}  "
              f"tau={st.tau_int:.1f}  acc={st.acceptance:.2f}  <|C|>={st.mean_cluster_size:.1f}")
