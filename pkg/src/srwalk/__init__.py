"""Self-repelling random walks on Z^2 and their long-range Ising chains."""

from srwalk.analysis import GammaFit, ScalingPoint, classify, fit_gamma, scan
from srwalk.coupling import (
    BoundFit,
    CouplingField,
    build_prefix,
    constant_K,
    coupling,
    coupling_row,
    fit_bounds,
)
from srwalk.model import (
    ModelParams,
    SpinChain,
    StepIncrements,
    Walk,
    end_to_end_sq,
    spin_energy,
    spins_to_walk,
    walk_energy,
    walk_to_spins,
)
from srwalk.oracle import (
    ExactResult,
    enumerate_spins,
    enumerate_walks,
    exact_distribution,
    griffiths_check,
)
from srwalk.sampler import (
    ChainState,
    RunPlan,
    SampleStats,
    cluster_update,
    metropolis_sweep,
    run,
)

__version__ = "0.1.0"
