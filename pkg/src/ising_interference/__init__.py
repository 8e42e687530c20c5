"""Causal inference under Curie-Weiss treatment interference on latent random networks.

Library layout:

- ising:      exact assignment samplers, conditional probabilities, fixed points
- network:    sparse-graphon graphs and exposure fractions
- outcomes:   response surfaces, full-DGP simulation, oracle predictand and kappas
- estimators: Hajek, unbiased IPW, and the pseudo-likelihood estimator of beta
- laws:       numerical CDFs/quantiles/samplers for every approximating law
- inference:  nonparametric learner, resampling kappa estimate, prediction intervals
- harness:    Monte Carlo coverage/length sweeps and diagnostics
- cli:        command-line front end
"""

from .ising import (
    BlockIsingParams,
    ConfigurationError,
    FixedPoints,
    IsingParams,
    TreatmentDraw,
    TreatmentSampler,
    conditional_prob,
    conditional_probs,
    definetti_sample,
    exposure_center,
    magnetization_log_pmf,
    magnetization_support,
    sample_block_treatments,
    sample_treatments,
    solve_fixed_points,
)
from .network import (
    Exposures,
    Graph,
    GraphonSpec,
    constant_kernel,
    dump_edge_list,
    exposures,
    generate_graph,
    leave_one_out_exposures,
    load_edge_list,
    sample_traits,
    smooth_kernel,
)
from .outcomes import (
    OracleKappas,
    OutcomeSpec,
    SimDataset,
    dgp_preset,
    dump_dataset_csv,
    load_dataset_csv,
    oracle_kappas,
    oracle_tau,
    realize_outcomes,
    simulate_dataset,
)
from .estimators import (
    DegenerateArmError,
    MpleResult,
    hajek,
    hajek_blockwise,
    ipw_unbiased,
    mple,
    mple_closed_form,
    mple_numeric,
    mple_pseudolik_argmax,
    pseudo_loglik,
)

__version__ = "0.1.0"
