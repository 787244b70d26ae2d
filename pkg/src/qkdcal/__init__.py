"""Key-rate bounds and Monte-Carlo tools for BB84 with a self-testing receiver."""
from .errors import DomainError, NoDataError, OutOfRegimeError, ValidationError
from .estimation import (
    DarkCountEstimate,
    EstimateResult,
    ReceiverAssumptions,
    TestCounts,
    TestSourceConfig,
    dark_count_bound,
    estimate_pipeline,
    eta_e_faint_laser,
    eta_e_single_photon,
    eta_t_faint_laser,
    eta_t_single_photon,
    zeta_total,
)
from .keyrate import (
    EveMixture,
    KeyRateInputs,
    RateResult,
    binary_entropy,
    mixture_averages,
    privacy_amp_bound,
    rate_avg_eta,
    rate_constant_eta,
    rate_estimated,
    rate_estimated_etamax,
)

__version__ = "0.1.0"
