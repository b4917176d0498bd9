from spect_bayes.bayes.chains import run_chains
from spect_bayes.bayes.diagnostics import effective_sample_size, split_rhat
from spect_bayes.bayes.hmc import ChainState, init_state, leapfrog
from spect_bayes.bayes.nuts import NutsConfig, SampleChain, SamplerError, nuts_sample
from spect_bayes.bayes.posterior import (
    PosteriorModel,
    from_unconstrained,
    grad_log_posterior,
    log_jacobian,
    log_posterior,
    to_unconstrained,
)

__all__ = [
    "ChainState",
    "NutsConfig",
    "PosteriorModel",
    "SampleChain",
    "SamplerError",
    "effective_sample_size",
    "from_unconstrained",
    "grad_log_posterior",
    "init_state",
    "leapfrog",
    "log_jacobian",
    "log_posterior",
    "nuts_sample",
    "run_chains",
    "split_rhat",
    "to_unconstrained",
]
