"""Monte Carlo engines: spin chains and the current-trace sampler."""
from .chains import Interrupted, run_ising_chain, run_phi4_chain
from .common import ChainOutput, SamplerConfig, SamplerError, merge_outputs, sampling_graph
from .trace import SnEstimate, TraceSampler, TraceSamples, estimate_S_n_probability, sample_current_trace

__all__ = [
    "ChainOutput",
    "Interrupted",
    "SamplerConfig",
    "SamplerError",
    "SnEstimate",
    "TraceSampler",
    "TraceSamples",
    "estimate_S_n_probability",
    "merge_outputs",
    "run_ising_chain",
    "run_phi4_chain",
    "sample_current_trace",
    "sampling_graph",
]
