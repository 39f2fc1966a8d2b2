"""One-bit single-snapshot off-grid DOA estimation on sparse linear arrays."""

__version__ = "0.1.0"

from .geometry import (ArrayGeometry, DictionaryPair, GridSpec,
                       build_dictionary, effective_dictionary, make_geometry,
                       steering_derivative, steering_vector, ula)
from .simulate import (DatasetConfig, OneBitSnapshot, SourceScene, csgn,
                       generate_dataset, label_sample, simulate_snapshot,
                       snr_to_sigma)
from .solver import (SolverConfig, SolverState, compute_v, i_prime,
                     mills_ratio, solve, surrogate_cost, update_beta, update_x)
from .network import (NetArchitecture, SpectrumEstimate, WeightBundle,
                      block1_phase, block2_phase, forward, init_block,
                      mm_feature)
from .weightfile import WeightFormatError, load_weights, save_weights
from .evaluate import (EvalConfig, EvalReport, extract_doas, match_and_score,
                       run_monte_carlo, export_spectrum)

__all__ = [
    "ArrayGeometry", "DictionaryPair", "GridSpec", "build_dictionary",
    "effective_dictionary", "make_geometry", "steering_derivative",
    "steering_vector", "ula",
    "DatasetConfig", "OneBitSnapshot", "SourceScene", "csgn",
    "generate_dataset", "label_sample", "simulate_snapshot", "snr_to_sigma",
    "SolverConfig", "SolverState", "compute_v", "i_prime", "mills_ratio",
    "solve", "surrogate_cost", "update_beta", "update_x",
    "NetArchitecture", "SpectrumEstimate", "WeightBundle", "block1_phase",
    "block2_phase", "forward", "init_block", "mm_feature",
    "WeightFormatError", "load_weights", "save_weights",
    "EvalConfig", "EvalReport", "extract_doas", "match_and_score",
    "run_monte_carlo", "export_spectrum",
]
