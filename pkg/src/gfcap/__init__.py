"""Feedback and nonfeedback capacity of stationary Gaussian channels with rational noise spectra."""

__version__ = "0.1.0"

from .spectra import (BlaschkeProduct, LaurentSeries, RationalSpectrum, StateSpace, autocovariances,
                      entropy_rate, factor_laurent_polynomial, is_anticausal, laurent_coeffs,
                      to_state_space, toeplitz_covariance)
from .riccati import DareError, DareSolution, dare_stabilizing, riccati_recursion, verify_dare_properties
from .waterfill import eigen_waterfill, nblock_nonfeedback, spectral_waterfill, verify_waterfill_conditions
from .fbcap import (FeedbackDesign, RationalFilter, SearchOptions, arma1_capacity, arma1_filter,
                    armak_capacity, feedback_capacity, verify_armak_sufficiency, verify_necessary,
                    verify_sufficiency, white_blaschke_filter)
from .nblock import NBlockSolution, feedback_gain, nblock_feedback, nblock_rank_check, verify_nblock_conditions
from .sksim import SkConfig, SkResult, decode_constellation, simulate_message_refinement, simulate_state_refinement
