"""Reference-guided extraction of one target source from a multichannel STFT."""
from .cast import CastConfig, CastTrace, make_generator, run_iterative_casting
from .eval import MetricReport, sdr_decomposition, si_sdr, snr
from .exceptions import DimensionError, SingularityError
from .extract import ExtractionResult, estimate_filter, run_sibf, scale_output
from .linalg import eig_hermitian, eig_min_vector, gev_max_vector, gev_min_vector
from .maxsnr import (
    DirectFilter,
    MaskPair,
    max_snr_bf,
    max_snr_bf_min_form,
    run_sibf_direct,
    solve_direct_min,
)
from .models import ModelConfig, normalize_reference
from .sim import SceneSpec, generate_scene, scenario_suite
from .tfr import StftConfig, istft, stft, zero_band_edges
from .whiten import MultichannelScene, WhitenedScene, compute_covariance, whiten_scene

__version__ = "0.1.0"
