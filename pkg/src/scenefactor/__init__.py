"""Phasor hypervector scene encoding with convolutional sparse coding and resonator factorization."""

from .encoder import PIXEL, SPARSE, build_codebooks, make_context, make_object_template
from .errors import ConfigError, NumericFailure
from .hdcore import Codebook, bind, fpe_base, fpe_power, normalize, random_phasor, similarity
from .multi import explain_away, factorize_multi, graded_accuracy
from .resonator import StoppingCriterion, brute_force, run
from .sparse import SparseConfig, infer_maps, learn_dictionary
from .whitening import WhiteningTransform, apply_whitening, fit_whitening

__version__ = "0.1.0"
