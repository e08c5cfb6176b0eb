"""Gaussian-process regression with spectral mixture (SM) and generalized
convolution spectral mixture (GCSM) kernels."""

from .errors import GcsmError
from .gp import Dataset, TrainedModel, load_model, nlml, nlml_and_grad, predict, save_model
from .hyperopt import BoConfig, FitConfig, bayes_opt, fit, init_hyperparams
from .kernels import (
    GCSM, KERNEL_KINDS, SE, SM, GcsmComponent, Kernel, Matern52, Periodic, SmComponent,
    eval_gcsm, eval_gcsm_cross, eval_sm, gram, kernel_from_dict,
)
from .spectral import Spectrum, gmm_init, periodogram

__version__ = "0.1.0"
