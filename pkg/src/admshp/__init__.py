"""ADM-SHP shrinkage estimation for the two-level Normal (Fay-Herriot) model."""

__version__ = "0.1.0"

from .adm import AdmFit, PearsonFamily, adm_fit, family_moments
from .estimators import (
    GroupInference,
    VarianceEstimate,
    adm_shp_fit,
    estimate_A_adm,
    estimate_A_mle,
    james_stein_B,
)
from .exceptions import *  # noqa: F401,F403
from .likelihood import LikelihoodProfile, adjusted_loglik, gls_beta, reml_loglik, reml_score
from .model import Dataset, GroupObservation, Hyperparameters, shrinkages, validate_dataset
from .posterior import PosteriorGrid, build_posterior, exact_B_moments, exact_theta_inference
from .simharness import (
    SimReport,
    SimSpec,
    baranchik_check,
    simulate_coverage,
    simulate_james_stein,
    simulate_risk,
)
