"""Exponential-covariance Gaussian process: Vecchia likelihood, Fisher scoring, local kriging."""
from .covariance import GPParams, covariance, covariance_matrix, pairwise_distances
from .fisher import GPFit, default_init, fit_fisher_scoring, ols
from .kriging import local_krige, predict_category
from .ordering import VecchiaConfig, maxmin_order, nn_conditioning, vecchia_config
from .vecchia import profile_loglik, score_and_information, vecchia_loglik

__all__ = [
    "GPParams", "GPFit", "VecchiaConfig", "covariance", "covariance_matrix", "pairwise_distances",
    "maxmin_order", "nn_conditioning", "vecchia_config", "vecchia_loglik", "profile_loglik",
    "score_and_information", "fit_fisher_scoring", "default_init", "ols", "local_krige",
    "predict_category",
]
