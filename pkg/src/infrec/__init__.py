"""Influence-receptivity topic cascade model.

Cascades spread over per-cascade diffusion matrices
``A^c = B1 diag(m^c) B2^T`` built from nonnegative node-by-topic influence
(``B1``) and receptivity (``B2``) factors. The package simulates such
cascades, estimates the factors by maximum likelihood, provides NetRate and
TopicCascade baselines and a few diagnostics.
"""
from .baselines import NetRate, TopicCascade, fit_netrate, fit_topiccascade
from .diagnostics import (EvalReport, TheoryConstants, emit_embeddings, estimate_mu_L, evaluate,
                          hessian_column_block, stat_error_proxy, theory_constants)
from .estimation import (EstimationConfig, EstimationTrace, InfluenceReceptivity, auto_step_size,
                         cross_validate, estimate_hard_g2, estimate_prox_g1, initialize,
                         power_iteration, regularizer_g1, regularizer_g2)
from .exceptions import DataError, InfrecError, NumericalError, ShapeError
from .extensions import (estimate_numeric_friendship, estimate_unknown_topics, estimate_with_mask,
                         infer_topics, infer_topics_batch)
from .kernels import Exponential, Rayleigh, TransmissionKernel, get_kernel
from .likelihood import (cascade_loglik, dataset_negloglik, grad_wrt_A, grad_wrt_factors,
                         grad_wrt_theta, grad_wrt_topics)
from .model import (CascadeRecord, FactorPair, ModelDims, diffusion_matrix, hard_threshold,
                    project_simplex, subspace_distance, topic_matrices)
from .simulate import SyntheticConfig, generate_cascades, generate_dataset, generate_factors

__version__ = "0.1.0"

__all__ = [
    "CascadeRecord", "FactorPair", "ModelDims", "diffusion_matrix", "hard_threshold",
    "project_simplex", "subspace_distance", "topic_matrices",
    "Exponential", "Rayleigh", "TransmissionKernel", "get_kernel",
    "cascade_loglik", "dataset_negloglik", "grad_wrt_A", "grad_wrt_factors", "grad_wrt_theta",
    "grad_wrt_topics",
    "SyntheticConfig", "generate_cascades", "generate_dataset", "generate_factors",
    "EstimationConfig", "EstimationTrace", "InfluenceReceptivity", "auto_step_size",
    "cross_validate", "estimate_hard_g2", "estimate_prox_g1", "initialize", "power_iteration",
    "regularizer_g1", "regularizer_g2",
    "NetRate", "TopicCascade", "fit_netrate", "fit_topiccascade",
    "estimate_numeric_friendship", "estimate_unknown_topics", "estimate_with_mask",
    "infer_topics", "infer_topics_batch",
    "EvalReport", "TheoryConstants", "emit_embeddings", "estimate_mu_L", "evaluate",
    "hessian_column_block", "stat_error_proxy", "theory_constants",
    "DataError", "InfrecError", "NumericalError", "ShapeError",
]
