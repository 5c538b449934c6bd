"""Canonical correlation embeddings for two-modality data fusion.

Classical and penalized CCA (SCCA, GN-SCCA), four deflation schemes for
multi-dimensional embeddings, the Gaussian latent-variable model and its
posterior estimators, and the downstream MLP / CoxPH prediction heads.
"""
from .cca import CanonicalPair, canonical_correlation, cca_fit
from .datamodel import CovarianceTriple, DataMatrix, center, covariance_triple, standardize, whitened_coupling
from .deflation import (CCASolver, EmbeddingBasis, GNSCCASolver, SCCASolver, generate_embeddings,
                        hotelling_step, normalized_hotelling_step, orthogonalized_projected_step,
                        projected_step)
from .exceptions import (CCAError, ConfigError, ContractError, DataError, DegenerateError,
                         DimensionError, DomainError, SingularityError, TrainingError)
from .genmodel import ModelParams, posterior_joint, posterior_mixed, posterior_single, sample_dataset
from .metrics import MetricReport, additional_correlations, mse, orthogonality_matrix
from .pcca import GraphSpec, PenaltyConfig, gnscca_fit_pair, scca_fit_pair
from .predictors import (CoxModel, MLPModel, SurvivalRecord, concordance_index, coxph_fit,
                         mlp_fit, mlp_predict, risk_scores)
from .simulate import SimConfig, simulate

__version__ = "0.1.0"
