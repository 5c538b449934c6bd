"""Two-modality latent Gaussian model and its posterior-mean estimators.

    z ~ N(0, I_d),   x | z ~ N(Wx z, sx² I_p),   y | z ~ N(Wy z, sy² I_q)

All estimators are linear maps ``z_hat = G @ obs`` and are built from the
information form ``(Wᵀ Ψ⁻¹ W + I)⁻¹ Wᵀ Ψ⁻¹``.
"""
from dataclasses import dataclass

import numpy as np

from .datamodel import DataMatrix
from .exceptions import DimensionError, DomainError, SingularityError

__all__ = [
    "ModelParams",
    "PosteriorEstimator",
    "MLEstimate",
    "sample_dataset",
    "posterior_single",
    "posterior_mixed",
    "posterior_joint",
    "estimation_error",
    "error_matrix",
    "mle_from_cca",
    "embed_for_posterior",
    "posterior_from_embeddings",
]

_RHO_CEIL = 1.0 - 1e-10


@dataclass(frozen=True)
class ModelParams:
    """Parameters ``(Wx, Wy, sigma_x, sigma_y)`` of the generative model."""

    wx: np.ndarray
    wy: np.ndarray
    sigma_x: float
    sigma_y: float

    def __post_init__(self):
        wx = np.atleast_2d(np.asarray(self.wx, dtype=float))
        wy = np.atleast_2d(np.asarray(self.wy, dtype=float))
        if wx.shape[1] != wy.shape[1]:
            raise DimensionError(f"latent dimensions differ: {wx.shape[1]} vs {wy.shape[1]}")
        if not (self.sigma_x > 0 and self.sigma_y > 0):
            raise DomainError("noise levels must be strictly positive")
        object.__setattr__(self, "wx", wx)
        object.__setattr__(self, "wy", wy)

    @property
    def d(self):
        return self.wx.shape[1]

    @property
    def p(self):
        return self.wx.shape[0]

    @property
    def q(self):
        return self.wy.shape[0]

    @property
    def w(self):
        """Stacked ``[Wx; Wy]``."""
        return np.vstack([self.wx, self.wy])

    @property
    def noise_variances(self):
        """Diagonal of the block noise covariance Ψ."""
        return np.concatenate([np.full(self.p, self.sigma_x ** 2),
                               np.full(self.q, self.sigma_y ** 2)])


@dataclass(frozen=True)
class PosteriorEstimator:
    """A linear latent estimator ``z_hat = g @ obs``.

    ``kind`` is one of ``"single_x"``, ``"single_y"``, ``"mixed"`` or
    ``"joint"``.  ``obs`` is ``x`` for single_x, ``y`` for single_y and the
    stacked ``[x; y]`` otherwise.
    """

    g: np.ndarray
    kind: str
    beta: float = None

    def __call__(self, obs):
        return self.g @ np.asarray(obs, dtype=float)

    def apply(self, x=None, y=None):
        if self.kind == "single_x":
            return self.g @ np.asarray(x, dtype=float)
        if self.kind == "single_y":
            return self.g @ np.asarray(y, dtype=float)
        return self.g @ np.concatenate([np.asarray(x, float), np.asarray(y, float)], axis=0)

    def stacked(self, p, q):
        """The ``d x (p+q)`` matrix acting on ``[x; y]``."""
        d = self.g.shape[0]
        if self.kind == "single_x":
            return np.hstack([self.g, np.zeros((d, q))])
        if self.kind == "single_y":
            return np.hstack([np.zeros((d, p)), self.g])
        return self.g


@dataclass(frozen=True)
class MLEstimate:
    """Maximum-likelihood parameters recovered from CCA.

    ``u_mat``/``v_mat`` hold the canonical weights rescaled to unit variate
    norm (``uᵀ Cxx u = 1``), which is the normalization the estimator
    formulas need.
    """

    wx_hat: np.ndarray
    wy_hat: np.ndarray
    mx: np.ndarray
    my: np.ndarray
    p_diag: np.ndarray
    u_mat: np.ndarray
    v_mat: np.ndarray
    psi_x_hat: np.ndarray = None
    psi_y_hat: np.ndarray = None


def sample_dataset(params, n, seed):
    """Draw ``n`` i.i.d. samples; returns ``(Z, X, Y)`` with ``Z`` of shape ``(d, n)``."""
    if n < 1:
        raise DomainError("n must be at least 1")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((params.d, n))
    ex = rng.standard_normal((params.p, n))
    ey = rng.standard_normal((params.q, n))
    x = params.wx @ Z + params.sigma_x * ex
    y = params.wy @ Z + params.sigma_y * ey
    if n >= 2:
        return Z, DataMatrix(x), DataMatrix(y)
    return Z, x, y


def _information_gain(w, noise_var):
    """``(Wᵀ Ψ⁻¹ W + I)⁻¹ Wᵀ Ψ⁻¹`` for diagonal Ψ given by ``noise_var``."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    wt_psi = w.T / noise_var
    prec = wt_psi @ w + np.eye(w.shape[1])
    return np.linalg.solve(prec, wt_psi)


def posterior_single(w, sigma, kind="single_x"):
    """Posterior mean map ``E[z | obs]`` from one modality with isotropic noise ``sigma``."""
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    w = np.atleast_2d(np.asarray(w, dtype=float))
    g = _information_gain(w, np.full(w.shape[0], float(sigma) ** 2))
    return PosteriorEstimator(g, kind)


def posterior_mixed(gx, gy, beta):
    """``beta * E[z|x] + (1 - beta) * E[z|y]`` as a single block map on ``[x; y]``."""
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta must lie in [0, 1], got {beta}")
    g = np.hstack([beta * gx.g, (1.0 - beta) * gy.g])
    return PosteriorEstimator(g, "mixed", beta=float(beta))


def posterior_joint(params):
    """Posterior mean map ``E[z | (x, y)]`` using both modalities."""
    return PosteriorEstimator(_information_gain(params.w, params.noise_variances), "joint")


def error_matrix(est, params):
    """``K = G W - I``, the bias operator of a linear estimator."""
    G = est.stacked(params.p, params.q)
    return G @ params.w - np.eye(params.d)


def estimation_error(est, params, z):
    """Conditional MSE ``E[||G [x;y] - z||² | z]`` in closed form.

    Equals ``zᵀ Kᵀ K z + tr(G Ψ Gᵀ)`` with ``K = G W - I``.
    """
    G = est.stacked(params.p, params.q)
    if G.shape != (params.d, params.p + params.q):
        raise DimensionError(f"estimator shape {G.shape} does not match the model")
    z = np.asarray(z, dtype=float)
    bias = (G @ params.w - np.eye(params.d)) @ z
    variance = np.sum(G * G * params.noise_variances[None, :])
    return float(bias @ bias + variance)


def _pairs_to_mats(c, pairs):
    U = np.column_stack([np.asarray(pr.u, float) for pr in pairs])
    V = np.column_stack([np.asarray(pr.v, float) for pr in pairs])
    # rescale every column to unit variate norm
    sx = np.sqrt(np.einsum("ij,ik,kj->j", U, c.cxx, U))
    sy = np.sqrt(np.einsum("ij,ik,kj->j", V, c.cyy, V))
    if np.any(sx <= 0) or np.any(sy <= 0):
        raise SingularityError("a canonical weight has zero variate norm")
    U, V = U / sx, V / sy
    rho = np.einsum("ij,ik,kj->j", U, c.cxy, V)
    return U, V, rho


def mle_from_cca(c, pairs, mx_choice=None):
    """ML estimates ``Wx = Cxx U Mx``, ``Wy = Cyy V My`` with ``Mx Myᵀ = P``.

    Parameters
    ----------
    c : CovarianceTriple
        Covariances the pairs were fitted on.  Pass ``c.scaled(1/n)`` to
        obtain weights on the scale of the generating model.
    pairs : list of CanonicalPair
        The first ``d`` canonical pairs, any normalization.
    mx_choice : (d, d) array, optional
        Invertible ``Mx``; ``My`` follows from the constraint.  Defaults to
        the symmetric split ``Mx = My = P^{1/2}``.
    """
    pairs = list(pairs)
    if len(pairs) == 0:
        raise DomainError("at least one canonical pair is required")
    U, V, rho = _pairs_to_mats(c, pairs)
    rho = np.clip(rho, 0.0, None)
    P = np.diag(rho)
    if mx_choice is None:
        mx = my = np.diag(np.sqrt(rho))
    else:
        mx = np.asarray(mx_choice, dtype=float)
        if mx.shape != P.shape:
            raise DimensionError(f"mx_choice must be {P.shape}, got {mx.shape}")
        if np.linalg.matrix_rank(mx) < mx.shape[0]:
            raise DomainError("mx_choice is singular")
        my = np.linalg.solve(mx, P).T
    wx = c.cxx @ U @ mx
    wy = c.cyy @ V @ my
    return MLEstimate(wx_hat=wx, wy_hat=wy, mx=mx, my=my, p_diag=P, u_mat=U, v_mat=V,
                      psi_x_hat=c.cxx - wx @ wx.T, psi_y_hat=c.cyy - wy @ wy.T)


def embed_for_posterior(m, x, y):
    """CCA embeddings ``(Uᵀx, Vᵀy)`` in the normalization of ``m``."""
    return m.u_mat.T @ np.asarray(x, float), m.v_mat.T @ np.asarray(y, float)


def posterior_from_embeddings(emb_x, emb_y, m):
    """Joint posterior mean computed from the CCA embeddings alone.

    ``[Mx; My]ᵀ [[I, P], [P, I]]⁻¹ [Uᵀx; Vᵀy]``; accepts vectors or
    ``d x n`` batches.
    """
    rho = np.diag(m.p_diag).copy()
    if np.any(rho >= _RHO_CEIL):
        raise SingularityError(
            f"canonical correlation {rho.max():.12f} too close to 1; block matrix is singular")
    rho = np.clip(rho, 0.0, _RHO_CEIL)
    d = rho.size
    P = np.diag(rho)
    block = np.block([[np.eye(d), P], [P, np.eye(d)]])
    emb = np.concatenate([np.asarray(emb_x, float), np.asarray(emb_y, float)], axis=0)
    M = np.vstack([m.mx, m.my])
    return M.T @ np.linalg.solve(block, emb)
