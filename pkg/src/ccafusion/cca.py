"""Classical CCA through the SVD of the whitened coupling matrix."""
from dataclasses import dataclass, field

import numpy as np

from .datamodel import (DataMatrix, covariance_triple, default_ridge, inv_sqrtm,
                        sqrtm_psd, _split_ridge)
from .exceptions import DomainError

__all__ = ["CanonicalPair", "cca_fit", "canonical_correlation", "fix_sign", "CCAWhitener"]

_VARIATE_EPS = 1e-12
# singular values below this fraction of the largest are treated as rank deficiency
_RANK_RTOL = 1e-10


@dataclass
class CanonicalPair:
    """One pair of canonical weights.

    Attributes
    ----------
    u, v : ndarray
        Weights for the two modalities, unit l2 norm at module boundaries.
    rho : float
        Pearson correlation of the variates ``uᵀX`` and ``vᵀY``.
    iteration : int
        Index of the deflation step (or SVD rank) that produced the pair.
    converged : bool
        False when an iterative solver hit its iteration cap.
    degenerate : bool
        True for rank-deficient trailing pairs and collapsed solutions.
    history : list of float
        Objective value after every outer iteration (iterative solvers only).
    thresholds : tuple of float, optional
        Final soft-threshold levels ``(lam_u, lam_v)`` of SCCA.
    """

    u: np.ndarray
    v: np.ndarray
    rho: float
    iteration: int = 0
    converged: bool = True
    degenerate: bool = False
    history: list = field(default_factory=list)
    thresholds: tuple = None


def _values(X):
    return X.values if isinstance(X, DataMatrix) else np.asarray(X, dtype=float)


def fix_sign(u, v):
    """Flip ``(u, v)`` jointly so that the largest-magnitude entry of ``u`` is positive."""
    i = int(np.argmax(np.abs(u)))
    if u[i] < 0:
        return -u, -v
    return u, v


def _unit(a):
    nrm = np.linalg.norm(a)
    return a / nrm if nrm > 0 else a


def canonical_correlation(u, v, X, Y):
    """Pearson correlation of the variates ``uᵀX`` and ``vᵀY``.

    Returns 0 when either (mean-removed) variate has norm below ``1e-12``.
    """
    a = np.asarray(u, float) @ _values(X)
    b = np.asarray(v, float) @ _values(Y)
    a = a - a.mean()
    b = b - b.mean()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < _VARIATE_EPS or nb < _VARIATE_EPS:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


class CCAWhitener:
    """Whitening transforms of a training pair ``(X, Y)``.

    ``kx = (Cxx + rx I)^{-1/2}`` maps data to coordinates where the
    (regularized) auto-covariance is the identity; ``kx_inv`` maps back.
    """

    def __init__(self, X, Y, ridge=None):
        c = covariance_triple(X, Y)
        if ridge is None:
            ridge = default_ridge(c)
        self.ridge = _split_ridge(ridge)
        rx, ry = self.ridge
        self.cov = c
        self.kx = inv_sqrtm(c.cxx, rx, "cxx")
        self.ky = inv_sqrtm(c.cyy, ry, "cyy")
        self.kx_inv = sqrtm_psd(c.cxx, rx, "cxx")
        self.ky_inv = sqrtm_psd(c.cyy, ry, "cyy")

    def coupling(self):
        return self.kx @ self.cov.cxy @ self.ky


def cca_fit(X, Y, k, ridge=None):
    """Top-``k`` canonical pairs of two centered modalities.

    Parameters
    ----------
    X, Y : DataMatrix
        Centered data with the same number of samples.
    k : int
        Number of pairs, ``1 <= k <= min(p, q)``.
    ridge : float or (float, float), optional
        Regularization added to the auto-covariances before whitening.
        Defaults to :func:`ccafusion.datamodel.default_ridge`.

    Returns
    -------
    list of CanonicalPair
        Ordered by decreasing singular value.  Weights are unit l2 with the
        sign fixed by :func:`fix_sign`; ``rho`` is the variate correlation.
        Pairs beyond the numerical rank come back with ``rho = 0`` and
        ``degenerate = True``.
    """
    x, y = _values(X), _values(Y)
    p, q = x.shape[0], y.shape[0]
    if not 1 <= k <= min(p, q):
        raise DomainError(f"k must lie in [1, {min(p, q)}], got {k}")
    wh = CCAWhitener(X, Y, ridge)
    Ut, s, Vt = np.linalg.svd(wh.coupling(), full_matrices=False)
    pairs = []
    for j in range(k):
        u = _unit(wh.kx @ Ut[:, j])
        v = _unit(wh.ky @ Vt[j])
        u, v = fix_sign(u, v)
        deficient = s[j] <= _RANK_RTOL * max(s[0], np.finfo(float).tiny)
        rho = 0.0 if deficient else canonical_correlation(u, v, x, y)
        pairs.append(CanonicalPair(u, v, rho, iteration=j + 1, degenerate=bool(deficient)))
    return pairs
