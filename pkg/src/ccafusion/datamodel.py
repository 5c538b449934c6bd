"""Matrix containers, centering/standardization and the CCA covariance algebra.

Data matrices follow the features x samples convention: ``X`` is ``p x n``
with one column per sample.  Covariances are *unnormalized* products
(``X @ X.T``); every ratio used downstream is invariant to that scale.
"""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionError, DomainError, SingularityError

__all__ = [
    "DataMatrix",
    "CovarianceTriple",
    "center",
    "standardize",
    "covariance_triple",
    "default_ridge",
    "inv_sqrtm",
    "sqrtm_psd",
    "whitened_coupling",
]

# relative eigenvalue floor below which a matrix is treated as singular
_SINGULAR_RTOL = 1e-13
_CONSTANT_ROW_STD = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DataMatrix:
    """One modality: a ``n_features x n_samples`` real matrix.

    Parameters
    ----------
    values : array_like, shape (p, n)
        Rows are features, columns are samples.
    centered : bool
        Whether every row has zero mean.
    feature_ids, sample_ids : sequence of str, optional
        Labels carried through CSV round trips.
    """

    values: np.ndarray
    centered: bool = False
    feature_ids: tuple = field(default=None, compare=False)
    sample_ids: tuple = field(default=None, compare=False)

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim == 1:
            values = _frozen(values[None, :])
        if values.ndim != 2 or values.size == 0:
            raise DimensionError(f"expected a non-empty 2-d matrix, got shape {values.shape}")
        if values.shape[1] < 2:
            raise DimensionError(f"need at least 2 samples, got {values.shape[1]}")
        object.__setattr__(self, "values", values)
        if self.feature_ids is not None:
            ids = tuple(str(f) for f in self.feature_ids)
            if len(ids) != values.shape[0]:
                raise DimensionError("feature_ids length does not match the number of rows")
            object.__setattr__(self, "feature_ids", ids)
        if self.sample_ids is not None:
            ids = tuple(str(s) for s in self.sample_ids)
            if len(ids) != values.shape[1]:
                raise DimensionError("sample_ids length does not match the number of columns")
            object.__setattr__(self, "sample_ids", ids)

    @property
    def n_features(self):
        return self.values.shape[0]

    @property
    def n_samples(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def select_samples(self, idx):
        """Return the sub-matrix made of the columns ``idx`` (centering state is dropped)."""
        idx = np.asarray(idx, dtype=int)
        sids = None if self.sample_ids is None else tuple(self.sample_ids[i] for i in idx)
        return DataMatrix(self.values[:, idx], centered=False,
                          feature_ids=self.feature_ids, sample_ids=sids)

    def with_values(self, values, centered=None):
        """Copy with new values of the same shape, keeping the labels."""
        return DataMatrix(values, centered=self.centered if centered is None else centered,
                          feature_ids=self.feature_ids, sample_ids=self.sample_ids)


@dataclass(frozen=True)
class CovarianceTriple:
    """Auto- and cross-covariances ``cxx = X Xᵀ``, ``cyy = Y Yᵀ``, ``cxy = X Yᵀ``."""

    cxx: np.ndarray
    cyy: np.ndarray
    cxy: np.ndarray
    n_samples: int = None

    def __post_init__(self):
        for name in ("cxx", "cyy", "cxy"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        p, q = self.cxy.shape
        if self.cxx.shape != (p, p) or self.cyy.shape != (q, q):
            raise DimensionError(
                f"inconsistent shapes cxx {self.cxx.shape}, cyy {self.cyy.shape}, cxy {self.cxy.shape}")

    @property
    def cyx(self):
        return self.cxy.T

    def scaled(self, factor):
        """All three matrices multiplied by ``factor`` (e.g. ``1/n`` for sample covariances)."""
        return CovarianceTriple(self.cxx * factor, self.cyy * factor, self.cxy * factor,
                                n_samples=self.n_samples)


def _as_data(X):
    return X if isinstance(X, DataMatrix) else DataMatrix(X)


def feature_means(X):
    return _as_data(X).values.mean(axis=1)


def center(X, means=None):
    """Subtract the per-feature mean from every row.

    ``means`` lets validation/test folds be centered with training statistics.
    """
    X = _as_data(X)
    mu = X.values.mean(axis=1) if means is None else np.asarray(means, dtype=float)
    if mu.shape != (X.n_features,):
        raise DimensionError(f"means has shape {mu.shape}, expected ({X.n_features},)")
    return X.with_values(X.values - mu[:, None], centered=means is None or X.centered)


def standardize(X, stats=None):
    """Row-wise z-scores with the population (divisor ``n``) standard deviation.

    Rows whose standard deviation is below ``1e-12`` are mapped to zero
    instead of raising.  ``stats=(means, stds)`` applies precomputed
    training statistics.
    """
    X = _as_data(X)
    v = X.values
    if stats is None:
        mu = v.mean(axis=1)
        sd = v.std(axis=1)
    else:
        mu, sd = (np.asarray(s, dtype=float) for s in stats)
    const = sd <= _CONSTANT_ROW_STD
    safe = np.where(const, 1.0, sd)
    z = (v - mu[:, None]) / safe[:, None]
    z[const, :] = 0.0
    return X.with_values(z, centered=stats is None)


def standardization_stats(X):
    v = _as_data(X).values
    return v.mean(axis=1), v.std(axis=1)


def covariance_triple(X, Y):
    """Unnormalized covariance products of two centered modalities."""
    X, Y = _as_data(X), _as_data(Y)
    if X.n_samples != Y.n_samples:
        raise DimensionError(f"sample counts differ: {X.n_samples} vs {Y.n_samples}")
    x, y = X.values, Y.values
    cxx = x @ x.T
    cyy = y @ y.T
    # enforce exact symmetry lost to accumulation order
    return CovarianceTriple(0.5 * (cxx + cxx.T), 0.5 * (cyy + cyy.T), x @ y.T,
                            n_samples=X.n_samples)


def default_ridge(c, n_samples=None):
    """Ridge pair ``(rx, ry)`` used when the auto-covariances must be singular.

    Zero when ``n_samples`` exceeds both dimensions, otherwise
    ``1e-6 * trace(C)/dim`` for each modality.
    """
    n = c.n_samples if n_samples is None else n_samples
    p, q = c.cxy.shape
    if n is not None and n > p and n > q:
        return 0.0, 0.0
    rx = 1e-6 * np.trace(c.cxx) / p if (n is None or p >= n) else 0.0
    ry = 1e-6 * np.trace(c.cyy) / q if (n is None or q >= n) else 0.0
    return float(rx), float(ry)


def _eigh_checked(C, ridge, name):
    C = np.asarray(C, dtype=float)
    w, V = np.linalg.eigh(C + ridge * np.eye(C.shape[0]))
    top = max(abs(w[-1]), np.finfo(float).tiny)
    if w[0] <= _SINGULAR_RTOL * top:
        raise SingularityError(
            f"{name} + ridge*I is not positive definite (smallest eigenvalue {w[0]:.3e})",
            smallest_eigenvalue=float(w[0]))
    if ridge > 0:
        w = np.maximum(w, ridge)
    return w, V


def inv_sqrtm(C, ridge=0.0, name="matrix"):
    """``(C + ridge I)^{-1/2}`` through a symmetric eigendecomposition."""
    w, V = _eigh_checked(C, ridge, name)
    return (V / np.sqrt(w)) @ V.T


def sqrtm_psd(C, ridge=0.0, name="matrix"):
    """``(C + ridge I)^{1/2}``, the inverse of :func:`inv_sqrtm`."""
    w, V = _eigh_checked(C, ridge, name)
    return (V * np.sqrt(w)) @ V.T


def _split_ridge(ridge):
    if np.ndim(ridge) == 0:
        r = float(ridge)
        rx = ry = r
    else:
        rx, ry = (float(r) for r in ridge)
    if rx < 0 or ry < 0:
        raise DomainError("ridge must be non-negative")
    return rx, ry


def whitened_coupling(c, ridge=0.0):
    """``(cxx + rI)^{-1/2} cxy (cyy + rI)^{-1/2}``.

    ``ridge`` is a scalar or an ``(rx, ry)`` pair.  Raises
    :class:`SingularityError` when a regularized auto-covariance is not
    positive definite.
    """
    rx, ry = _split_ridge(ridge)
    kx = inv_sqrtm(c.cxx, rx, "cxx")
    ky = inv_sqrtm(c.cyy, ry, "cyy")
    return kx @ c.cxy @ ky
