"""Embedding-quality metrics: additional correlations, orthogonality diagnostics, MSE."""
import json
from dataclasses import dataclass

import numpy as np

from .cca import canonical_correlation
from .datamodel import DataMatrix
from .exceptions import DimensionError

__all__ = [
    "MetricReport",
    "additional_correlations",
    "cumulative_additional",
    "orthogonality_matrix",
    "mse",
]

_RESIDUAL_TOL = 1e-8


@dataclass
class MetricReport:
    """Per-run metrics.

    ``ortho_matrix[i, j]`` is the orthogonality value of weight pair ``j``
    against the cross-matrix after step ``i``; entries with ``i < j`` are
    ``nan`` (not applicable).
    """

    additional_rhos: np.ndarray
    ortho_matrix: np.ndarray = None
    mse: float = None

    @property
    def mean_additional(self):
        return float(np.mean(self.additional_rhos)) if len(self.additional_rhos) else float("nan")

    @property
    def sum_additional(self):
        return float(np.sum(self.additional_rhos))

    def to_dict(self):
        out = {
            "additional_rhos": [float(r) for r in self.additional_rhos],
            "mean_additional": self.mean_additional,
            "sum_additional": self.sum_additional,
            "mse": None if self.mse is None else float(self.mse),
        }
        if self.ortho_matrix is not None:
            out["ortho_matrix"] = [[None if np.isnan(a) else float(a) for a in row]
                                   for row in self.ortho_matrix]
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def ortho_csv(self):
        """The orthogonality grid as CSV text (blank cells for ``i < j``)."""
        k = self.ortho_matrix.shape[0]
        lines = ["step," + ",".join(f"w{j + 1}" for j in range(k))]
        for i, row in enumerate(self.ortho_matrix):
            cells = ["" if np.isnan(a) else repr(float(a)) for a in row]
            lines.append(f"{i + 1}," + ",".join(cells))
        return "\n".join(lines) + "\n"


def _values(X):
    return X.values if isinstance(X, DataMatrix) else np.asarray(X, dtype=float)


def additional_correlations(X, Y, emb):
    """Correlation contributed by the part of each weight pair that is new.

    For step ``k`` the weights are projected off the orthonormal bases
    ``R``/``S`` built from the previous steps, and the Pearson correlation
    of ``r_kᵀ X`` and ``s_kᵀ Y`` on the original data is reported.  A step
    whose residual norm is below ``1e-8`` contributes 0 and leaves the
    bases unchanged.
    """
    x, y = _values(X), _values(Y)
    U, V = emb.u_mat, emb.v_mat
    R = np.zeros((U.shape[0], 0))
    S = np.zeros((V.shape[0], 0))
    out = np.zeros(U.shape[1])
    for k in range(U.shape[1]):
        r = U[:, k] - R @ (R.T @ U[:, k])
        s = V[:, k] - S @ (S.T @ V[:, k])
        nr, ns = np.linalg.norm(r), np.linalg.norm(s)
        if nr < _RESIDUAL_TOL or ns < _RESIDUAL_TOL:
            continue
        r, s = r / nr, s / ns
        out[k] = canonical_correlation(r, s, x, y)
        R = np.column_stack([R, r])
        S = np.column_stack([S, s])
    return out


def cumulative_additional(rhos):
    """Running sum of additional correlations (the plotted curve)."""
    return np.cumsum(np.asarray(rhos, dtype=float))


def orthogonality_matrix(deflation_trace, emb):
    """``(||C_iᵀ u_j|| + ||C_i v_j||) / 2`` for every step ``i >= j``.

    ``deflation_trace`` is the sequence of cross-matrices recorded after
    each deflation step (a :class:`~ccafusion.deflation.DeflationTrace` is
    accepted too).
    """
    cross = getattr(deflation_trace, "cross", deflation_trace)
    k = emb.u_mat.shape[1]
    if len(cross) != k:
        raise DimensionError(f"trace has {len(cross)} matrices for {k} weight pairs")
    M = np.full((k, k), np.nan)
    for i in range(k):
        C = np.asarray(cross[i], dtype=float)
        for j in range(i + 1):
            M[i, j] = 0.5 * (np.linalg.norm(C.T @ emb.u_mat[:, j])
                             + np.linalg.norm(C @ emb.v_mat[:, j]))
    return M


def mse(pred, truth):
    """Mean over samples (columns) of the squared l2 error."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise DimensionError(f"shape mismatch {pred.shape} vs {truth.shape}")
    if pred.ndim == 1:
        pred, truth = pred[None, :], truth[None, :]
    return float(np.mean(np.sum((pred - truth) ** 2, axis=0)))
