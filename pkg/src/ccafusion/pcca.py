"""Penalized CCA: sparse CCA (SCCA) and graph-net sparse CCA (GN-SCCA).

Both solvers treat the auto-covariances as identity and work on the
cross-product matrix ``C = X Yᵀ`` only, alternating between ``u`` and ``v``
updates until the objective stalls.

SCCA solves::

    max uᵀ C v   s.t.  ||u||₂ <= 1, ||v||₂ <= 1, ||u||₁ <= c1, ||v||₁ <= c2

each half-step being a soft-threshold whose level is found by bisection.

GN-SCCA uses, for the ``u`` half-step with ``a = C v``::

    min_u  -uᵀa + l1 ||u||₁ + (lg / 2) uᵀ L u + ½ ||u||₂²

solved by cyclic coordinate descent and followed by rescaling to unit norm.
"""
from dataclasses import dataclass, field

import numpy as np

from .cca import CanonicalPair, canonical_correlation, fix_sign
from .datamodel import DataMatrix
from .exceptions import DataError, DegenerateError, DimensionError, DomainError

__all__ = [
    "PenaltyConfig",
    "GraphSpec",
    "soft_threshold",
    "l1_constrained_direction",
    "leading_right_singular_vector",
    "scca_fit_pair",
    "scca_fit_cross",
    "gnscca_fit_pair",
    "gnscca_fit_cross",
    "graph_coordinate_descent",
    "graph_from_covariance",
    "load_edge_list",
    "save_edge_list",
]

_BISECTION_STEPS = 50
_DENSE_SVD_LIMIT = 4_000_000


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty weights and stopping rules for the pCCA solvers.

    ``c1``/``c2`` are l1 budgets for SCCA; ``None`` means the inactive
    budget ``sqrt(dim)``.  The ``lambda_*`` fields parameterize GN-SCCA.
    """

    c1: float = None
    c2: float = None
    lambda_graph_u: float = 0.0
    lambda_graph_v: float = 0.0
    lambda_l1_u: float = 0.0
    lambda_l1_v: float = 0.0
    tol: float = 1e-6
    max_iter: int = 100
    inner_tol: float = 1e-8
    inner_max_iter: int = 500

    def __post_init__(self):
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be at least 1")
        for name in ("lambda_graph_u", "lambda_graph_v", "lambda_l1_u", "lambda_l1_v"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")

    def budgets(self, p, q):
        c1 = np.sqrt(p) if self.c1 is None else float(self.c1)
        c2 = np.sqrt(q) if self.c2 is None else float(self.c2)
        if not 1.0 <= c1 <= np.sqrt(p) + 1e-12:
            raise DomainError(f"c1={c1} outside the feasible range [1, sqrt({p})]")
        if not 1.0 <= c2 <= np.sqrt(q) + 1e-12:
            raise DomainError(f"c2={c2} outside the feasible range [1, sqrt({q})]")
        return c1, c2


@dataclass(frozen=True)
class GraphSpec:
    """Weighted undirected graph over the features of one modality."""

    n_nodes: int
    edges: tuple
    laplacian: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def from_edges(cls, n_nodes, edges):
        """Build from ``(i, j, weight)`` triples; duplicate edges are summed."""
        A = np.zeros((n_nodes, n_nodes))
        for i, j, w in edges:
            i, j, w = int(i), int(j), float(w)
            if i == j:
                raise DomainError(f"self-loop on node {i}")
            if w < 0:
                raise DomainError(f"negative edge weight {w} on ({i}, {j})")
            if not (0 <= i < n_nodes and 0 <= j < n_nodes):
                raise DimensionError(f"edge ({i}, {j}) outside 0..{n_nodes - 1}")
            A[i, j] += w
            A[j, i] += w
        return cls.from_adjacency(A)

    @classmethod
    def from_adjacency(cls, A):
        A = np.array(A, dtype=float)
        np.fill_diagonal(A, 0.0)
        n = A.shape[0]
        iu, ju = np.nonzero(np.triu(A, 1))
        edges = tuple((int(i), int(j), float(A[i, j])) for i, j in zip(iu, ju))
        L = np.diag(A.sum(axis=1)) - A
        L.setflags(write=False)
        return cls(n, edges, L)

    @property
    def adjacency(self):
        A = -self.laplacian.copy()
        np.fill_diagonal(A, 0.0)
        return A


def soft_threshold(x, lam):
    """``sign(x) * max(|x| - lam, 0)``, elementwise."""
    if np.any(np.asarray(lam) < 0):
        raise DomainError("threshold must be non-negative")
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)
    return float(out) if out.ndim == 0 else out


def _normalized_threshold(a, lam):
    s = soft_threshold(a, lam)
    nrm = np.linalg.norm(s)
    return (s / nrm if nrm > 0 else s), nrm


def l1_constrained_direction(a, c):
    """Maximizer of ``uᵀa`` over ``||u||₂ <= 1, ||u||₁ <= c``.

    Returns ``(u, lam)`` where ``u = S(a, lam) / ||S(a, lam)||`` and ``lam``
    is zero when the budget is inactive, otherwise found by bisection on
    ``[0, max|a|]``.
    """
    a = np.asarray(a, dtype=float)
    amax = np.max(np.abs(a)) if a.size else 0.0
    if amax == 0.0:
        raise DegenerateError("cannot threshold a zero vector")
    u, _ = _normalized_threshold(a, 0.0)
    if np.sum(np.abs(u)) <= c:
        return u, 0.0
    lo, hi = 0.0, amax
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        u_mid, nrm = _normalized_threshold(a, mid)
        if nrm > 0 and np.sum(np.abs(u_mid)) > c:
            lo = mid
        else:
            hi = mid
    u, nrm = _normalized_threshold(a, hi)
    if nrm == 0:
        # ties at max|a| wiped every entry; fall back to one coordinate
        u = np.zeros_like(a)
        i = int(np.argmax(np.abs(a)))
        u[i] = np.sign(a[i])
    return u, hi


def leading_right_singular_vector(C, seed=0):
    """Top right singular vector of ``C`` (power iteration for very large matrices)."""
    C = np.asarray(C, dtype=float)
    if C.size <= _DENSE_SVD_LIMIT:
        _, _, vt = np.linalg.svd(C, full_matrices=False)
        v = vt[0]
    else:
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(C.shape[1])
        v /= np.linalg.norm(v)
        for _ in range(500):
            w = C.T @ (C @ v)
            nrm = np.linalg.norm(w)
            if nrm == 0:
                break
            w /= nrm
            if np.linalg.norm(w - v) < 1e-12:
                v = w
                break
            v = w
    return v


def _values(X):
    return X.values if isinstance(X, DataMatrix) else np.asarray(X, dtype=float)


def _check_cross(C):
    C = np.asarray(C, dtype=float)
    if not np.any(C):
        raise DegenerateError("cross-covariance matrix is identically zero")
    return C


def _stalled(obj, prev, tol):
    return abs(obj - prev) < tol * max(1.0, abs(obj))


def scca_fit_cross(C, cfg, v0=None):
    """SCCA on a cross-product matrix; returns an unsigned :class:`CanonicalPair` with ``rho = nan``."""
    C = _check_cross(C)
    p, q = C.shape
    c1, c2 = cfg.budgets(p, q)
    v = leading_right_singular_vector(C) if v0 is None else np.asarray(v0, float)
    u = None
    history = []
    converged = False
    prev = -np.inf
    lam_u = lam_v = 0.0
    for _ in range(cfg.max_iter):
        u, lam_u = l1_constrained_direction(C @ v, c1)
        v, lam_v = l1_constrained_direction(C.T @ u, c2)
        obj = float(u @ C @ v)
        history.append(obj)
        if _stalled(obj, prev, cfg.tol):
            converged = True
            break
        prev = obj
    return CanonicalPair(u, v, float("nan"), converged=converged, history=history,
                         thresholds=(lam_u, lam_v))


def scca_fit_pair(X, Y, cfg, v0=None):
    """Sparse CCA pair of two centered modalities.

    Weights are unit l2 with the sign fixed so the largest entry of ``u``
    is positive; ``rho`` is the variate correlation on ``(X, Y)``.
    ``converged`` is False when ``cfg.max_iter`` was reached.
    """
    x, y = _values(X), _values(Y)
    if x.shape[1] != y.shape[1]:
        raise DimensionError("sample counts differ")
    pair = scca_fit_cross(x @ y.T, cfg, v0=v0)
    pair.u, pair.v = fix_sign(pair.u, pair.v)
    pair.rho = canonical_correlation(pair.u, pair.v, x, y)
    return pair


def graph_coordinate_descent(a, Q, lam, u0=None, tol=1e-8, max_iter=500):
    """Cyclic coordinate descent for ``min -uᵀa + lam ||u||₁ + ½ uᵀ Q u``.

    ``Q`` must be symmetric with a positive diagonal.  Coordinates are
    visited in ascending order; stops when the largest update falls below
    ``tol * max(1, max|u|)``.
    """
    a = np.asarray(a, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = a.size
    u = np.zeros(n) if u0 is None else np.array(u0, dtype=float)
    r = Q @ u
    diag = np.diag(Q).copy()
    cols = [np.flatnonzero(Q[:, i]) for i in range(n)]
    qcols = [Q[c, i] for i, c in enumerate(cols)]
    for _ in range(max_iter):
        biggest = 0.0
        for i in range(n):
            b = a[i] - (r[i] - diag[i] * u[i])
            if b > lam:
                new = (b - lam) / diag[i]
            elif b < -lam:
                new = (b + lam) / diag[i]
            else:
                new = 0.0
            delta = new - u[i]
            if delta != 0.0:
                u[i] = new
                r[cols[i]] += delta * qcols[i]
                if abs(delta) > biggest:
                    biggest = abs(delta)
        if biggest < tol * max(1.0, np.max(np.abs(u))):
            break
    return u


def _graph_step(a, Q, lam, warm, tol, max_iter, side):
    w = graph_coordinate_descent(a, Q, lam, u0=warm, tol=tol, max_iter=max_iter)
    nrm = np.linalg.norm(w)
    if nrm == 0:
        raise DegenerateError(f"every {side} weight was thresholded to zero")
    return w / nrm, w


def gnscca_objective(C, u, v, Lu, Lv, cfg):
    """Penalized objective ``uᵀCv - l1 terms - graph terms`` at a pair of weights."""
    return float(u @ C @ v
                 - cfg.lambda_l1_u * np.abs(u).sum() - cfg.lambda_l1_v * np.abs(v).sum()
                 - 0.5 * cfg.lambda_graph_u * (u @ Lu @ u)
                 - 0.5 * cfg.lambda_graph_v * (v @ Lv @ v))


def gnscca_fit_cross(C, gu, gv, cfg, v0=None):
    """GN-SCCA on a cross-product matrix; ``rho`` is left as ``nan``."""
    C = _check_cross(C)
    p, q = C.shape
    if gu.n_nodes != p or gv.n_nodes != q:
        raise DimensionError(f"graph sizes ({gu.n_nodes}, {gv.n_nodes}) do not match ({p}, {q})")
    Lu, Lv = gu.laplacian, gv.laplacian
    Qu = np.eye(p) + cfg.lambda_graph_u * Lu
    Qv = np.eye(q) + cfg.lambda_graph_v * Lv
    v = leading_right_singular_vector(C) if v0 is None else np.asarray(v0, float)
    wu = wv = None
    history = []
    converged = False
    prev = -np.inf
    for _ in range(cfg.max_iter):
        u, wu = _graph_step(C @ v, Qu, cfg.lambda_l1_u, wu, cfg.inner_tol,
                            cfg.inner_max_iter, "u")
        v, wv = _graph_step(C.T @ u, Qv, cfg.lambda_l1_v, wv, cfg.inner_tol,
                            cfg.inner_max_iter, "v")
        obj = gnscca_objective(C, u, v, Lu, Lv, cfg)
        history.append(obj)
        if _stalled(obj, prev, cfg.tol):
            converged = True
            break
        prev = obj
    return CanonicalPair(u, v, float("nan"), converged=converged, history=history)


def gnscca_fit_pair(X, Y, gu, gv, cfg, v0=None):
    """Graph-net sparse CCA pair of two centered modalities."""
    x, y = _values(X), _values(Y)
    if x.shape[1] != y.shape[1]:
        raise DimensionError("sample counts differ")
    pair = gnscca_fit_cross(x @ y.T, gu, gv, cfg, v0=v0)
    pair.u, pair.v = fix_sign(pair.u, pair.v)
    pair.rho = canonical_correlation(pair.u, pair.v, x, y)
    return pair


def graph_from_covariance(X, threshold=0.5):
    """Feature graph with weights ``|corr(row_i, row_j)|`` kept when ``>= threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise DomainError("threshold must lie in [0, 1]")
    x = _values(X)
    xc = x - x.mean(axis=1, keepdims=True)
    nrm = np.linalg.norm(xc, axis=1)
    ok = nrm > 1e-12
    z = np.zeros_like(xc)
    z[ok] = xc[ok] / nrm[ok, None]
    R = np.abs(np.clip(z @ z.T, -1.0, 1.0))
    np.fill_diagonal(R, 0.0)
    A = np.where((R >= threshold) & (R > 0), R, 0.0)
    return GraphSpec.from_adjacency(A)


def load_edge_list(path, n_nodes):
    """Read ``i,j,weight`` lines (0-based indices, ``#`` comments allowed)."""
    edges = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split(",")
                if len(parts) != 3:
                    raise DataError(f"{path}:{lineno}: expected 'i,j,weight', got {line!r}")
                edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
    except FileNotFoundError as exc:
        raise DataError(f"edge list not found: {path}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return GraphSpec.from_edges(n_nodes, edges)


def save_edge_list(graph, path):
    with open(path, "w") as fh:
        for i, j, w in graph.edges:
            fh.write(f"{i},{j},{w!r}\n")
