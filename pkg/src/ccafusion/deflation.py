"""Deflation schemes and the multi-dimensional embedding loop.

Four schemes are available:

``hd``
    Hotelling deflation of the cross-product matrix,
    ``C <- C - (uᵀCv) u vᵀ``.
``nhd``
    Normalized Hotelling deflation, the Frobenius projection of ``C`` off
    the rank-one direction ``u vᵀ``.
``pd``
    Projected deflation of the data matrices, ``X <- (I - u uᵀ) X``.
``opd``
    Orthogonalized projected deflation: project the data off the part of
    ``u`` that is new with respect to every previously found weight.

Penalized solvers run directly on the data.  Classical CCA runs in whitened
coordinates, where its unit-norm constraint is Euclidean, so that every
scheme reproduces the ordinary canonical pairs; results and deflation
traces are mapped back to the original coordinates.
"""
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cca import CanonicalPair, CCAWhitener, canonical_correlation, fix_sign
from .datamodel import DataMatrix
from .exceptions import ContractError, DataError, DegenerateError, DomainError
from .pcca import gnscca_fit_cross, scca_fit_cross

__all__ = [
    "SCHEMES",
    "DeflationState",
    "EmbeddingBasis",
    "CCASolver",
    "SCCASolver",
    "GNSCCASolver",
    "hotelling_step",
    "normalized_hotelling_step",
    "projected_step",
    "orthogonalized_projected_step",
    "generate_embeddings",
    "save_embedding",
    "load_embedding",
]

SCHEMES = ("hd", "nhd", "pd", "opd")
_UNIT_TOL = 1e-8
_RESIDUAL_TOL = 1e-8
# deflated cross-matrices this small relative to the first carry no correlation
_EXHAUSTED_RTOL = 1e-12


def _check_unit(w, name):
    nrm = np.linalg.norm(w)
    if abs(nrm - 1.0) > _UNIT_TOL:
        raise ContractError(f"{name} must have unit l2 norm, got {nrm:.12g}")


def hotelling_step(c, u, v):
    """``C - (uᵀ C v) u vᵀ`` for unit-norm ``u``, ``v``."""
    c = np.asarray(c, dtype=float)
    return c - (u @ c @ v) * np.outer(u, v)


def normalized_hotelling_step(c, u, v):
    """Remove the Frobenius projection of ``C`` onto ``u vᵀ``.

    Invariant to rescaling of ``u`` and ``v``; identical to
    :func:`hotelling_step` when both are unit norm.
    """
    c = np.asarray(c, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu * nv < 1e-12:
        raise DegenerateError("u vᵀ has (numerically) zero norm")
    uh, vh = u / nu, v / nv
    return c - (uh @ c @ vh) * np.outer(uh, vh)


def projected_step(x, y, u, v):
    """``((I - u uᵀ) X, (I - v vᵀ) Y)``; ``u``, ``v`` must be unit norm."""
    _check_unit(u, "u")
    _check_unit(v, "v")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return x - np.outer(u, u @ x), y - np.outer(v, v @ y)


@dataclass(frozen=True)
class DeflationState:
    """Working matrices of one deflation run.

    PD/OPD carry the deflated data ``x_cur``/``y_cur``; HD/NHD carry the
    deflated cross-matrix ``c_cur``.  ``r_basis``/``s_basis`` collect the
    orthonormalized weights of OPD.
    """

    scheme: str
    x_cur: np.ndarray = None
    y_cur: np.ndarray = None
    c_cur: np.ndarray = None
    r_basis: np.ndarray = None
    s_basis: np.ndarray = None
    iteration: int = 0

    @classmethod
    def initial(cls, scheme, x, y):
        if scheme not in SCHEMES:
            raise DomainError(f"unknown deflation scheme {scheme!r}")
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if scheme in ("hd", "nhd"):
            return cls(scheme, c_cur=x @ y.T)
        return cls(scheme, x_cur=x, y_cur=y,
                   r_basis=np.zeros((x.shape[0], 0)), s_basis=np.zeros((y.shape[0], 0)))

    def cross(self):
        if self.c_cur is not None:
            return self.c_cur
        return self.x_cur @ self.y_cur.T


def _new_direction(basis, w):
    if basis.shape[1] == 0:
        # r_1 = u_1, with no renormalization round-off
        return w, 1.0
    resid = w - basis @ (basis.T @ w)
    nrm = np.linalg.norm(resid)
    return resid, nrm


def orthogonalized_projected_step(state, u, v):
    """One OPD step: extend the orthonormal bases and project the data.

    Raises :class:`DegenerateError` when ``u`` or ``v`` has no component
    outside the span of the previous weights (residual norm ``< 1e-8``).
    """
    if state.scheme != "opd":
        raise DomainError(f"state belongs to scheme {state.scheme!r}, not 'opd'")
    _check_unit(u, "u")
    _check_unit(v, "v")
    r, nr = _new_direction(state.r_basis, u)
    s, ns = _new_direction(state.s_basis, v)
    if nr < _RESIDUAL_TOL or ns < _RESIDUAL_TOL:
        raise DegenerateError(
            f"new weights lie in the span of previous ones (residuals {nr:.2e}, {ns:.2e})")
    r, s = r / nr, s / ns
    x = state.x_cur - np.outer(r, r @ state.x_cur)
    y = state.y_cur - np.outer(s, s @ state.y_cur)
    return replace(state, x_cur=x, y_cur=y,
                   r_basis=np.column_stack([state.r_basis, r]),
                   s_basis=np.column_stack([state.s_basis, s]),
                   iteration=state.iteration + 1)


def _deflate(state, u, v):
    if state.scheme == "hd":
        return replace(state, c_cur=hotelling_step(state.c_cur, u, v),
                       iteration=state.iteration + 1)
    if state.scheme == "nhd":
        return replace(state, c_cur=normalized_hotelling_step(state.c_cur, u, v),
                       iteration=state.iteration + 1)
    if state.scheme == "pd":
        x, y = projected_step(state.x_cur, state.y_cur, u, v)
        return replace(state, x_cur=x, y_cur=y, iteration=state.iteration + 1)
    return orthogonalized_projected_step(state, u, v)


# pair solvers ---------------------------------------------------------------


class CCASolver:
    """Rank-one classical CCA.

    Works in the whitened coordinates of the training data, where a CCA
    pair is the top singular pair of the cross-product matrix.
    """

    name = "cca"
    whitens = True

    def __init__(self, ridge=None):
        self.ridge = ridge

    def fit_cross(self, C):
        U, s, Vt = np.linalg.svd(C, full_matrices=False)
        return CanonicalPair(U[:, 0], Vt[0], float("nan"))


class SCCASolver:
    """Sparse CCA via alternating soft-thresholding (see :func:`scca_fit_cross`)."""

    name = "scca"
    whitens = False

    def __init__(self, cfg):
        self.cfg = cfg

    def fit_cross(self, C):
        return scca_fit_cross(C, self.cfg)


class GNSCCASolver:
    """Graph-net sparse CCA (see :func:`gnscca_fit_cross`)."""

    name = "gnscca"
    whitens = False

    def __init__(self, gu, gv, cfg):
        self.gu, self.gv, self.cfg = gu, gv, cfg

    def fit_cross(self, C):
        return gnscca_fit_cross(C, self.gu, self.gv, self.cfg)


# embedding loop -------------------------------------------------------------


@dataclass
class DeflationTrace:
    """Per-iteration matrices after deflation, in original coordinates.

    ``cross[i]`` is the cross-matrix after step ``i + 1``; ``x``/``y`` hold
    the deflated data for PD/OPD and are empty for HD/NHD.
    """

    cross: list = field(default_factory=list)
    x: list = field(default_factory=list)
    y: list = field(default_factory=list)


@dataclass
class EmbeddingBasis:
    """Stacked canonical weights ``U`` (``p x k``) and ``V`` (``q x k``).

    ``flags`` has one entry per attempted iteration (``"ok"``,
    ``"not_converged"`` or ``"degenerate"``).  A run that stopped early has
    fewer columns than ``requested_k`` and its last flag explains why.
    """

    u_mat: np.ndarray
    v_mat: np.ndarray
    rhos: np.ndarray
    flags: list
    scheme: str = None
    solver: str = None
    requested_k: int = None
    trace: DeflationTrace = field(default=None, repr=False, compare=False)

    @property
    def k(self):
        return self.u_mat.shape[1]

    @property
    def truncated(self):
        return self.requested_k is not None and self.k < self.requested_k

    def embed(self, X, Y):
        """Embeddings ``(Uᵀ X, Vᵀ Y)``."""
        return self.u_mat.T @ _values(X), self.v_mat.T @ _values(Y)

    def metadata(self):
        return {
            "scheme": self.scheme,
            "solver": self.solver,
            "requested_k": self.requested_k,
            "k": self.k,
            "rhos": [float(r) for r in self.rhos],
            "flags": list(self.flags),
        }


def _values(X):
    return X.values if isinstance(X, DataMatrix) else np.asarray(X, dtype=float)


def _unit(w):
    return w / np.linalg.norm(w)


def generate_embeddings(X, Y, solver, scheme, k, keep_trace=True):
    """Fit ``k`` canonical pairs by repeated solving and deflation.

    Parameters
    ----------
    X, Y : DataMatrix
        Centered training data of the two modalities.
    solver : CCASolver, SCCASolver or GNSCCASolver
    scheme : {"hd", "nhd", "pd", "opd"}
    k : int
        Requested embedding dimension.
    keep_trace : bool
        Record the deflated matrices after every step (needed by the
        orthogonality diagnostics).

    Returns
    -------
    EmbeddingBasis
        Unit-norm weight columns.  A degenerate step after the first one
        truncates the basis instead of raising.
    """
    if k < 1:
        raise DomainError("k must be at least 1")
    scheme = scheme.lower()
    if scheme not in SCHEMES:
        raise DomainError(f"unknown deflation scheme {scheme!r}")
    x, y = _values(X), _values(Y)

    if getattr(solver, "whitens", False):
        wh = CCAWhitener(x, y, solver.ridge)
        kx, ky, kx_inv, ky_inv = wh.kx, wh.ky, wh.kx_inv, wh.ky_inv
        xw, yw = kx @ x, ky @ y
    else:
        kx = ky = kx_inv = ky_inv = None
        xw, yw = x, y

    state = DeflationState.initial(scheme, xw, yw)
    scale = np.linalg.norm(state.cross())
    us, vs, rhos, flags = [], [], [], []
    trace = DeflationTrace() if keep_trace else None

    for j in range(1, k + 1):
        C = state.cross()
        try:
            if np.linalg.norm(C) <= _EXHAUSTED_RTOL * scale:
                raise DegenerateError("cross-matrix exhausted by previous deflations")
            pair = solver.fit_cross(C)
            uw, vw = _unit(pair.u), _unit(pair.v)
            uw, vw = fix_sign(uw, vw)
            new_state = _deflate(state, uw, vw)
        except DegenerateError:
            if j == 1:
                raise
            flags.append("degenerate")
            break
        state = new_state
        if kx is None:
            u, v = uw, vw
        else:
            u, v = fix_sign(_unit(kx @ uw), _unit(ky @ vw))
        us.append(u)
        vs.append(v)
        rhos.append(canonical_correlation(u, v, x, y))
        flags.append("ok" if pair.converged else "not_converged")
        if trace is not None:
            c_after = state.cross()
            if kx is None:
                trace.cross.append(c_after)
                if state.x_cur is not None:
                    trace.x.append(state.x_cur)
                    trace.y.append(state.y_cur)
            else:
                trace.cross.append(kx_inv @ c_after @ ky_inv)
                if state.x_cur is not None:
                    trace.x.append(kx_inv @ state.x_cur)
                    trace.y.append(ky_inv @ state.y_cur)

    return EmbeddingBasis(np.column_stack(us), np.column_stack(vs), np.asarray(rhos),
                          flags, scheme=scheme, solver=solver.name, requested_k=k,
                          trace=trace)


def _write_matrix_csv(path, mat, row_ids, col_prefix):
    cols = [f"{col_prefix}{j + 1}" for j in range(mat.shape[1])]
    with open(path, "w") as fh:
        fh.write(",".join(["feature"] + cols) + "\n")
        for rid, row in zip(row_ids, mat):
            fh.write(",".join([str(rid)] + [repr(float(a)) for a in row]) + "\n")


def _read_matrix_csv(path):
    rows = []
    with open(path) as fh:
        fh.readline()
        for line in fh:
            if line.strip():
                rows.append([float(t) for t in line.rstrip("\n").split(",")[1:]])
    return np.array(rows)


def save_embedding(basis, directory, feature_ids_x=None, feature_ids_y=None):
    """Write ``U.csv``, ``V.csv`` and the ``embedding.json`` metadata sidecar."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    fx = feature_ids_x or [f"x{i}" for i in range(basis.u_mat.shape[0])]
    fy = feature_ids_y or [f"y{i}" for i in range(basis.v_mat.shape[0])]
    _write_matrix_csv(d / "U.csv", basis.u_mat, fx, "u")
    _write_matrix_csv(d / "V.csv", basis.v_mat, fy, "v")
    with open(d / "embedding.json", "w") as fh:
        json.dump(basis.metadata(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_embedding(directory):
    d = Path(directory)
    try:
        U = _read_matrix_csv(d / "U.csv")
        V = _read_matrix_csv(d / "V.csv")
        with open(d / "embedding.json") as fh:
            meta = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"incomplete embedding directory {d}: {exc.filename}") from exc
    U = U.reshape(U.shape[0], -1)
    V = V.reshape(V.shape[0], -1)
    return EmbeddingBasis(U, V, np.asarray(meta["rhos"], dtype=float), meta["flags"],
                          scheme=meta.get("scheme"), solver=meta.get("solver"),
                          requested_k=meta.get("requested_k"))
