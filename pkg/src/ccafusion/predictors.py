"""Supervised heads on top of the embeddings: MLP regression, penalized CoxPH, C-index."""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionError, DomainError, TrainingError

__all__ = [
    "MLPModel",
    "mlp_fit",
    "mlp_predict",
    "mlp_loss_and_grad",
    "SurvivalRecord",
    "CoxModel",
    "cox_partial_loglik",
    "coxph_fit",
    "risk_scores",
    "concordance_index",
]

_ACTIVATIONS = ("relu", "tanh")


# --------------------------------------------------------------------------- MLP


@dataclass
class MLPModel:
    """One-hidden-layer regressor.

    Inputs are standardized with the training statistics ``in_mean`` and
    ``in_scale`` before the first layer.  Weights are stored as
    ``w1 (hidden x m)``, ``b1 (hidden,)``, ``w2 (d x hidden)``, ``b2 (d,)``.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    activation: str = "relu"
    in_mean: np.ndarray = None
    in_scale: np.ndarray = None
    epochs_run: int = 0
    final_loss: float = float("nan")
    loss_history: list = field(default_factory=list)

    def __post_init__(self):
        h, m = self.w1.shape
        if self.b1.shape != (h,) or self.w2.shape[1] != h or self.b2.shape != (self.w2.shape[0],):
            raise DimensionError("inconsistent layer shapes")
        if self.activation not in _ACTIVATIONS:
            raise DomainError(f"unknown activation {self.activation!r}")
        if self.in_mean is None:
            self.in_mean = np.zeros(m)
        if self.in_scale is None:
            self.in_scale = np.ones(m)

    @property
    def hidden_size(self):
        return self.w1.shape[0]

    @property
    def n_inputs(self):
        return self.w1.shape[1]

    @property
    def n_outputs(self):
        return self.w2.shape[0]

    def params(self):
        return [self.w1, self.b1, self.w2, self.b2]


def _act(a, kind):
    if kind == "relu":
        return np.maximum(a, 0.0)
    return np.tanh(a)


def _act_grad(a, h, kind):
    if kind == "relu":
        return (a > 0).astype(float)
    return 1.0 - h ** 2


def _forward(params, x, kind):
    w1, b1, w2, b2 = params
    a = w1 @ x + b1[:, None]
    h = _act(a, kind)
    return a, h, w2 @ h + b2[:, None]


def mlp_loss_and_grad(params, x, t, activation="relu"):
    """Half mean squared error ``1/(2n) sum ||f(x_i) - t_i||^2`` and its gradient.

    ``x`` are the (already standardized) inputs as ``m x n``, ``t`` the
    ``d x n`` targets.  Returns ``(loss, [g_w1, g_b1, g_w2, g_b2])``.
    """
    w1, b1, w2, b2 = params
    n = x.shape[1]
    a, h, out = _forward(params, x, activation)
    r = out - t
    loss = 0.5 * np.sum(r ** 2) / n
    g_out = r / n
    g_w2 = g_out @ h.T
    g_b2 = g_out.sum(axis=1)
    g_a = (w2.T @ g_out) * _act_grad(a, h, activation)
    g_w1 = g_a @ x.T
    g_b1 = g_a.sum(axis=1)
    return float(loss), [g_w1, g_b1, g_w2, g_b2]


def _standardize_inputs(model, inputs):
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[0] != model.n_inputs:
        raise DimensionError(f"expected {model.n_inputs} input rows, got shape {inputs.shape}")
    return (inputs - model.in_mean[:, None]) / model.in_scale[:, None]


def mlp_predict(model, inputs):
    """Forward pass for an ``m x n`` input matrix; returns ``d x n``."""
    x = _standardize_inputs(model, inputs)
    return _forward(model.params(), x, model.activation)[2]


def mlp_fit(inputs, targets, hidden=50, seed=0, epochs=500, lr=1e-3, *,
            batch_size=32, momentum=0.9, activation="relu",
            val_inputs=None, val_targets=None, patience=20):
    """Train a one-hidden-layer MLP by mini-batch SGD with momentum.

    Parameters
    ----------
    inputs : ndarray, shape (m, n)
    targets : ndarray, shape (d, n)
    hidden : int
        Hidden layer width.
    seed : int
        Controls initialization and batch order.
    epochs, lr, batch_size, momentum
        Optimizer settings.
    val_inputs, val_targets : ndarray, optional
        When given, training stops after ``patience`` epochs without a
        validation improvement and the best weights are restored.

    Raises
    ------
    TrainingError
        If the loss becomes non-finite.
    """
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[None, :]
    m, n = inputs.shape
    if targets.shape[1] != n:
        raise DimensionError(f"{n} input samples but {targets.shape[1]} targets")
    if n < 2 or hidden < 1:
        raise DomainError("need n >= 2 samples and hidden >= 1")
    d = targets.shape[0]

    mean = inputs.mean(axis=1)
    scale = inputs.std(axis=1)
    scale = np.where(scale > 1e-12, scale, 1.0)
    x = (inputs - mean[:, None]) / scale[:, None]

    rng = np.random.default_rng(seed)
    # Glorot-uniform initialization, zero biases
    lim1 = np.sqrt(6.0 / (m + hidden))
    lim2 = np.sqrt(6.0 / (hidden + d))
    params = [rng.uniform(-lim1, lim1, (hidden, m)), np.zeros(hidden),
              rng.uniform(-lim2, lim2, (d, hidden)), np.zeros(d)]
    vel = [np.zeros_like(p) for p in params]

    use_val = val_inputs is not None and val_targets is not None
    if use_val:
        xv = (np.asarray(val_inputs, float) - mean[:, None]) / scale[:, None]
        tv = np.asarray(val_targets, float).reshape(d, -1)
        best_val, best_params, stale = np.inf, [p.copy() for p in params], 0

    history = []
    epoch = 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            _, grads = mlp_loss_and_grad(params, x[:, idx], targets[:, idx], activation)
            for p, v, g in zip(params, vel, grads):
                v *= momentum
                v -= lr * g
                p += v
        loss = mlp_loss_and_grad(params, x, targets, activation)[0]
        if not np.isfinite(loss):
            raise TrainingError(f"loss diverged at epoch {epoch}", epoch=epoch)
        history.append(loss)
        if use_val:
            vloss = 0.5 * np.sum((_forward(params, xv, activation)[2] - tv) ** 2) / tv.shape[1]
            if vloss < best_val - 1e-12:
                best_val, best_params, stale = vloss, [p.copy() for p in params], 0
            else:
                stale += 1
                if stale >= patience:
                    break
    if use_val:
        params = best_params
    out = _forward(params, x, activation)[2]
    final = float(np.mean(np.sum((out - targets) ** 2, axis=0)))
    return MLPModel(*params, activation=activation, in_mean=mean, in_scale=scale,
                    epochs_run=epoch, final_loss=final, loss_history=history)


# ---------------------------------------------------------------------- survival


@dataclass(frozen=True)
class SurvivalRecord:
    """Observed outcome of one subject: event flag and last observation time."""

    event: bool
    time: float

    def __post_init__(self):
        if not np.isfinite(self.time) or self.time <= 0:
            raise DomainError(f"survival time must be positive, got {self.time}")
        object.__setattr__(self, "event", bool(self.event))


@dataclass
class CoxModel:
    coefficients: np.ndarray
    penalizer: float = 0.1
    l1_ratio: float = 0.0
    converged: bool = False
    n_iter: int = 0

    def __post_init__(self):
        if not np.all(np.isfinite(self.coefficients)):
            raise DomainError("non-finite Cox coefficients")


def _unpack_records(records):
    """Accept a list of SurvivalRecord or an ``(event, time)`` pair of arrays."""
    if isinstance(records, tuple) and len(records) == 2:
        event = np.asarray(records[0], dtype=bool)
        time = np.asarray(records[1], dtype=float)
        if np.any(time <= 0) or not np.all(np.isfinite(time)):
            raise DomainError("survival times must be positive and finite")
        return event, time
    event = np.array([r.event for r in records], dtype=bool)
    time = np.array([r.time for r in records], dtype=float)
    return event, time


def cox_partial_loglik(beta, features, event, time, hessian=True):
    """Breslow partial log-likelihood, gradient and Hessian.

    Parameters
    ----------
    beta : ndarray, shape (m,)
    features : ndarray, shape (m, n)
    event : bool array, shape (n,)
    time : ndarray, shape (n,)

    Returns
    -------
    loglik : float
    grad : ndarray, shape (m,)
    hess : ndarray, shape (m, m) or None
        Negative semi-definite.
    """
    Z = np.asarray(features, dtype=float).T
    beta = np.asarray(beta, dtype=float)
    event = np.asarray(event, dtype=bool)
    order = np.argsort(time, kind="stable")
    t = np.asarray(time, float)[order]
    Z, e = Z[order], event[order]
    eta = Z @ beta
    shift = eta.max()
    w = np.exp(eta - shift)
    # suffix sums over the risk set {j : t_j >= t_i}; ties share the set of their first member
    s0 = np.cumsum(w[::-1])[::-1]
    s1 = np.cumsum((w[:, None] * Z)[::-1], axis=0)[::-1]
    first = np.searchsorted(t, t, side="left")
    ev = np.flatnonzero(e)
    k = first[ev]
    mu = s1[k] / s0[k][:, None]
    loglik = float(np.sum(eta[ev] - shift - np.log(s0[k])))
    grad = Z[ev].sum(axis=0) - mu.sum(axis=0)
    if not hessian:
        return loglik, grad, None
    # sum over events of (1/S0_k) sum_{j >= k} w_j z_j z_jᵀ, via a prefix sum over risk-set starts
    inv = np.zeros(len(t))
    np.add.at(inv, k, 1.0 / s0[k])
    c = np.cumsum(inv)
    hess = -(Z.T @ ((w * c)[:, None] * Z) - mu.T @ mu)
    return loglik, grad, hess


def _soft(x, lam):
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def _prox_newton_direction(beta, g, H, lam1, sweeps=200, tol=1e-12):
    """Minimize ``gᵀd + dᵀHd/2 + lam1 ||beta + d||_1`` by coordinate descent."""
    m = beta.size
    z = beta.copy()
    Hd = np.zeros(m)
    diag = np.maximum(np.diag(H), 1e-12)
    for _ in range(sweeps):
        delta = 0.0
        for j in range(m):
            dj = z[j] - beta[j]
            # gradient of the quadratic model in coordinate j, excluding the j-j term
            r = g[j] + Hd[j] - H[j, j] * dj
            znew = _soft(diag[j] * beta[j] - r, lam1) / diag[j]
            step = znew - z[j]
            if step != 0.0:
                Hd += H[:, j] * step
                z[j] = znew
                delta = max(delta, abs(step))
        if delta < tol:
            break
    return z - beta


def coxph_fit(features, records, penalizer=0.1, l1_ratio=0.0, max_iter=100, tol=1e-6):
    """Elastic-net penalized CoxPH by (proximal) Newton iterations.

    Minimizes ``-loglik/n + penalizer * (l1_ratio ||b||_1 + (1 - l1_ratio)/2 ||b||^2)``
    with the Breslow partial log-likelihood.  Convergence is declared when
    the norm of the minimum-norm subgradient falls below ``tol``.
    """
    features = np.asarray(features, dtype=float)
    event, time = _unpack_records(records)
    m, n = features.shape
    if time.size != n:
        raise DimensionError(f"{n} feature columns but {time.size} records")
    if not event.any():
        raise DomainError("no events observed; the partial likelihood is constant")
    if penalizer < 0 or not 0 <= l1_ratio <= 1:
        raise DomainError("penalizer must be >= 0 and l1_ratio in [0, 1]")
    lam1 = penalizer * l1_ratio
    lam2 = penalizer * (1.0 - l1_ratio)

    def smooth(b, hess=True):
        ll, g, h = cox_partial_loglik(b, features, event, time, hessian=hess)
        f = -ll / n + 0.5 * lam2 * b @ b
        g = -g / n + lam2 * b
        if h is not None:
            h = -h / n + lam2 * np.eye(m)
        return f, g, h

    def full(b):
        return smooth(b, hess=False)[0] + lam1 * np.abs(b).sum()

    beta = np.zeros(m)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        f, g, H = smooth(beta)
        # optimality measure: distance to the proximal-gradient fixed point
        if np.linalg.norm(beta - _soft(beta - g, lam1)) < tol:
            converged = True
            it -= 1
            break
        if lam1 > 0:
            d = _prox_newton_direction(beta, g, H, lam1)
            decrease = g @ d + lam1 * (np.abs(beta + d).sum() - np.abs(beta).sum())
        else:
            try:
                d = -np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                d = -np.linalg.lstsq(H, g, rcond=None)[0]
            decrease = g @ d
        F0 = f + lam1 * np.abs(beta).sum()
        step = 1.0
        while step > 1e-10:
            cand = beta + step * d
            if full(cand) <= F0 + 1e-4 * step * decrease:
                break
            step *= 0.5
        else:
            break
        beta = cand
    return CoxModel(beta, float(penalizer), float(l1_ratio), converged, it)


def risk_scores(model, features):
    """Linear predictor ``betaᵀ x_i`` for an ``m x n`` feature matrix."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[0] != model.coefficients.size:
        raise DimensionError(f"expected {model.coefficients.size} feature rows, got {features.shape}")
    return model.coefficients @ features


def concordance_index(records, scores):
    """Fraction of ordered pairs whose risk ordering matches the outcome ordering.

    A pair ``(i, j)`` is ordered when ``i`` had an observed event and
    ``t_j > t_i``.  It counts as concordant when ``o_i > o_j`` strictly;
    score ties count 0.

    Raises
    ------
    DomainError
        When no ordered pair exists.
    """
    event, time = _unpack_records(records)
    scores = np.asarray(scores, dtype=float)
    if scores.shape != time.shape:
        raise DimensionError("one score per record required")
    num = 0
    den = 0
    for i in np.flatnonzero(event):
        later = time > time[i]
        den += int(later.sum())
        num += int(np.sum(scores[i] > scores[later]))
    if den == 0:
        raise DomainError("no ordered pairs; the concordance index is undefined")
    return num / den
