"""Simulated two-modality datasets with sparse or graph-smooth loadings, and fold splits.

Random draws use numpy's PCG64 generator; every function is reproducible
bit-for-bit given its seed.
"""
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import ConfigError
from .genmodel import ModelParams, sample_dataset
from .pcca import GraphSpec

__all__ = [
    "SimConfig",
    "SimulatedData",
    "gen_sparse_weights",
    "random_connected_graph",
    "gen_graph_weights",
    "make_folds",
    "simulate",
    "simulate_survival",
]


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings; the defaults are the full-scale sparse setting."""

    n: int = 100
    p: int = 200
    q: int = 200
    d: int = 5
    k_eig: int = 5
    sigma_x: float = 0.1
    sigma_y: float = 0.1
    sparsity: float = 0.25
    structure: str = "sparse"
    seed: int = 0
    n_folds: int = 10
    split: tuple = (0.6, 0.1, 0.3)
    mean_degree: float = 4.0
    survival: bool = False
    censoring: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "split", tuple(float(f) for f in self.split))
        if len(self.split) != 3 or min(self.split) <= 0 or abs(sum(self.split) - 1) > 1e-9:
            raise ConfigError(f"split fractions must be positive and sum to 1, got {self.split}")
        if self.structure not in ("sparse", "graph"):
            raise ConfigError(f"unknown structure {self.structure!r}")
        if not 0 < self.sparsity <= 1:
            raise ConfigError("sparsity must lie in (0, 1]")
        if self.structure == "sparse" and _nonzeros_per_row(self.sparsity, self.d) < 1:
            raise ConfigError("sparsity * d rounds to zero nonzeros per row")
        if min(self.n, self.p, self.q, self.d, self.n_folds) < 1:
            raise ConfigError("n, p, q, d and n_folds must be positive")
        if self.sigma_x <= 0 or self.sigma_y <= 0:
            raise ConfigError("noise levels must be positive")

    def to_dict(self):
        out = asdict(self)
        out["split"] = list(self.split)
        return out


def _nonzeros_per_row(s, d):
    # round half up, independent of banker's rounding
    return int(np.floor(s * d + 0.5))


def gen_sparse_weights(p, d, s, seed):
    """``p x d`` loadings with ``round(s*d)`` N(0, 1) entries per row at random positions."""
    if not 0 < s <= 1:
        raise ConfigError("s must lie in (0, 1]")
    nnz = _nonzeros_per_row(s, d)
    if nnz < 1:
        raise ConfigError(f"round({s}*{d}) = 0 nonzeros per row")
    rng = np.random.default_rng(seed)
    values = rng.standard_normal((p, d))
    if nnz == d:
        return values
    mask = np.zeros((p, d), dtype=bool)
    for i in range(p):
        mask[i, rng.choice(d, size=nnz, replace=False)] = True
    return np.where(mask, values, 0.0)


def random_connected_graph(p, seed, mean_degree=4.0):
    """Random spanning tree plus random extra edges up to the target mean degree.

    All weights are 1.  The spanning tree guarantees connectivity.
    """
    if p < 2:
        raise ConfigError("a graph needs at least 2 nodes")
    rng = np.random.default_rng(seed)
    order = rng.permutation(p)
    edges = set()
    for i in range(1, p):
        a, b = int(order[i]), int(order[rng.integers(i)])
        edges.add((min(a, b), max(a, b)))
    target = min(int(round(mean_degree * p / 2)), p * (p - 1) // 2)
    while len(edges) < target:
        a, b = (int(t) for t in rng.integers(p, size=2))
        if a != b:
            edges.add((min(a, b), max(a, b)))
    return GraphSpec.from_edges(p, [(a, b, 1.0) for a, b in sorted(edges)])


def smooth_eigenvectors(g, k_eig):
    """Eigenvectors of the ``k_eig`` smallest non-zero Laplacian eigenvalues (as columns)."""
    w, V = np.linalg.eigh(g.laplacian)
    nonzero = np.flatnonzero(w > 1e-8 * max(1.0, w[-1]))
    if k_eig > nonzero.size:
        raise ConfigError(f"graph has only {nonzero.size} non-zero eigenvalues, k_eig={k_eig}")
    return V[:, nonzero[:k_eig]]


def gen_graph_weights(g, d, k_eig, seed, max_attempts=20):
    """``p x d`` graph-smooth loadings with orthonormal columns.

    Each column is a Uniform[0, 1] combination of the smooth eigenvectors,
    projected off the previous columns and normalized.
    """
    if d > k_eig:
        raise ConfigError(f"d={d} exceeds k_eig={k_eig}; later columns would vanish")
    phi = smooth_eigenvectors(g, k_eig)
    rng = np.random.default_rng(seed)
    cols = np.zeros((g.n_nodes, 0))
    for t in range(d):
        for _ in range(max_attempts):
            w = phi @ rng.uniform(0.0, 1.0, size=k_eig)
            w = w - cols @ (cols.T @ w)
            nrm = np.linalg.norm(w)
            if nrm >= 1e-10:
                break
        else:
            raise ConfigError(f"could not draw column {t + 1} outside the span of the previous ones")
        w = w / nrm
        # one re-orthogonalization pass against rounding drift
        w = w - cols @ (cols.T @ w)
        cols = np.column_stack([cols, w / np.linalg.norm(w)])
    return cols


def make_folds(n, split, n_folds, seed):
    """Seeded train/validation/test partitions, one fresh shuffle per fold.

    Fold ``f`` uses seed ``seed + f``.  Train and validation sizes are
    floored, the test set takes the remainder.
    """
    split = tuple(float(s) for s in split)
    if len(split) != 3 or min(split) <= 0 or abs(sum(split) - 1) > 1e-9:
        raise ConfigError(f"invalid split {split}")
    n_train = int(np.floor(split[0] * n + 1e-9))
    n_val = int(np.floor(split[1] * n + 1e-9))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise ConfigError(f"split {split} of n={n} leaves an empty set")
    folds = []
    for f in range(n_folds):
        perm = np.random.default_rng(seed + f).permutation(n)
        folds.append((np.sort(perm[:n_train]), np.sort(perm[n_train:n_train + n_val]),
                      np.sort(perm[n_train + n_val:])))
    return folds


@dataclass
class SimulatedData:
    params: ModelParams
    Z: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    folds: list
    graph_x: GraphSpec = None
    graph_y: GraphSpec = None
    event: np.ndarray = None
    time: np.ndarray = None
    config: SimConfig = field(default=None, repr=False)


def simulate_survival(risk, seed, censoring=0.3):
    """Exponential survival times with hazard ``exp(risk)`` and independent censoring.

    Censoring times are exponential with a rate chosen so that roughly a
    ``censoring`` fraction of samples is censored.
    """
    risk = np.asarray(risk, dtype=float)
    rng = np.random.default_rng(seed)
    hazard = np.exp(risk)
    t_event = rng.exponential(1.0 / hazard)
    if censoring <= 0:
        return np.ones(risk.size, dtype=bool), t_event
    # P(C < T) = rc / (rc + h) per sample; match the mean to the target
    rate = censoring / (1.0 - censoring) * np.median(hazard)
    t_cens = rng.exponential(1.0 / rate, size=risk.size)
    event = t_event <= t_cens
    return event, np.minimum(t_event, t_cens)


def simulate(cfg):
    """Generate loadings, samples, folds (and graphs/survival labels if configured)."""
    seeds = np.random.SeedSequence(cfg.seed).spawn(6)
    gx = gy = None
    if cfg.structure == "sparse":
        wx = gen_sparse_weights(cfg.p, cfg.d, cfg.sparsity, seeds[0])
        wy = gen_sparse_weights(cfg.q, cfg.d, cfg.sparsity, seeds[1])
    else:
        gx = random_connected_graph(cfg.p, seeds[2], cfg.mean_degree)
        gy = random_connected_graph(cfg.q, seeds[3], cfg.mean_degree)
        wx = gen_graph_weights(gx, cfg.d, cfg.k_eig, seeds[0])
        wy = gen_graph_weights(gy, cfg.d, cfg.k_eig, seeds[1])
    params = ModelParams(wx, wy, cfg.sigma_x, cfg.sigma_y)
    Z, X, Y = sample_dataset(params, cfg.n, seeds[4])
    folds = make_folds(cfg.n, cfg.split, cfg.n_folds, cfg.seed)
    event = time = None
    if cfg.survival:
        event, time = simulate_survival(Z[0], seeds[5], cfg.censoring)
    return SimulatedData(params, Z, X.values, Y.values, folds, gx, gy, event, time, cfg)
