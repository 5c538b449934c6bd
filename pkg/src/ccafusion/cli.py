"""Experiment harness: simulate data, fit embeddings per fold, train heads, aggregate.

Typical run, all stages sharing one directory::

    ccafusion simulate --out run --seed 0
    ccafusion embed --out run --config exp.ini
    ccafusion predict-latent --out run
    ccafusion report --out run

Configuration is an INI file.  Any key can be overridden from the
environment as ``CCAFUSION_<SECTION>_<KEY>`` (for example
``CCAFUSION_PENALTY_C_FRAC=0.5``); command-line flags win over both.
"""
import argparse
import configparser
import itertools
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .datamodel import center, feature_means, standardization_stats, standardize
from .deflation import (SCHEMES, CCASolver, GNSCCASolver, SCCASolver, generate_embeddings,
                        load_embedding, save_embedding)
from .exceptions import (CCAError, ConfigError, DataError, DegenerateError, DimensionError,
                         DomainError, SingularityError, TrainingError)
from .metrics import MetricReport, additional_correlations, cumulative_additional, orthogonality_matrix
from .pcca import PenaltyConfig, graph_from_covariance, load_edge_list, save_edge_list
from .predictors import coxph_fit, concordance_index, mlp_fit, mlp_predict, risk_scores
from .metrics import mse
from .simulate import SimConfig, simulate

__all__ = ["main", "load_config", "DEFAULTS"]

ENV_PREFIX = "CCAFUSION_"
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SOLVERS = ("cca", "scca", "gnscca")
SURVIVAL_COLUMNS = ("Genomics", "Imaging", "Concatenated")
LATENT_COLUMNS = ("modality_1", "modality_2", "concatenated")

DEFAULTS = {
    "experiment": {
        "solver": "scca",
        "scheme": "opd",
        "k": "5",
        "seed": "0",
        "folds": "10",
        "jobs": "1",
        "ridge": "",
    },
    "simulate": {
        "n": "100",
        "p": "200",
        "q": "200",
        "d": "5",
        "k_eig": "5",
        "sigma_x": "0.1",
        "sigma_y": "0.1",
        "sparsity": "0.25",
        "structure": "sparse",
        "split": "0.6, 0.1, 0.3",
        "mean_degree": "4.0",
        "survival": "false",
        "censoring": "0.3",
    },
    "data": {
        # empty dir means: the --out directory
        "dir": "",
        "x": "X.csv",
        "y": "Y.csv",
        "z": "Z.csv",
        "labels": "labels.csv",
        "folds": "folds.json",
        "graph_x": "graph_x.csv",
        "graph_y": "graph_y.csv",
        "embed_dir": "",
    },
    "penalty": {
        # SCCA budgets c = max(1, frac * sqrt(dim)), same fraction for both sides
        "c_frac": "0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7",
        "lambda_graph": "0.1, 1.0",
        # GN-SCCA l1 weights, in units of sigma_1(C_train) / sqrt(dim)
        "lambda_l1": "0.05, 0.1",
        "graph_threshold": "0.5",
        "tol": "1e-6",
        "max_iter": "100",
    },
    "mlp": {
        "hidden": "50",
        "hidden_concat": "100",
        "epochs": "500",
        "lr": "1e-3",
        "batch_size": "32",
        "momentum": "0.9",
    },
    "survival": {
        "penalizer": "0.1",
        "l1_ratio": "0.0",
    },
}


# ------------------------------------------------------------------ config


def load_config(path=None, environ=None, overrides=None):
    """Resolve defaults, the INI file, environment variables and flag overrides."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_dict(DEFAULTS)
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        for section in cp.sections():
            if section not in DEFAULTS:
                raise ConfigError(f"unknown config section [{section}]")
            for key in cp[section]:
                if key not in DEFAULTS[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
    environ = os.environ if environ is None else environ
    for name in sorted(environ):
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        section, _, key = rest.partition("_")
        if section not in DEFAULTS or key not in DEFAULTS[section]:
            raise ConfigError(f"environment variable {name} names no config key")
        cp[section][key] = environ[name]
    for (section, key), value in (overrides or {}).items():
        if value is not None:
            cp[section][key] = str(value)
    return cp


def _get(cp, section, key, kind=str):
    raw = cp[section][key].strip()
    try:
        if kind is bool:
            return cp.getboolean(section, key)
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc


def _get_list(cp, section, key, kind=float):
    raw = cp[section][key]
    try:
        out = [kind(t) for t in raw.replace(";", ",").split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc
    if not out:
        raise ConfigError(f"[{section}] {key} must not be empty")
    return out


def _sim_config(cp):
    try:
        return SimConfig(
            n=_get(cp, "simulate", "n", int), p=_get(cp, "simulate", "p", int),
            q=_get(cp, "simulate", "q", int), d=_get(cp, "simulate", "d", int),
            k_eig=_get(cp, "simulate", "k_eig", int),
            sigma_x=_get(cp, "simulate", "sigma_x", float),
            sigma_y=_get(cp, "simulate", "sigma_y", float),
            sparsity=_get(cp, "simulate", "sparsity", float),
            structure=_get(cp, "simulate", "structure"),
            seed=_get(cp, "experiment", "seed", int),
            n_folds=_get(cp, "experiment", "folds", int),
            split=tuple(_get_list(cp, "simulate", "split")),
            mean_degree=_get(cp, "simulate", "mean_degree", float),
            survival=_get(cp, "simulate", "survival", bool),
            censoring=_get(cp, "simulate", "censoring", float),
        )
    except (TypeError, DomainError) as exc:
        raise ConfigError(str(exc)) from exc


def _experiment(cp):
    solver = _get(cp, "experiment", "solver").lower()
    scheme = _get(cp, "experiment", "scheme").lower()
    if solver not in SOLVERS:
        raise ConfigError(f"solver must be one of {SOLVERS}, got {solver!r}")
    if scheme not in SCHEMES:
        raise ConfigError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    k = _get(cp, "experiment", "k", int)
    if k < 1:
        raise ConfigError("k must be positive")
    jobs = _get(cp, "experiment", "jobs", int)
    if jobs < 1:
        raise ConfigError("jobs must be positive")
    ridge = cp["experiment"]["ridge"].strip()
    return {
        "solver": solver, "scheme": scheme, "k": k, "jobs": jobs,
        "seed": _get(cp, "experiment", "seed", int),
        "folds": _get(cp, "experiment", "folds", int),
        "ridge": float(ridge) if ridge else None,
    }


def _data_dir(cp, out):
    d = cp["data"]["dir"].strip()
    return Path(d) if d else Path(out)


def _data_path(cp, out, key):
    p = Path(cp["data"][key].strip())
    return p if p.is_absolute() else _data_dir(cp, out) / p


def _embed_dir(cp, out):
    d = cp["data"]["embed_dir"].strip()
    return Path(d) if d else Path(out)


def _write_config(cp, out, command):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"config.{command}.ini", "w") as fh:
        cp.write(fh)


# ------------------------------------------------------------------ helpers


def _fold_dir(out, f):
    return Path(out) / f"fold_{f:02d}"


def _load_pair(cp, out):
    X = io.read_matrix_csv(_data_path(cp, out, "x"))
    Y = io.read_matrix_csv(_data_path(cp, out, "y"))
    if X.n_samples != Y.n_samples:
        raise DataError(f"X has {X.n_samples} samples but Y has {Y.n_samples}")
    return X, Y


def _load_folds(cp, out, n, limit):
    folds = io.read_folds(_data_path(cp, out, "folds"), n)
    if limit is not None and limit > 0:
        folds = folds[:limit]
    return folds


def _split(M, fold):
    """Center the three subsets of ``M`` with the training means."""
    tr, va, te = fold
    means = feature_means(M.select_samples(tr))
    return tuple(center(M.select_samples(idx), means) for idx in (tr, va, te))


def _run_folds(func, ctx, n_folds, jobs):
    if jobs <= 1 or n_folds <= 1:
        return [func(ctx, f) for f in range(n_folds)]
    with ProcessPoolExecutor(max_workers=min(jobs, n_folds)) as pool:
        return list(pool.map(func, itertools.repeat(ctx, n_folds), range(n_folds)))


def _mean_std(values):
    a = np.asarray([v for v in values if v is not None and np.isfinite(v)], dtype=float)
    if a.size == 0:
        return {"mean": None, "std": None, "n": 0}
    return {"mean": float(a.mean()), "std": float(a.std()), "n": int(a.size)}


# ---------------------------------------------------------------- simulate


def cmd_simulate(cp, out):
    cfg = _sim_config(cp)
    data = simulate(cfg)
    out.mkdir(parents=True, exist_ok=True)
    samples = [f"s{j}" for j in range(cfg.n)]
    io.write_matrix_csv(out / "X.csv", data.X, sample_ids=samples, prefix="x")
    io.write_matrix_csv(out / "Y.csv", data.Y, sample_ids=samples, prefix="y")
    io.write_matrix_csv(out / "Z.csv", data.Z, sample_ids=samples, prefix="z")
    io.write_matrix_csv(out / "Wx.csv", data.params.wx.T, prefix="factor",
                        sample_ids=[f"x{i}" for i in range(cfg.p)])
    io.write_matrix_csv(out / "Wy.csv", data.params.wy.T, prefix="factor",
                        sample_ids=[f"y{i}" for i in range(cfg.q)])
    io.write_folds(out / "folds.json", data.folds)
    if data.graph_x is not None:
        save_edge_list(data.graph_x, out / "graph_x.csv")
        save_edge_list(data.graph_y, out / "graph_y.csv")
    if data.event is not None:
        io.write_labels_csv(out / "labels.csv", samples, data.event, data.time)
    io.write_json(out / "simulation.json", cfg.to_dict())
    return EXIT_OK


# ------------------------------------------------------------------- embed


def _grid(ctx, x_train, y_train):
    """Candidate solvers as ``(description, solver)`` pairs."""
    solver = ctx["solver"]
    p, q = x_train.n_features, y_train.n_features
    if solver == "cca":
        return [({"ridge": ctx["ridge"]}, CCASolver(ctx["ridge"]))]
    base = {"tol": ctx["tol"], "max_iter": ctx["max_iter"]}
    if solver == "scca":
        out = []
        for frac in ctx["c_frac"]:
            c1 = float(min(max(1.0, frac * np.sqrt(p)), np.sqrt(p)))
            c2 = float(min(max(1.0, frac * np.sqrt(q)), np.sqrt(q)))
            out.append(({"c_frac": frac, "c1": c1, "c2": c2},
                        SCCASolver(PenaltyConfig(c1=c1, c2=c2, **base))))
        return out
    gx, gy = ctx["graphs"] if ctx["graphs"] is not None else (
        graph_from_covariance(x_train, ctx["graph_threshold"]),
        graph_from_covariance(y_train, ctx["graph_threshold"]))
    s1 = float(np.linalg.norm(x_train.values @ y_train.values.T, 2))
    out = []
    for lg, l1 in itertools.product(ctx["lambda_graph"], ctx["lambda_l1"]):
        cfg = PenaltyConfig(lambda_graph_u=lg, lambda_graph_v=lg,
                            lambda_l1_u=l1 * s1 / np.sqrt(p),
                            lambda_l1_v=l1 * s1 / np.sqrt(q), **base)
        out.append(({"lambda_graph": lg, "lambda_l1": l1}, GNSCCASolver(gx, gy, cfg)))
    return out


def _embed_fold(ctx, f):
    out = _fold_dir(ctx["out"], f)
    out.mkdir(parents=True, exist_ok=True)
    X, Y = ctx["X"], ctx["Y"]
    fold = ctx["folds"][f]
    xtr, xva, xte = _split(X, fold)
    ytr, yva, yte = _split(Y, fold)
    tuning = []
    best = None
    try:
        grid = _grid(ctx, xtr, ytr)
    except (SingularityError, DegenerateError, DomainError) as exc:
        grid = []
        tuning.append({"error": f"{type(exc).__name__}: {exc}"})
    for point, solver in grid:
        try:
            basis = generate_embeddings(xtr, ytr, solver, ctx["scheme"], ctx["k"])
        except (SingularityError, DegenerateError, DomainError) as exc:
            tuning.append({"point": point, "error": f"{type(exc).__name__}: {exc}"})
            continue
        score = float(additional_correlations(xva, yva, basis).sum())
        tuning.append({"point": point, "val_sum_additional": score})
        # strict improvement: the first grid point wins ties
        if best is None or score > best[0]:
            best = (score, point, basis)
    result = {"fold": f, "tuning": tuning}
    if best is None:
        result["status"] = "failed"
        io.write_json(out / "metrics.json", result)
        return result
    _, point, basis = best
    save_embedding(basis, out, list(X.feature_ids or []) or None, list(Y.feature_ids or []) or None)
    ortho = orthogonality_matrix(basis.trace, basis)
    reports = {
        "train": MetricReport(additional_correlations(xtr, ytr, basis), ortho),
        "val": MetricReport(additional_correlations(xva, yva, basis)),
        "test": MetricReport(additional_correlations(xte, yte, basis)),
    }
    with open(out / "ortho.csv", "w") as fh:
        fh.write(reports["train"].ortho_csv())
    result.update({
        "status": "ok",
        "selected": point,
        "k": basis.k,
        "flags": list(basis.flags),
        "rhos_train": [float(r) for r in basis.rhos],
        "metrics": {name: rep.to_dict() for name, rep in reports.items()},
    })
    io.write_json(out / "metrics.json", result)
    return result


def cmd_embed(cp, out):
    exp = _experiment(cp)
    # stage 1 reads only the two modalities and the fold split, never labels
    X, Y = _load_pair(cp, out)
    folds = _load_folds(cp, out, X.n_samples, exp["folds"])
    if exp["solver"] == "cca" and exp["k"] > min(X.n_features, Y.n_features):
        raise ConfigError(f"k={exp['k']} exceeds min(p, q)")
    graphs = None
    if exp["solver"] == "gnscca":
        gx_path, gy_path = _data_path(cp, out, "graph_x"), _data_path(cp, out, "graph_y")
        if gx_path.is_file() and gy_path.is_file():
            graphs = (load_edge_list(gx_path, X.n_features), load_edge_list(gy_path, Y.n_features))
    c_frac = _get_list(cp, "penalty", "c_frac")
    if any(not 0 < c <= 1 for c in c_frac):
        raise ConfigError("c_frac entries must lie in (0, 1]")
    ctx = {
        "out": str(out), "X": X, "Y": Y, "folds": folds, "graphs": graphs,
        "solver": exp["solver"], "scheme": exp["scheme"], "k": exp["k"], "ridge": exp["ridge"],
        "c_frac": c_frac,
        "lambda_graph": _get_list(cp, "penalty", "lambda_graph"),
        "lambda_l1": _get_list(cp, "penalty", "lambda_l1"),
        "graph_threshold": _get(cp, "penalty", "graph_threshold", float),
        "tol": _get(cp, "penalty", "tol", float),
        "max_iter": _get(cp, "penalty", "max_iter", int),
    }
    try:
        PenaltyConfig(tol=ctx["tol"], max_iter=ctx["max_iter"])
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    results = _run_folds(_embed_fold, ctx, len(folds), exp["jobs"])
    summary = {
        "solver": exp["solver"], "scheme": exp["scheme"], "k": exp["k"],
        "folds": [{"fold": r["fold"], "status": r["status"]} for r in results],
        "n_failed": sum(r["status"] != "ok" for r in results),
    }
    io.write_json(out / "embed_summary.json", summary)
    if summary["n_failed"]:
        print(f"warning: {summary['n_failed']} of {len(results)} folds failed", file=sys.stderr)
    return EXIT_NUMERIC if summary["n_failed"] == len(results) else EXIT_OK


# ---------------------------------------------------------- predict-latent


def _embedded_splits(ctx, f):
    """Train/val/test embeddings and raw centered data of fold ``f``, or None."""
    emb_dir = _fold_dir(ctx["embed_dir"], f)
    if not (emb_dir / "U.csv").is_file():
        return None
    basis = load_embedding(emb_dir)
    fold = ctx["folds"][f]
    xs, ys = _split(ctx["X"], fold), _split(ctx["Y"], fold)
    if basis.u_mat.shape[0] != ctx["X"].n_features or basis.v_mat.shape[0] != ctx["Y"].n_features:
        raise DataError(f"embedding in {emb_dir} does not match the data dimensions")
    emb = [basis.embed(x, y) for x, y in zip(xs, ys)]
    return basis, xs, ys, emb


def _latent_fold(ctx, f):
    out = _fold_dir(ctx["out"], f)
    out.mkdir(parents=True, exist_ok=True)
    got = _embedded_splits(ctx, f)
    result = {"fold": f}
    if got is None:
        result["status"] = "failed"
        result["reason"] = "no embedding for this fold"
        io.write_json(out / "latent_mse.json", result)
        return result
    _, xs, ys, emb = got
    tr, va, te = ctx["folds"][f]
    Z = ctx["Z"]
    targets = [Z[:, idx] for idx in (tr, va, te)]
    mlp = ctx["mlp"]
    seed = ctx["seed"] + f

    def fit_eval(parts, hidden):
        train, val, test = parts
        model = mlp_fit(train, targets[0], hidden=hidden, seed=seed, epochs=mlp["epochs"],
                        lr=mlp["lr"], batch_size=mlp["batch_size"], momentum=mlp["momentum"],
                        val_inputs=val, val_targets=targets[1])
        return mse(mlp_predict(model, test), targets[2])

    inputs = {
        "embedding": (
            [e[0] for e in emb], [e[1] for e in emb],
            [np.vstack(e) for e in emb]),
        "raw": (
            [x.values for x in xs], [y.values for y in ys],
            [np.vstack([x.values, y.values]) for x, y in zip(xs, ys)]),
    }
    table = {}
    try:
        for method, (mx, my, mc) in inputs.items():
            table[method] = {
                "modality_1": fit_eval(mx, mlp["hidden"]),
                "modality_2": fit_eval(my, mlp["hidden"]),
                "concatenated": fit_eval(mc, mlp["hidden_concat"]),
            }
    except TrainingError as exc:
        result.update(status="failed", reason=str(exc))
        io.write_json(out / "latent_mse.json", result)
        return result
    result.update(status="ok", mse=table)
    io.write_json(out / "latent_mse.json", result)
    return result


def _mlp_settings(cp):
    mlp = {
        "hidden": _get(cp, "mlp", "hidden", int),
        "hidden_concat": _get(cp, "mlp", "hidden_concat", int),
        "epochs": _get(cp, "mlp", "epochs", int),
        "lr": _get(cp, "mlp", "lr", float),
        "batch_size": _get(cp, "mlp", "batch_size", int),
        "momentum": _get(cp, "mlp", "momentum", float),
    }
    if min(mlp["hidden"], mlp["hidden_concat"], mlp["epochs"], mlp["batch_size"]) < 1 or mlp["lr"] <= 0:
        raise ConfigError("MLP sizes, epochs and lr must be positive")
    return mlp


def cmd_predict_latent(cp, out):
    exp = _experiment(cp)
    X, Y = _load_pair(cp, out)
    Z = io.read_matrix_csv(_data_path(cp, out, "z")).values
    if Z.shape[1] != X.n_samples:
        raise DataError("Z and X disagree on the number of samples")
    folds = _load_folds(cp, out, X.n_samples, exp["folds"])
    ctx = {"out": str(out), "embed_dir": str(_embed_dir(cp, out)), "X": X, "Y": Y, "Z": Z,
           "folds": folds, "seed": exp["seed"], "mlp": _mlp_settings(cp)}
    results = _run_folds(_latent_fold, ctx, len(folds), exp["jobs"])
    lines = ["fold,input," + ",".join(LATENT_COLUMNS)]
    for r in results:
        if r["status"] != "ok":
            lines.append(f"{r['fold']},failed" + ",nan" * len(LATENT_COLUMNS))
            continue
        for method in ("raw", "embedding"):
            row = r["mse"][method]
            lines.append(f"{r['fold']},{method}," + ",".join(repr(row[c]) for c in LATENT_COLUMNS))
    with open(out / "latent_mse.csv", "w") as fh:
        fh.write("\n".join(lines) + "\n")
    n_failed = sum(r["status"] != "ok" for r in results)
    if n_failed:
        print(f"warning: {n_failed} of {len(results)} folds failed", file=sys.stderr)
    return EXIT_NUMERIC if n_failed == len(results) else EXIT_OK


# ---------------------------------------------------------------- survival


def _align_labels(ids, event, time, sample_ids):
    if sample_ids is None:
        if len(ids) != len(event):
            raise DataError("label count mismatch")
        return event, time
    pos = {sid: i for i, sid in enumerate(ids)}
    missing = [s for s in sample_ids if s not in pos]
    if missing:
        raise DataError(f"no survival label for samples {missing[:5]}")
    idx = np.array([pos[s] for s in sample_ids])
    return event[idx], time[idx]


def _survival_fold(ctx, f):
    out = _fold_dir(ctx["out"], f)
    out.mkdir(parents=True, exist_ok=True)
    result = {"fold": f}
    got = _embedded_splits(ctx, f)
    if got is None:
        result.update(status="failed", reason="no embedding for this fold")
        io.write_json(out / "survival.json", result)
        return result
    _, _, _, emb = got
    tr, _, te = ctx["folds"][f]
    event, time = ctx["event"], ctx["time"]
    if not event[tr].any():
        result.update(status="failed", reason="no events in the training set")
        io.write_json(out / "survival.json", result)
        return result
    feats = {
        "Genomics": (emb[0][0], emb[2][0]),
        "Imaging": (emb[0][1], emb[2][1]),
        "Concatenated": (np.vstack(emb[0]), np.vstack(emb[2])),
    }
    cidx = {}
    for name, (ftr, fte) in feats.items():
        stats = standardization_stats(ftr)
        model = coxph_fit(standardize(ftr, stats).values, (event[tr], time[tr]),
                          ctx["penalizer"], ctx["l1_ratio"])
        scores = risk_scores(model, standardize(fte, stats).values)
        try:
            cidx[name] = concordance_index((event[te], time[te]), scores)
        except DomainError:
            cidx[name] = None
    result.update(status="ok", c_index=cidx)
    io.write_json(out / "survival.json", result)
    return result


def cmd_survival(cp, out):
    exp = _experiment(cp)
    X, Y = _load_pair(cp, out)
    ids, event, time = io.read_labels_csv(_data_path(cp, out, "labels"))
    event, time = _align_labels(ids, event, time, X.sample_ids)
    folds = _load_folds(cp, out, X.n_samples, exp["folds"])
    penalizer = _get(cp, "survival", "penalizer", float)
    l1_ratio = _get(cp, "survival", "l1_ratio", float)
    if penalizer < 0 or not 0 <= l1_ratio <= 1:
        raise ConfigError("penalizer must be >= 0 and l1_ratio in [0, 1]")
    ctx = {"out": str(out), "embed_dir": str(_embed_dir(cp, out)), "X": X, "Y": Y,
           "folds": folds, "event": event, "time": time,
           "penalizer": penalizer, "l1_ratio": l1_ratio}
    results = _run_folds(_survival_fold, ctx, len(folds), exp["jobs"])
    lines = ["fold," + ",".join(SURVIVAL_COLUMNS)]
    for r in results:
        vals = [r["c_index"][c] if r["status"] == "ok" else None for c in SURVIVAL_COLUMNS]
        lines.append(f"{r['fold']}," + ",".join("nan" if v is None else repr(v) for v in vals))
    with open(out / "survival.csv", "w") as fh:
        fh.write("\n".join(lines) + "\n")
    n_failed = sum(r["status"] != "ok" for r in results)
    if n_failed:
        print(f"warning: {n_failed} of {len(results)} folds failed", file=sys.stderr)
    return EXIT_NUMERIC if n_failed == len(results) else EXIT_OK


# ------------------------------------------------------------------ report


def aggregate(run_dir):
    """Mean and population std over the per-fold files found in ``run_dir``."""
    run_dir = Path(run_dir)
    fold_dirs = sorted(d for d in run_dir.glob("fold_*") if d.is_dir())
    if not fold_dirs:
        raise DataError(f"no fold_* directories in {run_dir}")
    summary = {"n_folds": len(fold_dirs)}
    curves, orthos = [], []

    embeds = [io.read_json(d / "metrics.json") for d in fold_dirs if (d / "metrics.json").is_file()]
    if embeds:
        ok = [e for e in embeds if e["status"] == "ok"]
        summary["embed"] = {
            "n_failed": len(embeds) - len(ok),
            **{f"{split}_mean_additional": _mean_std(
                [e["metrics"][split]["mean_additional"] for e in ok]) for split in ("train", "val", "test")},
            "test_sum_additional": _mean_std([e["metrics"]["test"]["sum_additional"] for e in ok]),
        }
        curves = [cumulative_additional(e["metrics"]["test"]["additional_rhos"]) for e in ok]
        orthos = [np.array([[np.nan if a is None else a for a in row]
                            for row in e["metrics"]["train"]["ortho_matrix"]], dtype=float) for e in ok]

    latents = [io.read_json(d / "latent_mse.json") for d in fold_dirs if (d / "latent_mse.json").is_file()]
    if latents:
        ok = [r for r in latents if r["status"] == "ok"]
        summary["latent_mse"] = {"n_failed": len(latents) - len(ok)}
        for method in ("raw", "embedding"):
            summary["latent_mse"][method] = {
                c: _mean_std([r["mse"][method][c] for r in ok]) for c in LATENT_COLUMNS}

    survs = [io.read_json(d / "survival.json") for d in fold_dirs if (d / "survival.json").is_file()]
    if survs:
        ok = [r for r in survs if r["status"] == "ok"]
        summary["survival"] = {"n_failed": len(survs) - len(ok),
                               **{c: _mean_std([r["c_index"][c] for r in ok]) for c in SURVIVAL_COLUMNS}}
    return summary, curves, orthos


def cmd_report(cp, out):
    summary, curves, orthos = aggregate(_embed_dir(cp, out))
    io.write_json(out / "summary.json", summary)
    if curves:
        kmax = max(len(c) for c in curves)
        lines = ["step,mean,std,n_folds"]
        for j in range(kmax):
            vals = [c[j] for c in curves if len(c) > j]
            st = _mean_std(vals)
            lines.append(f"{j + 1},{st['mean']!r},{st['std']!r},{st['n']}")
        with open(out / "additional_curve.csv", "w") as fh:
            fh.write("\n".join(lines) + "\n")
    if orthos:
        k = max(o.shape[0] for o in orthos)
        stack = np.full((len(orthos), k, k), np.nan)
        for i, o in enumerate(orthos):
            stack[i, :o.shape[0], :o.shape[1]] = o
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            mean = np.nanmean(stack, axis=0)
        with open(out / "ortho_mean.csv", "w") as fh:
            fh.write(MetricReport(np.zeros(k), mean).ortho_csv())
    failed = sum(v.get("n_failed", 0) for v in summary.values() if isinstance(v, dict))
    if failed:
        print(f"warning: {failed} failed fold results excluded from the aggregates", file=sys.stderr)
    return EXIT_OK


# -------------------------------------------------------------------- main

COMMANDS = {
    "simulate": cmd_simulate,
    "embed": cmd_embed,
    "predict-latent": cmd_predict_latent,
    "survival": cmd_survival,
    "report": cmd_report,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser():
    parser = _Parser(prog="ccafusion", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="INI configuration file")
        sp.add_argument("--out", type=Path, required=True, help="output (and default data) directory")
        sp.add_argument("--seed", type=int, help="overrides [experiment] seed")
        sp.add_argument("--folds", type=int, help="overrides [experiment] folds")
        sp.add_argument("--jobs", type=int, help="parallel fold workers")
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        cp = load_config(args.config, overrides={
            ("experiment", "seed"): args.seed,
            ("experiment", "folds"): args.folds,
            ("experiment", "jobs"): args.jobs,
        })
        out = args.out
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise DataError(f"cannot create output directory {out}: {exc}") from exc
        _write_config(cp, out, args.command)
        return COMMANDS[args.command](cp, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DimensionError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SingularityError, DegenerateError, TrainingError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, CCAError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
