"""File formats and run configuration.

Flat-file schemas, all versioned with a ``#schema=...`` comment line:

* ``train.csv``: ``s,u1,u2,y,x_1..x_q`` (long format, realization-major)
* ``globals.csv``: ``s,z_1..z_p`` (one row per realization)
* ``test.csv`` / ``test_globals.csv``: same, ``y`` optional in test.csv
* ``draws.csv``: one row per retained draw, columns
  ``chain,draw,beta<j>_variance,beta<j>_decay,...,eta<k>_variance,
  eta<k>_decay,...,nugget``
* ``predictions.csv``: ``s,u1,u2,mean,sd,lower95,upper95[,truth]``

Floats are written with ``repr`` (shortest round-trip), so identical runs
produce byte-identical files.  Realization labels in files are 1-based.
"""

import csv
import json
import os

import numpy as np

from .errors import ConfigError
from .inference import McmcConfig, PosteriorDraws
from .kernels import KernelParams, LocationSet
from .model import Dataset, ParamState
from .prediction import TestSet

SCHEMA_DATA = "#schema=fgp-v1"
SCHEMA_DRAWS = "#schema=fgp-draws-v1"
SCHEMA_PRED = "#schema=fgp-pred-v1"


def _fmt(value):
    return repr(float(value))


def write_csv(path, header, rows, schema=SCHEMA_DATA, trailer=()):
    with open(path, "w", newline="") as fh:
        fh.write(schema + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
        for line in trailer:
            fh.write(line + "\n")


def _read_csv(path, required):
    """Rows as dicts; raises ConfigError naming missing columns and, for
    malformed rows, the offending line number."""
    if not os.path.exists(path):
        raise ConfigError(f"file not found: {path}")
    with open(path, newline="") as fh:
        lines = [(i + 1, line) for i, line in enumerate(fh)
                 if not line.startswith("#") and line.strip()]
    if not lines:
        raise ConfigError(f"{path}: empty file")
    header = next(csv.reader([lines[0][1]]))
    missing = [c for c in required if c not in header]
    if missing:
        raise ConfigError(f"{path}: missing column(s) {', '.join(missing)}")
    rows = []
    for lineno, raw in lines[1:]:
        values = next(csv.reader([raw]))
        if len(values) != len(header):
            raise ConfigError(
                f"{path}:{lineno}: expected {len(header)} fields, got {len(values)}"
            )
        rows.append((lineno, dict(zip(header, values))))
    return header, rows


def _parse_float(path, lineno, column, value):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{path}:{lineno}: bad value {value!r} in column {column}") from None


# -- training / test data ---------------------------------------------------


def write_train(out_dir, data, train_name="train.csv", globals_name="globals.csv"):
    q = data.q
    header = ["s", "u1", "u2", "y"] + [f"x_{j + 1}" for j in range(q)]
    rows = []
    for s in range(data.S):
        for i in range(data.n):
            u = data.locations[i]
            rows.append([s + 1, _fmt(u[0]), _fmt(u[1]), _fmt(data.Y[s * data.n + i])]
                        + [_fmt(v) for v in data.X[i]])
    write_csv(os.path.join(out_dir, train_name), header, rows)
    _write_globals(os.path.join(out_dir, globals_name), data.Z)


def _write_globals(path, z):
    header = ["s"] + [f"z_{d + 1}" for d in range(z.shape[1])]
    rows = [[s + 1] + [_fmt(v) for v in z[s]] for s in range(z.shape[0])]
    write_csv(path, header, rows)


def write_test(out_dir, test, test_name="test.csv", globals_name="test_globals.csv"):
    q = test.X_test.shape[1]
    header = ["s", "u1", "u2"] + [f"x_{j + 1}" for j in range(q)]
    with_y = test.Y_test is not None
    if with_y:
        header.append("y")
    rows = []
    for s in range(test.S_test):
        for i in range(test.n_test):
            u = test.locations[i]
            row = [s + 1, _fmt(u[0]), _fmt(u[1])] + [_fmt(v) for v in test.X_test[i]]
            if with_y:
                row.append(_fmt(test.Y_test[s * test.n_test + i]))
            rows.append(row)
    write_csv(os.path.join(out_dir, test_name), header, rows)
    _write_globals(os.path.join(out_dir, globals_name), test.Z_test)


def _read_globals(path):
    header, rows = _read_csv(path, required=["s", "z_1"])
    z_cols = sorted((c for c in header if c.startswith("z_")),
                    key=lambda c: int(c.split("_")[1]))
    z = np.array([[_parse_float(path, ln, c, r[c]) for c in z_cols] for ln, r in rows])
    labels = [int(r["s"]) for _, r in rows]
    return z, labels


def _read_points(path, want_y):
    """Shared reader for train/test long files; returns per-realization
    blocks checked for a consistent location grid."""
    required = ["s", "u1", "u2"] + (["y"] if want_y else [])
    header, rows = _read_csv(path, required)
    x_cols = sorted((c for c in header if c.startswith("x_")),
                    key=lambda c: int(c.split("_")[1]))
    has_y = "y" in header
    order = []
    groups = {}
    for lineno, row in rows:
        s = int(row["s"])
        if s not in groups:
            groups[s] = []
            order.append(s)
        u = (_parse_float(path, lineno, "u1", row["u1"]),
             _parse_float(path, lineno, "u2", row["u2"]))
        x = [_parse_float(path, lineno, c, row[c]) for c in x_cols]
        y = _parse_float(path, lineno, "y", row["y"]) if has_y else None
        groups[s].append((u, x, y))
    first = groups[order[0]]
    locations = np.array([g[0] for g in first])
    x_mat = np.array([g[1] for g in first]) if x_cols else np.ones((len(first), 1))
    for s in order:
        if len(groups[s]) != len(first):
            raise ConfigError(f"{path}: realization {s} has {len(groups[s])} rows, "
                              f"expected {len(first)}")
        locs_s = np.array([g[0] for g in groups[s]])
        if not np.array_equal(locs_s, locations):
            raise ConfigError(f"{path}: realization {s} uses a different location grid")
    y_stack = None
    if has_y:
        y_stack = np.array([g[2] for s in order for g in groups[s]])
    return locations, x_mat, y_stack, order


def read_train(train_path, globals_path):
    locations, x_mat, y_stack, order = _read_points(train_path, want_y=True)
    z, labels = _read_globals(globals_path)
    if labels != order:
        raise ConfigError(
            f"{globals_path}: realization labels {labels} do not match "
            f"{train_path} order {order}"
        )
    return Dataset(locations=LocationSet(locations), X=x_mat, Z=z, Y=y_stack)


def read_test(test_path, globals_path):
    locations, x_mat, y_stack, order = _read_points(test_path, want_y=False)
    z, labels = _read_globals(globals_path)
    if labels != order:
        raise ConfigError(
            f"{globals_path}: realization labels {labels} do not match "
            f"{test_path} order {order}"
        )
    return TestSet(locations=LocationSet(locations), X_test=x_mat, Z_test=z,
                   Y_test=y_stack)


# -- posterior draws -----------------------------------------------------------


def draw_columns(q, K):
    cols = []
    for j in range(q):
        cols += [f"beta{j + 1}_variance", f"beta{j + 1}_decay"]
    for k in range(K):
        cols += [f"eta{k + 1}_variance", f"eta{k + 1}_decay"]
    cols.append("nugget")
    return cols


def write_draws(path, chains, nu_beta, nu_eta):
    """One row per retained draw across all chains, in chain order."""
    if isinstance(chains, PosteriorDraws):
        chains = [chains]
    first = chains[0].draws[0]
    q, K = first.q, first.K
    header = ["chain", "draw"] + draw_columns(q, K)
    rows = []
    for chain in chains:
        for d, state in enumerate(chain.draws):
            row = [chain.chain_index, d]
            for kp in state.beta_kernels + state.eta_kernels:
                row += [_fmt(kp.variance), _fmt(kp.decay)]
            row.append(_fmt(state.nugget))
            rows.append(row)
    meta = f"#q={q} K={K} nu_beta={_fmt(nu_beta)} nu_eta={_fmt(nu_eta)}"
    with open(path, "w", newline="") as fh:
        fh.write(SCHEMA_DRAWS + "\n")
        fh.write(meta + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def read_draws(path):
    """Returns (states, q, K) rebuilt from a draws file."""
    if not os.path.exists(path):
        raise ConfigError(f"file not found: {path}")
    meta = {}
    with open(path, newline="") as fh:
        lines = fh.readlines()
    for line in lines:
        if line.startswith("#") and "q=" in line:
            for part in line.lstrip("#").split():
                key, _, val = part.partition("=")
                meta[key] = float(val)
    if "q" not in meta or "K" not in meta:
        raise ConfigError(f"{path}: missing q/K metadata line")
    q, K = int(meta["q"]), int(meta["K"])
    nu_beta = meta.get("nu_beta", 0.5)
    nu_eta = meta.get("nu_eta", 0.5)
    cols = draw_columns(q, K)
    header, rows = _read_csv(path, required=["chain", "draw"] + cols)
    states = []
    for lineno, row in rows:
        vals = {c: _parse_float(path, lineno, c, row[c]) for c in cols}
        beta = tuple(
            KernelParams(vals[f"beta{j + 1}_variance"], vals[f"beta{j + 1}_decay"], nu_beta)
            for j in range(q)
        )
        eta = tuple(
            KernelParams(vals[f"eta{k + 1}_variance"], vals[f"eta{k + 1}_decay"], nu_eta)
            for k in range(K)
        )
        states.append(ParamState(beta, eta, vals["nugget"]))
    return states, q, K


# -- predictions -----------------------------------------------------------------


def write_predictions(path, test, pred, truth=None, metrics=None):
    header = ["s", "u1", "u2", "mean", "sd", "lower95", "upper95"]
    if truth is not None:
        header.append("truth")
    rows = []
    idx = 0
    for s in range(test.S_test):
        for i in range(test.n_test):
            u = test.locations[i]
            row = [s + 1, _fmt(u[0]), _fmt(u[1]), _fmt(pred.mean[idx]), _fmt(pred.sd[idx]),
                   _fmt(pred.lower95[idx]), _fmt(pred.upper95[idx])]
            if truth is not None:
                row.append(_fmt(truth[idx]))
            rows.append(row)
            idx += 1
    trailer = []
    if metrics is not None:
        trailer = [f"#metric {k}={_fmt(v)}" for k, v in metrics.items()]
    write_csv(path, header, rows, schema=SCHEMA_PRED, trailer=trailer)


# -- truth records and JSON helpers --------------------------------------------------


def _to_jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    return obj


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_to_jsonable(payload), fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_json(path):
    if not os.path.exists(path):
        raise ConfigError(f"file not found: {path}")
    with open(path) as fh:
        return json.load(fh)


# -- run configuration ------------------------------------------------------------------


DEFAULT_CONFIG = {
    "seed": 0,
    "out_dir": "fgp_run",
    "scenario": None,  # {"id": 1..8}
    "data": {
        "train": None,
        "globals": None,
        "test": None,
        "test_globals": None,
    },
    "model": {
        "basis": {"degree": 3, "counts": [5, 5], "bounds": "auto"},
        "nu_beta": 0.5,
        "nu_eta": 0.5,
        "prior_variance": [2.0, 1.0],
        "prior_nugget": [2.0, 1.0],
        "prior_decay": "auto",
    },
    "mcmc": {
        "n_iter": 5000,
        "burn_in": 2000,
        "thin": 3,
        "n_chains": 2,
        "target_accept": 0.3,
        "adapt_window": 50,
        "initial_step": 0.5,
    },
    "predict": {"max_draws": 512, "n_deviates": 1},
    "gwr": {"bandwidth": "cv"},
}


def _deep_merge(base, override):
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        elif value is None and isinstance(out.get(key), dict):
            pass  # null never erases a section of defaults
        else:
            out[key] = value
    return out


def load_config(path, seed=None, out_dir=None):
    """Read a config file and fill every unspecified tunable with its
    default; ``seed`` and ``out_dir`` override the file values."""
    raw = read_json(path)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    cfg = _deep_merge(DEFAULT_CONFIG, raw)
    if seed is not None:
        cfg["seed"] = int(seed)
    if out_dir is not None:
        cfg["out_dir"] = str(out_dir)
    return cfg


def mcmc_config(cfg):
    m = cfg["mcmc"]
    return McmcConfig(
        n_iter=int(m["n_iter"]),
        burn_in=int(m["burn_in"]),
        thin=int(m["thin"]),
        n_chains=int(m["n_chains"]),
        seed=int(cfg["seed"]),
        target_accept=float(m["target_accept"]),
        adapt_window=int(m["adapt_window"]),
        initial_step=float(m["initial_step"]),
    )
