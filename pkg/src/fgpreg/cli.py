"""Command-line pipeline: simulate, fit, predict, baseline.

Every command takes ``--config PATH`` (a single JSON document; unspecified
tunables take their documented defaults) plus optional ``--seed`` and
``--out`` overrides.  Relative paths inside the config resolve against the
config file's directory.  All randomness flows from the one config seed,
so re-running a command writes byte-identical files.

On failure the process exits nonzero after printing a one-line JSON error
object to stderr.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import io as fio
from .basis import SplineSpec, build_basis
from .errors import ConfigError, FgpError
from .gwr import GwrConfig, gwr_fit_predict, select_bandwidth_cv
from .inference import run_chains
from .model import ModelSpec, default_decay_support
from .prediction import evaluate_metrics, latent_surfaces, posterior_predictive
from .simulation import (
    MISSPECIFIED_IDS,
    ScenarioSpec,
    WELL_SPECIFIED_IDS,
    generate_misspecified,
    generate_scenario,
)

GRID_MAX_DRAWS = 64


def _resolve(base_dir, path):
    if path is None:
        return None
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def _data_path(cfg, key, default_name):
    explicit = cfg["data"].get(key)
    if explicit:
        return _resolve(cfg["_base_dir"], explicit)
    return os.path.join(cfg["out_dir"], default_name)


def _load(args):
    cfg = fio.load_config(args.config, seed=args.seed, out_dir=args.out)
    base_dir = os.path.dirname(os.path.abspath(args.config))
    cfg["_base_dir"] = base_dir
    cfg["out_dir"] = _resolve(base_dir, cfg["out_dir"])
    return cfg


def cmd_simulate(args):
    cfg = _load(args)
    scenario = cfg.get("scenario") or {}
    if "id" not in scenario:
        raise ConfigError("config.scenario.id is required for simulate")
    sid = int(scenario["id"])
    if sid not in WELL_SPECIFIED_IDS + MISSPECIFIED_IDS:
        raise ConfigError(f"scenario id must be in 1..8, got {sid}")
    overrides = {k: v for k, v in scenario.items() if k != "id"}
    for key in ("basis_counts", "beta_variance_range", "beta_decay_range",
                "eta_variance_range", "eta_decay_range"):
        if key in overrides:
            overrides[key] = tuple(overrides[key])
    spec = ScenarioSpec.from_id(sid, seed=cfg["seed"], **overrides)
    generate = generate_misspecified if spec.misspecified else generate_scenario
    train, test, truth = generate(spec)

    out = cfg["out_dir"]
    os.makedirs(out, exist_ok=True)
    fio.write_train(out, train)
    fio.write_test(out, test)
    fio.write_json(os.path.join(out, "truth.json"), truth)

    resolved = {k: v for k, v in cfg.items() if not k.startswith("_")}
    resolved["model"]["basis"]["counts"] = list(spec.basis_counts)
    resolved["model"]["basis"]["bounds"] = [[0.0, 1.0] for _ in range(spec.p)]
    fio.write_json(os.path.join(out, "config_used.json"), resolved)

    sd = float(np.std(train.Y))
    print(f"scenario {sid}: wrote {out} (n={train.n}, S={train.S}, "
          f"n_test={test.n_test}, S_test={test.S_test}, response sd={sd:.3f})")
    return 0


def _read_training(cfg):
    train_path = _data_path(cfg, "train", "train.csv")
    globals_path = _data_path(cfg, "globals", "globals.csv")
    return fio.read_train(train_path, globals_path)


def _model_spec(cfg, data):
    mc = cfg["model"]
    bc = mc["basis"]
    counts = tuple(int(c) for c in bc["counts"])
    if bc["bounds"] == "auto":
        bounds = tuple((float(data.Z[:, d].min()), float(data.Z[:, d].max()))
                       for d in range(data.p))
    else:
        bounds = tuple((float(lo), float(hi)) for lo, hi in bc["bounds"])
    if len(counts) != data.p:
        raise ConfigError(
            f"basis has {len(counts)} dimensions but data has {data.p} global predictors"
        )
    basis = build_basis(SplineSpec(counts=counts, bounds=bounds, degree=int(bc["degree"])))
    decay = mc["prior_decay"]
    if decay == "auto":
        decay = default_decay_support(data.locations)
    return ModelSpec(
        basis=basis,
        nu_beta=float(mc["nu_beta"]),
        nu_eta=float(mc["nu_eta"]),
        prior_variance=tuple(mc["prior_variance"]),
        prior_nugget=tuple(mc["prior_nugget"]),
        prior_decay=(float(decay[0]), float(decay[1])),
    )


def cmd_fit(args):
    cfg = _load(args)
    data = _read_training(cfg)
    spec = _model_spec(cfg, data)
    mcmc = fio.mcmc_config(cfg)
    out = cfg["out_dir"]
    os.makedirs(out, exist_ok=True)

    start = time.perf_counter()
    chains = run_chains(data, spec.basis, spec, mcmc, progress=args.progress)
    elapsed = time.perf_counter() - start

    fio.write_draws(os.path.join(out, "draws.csv"), chains, spec.nu_beta, spec.nu_eta)
    report = {
        "n_chains": len(chains),
        "retained_per_chain": len(chains[0].draws),
        "acceptance_rates": [c.acceptance_rates for c in chains],
        "step_history": [c.step_history for c in chains],
        "n_failures": [c.n_failures for c in chains],
        "prior_decay": list(spec.prior_decay),
    }
    fio.write_json(os.path.join(out, "acceptance.json"), report)
    trace_rows = []
    for it in range(len(chains[0].log_posterior_trace)):
        trace_rows.append([it + 1] + [repr(float(c.log_posterior_trace[it])) for c in chains])
    fio.write_csv(os.path.join(out, "trace.csv"),
                   ["iteration"] + [f"chain_{c.chain_index}" for c in chains],
                   trace_rows)

    nuggets = np.array([d.nugget for c in chains for d in c.draws])
    rates = {k: np.mean([c.acceptance_rates[k] for c in chains])
             for k in chains[0].acceptance_rates}
    worst = min(rates.values())
    best = max(rates.values())
    print(f"fit: {len(chains)} chains x {len(chains[0].draws)} draws in {elapsed:.1f}s; "
          f"acceptance {worst:.2f}..{best:.2f}; "
          f"nugget posterior mean {nuggets.mean():.4f}")
    return 0


def _read_testset(cfg):
    test_path = _data_path(cfg, "test", "test.csv")
    globals_path = _data_path(cfg, "test_globals", "test_globals.csv")
    return fio.read_test(test_path, globals_path)


def cmd_predict(args):
    cfg = _load(args)
    data = _read_training(cfg)
    spec = _model_spec(cfg, data)
    test = _read_testset(cfg)
    out = cfg["out_dir"]
    states, q, K = fio.read_draws(os.path.join(out, "draws.csv"))
    if q != data.q or K != spec.basis.K:
        raise ConfigError(
            f"draws were made for q={q}, K={K} but the configured model has "
            f"q={data.q}, K={spec.basis.K}"
        )
    pcfg = cfg["predict"]
    max_draws = None if pcfg["max_draws"] is None else int(pcfg["max_draws"])
    pred = posterior_predictive(
        states, data, spec.basis, test,
        seed=cfg["seed"],
        n_deviates=int(pcfg["n_deviates"]),
        max_draws=max_draws,
    )
    metrics = None
    if test.Y_test is not None:
        metrics = evaluate_metrics(pred, test.Y_test)
        fio.write_json(os.path.join(out, "metrics.json"), metrics)
    fio.write_predictions(os.path.join(out, "predictions.csv"), test, pred,
                          truth=test.Y_test, metrics=metrics)
    if args.grid:
        _export_grid(cfg, data, spec, states, args.grid, out)
    if metrics:
        print("predict: " + "  ".join(f"{k}={v:.4f}" for k, v in metrics.items()))
    else:
        print(f"predict: wrote {test.n_points} predictions (no truth column)")
    return 0


def _export_grid(cfg, data, spec, states, grid_wh, out):
    """Posterior coefficient surfaces on a regular grid, mixed over an
    evenly spaced subset of draws (for external surface plots)."""
    w, h = grid_wh
    pts = data.locations.points
    gx = np.linspace(pts[:, 0].min(), pts[:, 0].max(), w)
    gy = np.linspace(pts[:, 1].min(), pts[:, 1].max(), h)
    grid = np.array([(x, y) for y in gy for x in gx])
    idx = np.unique(np.linspace(0, len(states) - 1,
                                min(GRID_MAX_DRAWS, len(states))).round().astype(int))
    subset = [states[i] for i in idx]
    mean_acc = None
    second_acc = None
    for state in subset:
        surf = latent_surfaces(state, data, spec.basis, grid)
        means = np.vstack([surf.beta_mean, surf.eta_mean])
        sds = np.vstack([surf.beta_sd, surf.eta_sd])
        if mean_acc is None:
            mean_acc = np.zeros_like(means)
            second_acc = np.zeros_like(means)
        mean_acc += means
        second_acc += sds**2 + means**2
    mean_mix = mean_acc / len(subset)
    sd_mix = np.sqrt(np.maximum(second_acc / len(subset) - mean_mix**2, 1e-30))
    q = data.q
    rows = []
    for surf_idx in range(mean_mix.shape[0]):
        kind = "beta" if surf_idx < q else "eta"
        label = surf_idx + 1 if surf_idx < q else surf_idx - q + 1
        for g, (x, y) in enumerate(grid):
            rows.append([kind, label, repr(float(x)), repr(float(y)),
                         repr(float(mean_mix[surf_idx, g])),
                         repr(float(sd_mix[surf_idx, g]))])
    fio.write_csv(os.path.join(out, "surfaces_grid.csv"),
                   ["kind", "index", "u1", "u2", "mean", "sd"], rows)
    print(f"grid: wrote {w}x{h} coefficient surfaces over {len(subset)} draws")


def cmd_baseline(args):
    cfg = _load(args)
    data = _read_training(cfg)
    test = _read_testset(cfg)
    out = cfg["out_dir"]
    os.makedirs(out, exist_ok=True)
    gcfg = GwrConfig(bandwidth=cfg["gwr"]["bandwidth"])
    bandwidth = gcfg.bandwidth
    if bandwidth == "cv":
        bandwidth = select_bandwidth_cv(data, gcfg)
        print(f"baseline: cross-validated bandwidth {bandwidth:.3f}")
        gcfg = GwrConfig(bandwidth=bandwidth)
    pred = gwr_fit_predict(data, test, gcfg)
    metrics = None
    if test.Y_test is not None:
        metrics = evaluate_metrics(pred, test.Y_test)
        fio.write_json(os.path.join(out, "gwr_metrics.json"), metrics)
    fio.write_predictions(os.path.join(out, "gwr_predictions.csv"), test, pred,
                          truth=test.Y_test, metrics=metrics)
    if metrics:
        print("baseline: " + "  ".join(f"{k}={v:.4f}" for k, v in metrics.items()))
    else:
        print(f"baseline: wrote {test.n_points} predictions (no truth column)")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="fgpreg",
        description="Functional Gaussian-process regression pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "simulate": cmd_simulate,
        "fit": cmd_fit,
        "predict": cmd_predict,
        "baseline": cmd_baseline,
    }
    for name in commands:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the run config JSON")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override output directory")
        if name == "fit":
            p.add_argument("--progress", action="store_true",
                           help="print per-chain progress lines")
        if name == "predict":
            p.add_argument("--grid", type=int, nargs=2, metavar=("W", "H"),
                           help="also export coefficient surfaces on a WxH grid")
    args = parser.parse_args(argv)
    try:
        return commands[args.command](args)
    except FgpError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2
    except Exception as exc:  # unexpected: still machine-readable
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
