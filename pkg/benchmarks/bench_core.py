"""Compare the compiled covariance core against the NumPy fallback.

Times the operations the sampler and predictor hit in their inner loops, at
the default simulation-study scale (S = 10 realizations, n = 100 sites,
q + K = 28 components), plus one mini MCMC run end to end per backend.

Run:  python benchmarks/bench_core.py [--iters 200]
"""

import argparse
import importlib
import os
import subprocess
import sys
import time

import numpy as np


def time_op(fn, repeat):
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - start) / repeat * 1e3  # ms


def bench_backend(core, repeat):
    rng = np.random.default_rng(0)
    S, n, m = 10, 100, 28
    pts_a = rng.uniform(0, 100, (n, 2))
    pts_b = rng.uniform(0, 100, (250, 2))
    dist = np.sqrt(((pts_a[:, None, :] - pts_a[None, :, :]) ** 2).sum(-1))
    weights = rng.uniform(0, 1, (m, S))
    blocks = rng.standard_normal((m, n, n))
    blocks = blocks + blocks.transpose(0, 2, 1)
    sigma = core.assemble_blocks(weights, blocks, 1.0)
    w = weights[3].copy()
    delta = rng.standard_normal((n, n))
    delta = delta + delta.T

    results = {}
    results["matern_from_dist (100x100)"] = time_op(
        lambda: core.matern_from_dist(dist, 2.0, 0.2, 0.5), repeat * 5)
    results["matern_pairwise (1000x250)"] = time_op(
        lambda: core.matern_pairwise(np.tile(pts_a, (10, 1)), pts_b, 2.0, 0.2, 0.5),
        repeat)
    results["assemble_blocks (28 -> 1000^2)"] = time_op(
        lambda: core.assemble_blocks(weights, blocks, 1.0), repeat)
    results["block_add (1000^2)"] = time_op(
        lambda: core.block_add(sigma, w, delta), repeat)
    results["block_collapse (1000^2 -> 100^2)"] = time_op(
        lambda: core.block_collapse(sigma, w, n), repeat)
    results["col_collapse (1000^2 -> 1000x100)"] = time_op(
        lambda: core.col_collapse(sigma, w, n), repeat)
    work = sigma.copy()
    results["symmetrize_lower (1000^2)"] = time_op(
        lambda: core.symmetrize_lower(work), repeat)
    return results


def bench_mcmc():
    """End-to-end mini chain at study scale under the active backend."""
    from fgpreg.basis import build_basis
    from fgpreg.inference import McmcConfig, initialize_state, run_chain
    from fgpreg.model import ModelSpec, default_decay_support
    from fgpreg.simulation import ScenarioSpec, generate_scenario

    spec = ScenarioSpec.from_id(1, seed=0)
    train, _, _ = generate_scenario(spec)
    basis = build_basis(spec.spline_spec())
    mspec = ModelSpec(basis=basis, prior_decay=default_decay_support(train.locations))
    init = initialize_state(train, basis, mspec)
    config = McmcConfig(n_iter=30, burn_in=20, thin=1, n_chains=1, seed=0,
                        adapt_window=10)
    start = time.perf_counter()
    run_chain(init, config, train, basis, mspec)
    per_iter = (time.perf_counter() - start) / config.n_iter * 1e3
    return per_iter


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--iters", type=int, default=200)
    args = parser.parse_args()

    if os.environ.get("_FGP_BENCH_CHILD") != "1":
        # run the MCMC leg once per backend in clean interpreters (the
        # backend is chosen at import time)
        print(f"{'operation':40s} {'cython':>10s} {'numpy':>10s} {'speedup':>8s}")
        from fgpreg import _core_py

        try:
            from fgpreg import _core
        except ImportError:
            print("compiled core not built; showing the NumPy fallback only")
            for name, ms in bench_backend(_core_py, args.iters).items():
                print(f"{name:40s} {'-':>10s} {ms:9.3f}ms")
            return
        cy = bench_backend(_core, args.iters)
        py = bench_backend(_core_py, args.iters)
        for name in cy:
            ratio = py[name] / cy[name] if cy[name] > 0 else float("inf")
            print(f"{name:40s} {cy[name]:9.3f}ms {py[name]:9.3f}ms {ratio:7.2f}x")
        print()
        for backend in ("cython", "numpy"):
            env = dict(os.environ, FGPREG_BACKEND=backend, _FGP_BENCH_CHILD="1",
                       OPENBLAS_NUM_THREADS="1")
            out = subprocess.run([sys.executable, __file__], env=env,
                                 capture_output=True, text=True)
            print(f"mcmc iteration ({backend} backend): {out.stdout.strip()}")
        return

    import fgpreg  # noqa: F401  (backend chosen via FGPREG_BACKEND)

    print(f"{bench_mcmc():.1f} ms")


if __name__ == "__main__":
    main()
