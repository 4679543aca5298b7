"""Adaptive random-walk Metropolis-Hastings over the covariance parameters.

Each iteration cycles a fixed block order: one block per functional-
predictor kernel, one per basis-coefficient kernel (variance and decay
proposed jointly on the log scale), then the nugget.  Positive parameters
update multiplicatively, ``theta' = theta * exp(eps)`` with
``eps ~ N(0, step^2)``, and the acceptance ratio carries the log-scale
Jacobian ``sum(log theta' - log theta)``.  Step sizes adapt only during
burn-in (scaled by ``exp(rate - target)`` every ``adapt_window``
iterations) and freeze afterwards, so retained draws come from a fixed
transition kernel.

Chains are strictly sequential processes owning their RNG stream, derived
from ``(seed, chain_index)``; :func:`run_chains` runs them in separate
processes with the BLAS pinned to one thread each, and results do not
depend on scheduling.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .engine import LikelihoodEngine
from .errors import InitializationError, InvalidInputError, NumericalError
from .kernels import KernelParams
from .model import ParamState, log_prior, log_prior_kernel, log_prior_nugget

REBUILD_EVERY = 250  # iterations between full covariance reassemblies


@dataclass(frozen=True)
class McmcConfig:
    """Sampler tuning constants."""

    n_iter: int = 5000
    burn_in: int = 2000
    thin: int = 3
    n_chains: int = 2
    seed: int = 0
    target_accept: float = 0.3
    adapt_window: int = 50
    initial_step: float = 0.5

    def __post_init__(self):
        if not (0 <= self.burn_in < self.n_iter):
            raise InvalidInputError("need 0 <= burn_in < n_iter")
        if self.thin < 1 or self.n_chains < 1:
            raise InvalidInputError("thin and n_chains must be >= 1")
        if not (0.0 < self.target_accept < 1.0):
            raise InvalidInputError("target_accept must lie in (0, 1)")
        if self.adapt_window < 1:
            raise InvalidInputError("adapt_window must be >= 1")


@dataclass
class PosteriorDraws:
    """Retained states of one chain plus acceptance and tuning metadata.

    ``step_history`` records ``(iteration, {block: step})`` at every
    adaptation event and once at the end, which makes the post-burn-in
    freeze checkable.  ``n_failures`` counts proposals rejected because the
    likelihood failed numerically.
    """

    draws: list
    acceptance_rates: dict
    log_posterior_trace: np.ndarray
    step_history: list = field(default_factory=list)
    n_failures: int = 0
    chain_index: int = 0
    seed: int = 0

    def __post_init__(self):
        for rate in self.acceptance_rates.values():
            if not (0.0 <= rate <= 1.0):
                raise InvalidInputError(f"acceptance rate {rate} outside [0, 1]")

    @classmethod
    def concat(cls, chains):
        """Pool several chains: draws concatenated in chain order,
        acceptance rates averaged, traces stacked end to end."""
        chains = list(chains)
        if not chains:
            raise InvalidInputError("no chains to concatenate")
        draws = [d for c in chains for d in c.draws]
        keys = chains[0].acceptance_rates.keys()
        rates = {k: float(np.mean([c.acceptance_rates[k] for c in chains])) for k in keys}
        trace = np.concatenate([c.log_posterior_trace for c in chains])
        failures = sum(c.n_failures for c in chains)
        return cls(draws=draws, acceptance_rates=rates, log_posterior_trace=trace,
                   step_history=[], n_failures=failures, chain_index=-1,
                   seed=chains[0].seed)


def block_ids(q, K):
    """The fixed sweep order: beta blocks, eta blocks, then the nugget."""
    return [("beta", j) for j in range(q)] + [("eta", k) for k in range(K)] + [("nugget",)]


def block_label(block):
    return block[0] if block[0] == "nugget" else f"{block[0]}_{block[1]}"


def _replace_kernel(state, block, params):
    kind, idx = block
    if kind == "beta":
        kernels = state.beta_kernels[:idx] + (params,) + state.beta_kernels[idx + 1:]
        return ParamState(kernels, state.eta_kernels, state.nugget)
    kernels = state.eta_kernels[:idx] + (params,) + state.eta_kernels[idx + 1:]
    return ParamState(state.beta_kernels, kernels, state.nugget)


def _block_kernel(state, block):
    kind, idx = block
    return state.beta_kernels[idx] if kind == "beta" else state.eta_kernels[idx]


def mh_step(current, block, step_sizes, data, basis, spec, rng, engine=None,
            failures=None):
    """One Metropolis-Hastings update of a single parameter block.

    Parameters
    ----------
    current : ParamState
        State with finite log posterior.
    block : tuple
        ``("beta", j)``, ``("eta", k)`` or ``("nugget",)``.
    step_sizes : mapping
        Per-block proposal scales on the log scale.
    rng : numpy.random.Generator
    engine : LikelihoodEngine, optional
        Must already be positioned at ``current``; one is built on the fly
        when omitted.
    failures : list, optional
        Numerical-failure events are appended as ``(block, message)``.

    Returns
    -------
    (ParamState, bool)
        The new (or unchanged) state and whether the proposal was accepted.
    """
    if engine is None:
        engine = LikelihoodEngine(data, basis, current)
    step = step_sizes[block]

    if block[0] == "nugget":
        eps = rng.normal(0.0, step)
        proposal = current.nugget * math.exp(eps)
        log_jac = eps
        dprior = log_prior_nugget(proposal, spec) - log_prior_nugget(current.nugget, spec)
        if not np.isfinite(dprior):
            return current, False
        try:
            loglik_new, payload = engine.propose_nugget(proposal)
        except NumericalError as exc:
            if failures is not None:
                failures.append((block, str(exc)))
            return current, False
        log_accept = (loglik_new - engine.loglik()) + dprior + log_jac
        if math.log(max(rng.random(), 1e-300)) < log_accept:
            new_state = ParamState(current.beta_kernels, current.eta_kernels, proposal)
            engine.accept_nugget(new_state, payload)
            return new_state, True
        return current, False

    kind, idx = block
    old = _block_kernel(current, block)
    eps = rng.normal(0.0, step, size=2)
    proposal = KernelParams(
        variance=old.variance * math.exp(eps[0]),
        decay=old.decay * math.exp(eps[1]),
        smoothness=old.smoothness,
    )
    log_jac = float(eps.sum())
    dprior = log_prior_kernel(proposal, spec) - log_prior_kernel(old, spec)
    if not np.isfinite(dprior):
        # decay outside its Uniform support: certain rejection
        return current, False
    block_index = idx if kind == "beta" else current.q + idx
    try:
        loglik_new, payload = engine.propose_kernel_block(block_index, proposal)
    except NumericalError as exc:
        if failures is not None:
            failures.append((block, str(exc)))
        return current, False
    log_accept = (loglik_new - engine.loglik()) + dprior + log_jac
    if math.log(max(rng.random(), 1e-300)) < log_accept:
        new_state = _replace_kernel(current, block, proposal)
        engine.accept_kernel_block(block_index, new_state, payload)
        return new_state, True
    return current, False


def initialize_state(data, basis, spec, rng=None, jitter=0.0):
    """Deterministic starting point: the response variance split equally
    across all variance parameters, decays at the geometric mean of their
    support, the nugget at 10% of the response variance.

    With ``jitter`` > 0 (re-initialization after a failed start) variances
    are perturbed multiplicatively and decays redrawn log-uniformly.
    """
    from .model import _basis_values

    K = _basis_values(basis, data.Z).shape[1]
    var_y = float(np.var(data.Y))
    base_var = max(var_y / (data.q + K + 1), 1e-6)
    lo, hi = spec.prior_decay
    decay = math.sqrt(lo * hi)
    if not (lo < decay < hi):
        decay = 0.5 * (lo + hi)
    nugget = max(0.1 * var_y, 1e-6)
    if jitter > 0.0 and rng is not None:

        def scaled():
            return base_var * math.exp(jitter * rng.standard_normal())

        def rand_decay():
            return math.exp(rng.uniform(math.log(lo), math.log(hi)))

        beta = tuple(KernelParams(scaled(), rand_decay(), spec.nu_beta)
                     for _ in range(data.q))
        eta = tuple(KernelParams(scaled(), rand_decay(), spec.nu_eta)
                    for _ in range(K))
        return ParamState(beta, eta, nugget * math.exp(jitter * rng.standard_normal()))
    beta = tuple(KernelParams(base_var, decay, spec.nu_beta) for _ in range(data.q))
    eta = tuple(KernelParams(base_var, decay, spec.nu_eta) for _ in range(K))
    return ParamState(beta, eta, nugget)


def run_chain(init, config, data, basis, spec, chain_index=0,
              include_likelihood=True, progress=False):
    """Run one chain and return its retained draws.

    The chain's RNG stream derives from ``(config.seed, chain_index)``, so
    multi-chain runs are reproducible independently of scheduling.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=config.seed, spawn_key=(chain_index,))
    )
    state, engine = _valid_start(init, data, basis, spec, rng, include_likelihood)

    blocks = block_ids(state.q, state.K)
    steps = {b: float(config.initial_step) for b in blocks}
    window_prop = {b: 0 for b in blocks}
    window_acc = {b: 0 for b in blocks}
    total_prop = {b: 0 for b in blocks}
    total_acc = {b: 0 for b in blocks}
    failures = []
    trace = np.empty(config.n_iter)
    step_history = []
    draws = []

    for it in range(1, config.n_iter + 1):
        for block in blocks:
            state, accepted = mh_step(state, block, steps, data, basis, spec, rng,
                                      engine=engine, failures=failures)
            window_prop[block] += 1
            window_acc[block] += accepted
            if it > config.burn_in:
                total_prop[block] += 1
                total_acc[block] += accepted
        trace[it - 1] = engine.loglik() + log_prior(state, spec)
        if it <= config.burn_in and it % config.adapt_window == 0:
            for block in blocks:
                rate = window_acc[block] / max(window_prop[block], 1)
                steps[block] *= math.exp(rate - config.target_accept)
                window_acc[block] = 0
                window_prop[block] = 0
            step_history.append((it, {block_label(b): steps[b] for b in blocks}))
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            draws.append(state)
        if include_likelihood and it % REBUILD_EVERY == 0 and it < config.n_iter:
            engine.rebuild()
        if progress and it % 500 == 0:
            print(f"chain {chain_index}: iteration {it}/{config.n_iter}, "
                  f"log posterior {trace[it - 1]:.2f}", flush=True)

    step_history.append((config.n_iter, {block_label(b): steps[b] for b in blocks}))
    rates = {
        block_label(b): (total_acc[b] / total_prop[b]) if total_prop[b] else 0.0
        for b in blocks
    }
    return PosteriorDraws(
        draws=draws,
        acceptance_rates=rates,
        log_posterior_trace=trace,
        step_history=step_history,
        n_failures=len(failures),
        chain_index=chain_index,
        seed=config.seed,
    )


def _valid_start(init, data, basis, spec, rng, include_likelihood):
    """Return a (state, engine) pair with finite log posterior, jittering the
    start up to 100 times before giving up."""
    state = init
    for attempt in range(101):
        try:
            engine = LikelihoodEngine(data, basis, state,
                                      include_likelihood=include_likelihood)
            log_post = engine.loglik() + log_prior(state, spec)
            if np.isfinite(log_post):
                return state, engine
        except NumericalError:
            pass
        state = initialize_state(data, basis, spec, rng=rng, jitter=0.5)
    raise InitializationError(
        "no finite log posterior after 100 jittered re-initializations"
    )


def _chain_worker(args):
    init, config, data, basis, spec, chain_index, include_likelihood, progress = args
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=1):
            return run_chain(init, config, data, basis, spec, chain_index,
                             include_likelihood, progress)
    except ImportError:
        return run_chain(init, config, data, basis, spec, chain_index,
                         include_likelihood, progress)


def run_chains(data, basis, spec, config, init=None, n_jobs=None,
               include_likelihood=True, progress=False):
    """Run ``config.n_chains`` independent chains, in parallel processes when
    possible, and return the list of per-chain PosteriorDraws."""
    if init is None:
        init = initialize_state(data, basis, spec)
    args = [(init, config, data, basis, spec, c, include_likelihood, progress)
            for c in range(config.n_chains)]
    if n_jobs is None:
        import os

        n_jobs = min(config.n_chains, os.cpu_count() or 1)
    if config.n_chains == 1 or n_jobs <= 1:
        return [_chain_worker(a) for a in args]
    import multiprocessing as mp

    # fork keeps stdin-launched callers working (spawn would re-import their
    # main module); BLAS pools are limited to one thread before forking
    method = "fork" if "fork" in mp.get_all_start_methods() else "spawn"
    ctx = mp.get_context(method)
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=1):
            with ProcessPoolExecutor(max_workers=n_jobs, mp_context=ctx) as pool:
                return list(pool.map(_chain_worker, args))
    except ImportError:
        with ProcessPoolExecutor(max_workers=n_jobs, mp_context=ctx) as pool:
            return list(pool.map(_chain_worker, args))
