"""Grand-canonical Metropolis-Hastings over variable-particle-number space.

Three move kinds drive the walk: a rigid uniform displacement of all
particles, insertion of one particle uniformly in the box, and removal of
one uniformly chosen particle.  Acceptance ratios, in log space,

    displace   2 (ln|phi_n(R')| - ln|phi_n(R)|)
    insert     2 (ln|phi_{n+1}| - ln|phi_n|) + d ln L
    remove     2 (ln|phi_{n-1}| - ln|phi_n|) - d ln L

target the bosonic distribution whose sector law for a spatially constant
amplitude is P_n proportional to |phi_n|^2 L^(d n).  Impossible proposals
(insert at capacity, remove from vacuum, displacement leaving a bounded
box) count as rejections.

Chains are independent: the RNG is counter-based, keyed by (seed, step,
chain), so the walk is reproducible and order-free.  `run_chains` runs all
chains at once through one compiled kernel; `step` advances a single
explicit ChainState through the same proposal logic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import jax
import jax.numpy as jnp
import numpy as np

from .ansatz import Configuration, window_bounds
from .models import ModelSpec

MOVE_KINDS = ("displace", "insert", "remove")

_STUCK_RATE = 0.01


@dataclass(frozen=True)
class SamplerSettings:
    """Proposal mix and schedule of one sampling pass.

    p_pm is the probability of an insertion (and, separately, a removal)
    attempt per step; the remaining 1 - 2 p_pm goes to displacements.
    width is the displacement half-box edge in units of the box length
    (the actual move is uniform in [-width L / 2, width L / 2]^d).
    burn_in counts discarded sweeps; one sample per chain is retained
    every `sweep` steps afterwards.
    """

    p_pm: float = 0.25
    width: float = 0.1
    chains: int = 100
    sweep: int = 30
    samples_per_chain: int = 64
    burn_in: int = 50
    single_particle_moves: bool = False

    def __post_init__(self):
        if not 0.0 <= 2.0 * self.p_pm < 1.0:
            raise ValueError("need 0 <= 2 p_pm < 1")
        if self.width <= 0.0:
            raise ValueError("width must be positive")
        for name in ("chains", "sweep", "samples_per_chain"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")


@dataclass
class ChainState:
    """One explicit walker: configuration, cached log-amplitude, RNG state."""

    config: Configuration
    log_amp: float
    key: jax.Array
    step_index: int = 0
    counters: np.ndarray = field(default_factory=lambda: np.zeros((3, 2), dtype=np.int64))

    def acceptance(self) -> dict:
        """Per-move-kind acceptance fractions (nan where never proposed)."""
        with np.errstate(invalid="ignore"):
            rates = self.counters[:, 1] / self.counters[:, 0]
        return dict(zip(MOVE_KINDS, rates))


@dataclass
class SampleBatch:
    """Retained configurations from all chains, with diagnostics.

    positions has shape (chains, samples, n_max, d); rows at index >= n are
    inert padding.  Means over axis 1 feed per-chain error bars.
    """

    positions: np.ndarray
    ns: np.ndarray
    log_amps: np.ndarray
    counters: np.ndarray
    burn_counters: np.ndarray
    stuck: bool

    @property
    def chains(self) -> int:
        return self.ns.shape[0]

    @property
    def samples_per_chain(self) -> int:
        return self.ns.shape[1]

    def acceptance(self) -> dict:
        with np.errstate(invalid="ignore"):
            rates = self.counters[:, 1] / self.counters[:, 0]
        return dict(zip(MOVE_KINDS, rates))

    def flat_positions(self) -> np.ndarray:
        return self.positions.reshape(-1, *self.positions.shape[2:])

    def flat_ns(self) -> np.ndarray:
        return self.ns.reshape(-1)


def _make_chain_step(logamp_fn, settings: SamplerSettings, n_max: int, d: int,
                     length: float, boundary: str):
    """(params, key, pos, n, logv) -> (pos, n, logv, counter increment).

    Pure and shape-stable so it can be vmapped over chains and scanned over
    steps.  n is traced; impossible proposals are rejected via the validity
    flag rather than by branching.
    """
    p_pm = settings.p_pm
    half = 0.5 * settings.width * length
    log_vol = d * np.log(length)
    periodic = boundary == "periodic"

    def chain_step(params, key, pos, n, logv):
        k_kind, k_zeta, k_new, k_pick, k_acc = jax.random.split(key, 5)
        u_kind = jax.random.uniform(k_kind)
        kind = jnp.where(u_kind < p_pm, 1, jnp.where(u_kind < 2.0 * p_pm, 2, 0))

        rows = jnp.arange(n_max)
        real = rows < n

        # displacement: one shared zeta for every real particle, or one
        # uniformly chosen particle when single-particle moves are on
        zeta = jax.random.uniform(k_zeta, (d,), minval=-half, maxval=half)
        if settings.single_particle_moves:
            pick_d = jnp.floor(jax.random.uniform(k_pick) * jnp.maximum(n, 1)).astype(rows.dtype)
            moved = real & (rows == pick_d)
        else:
            moved = real
        disp = pos + zeta * moved[:, None]
        if periodic:
            disp = jnp.mod(disp, length)
            in_box = jnp.asarray(True)
        else:
            in_box = jnp.all(jnp.where(moved[:, None], (disp >= 0.0) & (disp <= length), True))

        # insertion at row n (clamped write is discarded when invalid)
        new_particle = jax.random.uniform(k_new, (d,), minval=0.0, maxval=length)
        ins = pos.at[n].set(new_particle, mode="clip")

        # removal: overwrite a uniform pick with the last real row
        pick_r = jnp.floor(jax.random.uniform(k_pick) * jnp.maximum(n, 1)).astype(rows.dtype)
        last = jnp.clip(n - 1, 0, n_max - 1)
        rem = pos.at[pick_r].set(pos[last], mode="clip")

        pos_prop = jnp.where(kind == 1, ins, jnp.where(kind == 2, rem, disp))
        n_prop = jnp.clip(n + (kind == 1) - (kind == 2), 0, n_max)
        move_const = jnp.where(kind == 1, log_vol, jnp.where(kind == 2, -log_vol, 0.0))
        valid = jnp.where(
            kind == 1, n < n_max, jnp.where(kind == 2, n > 0, in_box)
        )

        log_prop = logamp_fn(params, pos_prop, n_prop)
        log_r = 2.0 * (log_prop - logv) + move_const
        # a zero-amplitude current state (log_amp = -inf) would make the
        # ratio NaN; treat any finite proposal from there as an escape
        log_r = jnp.where(jnp.isfinite(logv), log_r, jnp.inf)
        log_r = jnp.where(valid & jnp.isfinite(log_prop), log_r, -jnp.inf)
        accept = jnp.log(jax.random.uniform(k_acc)) < log_r

        pos_new = jnp.where(accept, pos_prop, pos)
        n_new = jnp.where(accept, n_prop, n)
        logv_new = jnp.where(accept, log_prop, logv)
        tally = jax.nn.one_hot(kind, 3, dtype=jnp.int64)[:, None] * jnp.stack(
            [jnp.ones((), dtype=jnp.int64), accept.astype(jnp.int64)]
        )
        return pos_new, n_new, logv_new, tally

    return chain_step


_RUN_CACHE: dict = {}


def _compiled_run(logamp_fn, settings: SamplerSettings, n_max: int, d: int,
                  length: float, boundary: str):
    """Compiled (params, key, pos0, n0) -> retained arrays + counters."""
    cache_key = (logamp_fn, settings, n_max, d, length, boundary)
    hit = _RUN_CACHE.get(cache_key)
    if hit is not None:
        return hit

    chain_step = _make_chain_step(logamp_fn, settings, n_max, d, length, boundary)
    chains = settings.chains
    burn_steps = settings.burn_in * settings.sweep

    def run(params, key, pos0, n0):
        logv0 = jax.vmap(lambda p, n: logamp_fn(params, p, n))(pos0, n0)

        def one_step(carry, step_index):
            pos, n, logv, tallies = carry
            step_key = jax.random.fold_in(key, step_index)
            chain_keys = jax.vmap(lambda c: jax.random.fold_in(step_key, c))(
                jnp.arange(chains)
            )
            pos, n, logv, tally = jax.vmap(
                lambda k, p, m, v: chain_step(params, k, p, m, v)
            )(chain_keys, pos, n, logv)
            return (pos, n, logv, tallies + jnp.sum(tally, axis=0)), None

        zero = jnp.zeros((3, 2), dtype=jnp.int64)
        carry = (pos0, n0, logv0, zero)
        carry, _ = jax.lax.scan(one_step, carry, jnp.arange(burn_steps))
        pos, n, logv, burn_tallies = carry

        def one_sweep(carry, sweep_index):
            start = burn_steps + sweep_index * settings.sweep
            carry, _ = jax.lax.scan(one_step, carry, start + jnp.arange(settings.sweep))
            pos, n, logv, _ = carry
            return carry, (pos, n, logv)

        carry = (pos, n, logv, zero)
        carry, retained = jax.lax.scan(
            one_sweep, carry, jnp.arange(settings.samples_per_chain)
        )
        _, _, _, sample_tallies = carry
        return retained, burn_tallies, sample_tallies

    compiled = jax.jit(run)
    _RUN_CACHE[cache_key] = compiled
    return compiled


def initial_particle_number(params, n_max: int) -> int:
    """Integer nearest the particle-number window center (c1 + c2) / 2."""
    c1, c2, _ = window_bounds(params)
    center = 0.5 * (float(c1) + float(c2))
    return int(np.clip(round(center), 0, n_max))


def run_chains(
    settings: SamplerSettings,
    model: ModelSpec,
    logamp_fn,
    params,
    *,
    n_max: int,
    initial_n: int | None = None,
    seed: int = 0,
    key: jax.Array | None = None,
) -> SampleBatch:
    """Sample `settings.chains` independent walkers against one amplitude.

    Walkers start with `initial_n` particles (default: the window center
    read from params) placed uniformly in the box.  Pass `key` to embed the
    run in an outer reproducible stream; `seed` is used otherwise.
    """
    d = model.domain.spatial_dim
    length = model.domain.box_length
    if initial_n is None:
        try:
            initial_n = initial_particle_number(params, n_max)
        except (KeyError, TypeError) as err:
            raise ValueError(
                "initial_n is required when params carry no number window"
            ) from err
    if not 0 <= initial_n <= n_max:
        raise ValueError(f"initial_n={initial_n} outside [0, {n_max}]")

    if key is None:
        key = jax.random.PRNGKey(seed)
    k_pos, k_run = jax.random.split(key)
    pos0 = jax.random.uniform(
        k_pos, (settings.chains, n_max, d), minval=0.0, maxval=length, dtype=jnp.float64
    )
    n0 = jnp.full((settings.chains,), initial_n, dtype=jnp.int64)

    run = _compiled_run(logamp_fn, settings, n_max, d, length, model.domain.boundary)
    (pos, ns, logs), burn_tallies, sample_tallies = run(params, k_run, pos0, n0)

    burn_counters = np.asarray(burn_tallies)
    proposed = burn_counters[:, 0].sum()
    stuck = bool(proposed > 0 and burn_counters[:, 1].sum() < _STUCK_RATE * proposed)
    if stuck:
        warnings.warn("sampler acceptance below 1% during burn-in", RuntimeWarning)

    # scan stacks sweeps first: (samples, chains, ...) -> (chains, samples, ...)
    return SampleBatch(
        positions=np.asarray(pos).swapaxes(0, 1),
        ns=np.asarray(ns).swapaxes(0, 1),
        log_amps=np.asarray(logs).swapaxes(0, 1),
        counters=np.asarray(sample_tallies),
        burn_counters=burn_counters,
        stuck=stuck,
    )


def step(
    chain: ChainState,
    model: ModelSpec,
    logamp_fn,
    params,
    settings: SamplerSettings,
) -> ChainState:
    """Advance one explicit walker by a single proposal.

    The cached log-amplitude always matches the held configuration, whether
    the proposal was accepted or rejected.
    """
    n_max = np.asarray(chain.config.positions).shape[0]
    d = model.domain.spatial_dim
    chain_step = _make_chain_step(
        logamp_fn, settings, n_max, d, model.domain.box_length, model.domain.boundary
    )
    step_key = jax.random.fold_in(chain.key, chain.step_index)
    pos, n, logv, tally = chain_step(
        params,
        step_key,
        jnp.asarray(chain.config.positions, dtype=jnp.float64),
        jnp.asarray(chain.config.n),
        jnp.asarray(chain.log_amp, dtype=jnp.float64),
    )
    return replace(
        chain,
        config=Configuration(positions=np.asarray(pos), n=int(n)),
        log_amp=float(logv),
        step_index=chain.step_index + 1,
        counters=chain.counters + np.asarray(tally),
    )
