"""Natural-gradient updates computed in sample space.

With centered, normalized per-sample quantities

    eps_bar_s = (E_s - <E>) / sqrt(N_s),
    o_bar_sm  = (O_sm - <O_m>) / sqrt(N_s),

the curvature matrix is S = 2 o_bar^T o_bar and the gradient g = 2 o_bar^T
eps_bar.  For networks with far more parameters than samples the solve is
cheapest in its dual form,

    delta = -eta o_bar^T (o_bar o_bar^T + shift I)^{-1} eps_bar,

which touches only an N_s x N_s kernel yet agrees with the pseudoinverse
solution of S delta = -eta g when the shift vanishes (and with the ridge
solution for S + 2 shift I otherwise).  A plain Adam fallback on g is kept
for ablations; it reliably converges to higher energies.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import jax
import jax.numpy as jnp
import numpy as np

from .ansatz import (
    AnsatzHyper,
    ExtraFactors,
    ParamLayout,
    build_layout,
    flatten_params,
    init_params,
    make_log_amp_fn,
    unflatten_params,
)
from .autodiff import make_param_grad_fn
from .models import ModelSpec, make_local_energy_fn
from .numerics import SpdSystem, solve_psd_pinv, solve_spd
from .observables import rescaled_variance, scalar_estimate
from .sampler import SamplerSettings, run_chains

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

#: relative size of the automatic kernel shift when none is given
AUTO_SHIFT_SCALE = 1e-4

#: cosine decay floors out at this fraction of the base learning rate
DECAY_FLOOR = 0.05

METHODS = ("minsr", "sr", "sgd")


@dataclass(frozen=True)
class CenteredStats:
    """Centered, 1/sqrt(N_s)-normalized local energies and log-derivatives."""

    eps_bar: np.ndarray  # (N_s,)
    o_bar: np.ndarray  # (N_s, N_p)

    @property
    def n_samples(self) -> int:
        return self.eps_bar.shape[0]

    @property
    def n_params(self) -> int:
        return self.o_bar.shape[1]


def center_statistics(local_energies, log_derivatives) -> CenteredStats:
    e = np.asarray(local_energies, dtype=np.float64).ravel()
    o = np.asarray(log_derivatives, dtype=np.float64)
    if o.ndim != 2 or o.shape[0] != e.shape[0] or e.size == 0:
        raise ValueError("need matching (N_s,) energies and (N_s, N_p) derivatives")
    root = math.sqrt(e.size)
    return CenteredStats(
        eps_bar=(e - e.mean()) / root,
        o_bar=(o - o.mean(axis=0)) / root,
    )


@dataclass(frozen=True)
class OptimizerSettings:
    method: str = "minsr"
    learning_rate: float = 1e-2
    iterations: int = 200
    ntk_shift: float | None = None  # None: auto-scaled; 0: pseudoinverse
    window_lr_multiplier: float = 1.0
    cosine_decay: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.ntk_shift is not None and not self.ntk_shift >= 0:
            raise ValueError("ntk_shift must be non-negative")
        if not self.window_lr_multiplier > 0:
            raise ValueError("window_lr_multiplier must be positive")


def energy_gradient(stats: CenteredStats) -> np.ndarray:
    """g = 2 o_bar^T eps_bar, the plain energy gradient."""
    return 2.0 * (stats.o_bar.T @ stats.eps_bar)


def _resolved_shift(settings: OptimizerSettings, kernel_trace: float, n_s: int) -> float:
    if settings.ntk_shift is not None:
        return float(settings.ntk_shift)
    return AUTO_SHIFT_SCALE * kernel_trace / n_s


def _scaled_window(delta: np.ndarray, layout: ParamLayout | None, mult: float):
    if layout is None or mult == 1.0:
        return delta
    idx = layout.indices_with_prefix("window.")
    delta = delta.copy()
    delta[idx] *= mult
    return delta


def minsr_update(
    stats: CenteredStats,
    settings: OptimizerSettings,
    layout: ParamLayout | None = None,
    learning_rate: float | None = None,
) -> np.ndarray:
    """Dual-form natural-gradient step through the N_s x N_s kernel."""
    if stats.n_samples < 2:
        raise ValueError("minSR needs at least two samples")
    kernel = stats.o_bar @ stats.o_bar.T
    shift = _resolved_shift(settings, float(np.trace(kernel)), stats.n_samples)
    if shift > 0.0:
        coeff = solve_spd(SpdSystem(kernel, stats.eps_bar, shift))
    else:
        coeff = solve_psd_pinv(kernel, stats.eps_bar)
    eta = settings.learning_rate if learning_rate is None else learning_rate
    delta = -eta * (stats.o_bar.T @ coeff)
    return _scaled_window(delta, layout, settings.window_lr_multiplier)


def sr_update(
    stats: CenteredStats,
    settings: OptimizerSettings,
    layout: ParamLayout | None = None,
    learning_rate: float | None = None,
) -> np.ndarray:
    """Primal N_p x N_p solve; equals minsr_update, at N_p^2 cost."""
    if stats.n_samples < 2:
        raise ValueError("SR needs at least two samples")
    s_matrix = 2.0 * (stats.o_bar.T @ stats.o_bar)
    g = energy_gradient(stats)
    shift = _resolved_shift(settings, 0.5 * float(np.trace(s_matrix)), stats.n_samples)
    if shift > 0.0:
        # the kernel ridge `shift` corresponds to 2*shift on S
        move = solve_spd(SpdSystem(s_matrix, g, 2.0 * shift))
    else:
        move = solve_psd_pinv(s_matrix, g)
    eta = settings.learning_rate if learning_rate is None else learning_rate
    return _scaled_window(-eta * move, layout, settings.window_lr_multiplier)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0


def adam_init(n_params: int) -> AdamState:
    return AdamState(m=np.zeros(n_params), v=np.zeros(n_params))


def adam_step(grad: np.ndarray, state: AdamState, learning_rate: float):
    """One bias-corrected Adam step; returns (delta, new state)."""
    t = state.step + 1
    m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * grad
    v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * grad**2
    m_hat = m / (1.0 - ADAM_BETA1**t)
    v_hat = v / (1.0 - ADAM_BETA2**t)
    delta = -learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return delta, AdamState(m=m, v=v, step=t)


def cosine_learning_rate(base: float, iteration: int, total: int) -> float:
    """Cosine decay from `base` to DECAY_FLOOR * base across the run."""
    if total <= 1:
        return base
    phase = math.pi * iteration / (total - 1)
    return base * (DECAY_FLOOR + (1.0 - DECAY_FLOOR) * 0.5 * (1.0 + math.cos(phase)))


TRAJECTORY_COLUMNS = (
    "iter",
    "energy",
    "energy_stderr",
    "mean_n",
    "stderr_n",
    "rescaled_variance",
    "accept_disp",
    "accept_add",
    "accept_rm",
)


@dataclass(frozen=True)
class TrajectoryRow:
    iteration: int
    energy: float
    energy_stderr: float
    mean_n: float
    stderr_n: float
    rescaled_variance: float
    accept_disp: float
    accept_add: float
    accept_rm: float

    def values(self) -> tuple:
        return (
            self.iteration,
            self.energy,
            self.energy_stderr,
            self.mean_n,
            self.stderr_n,
            self.rescaled_variance,
            self.accept_disp,
            self.accept_add,
            self.accept_rm,
        )


@dataclass
class OptimizeResult:
    params: dict
    rows: list = field(default_factory=list)
    aborted: bool = False

    @property
    def final_energy(self) -> float:
        return self.rows[-1].energy if self.rows else float("nan")


def optimize(
    model: ModelSpec,
    hyper: AnsatzHyper,
    factors: ExtraFactors,
    sampler_settings: SamplerSettings,
    settings: OptimizerSettings,
    *,
    seed: int = 0,
    initial_params: dict | None = None,
    initial_n: int | None = None,
    on_iteration=None,
) -> OptimizeResult:
    """Energy minimization loop: sample, reduce, update.

    Each iteration draws a fresh batch, records a trajectory row from the
    pre-update statistics, then moves the parameters.  `iterations = 0`
    evaluates the initial state once without updating.  A non-finite
    energy aborts immediately; the result keeps the last good parameters
    and flags `aborted`.  Deterministic for a given seed.
    """
    layout = build_layout(hyper)
    params = init_params(hyper, seed) if initial_params is None else dict(initial_params)
    logamp = make_log_amp_fn(hyper, factors)
    eloc_fn = jax.jit(
        jax.vmap(make_local_energy_fn(model, logamp, n_max=hyper.n_max),
                 in_axes=(None, 0, 0))
    )
    grad_fn = jax.jit(jax.vmap(make_param_grad_fn(logamp, layout), in_axes=(None, 0, 0)))
    base_key = jax.random.PRNGKey(seed)

    adam_state = adam_init(layout.size) if settings.method == "sgd" else None
    result = OptimizeResult(params=params)
    n_rows = settings.iterations if settings.iterations > 0 else 1

    for it in range(n_rows):
        batch = run_chains(
            sampler_settings, model, logamp, params,
            n_max=hyper.n_max, initial_n=initial_n,
            key=jax.random.fold_in(base_key, it),
        )
        flat_pos = jnp.asarray(batch.flat_positions())
        flat_ns = jnp.asarray(batch.flat_ns())
        e_loc = np.asarray(eloc_fn(params, flat_pos, flat_ns))
        by_chain = e_loc.reshape(batch.chains, batch.samples_per_chain)

        energy = scalar_estimate(by_chain)
        number = scalar_estimate(batch.ns.astype(np.float64))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            variance = rescaled_variance(by_chain, number.mean)
        rates = batch.acceptance()
        row = TrajectoryRow(
            iteration=it,
            energy=energy.mean,
            energy_stderr=energy.stderr,
            mean_n=number.mean,
            stderr_n=number.stderr,
            rescaled_variance=variance,
            accept_disp=rates["displace"],
            accept_add=rates["insert"],
            accept_rm=rates["remove"],
        )
        result.rows.append(row)
        if on_iteration is not None:
            on_iteration(row, params)
        if not math.isfinite(row.energy):
            # keep the parameters behind the last finite evaluation
            result.aborted = True
            return result
        result.params = params

        if settings.iterations == 0:
            return result
        o = np.asarray(grad_fn(params, flat_pos, flat_ns))
        stats = center_statistics(e_loc, o)
        lr = (
            cosine_learning_rate(settings.learning_rate, it, settings.iterations)
            if settings.cosine_decay
            else settings.learning_rate
        )
        if settings.method == "minsr":
            delta = minsr_update(stats, settings, layout=layout, learning_rate=lr)
        elif settings.method == "sr":
            delta = sr_update(stats, settings, layout=layout, learning_rate=lr)
        else:
            grad = _scaled_window(energy_gradient(stats), layout,
                                  settings.window_lr_multiplier)
            delta, adam_state = adam_step(grad, adam_state, lr)
        vec = flatten_params(layout, params) + delta
        params = unflatten_params(layout, vec)

    # the loop completed: hand back the product of the final update
    result.params = params
    return result
