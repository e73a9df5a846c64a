"""Exact derivatives of log-amplitudes.

Coordinate gradients come from one reverse pass; the Laplacian nests one
forward-tangent pass per coordinate over that reverse pass (never a
stochastic estimate); parameter gradients are a reverse pass flattened into
layout order.  All derivatives are algorithmic and 64-bit, exact to machine
precision, and flow through every closed-form factor of the amplitude.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np

from .ansatz import (
    AnsatzHyper,
    Configuration,
    ExtraFactors,
    ParamLayout,
    build_layout,
    flatten_params_jnp,
    make_log_amp_fn,
)

# Jastrow kinds whose pair factor is singular at coincidence.
_SINGULAR_JASTROWS = ("cs1d", "cs1d_exact", "cs2d")


@dataclass
class LogAmpDerivatives:
    """Value and derivatives of one log-amplitude evaluation.

    ``coord_grad`` is flattened over the n real particles only, length n*d.
    ``param_grad`` is in flat layout order, or None if not requested.
    """

    value: float
    coord_grad: np.ndarray
    coord_laplacian: float
    param_grad: np.ndarray | None = None


def make_coord_grad_fn(logamp_fn):
    """Gradient with respect to the full padded register, shape (n_max, d).

    Padded rows come out exactly zero because the amplitude is independent
    of them.
    """
    return jax.grad(logamp_fn, argnums=1)


def make_laplacian_fn(logamp_fn, n_max: int, spatial_dim: int):
    """Sum of second derivatives over all register coordinates.

    One forward-tangent (jvp) pass per coordinate, vmapped; padded
    coordinates contribute exactly zero, so the sum equals the Laplacian
    over the n real particles.
    """
    nd = n_max * spatial_dim
    basis = jnp.eye(nd, dtype=jnp.float64)

    def laplacian(params, positions, n):
        flat = jnp.reshape(positions, (nd,))

        def grad_flat(q):
            return jax.grad(
                lambda p: logamp_fn(params, jnp.reshape(p, (n_max, spatial_dim)), n)
            )(q)

        def hess_diag(e):
            return jnp.vdot(e, jax.jvp(grad_flat, (flat,), (e,))[1])

        return jnp.sum(jax.vmap(hess_diag)(basis))

    return laplacian


def make_param_grad_fn(logamp_fn, layout: ParamLayout):
    """Gradient with respect to the parameters, flattened in layout order."""

    def param_grad(params, positions, n):
        tree = jax.grad(logamp_fn, argnums=0)(params, positions, n)
        return flatten_params_jnp(layout, tree)

    return param_grad


def _coincident_real_pair(positions: np.ndarray, n: int) -> bool:
    if n < 2:
        return False
    pos = np.asarray(positions)[:n]
    iu, ju = np.triu_indices(n, k=1)
    dist = np.linalg.norm(pos[iu] - pos[ju], axis=-1)
    return bool(np.any(dist == 0.0))


class DerivativeEngine:
    """Compiled derivative evaluators for one ansatz family.

    Builds the jitted value / coordinate-gradient / Laplacian /
    parameter-gradient callables once; ``differentiate`` is the eager
    entry point operating on a single Configuration.
    """

    def __init__(self, hyper: AnsatzHyper, factors: ExtraFactors):
        self.hyper = hyper
        self.factors = factors
        self.layout = build_layout(hyper)
        self.logamp_fn = make_log_amp_fn(hyper, factors)
        self.value_fn = jax.jit(self.logamp_fn)
        self.coord_grad_fn = jax.jit(make_coord_grad_fn(self.logamp_fn))
        self.laplacian_fn = jax.jit(
            make_laplacian_fn(self.logamp_fn, hyper.n_max, hyper.spatial_dim)
        )
        self.param_grad_fn = jax.jit(make_param_grad_fn(self.logamp_fn, self.layout))

    def differentiate(
        self, params: dict, config: Configuration, want_param_grad: bool = False
    ) -> LogAmpDerivatives:
        """Value and exact derivatives at one configuration.

        Raises
        ------
        ValueError
            If the amplitude is zero there (boundary contact, or coincident
            particles under a singular Jastrow): the log-derivatives do not
            exist at such points.
        """
        positions = jnp.asarray(config.positions, dtype=jnp.float64)
        n = int(config.n)
        if not 0 <= n <= self.hyper.n_max:
            raise ValueError(f"n={n} outside [0, {self.hyper.n_max}]")
        if self.factors.jastrow in _SINGULAR_JASTROWS and _coincident_real_pair(
            config.positions, n
        ):
            raise ValueError("coincident particles sit on a Jastrow singularity")
        value = float(self.value_fn(params, positions, n))
        if not np.isfinite(value):
            raise ValueError("zero-amplitude configuration has no log-derivatives")
        grad_full = np.asarray(self.coord_grad_fn(params, positions, n))
        lap = float(self.laplacian_fn(params, positions, n))
        pgrad = None
        if want_param_grad:
            pgrad = np.asarray(self.param_grad_fn(params, positions, n))
        return LogAmpDerivatives(
            value=value,
            coord_grad=grad_full[:n].ravel(),
            coord_laplacian=lap,
            param_grad=pgrad,
        )


@functools.lru_cache(maxsize=None)
def get_engine(hyper: AnsatzHyper, factors: ExtraFactors) -> DerivativeEngine:
    return DerivativeEngine(hyper, factors)


def differentiate(
    logamp_fn,
    params,
    config: Configuration,
    *,
    n_max: int,
    spatial_dim: int,
    layout: ParamLayout | None = None,
    want_param_grad: bool = False,
) -> LogAmpDerivatives:
    """Eager derivatives of an arbitrary log-amplitude callable.

    Accepts any pure function (params, positions, n) -> scalar, e.g. a
    closed-form reference state; used wherever the full engine would be
    overkill.
    """
    positions = jnp.asarray(config.positions, dtype=jnp.float64)
    n = int(config.n)
    value = float(logamp_fn(params, positions, n))
    if not np.isfinite(value):
        raise ValueError("zero-amplitude configuration has no log-derivatives")
    grad_full = np.asarray(make_coord_grad_fn(logamp_fn)(params, positions, n))
    lap = float(make_laplacian_fn(logamp_fn, n_max, spatial_dim)(params, positions, n))
    pgrad = None
    if want_param_grad:
        if layout is None:
            raise ValueError("param_grad requested without a layout")
        pgrad = np.asarray(make_param_grad_fn(logamp_fn, layout)(params, positions, n))
    return LogAmpDerivatives(
        value=value,
        coord_grad=grad_full[:n].ravel(),
        coord_laplacian=lap,
        param_grad=pgrad,
    )
