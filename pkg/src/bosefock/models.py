"""Continuum boson Hamiltonians and their local energies.

Each model is one-body potential + pair interaction (+ a three-body term
for the inverse-square gas in two dimensions) minus a chemical potential,
evaluated against a trial state through its log-derivatives:

    E_loc = -c (lap ln phi + |grad ln phi|^2) + sum_i (V(r_i) - mu) + interactions,

with c = kinetic_prefactor = 1/(2m).  The default c = 1 means hbar = 2m = 1;
closed-form couplings (Jastrow exponents, cusps) always use the matching
m = 1/(2c).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np

from .ansatz import ExtraFactors
from .autodiff import LogAmpDerivatives, make_coord_grad_fn, make_laplacian_fn

MODEL_KINDS = ("lieb_liniger", "cs1d", "cs2d", "gauss")
BOUNDARIES = ("closed", "periodic", "window")


@dataclass(frozen=True)
class DomainSpec:
    """Where particles live: a box [0, L]^d with one of three edge rules.

    "closed" boxes have hard walls (the amplitude vanishes on the edge),
    "periodic" boxes wrap, and "window" boxes merely truncate an open
    system (e.g. a trap) to a finite sampling region.
    """

    spatial_dim: int
    box_length: float
    boundary: str

    def __post_init__(self):
        if self.spatial_dim not in (1, 2):
            raise ValueError("spatial_dim must be 1 or 2")
        if self.box_length <= 0:
            raise ValueError("box_length must be positive")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @property
    def volume(self) -> float:
        return self.box_length**self.spatial_dim


@dataclass(frozen=True)
class ModelSpec:
    """A grand-canonical model: domain, couplings, chemical potential.

    kind:
      lieb_liniger  contact gas on a closed 1D box (the delta interaction
                    is carried by the Jastrow cusp and contributes nothing
                    at sampled, non-coincident points)
      cs1d          inverse-sine-square gas on a 1D ring
      cs2d          inverse-square gas with its three-body partner in a 2D
                    harmonic trap (three-body coupling tied equal to g)
      gauss         gaussian-core gas in a 2D harmonic trap

    omega is the trap frequency (trap kinds only); interaction_width is the
    gaussian core width s (gauss only).
    """

    kind: str
    domain: DomainSpec
    coupling: float
    mu: float
    omega: float = 0.0
    interaction_width: float = 0.5
    kinetic_prefactor: float = 1.0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kinetic_prefactor <= 0:
            raise ValueError("kinetic_prefactor must be positive")
        d, boundary = self.domain.spatial_dim, self.domain.boundary
        if self.kind == "lieb_liniger":
            if (d, boundary) != (1, "closed"):
                raise ValueError("lieb_liniger requires a closed 1D box")
            if self.coupling <= 0:
                raise ValueError("lieb_liniger requires coupling > 0")
        elif self.kind == "cs1d":
            if (d, boundary) != (1, "periodic"):
                raise ValueError("cs1d requires a periodic 1D box")
            if self.coupling <= 0:
                raise ValueError("cs1d requires coupling > 0")
        else:
            if (d, boundary) != (2, "window"):
                raise ValueError(f"{self.kind} requires a 2D trap window")
            if self.omega <= 0:
                raise ValueError("trap models require omega > 0")
            if self.kind == "cs2d" and self.coupling <= 0:
                raise ValueError("cs2d requires coupling > 0")
            if self.kind == "gauss":
                if self.coupling < 0:
                    raise ValueError("gauss requires coupling >= 0")
                if self.interaction_width <= 0:
                    raise ValueError("interaction_width must be positive")

    @property
    def mass(self) -> float:
        return 1.0 / (2.0 * self.kinetic_prefactor)

    @property
    def trap_center(self) -> np.ndarray:
        c = 0.5 * self.domain.box_length
        return np.full(self.domain.spatial_dim, c)


def jastrow_exponent(model: ModelSpec) -> float:
    """Closed-form pair exponent matching the model's cusp/singularity."""
    m, g = model.mass, model.coupling
    if model.kind == "cs1d":
        return 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * m * g))
    if model.kind == "cs2d":
        return float(np.sqrt(m * g))
    raise ValueError(f"no closed-form pair exponent for {model.kind!r}")


def default_factors(model: ModelSpec) -> ExtraFactors:
    """The closed-form amplitude factors this model is normally paired with."""
    if model.kind == "lieb_liniger":
        return ExtraFactors(
            cutoff="box", jastrow="lieb_liniger", jastrow_param=model.mass * model.coupling
        )
    if model.kind == "cs1d":
        return ExtraFactors(cutoff="none", jastrow="cs1d", jastrow_param=jastrow_exponent(model))
    if model.kind == "cs2d":
        return ExtraFactors(cutoff="none", jastrow="cs2d", jastrow_param=jastrow_exponent(model))
    return ExtraFactors()


def pair_potential(model: ModelSpec, r1, r2) -> float:
    """Interaction energy W(r1, r2) of two distinct particles.

    The lieb_liniger contact interaction is zero almost everywhere and is
    reported as zero; its effect lives in the wavefunction cusp.
    """
    r1 = np.atleast_1d(np.asarray(r1, dtype=np.float64))
    r2 = np.atleast_1d(np.asarray(r2, dtype=np.float64))
    length = model.domain.box_length
    if model.kind == "lieb_liniger":
        return 0.0
    if model.kind == "cs1d":
        s = np.sin(np.pi * (r1[0] - r2[0]) / length)
        return float(model.coupling * (np.pi / length) ** 2 / s**2)
    dsq = float(np.sum((r1 - r2) ** 2))
    if model.kind == "cs2d":
        return model.coupling / dsq
    s2 = model.interaction_width**2
    return model.coupling / (np.pi * s2) * float(np.exp(-dsq / s2))


@functools.lru_cache(maxsize=None)
def _potential_fn(model: ModelSpec, n_max: int):
    """Jit-friendly sum of all diagonal (multiplicative) energy terms."""
    length = model.domain.box_length
    upper = np.triu(np.ones((n_max, n_max), dtype=bool), k=1)

    def potential(positions, n):
        positions = jnp.asarray(positions, dtype=jnp.float64)
        mask = jnp.arange(n_max) < n
        nf = jnp.asarray(n, dtype=jnp.float64)
        total = -model.mu * nf

        if model.kind in ("cs2d", "gauss"):
            rel = positions - jnp.asarray(model.trap_center)
            rsq = jnp.sum(rel**2, axis=-1)
            total = total + model.omega**2 * jnp.sum(jnp.where(mask, rsq, 0.0))

        if model.kind == "lieb_liniger" or n_max < 2:
            return total

        pair_real = jnp.asarray(upper) & mask[:, None] & mask[None, :]
        delta = positions[:, None, :] - positions[None, :, :]
        if model.kind == "cs1d":
            s = jnp.sin(jnp.pi * delta[:, :, 0] / length)
            s2 = jnp.where(pair_real & (s != 0.0), s**2, 1.0)
            w = model.coupling * (jnp.pi / length) ** 2 / s2
            total = total + jnp.sum(jnp.where(pair_real, w, 0.0))
        elif model.kind == "cs2d":
            dsq = jnp.sum(delta**2, axis=-1)
            dsq = jnp.where(pair_real & (dsq > 0.0), dsq, 1.0)
            total = total + model.coupling * jnp.sum(
                jnp.where(pair_real, 1.0 / dsq, 0.0)
            )
            total = total + _three_body_sum(model, positions, mask, n_max)
        elif model.kind == "gauss" and model.coupling != 0.0:
            dsq = jnp.sum(delta**2, axis=-1)
            s2 = model.interaction_width**2
            w = model.coupling / (jnp.pi * s2) * jnp.exp(-dsq / s2)
            total = total + jnp.sum(jnp.where(pair_real, w, 0.0))
        return total

    return potential


def _three_body_sum(model: ModelSpec, positions, mask, n_max: int):
    """G * sum over centers k and unordered pairs i<j (both != k) of
    (r_k - r_i).(r_k - r_j) / (|r_k - r_i|^2 |r_k - r_j|^2), with G = g.

    Written per center as (|sum_i u_ki|^2 - sum_i |u_ki|^2) / 2 with
    u_ki = (r_k - r_i)/|r_k - r_i|^2, which is the same double sum at
    O(n^2) cost.
    """
    diff = positions[:, None, :] - positions[None, :, :]
    dsq = jnp.sum(diff**2, axis=-1)
    valid = mask[:, None] & mask[None, :] & ~jnp.eye(n_max, dtype=bool)
    dsq_safe = jnp.where(valid & (dsq > 0.0), dsq, 1.0)
    u = jnp.where(valid[:, :, None], diff / dsq_safe[:, :, None], 0.0)
    inv = jnp.where(valid, 1.0 / dsq_safe, 0.0)
    row_sum = jnp.sum(u, axis=1)
    per_center = 0.5 * (jnp.sum(row_sum**2, axis=-1) - jnp.sum(inv, axis=1))
    return model.coupling * jnp.sum(jnp.where(mask, per_center, 0.0))


def local_energy(model: ModelSpec, derivs: LogAmpDerivatives, config) -> float:
    """Local energy from precomputed log-derivatives at one configuration."""
    kinetic = -model.kinetic_prefactor * (
        derivs.coord_laplacian + float(np.sum(derivs.coord_grad**2))
    )
    n_max = np.asarray(config.positions).shape[0]
    pot = _potential_fn(model, n_max)(jnp.asarray(config.positions), config.n)
    return float(kinetic + pot)


def make_local_energy_fn(model: ModelSpec, logamp_fn, n_max: int):
    """Jit-able (params, positions, n) -> local energy for one configuration."""
    d = model.domain.spatial_dim
    grad_fn = make_coord_grad_fn(logamp_fn)
    lap_fn = make_laplacian_fn(logamp_fn, n_max, d)
    pot_fn = _potential_fn(model, n_max)

    def e_loc(params, positions, n):
        grad = grad_fn(params, positions, n)
        lap = lap_fn(params, positions, n)
        kin = -model.kinetic_prefactor * (lap + jnp.sum(grad**2))
        return kin + pot_fn(positions, n)

    return e_loc
