"""Closed-form reference results used as oracles by tests and benchmarks.

Canonical ground-state energies of the solvable models, exact reference
densities, exact (unnormalized) log ground states for zero-variance checks,
the integer grand-canonical minimizer, and a small catalog of benchmark
targets whose provenance is a published table rather than a formula here.

Units: hbar = 2m = 1 throughout (kinetic prefactor 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np


def tg_energy(n_particles: int, box_length: float) -> float:
    """Ground-state energy of n hard-core bosons on a closed 1D box.

    Free-fermion filling: sum of k^2 pi^2 / L^2 over k = 1..n.
    """
    ks = np.arange(1, n_particles + 1, dtype=np.float64)
    return float(np.sum(ks**2) * np.pi**2 / box_length**2)


def tg_number_density(x, n_particles: int, box_length: float):
    """Exact density of the hard-core gas: sum of the filled box modes."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    for k in range(1, n_particles + 1):
        out += (2.0 / box_length) * np.sin(k * np.pi * x / box_length) ** 2
    return out


def cs1d_lambda(coupling: float) -> float:
    """Pair exponent of the inverse-sine-square gas, lambda(lambda-1) = g/2."""
    return 0.5 * (1.0 + math.sqrt(1.0 + 2.0 * coupling))


def cs1d_energy(n_particles: int, coupling: float, box_length: float) -> float:
    """Canonical ground-state energy on the ring:
    pi^2 lambda^2 N (N^2 - 1) / (3 L^2)."""
    lam = cs1d_lambda(coupling)
    n = n_particles
    return float(np.pi**2 * lam**2 * n * (n**2 - 1) / (3.0 * box_length**2))


def cs1d_mu(n_target: int, coupling: float, box_length: float) -> float:
    """Chemical potential placing the grand minimum at n_target particles:
    3 N^2 pi^2 lambda^2 / (3 L^2) = dE/dN at N = n_target (continuum form)."""
    lam = cs1d_lambda(coupling)
    return float(np.pi**2 * lam**2 * n_target**2 / box_length**2)


def cs2d_lambda(coupling: float) -> float:
    """Pair exponent of the 2D inverse-square gas: sqrt(g/2)."""
    return math.sqrt(coupling / 2.0)


def cs2d_energy(n_particles: int, coupling: float, omega: float) -> float:
    """Canonical ground-state energy in the trap: [2N + N(N-1) lambda] omega."""
    n = n_particles
    return float((2.0 * n + n * (n - 1) * cs2d_lambda(coupling)) * omega)


def cs2d_radial_density(r, n_particles: int, omega: float):
    """Exact radial density of the 2D inverse-square gas at lambda = 1 (g = 2):
    (omega/pi) e^(-omega r^2) sum_{p<N} (omega r^2)^p / p!.

    Normalized so the 2D integral equals N.  Only valid at that coupling.
    """
    r = np.asarray(r, dtype=np.float64)
    u = omega * r**2
    total = np.zeros_like(r)
    term = np.ones_like(r)
    for p in range(n_particles):
        if p > 0:
            term = term * u / p
        total += term
    return omega / np.pi * np.exp(-u) * total


def grand_minimizer(energy_fn, mu: float, n_hi: int) -> tuple[float, int]:
    """Minimize E(N) - mu N over integer N in [0, n_hi].

    energy_fn(0) must be 0.  Returns (minimal grand energy, smallest argmin).
    """
    best_val, best_n = 0.0, 0
    for n in range(n_hi + 1):
        val = energy_fn(n) - mu * n
        if val < best_val - 1e-12:
            best_val, best_n = val, n
    return best_val, best_n


@dataclass(frozen=True)
class BenchmarkTarget:
    """One published benchmark row: grand energy and particle number."""

    model: str
    coupling: float
    mu: float
    energy: float
    n0: int
    note: str = ""


# Published benchmark rows.  The hard-core row also follows from tg_energy
# (closed form -408.5 pi^2 = -4031.7334, 0.06 away from the rounded table
# value).  The finite-coupling contact-gas row has no closed form here and
# is catalog-only.  The cs1d/cs2d rows are reproduced by grand_minimizer
# over the closed forms above.
CATALOG: tuple[BenchmarkTarget, ...] = (
    BenchmarkTarget("lieb_liniger", 1e6, (8.75 * math.pi) ** 2, -4031.79, 8, "hard-core limit"),
    BenchmarkTarget("lieb_liniger", 10.0, 115.0, -371.81, 6, "catalog only"),
    BenchmarkTarget("cs1d", 5.0, cs1d_mu(5, 5.0, 5.0), -156.317, 5, ""),
    BenchmarkTarget("cs1d", 30.0, cs1d_mu(10, 30.0, 5.0), -5132.76, 10, ""),
    BenchmarkTarget("cs2d", 2.0, 22.0, -110.0, 10, "n=10 and n=11 degenerate"),
    BenchmarkTarget("cs2d", 5.0, 25.0, -95.46, 8, ""),
)


def catalog_lookup(model: str, coupling: float) -> BenchmarkTarget:
    for row in CATALOG:
        if row.model == model and np.isclose(row.coupling, coupling):
            return row
    raise KeyError(f"no catalog row for {model} at coupling {coupling}")


# --- exact log ground states (unnormalized), for zero-variance checks -------
#
# Pair terms use full (n_max, n_max) difference matrices with a constant
# upper-triangle mask rather than triu gathers; second derivatives of
# gathered differences miscompile under jit when n is traced.


def _real_pairs(n_max: int, mask):
    upper = jnp.asarray(np.triu(np.ones((n_max, n_max), dtype=bool), k=1))
    return upper & mask[:, None] & mask[None, :]


def tg_log_state(box_length: float):
    """|det| of the filled box modes in product form:
    prod_i sin(pi x_i / L) * prod_{i<j} |cos(pi x_i/L) - cos(pi x_j/L)|."""

    def logamp(params, positions, n):
        del params
        x = jnp.asarray(positions)[:, 0]
        n_max = x.shape[0]
        mask = jnp.arange(n_max) < n
        theta = jnp.pi * x / box_length
        single = jnp.sum(jnp.where(mask, jnp.log(jnp.where(mask, jnp.sin(theta), 1.0)), 0.0))
        pair_real = _real_pairs(n_max, mask)
        c = jnp.cos(theta)
        diff = jnp.abs(c[:, None] - c[None, :])
        coincident = jnp.any(pair_real & (diff == 0.0))
        diff = jnp.where(pair_real & (diff > 0.0), diff, 1.0)
        total = single + jnp.sum(jnp.where(pair_real, jnp.log(diff), 0.0))
        return jnp.where(coincident, -jnp.inf, total)

    return logamp


def cs1d_log_state(coupling: float, box_length: float):
    """lambda * sum log|sin(pi (x_i - x_j) / L)| on the ring."""
    lam = cs1d_lambda(coupling)

    def logamp(params, positions, n):
        del params
        x = jnp.asarray(positions)[:, 0]
        n_max = x.shape[0]
        mask = jnp.arange(n_max) < n
        pair_real = _real_pairs(n_max, mask)
        s = jnp.abs(jnp.sin(jnp.pi * (x[:, None] - x[None, :]) / box_length))
        coincident = jnp.any(pair_real & (s == 0.0))
        s = jnp.where(pair_real & (s > 0.0), s, 1.0)
        total = lam * jnp.sum(jnp.where(pair_real, jnp.log(s), 0.0))
        return jnp.where(coincident, -jnp.inf, total)

    return logamp


def cs2d_log_state(coupling: float, omega: float, center):
    """-(omega/2) sum |r_i - c|^2 + lambda sum log|r_i - r_j| in the trap."""
    lam = cs2d_lambda(coupling)
    center = np.asarray(center, dtype=np.float64)

    def logamp(params, positions, n):
        del params
        r = jnp.asarray(positions) - center
        n_max = r.shape[0]
        mask = jnp.arange(n_max) < n
        gauss = -0.5 * omega * jnp.sum(jnp.where(mask, jnp.sum(r**2, axis=-1), 0.0))
        pair_real = _real_pairs(n_max, mask)
        delta = jnp.where(pair_real[:, :, None], r[:, None, :] - r[None, :, :], 1.0)
        dist = jnp.sqrt(jnp.sum(delta**2, axis=-1))
        coincident = jnp.any(pair_real & (dist == 0.0))
        dist = jnp.where(pair_real & (dist > 0.0), dist, 1.0)
        total = gauss + lam * jnp.sum(jnp.where(pair_real, jnp.log(dist), 0.0))
        return jnp.where(coincident, -jnp.inf, total)

    return logamp


def trap_log_state(omega: float, center):
    """Exact non-interacting trap ground state, -(omega/2) sum |r_i - c|^2."""
    center = np.asarray(center, dtype=np.float64)

    def logamp(params, positions, n):
        del params
        r = jnp.asarray(positions) - center
        n_max = r.shape[0]
        mask = jnp.arange(n_max) < n
        return -0.5 * omega * jnp.sum(jnp.where(mask, jnp.sum(r**2, axis=-1), 0.0))

    return logamp
