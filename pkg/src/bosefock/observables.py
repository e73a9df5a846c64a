"""Estimators over sample batches: energies, densities, one-body matrices.

Every scalar estimate pools all retained samples (all chains, all particle
numbers) for its mean, and quotes the spread of per-chain means as the
error bar:

    stderr = std(chain means, ddof=1) / sqrt(n_chains).

Density histograms deposit 1/(bin volume x N_s) per particle, so the
integral over bins reproduces the mean particle number exactly.  The
one-body density matrix comes in two estimators: a displacement curve
rho(s) for periodic boxes, and a projection onto harmonic-oscillator
orbitals for trapped systems, from which the condensate fraction is the
largest eigenvalue over <N>.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np
from numpy.polynomial import hermite as nph

from .models import ModelSpec, make_local_energy_fn
from .sampler import SampleBatch


@dataclass(frozen=True)
class EstimateWithError:
    """Pooled mean with a chain-spread error bar (nan for a single chain)."""

    mean: float
    stderr: float
    n_chains: int


def scalar_estimate(values_by_chain: np.ndarray) -> EstimateWithError:
    """Pooled mean and chain-means stderr of per-sample scalars (C, S)."""
    values = np.asarray(values_by_chain, dtype=np.float64)
    if values.ndim != 2 or values.size == 0:
        raise ValueError("expected a non-empty (chains, samples) array")
    n_chains = values.shape[0]
    mean = float(values.mean())
    if n_chains < 2:
        return EstimateWithError(mean=mean, stderr=float("nan"), n_chains=n_chains)
    chain_means = values.mean(axis=1)
    stderr = float(chain_means.std(ddof=1) / math.sqrt(n_chains))
    return EstimateWithError(mean=mean, stderr=stderr, n_chains=n_chains)


_ELOC_CACHE: dict = {}


def batch_local_energies(
    batch: SampleBatch, model: ModelSpec, logamp_fn, params
) -> np.ndarray:
    """Local energy of every retained sample, shaped (chains, samples)."""
    n_max = batch.positions.shape[2]
    cache_key = (model, logamp_fn, n_max)
    fn = _ELOC_CACHE.get(cache_key)
    if fn is None:
        e_loc = make_local_energy_fn(model, logamp_fn, n_max=n_max)
        fn = jax.jit(jax.vmap(jax.vmap(e_loc, in_axes=(None, 0, 0)), in_axes=(None, 0, 0)))
        _ELOC_CACHE[cache_key] = fn
    return np.asarray(fn(params, jnp.asarray(batch.positions), jnp.asarray(batch.ns)))


def energy_estimate(
    batch: SampleBatch, model: ModelSpec, logamp_fn, params
) -> EstimateWithError:
    return scalar_estimate(batch_local_energies(batch, model, logamp_fn, params))


def number_estimate(batch: SampleBatch) -> EstimateWithError:
    return scalar_estimate(batch.ns.astype(np.float64))


def rescaled_variance(e_loc_by_chain: np.ndarray, mean_n: float) -> float:
    """N (⟨H²⟩ - ⟨H⟩²) / ⟨H⟩², the size-aware accuracy metric.

    Warns when the mean energy is statistically indistinguishable from
    zero (within 3 sigma), where the ratio carries no information.
    """
    est = scalar_estimate(e_loc_by_chain)
    flat = np.asarray(e_loc_by_chain, dtype=np.float64).ravel()
    if np.isfinite(est.stderr) and abs(est.mean) < 3.0 * est.stderr:
        warnings.warn("rescaled variance unreliable: <E> within 3 sigma of 0",
                      RuntimeWarning)
    # extreme pre-convergence energies may overflow to inf; never raise
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.float64(mean_n) * flat.var() / np.float64(est.mean) ** 2)


def number_distribution(batch: SampleBatch, n_max: int):
    """(P_n, stderr_n) over sectors 0..n_max; probabilities sum to one."""
    flat = batch.flat_ns()
    if flat.min() < 0 or flat.max() > n_max:
        raise ValueError("sample particle numbers exceed n_max")
    probs = np.bincount(flat, minlength=n_max + 1) / flat.size
    per_chain = np.stack(
        [np.bincount(row, minlength=n_max + 1) / row.size for row in batch.ns]
    )
    n_chains = per_chain.shape[0]
    if n_chains < 2:
        stderr = np.full(n_max + 1, np.nan)
    else:
        stderr = per_chain.std(axis=0, ddof=1) / math.sqrt(n_chains)
    return probs, stderr


def _histogram_by_chain(coords_by_chain, weights_per_sample, edges, volumes):
    """Per-chain deposit histograms: each particle adds 1/(volume * S)."""
    rows = []
    for coords, n_samples in zip(coords_by_chain, weights_per_sample):
        counts, _ = np.histogram(coords, bins=edges)
        rows.append(counts / (volumes * n_samples))
    return np.stack(rows)


def density_profile(batch: SampleBatch, edges: np.ndarray, axis: int = 0):
    """Marginal particle density along one axis: (centers, value, stderr).

    Bin edges must cover every sampled coordinate or the counting identity
    (integral = <n>) breaks; out-of-range particles raise.
    """
    edges = np.asarray(edges, dtype=np.float64)
    if batch.ns.size == 0:
        raise ValueError("empty batch")
    volumes = np.diff(edges)
    per_chain = []
    for c in range(batch.chains):
        coords = []
        for s in range(batch.samples_per_chain):
            n = batch.ns[c, s]
            coords.append(batch.positions[c, s, :n, axis])
        coords = np.concatenate(coords) if coords else np.empty(0)
        if coords.size and (coords.min() < edges[0] or coords.max() > edges[-1]):
            raise ValueError("bin edges do not cover the sampled coordinates")
        counts, _ = np.histogram(coords, bins=edges)
        per_chain.append(counts / (volumes * batch.samples_per_chain))
    per_chain = np.stack(per_chain)
    centers = 0.5 * (edges[:-1] + edges[1:])
    value = per_chain.mean(axis=0)
    if batch.chains < 2:
        stderr = np.full_like(value, np.nan)
    else:
        stderr = per_chain.std(axis=0, ddof=1) / math.sqrt(batch.chains)
    return centers, value, stderr


def radial_density_profile(batch: SampleBatch, edges: np.ndarray, center):
    """Angular-averaged 2D density in annular bins about `center`."""
    edges = np.asarray(edges, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    if batch.positions.shape[-1] != 2:
        raise ValueError("radial profile requires two-dimensional samples")
    areas = np.pi * (edges[1:] ** 2 - edges[:-1] ** 2)
    per_chain = []
    for c in range(batch.chains):
        radii = []
        for s in range(batch.samples_per_chain):
            n = batch.ns[c, s]
            rel = batch.positions[c, s, :n] - center
            radii.append(np.hypot(rel[:, 0], rel[:, 1]))
        radii = np.concatenate(radii) if radii else np.empty(0)
        if radii.size and radii.max() > edges[-1]:
            raise ValueError("bin edges do not cover the sampled radii")
        counts, _ = np.histogram(radii, bins=edges)
        per_chain.append(counts / (areas * batch.samples_per_chain))
    per_chain = np.stack(per_chain)
    centers = 0.5 * (edges[:-1] + edges[1:])
    value = per_chain.mean(axis=0)
    if batch.chains < 2:
        stderr = np.full_like(value, np.nan)
    else:
        stderr = per_chain.std(axis=0, ddof=1) / math.sqrt(batch.chains)
    return centers, value, stderr


_OBDM_SHIFT_CACHE: dict = {}


def obdm_translation_invariant(
    batch: SampleBatch, model: ModelSpec, logamp_fn, params, displacements
):
    """rho(s) on a periodic box: (values, stderr), one entry per displacement.

    Per sample, the first particle is moved by +s and -s (wrapped) and the
    two amplitude ratios are averaged; the estimator is n/L^d times that
    ratio, zero for empty configurations.
    """
    if model.domain.boundary != "periodic":
        raise ValueError("displacement OBDM requires a periodic box; "
                         "use projected_obdm for trapped systems")
    length = model.domain.box_length
    d = model.domain.spatial_dim
    n_max = batch.positions.shape[2]
    displacements = np.asarray(displacements, dtype=np.float64)

    cache_key = (logamp_fn, n_max, length, d)
    fn = _OBDM_SHIFT_CACHE.get(cache_key)
    if fn is None:

        def one(params, pos, n, s):
            base = logamp_fn(params, pos, n)

            def shifted(sign):
                row = jnp.mod(pos[0] + sign * s, length)
                return logamp_fn(params, pos.at[0].set(row), n)

            ratio = 0.5 * (
                jnp.exp(shifted(+1.0) - base) + jnp.exp(shifted(-1.0) - base)
            )
            weight = jnp.asarray(n, dtype=jnp.float64) / length**d
            return jnp.where(n > 0, weight * ratio, 0.0)

        fn = jax.jit(
            jax.vmap(  # displacements
                jax.vmap(one, in_axes=(None, 0, 0, None)),  # samples
                in_axes=(None, None, None, 0),
            )
        )
        _OBDM_SHIFT_CACHE[cache_key] = fn

    flat_pos = jnp.asarray(batch.flat_positions())
    flat_ns = jnp.asarray(batch.flat_ns())
    shifts = jnp.asarray(
        displacements.reshape(-1, 1) if displacements.ndim == 1 else displacements
    )
    per_sample = np.asarray(fn(params, flat_pos, flat_ns, shifts))
    per_chain = per_sample.reshape(len(displacements), batch.chains, -1).mean(axis=2)
    values = per_chain.mean(axis=1)
    if batch.chains < 2:
        stderr = np.full_like(values, np.nan)
    else:
        stderr = per_chain.std(axis=1, ddof=1) / math.sqrt(batch.chains)
    return values, stderr


# --- projected OBDM for trapped systems -------------------------------------


def harmonic_orbitals(max_shell: int, omega: float, center):
    """Orthonormal 2D harmonic-oscillator eigenfunctions up to a shell.

    Returns (labels, evaluate) where labels lists (n_x, n_y) sorted by
    shell then n_x, and evaluate maps points (..., 2) to orbital values
    (..., M).  The width parameter is sqrt(omega), matching a Hamiltonian
    -laplacian + omega^2 r^2.
    """
    center = np.asarray(center, dtype=np.float64)
    labels = [
        (shell - ny, ny) for shell in range(max_shell + 1) for ny in range(shell, -1, -1)
    ]
    labels.sort(key=lambda t: (t[0] + t[1], t[0]))
    root_w = math.sqrt(omega)

    def one_dim(k: int, x: np.ndarray) -> np.ndarray:
        u = root_w * x
        coeff = np.zeros(k + 1)
        coeff[k] = 1.0
        norm = (omega / np.pi) ** 0.25 / math.sqrt(2.0**k * math.factorial(k))
        return norm * nph.hermval(u, coeff) * np.exp(-0.5 * u**2)

    def evaluate(points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64) - center
        x, y = points[..., 0], points[..., 1]
        cols = [one_dim(nx, x) * one_dim(ny, y) for nx, ny in labels]
        return np.stack(cols, axis=-1)

    return labels, evaluate


@dataclass(frozen=True)
class ProjectedObdm:
    """One-body density matrix in a finite orbital basis, symmetrized."""

    matrix: np.ndarray
    stderr: np.ndarray
    labels: tuple
    beta: float

    @property
    def basis_size(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.matrix))


_OBDM_RATIO_CACHE: dict = {}


def projected_obdm(
    batch: SampleBatch,
    model: ModelSpec,
    logamp_fn,
    params,
    *,
    max_shell: int = 6,
    beta: float | None = None,
    seed: int = 0,
) -> ProjectedObdm:
    """OBDM projected onto harmonic-oscillator orbitals of the trap.

    One auxiliary point r' per sample is drawn from the single-boson
    ground-state density (beta^2/pi) exp(-beta^2 |r' - center|^2); the
    estimator averages n phi_i(r_1) phi_j(r') x amplitude ratio / rho(r'),
    then symmetrizes.  The factor n restores bosonic counting so that
    trace(rho) = <N>.
    """
    if model.domain.spatial_dim != 2 or model.omega <= 0:
        raise ValueError("projected OBDM requires a 2D trap model")
    if beta is None:
        beta = math.sqrt(model.omega)
    center = model.trap_center
    labels, orbitals = harmonic_orbitals(max_shell, model.omega, center)
    m = len(labels)
    n_max = batch.positions.shape[2]

    rng = np.random.default_rng(seed)
    flat_pos = batch.flat_positions()
    flat_ns = batch.flat_ns()
    n_samples = flat_ns.size
    primes = rng.normal(loc=center, scale=1.0 / (beta * math.sqrt(2.0)),
                        size=(n_samples, 2))

    cache_key = (logamp_fn, n_max)
    ratio_fn = _OBDM_RATIO_CACHE.get(cache_key)
    if ratio_fn is None:

        def one(params, pos, n, prime):
            base = logamp_fn(params, pos, n)
            swapped = logamp_fn(params, pos.at[0].set(prime), n)
            return jnp.where(n > 0, jnp.exp(swapped - base), 0.0)

        ratio_fn = jax.jit(jax.vmap(one, in_axes=(None, 0, 0, 0)))
        _OBDM_RATIO_CACHE[cache_key] = ratio_fn

    ratios = np.asarray(ratio_fn(params, jnp.asarray(flat_pos), jnp.asarray(flat_ns),
                                 jnp.asarray(primes)))
    rel = primes - center
    rho_prime = beta**2 / np.pi * np.exp(-(beta**2) * np.sum(rel**2, axis=1))
    weights = flat_ns * ratios / rho_prime

    phi_first = orbitals(flat_pos[:, 0, :])      # (N_s, M); row garbage at n=0
    phi_prime = orbitals(primes)                 # (N_s, M)
    phi_first[flat_ns == 0] = 0.0

    contrib = np.einsum("s,si,sj->sij", weights, phi_first, phi_prime)
    per_chain = contrib.reshape(batch.chains, -1, m, m).mean(axis=1)
    per_chain = 0.5 * (per_chain + per_chain.transpose(0, 2, 1))
    matrix = per_chain.mean(axis=0)
    if batch.chains < 2:
        stderr = np.full_like(matrix, np.nan)
    else:
        stderr = per_chain.std(axis=0, ddof=1) / math.sqrt(batch.chains)

    mean_n = float(flat_ns.mean())
    deficit = mean_n - float(np.trace(matrix))
    if mean_n > 0 and abs(deficit) > 0.05 * mean_n:
        warnings.warn(
            f"projected OBDM trace {np.trace(matrix):.4f} misses <N>={mean_n:.4f} "
            "by more than 5%; consider more orbitals or samples",
            RuntimeWarning,
        )
    return ProjectedObdm(matrix=matrix, stderr=stderr, labels=tuple(labels), beta=beta)


def condensate_fraction(obdm: ProjectedObdm, mean_n: float) -> float:
    """Largest OBDM eigenvalue over the mean particle number."""
    asym = np.max(np.abs(obdm.matrix - obdm.matrix.T))
    scale = max(np.max(np.abs(obdm.matrix)), 1e-300)
    if asym > 1e-8 * scale:
        raise ValueError(f"OBDM asymmetric beyond tolerance: {asym:.3e}")
    if mean_n <= 0:
        raise ValueError("mean particle number must be positive")
    eigvals = np.linalg.eigvalsh(obdm.matrix)
    return float(eigvals[-1] / mean_n)
