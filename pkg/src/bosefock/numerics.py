"""Dense array kernels shared by the other modules.

Masked row-wise softmax, weighted log-sum-exp, layer normalization, the
log-cosh activation, and a symmetric positive-definite solve.  Everything is
64-bit.  Masking uses a large negative additive sentinel rather than boolean
arguments so the same scores tensor can flow through attention unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import jax
import jax.numpy as jnp
import numpy as np
import scipy.linalg

# Additive mask value; any score at or below MASK_THRESHOLD is excluded
# exactly (probability 0), not merely suppressed.
MASK_SENTINEL = -1.0e30
MASK_THRESHOLD = -1.0e29

# Relative residual bound guaranteed by solve_spd.
SPD_RESIDUAL_RTOL = 1.0e-8

LAYER_NORM_EPS = 1.0e-6

_LOG2 = float(np.log(2.0))


def masked_softmax_rows(scores):
    """Row-wise softmax treating entries <= MASK_THRESHOLD as absent.

    Safe under jit and differentiation: excluded entries come out exactly
    zero, and rows with every entry excluded come out as all-zero rows
    instead of raising.  ``softmax_rows`` is the strict eager wrapper.
    """
    excluded = scores <= MASK_THRESHOLD
    safe = jnp.where(excluded, -jnp.inf, scores)
    row_max = jnp.max(safe, axis=-1, keepdims=True)
    row_max = jnp.where(jnp.isfinite(row_max), row_max, 0.0)
    weights = jnp.where(excluded, 0.0, jnp.exp(safe - row_max))
    total = jnp.sum(weights, axis=-1, keepdims=True)
    return weights / jnp.where(total == 0.0, 1.0, total)


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a scores matrix with sentinel masking.

    Parameters
    ----------
    scores:
        Array whose last axis is the softmax axis.  Entries at or below
        MASK_THRESHOLD are excluded exactly.

    Returns
    -------
    Probabilities of the same shape.  Each non-degenerate row sums to one.

    Raises
    ------
    ValueError
        If any row has every entry masked: the caller produced a row with
        nothing to attend to, which is a logic error upstream.
    """
    scores = np.asarray(scores, dtype=np.float64)
    dead = np.all(scores <= MASK_THRESHOLD, axis=-1)
    if np.any(dead):
        raise ValueError(
            f"softmax over fully masked row(s) {np.argwhere(dead).ravel().tolist()}"
        )
    return np.asarray(masked_softmax_rows(scores))


def log_sum_exp_weighted(values, weights):
    """log(sum_i weights_i * exp(values_i)) with max-subtraction stability.

    Weights must be strictly positive; values may span hundreds of orders
    of magnitude without overflow.
    """
    values = jnp.asarray(values, dtype=jnp.float64)
    weights = jnp.asarray(weights, dtype=jnp.float64)
    if values.shape != weights.shape:
        raise ValueError(f"shape mismatch {values.shape} vs {weights.shape}")
    if values.size == 0:
        raise ValueError("log_sum_exp_weighted of an empty vector")
    if not isinstance(values, jax.core.Tracer) and not isinstance(
        weights, jax.core.Tracer
    ):
        if bool(jnp.any(weights <= 0.0)):
            raise ValueError("weights must be strictly positive")
    shift = jnp.max(values)
    return shift + jnp.log(jnp.sum(weights * jnp.exp(values - shift)))


def layer_norm(x, scale, offset, eps: float = LAYER_NORM_EPS):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    mean = jnp.mean(x, axis=-1, keepdims=True)
    var = jnp.mean((x - mean) ** 2, axis=-1, keepdims=True)
    return (x - mean) / jnp.sqrt(var + eps) * scale + offset


def log_cosh(x):
    """log(cosh(x)), overflow-safe, smooth at zero.

    Written as x + softplus(-2x) - log 2 so both tails are linear and the
    second derivative at the origin is exact (needed by the Laplacian path).
    """
    return x + jax.nn.softplus(-2.0 * x) - _LOG2


@dataclass(frozen=True)
class SpdSystem:
    """A symmetric positive-(semi)definite linear system A x = b.

    ``shift`` is added to the diagonal before factorization; the solve is
    performed on (matrix + shift * I).
    """

    matrix: np.ndarray
    rhs: np.ndarray
    shift: float = 0.0


def solve_spd(system: SpdSystem) -> np.ndarray:
    """Solve (A + shift*I) x = b by Cholesky factorization.

    Guarantees ||(A + shift*I) x - b|| <= 1e-8 ||b||, applying one step of
    iterative refinement if the first solve falls short.

    Raises
    ------
    ValueError
        If the matrix is not symmetric, or not positive definite after the
        shift (the message carries the smallest LDL pivot).
    ArithmeticError
        If the residual bound cannot be met (severe ill-conditioning).
    """
    a = np.asarray(system.matrix, dtype=np.float64)
    b = np.asarray(system.rhs, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    if b.shape != (a.shape[0],):
        raise ValueError(f"rhs shape {b.shape} does not match matrix {a.shape}")
    asym = np.max(np.abs(a - a.T)) if a.size else 0.0
    scale = max(np.max(np.abs(a)), 1.0)
    if asym > 1e-10 * scale:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    shifted = a + system.shift * np.eye(a.shape[0])
    try:
        factor = scipy.linalg.cho_factor(shifted, lower=True)
    except scipy.linalg.LinAlgError as err:
        _, d, _ = scipy.linalg.ldl(shifted)
        pivot = float(np.min(np.diag(d)))
        raise ValueError(
            f"matrix not positive definite after shift {system.shift:g}: "
            f"smallest pivot {pivot:.6e}"
        ) from err
    x = scipy.linalg.cho_solve(factor, b)
    bnorm = np.linalg.norm(b)
    residual = b - shifted @ x
    if np.linalg.norm(residual) > SPD_RESIDUAL_RTOL * bnorm:
        x = x + scipy.linalg.cho_solve(factor, residual)
        residual = b - shifted @ x
        if np.linalg.norm(residual) > SPD_RESIDUAL_RTOL * bnorm:
            raise ArithmeticError(
                f"residual {np.linalg.norm(residual):.3e} exceeds "
                f"{SPD_RESIDUAL_RTOL:g} * ||b|| after refinement"
            )
    return x


def solve_psd_pinv(matrix: np.ndarray, rhs: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Least-norm solve of a symmetric PSD system via eigendecomposition.

    Used where the system is legitimately rank-deficient (e.g. an
    unregularized tangent kernel with more samples than parameters).
    Eigenvalues below rtol * max_eigenvalue are treated as zero.
    """
    a = np.asarray(matrix, dtype=np.float64)
    b = np.asarray(rhs, dtype=np.float64)
    evals, evecs = np.linalg.eigh(a)
    cut = rtol * max(float(evals[-1]), 0.0)
    inv = np.where(evals > cut, 1.0 / np.where(evals > cut, evals, 1.0), 0.0)
    return evecs @ (inv * (evecs.T @ b))
