"""Permutation-invariant attention trial state over bosonic Fock space.

A configuration is a fixed-size register of ``n_max`` particle slots plus a
count ``n``; slots at index >= n are padding and never influence the
amplitude.  The log-amplitude is the sum of a masked-attention network, a
trainable particle-number window, and closed-form boundary/cusp factors.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np

from .numerics import (
    MASK_SENTINEL,
    MASK_THRESHOLD,
    layer_norm,
    log_cosh,
    masked_softmax_rows,
)

EMBEDDINGS = ("gaussian", "fourier")
CUTOFFS = ("none", "box")
JASTROWS = ("none", "lieb_liniger", "cs1d", "cs1d_exact", "cs2d")

# Normalization constants of the box cutoff factor, per spatial dimension.
_BOX_NORM = {1: 30.0, 2: 100.0}


@dataclass(frozen=True)
class AnsatzHyper:
    """Shape of the network.

    ``grid_points`` is the per-axis resolution of the embedding: a gaussian
    embedding places grid_points**spatial_dim bumps on a uniform grid over
    the box, a fourier embedding uses grid_points harmonics per axis.  The
    embedding width k (``embed_dim``) follows from those choices and must be
    divisible by ``heads``.
    """

    embedding: str
    grid_points: int
    spatial_dim: int
    box_length: float
    blocks: int
    heads: int
    ffn_width: int
    n_max: int

    def __post_init__(self):
        if self.embedding not in EMBEDDINGS:
            raise ValueError(f"unknown embedding {self.embedding!r}")
        if self.spatial_dim not in (1, 2):
            raise ValueError(f"spatial_dim must be 1 or 2, got {self.spatial_dim}")
        min_pts = 2 if self.embedding == "gaussian" else 1
        if self.grid_points < min_pts:
            raise ValueError(f"grid_points must be >= {min_pts}")
        if self.box_length <= 0:
            raise ValueError("box_length must be positive")
        if self.blocks < 1 or self.heads < 1 or self.ffn_width < 1:
            raise ValueError("blocks, heads and ffn_width must be >= 1")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.embed_dim % self.heads != 0:
            raise ValueError(
                f"embed_dim {self.embed_dim} not divisible by heads {self.heads}"
            )

    @property
    def embed_dim(self) -> int:
        if self.embedding == "gaussian":
            return self.grid_points**self.spatial_dim
        return 2 * self.grid_points * self.spatial_dim

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads


@dataclass(frozen=True)
class ExtraFactors:
    """Closed-form multiplicative factors applied on top of the network.

    ``jastrow_param`` is m*g for the lieb_liniger kind and the pair exponent
    lambda for the cs kinds; it is ignored for "none".
    """

    cutoff: str = "none"
    jastrow: str = "none"
    jastrow_param: float = 0.0

    def __post_init__(self):
        if self.cutoff not in CUTOFFS:
            raise ValueError(f"unknown cutoff {self.cutoff!r}")
        if self.jastrow not in JASTROWS:
            raise ValueError(f"unknown jastrow {self.jastrow!r}")
        if self.jastrow != "none" and self.jastrow_param <= 0:
            raise ValueError("jastrow_param must be positive for this kind")


@dataclass(frozen=True)
class Configuration:
    """A padded particle register: positions (n_max, d) with n real rows."""

    positions: np.ndarray
    n: int

    def __post_init__(self):
        shape = np.shape(self.positions)
        if len(shape) != 2:
            raise ValueError(f"positions must be (n_max, d), got shape {shape}")
        if not 0 <= int(self.n) <= shape[0]:
            raise ValueError(f"n={self.n} outside register capacity {shape[0]}")


@dataclass(frozen=True)
class ParamLayout:
    """Deterministic flat ordering of every trainable array."""

    names: tuple[str, ...]
    shapes: tuple[tuple[int, ...], ...]

    @functools.cached_property
    def sizes(self) -> tuple[int, ...]:
        return tuple(int(np.prod(s, dtype=np.int64)) for s in self.shapes)

    @functools.cached_property
    def offsets(self) -> tuple[int, ...]:
        return tuple(np.cumsum((0,) + self.sizes[:-1]).tolist())

    @property
    def size(self) -> int:
        return sum(self.sizes)

    def slice_of(self, name: str) -> slice:
        i = self.names.index(name)
        return slice(self.offsets[i], self.offsets[i] + self.sizes[i])

    def indices_with_prefix(self, prefix: str) -> np.ndarray:
        """Flat-vector indices of every entry whose name starts with prefix."""
        picks = []
        for name, off, size in zip(self.names, self.offsets, self.sizes):
            if name.startswith(prefix):
                picks.append(np.arange(off, off + size))
        if not picks:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(picks)


def build_layout(hyper: AnsatzHyper) -> ParamLayout:
    """Enumerate every trainable array of the network, in flat order."""
    k = hyper.embed_dim
    h = hyper.heads
    dk = hyper.head_dim
    w = hyper.ffn_width
    entries: list[tuple[str, tuple[int, ...]]] = []
    for b in range(hyper.blocks):
        p = f"block{b}"
        entries += [
            (f"{p}.ln1.scale", (k,)),
            (f"{p}.ln1.offset", (k,)),
            (f"{p}.attn.wq", (h, k, dk)),
            (f"{p}.attn.bq", (h, dk)),
            (f"{p}.attn.wk", (h, k, dk)),
            (f"{p}.attn.bk", (h, dk)),
            (f"{p}.attn.wv", (h, k, dk)),
            (f"{p}.attn.bv", (h, dk)),
            (f"{p}.attn.wo", (k, k)),
            (f"{p}.attn.bo", (k,)),
            (f"{p}.ln2.scale", (k,)),
            (f"{p}.ln2.offset", (k,)),
            (f"{p}.ffn.w1", (k, w)),
            (f"{p}.ffn.b1", (w,)),
            (f"{p}.ffn.w2", (w, k)),
            (f"{p}.ffn.b2", (k,)),
        ]
    entries += [
        ("pool.log_a", (k,)),
        ("head.w1", (k, w)),
        ("head.b1", (w,)),
        ("head.w2", (w, 1)),
        ("head.b2", (1,)),
        ("window.c1", ()),
        ("window.gap", ()),
        ("window.s", ()),
    ]
    return ParamLayout(
        names=tuple(e[0] for e in entries), shapes=tuple(e[1] for e in entries)
    )


def count_params(hyper: AnsatzHyper) -> int:
    return build_layout(hyper).size


def _softplus_inv(y: float) -> float:
    # inverse of log(1 + e^x), stable for y up to hundreds
    return float(y + np.log1p(-np.exp(-y)))


def _xavier_limit(shape: tuple[int, ...]) -> float:
    # weight matrices are (fan_in, fan_out); per-head stacks are (H, fan_in, fan_out)
    fan_in, fan_out = shape[-2], shape[-1]
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(hyper: AnsatzHyper, seed: int) -> dict:
    """Xavier-uniform weights, zero biases, unit layer-norm scales.

    The number window starts wide open: c1 = 0, c2 = n_max, s = 1.  The
    pooling weights start at one (stored as log, so zero).  Deterministic:
    the same seed always returns bit-identical parameters.
    """
    layout = build_layout(hyper)
    base = jax.random.PRNGKey(seed)
    params: dict[str, jnp.ndarray] = {}
    for idx, (name, shape) in enumerate(zip(layout.names, layout.shapes)):
        leaf = name.rsplit(".", 1)[-1]
        if leaf.startswith("w"):
            lim = _xavier_limit(shape)
            params[name] = jax.random.uniform(
                jax.random.fold_in(base, idx),
                shape,
                minval=-lim,
                maxval=lim,
                dtype=jnp.float64,
            )
        elif leaf == "scale":
            params[name] = jnp.ones(shape, dtype=jnp.float64)
        elif name == "window.gap":
            params[name] = jnp.asarray(_softplus_inv(float(hyper.n_max)))
        elif name == "window.s":
            params[name] = jnp.asarray(_softplus_inv(1.0))
        else:
            params[name] = jnp.zeros(shape, dtype=jnp.float64)
    return params


def flatten_params(layout: ParamLayout, params: dict) -> np.ndarray:
    """Pack the parameter tree into one float64 vector, in layout order."""
    return np.concatenate(
        [np.asarray(params[name], dtype=np.float64).ravel() for name in layout.names]
    )


def flatten_params_jnp(layout: ParamLayout, params: dict):
    # jit/vmap-friendly variant of flatten_params; scalars need reshaping
    return jnp.concatenate(
        [jnp.reshape(params[name], (-1,)) for name in layout.names]
    )


def unflatten_params(layout: ParamLayout, vector: np.ndarray) -> dict:
    """Inverse of flatten_params."""
    vector = jnp.asarray(vector, dtype=jnp.float64)
    if vector.shape != (layout.size,):
        raise ValueError(f"expected vector of length {layout.size}, got {vector.shape}")
    out = {}
    for name, shape, off, size in zip(
        layout.names, layout.shapes, layout.offsets, layout.sizes
    ):
        out[name] = jnp.reshape(vector[off : off + size], shape)
    return out


# --- embedding -------------------------------------------------------------


def _gaussian_grid(hyper: AnsatzHyper) -> np.ndarray:
    pts = np.linspace(0.0, hyper.box_length, hyper.grid_points)
    if hyper.spatial_dim == 1:
        return pts[:, None]
    xx, yy = np.meshgrid(pts, pts, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel()], axis=-1)


def embed_positions(hyper: AnsatzHyper, positions):
    """Map the (n_max, d) register to (n_max, k) embedding rows.

    Gaussian kind: one bump exp(-|r - s|^2 / (2 sigma^2)) per grid point s,
    sigma twice the grid spacing.  Fourier kind: interleaved
    sin(2 pi j x / L), cos(2 pi j x / L) for j = 1..grid_points, per axis.
    Rows are computed for every slot; masking is the caller's business.
    """
    positions = jnp.asarray(positions, dtype=jnp.float64)
    if hyper.embedding == "gaussian":
        grid = jnp.asarray(_gaussian_grid(hyper))
        spacing = hyper.box_length / (hyper.grid_points - 1)
        sigma = 2.0 * spacing
        sq = jnp.sum((positions[:, None, :] - grid[None, :, :]) ** 2, axis=-1)
        return jnp.exp(-sq / (2.0 * sigma**2))
    js = jnp.arange(1, hyper.grid_points + 1, dtype=jnp.float64)
    angles = 2.0 * jnp.pi * positions[:, :, None] * js / hyper.box_length
    feats = jnp.stack([jnp.sin(angles), jnp.cos(angles)], axis=-1)
    return feats.reshape(positions.shape[0], hyper.embed_dim)


# --- network ---------------------------------------------------------------


def _attention(params, prefix: str, hyper: AnsatzHyper, x, pair_mask):
    dk = hyper.head_dim
    q = jnp.einsum("nk,hkd->hnd", x, params[f"{prefix}.wq"])
    q = q + params[f"{prefix}.bq"][:, None, :]
    k = jnp.einsum("nk,hkd->hnd", x, params[f"{prefix}.wk"])
    k = k + params[f"{prefix}.bk"][:, None, :]
    v = jnp.einsum("nk,hkd->hnd", x, params[f"{prefix}.wv"])
    v = v + params[f"{prefix}.bv"][:, None, :]
    scores = jnp.einsum("hnd,hmd->hnm", q, k) / jnp.sqrt(float(dk))
    scores = scores + jnp.where(pair_mask, 0.0, MASK_SENTINEL)[None, :, :]
    attn = masked_softmax_rows(scores)
    heads = jnp.einsum("hnm,hmd->hnd", attn, v)
    concat = jnp.transpose(heads, (1, 0, 2)).reshape(x.shape[0], hyper.embed_dim)
    return concat @ params[f"{prefix}.wo"] + params[f"{prefix}.bo"]


def network_log_amp(params: dict, hyper: AnsatzHyper, positions, n):
    """Scalar network output for one padded configuration.

    Padded rows are zeroed before and after every block and excluded from
    attention and pooling, so the value is independent of their contents.
    For n = 0 the pooled vector is defined as zero, which reduces the
    network to the head's bias path.
    """
    mask = jnp.arange(hyper.n_max) < n
    pair_mask = mask[:, None] & mask[None, :]
    x = embed_positions(hyper, positions)
    x = jnp.where(mask[:, None], x, 0.0)
    for b in range(hyper.blocks):
        p = f"block{b}"
        h = layer_norm(x, params[f"{p}.ln1.scale"], params[f"{p}.ln1.offset"])
        x = x + _attention(params, f"{p}.attn", hyper, h, pair_mask)
        x = jnp.where(mask[:, None], x, 0.0)
        h = layer_norm(x, params[f"{p}.ln2.scale"], params[f"{p}.ln2.offset"])
        h = log_cosh(h @ params[f"{p}.ffn.w1"] + params[f"{p}.ffn.b1"])
        x = x + h @ params[f"{p}.ffn.w2"] + params[f"{p}.ffn.b2"]
        x = jnp.where(mask[:, None], x, 0.0)
    # weighted log-sum-exp over the real rows, one positive weight per channel
    sent = jnp.where(mask[:, None], x, MASK_SENTINEL)
    col_max = jnp.max(sent, axis=0)
    col_max = jnp.where(col_max > MASK_THRESHOLD, col_max, 0.0)
    total = jnp.sum(jnp.where(mask[:, None], jnp.exp(sent - col_max), 0.0), axis=0)
    total = jnp.where(n > 0, total, 1.0)
    pooled = params["pool.log_a"] + col_max + jnp.log(total)
    pooled = jnp.where(n > 0, pooled, 0.0)
    hidden = log_cosh(pooled @ params["head.w1"] + params["head.b1"])
    return (hidden @ params["head.w2"] + params["head.b2"])[0]


# --- closed-form factors ---------------------------------------------------


def window_bounds(params: dict):
    """(c1, c2, s) of the particle-number window; c1 <= c2, s > 0 always."""
    c1 = params["window.c1"]
    c2 = c1 + jax.nn.softplus(params["window.gap"])
    s = jax.nn.softplus(params["window.s"])
    return c1, c2, s


def window_log_weight(params: dict, n):
    """log q_n for the smooth double-sigmoid particle-number window."""
    c1, c2, s = window_bounds(params)
    n = jnp.asarray(n, dtype=jnp.float64)
    return -jax.nn.softplus(-s * (n - c1)) - jax.nn.softplus(s * (n - c2))


def _pair_quantities(hyper: AnsatzHyper, positions, mask):
    # Full (n_max, n_max) difference matrices instead of triu gathers: XLA
    # miscompiles second derivatives of gathered pair differences when n is
    # traced, and the Laplacian needs exactly that.  The upper-triangle mask
    # keeps each pair counted once.
    upper = jnp.asarray(np.triu(np.ones((hyper.n_max, hyper.n_max), dtype=bool), k=1))
    pair_real = upper & mask[:, None] & mask[None, :]
    delta = positions[:, None, :] - positions[None, :, :]
    return pair_real, delta


def factor_log_amp(params: dict, hyper: AnsatzHyper, factors: ExtraFactors, positions, n):
    """Sum of the log factors: number window + boundary cutoff + Jastrow.

    Returns -inf (exact zero amplitude) if a real particle sits on or
    outside a closed boundary, or if a singular Jastrow kind sees two real
    particles coincide.  Never returns NaN.
    """
    mask = jnp.arange(hyper.n_max) < n
    nf = jnp.asarray(n, dtype=jnp.float64)
    length = hyper.box_length
    total = window_log_weight(params, n)
    invalid = jnp.zeros((), dtype=bool)

    if factors.cutoff == "box":
        norm = _BOX_NORM[hyper.spatial_dim]
        t = (positions / length) * (1.0 - positions / length)
        bad = mask[:, None] & (t <= 0.0)
        invalid = invalid | jnp.any(bad)
        t_safe = jnp.where(mask[:, None] & (t > 0.0), t, 1.0)
        total = total + jnp.sum(jnp.log(t_safe))
        total = total - 0.5 * nf * hyper.spatial_dim * jnp.log(length / norm)

    if factors.jastrow != "none":
        pair_real, delta = _pair_quantities(hyper, positions, mask)
        if factors.jastrow == "cs2d":
            dist = jnp.sqrt(jnp.sum(jnp.where(pair_real[:, :, None], delta, 1.0) ** 2, axis=-1))
        else:
            dist = jnp.abs(jnp.where(pair_real, delta[:, :, 0], 0.25 * length))
        if factors.jastrow == "lieb_liniger":
            eps = 1.0 / (factors.jastrow_param * length)
            terms = jnp.log(dist / length + eps)
        else:
            invalid = invalid | jnp.any(pair_real & (dist == 0.0))
            dist = jnp.where(dist > 0.0, dist, 0.25 * length)
            lam = factors.jastrow_param
            if factors.jastrow == "cs1d":
                terms = lam * (jnp.log(dist / length) + jnp.log1p(-dist / length))
            elif factors.jastrow == "cs1d_exact":
                sin = jnp.abs(jnp.sin(jnp.pi * delta[:, :, 0] / length))
                sin = jnp.where(pair_real & (sin > 0.0), sin, 1.0)
                terms = lam * jnp.log(sin)
            else:  # cs2d
                terms = lam * jnp.log(dist)
        total = total + jnp.sum(jnp.where(pair_real, terms, 0.0))

    return jnp.where(invalid, -jnp.inf, total)


def make_log_amp_fn(hyper: AnsatzHyper, factors: ExtraFactors):
    """Pure function (params, positions, n) -> log amplitude, for jax transforms."""

    def logamp(params, positions, n):
        positions = jnp.asarray(positions, dtype=jnp.float64)
        net = network_log_amp(params, hyper, positions, n)
        fac = factor_log_amp(params, hyper, factors, positions, n)
        return net + fac

    return logamp


def log_amplitude(
    params: dict,
    hyper: AnsatzHyper,
    factors: ExtraFactors,
    config: Configuration,
) -> float:
    """Eager log-amplitude of one configuration."""
    fn = make_log_amp_fn(hyper, factors)
    return float(fn(params, jnp.asarray(config.positions), config.n))
