"""Strict run-configuration files: `section.key = value`, one per line.

The format is deliberately flat and diff-friendly.  Blank lines and
`#` comments are skipped; everything else must be a known dotted key.
Unknown keys, duplicate keys, and malformed values are errors carrying
the file name and line number.  The domain geometry is derived from the
model kind, and the Jastrow block is filled from the model unless
overridden (cs2d's exponent is tied to the coupling and cannot be
overridden at all).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from .ansatz import AnsatzHyper, ExtraFactors
from .models import DomainSpec, ModelSpec, default_factors, jastrow_exponent
from .optimizer import OptimizerSettings
from .sampler import SamplerSettings


class ConfigError(ValueError):
    """A malformed or inconsistent run configuration."""


# geometry is a property of the model kind, not a free knob
_KIND_GEOMETRY = {
    "lieb_liniger": (1, "closed"),
    "cs1d": (1, "periodic"),
    "cs2d": (2, "window"),
    "gauss": (2, "window"),
}


def _to_int(text: str) -> int:
    return int(text, 10)


def _to_float(text: str) -> float:
    return float(text)


def _to_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _to_str(text: str) -> str:
    return text


def _to_optional_float(text: str):
    if text.lower() in ("auto", "none"):
        return None
    return float(text)


def _to_optional_int(text: str):
    if text.lower() in ("auto", "none"):
        return None
    return int(text, 10)


# every legal key with its parser; required keys carry the _REQUIRED marker
_REQUIRED = object()

_SCHEMA = {
    "model.kind": (_to_str, _REQUIRED),
    "model.box_length": (_to_float, _REQUIRED),
    "model.coupling": (_to_float, _REQUIRED),
    "model.mu": (_to_float, _REQUIRED),
    "model.omega": (_to_float, 0.0),
    "model.interaction_width": (_to_float, 0.5),
    "model.kinetic_prefactor": (_to_float, 1.0),
    "ansatz.embedding": (_to_str, None),  # None: derived from the boundary
    "ansatz.grid_points": (_to_int, _REQUIRED),
    "ansatz.blocks": (_to_int, 1),
    "ansatz.heads": (_to_int, 2),
    "ansatz.ffn_width": (_to_int, _REQUIRED),
    "ansatz.n_max": (_to_int, _REQUIRED),
    "ansatz.cutoff": (_to_str, None),
    "ansatz.jastrow": (_to_str, None),
    "ansatz.jastrow_param": (_to_float, None),
    "sampler.p_pm": (_to_float, 0.25),
    "sampler.width": (_to_float, 0.1),
    "sampler.chains": (_to_int, 100),
    "sampler.sweep": (_to_int, 30),
    "sampler.samples_per_chain": (_to_int, 64),
    "sampler.burn_in": (_to_int, 50),
    "sampler.single_particle_moves": (_to_bool, False),
    "optimizer.method": (_to_str, "minsr"),
    "optimizer.learning_rate": (_to_float, 1e-2),
    "optimizer.iterations": (_to_int, 200),
    "optimizer.ntk_shift": (_to_optional_float, None),
    "optimizer.window_lr_multiplier": (_to_float, 1.0),
    "optimizer.cosine_decay": (_to_bool, True),
    "run.seed": (_to_int, 0),
    "run.out": (_to_str, "out"),
    "run.checkpoint_interval": (_to_int, 50),
    "run.initial_n": (_to_optional_int, None),
    "run.density_bins": (_to_int, 60),
    "run.obdm_points": (_to_int, 64),
    "run.obdm_max_shell": (_to_int, 6),
}


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    hyper: AnsatzHyper
    factors: ExtraFactors
    sampler: SamplerSettings
    optimizer: OptimizerSettings
    seed: int
    out_dir: str
    checkpoint_interval: int
    initial_n: int | None
    density_bins: int
    obdm_points: int
    obdm_max_shell: int


def parse_config(text: str, name: str = "<config>") -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{name}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = key.strip(), value.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"{name}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{name}:{lineno}: duplicate key {key!r}")
        caster = _SCHEMA[key][0]
        try:
            values[key] = caster(value)
        except ValueError as err:
            raise ConfigError(f"{name}:{lineno}: bad value for {key}: {err}") from err

    missing = [k for k, (_, d) in _SCHEMA.items() if d is _REQUIRED and k not in values]
    if missing:
        raise ConfigError(f"{name}: missing required keys: {', '.join(sorted(missing))}")
    get = lambda key: values.get(key, _SCHEMA[key][1])  # noqa: E731

    kind = get("model.kind")
    if kind not in _KIND_GEOMETRY:
        raise ConfigError(
            f"{name}: model.kind must be one of {sorted(_KIND_GEOMETRY)}, got {kind!r}"
        )
    spatial_dim, boundary = _KIND_GEOMETRY[kind]
    try:
        model = ModelSpec(
            kind,
            DomainSpec(spatial_dim, get("model.box_length"), boundary),
            coupling=get("model.coupling"),
            mu=get("model.mu"),
            omega=get("model.omega"),
            interaction_width=get("model.interaction_width"),
            kinetic_prefactor=get("model.kinetic_prefactor"),
        )
    except ValueError as err:
        raise ConfigError(f"{name}: invalid model block: {err}") from err

    embedding = get("ansatz.embedding")
    if embedding is None:
        embedding = "fourier" if boundary == "periodic" else "gaussian"
    if (embedding == "fourier") != (boundary == "periodic"):
        raise ConfigError(
            f"{name}: ansatz.embedding {embedding!r} does not fit the "
            f"{boundary!r} boundary of model.kind {kind!r} (fourier modes "
            "belong to periodic boxes, gaussians to the others)"
        )
    try:
        hyper = AnsatzHyper(
            embedding=embedding,
            grid_points=get("ansatz.grid_points"),
            spatial_dim=spatial_dim,
            box_length=get("model.box_length"),
            blocks=get("ansatz.blocks"),
            heads=get("ansatz.heads"),
            ffn_width=get("ansatz.ffn_width"),
            n_max=get("ansatz.n_max"),
        )
    except ValueError as err:
        raise ConfigError(f"{name}: invalid ansatz block: {err}") from err

    overrides = {}
    if get("ansatz.cutoff") is not None:
        overrides["cutoff"] = get("ansatz.cutoff")
    if get("ansatz.jastrow") is not None:
        overrides["jastrow"] = get("ansatz.jastrow")
    param = get("ansatz.jastrow_param")
    if param is not None:
        if kind == "cs2d" and not abs(param - jastrow_exponent(model)) < 1e-12:
            raise ConfigError(
                f"{name}: ansatz.jastrow_param is derived from the cs2d "
                f"coupling (sqrt(m g) = {jastrow_exponent(model)!r}) and "
                "cannot be overridden"
            )
        overrides["jastrow_param"] = param
    try:
        factors = replace(default_factors(model), **overrides)
    except ValueError as err:
        raise ConfigError(f"{name}: invalid ansatz factors: {err}") from err

    try:
        sampler = SamplerSettings(
            p_pm=get("sampler.p_pm"),
            width=get("sampler.width"),
            chains=get("sampler.chains"),
            sweep=get("sampler.sweep"),
            samples_per_chain=get("sampler.samples_per_chain"),
            burn_in=get("sampler.burn_in"),
            single_particle_moves=get("sampler.single_particle_moves"),
        )
    except ValueError as err:
        raise ConfigError(f"{name}: invalid sampler block: {err}") from err
    try:
        optimizer = OptimizerSettings(
            method=get("optimizer.method"),
            learning_rate=get("optimizer.learning_rate"),
            iterations=get("optimizer.iterations"),
            ntk_shift=get("optimizer.ntk_shift"),
            window_lr_multiplier=get("optimizer.window_lr_multiplier"),
            cosine_decay=get("optimizer.cosine_decay"),
        )
    except ValueError as err:
        raise ConfigError(f"{name}: invalid optimizer block: {err}") from err

    initial_n = get("run.initial_n")
    if initial_n is not None and not 0 <= initial_n <= hyper.n_max:
        raise ConfigError(f"{name}: run.initial_n outside [0, n_max]")
    if get("run.checkpoint_interval") < 1:
        raise ConfigError(f"{name}: run.checkpoint_interval must be >= 1")
    for key in ("run.density_bins", "run.obdm_points"):
        if get(key) < 2:
            raise ConfigError(f"{name}: {key} must be >= 2")
    if get("run.obdm_max_shell") < 0:
        raise ConfigError(f"{name}: run.obdm_max_shell must be >= 0")

    return RunConfig(
        model=model,
        hyper=hyper,
        factors=factors,
        sampler=sampler,
        optimizer=optimizer,
        seed=get("run.seed"),
        out_dir=get("run.out"),
        checkpoint_interval=get("run.checkpoint_interval"),
        initial_n=initial_n,
        density_bins=get("run.density_bins"),
        obdm_points=get("run.obdm_points"),
        obdm_max_shell=get("run.obdm_max_shell"),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    return parse_config(text, name=str(path))
