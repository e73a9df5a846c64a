"""Binary checkpoints: magic, version, JSON header, raw float64 payload.

Layout on disk:

    bytes 0..3    magic "BFCK"
    bytes 4..7    format version, little-endian u32
    bytes 8..15   header length in bytes, little-endian u64
    header        UTF-8 JSON with sorted keys (network shape, factors,
                  iteration counter, free-form extra dict)
    payload       parameter vector, float64 little-endian, layout order

Writing is deterministic: the same state produces the same bytes, and a
save/load/save cycle is byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ansatz import AnsatzHyper, ExtraFactors, build_layout, flatten_params, unflatten_params

MAGIC = b"BFCK"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


def _json_scalar(value):
    # numpy scalars (e.g. a derived Jastrow exponent) serialize as plain numbers
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"not JSON-serializable: {type(value)}")


@dataclass(frozen=True)
class Checkpoint:
    params: dict
    hyper: AnsatzHyper
    factors: ExtraFactors
    iteration: int
    extra: dict


def save_checkpoint(
    path,
    params: dict,
    hyper: AnsatzHyper,
    factors: ExtraFactors,
    *,
    iteration: int = 0,
    extra: dict | None = None,
) -> None:
    layout = build_layout(hyper)
    vector = flatten_params(layout, params)
    header = {
        "extra": extra or {},
        "factors": dataclasses.asdict(factors),
        "hyper": dataclasses.asdict(hyper),
        "iteration": int(iteration),
        "n_params": int(vector.size),
    }
    blob = json.dumps(
        header, sort_keys=True, separators=(",", ":"), default=_json_scalar
    ).encode()
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(blob)))
        fh.write(blob)
        fh.write(vector.astype("<f8").tobytes())


def load_checkpoint(path, expect_hyper: AnsatzHyper | None = None) -> Checkpoint:
    """Read a checkpoint; every structural defect raises ValueError.

    `expect_hyper` guards a resume: a stored network shape that differs
    from the configured one is a layout mismatch, not a silent reshape.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _PREFIX.size:
        raise ValueError(f"truncated checkpoint (only {len(raw)} bytes): {path}")
    magic, version, header_len = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"not a checkpoint file (bad magic {magic!r}): {path}")
    if version != VERSION:
        raise ValueError(
            f"checkpoint version {version} not supported (expected {VERSION}); "
            "re-create it with this build"
        )
    body = raw[_PREFIX.size:]
    if len(body) < header_len:
        raise ValueError(f"truncated checkpoint header: {path}")
    try:
        header = json.loads(body[:header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ValueError(f"corrupt checkpoint header: {path}: {err}") from err

    hyper = AnsatzHyper(**header["hyper"])
    factors = ExtraFactors(**header["factors"])
    layout = build_layout(hyper)
    if header["n_params"] != layout.size:
        raise ValueError(
            f"checkpoint parameter count {header['n_params']} does not match "
            f"its own network shape ({layout.size}): {path}"
        )
    payload = body[header_len:]
    expected_bytes = layout.size * 8
    if len(payload) != expected_bytes:
        raise ValueError(
            f"truncated checkpoint payload ({len(payload)} of {expected_bytes} "
            f"bytes): {path}"
        )
    if expect_hyper is not None and hyper != expect_hyper:
        raise ValueError(
            "layout mismatch: checkpoint was written for a different network "
            f"shape\n  stored:     {hyper}\n  configured: {expect_hyper}"
        )
    vector = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return Checkpoint(
        params=unflatten_params(layout, vector),
        hyper=hyper,
        factors=factors,
        iteration=int(header["iteration"]),
        extra=dict(header["extra"]),
    )
