"""Checkpoint round trips and corruption diagnostics."""

import struct

import numpy as np
import pytest

from bosefock.ansatz import AnsatzHyper, ExtraFactors, build_layout, init_params
from bosefock.checkpoint import MAGIC, VERSION, load_checkpoint, save_checkpoint

HYPER = AnsatzHyper(
    embedding="fourier", grid_points=3, spatial_dim=1, box_length=2.0,
    blocks=1, heads=2, ffn_width=8, n_max=5,
)
FACTORS = ExtraFactors(cutoff="none", jastrow="cs1d", jastrow_param=1.5)


def write_one(path, seed=0, iteration=7):
    params = init_params(HYPER, seed)
    save_checkpoint(path, params, HYPER, FACTORS, iteration=iteration,
                    extra={"note": "unit"})
    return params


def test_round_trip_recovers_everything(tmp_path):
    path = tmp_path / "a.ckpt"
    params = write_one(path, seed=3)
    ckpt = load_checkpoint(path)
    assert ckpt.hyper == HYPER
    assert ckpt.factors == FACTORS
    assert ckpt.iteration == 7
    assert ckpt.extra == {"note": "unit"}
    assert set(ckpt.params) == set(params)
    for name in params:
        assert np.array_equal(ckpt.params[name], params[name])


def test_save_load_save_is_byte_identical(tmp_path):
    first = tmp_path / "a.ckpt"
    second = tmp_path / "b.ckpt"
    write_one(first, seed=11)
    ckpt = load_checkpoint(first)
    save_checkpoint(second, ckpt.params, ckpt.hyper, ckpt.factors,
                    iteration=ckpt.iteration, extra=ckpt.extra)
    assert first.read_bytes() == second.read_bytes()


def test_derived_factor_params_survive(tmp_path):
    # np.float64 jastrow parameters must serialize and come back equal
    factors = ExtraFactors(cutoff="none", jastrow="cs1d",
                           jastrow_param=np.float64(2.158312395177700))
    path = tmp_path / "np.ckpt"
    save_checkpoint(path, init_params(HYPER, 0), HYPER, factors)
    ckpt = load_checkpoint(path)
    assert ckpt.factors.jastrow_param == 2.158312395177700


def test_missing_file_raises_not_found(tmp_path):
    with pytest.raises(FileNotFoundError, match="checkpoint not found"):
        load_checkpoint(tmp_path / "missing.ckpt")


def test_truncated_payload_is_structured_error(tmp_path):
    path = tmp_path / "a.ckpt"
    write_one(path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 16])
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(path)


def test_truncated_prefix_is_structured_error(tmp_path):
    path = tmp_path / "a.ckpt"
    path.write_bytes(b"BFC")
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "a.ckpt"
    write_one(path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(path)


def test_version_mismatch_names_versions(tmp_path):
    path = tmp_path / "a.ckpt"
    write_one(path)
    raw = bytearray(path.read_bytes())
    # patch the little-endian u32 version field in place
    raw[4:8] = struct.pack("<I", VERSION + 1)
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(path)
    assert raw[:4] == MAGIC


def test_corrupt_header_json_rejected(tmp_path):
    path = tmp_path / "a.ckpt"
    write_one(path)
    raw = bytearray(path.read_bytes())
    header_len = struct.unpack("<Q", raw[8:16])[0]
    raw[16 : 16 + 2] = b"{{"
    path.write_bytes(bytes(raw))
    assert header_len > 2
    with pytest.raises(ValueError, match="header"):
        load_checkpoint(path)


def test_layout_mismatch_against_expected_shape(tmp_path):
    path = tmp_path / "a.ckpt"
    write_one(path)
    other = AnsatzHyper(
        embedding="fourier", grid_points=4, spatial_dim=1, box_length=2.0,
        blocks=1, heads=2, ffn_width=8, n_max=5,
    )
    with pytest.raises(ValueError, match="layout mismatch"):
        load_checkpoint(path, expect_hyper=other)
    # the matching shape loads fine
    assert load_checkpoint(path, expect_hyper=HYPER).iteration == 7


def test_header_count_must_match_own_layout(tmp_path):
    # shrink the payload claim: n_params in the header disagrees with the
    # hyperparameters' own layout
    path = tmp_path / "a.ckpt"
    write_one(path)
    raw = path.read_bytes()
    header_len = struct.unpack("<Q", raw[8:16])[0]
    header = raw[16 : 16 + header_len].decode()
    n = build_layout(HYPER).size
    patched = header.replace(f'"n_params":{n}', f'"n_params":{n - 1}')
    assert patched != header
    blob = patched.encode()
    path.write_bytes(raw[:8] + struct.pack("<Q", len(blob)) + blob + raw[16 + header_len :])
    with pytest.raises(ValueError):
        load_checkpoint(path)
