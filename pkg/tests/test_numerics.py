import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bosefock import numerics
from bosefock.numerics import MASK_SENTINEL, SpdSystem


def test_softmax_symmetric_pair():
    out = numerics.softmax_rows(np.array([[0.0, 0.0]]))
    np.testing.assert_allclose(out, [[0.5, 0.5]], atol=1e-15)


def test_softmax_ratio_shift():
    a = 0.37
    out = numerics.softmax_rows(np.array([[a, a + np.log(3.0)]]))
    np.testing.assert_allclose(out, [[0.25, 0.75]], atol=1e-14)


def test_softmax_masked_entry_exactly_zero():
    out = numerics.softmax_rows(np.array([[1.0, MASK_SENTINEL]]))
    assert out[0, 0] == 1.0
    assert out[0, 1] == 0.0


def test_softmax_all_masked_row_rejected():
    with pytest.raises(ValueError):
        numerics.softmax_rows(np.array([[MASK_SENTINEL, MASK_SENTINEL]]))


def test_masked_softmax_rows_zero_on_dead_row():
    # jit-safe variant: an all-masked row comes back as zeros, no error
    m = np.array([[0.2, MASK_SENTINEL], [MASK_SENTINEL, MASK_SENTINEL]])
    out = np.asarray(numerics.masked_softmax_rows(m))
    assert out[0, 0] == 1.0 and out[0, 1] == 0.0
    assert np.all(out[1] == 0.0)


@settings(deadline=None, max_examples=200)
@given(st.integers(0, 1000))
def test_softmax_rows_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    rows = rng.integers(1, 6)
    cols = rng.integers(2, 9)
    m = rng.normal(0.0, 40.0, size=(rows, cols))
    # mask some entries but never a full row
    mask = rng.random(m.shape) < 0.4
    for i in range(rows):
        mask[i, rng.integers(cols)] = False
    m[mask] = MASK_SENTINEL
    out = numerics.softmax_rows(m)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(out >= 0.0)


@settings(deadline=None, max_examples=100)
@given(
    st.lists(st.floats(-50, 50), min_size=1, max_size=12),
    st.floats(-800, 800),
)
def test_lse_shift_property(xs, c):
    x = np.array(xs)
    a = np.full(x.shape, 0.7)
    lhs = numerics.log_sum_exp_weighted(x + c, a)
    rhs = numerics.log_sum_exp_weighted(x, a) + c
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-9 * max(1.0, abs(rhs)))


def test_lse_examples():
    np.testing.assert_allclose(
        numerics.log_sum_exp_weighted(np.array([0.0, 0.0]), np.array([1.0, 1.0])),
        np.log(2.0),
    )
    np.testing.assert_allclose(
        numerics.log_sum_exp_weighted(np.array([1000.0, 1000.0]), np.array([1.0, 1.0])),
        1000.0 + np.log(2.0),
    )
    np.testing.assert_allclose(
        numerics.log_sum_exp_weighted(np.array([0.0]), np.array([3.0])), np.log(3.0)
    )


def test_lse_rejects_empty_and_nonpositive_weights():
    with pytest.raises(ValueError):
        numerics.log_sum_exp_weighted(np.array([]), np.array([]))
    with pytest.raises(ValueError):
        numerics.log_sum_exp_weighted(np.array([1.0]), np.array([0.0]))


def test_solve_spd_identity():
    x = numerics.solve_spd(SpdSystem(np.eye(2), np.array([2.0, 3.0]), 0.0))
    np.testing.assert_allclose(x, [2.0, 3.0])


def test_solve_spd_diagonal():
    x = numerics.solve_spd(SpdSystem(np.diag([2.0, 4.0]), np.array([2.0, 4.0]), 0.0))
    np.testing.assert_allclose(x, [1.0, 1.0])


def test_solve_spd_gram_vs_pinv_oracle():
    rng = np.random.default_rng(7)
    b = rng.normal(size=8)
    g = rng.normal(size=(8, 8))
    a = g @ g.T + 1e-3 * np.eye(8)  # comfortably PD
    x = numerics.solve_spd(SpdSystem(a, b, 0.0))
    # independent oracle: eigendecomposition pseudoinverse
    w, v = np.linalg.eigh(a)
    x_ref = v @ ((v.T @ b) / w)
    np.testing.assert_allclose(x, x_ref, rtol=1e-8, atol=1e-10)


@settings(deadline=None, max_examples=20)
@given(st.integers(0, 10_000))
def test_solve_spd_residual_bound_random(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 64))
    g = rng.normal(size=(n, n + 3))
    a = g @ g.T
    b = rng.normal(size=n)
    shift = 1e-6 * np.trace(a) / n
    x = numerics.solve_spd(SpdSystem(a, b, shift))
    res = np.linalg.norm((a + shift * np.eye(n)) @ x - b)
    assert res <= 1e-8 * np.linalg.norm(b)


def test_solve_spd_residual_bound_512():
    rng = np.random.default_rng(512)
    g = rng.normal(size=(512, 600))
    a = g @ g.T
    b = rng.normal(size=512)
    x = numerics.solve_spd(SpdSystem(a, b, 0.0))
    res = np.linalg.norm(a @ x - b)
    assert res <= 1e-8 * np.linalg.norm(b)


def test_solve_spd_not_pd_reports_pivot():
    a = np.diag([1.0, -2.0])
    with pytest.raises(ValueError) as err:
        numerics.solve_spd(SpdSystem(a, np.array([1.0, 1.0]), 0.0))
    assert "-2" in str(err.value)


def test_solve_spd_rejects_asymmetric():
    a = np.array([[1.0, 0.5], [0.1, 1.0]])
    with pytest.raises(ValueError):
        numerics.solve_spd(SpdSystem(a, np.array([1.0, 1.0]), 0.0))


def test_solve_psd_pinv_matches_numpy_on_singular():
    rng = np.random.default_rng(11)
    g = rng.normal(size=(6, 3))
    a = g @ g.T  # rank 3, singular
    b = a @ rng.normal(size=6)  # consistent rhs
    x = numerics.solve_psd_pinv(a, b)
    x_ref = np.linalg.pinv(a) @ b
    np.testing.assert_allclose(x, x_ref, rtol=1e-8, atol=1e-10)


def test_layer_norm_normalizes():
    rng = np.random.default_rng(3)
    x = rng.normal(2.0, 5.0, size=16)
    y = np.asarray(numerics.layer_norm(x, np.ones(16), np.zeros(16)))
    assert abs(y.mean()) < 1e-12
    np.testing.assert_allclose(y.std(), 1.0, atol=1e-3)  # eps shifts it slightly


def test_log_cosh_matches_reference_and_curvature():
    x = np.linspace(-5, 5, 41)
    np.testing.assert_allclose(
        np.asarray(numerics.log_cosh(x)), np.log(np.cosh(x)), atol=1e-12
    )
    # f(0)=0, f'(0)=0, f''(0)=1
    h = 1e-5
    f = lambda t: float(numerics.log_cosh(t))
    assert f(0.0) == 0.0
    np.testing.assert_allclose((f(h) - f(-h)) / (2 * h), 0.0, atol=1e-9)
    np.testing.assert_allclose((f(h) - 2 * f(0.0) + f(-h)) / h**2, 1.0, atol=1e-5)


def test_log_cosh_large_argument_stable():
    # asymptote |x| - ln 2, no overflow at 1e4
    np.testing.assert_allclose(
        float(numerics.log_cosh(1e4)), 1e4 - np.log(2.0), rtol=0, atol=1e-9
    )
    np.testing.assert_allclose(
        float(numerics.log_cosh(-1e4)), 1e4 - np.log(2.0), rtol=0, atol=1e-9
    )
