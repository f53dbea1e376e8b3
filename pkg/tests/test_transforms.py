import json
import math

import numpy as np
import pytest

from oracles import (dense_basis, haar_basis_vector, naive_dct3, naive_dft3, rt_basis_fn,
                     solve_coefficients)
from tdtrojan import transforms as T
from tdtrojan.transforms import RandomTransformSpec

SMALL_SHAPES = [(1, 1, 1), (2, 2, 2), (1, 3, 2), (2, 3, 4), (3, 3, 3), (4, 4, 4)]
EVEN_SMALL = [(2, 2, 2), (2, 4, 2), (4, 2, 4), (4, 4, 4)]
ROUND_TRIP_SHAPES = [(2, 2, 2), (4, 4, 4), (8, 16, 16)]


def rand_int(shape, seed=0):
    return np.random.default_rng(seed).integers(0, 256, shape).astype(float)


# examples -------------------------------------------------------------------

def test_dft_constant():
    r = T.dft_forward(np.ones((2, 2, 2))).values[0]
    expected = np.zeros((2, 2, 2))
    expected[0, 0, 0] = 8
    assert np.allclose(r, expected, atol=1e-12)


def test_dft_impulse():
    v = np.zeros((2, 2, 2))
    v[0, 0, 0] = 1
    assert np.allclose(T.dft_forward(v).values, 1, atol=1e-12)


def test_dct_constant():
    r = T.dct_forward(np.ones((2, 2, 2))).values[0].copy()
    assert r[0, 0, 0] == pytest.approx(math.sqrt(8), abs=1e-12)
    r[0, 0, 0] = 0
    assert np.allclose(r, 0, atol=1e-12)


def test_dct_impulse_matches_oracle():
    v = np.zeros((2, 2, 2))
    v[0, 0, 0] = 1
    assert np.allclose(T.dct_forward(v).values[0], naive_dct3(v), atol=1e-12)


def test_dwt_constant_by_linear_solve():
    v = np.ones((2, 2, 2))
    basis = dense_basis((2, 2, 2), haar_basis_vector)
    oracle = solve_coefficients(v, basis)
    assert oracle[0, 0, 0] == pytest.approx(2 * math.sqrt(2))
    r = T.dwt_forward(v).values[0].copy()
    assert np.allclose(r, oracle, atol=1e-12)
    assert r[0, 0, 0] == pytest.approx(2.828427, abs=1e-6)
    r[0, 0, 0] = 0
    assert np.allclose(r, 0, atol=1e-12)


def test_dwt_impulse():
    v = np.zeros((2, 2, 2))
    v[0, 0, 0] = 1
    basis = dense_basis((2, 2, 2), haar_basis_vector)
    inner = basis.T @ v.ravel()
    assert np.allclose(inner, 1 / (2 * math.sqrt(2)))
    assert np.allclose(T.dwt_forward(v).values.ravel(), 0.353553, atol=1e-6)


def test_dwt_odd_dims_rejected():
    with pytest.raises(ValueError, match="even dimensions required"):
        T.dwt_forward(np.zeros((3, 2, 2)))


def test_rt_identity_and_scaled_identity():
    v = rand_int((2, 3, 4))
    eye = RandomTransformSpec(tuple(np.eye(n) for n in (2, 3, 4)))
    assert np.allclose(T.rt_forward(v, eye).values[0], v)
    two = RandomTransformSpec(tuple(2 * np.eye(n) for n in (2, 3, 4)))
    assert np.allclose(T.rt_forward(v, two).values[0], v / 8)


def rt_agrees(r, v, basis, tol=1e-6):
    """Forward error relative to coefficient scale, plus absolute backward error in pixels."""
    oracle = solve_coefficients(v, basis)
    scale = max(1.0, np.max(np.abs(oracle)))
    forward_err = np.max(np.abs(r - oracle)) / scale
    backward_err = np.max(np.abs(basis @ r.ravel() - v.ravel()))
    return forward_err < tol and backward_err < tol


def test_rt_matches_dense_solve():
    spec = RandomTransformSpec.sample(7, (2, 2, 2))
    v = rand_int((2, 2, 2), seed=3)
    basis = dense_basis((2, 2, 2), rt_basis_fn(spec.matrices))
    assert rt_agrees(T.rt_forward(v, spec).values[0], v, basis)


def test_rt_rejects_singular():
    singular = np.ones((3, 3))
    with pytest.raises(ValueError, match="not invertible"):
        RandomTransformSpec((np.eye(2), singular, np.eye(2)))


def test_rt_sampled_entries_and_condition():
    spec = RandomTransformSpec.sample(1, (4, 8, 16))
    for m in spec.matrices:
        assert m.min() >= 0 and m.max() < 1
        assert np.linalg.cond(m) <= spec.condition_bound


def test_rt_resamples_over_bound():
    # an absurdly tight bound cannot be met for 8x8 uniform matrices
    with pytest.raises(ValueError, match="could not sample"):
        RandomTransformSpec.sample(0, (8, 8, 8), condition_bound=1.0001)


def test_rt_json_round_trip():
    spec = RandomTransformSpec.sample(11, (2, 4, 6))
    doc = json.loads(spec.to_json())
    assert doc == {"seed": 11, "dims": [2, 4, 6], "condition_bound": 1e6}
    again = RandomTransformSpec.from_json(spec.to_json())
    for a, b in zip(spec.matrices, again.matrices):
        assert np.array_equal(a, b)


def test_rt_dim_mismatch():
    spec = RandomTransformSpec.sample(0, (2, 2, 2))
    with pytest.raises(ValueError):
        T.rt_forward(np.zeros((2, 2, 3)), spec)


# oracle equivalence ----------------------------------------------------------

@pytest.mark.parametrize("shape", SMALL_SHAPES)
def test_dft_matches_naive(shape):
    v = rand_int(shape)
    assert np.max(np.abs(T.dft_forward(v).values[0] - naive_dft3(v))) < 1e-9


@pytest.mark.parametrize("shape", SMALL_SHAPES)
def test_dct_matches_naive(shape):
    v = rand_int(shape)
    assert np.max(np.abs(T.dct_forward(v).values[0] - naive_dct3(v))) < 1e-9


@pytest.mark.parametrize("shape", EVEN_SMALL)
def test_dwt_matches_basis_solve(shape):
    v = rand_int(shape)
    oracle = solve_coefficients(v, dense_basis(shape, haar_basis_vector))
    assert np.max(np.abs(T.dwt_forward(v).values[0] - oracle)) < 1e-9


@pytest.mark.parametrize("shape", SMALL_SHAPES)
def test_rt_matches_basis_solve(shape):
    spec = RandomTransformSpec.sample(5, shape)
    v = rand_int(shape)
    basis = dense_basis(shape, rt_basis_fn(spec.matrices))
    assert rt_agrees(T.rt_forward(v, spec).values[0], v, basis)


# invariants -----------------------------------------------------------------

@pytest.mark.parametrize("shape", ROUND_TRIP_SHAPES)
def test_round_trips(shape):
    for seed in range(3):
        v = rand_int(shape, seed)
        assert np.max(np.abs(T.dft_inverse(T.dft_forward(v)).values - v)) < 1e-9
        assert np.max(np.abs(T.dct_inverse(T.dct_forward(v)).values - v)) < 1e-9
        assert np.max(np.abs(T.dwt_inverse(T.dwt_forward(v)).values - v)) < 1e-9
        spec = RandomTransformSpec.sample(seed, shape)
        assert np.max(np.abs(T.rt_inverse(T.rt_forward(v, spec), spec).values - v)) < 1e-6


@pytest.mark.parametrize("tid", list(T.TransformId))
def test_linearity(tid):
    rng = np.random.default_rng(4)
    shape = (4, 4, 4)
    x, y = rng.normal(size=shape), rng.normal(size=shape)
    a, b = 1.7, -0.3
    spec = RandomTransformSpec.sample(2, shape) if tid is T.TransformId.RT else None
    lhs = T.forward(tid, a * x + b * y, spec).values
    rhs = a * T.forward(tid, x, spec).values + b * T.forward(tid, y, spec).values
    tol = 1e-6 if tid is T.TransformId.RT else 1e-9
    assert np.max(np.abs(lhs - rhs)) < tol


def test_parseval_and_orthonormality():
    for seed in range(5):
        v = rand_int((4, 6, 8), seed)
        e = np.sum(v**2)
        assert np.sum(np.abs(T.dft_forward(v).values) ** 2) == pytest.approx(v.size * e, rel=1e-9)
        assert np.sum(T.dct_forward(v).values ** 2) == pytest.approx(e, rel=1e-9)
        assert np.sum(T.dwt_forward(v).values ** 2) == pytest.approx(e, rel=1e-9)


def test_dft_hermitian_symmetry():
    v = rand_int((3, 4, 5))
    r = T.dft_forward(v).values[0]
    neg = r[np.ix_(*(-np.arange(n) % n for n in r.shape))]
    assert np.allclose(r, np.conj(neg), atol=1e-9)


def test_channels_are_independent():
    rng = np.random.default_rng(0)
    v = rng.integers(0, 256, (3, 2, 4, 4)).astype(float)
    r = T.dwt_forward(v).values
    for c in range(3):
        assert np.allclose(r[c], T.dwt_forward(v[c]).values[0])
