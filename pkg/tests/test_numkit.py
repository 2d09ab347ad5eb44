"""Tests for dense linear algebra and seeded random streams."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from amortprox.errors import ContractError, DimensionError, NumericalError, OracleScaleError
from amortprox.numkit import (
    Rng,
    check_symmetric,
    kron_dense,
    matmul,
    rand_orthogonal,
    relative_error,
    solve_spd,
    spd_inverse,
    sym_eig_min,
    unvec_cm,
    vec_cm,
)
from amortprox.utils.config_mgr import config


def test_matmul_by_hand():
    assert_array_equal(matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.ones((2, 1))), [[3.0], [7.0]])
    m = np.arange(6.0).reshape(2, 3)
    assert_array_equal(matmul(np.eye(2), m), m)
    assert_array_equal(matmul(np.zeros((2, 2)), m), np.zeros((2, 3)))


def test_matmul_rejects_mismatched_extents():
    with pytest.raises(DimensionError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_kron_dense_blocks():
    assert_array_equal(kron_dense(np.eye(2), np.eye(3)), np.eye(6))
    assert_array_equal(kron_dense(np.array([[2.0]]), np.array([[3.0]])), [[6.0]])
    out = kron_dense(np.diag([1.0, 2.0]), np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert_array_equal(out[:2, :2], [[0.0, 1.0], [1.0, 0.0]])
    assert_array_equal(out[2:, 2:], [[0.0, 2.0], [2.0, 0.0]])
    assert_array_equal(out[:2, 2:], np.zeros((2, 2)))


def test_kron_dense_size_guard(monkeypatch):
    monkeypatch.setattr(config, "kron_oracle_max", 4)
    with pytest.raises(OracleScaleError):
        kron_dense(np.eye(3), np.eye(2))


def test_vec_is_column_stacking():
    assert_array_equal(vec_cm(np.array([[1.0, 2.0], [3.0, 4.0]])), [1.0, 3.0, 2.0, 4.0])
    col = np.array([[1.0], [2.0], [3.0]])
    assert_array_equal(vec_cm(col), [1.0, 2.0, 3.0])


def test_unvec_inverts_vec(rng):
    m = rng.normal((3, 5))
    assert_array_equal(unvec_cm(vec_cm(m), 3, 5), m)
    with pytest.raises(DimensionError):
        unvec_cm(np.ones(5), 2, 3)


def test_vec_kron_identity(rng):
    a, b, x = rng.normal((3, 3)), rng.normal((2, 2)), rng.normal((2, 3))
    assert_allclose(vec_cm(b @ x @ a.T), kron_dense(a, b) @ vec_cm(x), rtol=1e-12, atol=1e-12)


def test_solve_spd():
    assert_array_equal(solve_spd(np.eye(2), np.array([3.0, 4.0])), [3.0, 4.0])
    assert_allclose(solve_spd(np.diag([2.0, 4.0]), np.array([2.0, 4.0])), [1.0, 1.0])


def test_solve_spd_reports_pivot():
    with pytest.raises(NumericalError) as exc:
        solve_spd(np.diag([1.0, -1.0]), np.ones(2))
    assert exc.value.pivot == 1


def test_solve_spd_rejects_non_symmetric():
    with pytest.raises(ContractError):
        solve_spd(np.array([[1.0, 2.0], [0.0, 1.0]]), np.ones(2))


def test_sym_eig_min():
    assert sym_eig_min(np.eye(3)) == pytest.approx(1.0)
    assert sym_eig_min(np.diag([3.0, -2.0])) == pytest.approx(-2.0)
    with pytest.raises(ContractError):
        check_symmetric(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_gram_matrix_is_psd(rng):
    m = rng.normal((5, 4))
    assert sym_eig_min(m.T @ m) >= -1e-10


def test_spd_inverse(rng):
    m = rng.normal((4, 4))
    spd = m @ m.T + np.eye(4)
    assert_allclose(spd_inverse(spd) @ spd, np.eye(4), atol=1e-10)


def test_rand_orthogonal(rng):
    q = rand_orthogonal(rng, 6)
    assert_allclose(q.T @ q, np.eye(6), atol=1e-12)
    one = rand_orthogonal(rng, 1)
    assert abs(one[0, 0]) == pytest.approx(1.0)
    with pytest.raises(ContractError):
        rand_orthogonal(rng, 0)


def test_rng_streams_are_reproducible():
    assert_array_equal(Rng(7).normal(5), Rng(7).normal(5))
    parent = Rng(7)
    first = parent.child(1).normal(3)
    parent.normal(10)
    # children depend on (seed, key) only
    assert_array_equal(parent.child(1).normal(3), first)
    assert not np.array_equal(parent.child(2).normal(3), first)


def test_rng_rejects_negative_seed():
    with pytest.raises(ContractError):
        Rng(-1)


def test_relative_error():
    assert relative_error(np.array([1.0, 1.0]), np.array([1.0, 1.0])) == 0.0
    assert relative_error(np.array([2.0]), np.array([1.0])) == pytest.approx(1.0)
