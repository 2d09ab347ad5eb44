"""
Dense linear algebra at oracle scale.

Vectorization follows the column-stacking convention throughout the package:
``vec_cm(B @ X @ A.T) == kron_dense(A, B) @ vec_cm(X)``. The structured preconditioner
relies on this identity to be exact, so never mix in row-major ``ravel()`` for vec.
"""

from __future__ import annotations

import re

import numpy as np
from scipy import linalg

from amortprox.errors import ContractError, DimensionError, NumericalError, OracleScaleError
from amortprox.utils.config_mgr import config

from .rng import Rng

SYMMETRY_RTOL = 1e-8

_PIVOT_RE = re.compile(r"(\d+)-th leading minor")


def as_matrix(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"Inner extents differ: {a.shape} x {b.shape}")
    return a @ b


def kron_dense(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Materialize ``a ⊗ b``; block (i, j) of the result is ``a[i, j] * b``."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    rows = a.shape[0] * b.shape[0]
    cols = a.shape[1] * b.shape[1]
    limit = config.kron_oracle_max
    if rows > limit or cols > limit:
        raise OracleScaleError(f"Kronecker product {rows}x{cols} exceeds oracle limit {limit}")
    return np.kron(a, b)


def vec_cm(m: np.ndarray) -> np.ndarray:
    """Column-stack a matrix into a vector."""
    return as_matrix(m).reshape(-1, order="F")


def unvec_cm(v: np.ndarray, p: int, q: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size != p * q:
        raise DimensionError(f"Cannot unvec length {v.size} into {p}x{q}")
    return v.reshape((p, q), order="F")


def check_symmetric(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    m = as_matrix(m, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if np.max(np.abs(m - m.T), initial=0.0) > SYMMETRY_RTOL * scale:
        raise ContractError(f"{name} is not symmetric within {SYMMETRY_RTOL:g} relative")
    return m


def solve_spd(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``m x = rhs`` for symmetric positive-definite ``m`` via Cholesky.

    ``rhs`` may be a vector or a matrix of right-hand sides.
    """
    m = check_symmetric(m)
    n = m.shape[0]
    if n > config.spd_max_dim:
        raise OracleScaleError(f"SPD solve of size {n} exceeds limit {config.spd_max_dim}")
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != n:
        raise DimensionError(f"Right-hand side has {rhs.shape[0]} rows, expected {n}")
    if not np.all(np.isfinite(m)) or not np.all(np.isfinite(rhs)):
        raise NumericalError("Non-finite input to solve_spd")
    try:
        factor = linalg.cho_factor(m, lower=True, check_finite=False)
    except linalg.LinAlgError as e:
        match = _PIVOT_RE.search(str(e))
        pivot = int(match.group(1)) - 1 if match else None
        raise NumericalError(f"Matrix is not positive definite: {e}", pivot=pivot) from e
    return linalg.cho_solve(factor, rhs, check_finite=False)


def sym_eig_min(m: np.ndarray) -> float:
    m = check_symmetric(m)
    n = m.shape[0]
    if n > config.eig_max_dim:
        raise OracleScaleError(f"Eigensolve of size {n} exceeds limit {config.eig_max_dim}")
    sym = 0.5 * (m + m.T)
    return float(linalg.eigh(sym, eigvals_only=True, subset_by_index=[0, 0])[0])


def sym_eig(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full eigendecomposition of a symmetric matrix, ascending eigenvalues."""
    m = check_symmetric(m)
    w, v = linalg.eigh(0.5 * (m + m.T))
    return w, v


def spd_inverse(m: np.ndarray) -> np.ndarray:
    inv = solve_spd(m, np.eye(as_matrix(m).shape[0]))
    return 0.5 * (inv + inv.T)


def rand_orthogonal(rng: Rng | np.random.Generator, n: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix from the QR of a Gaussian matrix."""
    if n < 1:
        raise ContractError(f"n must be >= 1, got {n}")
    gen = rng.generator if isinstance(rng, Rng) else rng
    z = gen.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    # Sign fix makes the distribution Haar
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def relative_error(actual: np.ndarray, expected: np.ndarray) -> float:
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    denom = max(float(np.linalg.norm(expected)), np.finfo(np.float64).tiny)
    return float(np.linalg.norm(actual - expected)) / denom
