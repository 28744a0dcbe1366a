"""Kernel checks for the matrix-calculus helpers.

Every derived value here is cross-checked against an independent route:
scipy for the Lyapunov solve, brute-force index loops for the Kronecker
product, and explicit upper-triangle bookkeeping for the symmetric
half-vectorization.
"""

import numpy as np
import pytest
import scipy.linalg

import lqrlearn as ll
from lqrlearn.errors import StabilityError, SymmetryError

from conftest import random_stable, random_symmetric


# ===================================================================
# vec / svec / smat / duplication
# ===================================================================


def test_vec_stacks_columns():
    m = np.array([[1.0, 3.0], [2.0, 4.0]])
    assert np.array_equal(ll.vec(m), np.array([1.0, 2.0, 3.0, 4.0]))


def test_unvec_round_trip():
    rng = np.random.default_rng(11)
    m = rng.normal(size=(3, 5))
    assert np.array_equal(ll.unvec(ll.vec(m), 3, 5), m)


def test_svec_identity_convention():
    assert np.array_equal(ll.svec(np.eye(2)), np.array([1.0, 0.0, 1.0]))


def test_svec_column_major_upper_triangle():
    s = np.array([[1.0, 2.0, 4.0], [2.0, 3.0, 5.0], [4.0, 5.0, 6.0]])
    # upper triangle read column by column, off-diagonals unscaled
    assert np.array_equal(ll.svec(s), np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]))


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
def test_svec_smat_mutual_inverse_exact(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(20):
        s = random_symmetric(rng, n)
        assert np.array_equal(ll.smat(ll.svec(s)), s)
        v = rng.normal(size=n * (n + 1) // 2)
        assert np.array_equal(ll.svec(ll.smat(v)), v)


def test_svec_rejects_asymmetric():
    with pytest.raises(SymmetryError):
        ll.svec(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_svec_length():
    for n in range(1, 7):
        assert ll.svec(np.eye(n)).shape == (n * (n + 1) // 2,)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_duplication_relates_vec_and_svec(n):
    rng = np.random.default_rng(200 + n)
    dn = ll.duplication(n)
    assert dn.shape == (n * n, n * (n + 1) // 2)
    for _ in range(10):
        s = random_symmetric(rng, n)
        assert np.allclose(dn @ ll.svec(s), ll.vec(s), atol=0.0, rtol=0.0)


# ===================================================================
# Kronecker product
# ===================================================================


def test_kron_identity():
    assert np.array_equal(ll.kron(np.eye(2), np.eye(2)), np.eye(4))


def test_kron_column_vectors():
    out = ll.kron(np.array([[1.0], [2.0]]), np.array([[3.0], [4.0]]))
    assert np.array_equal(out, np.array([[3.0], [4.0], [6.0], [8.0]]))


def test_kron_matches_index_definition():
    rng = np.random.default_rng(7)
    for a_shape, b_shape in [((3, 3), (3, 3)), ((2, 3), (3, 2)), ((1, 4), (2, 1))]:
        m1 = rng.normal(size=a_shape)
        m2 = rng.normal(size=b_shape)
        got = ll.kron(m1, m2)
        a, b = a_shape
        c, d = b_shape
        want = np.zeros((a * c, b * d))
        for i in range(a):
            for j in range(b):
                for k in range(c):
                    for l in range(d):
                        want[i * c + k, j * d + l] = m1[i, j] * m2[k, l]
        assert np.max(np.abs(got - want)) <= 1e-14


# ===================================================================
# Lyapunov solve
# ===================================================================


def test_lyapunov_scalar_structure():
    p = ll.solve_lyapunov(-np.eye(2), 2.0 * np.eye(2))
    assert np.allclose(p, np.eye(2), atol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_lyapunov_matches_scipy(n):
    """Dense Kronecker route vs scipy's Schur-based solver, 1e-10 on n <= 6."""
    rng = np.random.default_rng(300 + n)
    for _ in range(5):
        ak = random_stable(rng, n)
        q = random_symmetric(rng, n)
        q = q @ q.T + 0.1 * np.eye(n)
        p_mine = ll.solve_lyapunov(ak, q)
        # scipy solves a x + x a^T = q; map to ak^T p + p ak = -q
        p_scipy = scipy.linalg.solve_continuous_lyapunov(ak.T, -q)
        denom = max(1.0, np.linalg.norm(p_scipy))
        assert np.linalg.norm(p_mine - p_scipy) / denom <= 1e-10
        assert np.array_equal(p_mine, p_mine.T)


def test_lyapunov_residual_contract():
    rng = np.random.default_rng(13)
    ak = random_stable(rng, 4)
    q = random_symmetric(rng, 4)
    q = q @ q.T
    p = ll.solve_lyapunov(ak, q)
    assert ll.lyapunov_residual(ak, q, p) <= 1e-8 * (1.0 + np.linalg.norm(q))


def test_lyapunov_rejects_non_hurwitz():
    with pytest.raises(StabilityError):
        ll.solve_lyapunov(np.eye(2), np.eye(2))


def test_lyapunov_rejects_marginal():
    # an eigenvalue exactly on the axis violates the -1e-9 margin
    ak = np.array([[0.0, 1.0], [-1.0, 0.0]])
    with pytest.raises(StabilityError):
        ll.solve_lyapunov(ak, np.eye(2))


# ===================================================================
# Norms and stability predicates
# ===================================================================


def test_spectral_norm_matches_numpy():
    rng = np.random.default_rng(17)
    for shape in [(3, 3), (5, 2), (2, 7)]:
        m = rng.normal(size=shape)
        assert ll.spectral_norm(m) == pytest.approx(np.linalg.norm(m, 2), rel=1e-12)


def test_is_hurwitz_basic():
    assert ll.is_hurwitz(-np.eye(3))
    assert not ll.is_hurwitz(np.array([[0.0, 1.0], [-1.0, 0.0]]))  # purely imaginary


def test_is_hurwitz_margin():
    # real part -1e-12 sits above the -1e-9 acceptance threshold
    assert not ll.is_hurwitz(np.array([[-1e-12]]))
    assert ll.is_hurwitz(np.array([[-1e-6]]))
