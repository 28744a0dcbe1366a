"""Kronecker/vectorization utilities and the dense Lyapunov kernel.

Everything here is a pure function of its arguments.  The Lyapunov equation
is solved through the dense Kronecker linear system rather than an external
solver so that results are bit-reproducible and dependency-free; that is
entirely adequate for the state dimensions (n <= ~30) this package targets.
"""

import numpy as np

from .errors import StabilityError, SymmetryError

# Real-part threshold below which an eigenvalue counts as "strictly stable".
HURWITZ_MARGIN = -1e-9

# ---------------------------------------------------------------------------
# Kronecker products and vectorization
# ---------------------------------------------------------------------------


def kron(m1, m2):
    """Kronecker product of two matrices.

    Entry layout: ``kron(M1, M2)[i*c + k, j*d + l] == M1[i, j] * M2[k, l]``
    for M2 of shape (c, d).
    """
    return np.kron(np.asarray(m1, dtype=float), np.asarray(m2, dtype=float))


def vec(m):
    """Stack the columns of a matrix into one vector (column-major)."""
    return np.asarray(m, dtype=float).reshape(-1, order="F")


def unvec(v, rows, cols):
    """Inverse of :func:`vec` for a known shape."""
    return np.asarray(v, dtype=float).reshape(rows, cols, order="F")


def require_symmetric(s, tol=1e-10, what="matrix"):
    """Return ``s`` as float array, raising if it is not symmetric within ``tol`` (relative)."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise SymmetryError(f"{what} must be square, got shape {s.shape}")
    scale = np.linalg.norm(s)
    if np.linalg.norm(s - s.T) > tol * max(scale, 1.0):
        raise SymmetryError(f"{what} is not symmetric within tolerance {tol}")
    return s


def svec_indices(n):
    """(row, col) pairs of the upper triangle in column-major order."""
    return [(i, j) for j in range(n) for i in range(j + 1)]


def svec(s):
    """Half-vectorize a symmetric matrix: upper-triangular entries, column-major, unscaled.

    ``svec(I_2) == [1, 0, 1]``.  Off-diagonal entries are *not* multiplied by
    sqrt(2); the pairing with quadratic-form rows is handled by the
    duplication map (see :func:`duplication`).
    """
    s = require_symmetric(s, what="svec input")
    n = s.shape[0]
    return np.array([s[i, j] for (i, j) in svec_indices(n)])


def smat(v):
    """Rebuild the symmetric matrix from its :func:`svec` half-vectorization."""
    v = np.asarray(v, dtype=float)
    k = v.shape[0]
    n = int(round((np.sqrt(8 * k + 1) - 1) / 2))
    if n * (n + 1) // 2 != k:
        raise ValueError(f"length {k} is not a triangular number")
    s = np.zeros((n, n))
    for t, (i, j) in enumerate(svec_indices(n)):
        s[i, j] = v[t]
        s[j, i] = v[t]
    return s


def duplication(n):
    """Duplication map Dn with ``vec(S) == Dn @ svec(S)`` for symmetric S.

    Folding a quadratic-form row r (laid out against vec(S)) to the svec
    basis is ``r @ Dn``: off-diagonal svec entries then carry the factor 2
    that the symmetric pairing requires.
    """
    d = np.zeros((n * n, n * (n + 1) // 2))
    for k, (i, j) in enumerate(svec_indices(n)):
        d[j * n + i, k] = 1.0
        d[i * n + j, k] = 1.0
    return d


# ---------------------------------------------------------------------------
# Spectra and stability
# ---------------------------------------------------------------------------


def is_hurwitz(m, margin=HURWITZ_MARGIN):
    """True iff every eigenvalue of ``m`` has real part below ``margin``."""
    eigs = np.linalg.eigvals(np.asarray(m, dtype=float))
    return bool(np.max(eigs.real) < margin)


def spectral_norm(m):
    """Largest singular value (operator 2-norm)."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


# ---------------------------------------------------------------------------
# Lyapunov equation
# ---------------------------------------------------------------------------


def solve_lyapunov(ak, qbar, margin=HURWITZ_MARGIN):
    """Solve ``Ak'P + P Ak + Qbar = 0`` for symmetric P, requiring Ak stable.

    Uses the dense Kronecker system ``(I (x) Ak' + Ak' (x) I) vec(P) = -vec(Qbar)``.

    Parameters
    ----------
    ak : (n, n) array
        Must be Hurwitz (all eigenvalue real parts < ``margin``).
    qbar : (n, n) array
        Symmetric right-hand side.

    Returns
    -------
    (n, n) symmetric array P with residual ``||Ak'P + P Ak + Qbar||_F``
    at numerical-solve level.
    """
    ak = np.asarray(ak, dtype=float)
    qbar = require_symmetric(qbar, what="Lyapunov right-hand side")
    if not is_hurwitz(ak, margin=margin):
        eigs = np.linalg.eigvals(ak)
        raise StabilityError(
            "Lyapunov solve requires a stable matrix; max eigenvalue real part "
            f"is {np.max(eigs.real):.6g}"
        )
    n = ak.shape[0]
    lhs = kron(np.eye(n), ak.T) + kron(ak.T, np.eye(n))
    try:
        p = np.linalg.solve(lhs, -vec(qbar))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - stable Ak keeps lhs invertible
        raise StabilityError(f"singular Kronecker system in Lyapunov solve: {exc}") from exc
    p = unvec(p, n, n)
    return 0.5 * (p + p.T)


def lyapunov_residual(ak, qbar, p):
    """Frobenius norm of ``Ak'P + P Ak + Qbar``."""
    ak = np.asarray(ak, dtype=float)
    return float(np.linalg.norm(ak.T @ p + p @ ak + np.asarray(qbar, dtype=float)))
