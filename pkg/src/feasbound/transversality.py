"""Scalar transversality condition based on the smallest singular value.

``g_svd(x) = u_n^T J(x) v_n`` where ``(sigma_min, u_n, v_n)`` is the smallest
singular triplet of the state Jacobian.  It vanishes exactly where ``J`` is
singular.  The eigenvector condition ``[J y; y^T y - 1]`` is kept as a
baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, DegenerateSigmaError
from .pfsystem import ParameterVector, layout

DENSE_BELOW = 50
GAP_TOL = 1e-8


@dataclass(frozen=True)
class SingularTriplet:
    sigma_min: float
    u: np.ndarray
    v: np.ndarray
    sigma_next: float = np.inf  # second smallest singular value (inf for 1x1)

    @property
    def gap(self) -> float:
        return self.sigma_next - self.sigma_min


def _fix_sign(u, v):
    # largest-magnitude entry of v positive; u follows so u^T J v keeps its sign
    k = int(np.argmax(np.abs(v)))
    if v[k] < 0:
        return -u, -v
    return u, v


def _dense_triplet(J: np.ndarray) -> SingularTriplet:
    U, s, Vt = np.linalg.svd(J)
    u, v = _fix_sign(U[:, -1].copy(), Vt[-1].copy())
    nxt = float(s[-2]) if s.size > 1 else np.inf
    return SingularTriplet(float(s[-1]), u, v, nxt)


def _solvers(J: sp.csc_matrix):
    """Return ``(solve, solve_T)`` applying ``J^{-1}`` and ``J^{-T}``.

    An exactly singular ``J`` is shifted by ``1e-13 * |J|_1`` on the diagonal
    before factorising; the shift moves singular vectors by O(shift/gap).
    """
    try:
        lu = spla.splu(J)
    except RuntimeError:
        n = J.shape[0]
        shift = 1e-13 * (spla.norm(J, 1) or 1.0)
        lu = spla.splu((J + shift * sp.identity(n)).tocsc())
    return (lambda b: lu.solve(b)), (lambda b: lu.solve(b, trans="T"))


def _iterative_triplet(J, tol=1e-12, seed=0) -> SingularTriplet:
    """Two smallest singular values via Lanczos (ARPACK) on ``J^{-1} J^{-T}``.

    The largest eigenvalues of that operator are ``1/sigma^2`` for the
    smallest singular values of ``J``; each application costs two
    triangular solves with one sparse LU.
    """
    J = sp.csc_matrix(J)
    n = J.shape[0]
    solve, solve_T = _solvers(J)
    op = spla.LinearOperator((n, n), matvec=lambda b: solve(solve_T(b)), dtype=float)
    v0 = np.random.default_rng(seed).standard_normal(n)
    try:
        vals, vecs = spla.eigsh(op, k=2, which="LM", v0=v0, tol=tol, maxiter=50 * n)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError("Lanczos iteration for the smallest singular value did not converge") from exc
    order = np.argsort(vals)[::-1]
    v = vecs[:, order[0]]
    # one extra inverse-iteration sweep sharpens v when sigma_min is tiny
    w = solve(solve_T(v))
    if np.all(np.isfinite(w)) and np.linalg.norm(w) > 0:
        v = w / np.linalg.norm(w)
    w = solve_T(v)
    u = w / np.linalg.norm(w)
    u, v = _fix_sign(u, v)
    sigma = abs(float(u @ (J @ v)))
    lam2 = float(vals[order[1]])
    nxt = 1.0 / np.sqrt(lam2) if lam2 > 0 else np.inf
    return SingularTriplet(sigma, u, v, nxt)


def gsvd(jac, method: str = "auto") -> SingularTriplet:
    """Smallest singular value of a square matrix and its singular vectors.

    ``method`` is ``"dense"`` (full SVD), ``"iterative"`` (Lanczos on
    ``(J^T J)^{-1}`` through a sparse LU of ``J``) or ``"auto"`` (dense
    below 50 rows).
    """
    shape = jac.shape
    if len(shape) != 2 or shape[0] != shape[1]:
        raise ValueError(f"expected a square matrix, got shape {shape}")
    if method == "auto":
        method = "dense" if shape[0] < DENSE_BELOW else "iterative"
    if method == "dense" or shape[0] < 3:  # Lanczos for two values needs n >= 3
        J = jac.toarray() if sp.issparse(jac) else np.asarray(jac, dtype=float)
        return _dense_triplet(J)
    if method == "iterative":
        return _iterative_triplet(jac)
    raise ValueError(f"unknown method {method!r}")


def singular_value_gradient(triplet: SingularTriplet, dJ, gap_tol: float = GAP_TOL) -> np.ndarray:
    """``d sigma_min / d theta_k = u^T (dJ/d theta_k) v`` for a list of matrix derivatives."""
    if triplet.gap < gap_tol:
        raise DegenerateSigmaError(
            f"smallest singular value is not simple (gap {triplet.gap:.2e} < {gap_tol:.0e})"
        )
    u, v = triplet.u, triplet.v
    return np.array([float(u @ (D @ v)) for D in dJ])


def gsvd_gradient(case, x, lam: ParameterVector, triplet: SingularTriplet,
                  limits: bool = True, gap_tol: float = GAP_TOL):
    """Gradient of ``g_svd`` with respect to the state and the parameters.

    The residuals are quadratic in the state, so contracting the Hessian
    tensor with ``u`` and ``v`` reduces to ``(J(v) - J(0))^T u``.  The
    Jacobian does not depend on the injections, so the parameter part is 0.
    """
    if triplet.gap < gap_tol:
        raise DegenerateSigmaError(
            f"smallest singular value is not simple (gap {triplet.gap:.2e} < {gap_tol:.0e})"
        )
    lay = layout(case, limits)
    grad_x = lay.quadratic_part(triplet.v).T @ triplet.u
    return np.asarray(grad_x).reshape(-1), np.zeros(lam.p)


def geig_system(jac, y) -> np.ndarray:
    """Eigenvector transversality residual ``[J y; y^T y - 1]``."""
    y = np.asarray(y, dtype=float)
    if not np.linalg.norm(y) > 0:
        raise ValueError("y must be nonzero")
    Jy = jac @ y
    return np.concatenate([np.asarray(Jy).reshape(-1), [y @ y - 1.0]])


def g_det(jac) -> float:
    """Determinant condition; only sensible for tiny matrices (test oracle)."""
    J = jac.toarray() if sp.issparse(jac) else np.asarray(jac, dtype=float)
    return float(np.linalg.det(J))
