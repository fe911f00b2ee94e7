"""Symmetric eigensolvers.

The workhorse is a cyclic Jacobi rotation solver compiled with numba. Large
matrices (above ``JACOBI_MAX_SIZE``) fall back to LAPACK through numpy when
``method="auto"``. A slow but independent bisection routine based on
Sylvester inertia counts is kept as a cross-check for small matrices.
"""

from __future__ import annotations

import math

import numba
import numpy as np

JACOBI_MAX_SIZE = 256
"""Largest size routed to the Jacobi solver by ``method="auto"``."""

OFFDIAG_RTOL = 1e-10
MAX_SWEEPS = 100
RESIDUAL_RTOL = 1e-8
"""Declared residual tolerance: ``max_i |A v_i - l_i v_i| <= RESIDUAL_RTOL * max(1, |A|_F)``."""


class EigenSolverError(RuntimeError):
    """Raised when the Jacobi iteration exhausts its sweep budget."""


@numba.njit(cache=True)
def _jacobi_inplace(a, v, tol, max_sweeps):
    n = a.shape[0]
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += 2.0 * a[p, q] * a[p, q]
        off = math.sqrt(off)
        if off <= tol:
            return sweep, off
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return -1, off


def jacobi_eigh(
    a: np.ndarray, rtol: float = OFFDIAG_RTOL, max_sweeps: int = MAX_SWEEPS
) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Iterates until the off-diagonal Frobenius norm drops below ``rtol * |A|_F``.

    Returns:
        ``(w, V)`` with eigenvalues ``w`` ascending and orthonormal columns ``V``.

    Raises:
        EigenSolverError: if ``max_sweeps`` sweeps do not reach the tolerance.
    """
    a = np.array(a, dtype=np.float64, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    v = np.eye(n)
    if n == 0:
        return np.zeros(0), v
    tol = rtol * float(np.linalg.norm(a))
    sweeps, off = _jacobi_inplace(a, v, tol, max_sweeps)
    if sweeps < 0:
        raise EigenSolverError(
            f"Jacobi iteration budget of {max_sweeps} sweeps exhausted "
            f"(off-diagonal norm {off:.3e} > {tol:.3e})"
        )
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def eigh(a: np.ndarray, method: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """Symmetric eigen-decomposition, ascending eigenvalues.

    ``method`` is ``"jacobi"``, ``"lapack"`` or ``"auto"`` (Jacobi up to
    ``JACOBI_MAX_SIZE``).
    """
    a = np.asarray(a, dtype=np.float64)
    if method == "auto":
        method = "jacobi" if a.shape[0] <= JACOBI_MAX_SIZE else "lapack"
    if method == "jacobi":
        return jacobi_eigh(a)
    if method == "lapack":
        w, v = np.linalg.eigh(a)
        return w, v
    raise ValueError(f"unknown eigensolver method {method!r}")


def residual(a: np.ndarray, w: np.ndarray, v: np.ndarray) -> float:
    """Largest Euclidean norm of ``A v_i - w_i v_i`` over all pairs."""
    r = np.asarray(a) @ v - v * w
    return float(np.max(np.linalg.norm(r, axis=0))) if r.size else 0.0


def tridiagonalize(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Householder reduction to symmetric tridiagonal form ``(diagonal, offdiagonal)``."""
    t = np.array(a, dtype=np.float64, copy=True)
    n = len(t)
    for k in range(n - 2):
        x = t[k + 1 :, k].copy()
        alpha = -math.copysign(float(np.linalg.norm(x)), x[0] if x[0] != 0 else 1.0)
        v = x
        v[0] -= alpha
        vn = float(np.linalg.norm(v))
        if vn == 0.0:
            continue
        v /= vn
        sub = t[k + 1 :, k:]
        sub -= 2.0 * np.outer(v, v @ sub)
        sub = t[k:, k + 1 :]
        sub -= 2.0 * np.outer(sub @ v, v)
    return np.diag(t).copy(), np.diag(t, 1).copy()


def sturm_count(d: np.ndarray, e: np.ndarray, x: float) -> int:
    """Number of eigenvalues of the tridiagonal matrix ``(d, e)`` strictly below ``x``."""
    scale = max(1.0, float(np.max(np.abs(d))) if len(d) else 1.0, float(np.max(np.abs(e))) if len(e) else 1.0)
    pivmin = np.finfo(float).tiny * scale
    count = 0
    q = 1.0
    for k in range(len(d)):
        q = d[k] - x - (e[k - 1] ** 2 / q if k > 0 else 0.0)
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0:
            count += 1
    return count


def bisection_eigenvalues(a: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """All eigenvalues of a small symmetric matrix by Sturm-sequence bisection.

    Independent of the rotation solver; used as a test oracle.
    """
    a = np.asarray(a, dtype=np.float64)
    n = len(a)
    d, e = tridiagonalize(a)
    radius = float(np.max(np.sum(np.abs(a), axis=1))) if n else 0.0
    out = np.empty(n)
    for k in range(n):
        lo, hi = -radius - 1.0, radius + 1.0
        while hi - lo > tol * max(1.0, abs(lo), abs(hi)):
            mid = 0.5 * (lo + hi)
            if sturm_count(d, e, mid) > k:
                hi = mid
            else:
                lo = mid
        out[k] = 0.5 * (lo + hi)
    return out
