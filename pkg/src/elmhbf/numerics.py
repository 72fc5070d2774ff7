"""Dense complex linear-algebra helpers shared by the solvers.

Matrices are plain ``numpy.ndarray`` objects of complex dtype; the helpers
here validate them, extract Gram eigen-extremes, compute pseudo-inverses
and find roots of monotone scalar functions by bisection.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.linalg as sla

__all__ = [
    "InvalidInputError",
    "NoRootError",
    "SingularMatrixError",
    "as_complex_matrix",
    "hermitize",
    "max_eig_gram",
    "pinv",
    "solve_hermitian",
    "bisect",
]


class InvalidInputError(ValueError):
    """Raised for empty or non-finite numerical input."""


class NoRootError(RuntimeError):
    """Raised when a bisection bracket cannot be made to straddle the target."""


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a matrix that must be inverted is singular."""


def as_complex_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return `a` as a finite 2-D complex array, raising on bad input."""
    arr = np.asarray(a, dtype=complex)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a nonempty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def hermitize(a: np.ndarray) -> np.ndarray:
    """Average a square matrix with its conjugate transpose."""
    return 0.5 * (a + a.conj().T)


def max_eig_gram(a) -> float:
    """Largest eigenvalue of the Gram matrix ``A A^H``.

    The smaller of ``A A^H`` and ``A^H A`` is decomposed; both share the
    same nonzero spectrum.
    """
    a = as_complex_matrix(a, "A")
    rows, cols = a.shape
    gram = a @ a.conj().T if rows <= cols else a.conj().T @ a
    lam = np.linalg.eigvalsh(hermitize(gram))[-1]
    return max(float(lam), 0.0)


def pinv(a) -> np.ndarray:
    """Moore-Penrose pseudo-inverse via a truncated SVD.

    Singular values below ``s_max * 1e-12 * max(rows, cols)`` are treated
    as zero.
    """
    a = as_complex_matrix(a, "A")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((a.shape[1], a.shape[0]), dtype=complex)
    cutoff = s[0] * 1e-12 * max(a.shape)
    keep = s > cutoff
    return (vh[keep].conj().T / s[keep]) @ u[:, keep].conj().T


def solve_hermitian(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``A X = B`` for Hermitian positive-definite ``A``.

    Falls back to a general LU solve if Cholesky fails, and raises
    :class:`SingularMatrixError` if ``A`` is numerically singular.
    """
    a = hermitize(np.asarray(a, dtype=complex))
    try:
        return sla.solve(a, b, assume_a="pos")
    except np.linalg.LinAlgError:
        pass
    try:
        with np.errstate(all="raise"):
            x = sla.solve(a, b)
    except (np.linalg.LinAlgError, FloatingPointError, sla.LinAlgWarning) as exc:
        raise SingularMatrixError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("solution is not finite")
    return x


def bisect(
    f: Callable[[float], float],
    target: float,
    lo: float,
    hi: float,
    tol: float,
    max_expand: int = 200,
    max_iter: int = 400,
) -> float:
    """Find ``x`` in a bracket with ``|f(x) - target| <= tol``.

    `f` must be monotone (either direction). If ``[lo, hi]`` does not
    straddle `target`, `hi` is doubled until it does, at most `max_expand`
    times. The search also stops once the bracket collapses to machine
    precision, returning the better endpoint.
    """
    f_lo = f(lo) - target
    if abs(f_lo) <= tol:
        return lo
    f_hi = f(hi) - target
    expansions = 0
    while f_lo * f_hi > 0:
        if expansions >= max_expand:
            raise NoRootError(
                f"target {target!r} not bracketed on [{lo!r}, {hi!r}] after {max_expand} expansions"
            )
        lo, f_lo = hi, f_hi
        hi = 2.0 * hi if hi > 0 else 1.0
        f_hi = f(hi) - target
        expansions += 1
    if abs(f_hi) <= tol:
        return hi

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid) - target
        if abs(f_mid) <= tol:
            return mid
        if f_mid * f_lo > 0:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
        if hi - lo <= 2 * np.finfo(float).eps * max(abs(hi), 1e-300):
            break
    return lo if abs(f_lo) <= abs(f_hi) else hi
