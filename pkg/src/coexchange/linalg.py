"""Dense symmetric linear algebra used throughout the package.

Matrices are plain ``numpy`` arrays. Functions that require symmetry validate
it with :func:`as_symmetric`, which returns the symmetrised copy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, NotSPDError, NotSymmetricError

SYM_TOL = 1e-10
EIG_GAP_TOL = 1e-9
SIGN_TOL = 1e-9


def as_symmetric(m, name: str = "matrix") -> np.ndarray:
    """Return ``(m + m.T) / 2`` after checking that ``m`` is symmetric.

    The asymmetry must not exceed ``1e-10`` times the largest absolute entry.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {m.shape}")
    scale = np.max(np.abs(m)) if m.size else 0.0
    if np.max(np.abs(m - m.T), initial=0.0) > SYM_TOL * max(scale, np.finfo(float).tiny):
        raise NotSymmetricError(f"{name} is not symmetric")
    return 0.5 * (m + m.T)


def check_spd(m) -> bool:
    """True iff a Cholesky factorisation succeeds with all pivots above
    ``1e-12`` times the largest diagonal entry."""
    try:
        m = as_symmetric(m)
    except ValueError:
        return False
    if m.size == 0:
        return False
    dmax = np.max(np.diag(m))
    if not np.isfinite(m).all() or dmax <= 0:
        return False
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        return False
    pivots = np.diag(chol) ** 2
    return bool(np.all(pivots > 1e-12 * dmax))


def group_eigenspaces(values: np.ndarray, tol: float = EIG_GAP_TOL) -> tuple[tuple[int, ...], ...]:
    """Partition indices of descending ``values`` into runs of equal eigenvalues.

    Neighbours are merged when their gap is at most ``tol`` relative to the
    largest absolute eigenvalue.
    """
    if len(values) == 0:
        return ()
    scale = max(np.max(np.abs(values)), np.finfo(float).tiny)
    spaces, current = [], [0]
    for j in range(1, len(values)):
        if abs(values[j - 1] - values[j]) <= tol * scale:
            current.append(j)
        else:
            spaces.append(tuple(current))
            current = [j]
    spaces.append(tuple(current))
    return tuple(spaces)


@dataclass(frozen=True)
class GeneralizedEigenResult:
    """Solution of ``lhs @ X = rhs @ X @ diag(resolutions)``.

    ``directions`` holds eigenvectors in columns, ordered by descending
    ``resolutions``. ``eigenspaces`` groups column indices sharing one
    eigenvalue; only projectors onto those spaces are basis independent.
    """

    directions: np.ndarray
    resolutions: np.ndarray
    eigenspaces: tuple[tuple[int, ...], ...]

    def projectors(self, metric: np.ndarray) -> list[np.ndarray]:
        """Projectors ``sum_j x_j x_j^T metric`` onto each eigenspace.

        With ``metric`` the matrix the directions are orthonormal under, these
        are invariant to the basis chosen inside a degenerate eigenspace.
        """
        x = self.directions
        return [x[:, list(idx)] @ x[:, list(idx)].T @ metric for idx in self.eigenspaces]


def _fix_signs(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    for j in range(x.shape[1]):
        col = x[:, j]
        big = np.flatnonzero(np.abs(col) > SIGN_TOL * np.max(np.abs(col), initial=0.0))
        if big.size and col[big[0]] < 0:
            x[:, j] = -col
    return x


def _merge_degenerate(values: np.ndarray, spaces) -> np.ndarray:
    values = values.copy()
    for idx in spaces:
        if len(idx) > 1:
            values[list(idx)] = values[list(idx)].mean()
    return values


def gen_eig(lhs, rhs, normalize: str = "lhs") -> GeneralizedEigenResult:
    """Solve the symmetric-definite pencil ``lhs X = rhs X Lambda``.

    The Cholesky factor of ``rhs`` reduces the pencil to a standard symmetric
    eigenproblem. Eigenvalues come back in descending order.

    Parameters
    ----------
    lhs, rhs : array_like
        Symmetric matrices of equal size. ``rhs`` must be SPD; ``lhs`` must be
        SPD as well when ``normalize="lhs"``.
    normalize : {"lhs", "rhs"}
        ``"lhs"`` scales columns so that ``X.T @ lhs @ X = I`` (and hence
        ``X.T @ rhs @ X @ Lambda = I``). ``"rhs"`` gives ``X.T @ rhs @ X = I``
        and only needs ``lhs`` to be symmetric.
    """
    lhs = as_symmetric(lhs, "lhs")
    rhs = as_symmetric(rhs, "rhs")
    if lhs.shape != rhs.shape:
        raise DimensionMismatch(f"pencil shapes differ: {lhs.shape} vs {rhs.shape}")
    if normalize not in ("lhs", "rhs"):
        raise ValueError(f"normalize must be 'lhs' or 'rhs', got {normalize!r}")
    if normalize == "lhs" and not check_spd(lhs):
        raise NotSPDError("lhs")
    if not check_spd(rhs):
        raise NotSPDError("rhs")

    chol = np.linalg.cholesky(rhs)
    reduced = sla.solve_triangular(chol, sla.solve_triangular(chol, lhs, lower=True).T, lower=True)
    values, q = np.linalg.eigh(0.5 * (reduced + reduced.T))
    order = np.argsort(-values, kind="stable")
    values, q = values[order], q[:, order]
    x = sla.solve_triangular(chol.T, q, lower=False)
    if normalize == "lhs":
        # x.T lhs x = diag(values) at this point
        x = x / np.sqrt(values)
    spaces = group_eigenspaces(values)
    return GeneralizedEigenResult(_fix_signs(x), _merge_degenerate(values, spaces), spaces)


def pinv(m) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric matrix via its eigendecomposition.

    Eigenvalues with ``|s| <= dim * eps * max|s|`` are treated as zero.
    """
    m = as_symmetric(m)
    if m.size == 0:
        return m.copy()
    s, q = np.linalg.eigh(m)
    cutoff = m.shape[0] * np.finfo(float).eps * np.max(np.abs(s))
    keep = np.abs(s) > cutoff
    inv = (q[:, keep] / s[keep]) @ q[:, keep].T
    return 0.5 * (inv + inv.T)


def kron(a, b) -> np.ndarray:
    """Kronecker product; block ``(g, h)`` of the result is ``a[g, h] * b``."""
    return np.kron(np.atleast_2d(a), np.atleast_2d(b))


def direct_sum(*blocks) -> np.ndarray:
    return sla.block_diag(*blocks)


def helmert(p: int) -> np.ndarray:
    """Orthonormal Helmert matrix of order ``p``.

    Row 0 is constant. Row ``t`` (``t >= 1``) contrasts coordinate ``t`` with
    the mean of coordinates ``0..t-1``, i.e. it is proportional to
    ``(-1, ..., -1, t, 0, ..., 0)``.
    """
    if p < 1:
        raise ValueError("helmert order must be >= 1")
    h = np.zeros((p, p))
    h[0] = 1.0 / np.sqrt(p)
    for t in range(1, p):
        h[t, :t] = -1.0
        h[t, t] = t
        h[t] /= np.sqrt(t * (t + 1))
    return h


def psd_sqrt(m) -> np.ndarray:
    """A factor ``L`` with ``L @ L.T == m`` for symmetric PSD ``m``."""
    s, q = np.linalg.eigh(as_symmetric(m))
    return q * np.sqrt(np.clip(s, 0.0, None))


def min_eig_ratio(m) -> float:
    """Smallest eigenvalue divided by the largest absolute one (0 for a zero matrix)."""
    s = np.linalg.eigvalsh(as_symmetric(m))
    scale = np.max(np.abs(s), initial=0.0)
    return float(s[0] / scale) if scale > 0 else 0.0
