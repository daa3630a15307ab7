"""Generic Bayes linear adjustment of a collection B by data D.

Works on any second-order specification: means, variances and the
cross-covariance. Everything else in the package either feeds this engine
(the brute-force oracle) or reproduces its answers in closed form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NumericalConsistencyError, ZeroPriorVariance
from .linalg import (
    GeneralizedEigenResult,
    _fix_signs,
    _merge_degenerate,
    as_symmetric,
    check_spd,
    gen_eig,
    group_eigenspaces,
    min_eig_ratio,
    pinv,
)

PSD_TOL = 1e-8
RES_TOL = 1e-8


@dataclass(frozen=True)
class SecondOrderBeliefs:
    """Prior means and (co)variances for ``B`` (length r) and ``D`` (length s)."""

    mean_b: np.ndarray
    mean_d: np.ndarray
    var_b: np.ndarray
    var_d: np.ndarray
    cov_bd: np.ndarray

    def __post_init__(self):
        mean_b = np.atleast_1d(np.asarray(self.mean_b, dtype=float))
        mean_d = np.atleast_1d(np.asarray(self.mean_d, dtype=float))
        r, s = mean_b.size, mean_d.size
        var_b = as_symmetric(self.var_b, "var_b") if r else np.zeros((0, 0))
        var_d = as_symmetric(self.var_d, "var_d") if s else np.zeros((0, 0))
        cov_bd = np.asarray(self.cov_bd, dtype=float).reshape(r, s)
        if var_b.shape != (r, r) or var_d.shape != (s, s):
            raise DimensionMismatch("variance shapes do not match mean lengths")
        for name, value in (("mean_b", mean_b), ("mean_d", mean_d), ("var_b", var_b),
                            ("var_d", var_d), ("cov_bd", cov_bd)):
            object.__setattr__(self, name, value)
        if r + s and min_eig_ratio(self.joint_var) < -PSD_TOL:
            raise ValueError("joint covariance of (B, D) is not positive semidefinite")

    @property
    def r(self) -> int:
        return self.mean_b.size

    @property
    def s(self) -> int:
        return self.mean_d.size

    @property
    def joint_var(self) -> np.ndarray:
        return np.block([[self.var_b, self.cov_bd], [self.cov_bd.T, self.var_d]])


@dataclass(frozen=True)
class AdjustedBeliefs:
    """Result of adjusting ``B`` by ``D``.

    ``canonical.directions`` are coefficient vectors over ``B`` scaled to unit
    prior variance; ``canonical.resolutions`` are the canonical resolutions.
    ``adjusted_mean`` is ``None`` when no observation was supplied.
    """

    adjusted_mean: np.ndarray | None
    adjusted_var: np.ndarray
    resolution_transform: np.ndarray
    canonical: GeneralizedEigenResult


def _explained(beliefs: SecondOrderBeliefs) -> np.ndarray:
    """Cov(B, D) Var^+(D) Cov(D, B)."""
    if beliefs.s == 0:
        return np.zeros((beliefs.r, beliefs.r))
    e = beliefs.cov_bd @ pinv(beliefs.var_d) @ beliefs.cov_bd.T
    return 0.5 * (e + e.T)


def _clamp_resolutions(values: np.ndarray) -> np.ndarray:
    if values.size and (values.min() < -RES_TOL or values.max() > 1 + RES_TOL):
        raise NumericalConsistencyError(
            f"canonical resolutions outside [0, 1]: {values.min():.3g}..{values.max():.3g}")
    return np.clip(values, 0.0, 1.0)


def canonical_structure(var_b: np.ndarray, explained: np.ndarray) -> GeneralizedEigenResult:
    """Canonical directions/resolutions for the pencil ``explained h = lam var_b h``.

    Directions are normalised to unit prior variance. When ``var_b`` is
    singular the problem is solved on its range, giving ``rank(var_b)``
    directions.
    """
    if var_b.size == 0:
        return GeneralizedEigenResult(np.zeros((0, 0)), np.zeros(0), ())
    if check_spd(var_b):
        res = gen_eig(explained, var_b, normalize="rhs")
        values = _clamp_resolutions(res.resolutions)
        return GeneralizedEigenResult(res.directions, values, res.eigenspaces)
    s, q = np.linalg.eigh(var_b)
    keep = s > var_b.shape[0] * np.finfo(float).eps * np.max(np.abs(s))
    whiten = q[:, keep] / np.sqrt(s[keep])
    values, vecs = np.linalg.eigh(whiten.T @ explained @ whiten)
    order = np.argsort(-values, kind="stable")
    values = _clamp_resolutions(values[order])
    spaces = group_eigenspaces(values)
    return GeneralizedEigenResult(_fix_signs(whiten @ vecs[:, order]),
                                  _merge_degenerate(values, spaces), spaces)


def adjust(beliefs: SecondOrderBeliefs, observed_d=None) -> AdjustedBeliefs:
    """Adjusted expectation, variance and canonical structure of B given D."""
    explained = _explained(beliefs)
    adjusted_mean = None
    if observed_d is not None:
        observed_d = np.atleast_1d(np.asarray(observed_d, dtype=float))
        if observed_d.shape != (beliefs.s,):
            raise DimensionMismatch(f"observed_d has length {observed_d.size}, expected {beliefs.s}")
        if beliefs.s:
            gain = beliefs.cov_bd @ pinv(beliefs.var_d)
            adjusted_mean = beliefs.mean_b + gain @ (observed_d - beliefs.mean_d)
        else:
            adjusted_mean = beliefs.mean_b.copy()
    adjusted_var = beliefs.var_b - explained
    adjusted_var = 0.5 * (adjusted_var + adjusted_var.T)
    transform = pinv(beliefs.var_b) @ explained if beliefs.r else np.zeros((0, 0))
    return AdjustedBeliefs(adjusted_mean, adjusted_var, transform,
                           canonical_structure(beliefs.var_b, explained))


def _prior_variance(beliefs: SecondOrderBeliefs, h: np.ndarray) -> float:
    if h.shape != (beliefs.r,):
        raise DimensionMismatch(f"functional has length {h.size}, expected {beliefs.r}")
    v = float(h @ beliefs.var_b @ h)
    scale = np.max(np.abs(np.diag(beliefs.var_b)), initial=0.0) * float(h @ h)
    if not v > 1e-14 * scale or v <= 0:
        raise ZeroPriorVariance("functional has zero prior variance")
    return v


def resolution_of(beliefs: SecondOrderBeliefs, functional) -> float:
    """``1 - Var_D(h'B) / Var(h'B)``."""
    h = np.asarray(functional, dtype=float)
    prior = _prior_variance(beliefs, h)
    adjusted = prior - float(h @ _explained(beliefs) @ h)
    return float(np.clip(1.0 - adjusted / prior, 0.0, 1.0))


def resolution_partition(beliefs: SecondOrderBeliefs, functional,
                         adjusted: AdjustedBeliefs | None = None) -> list[tuple[float, float]]:
    """``(Corr^2(h'B, Y_j), lambda_j)`` for every canonical direction ``Y_j``.

    The weights sum to one and their ``lambda``-weighted sum is the resolution.
    Pass ``adjusted`` to reuse an earlier :func:`adjust` result.
    """
    h = np.asarray(functional, dtype=float)
    prior = _prior_variance(beliefs, h)
    canonical = (adjusted or adjust(beliefs)).canonical
    cov = h @ beliefs.var_b @ canonical.directions
    weights = cov ** 2 / prior
    return [(float(w), float(lam)) for w, lam in zip(weights, canonical.resolutions)]


def resolved_uncertainty(beliefs: SecondOrderBeliefs) -> float:
    """Trace of the resolution transform, i.e. the sum of canonical resolutions."""
    result = adjust(beliefs)
    trace = float(np.trace(result.resolution_transform))
    total = float(np.sum(result.canonical.resolutions))
    if abs(trace - total) > 1e-8 * max(1.0, abs(total)):
        raise NumericalConsistencyError(f"trace {trace} differs from sum of resolutions {total}")
    return trace
