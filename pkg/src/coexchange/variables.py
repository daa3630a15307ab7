"""Variable problem: sampling one exchangeable group.

The canonical variable directions solve ``C U = D U Phi`` with
``U.T C U = I``. They do not depend on the group, the sample size or the
population size, so a single ``v0 x v0`` solve serves every group. In these
coordinates the prior variance of a group-mean direction is ``alpha_gg`` and
the residual variance of one individual is ``gamma_g / phi_t - alpha_gg``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DesignError, MissingData, ZeroPriorVariance
from .linalg import gen_eig
from .model import Design, Kind, ModelSpec, ObservedSample, _check_kind, _require_finite, require_valid


@dataclass(frozen=True)
class CanonicalVariables:
    U: np.ndarray
    phi: np.ndarray
    eigenspaces: tuple[tuple[int, ...], ...]


def canonical_variables(spec: ModelSpec) -> CanonicalVariables:
    require_valid(spec)
    res = gen_eig(spec.C, spec.D)
    return CanonicalVariables(res.directions, res.resolutions, res.eigenspaces)


def infinite_resolution(n, alpha, gamma, phi):
    """``n alpha phi / ((n - 1) alpha phi + gamma)``; works elementwise."""
    n = np.asarray(n, dtype=float)
    return n * alpha * phi / ((n - 1) * alpha * phi + gamma)


def finite_resolution(n, m, alpha, gamma, phi):
    """Infinite resolution plus the sampling-fraction correction ``(n/m)(1 - lam)``."""
    lam = infinite_resolution(n, alpha, gamma, phi)
    return lam + (np.asarray(n, dtype=float) / m) * (1 - lam)


def fpc(m: int, n: int) -> float:
    """Finite population correction ``(1 - (n-1)/(m-1))^-1 = (m-1)/(m-n)``.

    Defined for ``1 <= n < m``; a census (``n == m``) must be handled by the
    caller since the correction diverges there.
    """
    if math.isinf(m):
        return 1.0
    if int(m) != m or int(n) != n or m < 2 or not 1 <= n < m:
        raise ValueError(f"fpc needs integers 1 <= n < m with m >= 2, got m={m}, n={n}")
    return (m - 1) / (m - n)


def _group_params(spec: ModelSpec, g):
    g = spec.group_index(g)
    return g, spec.A[g, g], spec.gamma[g]


def variable_resolution(spec: ModelSpec, g, n: int, t: int, kind: Kind = "infinite") -> float:
    """Resolution of the ``t``-th canonical variable direction for group ``g``."""
    _check_kind(kind)
    g, alpha, gamma = _group_params(spec, g)
    phi = canonical_variables(spec).phi[t]
    if n < 0:
        raise DesignError("sample size must be nonnegative")
    if kind == "infinite":
        return float(infinite_resolution(n, alpha, gamma, phi))
    m = spec.pop_sizes[g]
    if math.isinf(m):
        _require_finite(spec)
    if n > m:
        raise DesignError(f"sample size {n} exceeds population size {m}")
    if n == m:
        return 1.0
    return float(finite_resolution(n, m, alpha, gamma, phi))


@dataclass(frozen=True)
class VariableUpdate:
    """Per-direction update for one group; arrays are indexed by ``t``.

    Precisions are inverse variances. A census gives infinite posterior
    precision and zero posterior variance.
    """

    group: int
    kind: str
    phi: np.ndarray
    sample_mean: np.ndarray
    prior_mean: np.ndarray
    prior_precision: np.ndarray
    unit_precision: np.ndarray
    data_precision: np.ndarray
    posterior_mean: np.ndarray
    posterior_precision: np.ndarray
    resolution: np.ndarray

    @property
    def prior_variance(self) -> np.ndarray:
        return 1.0 / self.prior_precision

    @property
    def posterior_variance(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.where(np.isinf(self.posterior_precision), 0.0, 1.0 / self.posterior_precision)


def update_variable(spec: ModelSpec, g, design: Design, observed: ObservedSample | None,
                    kind: Kind = "infinite", cv: CanonicalVariables | None = None) -> VariableUpdate:
    """Adjust every canonical variable direction of group ``g`` by its sample mean.

    ``observed`` may be ``None`` for a design-stage analysis; posterior means
    are then NaN.
    """
    _check_kind(kind)
    cv = cv or canonical_variables(spec)
    g, alpha, gamma = _group_params(spec, g)
    n = design.sample_sizes[g]
    m = spec.pop_sizes[g]
    if kind == "finite" and math.isinf(m):
        _require_finite(spec)
    if n > m:
        raise DesignError(f"sample size {n} exceeds population size {m}")
    phi = cv.phi
    resid = gamma / phi - alpha  # Var of one individual's direction given the infinite mean
    prior_mean = cv.U.T @ spec.mu[g]
    if n > 0 and observed is not None:
        if np.isnan(observed.means[g]).any():
            raise MissingData(spec.group_labels[g])
        wbar = cv.U.T @ observed.means[g]
    else:
        wbar = np.full_like(phi, np.nan)

    if kind == "infinite":
        prior_prec = np.full_like(phi, 1.0 / alpha)
        unit_prec = 1.0 / resid
        data_prec = n * unit_prec
        resolution = infinite_resolution(n, alpha, gamma, phi)
    else:
        prior_prec = 1.0 / (alpha + resid / m)
        unit_prec = 1.0 / ((1 - 1 / m) * resid)
        if n == m:
            data_prec = np.full_like(phi, np.inf)
            resolution = np.ones_like(phi)
        else:
            data_prec = (fpc(m, n) if n else 0.0) * n * unit_prec
            resolution = finite_resolution(n, m, alpha, gamma, phi)

    post_prec = prior_prec + data_prec
    if n == 0:
        post_mean = prior_mean.copy()
    elif np.isinf(data_prec).all():
        post_mean = wbar.copy()
    else:
        post_mean = (prior_prec * prior_mean + data_prec * wbar) / post_prec
    return VariableUpdate(g, kind, phi, wbar, prior_mean, prior_prec, unit_prec, data_prec,
                          post_mean, post_prec, np.asarray(resolution, dtype=float))


@dataclass(frozen=True)
class GroupComparison:
    """Which of two groups learns more about direction ``t``.

    ``larger`` is the group index with the higher resolution (``None`` on a
    tie); ``difference`` is ``lam_g - lam_h``; ``criterion`` is the closed-form
    comparison statistic whose sign matches ``difference``.
    """

    t: int
    g: int
    h: int
    larger: int | None
    difference: float
    criterion: float


def compare_groups(spec: ModelSpec, design: Design, t: int, g, h, kind: Kind = "infinite",
                   tie_tol: float = 1e-12) -> GroupComparison:
    _check_kind(kind)
    g, h = spec.group_index(g), spec.group_index(h)
    lam_g = variable_resolution(spec, g, design.sample_sizes[g], t, kind)
    lam_h = variable_resolution(spec, h, design.sample_sizes[h], t, kind)
    phi = canonical_variables(spec).phi[t]
    n_g, n_h = design.sample_sizes[g], design.sample_sizes[h]
    if kind == "infinite":
        if n_g == 0 or n_h == 0:
            criterion = lam_g - lam_h
        else:
            criterion = ((spec.gamma[h] / (n_h * spec.A[h, h])
                          - spec.gamma[g] / (n_g * spec.A[g, g])) / phi
                         - (1 / n_h - 1 / n_g))
    else:
        inf_g = variable_resolution(spec, g, n_g, t, "infinite")
        inf_h = variable_resolution(spec, h, n_h, t, "infinite")
        f_g, f_h = n_g / spec.pop_sizes[g], n_h / spec.pop_sizes[h]
        criterion = (1 - f_g) * inf_g - (1 - f_h) * inf_h + (f_g - f_h)
    diff = lam_g - lam_h
    larger = None if abs(diff) <= tie_tol else (g if diff > 0 else h)
    return GroupComparison(t, g, h, larger, float(diff), float(criterion))


def separable_ratio(spec: ModelSpec, rtol: float = 1e-12) -> float | None:
    """The common value of ``alpha_gg / gamma_g`` if it is the same for all groups."""
    ratios = np.diag(spec.A) / spec.gamma
    if np.all(np.abs(ratios - ratios[0]) <= rtol * abs(ratios[0])):
        return float(ratios[0])
    return None


def variable_partition(spec: ModelSpec, functional, cv: CanonicalVariables | None = None) -> np.ndarray:
    """Squared prior correlations of ``h' M(C_g)`` with each ``M(W_gt)``.

    ``functional`` has length ``v0``. The weights sum to one and do not
    depend on the group, the sample size or the kind.
    """
    cv = cv or canonical_variables(spec)
    h = np.asarray(functional, dtype=float)
    if h.shape != (spec.v0,):
        raise DesignError(f"functional must have length {spec.v0}")
    prior = float(h @ spec.C @ h)
    if prior <= 0:
        raise ZeroPriorVariance("functional has zero prior variance")
    return (h @ spec.C @ cv.U) ** 2 / prior
