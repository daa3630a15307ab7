"""Group problem: for each canonical variable direction ``t``, adjust the
collection of group means ``(M(W_1t), ..., M(W_g0t))`` by the sample means
``(Wbar_1t, ..., Wbar_g0t)``.

In canonical-variable coordinates both sides are ``g0 x g0``:

* prior variance ``G_t = A`` (infinite) or ``A + phi_t^-1 M^-1 B - M^-1 A_hat``
  (finite), which is also the covariance between means and sample means;
* sample-mean variance ``R_t = A + phi_t^-1 N^-1 B - N^-1 A_hat``.

The canonical group directions solve ``G_t V = R_t V Lambda`` with
``V.T G_t V = I``. Several designs admit closed forms, dispatched by
:func:`group_structure`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bayes_linear import SecondOrderBeliefs, _explained, adjust, canonical_structure
from .errors import DesignError, MissingData, NotApplicable, NumericalConsistencyError
from .linalg import gen_eig, group_eigenspaces
from .model import Design, Kind, ModelSpec, ObservedSample, _check_kind, _require_finite, check_design
from .variables import CanonicalVariables, canonical_variables, fpc, separable_ratio

SHORTCUTS = ("none", "separable", "balanced", "equal_fraction", "separable_balanced", "engine")
RATIO_RTOL = 1e-12


def group_prior_var(spec: ModelSpec, phi: float, kind: Kind) -> np.ndarray:
    _check_kind(kind)
    if kind == "infinite":
        return spec.A.copy()
    _require_finite(spec)
    minv = spec.inv_pop()
    return spec.A + minv @ spec.B / phi - minv @ spec.A_hat


def group_data_var(spec: ModelSpec, design: Design, phi: float, groups=None) -> np.ndarray:
    """Variance of the sample means ``Wbar_gt`` for ``groups`` (default: all sampled)."""
    groups = design.sampled if groups is None else tuple(groups)
    n = np.array([design.sample_sizes[g] for g in groups], dtype=float)
    if np.any(n == 0):
        raise DesignError("sample-mean variance is undefined for an unsampled group")
    idx = np.ix_(groups, groups)
    resid = spec.gamma[list(groups)] / phi - np.diag(spec.A)[list(groups)]
    return spec.A[idx] + np.diag(resid / n)


@dataclass(frozen=True)
class GroupStructure:
    """Canonical group directions (columns of ``V``) and resolutions for one ``t``.

    ``V`` is normalised so that ``V.T @ prior_var @ V = I``. ``psi`` holds the
    n-free eigenvalues when a balanced shortcut produced the structure.
    ``scale`` holds, for the equal-fraction shortcut, the factors linking the
    finite directions to the infinite ones (``V_finite = V_infinite * scale``).
    """

    t: int
    kind: str
    phi: float
    V: np.ndarray
    lam: np.ndarray
    eigenspaces: tuple[tuple[int, ...], ...]
    shortcut: str
    prior_var: np.ndarray
    psi: np.ndarray | None = None
    scale: np.ndarray | None = None

    def projectors(self) -> list[np.ndarray]:
        return [self.V[:, list(i)] @ self.V[:, list(i)].T @ self.prior_var for i in self.eigenspaces]


def _structure(t, kind, phi, V, lam, shortcut, prior_var, psi=None, scale=None) -> GroupStructure:
    lam = np.asarray(lam, dtype=float)
    spaces = group_eigenspaces(lam)
    for idx in spaces:
        if len(idx) > 1:
            lam[list(idx)] = lam[list(idx)].mean()
    return GroupStructure(t, kind, float(phi), V, lam, spaces, shortcut, prior_var, psi, scale)


def _phi(spec, t, cv):
    cv = cv or canonical_variables(spec)
    return cv, float(cv.phi[t])


def _is_balanced(design: Design) -> bool:
    return len(set(design.sample_sizes)) == 1


def sampling_fraction(spec: ModelSpec, design: Design, rtol: float = RATIO_RTOL) -> float | None:
    """Common ``n_g / m_g`` if all groups share it, else ``None``."""
    if not spec.finite:
        return None
    fractions = np.array(design.sample_sizes) / np.array(spec.pop_sizes, dtype=float)
    if np.all(np.abs(fractions - fractions[0]) <= rtol * max(abs(fractions[0]), 1e-300)):
        return float(fractions[0])
    return None


def direct_structure(spec: ModelSpec, design: Design, t: int, kind: Kind,
                     cv: CanonicalVariables | None = None) -> GroupStructure:
    """Solve the defining pencil ``G_t V = R_t V Lambda`` directly."""
    check_design(spec, design)
    cv, phi = _phi(spec, t, cv)
    if len(design.sampled) < spec.g0:
        raise DesignError("direct pencil needs n_g >= 1 in every group; use the engine route")
    G = group_prior_var(spec, phi, kind)
    res = gen_eig(G, group_data_var(spec, design, phi))
    return _structure(t, kind, phi, res.directions, res.resolutions, "none", G)


def _engine_beliefs(spec, design, t, kind, cv) -> SecondOrderBeliefs:
    phi = float(cv.phi[t])
    G = group_prior_var(spec, phi, kind)
    sampled = list(design.sampled)
    prior_mean = spec.mu @ cv.U[:, t]
    return SecondOrderBeliefs(prior_mean, prior_mean[sampled], G,
                              group_data_var(spec, design, phi), G[:, sampled])


def engine_structure(spec: ModelSpec, design: Design, t: int, kind: Kind,
                     cv: CanonicalVariables | None = None) -> GroupStructure:
    """Canonical group structure from the generic engine on the sampled groups only.

    This is the route for designs with unsampled groups, where the pencil's
    ``N^-1`` is undefined.
    """
    check_design(spec, design)
    cv, phi = _phi(spec, t, cv)
    beliefs = _engine_beliefs(spec, design, t, kind, cv)
    can = canonical_structure(beliefs.var_b, _explained(beliefs))
    return _structure(t, kind, phi, can.directions, can.resolutions, "engine", beliefs.var_b)


@dataclass(frozen=True)
class SeparableSolution:
    """One pencil ``A V = (A + N^-1 B) V Psi`` serving every ``t`` when
    ``alpha_gg / gamma_g = a`` for all groups."""

    V: np.ndarray
    psi: np.ndarray
    a: float
    eigenspaces: tuple[tuple[int, ...], ...]

    def resolutions(self, phi) -> np.ndarray:
        """``psi phi / (psi phi + (1 - psi)(1 - a phi))`` for each ``s``."""
        psi = self.psi
        return psi * phi / (psi * phi + (1 - psi) * (1 - self.a * phi))


def separable_shortcut(spec: ModelSpec, design: Design) -> SeparableSolution:
    a = separable_ratio(spec, RATIO_RTOL)
    if a is None:
        raise NotApplicable("alpha_gg / gamma_g differs between groups")
    check_design(spec, design)
    if len(design.sampled) < spec.g0:
        raise NotApplicable("separable shortcut needs every group sampled")
    ninv = np.diag(1.0 / np.array(design.sample_sizes, dtype=float))
    res = gen_eig(spec.A, spec.A + ninv @ spec.B)
    return SeparableSolution(res.directions, res.resolutions, a, res.eigenspaces)


def separable_balanced_solution(spec: ModelSpec) -> SeparableSolution:
    """The single problem ``A V = (A + B) V Psi_(1)``; ``psi`` here is ``Psi_(1)``."""
    a = separable_ratio(spec, RATIO_RTOL)
    if a is None:
        raise NotApplicable("alpha_gg / gamma_g differs between groups")
    res = gen_eig(spec.A, spec.A + spec.B)
    return SeparableSolution(res.directions, res.resolutions, a, res.eigenspaces)


def balanced_psi(psi1, n):
    """Rescale one-observation eigenvalues to a balanced sample of size ``n``."""
    psi1 = np.asarray(psi1, dtype=float)
    return n * psi1 / ((n - 1) * psi1 + 1)


def separable_balanced_resolutions(psi1, a: float, phi: float, n: int) -> np.ndarray:
    psi1 = np.asarray(psi1, dtype=float)
    return n * psi1 * phi / (n * psi1 * phi + (1 - psi1) * (1 - a * phi))


def balanced_shortcut(spec: ModelSpec, n: int, t: int,
                      cv: CanonicalVariables | None = None) -> GroupStructure:
    """Infinite structure for ``N = n I`` from the n-free pencil
    ``A V = (A + phi_t^-1 B - A_hat) V Psi_t``."""
    if n < 1:
        raise NotApplicable("balanced shortcut needs n >= 1")
    cv, phi = _phi(spec, t, cv)
    res = gen_eig(spec.A, spec.A + spec.B / phi - spec.A_hat)
    lam = balanced_psi(res.resolutions, n)
    return _structure(t, "infinite", phi, res.directions, lam, "balanced", spec.A.copy(),
                      psi=res.resolutions)


def infinite_structure(spec: ModelSpec, design: Design, t: int,
                       cv: CanonicalVariables | None = None) -> GroupStructure:
    """Infinite-population structure using the cheapest applicable route."""
    check_design(spec, design)
    cv, phi = _phi(spec, t, cv)
    if len(design.sampled) < spec.g0:
        return engine_structure(spec, design, t, "infinite", cv)
    a = separable_ratio(spec, RATIO_RTOL)
    if _is_balanced(design):
        n = design.sample_sizes[0]
        if a is not None:
            sol = separable_balanced_solution(spec)
            lam = separable_balanced_resolutions(sol.psi, a, phi, n)
            return _structure(t, "infinite", phi, sol.V, lam, "separable_balanced", spec.A.copy(),
                              psi=balanced_psi(sol.psi, n))
        return balanced_shortcut(spec, n, t, cv)
    if a is not None:
        sol = separable_shortcut(spec, design)
        return _structure(t, "infinite", phi, sol.V, sol.resolutions(phi), "separable",
                          spec.A.copy(), psi=sol.psi)
    return direct_structure(spec, design, t, "infinite", cv)


def equal_fraction_shortcut(spec: ModelSpec, design: Design, t: int,
                            cv: CanonicalVariables | None = None) -> GroupStructure:
    """Finite structure when ``N = theta M``: infinite directions rescaled,
    resolutions ``lam + theta (1 - lam)``."""
    theta = sampling_fraction(spec, design)
    if theta is None:
        raise NotApplicable("sampling fractions differ between groups (or populations are infinite)")
    cv, phi = _phi(spec, t, cv)
    inf = infinite_structure(spec, design, t, cv)
    lam = inf.lam
    lam_fin = lam + theta * (1 - lam)
    scale = np.sqrt(lam / lam_fin)
    G = group_prior_var(spec, phi, "finite")
    return _structure(t, "finite", phi, inf.V * scale, lam_fin, "equal_fraction", G, scale=scale)


def group_structure(spec: ModelSpec, design: Design, t: int, kind: Kind,
                    cv: CanonicalVariables | None = None, method: str = "auto") -> GroupStructure:
    """Canonical group structure for direction ``t``.

    ``method="auto"`` tries, in order: separable and balanced, equal sampling
    fraction, balanced, separable, then the direct pencil. Designs with an
    unsampled group always go through the generic engine. ``"direct"`` and
    ``"engine"`` force those routes.
    """
    _check_kind(kind)
    check_design(spec, design)
    if kind == "finite":
        _require_finite(spec)
    cv = cv or canonical_variables(spec)
    if method == "engine" or len(design.sampled) < spec.g0:
        return engine_structure(spec, design, t, kind, cv)
    if method == "direct":
        return direct_structure(spec, design, t, kind, cv)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    if kind == "infinite":
        return infinite_structure(spec, design, t, cv)
    if sampling_fraction(spec, design) is not None:
        return equal_fraction_shortcut(spec, design, t, cv)
    return direct_structure(spec, design, t, kind, cv)


@dataclass(frozen=True)
class GroupUpdate:
    """Adjustment of the canonical group directions for one ``t``; arrays over ``s``.

    With unit prior variances the prior precision is 1 and the data precision
    is ``lam / (1 - lam)`` (infinite when ``lam == 1``).
    """

    structure: GroupStructure
    sample_mean: np.ndarray
    prior_mean: np.ndarray
    prior_precision: np.ndarray
    data_precision: np.ndarray
    posterior_mean: np.ndarray
    posterior_precision: np.ndarray

    @property
    def resolution(self) -> np.ndarray:
        return self.structure.lam

    @property
    def posterior_variance(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.where(np.isinf(self.posterior_precision), 0.0, 1.0 / self.posterior_precision)


def direction_sample_means(spec: ModelSpec, observed: ObservedSample, t: int,
                           cv: CanonicalVariables) -> np.ndarray:
    """``Wbar_gt`` for every group (NaN where unsampled)."""
    return observed.means @ cv.U[:, t]


def update_groups(spec: ModelSpec, design: Design, t: int, kind: Kind,
                  observed: ObservedSample | None, structure: GroupStructure | None = None,
                  cv: CanonicalVariables | None = None) -> GroupUpdate:
    """Posterior means and precisions of the canonical group directions."""
    cv = cv or canonical_variables(spec)
    structure = structure or group_structure(spec, design, t, kind, cv)
    V, lam = structure.V, structure.lam
    prior_mean = V.T @ (spec.mu @ cv.U[:, t])
    prior_prec = 1.0 / np.einsum("gs,gh,hs->s", V, structure.prior_var, V)
    with np.errstate(divide="ignore"):
        data_prec = np.where(lam >= 1.0, np.inf, lam / (1.0 - lam)) * prior_prec
    post_prec = prior_prec + data_prec

    sample_mean = np.full(spec.g0, np.nan)
    post_mean = np.full(spec.g0, np.nan)
    if observed is not None:
        for g in design.sampled:
            if np.isnan(observed.means[g]).any():
                raise MissingData(spec.group_labels[g])
        wbar = direction_sample_means(spec, observed, t, cv)
        if len(design.sampled) == spec.g0:
            sample_mean = V.T @ wbar
            post_mean = prior_mean + lam * (sample_mean - prior_mean)
        else:
            beliefs = _engine_beliefs(spec, design, t, kind, cv)
            adjusted = adjust(beliefs, wbar[list(design.sampled)]).adjusted_mean
            post_mean = V.T @ adjusted
    return GroupUpdate(structure, sample_mean, prior_mean, prior_prec, data_prec, post_mean, post_prec)


@dataclass(frozen=True)
class BalancedFiniteUpdate:
    """Closed-form finite update for ``N = n I``, ``M = m I``.

    Directions ``V`` come from the n-free pencil with ``V.T A V = I``.
    ``unit_precision`` is the precision of one individual's direction given
    the finite population means; ``correction`` is the fpc ``a(m, n)``.
    """

    V: np.ndarray
    psi: np.ndarray
    lam_infinite: np.ndarray
    lam: np.ndarray
    prior_precision: np.ndarray
    unit_precision: np.ndarray
    correction: float
    posterior_precision: np.ndarray
    prior_mean: np.ndarray
    sample_mean: np.ndarray
    posterior_mean: np.ndarray


def balanced_finite_shortcut(spec: ModelSpec, n: int, m: int, t: int,
                             observed: ObservedSample | None = None,
                             cv: CanonicalVariables | None = None) -> BalancedFiniteUpdate:
    if any(p != m for p in spec.pop_sizes):
        raise NotApplicable(f"population sizes {spec.pop_sizes} are not all {m}")
    if not 1 <= n <= m:
        raise NotApplicable(f"need 1 <= n <= m, got n={n}, m={m}")
    cv = cv or canonical_variables(spec)
    base = balanced_shortcut(spec, n, t, cv)
    V, psi, lam_inf = base.V, base.psi, base.lam
    lam = lam_inf + (n / m) * (1 - lam_inf)
    u = 1.0 / psi - 1.0  # V.T (phi^-1 B - A_hat) V = Psi^-1 - I
    prior_prec = 1.0 / (1.0 + u / m)
    unit_prec = 1.0 / ((1.0 - 1.0 / m) * u)
    if n == m:
        a, post_prec = math.inf, np.full_like(psi, np.inf)
    else:
        a = fpc(m, n)
        post_prec = prior_prec + a * n * unit_prec
    prior_mean = V.T @ (spec.mu @ cv.U[:, t])
    sample_mean = np.full(spec.g0, np.nan)
    post_mean = np.full(spec.g0, np.nan)
    if observed is not None:
        sample_mean = V.T @ direction_sample_means(spec, observed, t, cv)
        if n == m:
            post_mean = sample_mean.copy()
        else:
            post_mean = (prior_prec * prior_mean + a * n * unit_prec * sample_mean) / post_prec
    return BalancedFiniteUpdate(V, psi, lam_inf, lam, prior_prec, unit_prec, a, post_prec,
                                prior_mean, sample_mean, post_mean)


def resolved_uncertainty_t(spec: ModelSpec, design: Design, t: int, kind: Kind,
                           cv: CanonicalVariables | None = None) -> float:
    """Sum of the ``t``-th canonical group resolutions, checked against the
    trace of the resolution transform."""
    cv = cv or canonical_variables(spec)
    structure = group_structure(spec, design, t, kind, cv)
    total = float(structure.lam.sum())
    if len(design.sampled) == spec.g0:
        phi = float(cv.phi[t])
        trace = float(np.trace(np.linalg.solve(group_data_var(spec, design, phi),
                                               group_prior_var(spec, phi, kind))))
        if abs(trace - total) > 1e-8 * max(1.0, total):
            raise NumericalConsistencyError(f"resolved uncertainty {total} != trace {trace}")
    return total


def _group_exchangeable(spec: ModelSpec, tol: float = 1e-12) -> bool:
    A, g0 = spec.A, spec.g0
    off = A[~np.eye(g0, dtype=bool)]
    scale = np.max(np.abs(A))
    return (np.ptp(np.diag(A)) <= tol * scale and (off.size == 0 or np.ptp(off) <= tol * scale)
            and np.ptp(spec.gamma) <= tol * np.max(spec.gamma))


def average_fraction_identity(spec: ModelSpec, design: Design, t: int,
                              cv: CanonicalVariables | None = None) -> float:
    """``sum(lam) + mean_g(n / m_g) * sum(1 - lam)`` with infinite ``lam``.

    Equals the finite resolved uncertainty for balanced designs when groups
    are exchangeable (``A`` with equal diagonal and equal off-diagonal entries,
    equal ``gamma``).
    """
    if not _is_balanced(design) or not _group_exchangeable(spec):
        raise NotApplicable("identity needs N = n I and group-exchangeable A, B")
    _require_finite(spec)
    inf = infinite_structure(spec, design, t, cv)
    n = design.sample_sizes[0]
    avg_fraction = float(np.mean([n / m for m in spec.pop_sizes]))
    return float(inf.lam.sum() + avg_fraction * (1 - inf.lam).sum())
