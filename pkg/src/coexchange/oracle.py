"""Brute-force checks of the decomposed analysis.

:func:`direct_adjust` adjusts the mean vector by every raw observation using
the full joint covariance. :func:`check_sufficiency` evaluates, as matrix
equations, the factorisations that justify replacing raw data by sample
means, and sample means by per-direction sample means.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bayes_linear import AdjustedBeliefs, adjust
from .combined import build_grid, grid_adjustment
from .groups import group_data_var, group_prior_var
from .linalg import direct_sum, kron, psd_sqrt
from .model import (
    DEFAULT_CAP,
    Design,
    Kind,
    ModelSpec,
    ObservedSample,
    _sampled_rows,
    assemble_joint,
    check_design,
    sample_mean_structure,
)
from .variables import canonical_variables

SUFFICIENCY_TOL = 1e-8
IDENTITIES = ("raw_to_means", "per_direction_means", "direction_gain",
              "cross_direction", "unit_inverse", "direct_sum")


def direct_adjust(spec: ModelSpec, design: Design, kind: Kind, observed: ObservedSample | None = None,
                  cap: int = DEFAULT_CAP) -> AdjustedBeliefs:
    """Adjust the group-major mean vector by all raw observations at once."""
    beliefs = assemble_joint(spec, design, kind, cap)
    data = None if observed is None else observed.stacked_raw()
    return adjust(beliefs, data)


def _rel(lhs: np.ndarray, rhs: np.ndarray, scale: float | None = None) -> float:
    scale = np.max(np.abs(rhs), initial=0.0) if scale is None else scale
    err = np.max(np.abs(lhs - rhs), initial=0.0)
    return float(err / scale) if scale > 0 else float(err)


def sufficiency_residual(cov_bd, cov_bs, var_s, cov_sd) -> float:
    """Relative residual of ``Cov(B, S) Var(S)^-1 Cov(S, D) = Cov(B, D)``.

    When this holds ``S`` carries everything ``D`` says about ``B``.
    """
    lhs = np.asarray(cov_bs) @ np.linalg.solve(var_s, np.asarray(cov_sd))
    return _rel(lhs, np.asarray(cov_bd))


@dataclass(frozen=True)
class SufficiencyReport:
    kind: str
    residuals: dict

    @property
    def worst(self) -> float:
        return max(self.residuals.values())

    def passed(self, tol: float = SUFFICIENCY_TOL) -> bool:
        return all(r <= tol for r in self.residuals.values())


def _averaging_matrix(spec: ModelSpec, design: Design) -> np.ndarray:
    """Maps stacked raw individuals to stacked sample means of sampled groups."""
    blocks = [np.kron(np.full((1, design.sample_sizes[g]), 1.0 / design.sample_sizes[g]), np.eye(spec.v0))
              for g in design.sampled]
    return direct_sum(*blocks)


def check_sufficiency(spec: ModelSpec, design: Design, kind: Kind, perturb: float = 0.0,
                      cap: int = DEFAULT_CAP) -> SufficiencyReport:
    """Residuals of the six identities behind the decomposition.

    ``perturb`` is added to the first block of ``Cov(means, raw)`` before the
    first identity is evaluated; a nonzero value must make it fail.
    """
    check_design(spec, design)
    cv = canonical_variables(spec)
    U, phi = cv.U, cv.phi
    g0, v0 = spec.g0, spec.v0
    sampled = list(design.sampled)
    res = {}

    raw = assemble_joint(spec, design, kind, cap)
    means = sample_mean_structure(spec, design, kind)
    S = _averaging_matrix(spec, design)
    cov_m_raw = raw.cov_bd.copy()
    cov_m_raw[:v0, :v0] += perturb
    res["raw_to_means"] = sufficiency_residual(cov_m_raw, means.cov_bd, means.var_d, S @ raw.var_d)

    # per-direction quantities from the closed-form g0 x g0 matrices
    proj_all = [kron(np.eye(g0), U[:, t][None, :]) for t in range(v0)]
    proj_s = [kron(np.eye(len(sampled)), U[:, t][None, :]) for t in range(v0)]
    G = [group_prior_var(spec, phi[t], kind) for t in range(v0)]
    R = [group_data_var(spec, design, phi[t]) for t in range(v0)]
    per_dir, gain, cross = [], [], []
    full_gain = means.cov_bd @ np.linalg.inv(means.var_d)
    adjusted = means.var_b - full_gain @ means.cov_bd.T
    scale_b = np.max(np.abs(means.var_b))
    for t in range(v0):
        cov_w_wbar = G[t][:, sampled]
        per_dir.append(sufficiency_residual(proj_all[t] @ means.cov_bd, cov_w_wbar, R[t],
                                            proj_s[t] @ means.var_d))
        gain_t = cov_w_wbar @ np.linalg.solve(R[t], proj_s[t])
        gain.append(_rel(gain_t, proj_all[t] @ full_gain))
        for u in range(v0):
            if u != t:
                cross.append(_rel(proj_all[t] @ adjusted @ proj_all[u].T, 0.0, scale_b))
    res["per_direction_means"] = max(per_dir)
    res["direction_gain"] = max(gain)
    res["cross_direction"] = max(cross, default=0.0)
    res["unit_inverse"] = _rel(U @ U.T @ spec.C, np.eye(v0))

    # transform of M(W) given all sample means equals the direct sum of the per-t transforms
    P = np.vstack(proj_all)
    var_w = P @ means.var_b @ P.T
    cov_w = P @ means.cov_bd
    T = np.linalg.solve(var_w, cov_w @ np.linalg.solve(means.var_d, cov_w.T))
    blocks = direct_sum(*[np.linalg.solve(G[t], G[t][:, sampled] @ np.linalg.solve(R[t], G[t][sampled, :]))
                          for t in range(v0)])
    res["direct_sum"] = _rel(T, blocks, max(1.0, np.max(np.abs(blocks))))
    return SufficiencyReport(kind, res)


def random_spd(rng: np.random.Generator, dim: int, scale: float = 1.0) -> np.ndarray:
    G = rng.standard_normal((dim, dim))
    m = G.T @ G + dim * np.eye(dim)
    return scale * m / np.trace(m) * dim


def random_case(rng: np.random.Generator, kind: Kind, g0_max: int = 3, v0_max: int = 4,
                n_max: int = 6, m_max: int = 12, allow_unsampled: bool = True) -> tuple[ModelSpec, Design]:
    """A valid random model and design.

    ``gamma_g`` is drawn from ``[1.05, 3] * max_g(alpha_gg phi_1)`` so the
    residual variances are positive definite by construction.
    """
    g0 = int(rng.integers(1, g0_max + 1))
    v0 = int(rng.integers(1, v0_max + 1))
    D = random_spd(rng, v0)
    C = random_spd(rng, v0, scale=float(rng.uniform(0.2, 1.5)))
    A = random_spd(rng, g0, scale=float(rng.uniform(0.3, 1.5)))
    phi1 = float(np.max(np.linalg.eigvals(np.linalg.solve(D, C)).real))
    base = np.max(np.diag(A)) * phi1
    gamma = base * rng.uniform(1.05, 3.0, size=g0)
    mu = rng.normal(0.0, 2.0, size=(g0, v0))
    if kind == "finite":
        pops = tuple(int(m) for m in rng.integers(2, m_max + 1, size=g0))
        sizes = [int(rng.integers(0 if allow_unsampled else 1, min(n_max, m) + 1)) for m in pops]
    else:
        pops = None
        sizes = [int(rng.integers(0 if allow_unsampled else 1, n_max + 1)) for _ in range(g0)]
    if sum(sizes) == 0:
        sizes[int(rng.integers(g0))] = 1
    return ModelSpec(D, C, A, gamma, mu, pops), Design(tuple(sizes))


def synthetic_data(rng: np.random.Generator, spec: ModelSpec, design: Design, kind: Kind = "infinite",
                   cap: int = DEFAULT_CAP) -> ObservedSample:
    """Raw observations: prior mean plus noise with the model's raw covariance.

    The adjustment identities hold for any data vector; the distribution only
    keeps values on a sensible scale.
    """
    beliefs = assemble_joint(spec, design, kind, cap)
    x = beliefs.mean_d + psd_sqrt(beliefs.var_d) @ rng.standard_normal(beliefs.s)
    raw, k = [], 0
    for n in design.sample_sizes:
        raw.append(x[k:k + n * spec.v0].reshape(n, spec.v0))
        k += n * spec.v0
    return ObservedSample.from_raw(spec, design, raw)


def route_equivalence(spec: ModelSpec, design: Design, kind: Kind, observed: ObservedSample,
                      cap: int = DEFAULT_CAP) -> dict:
    """Discrepancies between the decomposed analysis and brute force.

    ``mean`` is on the prior-standard-deviation scale, ``var`` relative to the
    largest prior variance, ``resolutions`` absolute on sorted multisets, and
    ``raw_vs_means`` compares adjusting by raw data with adjusting by sample
    means through the generic engine.
    """
    direct = direct_adjust(spec, design, kind, observed, cap)
    grid = build_grid(spec, design, kind)
    mean, var = grid_adjustment(grid, observed)
    sd = np.sqrt(np.diag(grid.prior_var))
    by_means = adjust(sample_mean_structure(spec, design, kind), observed.sample_means(design))
    return {
        "mean": float(np.max(np.abs(mean - direct.adjusted_mean) / sd)),
        "var": _rel(var, direct.adjusted_var, float(np.max(np.abs(grid.prior_var)))),
        "resolutions": float(np.max(np.abs(np.sort(grid.resolutions)
                                           - np.sort(direct.canonical.resolutions)))),
        "raw_vs_means": max(float(np.max(np.abs(by_means.adjusted_mean - direct.adjusted_mean) / sd)),
                            _rel(by_means.adjusted_var, direct.adjusted_var,
                                 float(np.max(np.abs(grid.prior_var))))),
    }
