"""Co-exchangeable groups with separable covariance.

Individual ``i`` of group ``g`` carries a vector of ``v0`` measurements with

* ``Var(C_gi) = gamma_g D``,
* ``Cov(C_gi, C_hj) = alpha_gh C`` for every other pair of individuals.

Vectors over all groups and variables use group-major ordering: component
``(g, v)`` sits at index ``g * v0 + v``. Group and variable indices in the
Python API are 0-based.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, NamedTuple

import numpy as np

from .bayes_linear import SecondOrderBeliefs
from .errors import (
    CapExceeded,
    DesignError,
    InfinitePopulation,
    MissingData,
    ModelError,
)
from .linalg import as_symmetric, check_spd, gen_eig, kron

Kind = Literal["infinite", "finite"]
KINDS = ("infinite", "finite")
DEFAULT_CAP = 2000


def _check_kind(kind: str) -> None:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")


@dataclass(frozen=True)
class ModelSpec:
    """Full prior specification.

    ``pop_sizes`` entries are integers >= 2 or ``math.inf``. ``sections`` maps a
    name to a tuple of variable indices; it only feeds the functional
    mini-language (``TotA(g)`` and friends).
    """

    D: np.ndarray
    C: np.ndarray
    A: np.ndarray
    gamma: np.ndarray
    mu: np.ndarray
    pop_sizes: tuple = None
    group_labels: tuple[str, ...] = None
    variable_labels: tuple[str, ...] = None
    sections: dict = field(default_factory=dict)

    def __post_init__(self):
        try:
            D = as_symmetric(self.D, "D")
            C = as_symmetric(self.C, "C")
            A = as_symmetric(self.A, "A")
        except ValueError as exc:
            raise ModelError(str(exc)) from exc
        v0, g0 = D.shape[0], A.shape[0]
        if C.shape != (v0, v0):
            raise ModelError(f"C must be {v0}x{v0}, got {C.shape}")
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if gamma.shape != (g0,):
            raise ModelError(f"gamma must have length {g0}")
        mu = np.zeros((g0, v0)) if self.mu is None else np.asarray(self.mu, dtype=float)
        if mu.shape != (g0, v0):
            raise ModelError(f"mu must be {g0}x{v0}, got {mu.shape}")
        pops = (math.inf,) * g0 if self.pop_sizes is None else tuple(self.pop_sizes)
        if len(pops) != g0:
            raise ModelError(f"pop_sizes must have length {g0}")
        pops = tuple(math.inf if math.isinf(float(m)) else int(m) for m in pops)
        groups = tuple(self.group_labels or (f"g{k + 1}" for k in range(g0)))
        variables = tuple(self.variable_labels or (f"v{k + 1}" for k in range(v0)))
        if len(groups) != g0 or len(set(groups)) != g0:
            raise ModelError("group labels must be unique, one per group")
        if len(variables) != v0 or len(set(variables)) != v0:
            raise ModelError("variable labels must be unique, one per variable")
        sections = {}
        for name, members in (self.sections or {}).items():
            idx = tuple(variables.index(m) if isinstance(m, str) else int(m) for m in members)
            if any(not 0 <= i < v0 for i in idx):
                raise ModelError(f"section {name!r} refers to an unknown variable")
            sections[str(name)] = idx
        for name, value in (("D", D), ("C", C), ("A", A), ("gamma", gamma), ("mu", mu),
                            ("pop_sizes", pops), ("group_labels", groups),
                            ("variable_labels", variables), ("sections", sections)):
            object.__setattr__(self, name, value)

    @property
    def g0(self) -> int:
        return self.A.shape[0]

    @property
    def v0(self) -> int:
        return self.D.shape[0]

    @property
    def A_hat(self) -> np.ndarray:
        return np.diag(np.diag(self.A))

    @property
    def B(self) -> np.ndarray:
        return np.diag(self.gamma)

    @property
    def finite(self) -> bool:
        """True when every group has a finite population."""
        return all(not math.isinf(m) for m in self.pop_sizes)

    def inv_pop(self) -> np.ndarray:
        """``M^-1`` with ``1/inf = 0``."""
        return np.diag([0.0 if math.isinf(m) else 1.0 / m for m in self.pop_sizes])

    def group_index(self, g) -> int:
        return _resolve(g, self.group_labels, "group")

    def variable_index(self, v) -> int:
        return _resolve(v, self.variable_labels, "variable")

    def with_pop_sizes(self, pop_sizes) -> "ModelSpec":
        return ModelSpec(self.D, self.C, self.A, self.gamma, self.mu, tuple(pop_sizes),
                         self.group_labels, self.variable_labels, self.sections)


def _resolve(key, labels, what) -> int:
    if isinstance(key, str):
        if key not in labels:
            raise IndexError(f"unknown {what} {key!r}")
        return labels.index(key)
    k = int(key)
    if not 0 <= k < len(labels):
        raise IndexError(f"{what} index {k} out of range 0..{len(labels) - 1}")
    return k


def top_variable_resolution(spec: ModelSpec) -> float:
    return float(gen_eig(spec.C, spec.D).resolutions[0])


def validate(spec: ModelSpec) -> list[str]:
    """One message per violated model requirement; empty when the model is usable."""
    findings = []
    spd = {}
    for name in ("D", "C", "A"):
        spd[name] = check_spd(getattr(spec, name))
        if not spd[name]:
            findings.append(f"{name} is not positive definite")
    for g, label in enumerate(spec.group_labels):
        if not spec.gamma[g] > 0:
            findings.append(f"gamma must be positive (group {label})")
    for g, label in enumerate(spec.group_labels):
        m = spec.pop_sizes[g]
        if not math.isinf(m) and m < 2:
            findings.append(f"population size must be at least 2 (group {label})")
    if spd["D"] and spd["C"]:
        phi1 = top_variable_resolution(spec)
        for g, label in enumerate(spec.group_labels):
            gamma, alpha = spec.gamma[g], spec.A[g, g]
            if gamma > 0 and not gamma - alpha * phi1 > 1e-10 * gamma:
                findings.append(
                    f"residual variance not positive definite (group {label}: "
                    f"gamma - alpha*phi1 = {gamma - alpha * phi1:.6g})")
    return findings


def require_valid(spec: ModelSpec) -> None:
    findings = validate(spec)
    if findings:
        raise ModelError("; ".join(findings))


@dataclass(frozen=True)
class Design:
    """Per-group sample sizes (the diagonal of ``N``)."""

    sample_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sample_sizes)
        if any(n < 0 for n in sizes):
            raise DesignError("sample sizes must be nonnegative")
        object.__setattr__(self, "sample_sizes", sizes)

    @classmethod
    def balanced(cls, n: int, g0: int) -> "Design":
        return cls((n,) * g0)

    @property
    def sampled(self) -> tuple[int, ...]:
        """Indices of groups with at least one sampled individual."""
        return tuple(g for g, n in enumerate(self.sample_sizes) if n > 0)

    @property
    def total(self) -> int:
        return sum(self.sample_sizes)


def check_design(spec: ModelSpec, design: Design) -> None:
    if len(design.sample_sizes) != spec.g0:
        raise DesignError(f"design has {len(design.sample_sizes)} groups, model has {spec.g0}")
    if design.total < 1:
        raise DesignError("at least one group must be sampled")
    for g, (n, m) in enumerate(zip(design.sample_sizes, spec.pop_sizes)):
        if n > m:
            raise DesignError(
                f"sample size {n} exceeds population size {m} (group {spec.group_labels[g]})")


def _require_finite(spec: ModelSpec) -> None:
    if not spec.finite:
        bad = [l for l, m in zip(spec.group_labels, spec.pop_sizes) if math.isinf(m)]
        raise InfinitePopulation(f"finite analysis needs finite population sizes; infinite: {bad}")


def pairwise_cov(spec: ModelSpec, g, i: int, h, j: int) -> np.ndarray:
    """Covariance between individual ``i`` of group ``g`` and ``j`` of ``h``."""
    g, h = spec.group_index(g), spec.group_index(h)
    for k, m in ((i, spec.pop_sizes[g]), (j, spec.pop_sizes[h])):
        if k < 0 or k >= m:
            raise IndexError(f"individual index {k} out of range")
    if g == h and i == j:
        return spec.gamma[g] * spec.D
    return spec.A[g, h] * spec.C


class Moments(NamedTuple):
    mean: np.ndarray
    var: np.ndarray


def group_residual(spec: ModelSpec) -> np.ndarray:
    """``M^-1 B (x) D - M^-1 A_hat (x) C``: the finite-population inflation."""
    minv = spec.inv_pop()
    return kron(minv @ spec.B, spec.D) - kron(minv @ spec.A_hat, spec.C)


def mean_structure(spec: ModelSpec, kind: Kind) -> Moments:
    """Prior mean and variance of the stacked group mean vectors.

    ``"infinite"`` gives the limiting means ``M(C)`` with variance ``A (x) C``;
    ``"finite"`` gives the population averages with the extra
    ``M^-1 B (x) D - M^-1 A_hat (x) C`` term.
    """
    _check_kind(kind)
    var = kron(spec.A, spec.C)
    if kind == "finite":
        _require_finite(spec)
        var = var + group_residual(spec)
    return Moments(spec.mu.reshape(-1).copy(), 0.5 * (var + var.T))


def _sampled_rows(spec: ModelSpec, groups) -> np.ndarray:
    v0 = spec.v0
    return np.concatenate([np.arange(g * v0, (g + 1) * v0) for g in groups]) if groups else np.zeros(0, int)


def sample_mean_var(spec: ModelSpec, design: Design) -> np.ndarray:
    """Variance of the sample means of the sampled groups (group-major)."""
    sampled = design.sampled
    ninv = np.diag([1.0 / design.sample_sizes[g] for g in sampled])
    A = spec.A[np.ix_(sampled, sampled)]
    B = np.diag(spec.gamma[list(sampled)])
    var = kron(A, spec.C) + kron(ninv @ B, spec.D) - kron(ninv @ np.diag(np.diag(A)), spec.C)
    return 0.5 * (var + var.T)


def sample_mean_structure(spec: ModelSpec, design: Design, kind: Kind) -> SecondOrderBeliefs:
    """Joint beliefs of (group means of the chosen kind; observed sample means).

    The data block holds only groups with ``n_g >= 1``, in group order.
    """
    check_design(spec, design)
    prior = mean_structure(spec, kind)
    rows = _sampled_rows(spec, design.sampled)
    cov = kron(spec.A, spec.C) if kind == "infinite" else prior.var
    return SecondOrderBeliefs(prior.mean, prior.mean[rows], prior.var,
                              sample_mean_var(spec, design), cov[:, rows])


def assemble_joint(spec: ModelSpec, design: Design, kind: Kind, cap: int = DEFAULT_CAP) -> SecondOrderBeliefs:
    """Joint beliefs of (group means; every sampled individual).

    Individuals are stacked group by group, then by individual, then by
    variable. Built block by block from :func:`pairwise_cov`; no sufficiency
    reduction is used, which is the point of this routine.
    """
    check_design(spec, design)
    _check_kind(kind)
    v0 = spec.v0
    dim = design.total * v0
    if dim > cap:
        raise CapExceeded(f"raw data dimension {dim} exceeds cap {cap}")
    prior = mean_structure(spec, kind)
    who = [(g, i) for g in range(spec.g0) for i in range(design.sample_sizes[g])]
    var_d = np.empty((dim, dim))
    for a, (g, i) in enumerate(who):
        for b, (h, j) in enumerate(who):
            var_d[a * v0:(a + 1) * v0, b * v0:(b + 1) * v0] = pairwise_cov(spec, g, i, h, j)
    minv = np.diag(spec.inv_pop())
    cov = np.empty((spec.g0 * v0, dim))
    for g in range(spec.g0):
        for b, (h, _) in enumerate(who):
            block = spec.A[g, h] * spec.C
            if kind == "finite" and g == h:
                block = block + minv[g] * (spec.gamma[g] * spec.D - spec.A[g, g] * spec.C)
            cov[g * v0:(g + 1) * v0, b * v0:(b + 1) * v0] = block
    mean_d = np.concatenate([spec.mu[g] for g, _ in who]) if who else np.zeros(0)
    return SecondOrderBeliefs(prior.mean, mean_d, prior.var, var_d, cov)


@dataclass(frozen=True)
class ObservedSample:
    """Observations for one design.

    ``means`` is ``g0 x v0`` with NaN rows for unsampled groups. ``raw`` keeps
    the individual-level rows when they were supplied.
    """

    means: np.ndarray
    raw: tuple | None = None

    @classmethod
    def from_raw(cls, spec: ModelSpec, design: Design, raw) -> "ObservedSample":
        """``raw[g]`` is an ``n_g x v0`` array (ignored/None for unsampled groups)."""
        check_design(spec, design)
        if len(raw) != spec.g0:
            raise ModelError(f"raw data must list {spec.g0} groups")
        means = np.full((spec.g0, spec.v0), np.nan)
        rows = []
        for g, n in enumerate(design.sample_sizes):
            if n == 0:
                rows.append(np.zeros((0, spec.v0)))
                continue
            if raw[g] is None:
                raise MissingData(spec.group_labels[g])
            x = np.asarray(raw[g], dtype=float).reshape(-1, spec.v0)
            if x.shape[0] != n:
                raise DesignError(
                    f"group {spec.group_labels[g]} has {x.shape[0]} rows, design says {n}")
            means[g] = x.mean(axis=0)
            rows.append(x)
        return cls(means, tuple(rows))

    @classmethod
    def from_means(cls, spec: ModelSpec, design: Design, means) -> "ObservedSample":
        """``means`` maps group index/label to a length-``v0`` vector, or is a ``g0 x v0`` array."""
        check_design(spec, design)
        table = np.full((spec.g0, spec.v0), np.nan)
        if isinstance(means, dict):
            for key, row in means.items():
                table[spec.group_index(key)] = np.asarray(row, dtype=float)
        else:
            table[:] = np.asarray(means, dtype=float).reshape(spec.g0, spec.v0)
        for g in design.sampled:
            if np.isnan(table[g]).any():
                raise MissingData(spec.group_labels[g])
        return cls(table)

    def sample_means(self, design: Design) -> np.ndarray:
        """Stacked means of the sampled groups, matching :func:`sample_mean_structure`."""
        for g in design.sampled:
            if np.isnan(self.means[g]).any():
                raise MissingData(g)
        return np.concatenate([self.means[g] for g in design.sampled])

    def stacked_raw(self) -> np.ndarray:
        """All individuals in the :func:`assemble_joint` ordering."""
        if self.raw is None:
            raise ValueError("raw observations were not supplied")
        return np.concatenate([x.reshape(-1) for x in self.raw])
