"""Full canonical grid over (group direction s, variable direction t).

Entry ``(s, t)`` has coefficient vector ``kron(V_t[:, s], U[:, t])`` over the
group-major mean vector and resolution ``lam_st``. The entries are
prior-uncorrelated with unit prior variance under the mean covariance of the
matching kind, so any linear functional can be expanded in them.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass

import numpy as np

from .bayes_linear import _prior_variance, SecondOrderBeliefs
from .errors import DimensionMismatch, ModelError
from .groups import GroupStructure, group_structure, update_groups
from .model import Design, Kind, ModelSpec, ObservedSample, check_design, mean_structure
from .variables import CanonicalVariables, canonical_variables


@dataclass(frozen=True)
class GridEntry:
    s: int
    t: int
    coefficients: np.ndarray
    resolution: float


@dataclass(frozen=True)
class CanonicalGrid:
    """Entries sorted by descending resolution; ties keep ``(s, t)`` order."""

    spec: ModelSpec
    design: Design
    kind: str
    variables: CanonicalVariables
    groups: tuple[GroupStructure, ...]
    entries: tuple[GridEntry, ...]
    prior_mean: np.ndarray
    prior_var: np.ndarray

    @property
    def basis(self) -> np.ndarray:
        """Coefficient vectors as columns, in entry order."""
        return np.column_stack([e.coefficients for e in self.entries])

    @property
    def resolutions(self) -> np.ndarray:
        return np.array([e.resolution for e in self.entries])

    def entry(self, s: int, t: int) -> GridEntry:
        for e in self.entries:
            if e.s == s and e.t == t:
                return e
        raise KeyError((s, t))


def build_grid(spec: ModelSpec, design: Design, kind: Kind, method: str = "auto") -> CanonicalGrid:
    check_design(spec, design)
    cv = canonical_variables(spec)
    prior = mean_structure(spec, kind)
    structures = tuple(group_structure(spec, design, t, kind, cv, method) for t in range(spec.v0))
    raw = [GridEntry(s, t, np.kron(structures[t].V[:, s], cv.U[:, t]), float(structures[t].lam[s]))
           for s in range(spec.g0) for t in range(spec.v0)]
    order = np.argsort([-e.resolution for e in raw], kind="stable")
    return CanonicalGrid(spec, design, kind, cv, structures, tuple(raw[i] for i in order),
                         prior.mean, prior.var)


def grid_adjustment(grid: CanonicalGrid, observed: ObservedSample) -> tuple[np.ndarray, np.ndarray]:
    """Adjusted mean and variance of the whole group-major mean vector.

    Uses only the per-``t`` group updates: with ``H`` the grid basis and
    ``Sigma`` the prior variance, ``M = Sigma H Z`` where the ``Z`` are the
    grid directions, adjusted independently.
    """
    spec = grid.spec
    post = {}
    for t, structure in enumerate(grid.groups):
        upd = update_groups(spec, grid.design, t, grid.kind, observed, structure, grid.variables)
        for s in range(spec.g0):
            post[s, t] = upd.posterior_mean[s]
    z_mean = np.array([post[e.s, e.t] for e in grid.entries])
    back = grid.prior_var @ grid.basis
    mean = back @ z_mean
    var = (back * (1.0 - grid.resolutions)) @ back.T
    return mean, 0.5 * (var + var.T)


@dataclass(frozen=True)
class FunctionalReport:
    """Resolution of ``h' M`` and its split over grid entries.

    ``partition`` lists ``(s, t, weight, resolution)`` in grid order; the
    weights are squared prior correlations with the grid directions.
    """

    label: str
    coefficients: np.ndarray
    prior_mean: float
    prior_var: float
    resolution: float
    partition: tuple[tuple[int, int, float, float], ...]
    adjusted_mean: float | None = None
    adjusted_var: float | None = None

    def top(self, k: int = 5) -> list[tuple[int, int, float, float]]:
        """The ``k`` heaviest partition terms, ties in grid order."""
        order = np.argsort([-p[2] for p in self.partition], kind="stable")
        return [self.partition[i] for i in order[:k]]


def _as_vector(grid: CanonicalGrid, functional) -> np.ndarray:
    h = np.asarray(functional, dtype=float)
    n = grid.spec.g0 * grid.spec.v0
    if h.size != n:
        raise DimensionMismatch(f"functional has {h.size} coefficients, expected {n}")
    return h.reshape(-1)


def analyze_functional(grid: CanonicalGrid, functional, label: str = "",
                       observed: ObservedSample | None = None,
                       adjusted: tuple[np.ndarray, np.ndarray] | None = None) -> FunctionalReport:
    """Expand ``functional`` (``g0 x v0`` or flat) in the grid.

    Pass ``adjusted`` (from :func:`grid_adjustment`) to reuse one adjustment
    across several functionals.
    """
    h = _as_vector(grid, functional)
    dummy = SecondOrderBeliefs(grid.prior_mean, np.zeros(0), grid.prior_var, np.zeros((0, 0)),
                               np.zeros((h.size, 0)))
    prior_var = _prior_variance(dummy, h)
    cov = h @ grid.prior_var @ grid.basis
    weights = cov ** 2 / prior_var
    partition = tuple((e.s, e.t, float(w), e.resolution) for e, w in zip(grid.entries, weights))
    resolution = float(weights @ grid.resolutions)
    adj_mean = adj_var = None
    if adjusted is None and observed is not None:
        adjusted = grid_adjustment(grid, observed)
    if adjusted is not None:
        adj_mean = float(h @ adjusted[0])
        adj_var = max(float(h @ adjusted[1] @ h), 0.0)
    return FunctionalReport(label, h.reshape(grid.spec.g0, grid.spec.v0), float(h @ grid.prior_mean),
                            prior_var, resolution, partition, adj_mean, adj_var)


def expand_in_finite_basis(grid: CanonicalGrid, direction, t: int | None = None,
                           tol: float = 1e-12) -> list[tuple[int, int, float]]:
    """Coefficients of ``direction' M`` on the grid directions: ``Cov(direction' M, Z_st)``.

    ``direction`` is either a full ``g0*v0`` coefficient vector or, with ``t``
    given, a length-``g0`` vector over the ``t``-th canonical variable
    direction of each group. Terms below ``tol`` relative to the largest are
    dropped.
    """
    spec = grid.spec
    direction = np.asarray(direction, dtype=float)
    if t is not None:
        if direction.shape != (spec.g0,):
            raise DimensionMismatch(f"group direction must have length {spec.g0}")
        direction = np.kron(direction, grid.variables.U[:, t])
    h = _as_vector(grid, direction)
    coefs = h @ grid.prior_var @ grid.basis
    cut = tol * np.max(np.abs(coefs), initial=0.0)
    out = [(e.s, e.t, float(c)) for e, c in zip(grid.entries, coefs) if abs(c) > cut]
    return sorted(out, key=lambda x: (x[1], x[0]))


_OPS = {ast.Add: 1.0, ast.Sub: -1.0}


def parse_functional(expr: str, spec: ModelSpec) -> np.ndarray:
    """Parse a linear functional of the group means into ``g0 x v0`` coefficients.

    Atoms (groups and variables by 1-based position or by label):

    * ``M(g, v)``: mean of variable ``v`` in group ``g``;
    * ``Tot(g)``: sum over all variables in group ``g``;
    * ``Tot<S>(g)``: sum over section ``S`` declared in the model;
    * ``Tot``: average over groups of ``Tot(g)``; ``Tot<S>`` likewise.

    Combine with ``+``, ``-``, parentheses, and multiplication or division
    by numbers.
    """
    try:
        tree = ast.parse(expr.strip(), mode="eval")
    except SyntaxError as exc:
        raise ModelError(f"cannot parse functional {expr!r}: {exc.msg}") from None
    return _Evaluator(spec, expr).visit(tree.body)


class _Evaluator(ast.NodeVisitor):
    def __init__(self, spec: ModelSpec, expr: str):
        self.spec, self.expr = spec, expr

    def fail(self, msg: str):
        raise ModelError(f"functional {self.expr!r}: {msg}")

    def zeros(self) -> np.ndarray:
        return np.zeros((self.spec.g0, self.spec.v0))

    def generic_visit(self, node):
        self.fail(f"unsupported syntax {type(node).__name__}")

    def number(self, node) -> float | None:
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = self.number(node.operand)
            if inner is not None:
                return -inner if isinstance(node.op, ast.USub) else inner
        return None

    def index(self, node, labels, what) -> int:
        if isinstance(node, ast.Constant) and isinstance(node.value, int):
            if not 1 <= node.value <= len(labels):
                self.fail(f"{what} {node.value} out of range 1..{len(labels)}")
            return node.value - 1
        key = node.id if isinstance(node, ast.Name) else (
            node.value if isinstance(node, ast.Constant) and isinstance(node.value, str) else None)
        if key not in labels:
            self.fail(f"unknown {what} {key!r}")
        return labels.index(key)

    def members(self, name: str) -> tuple[int, ...]:
        if name == "Tot":
            return tuple(range(self.spec.v0))
        section = name[3:]
        if not name.startswith("Tot") or section not in self.spec.sections:
            self.fail(f"unknown atom {name!r}")
        return self.spec.sections[section]

    def visit_Name(self, node):
        out = self.zeros()
        out[:, list(self.members(node.id))] = 1.0 / self.spec.g0
        return out

    def visit_Call(self, node):
        if not isinstance(node.func, ast.Name) or node.keywords:
            self.fail("only M(g, v) and Tot-style calls are allowed")
        name, args = node.func.id, node.args
        out = self.zeros()
        if name == "M":
            if len(args) != 2:
                self.fail("M takes (group, variable)")
            g = self.index(args[0], self.spec.group_labels, "group")
            v = self.index(args[1], self.spec.variable_labels, "variable")
            out[g, v] = 1.0
            return out
        if len(args) != 1:
            self.fail(f"{name} takes one group argument")
        g = self.index(args[0], self.spec.group_labels, "group")
        out[g, list(self.members(name))] = 1.0
        return out

    def visit_UnaryOp(self, node):
        if isinstance(node.op, ast.USub):
            return -self.visit(node.operand)
        if isinstance(node.op, ast.UAdd):
            return self.visit(node.operand)
        self.fail("unsupported unary operator")

    def visit_BinOp(self, node):
        if type(node.op) in _OPS:
            return self.visit(node.left) + _OPS[type(node.op)] * self.visit(node.right)
        left, right = self.number(node.left), self.number(node.right)
        if isinstance(node.op, ast.Mult):
            if left is not None:
                return left * self.visit(node.right)
            if right is not None:
                return right * self.visit(node.left)
            self.fail("products must have a numeric factor")
        if isinstance(node.op, ast.Div):
            if right is None or right == 0:
                self.fail("division only by a nonzero number")
            return self.visit(node.left) / right
        self.fail("unsupported operator")

    def visit_Constant(self, node):
        self.fail("a bare number is not a linear functional of the means")
