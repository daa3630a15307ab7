"""Command-line interface.

Reports are CSV on stdout (or ``--out``). Canonical indices ``s`` and ``t``
are 1-based here, matching the usual way of writing them. Exit status is 0
on success, 2 for bad input or an invalid model/design, and 1 when a
numerical consistency check fails.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys

import numpy as np

from .combined import analyze_functional, build_grid, grid_adjustment, parse_functional
from .errors import NumericalConsistencyError
from .groups import group_structure, resolved_uncertainty_t
from .io import load_model, parse_design, read_data
from .model import Design, check_design, validate
from .oracle import SUFFICIENCY_TOL, check_sufficiency, random_case, route_equivalence, synthetic_data
from .variables import canonical_variables, variable_resolution


def fmt(x) -> str:
    """6 significant digits; never ``-0``."""
    if isinstance(x, str):
        return x
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    s = format(float(x), ".6g")
    return "0" if s in ("-0", "0") else s


class Table:
    def __init__(self, header):
        self.rows = [list(header)]

    def add(self, *values):
        self.rows.append([fmt(v) for v in values])

    def render(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self.rows)
        return buf.getvalue()


def _kind(args) -> str:
    return "finite" if args.finite else "infinite"


def _t_values(arg: str, v0: int) -> list[int]:
    if arg == "all":
        return list(range(v0))
    try:
        t = int(arg)
    except ValueError:
        raise ValueError(f"--t must be 'all' or an integer, got {arg!r}") from None
    if not 1 <= t <= v0:
        raise ValueError(f"--t must be between 1 and {v0}, got {t}")
    return [t - 1]


def cmd_validate(args, spec) -> tuple[str, int]:
    findings = validate(spec)
    return ("".join(f"{f}\n" for f in findings) or "ok\n"), (2 if findings else 0)


def cmd_variables(args, spec) -> tuple[str, int]:
    cv = canonical_variables(spec)
    table = Table(["t", "phi", *spec.variable_labels])
    for t in range(spec.v0):
        table.add(t + 1, cv.phi[t], *cv.U[:, t])
    out = table.render()
    if args.design:
        design = parse_design(args.design, spec)
        check_design(spec, design)
        res = Table(["group", "t", "n", "kind", "resolution"])
        for g in range(spec.g0):
            n = design.sample_sizes[g]
            for t in range(spec.v0):
                res.add(spec.group_labels[g], t + 1, n, _kind(args),
                        variable_resolution(spec, g, n, t, _kind(args)))
        out += "\n" + res.render()
    return out, 0


def cmd_groups(args, spec) -> tuple[str, int]:
    design = parse_design(args.design, spec)
    kind = _kind(args)
    cv = canonical_variables(spec)
    table = Table(["s", "t", "kind", "shortcut", *spec.group_labels, "lambda", "scale"])
    totals = Table(["t", "phi", "resolved_uncertainty"])
    for t in _t_values(args.t, spec.v0):
        gs = group_structure(spec, design, t, kind, cv)
        for s in range(spec.g0):
            scale = None if gs.scale is None else gs.scale[s]
            table.add(s + 1, t + 1, kind, gs.shortcut, *gs.V[:, s], gs.lam[s], scale)
        totals.add(t + 1, cv.phi[t], resolved_uncertainty_t(spec, design, t, kind, cv))
    return table.render() + "\n" + totals.render(), 0


def cmd_grid(args, spec) -> tuple[str, int]:
    design = parse_design(args.design, spec)
    grid = build_grid(spec, design, _kind(args))
    cols = [f"{g}:{v}" for g in spec.group_labels for v in spec.variable_labels]
    table = Table(["rank", "s", "t", "resolution", *cols])
    for k, e in enumerate(grid.entries, start=1):
        table.add(k, e.s + 1, e.t + 1, e.resolution, *e.coefficients)
    return table.render(), 0


def _functionals(args, spec):
    if not args.functional:
        raise ValueError("at least one --functional is required")
    return [(expr, parse_functional(expr, spec)) for expr in args.functional]


def cmd_adjust(args, spec) -> tuple[str, int]:
    design = parse_design(args.design, spec) if args.design else None
    observed, design = read_data(args.data, spec, design)
    grid = build_grid(spec, design, _kind(args))
    adjusted = grid_adjustment(grid, observed)
    table = Table(["label", "prior_mean", "prior_var", "resolution",
                   *[f"w{k}" for k in range(1, 6)], "adjusted_mean", "adjusted_var"])
    for expr, h in _functionals(args, spec):
        rep = analyze_functional(grid, h, expr, adjusted=adjusted)
        top = [f"{s + 1}:{t + 1}={fmt(w)}" for s, t, w, _ in rep.top(5)]
        table.add(expr, rep.prior_mean, rep.prior_var, rep.resolution,
                  *(top + [""] * (5 - len(top))), rep.adjusted_mean, rep.adjusted_var)
    return table.render(), 0


def cmd_sweep(args, spec) -> tuple[str, int]:
    try:
        lo, hi = (int(x) for x in args.n_range.split(":"))
    except ValueError:
        raise ValueError(f"--n-range must look like a:b, got {args.n_range!r}") from None
    if lo < 1 or hi < lo:
        raise ValueError(f"--n-range needs 1 <= a <= b, got {args.n_range!r}")
    funcs = _functionals(args, spec)
    table = Table(["n", *[expr for expr, _ in funcs]])
    for n in range(lo, hi + 1):
        grid = build_grid(spec, Design.balanced(n, spec.g0), _kind(args))
        table.add(n, *[analyze_functional(grid, h).resolution for _, h in funcs])
    return table.render(), 0


def cmd_oracle_check(args, spec) -> tuple[str, int]:
    """Random designs (and data) for this model, checked against brute force."""
    rng = np.random.default_rng(args.seed)
    kinds = ["infinite", "finite"] if spec.finite else ["infinite"]
    names = ["raw_to_means", "per_direction_means", "direction_gain", "cross_direction",
             "unit_inverse", "direct_sum", "mean", "var", "resolutions", "raw_vs_means"]
    table = Table(["case", "kind", "design", *names, "pass"])
    failed = 0
    for case in range(1, args.cases + 1):
        kind = kinds[(case - 1) % len(kinds)]
        caps = [min(6, m) for m in spec.pop_sizes] if kind == "finite" else [6] * spec.g0
        sizes = [int(rng.integers(0, c + 1)) for c in caps]
        if sum(sizes) == 0:
            sizes[0] = 1
        design = Design(tuple(sizes))
        model = spec if kind == "finite" else spec.with_pop_sizes([float("inf")] * spec.g0)
        resid = check_sufficiency(model, design, kind).residuals
        resid.update(route_equivalence(model, design, kind, synthetic_data(rng, model, design, kind)))
        ok = all(resid[k] <= SUFFICIENCY_TOL for k in names)
        failed += not ok
        table.add(case, kind, " ".join(map(str, sizes)), *[resid[k] for k in names],
                  "yes" if ok else "no")
    return table.render(), 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coexchange", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, design=None, finite=True):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("model", help="model JSON file")
        sp.add_argument("--out", help="write the report here instead of stdout")
        if finite:
            sp.add_argument("--finite", action="store_true", help="finite-population analysis")
        if design is not None:
            sp.add_argument("--design", required=design, help="sample sizes n1,n2,... (or one n for all)")
        sp.set_defaults(func=func)
        return sp

    add("validate", cmd_validate, "check the model assumptions", finite=False)
    add("variables", cmd_variables, "canonical variable directions", design=False)
    g = add("groups", cmd_groups, "canonical group directions per t", design=True)
    g.add_argument("--t", default="all", help="'all' or a 1-based direction index")
    add("grid", cmd_grid, "full canonical grid", design=True)
    a = add("adjust", cmd_adjust, "adjust declared functionals by data", design=False)
    a.add_argument("--data", required=True, help="data CSV (raw or means)")
    a.add_argument("--functional", action="append", help="linear functional, e.g. 'Tot(1) - Tot(2)'")
    s = add("sweep", cmd_sweep, "resolution against balanced sample size")
    s.add_argument("--n-range", required=True, help="a:b, inclusive")
    s.add_argument("--functional", action="append")
    o = add("oracle-check", cmd_oracle_check, "brute-force verification", finite=False)
    o.add_argument("--cases", type=int, default=10)
    o.add_argument("--seed", type=int, default=0)
    return p


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        spec = load_model(args.model)
        text, code = args.func(args, spec)
    except NumericalConsistencyError as exc:
        print(f"error: numerical consistency check failed: {exc}", file=stderr)
        return 1
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=stderr)
        return 2
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    return code


def main() -> None:
    sys.exit(run())
