"""Model JSON and data CSV.

Model file::

    {"groups": [{"label": "m1", "gamma": 1.0, "population_size": 51, "mu": [...]}, ...],
     "alpha": [[...]], "D": [[...]], "C": [[...]],
     "variables": ["q1", ...],
     "sections": {"A": ["q1", "q2"]}}          # optional

``population_size`` is an integer >= 2 or ``"inf"``. Data files are CSV with
header ``group,individual,<variables...>`` (raw) or ``group,<variables...>``
(one row of means per group).
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import DesignError, ModelError
from .model import Design, ModelSpec, ObservedSample


def _population(value, label):
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinite"):
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
        raise ModelError(f"groups[{label}].population_size must be an integer or \"inf\", got {value!r}")
    if value < 2:
        raise ModelError(f"groups[{label}].population_size must be at least 2, got {value}")
    return int(value)


def model_from_dict(doc: dict) -> ModelSpec:
    for key in ("groups", "alpha", "D", "C"):
        if key not in doc:
            raise ModelError(f"model is missing key {key!r}")
    groups = doc["groups"]
    if not isinstance(groups, list) or not groups:
        raise ModelError("groups must be a nonempty list")
    labels, gamma, pops, mu = [], [], [], []
    for k, grp in enumerate(groups):
        label = str(grp.get("label", f"g{k + 1}"))
        for key in ("gamma", "mu"):
            if key not in grp:
                raise ModelError(f"groups[{label}] is missing {key!r}")
        labels.append(label)
        gamma.append(float(grp["gamma"]))
        pops.append(_population(grp.get("population_size", "inf"), label))
        mu.append([float(x) for x in grp["mu"]])
    try:
        D = np.array(doc["D"], dtype=float)
        C = np.array(doc["C"], dtype=float)
        A = np.array(doc["alpha"], dtype=float)
        mu_arr = np.array(mu, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"matrices must be rectangular numeric arrays: {exc}") from None
    variables = doc.get("variables")
    return ModelSpec(D, C, A, np.array(gamma), mu_arr, tuple(pops), tuple(labels),
                     tuple(variables) if variables else None, doc.get("sections") or {})


def load_model(path) -> ModelSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return model_from_dict(doc)


def model_to_dict(spec: ModelSpec) -> dict:
    doc = {
        "groups": [{"label": lab, "gamma": float(gam),
                    "population_size": "inf" if math.isinf(m) else int(m),
                    "mu": [float(x) for x in row]}
                   for lab, gam, m, row in zip(spec.group_labels, spec.gamma, spec.pop_sizes, spec.mu)],
        "alpha": spec.A.tolist(),
        "D": spec.D.tolist(),
        "C": spec.C.tolist(),
        "variables": list(spec.variable_labels),
    }
    if spec.sections:
        doc["sections"] = {k: [spec.variable_labels[i] for i in v] for k, v in spec.sections.items()}
    return doc


def dump_model(spec: ModelSpec, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(spec), indent=2) + "\n")


def parse_design(text: str, spec: ModelSpec) -> Design:
    """``"n1,n2,..."`` or a single ``"n"`` for a balanced design."""
    try:
        sizes = [int(x) for x in text.split(",")]
    except ValueError:
        raise DesignError(f"design must be comma-separated integers, got {text!r}") from None
    if len(sizes) == 1:
        sizes *= spec.g0
    return Design(tuple(sizes))


def read_data(path, spec: ModelSpec, design: Design | None = None) -> tuple[ObservedSample, Design]:
    """Read raw or mean data. For raw data the design is inferred from row
    counts and, if given, must agree with ``design``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ModelError(f"{path}: empty data file")
    header = [h.strip() for h in rows[0]]
    raw = len(header) > 1 and header[1] == "individual"
    variables = header[2:] if raw else header[1:]
    if header[0] != "group" or tuple(variables) != spec.variable_labels:
        raise ModelError(f"{path}: header must be group,{'individual,' if raw else ''}"
                         + ",".join(spec.variable_labels))
    per_group: dict[int, list] = {}
    for line, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ModelError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
        try:
            g = spec.group_index(row[0].strip())
            values = [float(x) for x in row[len(header) - len(variables):]]
        except (KeyError, ValueError) as exc:
            raise ModelError(f"{path}:{line}: {exc}") from None
        per_group.setdefault(g, []).append(values)
    if raw:
        inferred = Design(tuple(len(per_group.get(g, [])) for g in range(spec.g0)))
        if design is not None and design != inferred:
            raise DesignError(f"data has sample sizes {inferred.sample_sizes}, design says "
                              f"{design.sample_sizes}")
        data = [np.array(per_group[g]) if g in per_group else None for g in range(spec.g0)]
        return ObservedSample.from_raw(spec, inferred, data), inferred
    if design is None:
        raise DesignError("mean data needs an explicit design (--design)")
    for g, vals in per_group.items():
        if len(vals) != 1:
            raise ModelError(f"{path}: group {spec.group_labels[g]} has {len(vals)} mean rows")
    return ObservedSample.from_means(spec, design, {g: v[0] for g, v in per_group.items()}), design


def write_raw_data(path, spec: ModelSpec, observed: ObservedSample, fmt: str = ".6g") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "individual", *spec.variable_labels])
        for g, rows in enumerate(observed.raw):
            for i, row in enumerate(rows, start=1):
                w.writerow([spec.group_labels[g], i, *(format(x, fmt) for x in row)])
