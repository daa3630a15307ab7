import numpy as np
import pytest
from hypothesis import given

from coexchange.combined import build_grid, grid_adjustment
from coexchange.errors import CapExceeded
from coexchange.exam import exam_model
from coexchange.model import Design, ModelSpec
from coexchange.oracle import (
    IDENTITIES,
    check_sufficiency,
    direct_adjust,
    random_case,
    route_equivalence,
    synthetic_data,
)
from coexchange.variables import variable_resolution

from strategies import case, kinds, seeds


def test_univariate_case():
    spec = ModelSpec([[2.0]], [[0.5]], [[1.0]], [1.0], [[0.0]], (10,))
    for kind, n in (("infinite", 3), ("finite", 4)):
        out = direct_adjust(spec, Design((n,)), kind)
        assert out.canonical.resolutions[0] == pytest.approx(variable_resolution(spec, 0, n, 0, kind))


def test_exam_routes_agree():
    spec = exam_model()
    design = Design((3, 3, 3))
    obs = synthetic_data(np.random.default_rng(7), spec, design)
    res = route_equivalence(spec, design, "infinite", obs)
    assert max(res.values()) <= 1e-8


def test_finite_census_recovers_population_mean():
    spec = exam_model((3, 2, 4))
    design = Design((3, 2, 4))
    obs = synthetic_data(np.random.default_rng(3), spec, design, "finite")
    out = direct_adjust(spec, design, "finite", obs)
    assert np.allclose(out.adjusted_mean, obs.means.reshape(-1), atol=1e-8)
    assert np.abs(out.adjusted_var).max() <= 1e-8
    mean, var = grid_adjustment(build_grid(spec, design, "finite"), obs)
    assert np.allclose(mean, obs.means.reshape(-1), atol=1e-8)
    assert np.abs(var).max() <= 1e-8


@given(seeds, kinds)
def test_sufficiency_identities_hold(seed, kind):
    spec, design, _ = case(seed, kind)
    report = check_sufficiency(spec, design, kind)
    assert set(report.residuals) == set(IDENTITIES)
    assert report.passed(), report.residuals


def test_perturbation_is_detected():
    spec = exam_model((5, 5, 5))
    report = check_sufficiency(spec, Design((2, 2, 2)), "finite", perturb=0.01)
    assert report.residuals["raw_to_means"] > 1e-3
    assert not report.passed()


def test_scalar_model_identities_exact():
    spec = ModelSpec([[3.0]], [[1.0]], [[2.0]], [4.0], None, (6,))
    for kind in ("infinite", "finite"):
        assert check_sufficiency(spec, Design((2,)), kind).worst <= 1e-14


def test_cap_enforced():
    with pytest.raises(CapExceeded):
        direct_adjust(exam_model(), Design((100, 100, 100)), "infinite")
    with pytest.raises(CapExceeded):
        check_sufficiency(exam_model(), Design((50, 50, 50)), "infinite", cap=100)


@given(seeds, kinds)
def test_random_cases_are_valid_and_bounded(seed, kind):
    spec, design = random_case(np.random.default_rng(seed), kind)
    assert spec.g0 <= 3 and spec.v0 <= 4
    assert max(design.sample_sizes) <= 6 and design.total >= 1
    if kind == "finite":
        assert all(2 <= m <= 12 for m in spec.pop_sizes)
