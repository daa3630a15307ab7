import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coexchange.bayes_linear import SecondOrderBeliefs, adjust
from coexchange.errors import NotApplicable
from coexchange.exam import EXAM_POPULATIONS, exam_model
from coexchange.groups import (
    average_fraction_identity,
    balanced_finite_shortcut,
    balanced_shortcut,
    direct_structure,
    engine_structure,
    equal_fraction_shortcut,
    group_data_var,
    group_prior_var,
    group_structure,
    resolved_uncertainty_t,
    separable_balanced_solution,
    separable_shortcut,
    update_groups,
)
from coexchange.model import Design, ModelSpec, ObservedSample, assemble_joint
from coexchange.oracle import random_spd, synthetic_data
from coexchange.variables import canonical_variables, variable_resolution

from strategies import case, kinds, projector_gap, seeds


def engine_for(spec, design, t, kind, cv, wbar=None):
    """Generic engine adjusting M(W_t) by the sampled W-bar_t, built from scratch."""
    phi = cv.phi[t]
    S = list(design.sampled)
    G = group_prior_var(spec, phi, kind)
    prior = spec.mu @ cv.U[:, t]
    b = SecondOrderBeliefs(prior, prior[S], G, group_data_var(spec, design, phi), G[:, S])
    return b, adjust(b, None if wbar is None else wbar[S])


def test_exam_separable_balanced():
    sol = separable_balanced_solution(exam_model())
    assert sol.psi == pytest.approx([27 / 37, 3 / 23, 3 / 23], abs=1e-10)
    assert sol.a == 1.0


@pytest.mark.parametrize("n", [1, 10, 100])
def test_exam_closed_form_resolutions(n):
    spec = exam_model()
    cv = canonical_variables(spec)
    for t, phi in enumerate(cv.phi):
        gs = group_structure(spec, Design((n,) * 3), t, "infinite", cv)
        assert gs.shortcut == "separable_balanced"
        assert gs.lam[0] == pytest.approx(27 * phi * n / (27 * phi * n + 10 * (1 - phi)), abs=1e-10)
        assert gs.lam[1:] == pytest.approx([3 * phi * n / (3 * phi * n + 20 * (1 - phi))] * 2, abs=1e-10)


@given(seeds, st.lists(st.integers(1, 8), min_size=3, max_size=3))
def test_separable_closed_form(seed, sizes):
    rng = np.random.default_rng(seed)
    g0 = int(rng.integers(1, 4))
    v0 = int(rng.integers(1, 5))
    D, C, A = random_spd(rng, v0), random_spd(rng, v0, 0.5), random_spd(rng, g0)
    phi1 = np.max(np.linalg.eigvals(np.linalg.solve(D, C)).real)
    a = float(rng.uniform(0.3, 0.95)) / phi1
    spec = ModelSpec(D, C, A, np.diag(A) / a, rng.standard_normal((g0, v0)))
    design = Design(tuple(sizes[:g0]))
    sol = separable_shortcut(spec, design)
    cv = canonical_variables(spec)
    for t in range(v0):
        direct = direct_structure(spec, design, t, "infinite", cv)
        assert np.allclose(sol.resolutions(cv.phi[t]), direct.lam, atol=1e-10)
        assert projector_gap(sol.V, direct.V, direct.eigenspaces, spec.A) <= 1e-8


def test_separable_not_applicable():
    spec = exam_model()
    varied = ModelSpec(spec.D, spec.C, spec.A, [1.0, 2.0, 1.5], spec.mu)
    with pytest.raises(NotApplicable):
        separable_shortcut(varied, Design((2, 2, 2)))


@given(seeds)
def test_balanced_directions_do_not_depend_on_n(seed):
    spec, _, rng = case(seed, "infinite")
    cv = canonical_variables(spec)
    t = int(rng.integers(spec.v0))
    one = balanced_shortcut(spec, 1, t, cv)
    assert np.allclose(one.lam, one.psi, atol=1e-12)
    for n in (1, 50):
        direct = direct_structure(spec, Design((n,) * spec.g0), t, "infinite", cv)
        short = balanced_shortcut(spec, n, t, cv)
        assert np.allclose(short.lam, direct.lam, atol=1e-10)
        assert projector_gap(one.V, direct.V, direct.eigenspaces, spec.A) <= 1e-8


@given(seeds, st.integers(1, 3))
def test_equal_fraction_matches_direct(seed, k):
    rng = np.random.default_rng(seed)
    spec, _, _ = case(seed, "finite")
    pops = tuple(int(4 * rng.integers(1, 4)) for _ in range(spec.g0))
    spec = spec.with_pop_sizes(pops)
    design = Design(tuple(m // 4 for m in pops))
    cv = canonical_variables(spec)
    t = int(rng.integers(spec.v0))
    short = equal_fraction_shortcut(spec, design, t, cv)
    direct = direct_structure(spec, design, t, "finite", cv)
    assert np.allclose(short.lam, direct.lam, atol=1e-10)
    assert projector_gap(short.V, direct.V, direct.eigenspaces, direct.prior_var) <= 1e-8
    assert np.allclose(short.V.T @ short.prior_var @ short.V, np.eye(spec.g0), atol=1e-8)


def test_equal_fraction_limits():
    spec = exam_model((20, 20, 20))
    assert np.allclose(equal_fraction_shortcut(spec, Design((20,) * 3), 6).lam, 1.0)
    big = exam_model((10**7,) * 3)
    fin = equal_fraction_shortcut(big, Design((1,) * 3), 6).lam
    inf = group_structure(big, Design((1,) * 3), 6, "infinite").lam
    assert np.allclose(fin, inf, atol=1e-6)
    with pytest.raises(NotApplicable):
        equal_fraction_shortcut(exam_model(EXAM_POPULATIONS), Design((10,) * 3), 6)


def test_dispatch():
    spec = exam_model(EXAM_POPULATIONS)
    assert group_structure(spec, Design((10,) * 3), 6, "infinite").shortcut == "separable_balanced"
    assert group_structure(spec, Design((10,) * 3), 6, "finite").shortcut == "none"
    assert group_structure(spec, Design((5, 10, 20)), 6, "infinite").shortcut == "separable"
    assert group_structure(spec, Design((51, 101, 203)), 6, "finite").shortcut == "equal_fraction"
    assert group_structure(spec, Design((0, 10, 20)), 6, "finite").shortcut == "engine"
    varied = ModelSpec(spec.D, spec.C, spec.A, [1.0, 2.0, 1.5], spec.mu)
    assert group_structure(varied, Design((4,) * 3), 6, "infinite").shortcut == "balanced"
    assert group_structure(varied, Design((4, 5, 6)), 6, "infinite").shortcut == "none"


@given(seeds, kinds)
def test_structure_invariants(seed, kind):
    spec, design, rng = case(seed, kind, allow_unsampled=False)
    cv = canonical_variables(spec)
    t = int(rng.integers(spec.v0))
    gs = group_structure(spec, design, t, kind, cv)
    G, R = gs.prior_var, group_data_var(spec, design, cv.phi[t])
    V, lam = gs.V, gs.lam
    assert np.allclose(V.T @ G @ V, np.eye(spec.g0), atol=1e-8)
    assert np.abs(G @ V - R @ V * lam).max() <= 1e-8 * np.abs(R).max() * np.abs(V).max()
    assert np.all((lam > 0) & (lam <= 1 + 1e-12))
    # posterior covariance across s is diagonal
    _, eng = engine_for(spec, design, t, kind, cv)
    assert np.allclose(V.T @ eng.adjusted_var @ V, np.diag(1 - lam), atol=1e-8)


@given(seeds, kinds)
def test_pencil_matches_engine(seed, kind):
    spec, design, rng = case(seed, kind)
    cv = canonical_variables(spec)
    t = int(rng.integers(spec.v0))
    gs = group_structure(spec, design, t, kind, cv)
    _, eng = engine_for(spec, design, t, kind, cv)
    assert np.allclose(gs.lam, eng.canonical.resolutions, atol=1e-8)
    assert projector_gap(gs.V, eng.canonical.directions, gs.eigenspaces, gs.prior_var) <= 1e-8
    if len(design.sampled) == spec.g0:
        for method in ("direct", "engine"):
            other = group_structure(spec, design, t, kind, cv, method)
            assert np.allclose(other.lam, gs.lam, atol=1e-8)


@given(seeds, kinds)
def test_update_matches_engine(seed, kind):
    spec, design, rng = case(seed, kind)
    cv = canonical_variables(spec)
    t = int(rng.integers(spec.v0))
    obs = synthetic_data(rng, spec, design, kind)
    wbar = obs.means @ cv.U[:, t]
    upd = update_groups(spec, design, t, kind, obs, cv=cv)
    V = upd.structure.V
    _, eng = engine_for(spec, design, t, kind, cv, wbar)
    assert np.allclose(upd.posterior_mean, V.T @ eng.adjusted_mean, atol=1e-8 * (1 + np.abs(upd.prior_mean).max()))
    assert np.allclose(upd.posterior_variance, np.diag(V.T @ eng.adjusted_var @ V), atol=1e-8)
    assert np.allclose(upd.prior_precision, 1.0, atol=1e-8)
    assert np.array_equal(upd.posterior_precision, upd.prior_precision + upd.data_precision)
    assert np.allclose(1 - upd.prior_precision / upd.posterior_precision, upd.resolution, atol=1e-10)


def test_update_fixed_point():
    spec = exam_model()
    design = Design((3, 4, 5))
    obs = ObservedSample.from_means(spec, design, spec.mu)
    for t in range(spec.v0):
        upd = update_groups(spec, design, t, "infinite", obs)
        assert np.allclose(upd.posterior_mean, upd.prior_mean, atol=1e-12)


@given(seeds)
def test_sampling_fraction_identity(seed):
    """With N = theta M, the finite adjusted expectation of M~(Y_st) is
    (1 - theta) mu_Nst + theta Ybar_st, and its resolution lam + theta (1 - lam)."""
    rng = np.random.default_rng(seed)
    spec, _, _ = case(seed, "finite")
    pops = tuple(int(5 * rng.integers(1, 3)) for _ in range(spec.g0))
    spec = spec.with_pop_sizes(pops)
    design = Design(tuple(m // 5 for m in pops))
    theta = 0.2
    cv = canonical_variables(spec)
    obs = synthetic_data(rng, spec, design, "finite")
    t = int(rng.integers(spec.v0))
    inf = update_groups(spec, design, t, "infinite", obs, cv=cv)
    V = inf.structure.V
    b, eng = engine_for(spec, design, t, "finite", cv, obs.means @ cv.U[:, t])
    lhs = V.T @ eng.adjusted_mean
    rhs = (1 - theta) * inf.posterior_mean + theta * inf.sample_mean
    assert np.allclose(lhs, rhs, atol=1e-10 * (1 + np.abs(rhs).max()))
    res = 1 - np.diag(V.T @ eng.adjusted_var @ V) / np.diag(V.T @ b.var_b @ V)
    assert np.allclose(res, inf.resolution + theta * (1 - inf.resolution), atol=1e-10)


def individual_precision(spec, V, s, t, cv, m):
    """1 / Var of one individual's (s, t) direction given the finite means,
    computed from the raw joint covariance."""
    joint = assemble_joint(spec, Design((1,) * spec.g0), "finite")
    cond = joint.var_d - joint.cov_bd.T @ np.linalg.solve(joint.var_b, joint.cov_bd)
    h = np.kron(V[:, s], cv.U[:, t])
    return 1.0 / float(h @ cond @ h)


@given(seeds, st.integers(1, 20))
def test_balanced_finite_shortcut(seed, n):
    rng = np.random.default_rng(seed)
    spec, _, _ = case(seed, "finite")
    m = 20
    spec = spec.with_pop_sizes((m,) * spec.g0)
    design = Design((n,) * spec.g0)
    cv = canonical_variables(spec)
    t = int(rng.integers(spec.v0))
    obs = synthetic_data(rng, spec, design, "finite")
    short = balanced_finite_shortcut(spec, n, m, t, obs, cv)
    V = short.V
    b, eng = engine_for(spec, design, t, "finite", cv, obs.means @ cv.U[:, t])
    post_var = np.diag(V.T @ eng.adjusted_var @ V)
    prior_var = np.diag(V.T @ b.var_b @ V)
    scale = 1 + np.abs(short.posterior_mean).max()
    assert np.allclose(short.posterior_mean, V.T @ eng.adjusted_mean, atol=1e-8 * scale)
    assert np.allclose(short.prior_precision, 1 / prior_var, rtol=1e-10)
    assert np.allclose(short.lam, 1 - post_var / prior_var, atol=1e-10)
    inf = update_groups(spec, design, t, "infinite", obs,
                        structure=balanced_shortcut(spec, n, t, cv), cv=cv)
    assert np.allclose(short.lam, inf.resolution + n / m * (1 - inf.resolution), atol=1e-10)
    assert np.allclose(short.posterior_mean, (1 - n / m) * inf.posterior_mean + n / m * short.sample_mean,
                       atol=1e-10 * scale)
    q = [individual_precision(spec, V, s, t, cv, m) for s in range(spec.g0)]
    assert np.allclose(short.unit_precision, q, rtol=1e-10)
    if n < m:
        assert np.allclose(short.posterior_precision, 1 / post_var, rtol=1e-8)
        assert np.allclose(short.posterior_precision,
                           short.prior_precision + short.correction * n * np.array(q), rtol=1e-10)
    else:
        assert np.allclose(short.posterior_mean, short.sample_mean)
        assert np.allclose(short.lam, 1.0)
    if n == 1:
        assert short.correction == 1.0


def test_balanced_finite_requires_equal_populations():
    with pytest.raises(NotApplicable):
        balanced_finite_shortcut(exam_model(EXAM_POPULATIONS), 5, 51, 0)


@given(seeds, st.integers(1, 12))
def test_single_group_reduces_to_variable_problem(seed, n):
    spec, _, rng = case(seed, "finite", g0_max=1)
    n = min(n, spec.pop_sizes[0])
    for kind in ("infinite", "finite"):
        for t in range(spec.v0):
            gs = group_structure(spec, Design((n,)), t, kind)
            assert gs.lam[0] == pytest.approx(variable_resolution(spec, 0, n, t, kind), abs=1e-10)


@given(seeds)
def test_finite_dominates_infinite(seed):
    spec, design, rng = case(seed, "finite", allow_unsampled=False)
    cv = canonical_variables(spec)
    for t in range(spec.v0):
        fin = group_structure(spec, design, t, "finite", cv).lam
        inf = group_structure(spec, design, t, "infinite", cv).lam
        assert np.all(fin >= inf - 1e-10)


def test_exam_resolved_uncertainty():
    spec = exam_model(EXAM_POPULATIONS)
    design = Design((10,) * 3)
    ru = resolved_uncertainty_t(spec, design, 0, "finite")
    assert ru == pytest.approx(2.7390, abs=1e-3)
    assert average_fraction_identity(spec, design, 0) == pytest.approx(ru, abs=1e-8)
    inf = group_structure(spec, design, 0, "infinite").lam
    assert inf == pytest.approx([0.99083, 0.85714, 0.85714], abs=1e-5)


def test_resolved_uncertainty_large_n():
    spec = exam_model()
    assert resolved_uncertainty_t(spec, Design((10**7,) * 3), 7, "infinite") == pytest.approx(3.0, abs=1e-4)


@given(seeds, st.integers(1, 10))
def test_average_fraction_identity_exchangeable(seed, n):
    rng = np.random.default_rng(seed)
    g0, v0 = int(rng.integers(2, 4)), int(rng.integers(1, 4))
    D, C = random_spd(rng, v0), random_spd(rng, v0, 0.5)
    rho = float(rng.uniform(0.1, 0.9))
    A = (1 - rho) * np.eye(g0) + rho * np.ones((g0, g0))
    phi1 = np.max(np.linalg.eigvals(np.linalg.solve(D, C)).real)
    gamma = np.full(g0, phi1 * rng.uniform(1.1, 3))
    pops = tuple(int(m) for m in rng.integers(n, 40, size=g0) + 1)
    spec = ModelSpec(D, C, A, gamma, None, pops)
    design = Design((n,) * g0)
    for t in range(v0):
        assert average_fraction_identity(spec, design, t) == pytest.approx(
            resolved_uncertainty_t(spec, design, t, "finite"), abs=1e-8)


def test_average_fraction_identity_needs_exchangeable_groups():
    spec = exam_model(EXAM_POPULATIONS)
    varied = ModelSpec(spec.D, spec.C, spec.A, [1.0, 2.0, 1.5], spec.mu, EXAM_POPULATIONS)
    with pytest.raises(NotApplicable):
        average_fraction_identity(varied, Design((5,) * 3), 0)
    with pytest.raises(NotApplicable):
        average_fraction_identity(spec, Design((5, 6, 7)), 0)


def test_engine_route_for_unsampled_group():
    spec = exam_model(EXAM_POPULATIONS)
    design = Design((0, 4, 9))
    gs = engine_structure(spec, design, 6, "finite")
    assert gs.shortcut == "engine"
    assert np.allclose(gs.V.T @ gs.prior_var @ gs.V, np.eye(3), atol=1e-10)
    # two sampled groups can resolve at most two directions
    assert gs.lam[-1] == pytest.approx(0.0, abs=1e-10)
    assert np.all(gs.lam[:2] > 0)
