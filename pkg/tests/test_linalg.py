import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coexchange.errors import DimensionMismatch, NotSPDError, NotSymmetricError
from coexchange.linalg import (
    as_symmetric,
    check_spd,
    direct_sum,
    gen_eig,
    group_eigenspaces,
    helmert,
    kron,
    pinv,
    psd_sqrt,
)
from coexchange.oracle import random_spd

from strategies import seeds


def test_as_symmetric_rejects_asymmetry():
    with pytest.raises(NotSymmetricError):
        as_symmetric([[1.0, 0.5], [0.4, 1.0]])
    with pytest.raises(DimensionMismatch):
        as_symmetric(np.ones((2, 3)))
    m = as_symmetric([[1.0, 0.5], [0.5 + 1e-14, 1.0]])
    assert m[0, 1] == m[1, 0]


def test_check_spd():
    assert check_spd(np.eye(3))
    assert not check_spd(np.diag([1.0, 0.0]))
    assert not check_spd([[1.0, 2.0], [2.0, 1.0]])
    assert not check_spd([[1.0, 1.0], [0.0, 1.0]])
    assert not check_spd(np.diag([1.0, 1e-14]))


@given(seeds, st.integers(1, 6))
def test_gen_eig_pencil_and_normalisation(seed, dim):
    rng = np.random.default_rng(seed)
    lhs, rhs = random_spd(rng, dim), random_spd(rng, dim)
    res = gen_eig(lhs, rhs)
    X, lam = res.directions, res.resolutions
    scale = max(np.abs(lhs).max(), np.abs(rhs).max())
    assert np.abs(lhs @ X - rhs @ X * lam).max() <= 1e-8 * scale * np.abs(X).max()
    assert np.allclose(X.T @ lhs @ X, np.eye(dim), atol=1e-8)
    assert np.all(np.diff(lam) <= 1e-12)

    res_r = gen_eig(lhs, rhs, normalize="rhs")
    assert np.allclose(res_r.directions.T @ rhs @ res_r.directions, np.eye(dim), atol=1e-8)
    assert np.allclose(res_r.resolutions, lam, rtol=1e-10)


def test_gen_eig_requires_spd_rhs():
    with pytest.raises(NotSPDError):
        gen_eig(np.eye(2), np.diag([1.0, -1.0]))
    with pytest.raises(NotSPDError):
        gen_eig(np.diag([1.0, -1.0]), np.eye(2))
    gen_eig(np.diag([1.0, -1.0]), np.eye(2), normalize="rhs")


def test_degenerate_eigenvalues_share_an_eigenspace():
    lhs = np.diag([2.0, 2.0, 1.0])
    res = gen_eig(lhs, np.eye(3))
    assert res.eigenspaces == ((0, 1), (2,))
    assert res.resolutions[0] == res.resolutions[1]
    # a rotated basis of the degenerate space gives the same projectors
    c, s = np.cos(0.3), np.sin(0.3)
    rot = np.eye(3)
    rot[:2, :2] = [[c, -s], [s, c]]
    other = res.directions @ rot
    for p, q in zip(res.projectors(lhs), [other[:, [0, 1]] @ other[:, [0, 1]].T @ lhs,
                                            other[:, [2]] @ other[:, [2]].T @ lhs]):
        assert np.allclose(p, q, atol=1e-12)


def test_sign_convention_is_deterministic():
    res = gen_eig(np.diag([3.0, 2.0, 1.0]), np.eye(3))
    for j in range(3):
        col = res.directions[:, j]
        assert col[np.flatnonzero(np.abs(col) > 1e-9)[0]] > 0


def test_group_eigenspaces_runs():
    assert group_eigenspaces(np.array([3.0, 3.0, 2.0, 1.0, 1.0])) == ((0, 1), (2,), (3, 4))
    assert group_eigenspaces(np.array([])) == ()


@given(seeds, st.integers(1, 5), st.integers(0, 3))
def test_pinv_penrose_conditions(seed, dim, deficit):
    rng = np.random.default_rng(seed)
    rank = max(dim - deficit, 0)
    F = rng.standard_normal((dim, rank))
    m = F @ F.T
    p = pinv(m)
    scale = max(np.abs(m).max(), 1.0)
    assert np.allclose(m @ p @ m, m, atol=1e-8 * scale)
    assert np.allclose(p @ m @ p, p, atol=1e-8 * max(np.abs(p).max(), 1.0))
    assert np.allclose(m @ p, (m @ p).T, atol=1e-8)


def test_kron_block_layout():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[0.0, 1.0], [1.0, 0.0]])
    k = kron(a, b)
    assert np.array_equal(k[2:, :2], 3.0 * b)
    assert direct_sum(np.eye(1), 2 * np.eye(2)).shape == (3, 3)


@pytest.mark.parametrize("p", [1, 2, 3, 5, 8])
def test_helmert_orthonormal(p):
    h = helmert(p)
    assert np.allclose(h @ h.T, np.eye(p), atol=1e-12)
    assert np.allclose(h[0], 1 / np.sqrt(p))
    for t in range(1, p):
        row = h[t] * np.sqrt(t * (t + 1))
        assert np.allclose(row, np.r_[-np.ones(t), t, np.zeros(p - t - 1)])


def test_helmert_rejects_empty():
    with pytest.raises(ValueError):
        helmert(0)


@given(seeds, st.integers(1, 5))
def test_psd_sqrt_factorises(seed, dim):
    m = random_spd(np.random.default_rng(seed), dim)
    L = psd_sqrt(m)
    assert np.allclose(L @ L.T, m, atol=1e-10)
