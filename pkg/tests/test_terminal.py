import numpy as np
import pytest

from agcbench.discretization import discretize
from agcbench.exceptions import DesignError
from agcbench.mpc import area_weights, compute_setpoint
from agcbench.network import make_topology
from agcbench.scenarios import AREA_TABLE, builtin_topology
from agcbench.terminal import (
    compute_terminal_level,
    design_terminal,
    normalize_variant,
    solve_dare,
    state_bounds_vector,
    verify_decrease,
)


def riccati_iteration(A, B, Q, R, tol=1e-12, max_iter=100000):
    S = Q.copy()
    for _ in range(max_iter):
        G = R + B.T @ S @ B
        nxt = A.T @ S @ A - A.T @ S @ B @ np.linalg.solve(G, B.T @ S @ A) + Q
        if np.abs(nxt - S).max() <= tol:
            return nxt
        S = nxt
    raise RuntimeError("no convergence")


def test_dare_scalar():
    S, K = solve_dare([[0.5]], [[1.0]], [[1.0]], [[1.0]])
    ref = riccati_iteration(*(np.array([[v]]) for v in (0.5, 1.0, 1.0, 1.0)))
    assert S[0, 0] == pytest.approx(ref[0, 0], abs=1e-10)
    assert S[0, 0] == pytest.approx(1.13278, abs=5e-6)
    assert K[0, 0] == pytest.approx(-0.26556, abs=5e-6)


def test_dare_zero_input_is_lyapunov():
    S, K = solve_dare([[0.5]], [[0.0]], [[1.0]], [[1.0]])
    assert S[0, 0] == pytest.approx(1 / 0.75, rel=1e-12)
    assert K[0, 0] == 0.0


def test_dare_deadbeat():
    Q = np.diag([2.0, 3.0])
    S, K = solve_dare(np.zeros((2, 2)), np.eye(2), Q, np.eye(2))
    np.testing.assert_allclose(S, Q, atol=1e-12)
    np.testing.assert_allclose(K, 0, atol=1e-12)


def test_dare_unstabilizable():
    with pytest.raises(DesignError):
        solve_dare([[2.0]], [[0.0]], [[1.0]], [[1.0]])


def test_dare_on_network_against_iteration(model1_d):
    Q, R = area_weights(model1_d.n_areas)
    S, K = solve_dare(model1_d.A, model1_d.B, Q, R)
    ref = riccati_iteration(model1_d.A, model1_d.B, Q, R, tol=1e-10)
    assert np.abs(S - ref).max() <= 1e-7 * np.abs(S).max()
    G = R + model1_d.B.T @ S @ model1_d.B
    res = (model1_d.A.T @ S @ model1_d.A - S + Q
           - model1_d.A.T @ S @ model1_d.B @ np.linalg.solve(G, model1_d.B.T @ S @ model1_d.A))
    assert np.abs(res).max() <= 1e-9 * np.abs(S).max()
    assert verify_decrease(S, K, model1_d.A, model1_d.B, Q, R) >= -1e-8


def test_verify_decrease_examples():
    assert verify_decrease(2, 0, 0.5, 1, 1, 1) == pytest.approx(0.5)
    assert verify_decrease(1, 0, 0.5, 1, 1, 1) == pytest.approx(-0.25)


def test_level_examples():
    assert compute_terminal_level(np.eye(2), np.zeros((1, 2)), [0.1, np.inf]) == pytest.approx(0.01)
    assert compute_terminal_level(np.diag([4.0, 1.0]), np.zeros((1, 2)), [0.1, np.inf]) == pytest.approx(0.04)
    assert compute_terminal_level(np.eye(2), np.zeros((1, 2)), [np.inf, np.inf], [0.5]) == np.inf


def test_level_shrinks_with_setpoint():
    K = np.array([[1.0, 0.0]])
    sp = compute_setpoint([0.3])
    base = compute_terminal_level(np.eye(4)[:2, :2], K, None, [0.5])
    assert base == pytest.approx(0.25)
    # input margin drops from 0.5 to 0.2 once u_O = 0.3
    from agcbench.mpc import Setpoint

    shifted = compute_terminal_level(np.eye(2), K, None, [0.5], Setpoint(np.zeros(2), sp.u_O))
    assert shifted == pytest.approx(0.04)


def test_level_requires_pd():
    with pytest.raises(DesignError):
        compute_terminal_level(np.diag([1.0, -1.0]), None, [0.1, 0.1])


def test_variant_aliases():
    assert normalize_variant("MPCfull") == "full"
    assert normalize_variant("mpczero") == "zero"
    with pytest.raises(ValueError):
        normalize_variant("mpcpartial")


def test_zero_variant(model1_d):
    Q, R = area_weights(4)
    d = design_terminal("zero", model1_d, Q, R)
    assert not d.S.any() and d.alpha == 0.0 and d.decrease_margin is None


def test_full_variant_margin(model1_d):
    Q, R = area_weights(4)
    d = design_terminal("full", model1_d, Q, R)
    assert d.decrease_margin >= -1e-8
    assert abs(d.decrease_margin) <= 1e-6 * np.abs(d.S).max()
    assert np.linalg.eigvalsh(d.S).min() > 0


def test_diag_without_ties_equals_full():
    topo = make_topology([AREA_TABLE[1], AREA_TABLE[3]], [])
    model = discretize(topo, "Dss")
    Q, R = area_weights(2)
    full = design_terminal("full", model, Q, R)
    diag = design_terminal("diag", model, Q, R)
    assert diag.method == "dare"
    np.testing.assert_allclose(diag.S, full.S, rtol=1e-9, atol=1e-12 * np.abs(full.S).max())
    np.testing.assert_allclose(diag.K, full.K, rtol=1e-9, atol=1e-12)


def test_diag_dare_fails_on_coupled_network(model1_d):
    Q, R = area_weights(4)
    with pytest.raises(DesignError) as err:
        design_terminal("diag", model1_d, Q, R, diag_method="dare")
    assert err.value.margin < -1e-8


def _off_block_mask(M, rows, cols):
    mask = np.ones((rows * M, cols * M), bool)
    for k in range(M):
        mask[rows * k:rows * (k + 1), cols * k:cols * (k + 1)] = False
    return mask


@pytest.fixture(scope="module", params=[(s, sch) for s in (1, 2, 3) for sch in ("D", "Dss")],
                ids=lambda p: f"s{p[0]}-{p[1]}")
def designs(request):
    sid, scheme = request.param
    model = discretize(builtin_topology(sid), scheme)
    Q, R = area_weights(model.n_areas)
    return model, Q, R, {v: design_terminal(v, model, Q, R) for v in ("full", "diag")}


def test_every_design_certified(designs):
    model, Q, R, out = designs
    for d in out.values():
        assert d.decrease_margin >= -1e-8
        assert verify_decrease(d.S, d.K, model.A, model.B, Q, R) >= -1e-8
        assert np.linalg.eigvalsh(d.S).min() > 0
        np.testing.assert_array_equal(d.S, d.S.T)


def test_diag_block_structure(designs):
    model, _, _, out = designs
    d = out["diag"]
    M = model.n_areas
    assert d.method == "lmi"
    assert not d.S[_off_block_mask(M, 4, 4)].any()
    assert not d.K[_off_block_mask(M, 1, 4)].any()
    zeroed = d.S.copy()
    zeroed[_off_block_mask(M, 4, 4)] = 0.0
    np.testing.assert_array_equal(zeroed, d.S)


def _sample_ellipsoid(S, alpha, n_points, rng):
    n = S.shape[0]
    L = np.linalg.cholesky(np.linalg.inv(S))
    dirs = rng.normal(size=(n_points, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = rng.uniform(size=(n_points, 1)) ** (1.0 / n)
    return np.sqrt(alpha) * (radii * dirs) @ L.T


def test_ellipsoid_containment(designs, rng):
    model, _, _, out = designs
    sb = state_bounds_vector(model.topology)
    ub = model.topology.input_bounds
    for d in out.values():
        V = _sample_ellipsoid(d.S, d.alpha, 1_000_000, rng)
        assert np.einsum("ij,jk,ik->i", V, d.S, V).max() <= d.alpha * (1 + 1e-9)
        assert (np.abs(V) - sb).max() <= 1e-12
        assert (np.abs(V @ d.K.T) - ub).max() <= 1e-12
        # the level is tight: the boundary touches some bound
        assert np.isfinite(d.alpha) and d.alpha > 0


def test_positive_invariance(designs, rng):
    model, _, _, out = designs
    for d in out.values():
        V = _sample_ellipsoid(d.S, d.alpha, 2000, rng)
        V /= np.sqrt(np.einsum("ij,jk,ik->i", V, d.S, V) / d.alpha)[:, None]
        Vn = V @ (model.A + model.B @ d.K).T
        before = np.einsum("ij,jk,ik->i", V, d.S, V)
        after = np.einsum("ij,jk,ik->i", Vn, d.S, Vn)
        assert np.all(after <= before * (1 + 1e-12))


def test_shape_mismatch(model1_d):
    with pytest.raises(ValueError):
        design_terminal("full", model1_d, np.eye(3), np.eye(4))
