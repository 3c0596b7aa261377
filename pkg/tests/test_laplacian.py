import numpy as np
import pytest
from hypothesis import given, strategies as st

from nkgrid.grid import make_random_grid, make_square_grid, parallel_pair_grid, three_node_grid
from nkgrid.laplacian import (JOperator, build_j, check_norm_lemma, laplacian, neumann_partial_sum,
                              node_conductance_sums, pairwise_transfer, scale_to_contraction, series_apply,
                              solve_j, transfer_matrix)


def two_node():
    from nkgrid.grid import Arc, Grid, Node
    return Grid([Node("1", "generator", 0, 1), Node("2", "demand", dnom=1)], [Arc("a", "1", "2", 1.0, 1.0)])


def dense_j(g, y):
    N = g.incidence().toarray()
    return N @ np.diag(y) @ N.T + np.ones((g.n, g.n)) / g.n


def test_two_node_j():
    g = two_node()
    np.testing.assert_allclose(build_j(g, [1.0]).dense(), [[1.5, -0.5], [-0.5, 1.5]])


def test_j_fixes_ones_and_zero(rng):
    g = make_random_grid(12, 20, 2, 3, seed=4)
    op = build_j(g, rng.uniform(0.5, 2, g.m))
    np.testing.assert_allclose(op.matvec(np.ones(g.n)), np.ones(g.n), atol=1e-12)
    np.testing.assert_allclose(solve_j(op, np.ones(g.n)), np.ones(g.n), atol=1e-12)
    np.testing.assert_array_equal(solve_j(op, np.zeros(g.n)), np.zeros(g.n))


def test_tree_solve_matches_dense_inverse(rng):
    g = make_random_grid(20, 19, 1, 1, seed=8)
    y = rng.uniform(0.2, 3, g.m)
    b = rng.normal(size=g.n)
    ref = np.linalg.inv(dense_j(g, y)) @ b
    got = solve_j(build_j(g, y), b)
    assert np.linalg.norm(got - ref) <= 1e-9 * np.linalg.norm(ref)


def test_three_node_angles():
    g = three_node_grid()
    th = solve_j(build_j(g, np.ones(3)), np.array([3.0, 3.0, -6.0]))
    assert th[0] - th[2] == pytest.approx(3.0, abs=1e-12)
    assert th[1] - th[2] == pytest.approx(3.0, abs=1e-12)


def test_nonpositive_conductance_rejected():
    with pytest.raises(ValueError, match="positive"):
        build_j(three_node_grid(), [1.0, 0.0, 1.0])


def test_scaling_noop_for_small_conductances():
    g = three_node_grid()
    y = np.full(3, 0.1)
    res = scale_to_contraction(g, y, np.array([1.0, 1.0, -2.0]))
    assert res.mu == 1.0
    np.testing.assert_array_equal(res.y, y)


def test_scaling_on_lattice():
    g = make_square_grid(5, 5, 2, 3, seed=0)
    res = scale_to_contraction(g, np.ones(g.m), np.zeros(g.n))
    assert res.mu <= 0.1225 + 1e-15
    assert node_conductance_sums(g, res.y).max() <= 0.49 + 1e-12


def power_iteration_radius(op, n, iters=3000, seed=0):
    v = np.random.default_rng(seed).normal(size=n)
    v -= v.mean()
    lam = 0.0
    for _ in range(iters):
        w = series_apply(op, v)
        w -= w.mean()
        lam = np.linalg.norm(w) / np.linalg.norm(v)
        v = w / np.linalg.norm(w)
    return lam


def test_scaled_series_operator_contracts(rng):
    g = make_random_grid(15, 30, 2, 3, seed=2)
    y = rng.uniform(0.5, 4, g.m)
    res = scale_to_contraction(g, y, np.zeros(g.n))
    op = build_j(g, res.y)
    rad = power_iteration_radius(op, g.n)
    assert rad < 1
    assert rad <= res.nu + 1e-6


def test_scaled_flows_and_angles(rng):
    g = make_random_grid(10, 16, 2, 3, seed=3)
    y = rng.uniform(0.5, 3, g.m)
    b = rng.normal(size=g.n)
    b -= b.mean()
    res = scale_to_contraction(g, y, b)
    th0 = solve_j(build_j(g, y), b)
    th1 = solve_j(build_j(g, res.y), res.b)
    np.testing.assert_allclose(th1 - th1.mean(), th0 - th0.mean(), atol=1e-10)
    f0 = y * (th0[g.tails] - th0[g.heads])
    f1 = res.y * (th1[g.tails] - th1[g.heads])
    np.testing.assert_allclose(f1, res.mu * f0, atol=1e-10)


def test_pairwise_transfer_single_arc():
    g = two_node()
    op = build_j(g, [1.0])
    c = np.array([1.0, -1.0])
    oracle = c @ np.linalg.inv(dense_j(g, np.ones(1))) @ c
    assert pairwise_transfer(op, ["a"], ["a"])[0, 0] == pytest.approx(oracle, abs=1e-12)
    assert oracle == pytest.approx(1.0)


def test_pairwise_transfer_symmetry_and_dense(rng):
    g = make_random_grid(12, 20, 2, 3, seed=6)
    y = rng.uniform(0.5, 2, g.m)
    op = build_j(g, y)
    T = transfer_matrix(op)
    C = g.incidence().toarray()
    np.testing.assert_allclose(T, C.T @ np.linalg.inv(dense_j(g, y)) @ C, atol=1e-10)
    np.testing.assert_allclose(T, T.T, atol=1e-12)
    assert pairwise_transfer(op, [3], [7])[0, 0] == pytest.approx(pairwise_transfer(op, [7], [3])[0, 0])


def test_pairwise_transfer_outside_component():
    g = three_node_grid()
    keep = np.array([True, False, True])
    op = JOperator(g, np.ones(3), keep)
    with pytest.raises(ValueError, match="outside"):
        pairwise_transfer(op, ["2-3"], ["1-2"])


def test_norm_lemma_examples(rng):
    r = check_norm_lemma(np.eye(4), rng.normal(size=4))
    assert r["energy"] <= 1e-12 and r["l1"] == 0
    Q = rng.normal(size=(5, 12))
    r = check_norm_lemma(Q, rng.normal(size=12))
    assert r["energy"] <= 1e-10 and r["l1"] <= 1e-10
    assert check_norm_lemma(Q, np.zeros(12)) == {"energy": 0.0, "l1": 0.0}
    with pytest.raises(np.linalg.LinAlgError):
        check_norm_lemma(np.ones((2, 4)), np.ones(4))


@given(seed=st.integers(0, 10_000), n=st.integers(3, 50))
def test_j_spectrum_replaces_zero_by_one(seed, n):
    g = make_random_grid(n, min(n + 5, n * (n - 1) // 2), 1, 1, seed=seed)
    y = np.random.default_rng(seed).uniform(0.3, 3, g.m)
    lam_L = np.sort(np.linalg.eigvalsh(laplacian(g, y).toarray()))
    lam_J = np.sort(np.linalg.eigvalsh(build_j(g, y).dense()))
    assert abs(lam_L[0]) <= 1e-8 and lam_L[1] > 1e-8
    np.testing.assert_allclose(np.sort(np.r_[1.0, lam_L[1:]]), lam_J, atol=1e-8)


@given(seed=st.integers(0, 10_000), K=st.sampled_from([5, 10, 20]))
def test_truncated_series_envelope(seed, K):
    rng = np.random.default_rng(seed)
    g = make_random_grid(10, 16, 2, 2, seed=seed)
    res = scale_to_contraction(g, rng.uniform(0.5, 3, g.m), rng.normal(size=g.n))
    op = build_j(g, res.y)
    b = rng.normal(size=g.n)
    err = np.linalg.norm(neumann_partial_sum(op, b, K) - solve_j(op, b))
    nu = res.nu
    assert nu < 1
    assert err <= nu ** (K + 1) * np.linalg.norm(b) / (1 - nu) + 1e-12


@given(seed=st.integers(0, 10_000))
def test_projection_is_idempotent(seed):
    rng = np.random.default_rng(seed)
    g = make_random_grid(9, 14, 2, 2, seed=seed)
    x = rng.uniform(0.3, 3, g.m)
    Nt = g.incidence().toarray()[1:]
    Xi = np.diag(x ** -0.5)
    H = Xi @ Nt.T @ np.linalg.solve(Nt @ np.diag(1 / x) @ Nt.T, Nt) @ Xi
    assert np.linalg.norm(H @ H - H) <= 1e-8


def test_parallel_pair_transfer():
    g = parallel_pair_grid()
    op = build_j(g, [1.0, 3.0])
    T = transfer_matrix(op)
    # both arcs see the same angle difference: 1 / (y_a + y_b) per unit injection
    np.testing.assert_allclose(T, np.full((2, 2), 0.25), atol=1e-12)
