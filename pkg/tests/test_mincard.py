import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nkgrid.engine import EngineError, LpSolution
from nkgrid.flow import ControllerLP, min_congestion
from nkgrid.grid import (Arc, Grid, Node, desk_scale_cases, make_random_grid, non_monotone_grid,
                         parallel_pair_grid)
from nkgrid.mincard import (AttackOracle, CutFactory, FixedZDual, MinCardLimits, attacker_dual_model,
                            benders_cut, big_m, brute_force_min_attack, cheap_certificate,
                            controller_best_response, dual_residuals, min_cardinality_attack, no_good_cut,
                            severity_search, strengthen_I, strengthen_II)

EPS = 1e-3


def enumerate_controller(g, attack, tmin):
    """Best configuration by trying every generator subset."""
    best = np.inf
    for r in range(len(g.gens) + 1):
        for cfg in itertools.combinations(g.gen_ids, r):
            best = min(best, min_congestion(g, attack, cfg, tmin).t)
    return best


def test_big_m_examples(tri):
    assert big_m(parallel_pair_grid()) == 1.0
    assert big_m(tri) == 1.0
    g = Grid([Node("1", "generator", 0, 1), Node("2", "demand", dnom=1)], [Arc("a", "1", "2", 4.0, 0.5)])
    assert big_m(g) == 1.0


def test_best_response_examples(tri):
    v = controller_best_response(tri, ["1-3"], 0.5)
    assert not v.successful and v.config == frozenset({"2"})
    v = controller_best_response(tri, ["1-3", "2-3"], 0.5)
    assert v.successful
    assert enumerate_controller(tri, ["1-3", "2-3"], 0.5) >= 1 + EPS
    assert not controller_best_response(tri, [], 0.5).successful


def test_verdict_serialization(tri):
    v = controller_best_response(tri, ["1-3", "1-2"], 0.5)
    d = v.to_dict(tri)
    assert d["attack"] == ["1-2", "1-3"]
    assert d["successful"] is False and d["config"] == ["2"]


@given(seed=st.integers(0, 10_000), tmin=st.sampled_from([0.3, 0.5, 0.8]))
def test_dual_value_equals_controller_value(seed, tmin):
    rng = np.random.default_rng(seed)
    g = make_random_grid(6, 9, 2, 2, seed=seed)
    z = (rng.random(g.m) < 0.25).astype(float)
    cm = np.ones(len(g.gens), dtype=bool)
    primal = ControllerLP(g, tmin).solve(z > 0.5, cm)
    for tighten in (False, True):
        sol = FixedZDual(attacker_dual_model(g, cm, tmin, tighten=tighten)).solve(z)
        if not primal.feasible:
            assert sol.status == "unbounded"
        else:
            assert sol.obj == pytest.approx(primal.t, rel=1e-6, abs=1e-7)


def test_dual_rows_read_as_stated(tri):
    blk = attacker_dual_model(tri, np.array([True, True]), 0.5)
    dual = FixedZDual(blk)
    s = blk.slices
    sol = dual.solve(np.zeros(3))
    assert np.abs(sol.x[s["wp"]] + sol.x[s["wm"]]).max() <= 1e-9
    z = np.array([0.0, 0.0, 1.0])
    sol = dual.solve(z)
    assert abs(sol.x[s["p"]][2] + sol.x[s["q"]][2]) <= 1e-9


def test_cut_violated_at_generating_point(tri):
    fac = CutFactory(tri, 0.5, EPS)
    z = tri.attack_mask(["1-3"])
    cut = fac.cut(z, {"2"})
    assert cut.violation(z.astype(float)) >= EPS - 1e-9
    assert cut.rhs == 1 + EPS


def test_wrong_sign_multipliers_rejected(tri):
    blk = attacker_dual_model(tri, np.array([False, True]), 0.5)
    one_sided = np.flatnonzero(np.isfinite(blk.hi) & ~np.isfinite(blk.lo))
    d = np.zeros(len(blk.lo))
    d[one_sided[0]] = -1.0
    with pytest.raises(EngineError, match="dual-feasible"):
        benders_cut(blk, LpSolution("optimal", x=np.zeros(blk.npsi), obj=0.0, duals=d), np.zeros(3), EPS)


def test_zero_multiplier_cut_is_unreachable(tri):
    blk = attacker_dual_model(tri, np.array([False, True]), 0.5)
    sol = LpSolution("optimal", x=np.zeros(blk.npsi), obj=0.8, duals=np.zeros(len(blk.lo)))
    cut = benders_cut(blk, sol, np.zeros(3), EPS)
    assert not np.any(cut.coef)
    assert all(cut.violation(np.array(z, float)) > 0 for z in itertools.product((0, 1), repeat=3))


def test_no_good_cut_excludes_only_its_point():
    z = np.array([1.0, 0.0, 1.0])
    cut = no_good_cut(z, EPS)
    for other in itertools.product((0.0, 1.0), repeat=3):
        other = np.array(other)
        assert (cut.violation(other) > 0) == np.array_equal(other, z)


@pytest.mark.parametrize("case", desk_scale_cases(6, base_seed=100), ids=lambda c: c[0])
def test_cuts_respect_every_successful_attack(case):
    name, g, tmin = case
    res = min_cardinality_attack(g, tmin, EPS, MinCardLimits(kmax=4))
    oracle = AttackOracle(g, tmin, EPS)
    winners = []
    for k in range(1, 4):
        for combo in itertools.combinations(range(g.m), k):
            z = np.zeros(g.m)
            z[list(combo)] = 1
            if oracle.value(z > 0.5)[0] >= 1 + EPS:
                winners.append(z)
    for cut in res.cuts:
        assert cut.violation(cut.z_gen) >= EPS - 1e-7
        for z in winners:
            assert cut.violation(z) <= 1e-7


def test_strengthen_I_picks_zero_flow_arc(tri):
    lp = ControllerLP(tri, 0.5)
    fac = CutFactory(tri, 0.5, EPS)
    A = tri.attack_mask(["1-3"])
    v = controller_best_response(tri, A, 0.5, lp=lp)
    assert abs(v.flow.f[0]) <= 1e-9
    cut = strengthen_I(tri, A, v.config, v.flow, 0.5, lp=lp, factory=fac, eps=EPS)
    np.testing.assert_array_equal(cut.z_gen, [1, 0, 1])
    assert cut.origin == "I"


def test_strengthen_I_nothing_to_add():
    g = parallel_pair_grid()
    lp = ControllerLP(g, 1.0)
    A = g.attack_mask(["a"])
    v = controller_best_response(g, A, 1.0, lp=lp)
    assert not v.successful
    assert strengthen_I(g, A, v.config, v.flow, 1.0, lp=lp, factory=CutFactory(g, 1.0, EPS), eps=EPS) is None


def test_strengthen_II_empty_forced_set_gives_plain_cut():
    g = parallel_pair_grid()
    lp = ControllerLP(g, 1.0)
    fac = CutFactory(g, 1.0, EPS)
    A = g.attack_mask(["a"])
    v = controller_best_response(g, A, 1.0, lp=lp)
    cut, F = strengthen_II(g, A, v.config, v.flow, 1.0, lp=lp, factory=fac, eps=EPS)
    assert not F.any()
    plain = fac.cut(A, v.config)
    assert cut.key() == plain.key()


@pytest.mark.parametrize("case", desk_scale_cases(5, base_seed=200), ids=lambda c: c[0])
def test_strengthen_II_forced_arcs_idle_and_cut_valid(case):
    name, g, tmin = case
    lp = ControllerLP(g, tmin)
    fac = CutFactory(g, tmin, EPS)
    A = np.zeros(g.m, dtype=bool)
    A[0] = True
    v = controller_best_response(g, A, tmin, EPS, lp=lp)
    if v.successful or v.t > 1:
        pytest.skip("attack not defeated")
    cut, F = strengthen_II(g, A, v.config, v.flow, tmin, lp=lp, factory=fac, eps=EPS)
    cm = g.config_mask(cut.config)
    cert = lp.solve(A, cm, forced_zero=F)
    assert cert.t <= 1 + 1e-7
    assert np.abs(cert.flow.f[F]).max(initial=0.0) <= 1e-7
    assert cut.violation((A | F).astype(float)) >= EPS - 1e-7
    dual = fac.dual_for(cm)
    idx = np.flatnonzero(F)
    for r in range(len(idx) + 1):
        for E in itertools.combinations(idx, r):
            z = A.astype(float)
            z[list(E)] = 1
            val = dual.solve(z).obj
            assert cut.lhs(z) >= val - 1e-6


def test_three_node_min_cardinality(tri):
    res = min_cardinality_attack(tri, 0.5, EPS)
    assert res.status == "optimal" and res.cardinality == 2
    assert res.verdict.successful
    objs = [r["master_obj"] for r in res.trace]
    assert objs == sorted(objs)
    for k in range(1, 2):
        for combo in itertools.combinations(tri.arc_ids, k):
            assert not controller_best_response(tri, combo, 0.5).successful


def test_isolated_demand_node():
    nodes = [Node("1", "generator", 0, 20), Node("2", "neutral"), Node("3", "neutral"), Node("4", "demand", dnom=10)]
    arcs = [Arc("a", "1", "2", 1, 50), Arc("b", "2", "4", 1, 50), Arc("c", "1", "3", 1, 50),
            Arc("d", "3", "4", 1, 50), Arc("e", "2", "3", 1, 50)]
    g = Grid(nodes, arcs)
    res = min_cardinality_attack(g, 0.5, EPS)
    # the generator has degree 2 as well, so either side may be cut off
    assert res.cardinality == 2
    assert controller_best_response(g, ["b", "d"], 0.5).successful


def test_zero_tmin_has_no_attack(tri):
    g = tri.with_pmin(0.0)
    res = min_cardinality_attack(g, 0.0, EPS, MinCardLimits(kmax=2))
    assert res.cardinality is None
    assert res.status in ("none-within-kmax", "no-attack")
    assert brute_force_min_attack(g, 0.0, 3).verdict.successful is False


def test_non_monotone_grid_respected():
    g = non_monotone_grid()
    res = min_cardinality_attack(g, 0.3, EPS)
    assert res.cardinality == 1 and res.verdict.attack == frozenset({"1-6"})
    oracle = AttackOracle(g, 0.3, EPS)
    for combo in itertools.combinations(range(g.m), 2):
        mask = np.zeros(g.m, dtype=bool)
        mask[list(combo)] = True
        assert not oracle.successful(mask)[0]


def test_iteration_invariants():
    for name, g, tmin in desk_scale_cases(4, base_seed=300):
        res = min_cardinality_attack(g, tmin, EPS, MinCardLimits(kmax=4))
        objs = [r["master_obj"] for r in res.trace if r["master_obj"] is not None]
        assert objs == sorted(objs)
        assert all(r["systems_resident"] <= 2 for r in res.trace)
        for z, psi, cm, blk in res.duals:
            r = dual_residuals(g, blk, z, psi)
            assert max(r.values()) <= 1e-7, (name, r)


def test_limit_reports_incomplete_proof(tri):
    res = min_cardinality_attack(tri, 0.5, EPS, MinCardLimits(max_iters=1))
    assert res.status == "limit" and not res.proof_complete
    assert res.to_dict(tri)["status"] == "limit"


def test_severity_examples(tri):
    assert severity_search(tri, 1, 0.5).t <= 1
    two = severity_search(tri, 2, 0.5)
    assert two.t > 1 and two.optimal
    assert severity_search(tri, tri.m, 0.5).t > 1
    with pytest.raises(ValueError):
        severity_search(tri, 0, 0.5)


def test_brute_force_examples(tri):
    res = brute_force_min_attack(tri, 0.5, 3)
    assert res.verdict.successful and len(res.verdict.attack) == 2
    assert res.evaluated == 3 + 3 - 2 or res.evaluated <= 6
    none = brute_force_min_attack(tri, 0.5, 0)
    assert not none.verdict.successful and none.verdict.attack == frozenset()


@pytest.mark.parametrize("case", desk_scale_cases(8, base_seed=400), ids=lambda c: c[0])
def test_brute_force_orders_agree(case):
    name, g, tmin = case
    a = brute_force_min_attack(g, tmin, 3, order="lex").verdict
    b = brute_force_min_attack(g, tmin, 3, order="reverse").verdict
    assert a.successful == b.successful
    assert (len(a.attack) if a.successful else None) == (len(b.attack) if b.successful else None)


def test_cheap_certificate(tri):
    part, kind = cheap_certificate(tri, ["1-3", "2-3"], {"1", "2"}, 0.5)
    assert kind == "mismatch" and frozenset({"3"}) in part
    assert cheap_certificate(tri, ["1-3"], {"1"}, 0.5) is not None
