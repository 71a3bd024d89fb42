import numpy as np
import pytest

from feasbound import (
    Binding,
    BoundarySystem,
    BranchRecord,
    BranchSwitcher,
    BusKind,
    BusRecord,
    EmptySeedSet,
    NewtonSettings,
    NoConvergence,
    find_seeds,
    gsvd,
    layout,
    plane_system,
    residual,
    tenr_solve,
    three_bus_case,
)
from feasbound.boundary import dedup_seeds, signed_pf_sigma
from feasbound.netcase import make_case
from feasbound.pfsystem import uniform
from feasbound.tracer import trace_curve

B = Binding.parse


@pytest.fixture(scope="module")
def loaded3():
    """Three-bus triangle with a load on bus 3 so uniform scaling has a nose."""
    buses = [
        BusRecord(1, BusKind.SLACK, v_ref=1.0),
        BusRecord(2, BusKind.PV, p_gen=0.2, v_ref=1.0),
        BusRecord(3, BusKind.PQ, p_load=0.5, q_load=0.1, v_min=0.9, v_max=1.1),
    ]
    lines = [BranchRecord(1, 2, 0.0, 1.0), BranchRecord(1, 3, 0.0, 1.0), BranchRecord(2, 3, 0.0, 1.0)]
    return make_case(buses, lines, name="loaded3")


def _verify(sys, z):
    """Residual and sigma_min recomputed from pfsystem and a dense SVD."""
    x, lam, _ = sys.split(z)
    rep = residual(sys.case, x, lam, sys.limits)
    sigma = np.linalg.svd(rep.jac.toarray(), compute_uv=False)[-1]
    return rep.norm_inf, sigma


def _solvable(case, lam: float) -> bool:
    """Plain power flow under uniform scaling from the oracle's multistart set."""
    from feasbound.oracle import _BatchPF, _injections, _starts

    X0 = _starts(case, 0)
    P, Q = _injections(case, [uniform(lam)])
    _, conv, _ = _BatchPF(case).solve(X0, np.repeat(P, len(X0), 0), np.repeat(Q, len(X0), 0))
    return bool(conv.any())


def test_uniform_loadability_limit(loaded3):
    sys = BoundarySystem(loaded3, uniform(1.0), (0,), limits=False)
    seed = tenr_solve(sys, sys.flat_start())
    F, sigma = _verify(sys, seed.z)
    assert F < 1e-8 and sigma < 1e-8
    lam_star = seed.lam1
    assert abs(lam_star) > 1.0  # the base case itself is solvable
    assert _solvable(loaded3, 0.99 * lam_star)
    assert not _solvable(loaded3, 1.01 * lam_star)


def test_tenr_fixed_point(loaded3):
    sys = BoundarySystem(loaded3, uniform(1.0), (0,), limits=False)
    seed = tenr_solve(sys, sys.flat_start())
    again = tenr_solve(sys, seed.z)
    assert again.iterations <= 1
    assert np.max(np.abs(again.z - seed.z)) < 1e-8


def test_tenr_bracket_violation(loaded3):
    sys = BoundarySystem(loaded3, uniform(1.0), (0,), limits=False)
    with pytest.raises(NoConvergence):
        tenr_solve(sys, sys.flat_start(), bracket=(-0.5, 0.5))  # solvable throughout


def test_tenr_needs_one_free_parameter(case3):
    sys = plane_system(case3, [B("2:P"), B("3:P")]).with_free((0, 1))
    with pytest.raises(ValueError):
        tenr_solve(sys, sys.flat_start())


@pytest.fixture(scope="module")
def p2_plane():
    case = three_bus_case()
    sys = plane_system(case, [B("3:Q"), B("3:P")], {B("2:P"): 0.02})
    return sys, find_seeds(sys, 32, seed=0)


def test_find_seeds_disconnected_plane(p2_plane):
    sys, seeds = p2_plane
    assert len(seeds) >= 2
    for s in seeds:
        F, sigma = _verify(sys, s.z)
        assert F < NewtonSettings().eps_newton and sigma < NewtonSettings().eps_singular


def test_seeds_deduplicated(p2_plane):
    _, seeds = p2_plane
    tol = NewtonSettings().dedup_tol
    for i in range(len(seeds)):
        for j in range(i + 1, len(seeds)):
            assert np.max(np.abs(seeds[i].z - seeds[j].z)) > tol


def test_dedup_helper_drops_copies(p2_plane):
    _, seeds = p2_plane
    assert len(dedup_seeds(list(seeds) + list(seeds), 1e-4)) == len(seeds)


def test_seeds_reproducible_and_order_independent(p2_plane):
    sys, seeds = p2_plane
    again = find_seeds(sys, 32, seed=0, jobs=4)
    assert len(again) == len(seeds)
    for a, b in zip(seeds, again):
        assert np.array_equal(a.z, b.z) and a.origin == b.origin


def test_single_restart_is_flat_tenr(case3):
    sys = plane_system(case3, [B("2:P"), B("3:P")], {B("3:Q"): 0.02})
    seeds = find_seeds(sys, 1)
    assert [s.origin for s in seeds] == ["TenrFromFlat"]
    direct = tenr_solve(sys, sys.flat_start())
    assert np.allclose(seeds[0].z, sys.canonical(direct.z), atol=1e-12)


def test_empty_seed_set(case3):
    sys = plane_system(case3, [B("2:P"), B("3:P")], {B("3:Q"): 0.02})
    with pytest.raises(EmptySeedSet):
        find_seeds(sys, 2, bracket=(50.0, 60.0))
    with pytest.raises(ValueError):
        find_seeds(sys, 0)


def test_eig_formulation_agrees(case3):
    svd = plane_system(case3, [B("2:P"), B("3:P")], {B("3:Q"): 0.02})
    eig = plane_system(case3, [B("2:P"), B("3:P")], {B("3:Q"): 0.02}, transversality="eig")
    s = tenr_solve(svd, svd.flat_start())
    z_eig = eig.lift(s.z, svd)
    assert eig.dim == 2 * eig.n + 1 and eig.n_eq == 2 * eig.n + 1
    H = eig.residual(z_eig)
    assert np.max(np.abs(H)) < 1e-6


def test_signed_pf_sigma_magnitude(case3):
    lay = layout(case3, limits=False)
    t = gsvd(lay.jacobian(lay.flat_state()))
    s0 = signed_pf_sigma(case3, lay.voltages(lay.flat_state()))
    assert abs(s0) == pytest.approx(t.sigma_min)


def test_branch_switcher_trace_stays_on_boundary(p2_plane):
    sys1, seeds = p2_plane
    sys2 = sys1.with_free((0, 1))
    sw = BranchSwitcher(sys2)
    c = trace_curve(sys2, sys2.lift(seeds[0].z, sys1), switcher=sw)
    assert c.switches, "expected at least one branch switch"
    kinds = {sw.describe(int(np.argmin(np.abs(sw.slacks(c.steps[k + 1].z))))) for k in c.switches}
    assert kinds
    for st in c.steps:
        F, sigma = _verify(sys2, st.z)
        assert F < 1e-8 and sigma < 1e-6


def test_branch_switcher_requires_limits(case3):
    sys = plane_system(case3, [B("2:P"), B("3:P")], limits=False).with_free((0, 1))
    with pytest.raises(ValueError):
        BranchSwitcher(sys)
