import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from feasbound import Binding, EmptyInput, three_bus_case
from feasbound.netcase import make_case
from feasbound.oracle import (
    BoundaryKind,
    CellClass,
    ScanGrid,
    branch_check,
    classify_grid,
    classify_point,
    densify,
    directed_distances,
    extract_boundary,
    hausdorff,
)

B = Binding.parse
PLANE = (B("2:P"), B("3:P"))


def _v3_for_q(v):
    # P2 = P3 = 0 keeps all angles at zero, so Q3 = 2 V3^2 - 2 V3 on the triangle
    return 2 * v * v - 2 * v


@pytest.mark.parametrize(
    "lam, q3, expected",
    [
        ((0.0, 0.0), 0.0, CellClass.FEASIBLE),
        ((0.0, 100.0), 0.0, CellClass.UNSOLVABLE),
        ((0.0, 0.0), _v3_for_q(0.85), CellClass.SOLVABLE_ONLY),
        ((0.0, 0.0), _v3_for_q(0.95), CellClass.FEASIBLE),
    ],
    ids=["flat", "huge-P3", "V3=0.85", "V3=0.95"],
)
def test_classify_point(case3, lam, q3, expected):
    assert classify_point(case3, lam, {B("3:Q"): q3}, plane=PLANE).cls is expected


def test_classify_point_default_plane(case3):
    a = classify_point(case3, (0.1, -0.2), {B("3:Q"): 0.0})
    b = classify_point(case3, (0.1, -0.2), {B("3:Q"): 0.0}, plane=PLANE)
    assert a.cls is b.cls


def _widened(case, lo, hi):
    buses = [dataclasses.replace(b, v_min=lo, v_max=hi) if b.v_min is not None else b for b in case.buses]
    return make_case(buses, case.branches)


def test_monotone_under_limit_widening(case3):
    grid = ScanGrid(PLANE, ((-1.5, 1.5), (-1.2, 1.2)), 0.1, {B("3:Q"): 0.02})
    narrow = classify_grid(case3, grid).codes == 0
    wide = classify_grid(_widened(case3, 0.8, 1.2), grid).codes == 0
    assert np.all(wide[narrow])
    assert wide.sum() > narrow.sum()


def test_grid_axes_include_endpoints():
    g = ScanGrid(PLANE, ((-1.0, 1.0), (0.0, 0.5)), 0.25)
    a1, a2 = g.axes
    assert a1[0] == -1.0 and a1[-1] == pytest.approx(1.0) and a1.size == 9
    assert a2.size == 3 and g.shape == (9, 3)


@pytest.mark.parametrize("kw", [dict(step=0.0), dict(ranges=((1.0, 0.0), (0.0, 1.0))),
                                dict(ranges=((0.0, np.inf), (0.0, 1.0)))])
def test_grid_validation(kw):
    args = dict(plane=PLANE, ranges=((0.0, 1.0), (0.0, 1.0)), step=0.1) | kw
    with pytest.raises(ValueError):
        ScanGrid(**args)


def test_csv_export(case3):
    grid = ScanGrid(PLANE, ((0.0, 0.1), (0.0, 0.1)), 0.1, {B("3:Q"): 0.0})
    text = classify_grid(case3, grid).to_csv()
    lines = text.splitlines()
    assert lines[0] == "lambda1,lambda2,class"
    assert len(lines) == 5
    assert lines[1] == "0,0,Feasible"


def test_uniform_grid_has_no_boundary(case3):
    grid = ScanGrid(PLANE, ((-0.1, 0.1), (-0.1, 0.1)), 0.05, {B("3:Q"): 0.0})
    res = classify_grid(case3, grid)
    assert res.counts()[CellClass.FEASIBLE] == 25
    assert extract_boundary(res).shape == (0, 2)


def test_half_plane_boundary(case3):
    # P3 = 100 is unsolvable, P3 = 0 feasible: one crossing per column along lambda2
    grid = ScanGrid(PLANE, ((0.0, 0.2), (0.0, 100.0)), (0.1, 100.0), {B("3:Q"): 0.0})
    res = classify_grid(case3, grid)
    for kind in BoundaryKind:
        pts = extract_boundary(res, kind)
        assert np.allclose(pts, [[0.0, 50.0], [0.1, 50.0], [0.2, 50.0]])


def test_hausdorff_examples():
    assert hausdorff([[0.0, 0.0]], [[0.0, 0.0]]) == 0.0
    assert hausdorff([[0.0, 0.0]], [[3.0, 4.0]]) == 5.0
    with pytest.raises(EmptyInput):
        hausdorff(np.zeros((0, 2)), [[1.0, 1.0]])


@given(st.floats(-1, 1), st.integers(0, 100))
def test_hausdorff_shift(eps, seed):
    a = np.random.default_rng(seed).uniform(-1, 1, (20, 2))
    assert hausdorff(a, a + [eps, 0.0]) == pytest.approx(abs(eps), abs=1e-12)


@given(st.integers(0, 100))
def test_hausdorff_symmetric_and_bounds_directed(seed):
    r = np.random.default_rng(seed)
    a, b = r.uniform(-1, 1, (15, 2)), r.uniform(-1, 1, (9, 2))
    h = hausdorff(a, b)
    assert h == hausdorff(b, a)
    assert directed_distances(a, b).max() <= h


def test_densify():
    d = densify([[0.0, 0.0], [1.0, 0.0]], 0.25)
    assert np.allclose(d[:, 0], [0, 0.25, 0.5, 0.75, 1.0])
    sq = densify([[0, 0], [1, 0], [1, 1], [0, 1]], 0.5, closed=True)
    assert np.allclose(sq[-1], [0, 0]) and len(sq) == 9
    with pytest.raises(ValueError):
        densify([[0, 0], [1, 0]], 0.0)


def test_branch_check_on_and_off_boundary(case3):
    lay_V = np.array([1.0, 1.0, 1.0], dtype=complex)
    # interior point: all five neighbours feasible on the same branch
    assert not branch_check(case3, PLANE, {B("3:Q"): 0.0}, [[0.0, 0.0]], [lay_V], 0.01)[0]
    # at V3 = 0.9 exactly (P = 0) the point sits on the lower-limit boundary
    q = _v3_for_q(0.9)
    V = np.array([1.0, 1.0, 0.9], dtype=complex)
    assert branch_check(case3, (B("2:P"), B("3:Q")), {B("3:P"): 0.0}, [[0.0, q]], [V], 0.01)[0]
