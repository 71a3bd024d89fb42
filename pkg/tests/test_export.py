import json
import re

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from feasbound import Binding, LimitFlag, find_seeds, plane_system
from feasbound import export
from feasbound.tracer import trace_curve

B = Binding.parse


@pytest.fixture(scope="module")
def traced(case3):
    s1 = plane_system(case3, [B("2:P"), B("3:P")], {B("3:Q"): 0.02})
    s2 = s1.with_free((0, 1))
    seed = find_seeds(s1, 1)[0]
    return s2, trace_curve(s2, s2.lift(seed.z, s1), seed_origin=seed.origin)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_roundtrips(x):
    assert float(export.fmt(x)) == x


def test_active_tags_sorted():
    flags = {14: LimitFlag.AT_LOWER, 10: LimitFlag.AT_UPPER, 3: LimitFlag.INTERIOR}
    assert export.active_tags(flags) == "10:Upper;14:Lower"
    assert export.active_tags({}) == ""


def test_golden_header(traced):
    s2, c = traced
    lines = export.curve_csv(s2, c).splitlines()
    assert lines[0] == ("step,lambda1,lambda2,Q3,sigma_min,residual_inf,radius,tau,"
                        "active_limits,corrector_iters")
    assert len(lines) == len(c) + 1
    row = lines[1].split(",")
    assert row[0] == "0" and float(row[3]) == 0.02
    assert np.array_equal([float(v) for v in row[1:3]], s2.full_params(c.steps[0].z)[:2])


def test_sidecar(traced, tmp_path):
    _, c = traced
    side = export.curve_sidecar(c, {"eps": 1e-8}, "curve_00.csv")
    assert side["schema_version"] == export.SCHEMA_VERSION
    assert side["termination"] == "ClosedLoop" and side["stalled"] is False
    assert side["seed_origin"] == "TenrFromFlat" and side["steps"] == len(c)
    p = tmp_path / "s.json"
    export.write_json(p, {**side, "arr": np.arange(2), "x": np.float64(0.5)})
    back = json.loads(p.read_text())
    assert back["arr"] == [0, 1] and back["x"] == 0.5


def test_svg_overlay():
    svg = export.svg_overlay([np.array([[0, 0], [1, 1]]), np.array([[0, 1], [1, 0]])],
                             ["a", "b"], ["P2", "P3"], points=np.array([[0.5, 0.5]]))
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert len(re.findall("<polyline", svg)) == 2 and "P2" in svg
