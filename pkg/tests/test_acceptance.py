"""Acceptance criteria 1-8, one PASS/FAIL line each.

Run with pytest (lines appear in the "acceptance criteria" summary section)
or directly: ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pytest
from matplotlib.path import Path as MPath

sys.path.insert(0, str(Path(__file__).parent))
from conftest import ACCEPTANCE_LINES  # noqa: E402

from feasbound import (  # noqa: E402
    Binding,
    BranchSwitcher,
    LimitFlag,
    RadiusPolicy,
    Termination,
    TraceSettings,
    adapt_radius,
    builtin_case,
    find_seeds,
    gsvd,
    layout,
    plane_system,
    residual,
    three_bus_case,
    trace_curve,
)
from feasbound.export import curve_csv  # noqa: E402
from feasbound.oracle import (  # noqa: E402
    ScanGrid,
    branch_check,
    classify_grid,
    densify,
    directed_distances,
    extract_boundary,
)
from feasbound.pfsystem import jacobian_fd_check, uniform  # noqa: E402
from feasbound.tracer import circle_system, trace_seeds  # noqa: E402

B = Binding.parse
HAUSDORFF_TOL = 0.02
GRID_STEP = 0.01
TOUCH_TOL = 0.01  # gamma "touches" beta when a beta point lies this close to it


@dataclass
class Outcome:
    passed: bool
    line: str
    csv: dict[str, str] = field(default_factory=dict)
    curves: list = field(default_factory=list)  # (system, curve) pairs for criterion 3
    extra: list[str] = field(default_factory=list)  # informational lines


def _polyline(sys2, curve, swap=False):
    P = np.array([sys2.full_params(z)[:2] for z in curve.points])
    if curve.termination is Termination.CLOSED_LOOP:
        P = np.vstack([P, P[:1]])
    return P[:, ::-1] if swap else P


def _trace_plane(case, plane, fixed, restarts=32, policy=None, switcher=None, limits=True):
    start = tuple(case.bus(b.bus).p_inj if b.quantity == "P" else case.bus(b.bus).q_inj for b in plane)
    s1 = plane_system(case, plane, fixed, start, limits=limits)
    s2 = s1.with_free((0, 1))
    seeds = find_seeds(s1, restarts, seed=0)
    curves = trace_seeds(s2, [s2.lift(s.z, s1) for s in seeds], policy, None,
                         [s.origin for s in seeds], {}, switcher)
    return s2, curves


def _csvs(prefix, s2, curves):
    return {f"{prefix}_{k:02d}.csv": curve_csv(s2, c) for k, c in enumerate(curves)}


# -- criteria ---------------------------------------------------------------------

def criterion1() -> Outcome:
    t0 = time.perf_counter()
    case = three_bus_case()
    plane, fixed = [B("2:P"), B("3:P")], {B("3:Q"): 0.02}
    s2, curves = _trace_plane(case, plane, fixed)
    grid = ScanGrid(tuple(plane), ((-1.6, 1.6), (-1.2, 1.2)), GRID_STEP, fixed)
    oracle = extract_boundary(classify_grid(case, grid))
    traced = np.vstack([densify(_polyline(s2, c), GRID_STEP / 5) for c in curves])
    d_to, d_from = directed_distances(traced, oracle), directed_distances(oracle, traced)
    h = max(d_to.max(), d_from.max())
    dt = time.perf_counter() - t0
    closed = all(c.termination is Termination.CLOSED_LOOP for c in curves)
    ok = h <= HAUSDORFF_TOL and closed and dt < 60
    line = (f"Hausdorff(beta1, oracle) = {h:.4f} <= {HAUSDORFF_TOL} p.u.; {len(curves)} closed curve(s), "
            f"{sum(len(c) for c in curves)} points; {dt:.1f} s < 60 s")
    return Outcome(ok, line, _csvs("c1", s2, curves), [(s2, c) for c in curves])


def criterion2() -> Outcome:
    t0 = time.perf_counter()
    case = three_bus_case()
    # Q3 first: seeding from the flat start along Q3 reaches both components
    plane, fixed = [B("3:Q"), B("3:P")], {B("2:P"): 0.02}
    s2, raw = _trace_plane(case, plane, fixed)
    closed = [c for c in raw if c.termination is Termination.CLOSED_LOOP]
    ok_a = len(closed) >= 2

    # (b) every traced point separates classes on its own solution branch
    passes = []
    for c in closed:
        lam = _polyline(s2, c)[: len(c), ::-1]  # (P3, Q3) order for the oracle plane
        V = [s2.layout.voltages(s2.split(z)[0]) for z in c.points]
        passes.append(branch_check(case, (B("3:P"), B("3:Q")), fixed, lam, V, GRID_STEP))
    frac = float(np.mean(np.concatenate(passes))) if passes else 0.0
    ok_b = frac == 1.0

    # (c) the boundary-following trace reproduces the global oracle boundary
    s2f, followed = _trace_plane(case, plane, fixed, switcher=BranchSwitcher)
    grid = ScanGrid((B("3:P"), B("3:Q")), ((-2.0, 2.0), (-0.4, 1.6)), GRID_STEP, fixed)
    oracle = extract_boundary(classify_grid(case, grid))
    traced = np.vstack([densify(_polyline(s2f, c, swap=True), GRID_STEP / 5) for c in followed])
    cover = directed_distances(oracle, traced).max()
    ok_c = cover <= HAUSDORFF_TOL

    literal = [directed_distances(densify(_polyline(s2, c, swap=True), GRID_STEP / 5), oracle).max()
               for c in closed]
    lit = [max(a, directed_distances(oracle, densify(_polyline(s2, c, swap=True), GRID_STEP / 5)).max())
           for a, c in zip(literal, closed)]
    dt = time.perf_counter() - t0
    line = (f"{len(closed)} distinct closed curves in the P3-Q3 plane at P2 = 0.02 "
            f"({', '.join(str(len(c)) for c in closed)} points); branch check {frac:.0%} of points at step "
            f"{GRID_STEP}; oracle boundary to boundary-following trace {cover:.4f} <= {HAUSDORFF_TOL}; {dt:.1f} s")
    extra = [f"criterion 2 (info): per-curve Hausdorff to the global oracle boundary = "
             f"{', '.join(f'{v:.3f}' for v in lit)} p.u.; each raw curve also runs along solution branches "
             f"the flat-start oracle classifies as interior, see decisions ledger"]
    csv = {**_csvs("c2_raw", s2, closed), **_csvs("c2_follow", s2f, followed)}
    return Outcome(ok_a and ok_b and ok_c, line, csv, [(s2, c) for c in closed] + [(s2f, c) for c in followed],
                   extra)


def criterion3(curve_sets) -> Outcome:
    h_max = sig_max = 0.0
    n = 0
    for s2, c in curve_sets:
        for z in c.points:
            x, lam, _ = s2.split(z)
            rep = residual(s2.case, x, lam, s2.limits)
            sig = np.linalg.svd(rep.jac.toarray(), compute_uv=False)[-1]
            h_max = max(h_max, rep.norm_inf, sig)
            sig_max = max(sig_max, sig)
            n += 1
    ok = n > 0 and h_max < 1e-8 and sig_max < 1e-6
    return Outcome(ok, f"{n} points: max |H|_inf = {h_max:.2e} < 1e-8, max sigma_min = {sig_max:.2e} < 1e-6")


def criterion4() -> Outcome:
    sys_ = circle_system(1.0)
    t0 = time.perf_counter()
    c = trace_curve(sys_, np.array([1.0, 0.0]), RadiusPolicy(a_max=0.2), TraceSettings(box=((-2, 2), (-2, 2))))
    dt = time.perf_counter() - t0
    P = c.points
    radial = np.max(np.abs(np.linalg.norm(P, axis=1) - 1.0))
    spacing = max(abs(np.linalg.norm(P[k] - P[k - 1]) - c.steps[k].radius_used) for k in range(1, len(P)))
    dots = [c.steps[k - 1].tangent.delta_z @ c.steps[k].tangent.delta_z for k in range(1, len(P))]
    ok = (c.termination is Termination.CLOSED_LOOP and radial < 1e-8 and spacing < 1e-7
          and min(dots) > 0 and dt < 1.0)
    csv = {"c4_circle.csv": "z1,z2,radius\n" + "".join(
        f"{z[0]:.17g},{z[1]:.17g},{s.radius_used:.17g}\n" for z, s in zip(P, c.steps))}
    line = (f"{c.termination.value} after {len(c)} points; radial error {radial:.1e} < 1e-8, "
            f"spacing error {spacing:.1e} < 1e-7, min tangent dot {min(dots):.3f} > 0; {dt:.3f} s < 1 s")
    return Outcome(ok, line, csv)


def criterion5() -> Outcome:
    rng = np.random.default_rng(2024)
    worst = {}
    for name, case, h in [("3-bus", three_bus_case(), 1e-6),
                          ("14-bus", builtin_case("case14", vlimits=(0.9, 1.1), neutralize_transformers=True), 1e-4)]:
        lay = layout(case)
        nb = case.n_bus
        errs = []
        for _ in range(100):
            V = rng.uniform(0.8, 1.2, nb) * np.exp(1j * rng.uniform(-0.5, 0.5, nb))
            x = lay.state_from_voltages(V)
            x[lay.s_up[lay.pq]] = rng.uniform(-0.5, 0.5, lay.pq.size)
            x[lay.s_lo[lay.pq]] = rng.uniform(-0.5, 0.5, lay.pq.size)
            errs.append(jacobian_fd_check(case, x, uniform(1.0), h))
        worst[name] = max(errs)
    sv = 0.0
    for n in (3, 5, 10, 20, 35, 50):
        for _ in range(5):
            A = rng.standard_normal((n, n))
            sv = max(sv, abs(gsvd(A, "iterative").sigma_min - np.linalg.svd(A, compute_uv=False)[-1]))
    ok = max(worst.values()) < 1e-6 and sv < 1e-10
    line = (f"FD relative error 3-bus {worst['3-bus']:.1e}, 14-bus {worst['14-bus']:.1e} < 1e-6 "
            f"(100 states each); gsvd vs dense SVD {sv:.1e} < 1e-10 up to 50x50")
    return Outcome(ok, line)


def criterion6() -> Outcome:
    pol = RadiusPolicy(a_max=0.1, b_coeff=0.05, r_min=1e-4, r_max=0.2)
    e = math.e
    examples = [(0.0, (0.1 - 0.05) / 2), (1.0, (0.1 * e - 0.05 / e) / (e + 1 / e)), (60.0, 0.1)]
    err = max(abs(adapt_radius(pol, t) - r) for t, r in examples)
    taus = np.linspace(0, 20, 2001)
    rs = [adapt_radius(RadiusPolicy(), t) for t in taus]
    mono = all(b >= a for a, b in zip(rs, rs[1:]))

    case = three_bus_case()
    s1 = plane_system(case, [B("2:P"), B("3:P")], {B("3:Q"): 0.02})
    s2 = s1.with_free((0, 1))
    z0 = s2.lift(find_seeds(s1, 1)[0].z, s1)
    policy = RadiusPolicy()
    ad = trace_curve(s2, z0, policy)
    arc = sum(s.radius_used for s in ad.steps[1:])
    fixed = trace_curve(s2, z0, policy, TraceSettings(adaptive=False, fixed_radius=policy.r_min,
                                                      max_steps=ad.pc_cycles + 1))
    # the fixed tracer has not closed within one more cycle than the adaptive one needed
    ok_speed = ad.termination is Termination.CLOSED_LOOP and fixed.termination is not Termination.CLOSED_LOOP
    ok = err < 1e-12 and mono and ok_speed
    line = (f"adapt_radius example error {err:.1e} < 1e-12; monotone in tau; adaptive closed in {ad.pc_cycles} cycles, "
            f"fixed r = {policy.r_min:g} still {fixed.termination.value} after {fixed.pc_cycles} "
            f"(arc {arc:.2f} needs >= {arc / policy.r_min:.0f})")
    csv = {"c6_adaptive.csv": curve_csv(s2, ad), "c6_fixed.csv": curve_csv(s2, fixed)}
    return Outcome(ok, line, csv, [(s2, ad), (s2, fixed)])


def _limit_active(step) -> bool:
    return any(f is not LimitFlag.INTERIOR for f in step.flags.values())


def criterion7() -> Outcome:
    t0 = time.perf_counter()
    case = builtin_case("case14", vlimits=(0.9, 1.1), neutralize_transformers=True)
    plane = [B("6:P"), B("14:P")]
    sb, beta = _trace_plane(case, plane, {}, switcher=BranchSwitcher)
    trans = 0
    for c in beta:
        act = [_limit_active(s) for s in c.steps]
        if c.termination is Termination.CLOSED_LOOP:
            act.append(act[0])
        trans += sum(a != b for a, b in zip(act, act[1:]))
    sg, gamma = _trace_plane(case, plane, {}, policy=RadiusPolicy(a_max=0.05, r_max=0.05), limits=False)
    polys = [_polyline(sg, c) for c in gamma]
    dense = np.vstack([densify(p, 0.005) for p in polys])
    Q = np.vstack([_polyline(sb, c) for c in beta])
    inside = np.zeros(len(Q), bool)
    for p in polys:
        inside |= MPath(p).contains_points(Q)
    near = directed_distances(Q, dense) <= TOUCH_TOL
    enclosed = bool(np.all(inside | near))
    dt = time.perf_counter() - t0
    ok = trans >= 1 and enclosed
    line = (f"14-bus P6-P14: {len(beta)} feasibility curve(s), {trans} limit/solvability transitions; "
            f"solvability trace ({len(gamma)} curves) encloses {inside.mean():.0%} of points and touches "
            f"the rest within {TOUCH_TOL} p.u.: {'yes' if enclosed else 'no'}; {dt:.1f} s")
    extra = ["criterion 7 (info): IEEE 300-bus out of acceptance, its Q14 = 0 P8-P14 plane has no "
             "voltage-feasible point under [0.9, 1.1] (see decisions ledger)"]
    csv = {**_csvs("c7_beta", sb, beta), **_csvs("c7_gamma", sg, gamma)}
    return Outcome(ok, line, csv, [], extra)


PRODUCERS = {1: criterion1, 2: criterion2, 4: criterion4, 5: criterion5, 6: criterion6, 7: criterion7}
_CACHE: dict[int, Outcome] = {}


def outcome(k: int) -> Outcome:
    if k == 3:
        if 3 not in _CACHE:
            sets = [cs for j in (1, 2, 6) for cs in outcome(j).curves]
            _CACHE[3] = criterion3(sets)
        return _CACHE[3]
    if k not in _CACHE:
        _CACHE[k] = PRODUCERS[k]()
    return _CACHE[k]


def criterion8() -> Outcome:
    files = diffs = 0
    for k, fn in PRODUCERS.items():
        first, again = outcome(k).csv, fn().csv
        files += len(first)
        diffs += sum(first.get(n) != again.get(n) for n in set(first) | set(again))
    ok = files > 0 and diffs == 0
    return Outcome(ok, f"{files} CSV outputs of criteria 1-7 regenerated, {diffs} differ byte-wise")


def record(k: int, res: Outcome) -> None:
    ACCEPTANCE_LINES.append(f"criterion {k}: {'PASS' if res.passed else 'FAIL'}  {res.line}")
    ACCEPTANCE_LINES.extend(res.extra)


@pytest.mark.parametrize("k", range(1, 9))
def test_criterion(k):
    res = criterion8() if k == 8 else outcome(k)
    record(k, res)
    assert res.passed, res.line


if __name__ == "__main__":
    for k in range(1, 9):
        record(k, criterion8() if k == 8 else outcome(k))
    print("\n".join(ACCEPTANCE_LINES))
    raise SystemExit(0 if all(line.split()[2] == "PASS" for line in ACCEPTANCE_LINES
                              if line.startswith("criterion") and "(info)" not in line) else 1)
