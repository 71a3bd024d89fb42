"""Brute-force ground truth: grid scan of a parameter plane.

Every grid point gets a plain power flow (no slack rows) from the flat start
and eight perturbed starts.  The point is

* ``Feasible`` if some converged solution respects every PQ voltage bound,
* ``SolvableOnly`` if solutions exist but all violate a bound,
* ``Unsolvable`` if no start converged.

All grid points and starts are solved together by a vectorised dense Newton
iteration, which is fast for the small networks this module is meant for.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyInput
from .netcase import NetworkCase
from .pfsystem import Binding, ParameterVector, layout

log = logging.getLogger(__name__)

N_PERTURBED = 8
PERTURBATION = 0.3
PF_TOL = 1e-10
V_TOL = 1e-9


class CellClass(str, Enum):
    FEASIBLE = "Feasible"
    SOLVABLE_ONLY = "SolvableOnly"
    UNSOLVABLE = "Unsolvable"


CODES = {CellClass.FEASIBLE: 0, CellClass.SOLVABLE_ONLY: 1, CellClass.UNSOLVABLE: 2}
CLASSES = tuple(CODES)


class BoundaryKind(str, Enum):
    FEASIBILITY = "Feasibility"
    SOLVABILITY = "Solvability"


@dataclass(frozen=True)
class ScanGrid:
    """Regular grid over two parameters; everything else held at ``fixed``."""

    plane: tuple[Binding, Binding]
    ranges: tuple[tuple[float, float], tuple[float, float]]
    step: tuple[float, float]
    fixed: Mapping[Binding, float] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.plane) != 2:
            raise ValueError("plane needs exactly two bindings")
        step = self.step if np.ndim(self.step) else (self.step, self.step)
        object.__setattr__(self, "step", tuple(float(s) for s in step))
        for (lo, hi), s in zip(self.ranges, self.step):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise ValueError("ranges must be finite with lo <= hi")
            if not s > 0:
                raise ValueError("step must be positive")

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        out = []
        for (lo, hi), s in zip(self.ranges, self.step):
            n = int(np.floor((hi - lo) / s + 1e-9)) + 1
            out.append(lo + s * np.arange(n))
        return out[0], out[1]

    @property
    def shape(self) -> tuple[int, int]:
        a, b = self.axes
        return a.size, b.size

    def params(self, l1: float, l2: float) -> ParameterVector:
        bindings = tuple(self.plane) + tuple(self.fixed)
        return ParameterVector(bindings, [l1, l2, *self.fixed.values()])


@dataclass(frozen=True)
class ScanCell:
    lam: tuple[float, float]
    cls: CellClass
    pf_iters: int


@dataclass
class ScanResult:
    grid: ScanGrid
    codes: np.ndarray  # (n1, n2) int8, indices into CLASSES
    iters: np.ndarray  # total Newton iterations spent per point

    def cls(self, i: int, j: int) -> CellClass:
        return CLASSES[self.codes[i, j]]

    def counts(self) -> dict[CellClass, int]:
        return {c: int(np.sum(self.codes == k)) for c, k in CODES.items()}

    def cells(self):
        a1, a2 = self.grid.axes
        for i, l1 in enumerate(a1):
            for j, l2 in enumerate(a2):
                yield ScanCell((float(l1), float(l2)), self.cls(i, j), int(self.iters[i, j]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda1", "lambda2", "class"])
        for c in self.cells():
            w.writerow([f"{c.lam[0]:.17g}", f"{c.lam[1]:.17g}", c.cls.value])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# batched power flow


class _BatchPF:
    """Plain power flow ``F(x) = 0`` for many injection vectors at once."""

    def __init__(self, case: NetworkCase):
        self.lay = layout(case, limits=False)
        self.Y = case.ybus.Y.toarray()
        self.nb = case.n_bus

    def voltages(self, X):
        lay = self.lay
        V = np.empty((X.shape[0], self.nb), dtype=complex)
        V[:, lay.slack] = lay.v_slack
        ns = lay.nonslack
        V[:, ns] = X[:, lay.vr[ns]] + 1j * X[:, lay.vm[ns]]
        return V

    def residual(self, X, P, Q):
        lay = self.lay
        V = self.voltages(X)
        S = V * np.conj(V @ self.Y.T)
        F = np.empty_like(X)
        ns, pq, pv = lay.nonslack, lay.pq, lay.pv
        F[:, lay.row_p[ns]] = S[:, ns].real - P[:, ns]
        F[:, lay.row_q[pq]] = S[:, pq].imag - Q[:, pq]
        F[:, lay.row_q[pv]] = np.abs(V[:, pv]) ** 2 - lay.v_ref[pv] ** 2
        return F, V

    def jacobian(self, V):
        lay = self.lay
        K, n = V.shape[0], lay.n
        cI = np.conj(V @ self.Y.T)
        VY = V[:, :, None] * np.conj(self.Y)[None]
        dSr = VY.copy()
        idx = np.arange(self.nb)
        dSr[:, idx, idx] += cI
        dSm = -1j * VY
        dSm[:, idx, idx] += 1j * cI
        ns, pq, pv = lay.nonslack, lay.pq, lay.pv
        J = np.zeros((K, n, n))
        cr, cm = lay.vr[ns], lay.vm[ns]
        rp = lay.row_p[ns]
        J[:, rp[:, None], cr[None, :]] = dSr[:, ns][:, :, ns].real
        J[:, rp[:, None], cm[None, :]] = dSm[:, ns][:, :, ns].real
        rq = lay.row_q[pq]
        J[:, rq[:, None], cr[None, :]] = dSr[:, pq][:, :, ns].imag
        J[:, rq[:, None], cm[None, :]] = dSm[:, pq][:, :, ns].imag
        rv = lay.row_q[pv]
        J[:, rv, lay.vr[pv]] = 2 * V[:, pv].real
        J[:, rv, lay.vm[pv]] = 2 * V[:, pv].imag
        return J

    def solve(self, X, P, Q, max_iter=30, tol=PF_TOL):
        """Damped Newton on every row of ``X``; returns ``(X, converged, iters)``.

        A row is dropped once it converges, blows up, or stalls (no decrease
        of ``|F|^2`` even at step length 1/256).
        """
        X = X.copy()
        conv = np.zeros(X.shape[0], dtype=bool)
        iters = np.zeros(X.shape[0], dtype=int)
        idx = np.arange(X.shape[0])
        Xa, Pa, Qa = X, P, Q
        Fa, Va = self.residual(Xa, Pa, Qa)
        for _ in range(max_iter + 1):
            norm = np.max(np.abs(Fa), axis=1)
            done = np.isfinite(norm) & (norm < tol)
            conv[idx[done]] = True
            X[idx] = Xa
            keep = ~done & np.isfinite(norm) & (np.max(np.abs(Xa), axis=1) < 1e3)
            if _ == max_iter or not keep.any():
                break
            idx, Xa, Pa, Qa, Fa, Va = idx[keep], Xa[keep], Pa[keep], Qa[keep], Fa[keep], Va[keep]
            J = self.jacobian(Va)
            try:
                step = np.linalg.solve(J, -Fa[:, :, None])[:, :, 0]
            except np.linalg.LinAlgError:
                step = np.stack([np.linalg.lstsq(j, -f, rcond=None)[0] for j, f in zip(J, Fa)])
            iters[idx] += 1
            phi = np.sum(Fa**2, axis=1)
            alpha = np.ones(idx.size)
            X_new = Xa + step
            F_new, V_new = self.residual(X_new, Pa, Qa)
            bad = ~(np.sum(F_new**2, axis=1) < phi)
            for _h in range(8):
                if not bad.any():
                    break
                alpha[bad] *= 0.5
                Xb = Xa[bad] + alpha[bad, None] * step[bad]
                Fb, Vb = self.residual(Xb, Pa[bad], Qa[bad])
                X_new[bad], F_new[bad], V_new[bad] = Xb, Fb, Vb
                bad = ~(np.sum(F_new**2, axis=1) < phi)
            moving = ~bad
            idx, Xa, Pa, Qa = idx[moving], X_new[moving], Pa[moving], Qa[moving]
            Fa, Va = F_new[moving], V_new[moving]
            if idx.size == 0:
                break
        return X, conv, iters


def _starts(case: NetworkCase, seed: int) -> np.ndarray:
    lay = layout(case, limits=False)
    rng = np.random.default_rng(seed)
    V0 = np.ones(case.n_bus, dtype=complex)
    V0[lay.pv] = lay.v_ref[lay.pv]
    out = [lay.state_from_voltages(V0)]
    ns = lay.nonslack
    for _ in range(N_PERTURBED):
        V = V0.copy()
        V[ns] += rng.uniform(-PERTURBATION, PERTURBATION, ns.size) + 1j * rng.uniform(
            -PERTURBATION, PERTURBATION, ns.size)
        out.append(lay.state_from_voltages(V))
    return np.array(out)


def _classify_batch(case: NetworkCase, P: np.ndarray, Q: np.ndarray, seed: int, chunk: int = 50000):
    """Class codes (see ``CODES``) and Newton iteration counts for each row of ``P``/``Q``.

    Starts are tried in order; a point leaves the pool as soon as one start
    lands inside the voltage bounds.
    """
    pf = _BatchPF(case)
    lay = pf.lay
    starts = _starts(case, seed)
    m = P.shape[0]
    codes = np.full(m, CODES[CellClass.UNSOLVABLE], dtype=np.int8)
    iters = np.zeros(m, dtype=int)
    vmin, vmax = lay.v_min[lay.pq], lay.v_max[lay.pq]
    pending = np.arange(m)
    for x0 in starts:
        for lo in range(0, pending.size, chunk):
            idx = pending[lo : lo + chunk]
            X, conv, it = pf.solve(np.tile(x0, (idx.size, 1)), P[idx], Q[idx])
            Vm = np.abs(pf.voltages(X)[:, lay.pq])
            inside = np.all((Vm >= vmin - V_TOL) & (Vm <= vmax + V_TOL), axis=1) & conv
            iters[idx] += it
            codes[idx[inside]] = CODES[CellClass.FEASIBLE]
            codes[idx[conv & ~inside]] = CODES[CellClass.SOLVABLE_ONLY]
        pending = pending[codes[pending] != CODES[CellClass.FEASIBLE]]
        if pending.size == 0:
            break
    return codes, iters


def _injections(case, params_list: Sequence[ParameterVector]):
    lay = layout(case, limits=False)
    P = np.empty((len(params_list), case.n_bus))
    Q = np.empty_like(P)
    for k, lam in enumerate(params_list):
        P[k], Q[k], _, _ = lay.injections(lam)
    return P, Q


def classify_point(case: NetworkCase, lam_pair, fixed: Mapping[Binding, float] | None = None,
                   plane: Sequence[Binding] | None = None, seed: int = 0) -> ScanCell:
    """Classify one parameter point.

    ``plane`` names the two bindings that ``lam_pair`` sets; without it the
    pair is only meaningful together with ``fixed`` and defaults to ``P`` at
    the first two non-slack buses.
    """
    if plane is None:
        lay = layout(case, limits=False)
        ids = [case.buses[i].id for i in lay.nonslack[:2]]
        plane = (Binding(ids[0], "P"), Binding(ids[1], "P"))
    lam = ParameterVector(tuple(plane) + tuple(fixed or {}), [*lam_pair, *(fixed or {}).values()])
    layout(case, limits=False).check_bindings(lam.bindings)
    P, Q = _injections(case, [lam])
    codes, it = _classify_batch(case, P, Q, seed)
    return ScanCell((float(lam_pair[0]), float(lam_pair[1])), CLASSES[codes[0]], int(it[0]))


def classify_grid(case: NetworkCase, grid: ScanGrid, seed: int = 0) -> ScanResult:
    """Classify every grid point (row-major over ``grid.axes``)."""
    a1, a2 = grid.axes
    layout(case, limits=False).check_bindings(tuple(grid.plane) + tuple(grid.fixed))
    params = [grid.params(l1, l2) for l1 in a1 for l2 in a2]
    P, Q = _injections(case, params)
    codes, it = _classify_batch(case, P, Q, seed)
    shape = (a1.size, a2.size)
    return ScanResult(grid, codes.reshape(shape), it.reshape(shape))


def extract_boundary(result: ScanResult, which: BoundaryKind | str = BoundaryKind.FEASIBILITY) -> np.ndarray:
    """Midpoints of grid edges whose endpoints fall on different sides.

    Feasibility compares ``Feasible`` against the rest, solvability
    compares ``Unsolvable`` against the rest.  Returns an ``(m, 2)`` array.
    """
    which = BoundaryKind(which)
    C = result.codes
    if which is BoundaryKind.FEASIBILITY:
        ind = C == CODES[CellClass.FEASIBLE]
    else:
        ind = C != CODES[CellClass.UNSOLVABLE]
    a1, a2 = result.grid.axes
    pts = []
    d1 = ind[1:, :] != ind[:-1, :]
    i, j = np.nonzero(d1)
    pts.append(np.column_stack([(a1[i] + a1[i + 1]) / 2, a2[j]]))
    d2 = ind[:, 1:] != ind[:, :-1]
    i, j = np.nonzero(d2)
    pts.append(np.column_stack([a1[i], (a2[j] + a2[j + 1]) / 2]))
    out = np.vstack(pts) if pts else np.zeros((0, 2))
    return out[np.lexsort((out[:, 1], out[:, 0]))] if out.size else out.reshape(0, 2)


def _as_points(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        raise EmptyInput("point set is empty")
    return a.reshape(-1, a.shape[-1]) if a.ndim > 1 else a.reshape(1, -1)


def directed_distances(a, b) -> np.ndarray:
    """Distance from each point of ``a`` to the nearest point of ``b``."""
    a, b = _as_points(a), _as_points(b)
    return cKDTree(b).query(a)[0]


def hausdorff(a, b) -> float:
    """Symmetric Hausdorff distance between two finite point sets."""
    return float(max(directed_distances(a, b).max(), directed_distances(b, a).max()))


def densify(polyline, max_spacing: float, closed: bool = False) -> np.ndarray:
    """Insert points along straight segments so neighbours are at most ``max_spacing`` apart."""
    pts = _as_points(polyline)
    if not max_spacing > 0:
        raise ValueError("max_spacing must be positive")
    if closed and len(pts) > 1:
        pts = np.vstack([pts, pts[:1]])
    out = [pts[:1]]
    for p, q in zip(pts[:-1], pts[1:]):
        k = max(1, int(np.ceil(np.linalg.norm(q - p) / max_spacing)))
        t = np.arange(1, k + 1)[:, None] / k
        out.append(p + t * (q - p))
    return np.vstack(out)


def branch_check(case: NetworkCase, plane: Sequence[Binding], fixed: Mapping[Binding, float] | None,
                 lam_points, voltages, step: float, jump_tol: float = 0.3) -> np.ndarray:
    """Check that each point is a class change on its own solution branch.

    For point ``k`` (parameters ``lam_points[k]``, bus voltages
    ``voltages[k]``), plain power flow is solved at the point and at its four
    axis neighbours ``±step`` starting from ``voltages[k]``.  A neighbour
    whose Newton iterate lands farther than ``jump_tol`` from the start has
    left the branch and counts as unsolvable.  The point passes when the
    five classes are not all equal.

    Unlike :func:`classify_grid` this sees every branch the traced curves
    live on, including those a flat-start multistart never reaches.
    """
    fixed = dict(fixed or {})
    lam_points = np.atleast_2d(np.asarray(lam_points, dtype=float))
    Vs = np.atleast_2d(np.asarray(voltages, dtype=complex))
    lay = layout(case, limits=False)
    offsets = np.array([[0, 0], [step, 0], [-step, 0], [0, step], [0, -step]])
    m, q = lam_points.shape[0], offsets.shape[0]
    pts = (lam_points[:, None, :] + offsets[None]).reshape(-1, 2)
    bindings = tuple(plane) + tuple(fixed)
    params = [ParameterVector(bindings, [a, b, *fixed.values()]) for a, b in pts]
    P, Q = _injections(case, params)
    X0 = np.repeat(np.array([lay.state_from_voltages(V) for V in Vs]), q, axis=0)
    pf = _BatchPF(case)
    X, conv, _ = pf.solve(X0, P, Q)
    conv &= np.max(np.abs(X - X0), axis=1) <= jump_tol
    Vm = np.abs(pf.voltages(X)[:, lay.pq])
    inside = np.all((Vm >= lay.v_min[lay.pq] - V_TOL) & (Vm <= lay.v_max[lay.pq] + V_TOL), axis=1)
    codes = np.where(conv, np.where(inside, 0, 1), 2).reshape(m, q)
    return np.any(codes != codes[:, :1], axis=1)
