"""Spherical predictor-corrector continuation of 1-D implicit curves.

Any object with ``dim``, ``n_eq = dim - 1`` and ``evaluate(z) -> (H, dH, extra)``
can be traced; :class:`~feasbound.boundary.BoundarySystem` with two free
parameters is the main client, :class:`ImplicitSystem` wraps plain callables.

One cycle from an accepted point ``z_k`` with unit tangent ``t``:

1. predict ``z_k + r t`` on the sphere of radius ``r`` around ``z_k``;
2. Newton-correct on ``[H(z); |z - z_k|^2 - r^2] = 0``;
3. reject backward intersections (reversion) by retrying with ``r + dr``;
4. estimate the radius of curvature from consecutive tangents and pick
   the next radius from the saturating ``tanh``-type law.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, CorrectorDiverged, DegenerateSigmaError, RankDeficientError

log = logging.getLogger(__name__)

DENSE_TANGENT_MAX = 400


class Termination(str, Enum):
    CLOSED_LOOP = "ClosedLoop"
    PARAMETER_BOX = "ParameterBox"
    MAX_STEPS = "MaxSteps"
    STALLED = "Stalled"


@dataclass(frozen=True)
class RadiusPolicy:
    """Sphere radius ``r(tau) = (a e^tau - b e^-tau) / (e^tau + e^-tau)``, clamped.

    ``a_max`` is the flat-curve asymptote.  The default ``b_coeff`` makes
    ``r(0) = r_min``.
    """

    a_max: float = 0.2
    b_coeff: float | None = None
    r_min: float = 1e-4
    r_max: float = 0.2

    def __post_init__(self):
        if self.b_coeff is None:
            object.__setattr__(self, "b_coeff", self.a_max - 2.0 * self.r_min)
        if not self.a_max > 0:
            raise ValueError("a_max must be positive")
        if not (self.a_max - self.b_coeff) / 2.0 > 0:
            raise ValueError("need a_max > b_coeff so that r(0) > 0")
        if not 0 < self.r_min <= self.r_max:
            raise ValueError("need 0 < r_min <= r_max")


@dataclass(frozen=True)
class TraceSettings:
    eps: float = 1e-8
    max_corrector_iter: int = 25
    eta_min: float = 1.0 / 16
    max_retries: int = 8
    max_steps: int = 10000
    tau_cap: float = 1e3
    dr_frac: float = 0.1
    min_closed_steps: int = 10
    box: tuple | None = None  # ((lo1, hi1), (lo2, hi2)) on the free parameters
    adaptive: bool = True
    fixed_radius: float | None = None
    initial_radius: float | None = None
    rank_tol: float = 1e-12


@dataclass(frozen=True)
class SphereConstraint:
    center: np.ndarray
    radius: float

    def value(self, z) -> float:
        d = np.asarray(z) - self.center
        return float(d @ d - self.radius**2)

    def distance_error(self, z) -> float:
        return abs(float(np.linalg.norm(np.asarray(z) - self.center)) - self.radius)


@dataclass(frozen=True)
class TangentInfo:
    delta_z: np.ndarray
    orient_sign: int


@dataclass
class TraceStep:
    z: np.ndarray
    tangent: TangentInfo
    radius_used: float
    curvature_tau: float
    flags: dict = field(default_factory=dict)
    corrector_iters: int = 0
    residual_inf: float = 0.0
    sigma_min: float = float("nan")


@dataclass
class BoundaryCurve:
    steps: list[TraceStep]
    termination: Termination
    seed_origin: str = ""
    label: dict = field(default_factory=dict)
    pc_cycles: int = 0
    reversions: int = 0
    radius_halvings: int = 0
    switches: list[int] = field(default_factory=list)  # step index of each branch switch point

    @property
    def points(self) -> np.ndarray:
        return np.array([s.z for s in self.steps])

    def __len__(self):
        return len(self.steps)


class ImplicitSystem:
    """``H: R^dim -> R^(dim-1)`` given by callables; for tests and demos."""

    def __init__(self, fn: Callable, jac: Callable, dim: int, param_index: Sequence[int] | None = None):
        self.fn, self.jac, self.dim = fn, jac, dim
        self.n_eq = dim - 1
        self._pidx = list(range(dim)) if param_index is None else list(param_index)

    def evaluate(self, z, need_gradient=True):
        H = np.atleast_1d(np.asarray(self.fn(z), dtype=float))
        dH = np.atleast_2d(np.asarray(self.jac(z), dtype=float)) if need_gradient else None
        return H, dH, None

    def lam_free(self, z):
        return np.asarray(z)[self._pidx]


def circle_system(radius: float = 1.0) -> ImplicitSystem:
    """``z1^2 + z2^2 - radius^2 = 0``."""
    return ImplicitSystem(
        lambda z: [z[0] ** 2 + z[1] ** 2 - radius**2],
        lambda z: [[2 * z[0], 2 * z[1]]],
        2,
    )


# ---------------------------------------------------------------------------
# tangent


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


def _perm_sign(perm) -> int:
    perm = np.asarray(perm)
    seen = np.zeros(perm.size, dtype=bool)
    sign = 1
    for i in range(perm.size):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def _lu_det_sign(lu) -> int:
    d = lu.U.diagonal()
    s = int(np.prod(np.sign(d)))
    return s * _perm_sign(lu.perm_r) * _perm_sign(lu.perm_c)


def _tangent_svd(dH: np.ndarray, rank_tol: float):
    # dH^T = M [D; 0] N^T
    M, d, Nt = la.svd(dH.T, full_matrices=True)
    if d.size and d[-1] <= rank_tol * max(d[0], 1.0):
        raise RankDeficientError(f"boundary Jacobian is rank deficient (s_min={d[-1]:.2e})")
    t = M[:, -1].copy()
    # det [dH; t^T] = det(N) det(D) det(M), det(D) > 0
    sign = int(np.sign(np.linalg.det(M) * np.linalg.det(Nt)))
    return t, sign or 1


def _tangent_bordered(dH, ref: np.ndarray, rank_tol: float):
    A = sp.vstack([sp.csr_matrix(dH), sp.csr_matrix(ref[None, :])]).tocsc()
    try:
        lu = spla.splu(A)
    except RuntimeError:
        raise RankDeficientError("bordered tangent system is singular") from None
    e = np.zeros(A.shape[0])
    e[-1] = 1.0
    w = lu.solve(e)
    nrm = np.linalg.norm(w)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise RankDeficientError("bordered tangent system is singular")
    # det [dH; w^T] = det(A) * |w|^2, so orientation follows sign(det A)
    return w / nrm, _lu_det_sign(lu)


def tangent(sys, z, prev: np.ndarray | None = None, dH=None, rank_tol: float = 1e-12,
            method: str = "auto") -> TangentInfo:
    """Unit tangent spanning ``ker dH(z)``.

    The orientation makes ``det [dH; t^T] > 0``; when ``prev`` is given the
    result is additionally flipped to keep ``t . prev >= 0``.
    """
    if dH is None:
        dH = sys.evaluate(z)[1]
    dim = dH.shape[1]
    if method == "auto":
        method = "svd" if dim <= DENSE_TANGENT_MAX else "bordered"
    if method == "svd":
        t, sign = _tangent_svd(_dense(dH), rank_tol)
    else:
        ref = prev
        if ref is None:
            ref = np.zeros(dim)
            ref[-1] = 1.0
        try:
            t, sign = _tangent_bordered(dH, ref, rank_tol)
        except RankDeficientError:
            if prev is not None:
                raise
            ref = np.zeros(dim)
            ref[-2] = 1.0
            t, sign = _tangent_bordered(dH, ref, rank_tol)
    if sign < 0:
        t = -t
    orient = 1
    if prev is not None and float(t @ prev) < 0:
        t = -t
        orient = -1
    return TangentInfo(t, orient)


# ---------------------------------------------------------------------------
# predictor / corrector


def predict(z1, tangent_vec, r: float) -> np.ndarray:
    if not r > 0:
        raise ValueError("radius must be positive")
    return np.asarray(z1, dtype=float) + r * np.asarray(tangent_vec, dtype=float)


def _solve_square(A, b):
    if sp.issparse(A):
        x = spla.spsolve(A.tocsc(), b)
    else:
        x = np.linalg.solve(A, b)
    return np.asarray(x).reshape(-1)


def correct(sys, sphere: SphereConstraint, z_pred, eps: float = 1e-8, max_iter: int = 25,
            eta_min: float = 1.0 / 16):
    """Newton on ``[H(z); S(z, r)] = 0`` from ``z_pred``.

    Returns ``(z, iterations)``.  Each Newton step is scaled by
    ``eta in {1, 1/2, ..., eta_min}`` chosen by backtracking on the residual.
    Converged when the step, ``|H|_inf`` and the distance-to-sphere error are
    all below ``eps``.
    """
    c, r = sphere.center, sphere.radius
    z = np.array(z_pred, dtype=float)

    def system(z):
        H, dH, _ = sys.evaluate(z)
        d = z - c
        R = np.concatenate([H, [d @ d - r * r]])
        if sp.issparse(dH):
            A = sp.vstack([dH, sp.csr_matrix(2.0 * d[None, :])]).tocsc()
        else:
            A = np.vstack([dH, 2.0 * d[None, :]])
        return R, A

    try:
        R, A = system(z)
        for it in range(1, max_iter + 1):
            try:
                step = _solve_square(A, -R)
            except (np.linalg.LinAlgError, RuntimeError):
                raise CorrectorDiverged(it, "singular corrector matrix") from None
            if not np.all(np.isfinite(step)):
                raise CorrectorDiverged(it, "singular corrector matrix")
            phi = float(R @ R)
            eta = 1.0
            while True:
                trial = z + eta * step
                R_t, A_t = system(trial)
                if float(R_t @ R_t) < phi or eta <= eta_min:
                    break
                eta *= 0.5
            moved = eta * float(np.linalg.norm(step))
            z, R, A = trial, R_t, A_t
            h_inf = float(np.max(np.abs(R[:-1]))) if R.size > 1 else 0.0
            if not np.isfinite(h_inf) or h_inf > 1e8:
                raise CorrectorDiverged(it, "corrector blew up")
            if moved <= eps and h_inf < eps and sphere.distance_error(z) < eps:
                return z, it
    except (DegenerateSigmaError, ConvergenceError) as exc:
        raise CorrectorDiverged(0, f"singular value evaluation failed: {exc}") from None
    raise CorrectorDiverged(max_iter)


# ---------------------------------------------------------------------------
# reversion, curvature, radius


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def detect_reversion(z_prev, z_new, sphere: SphereConstraint, tangent_vec) -> bool:
    """True when ``z_new`` is the backward sphere/curve intersection.

    Decided by the half-space test ``(z_new - center) . t < 0``.
    """
    return float((np.asarray(z_new) - sphere.center) @ np.asarray(tangent_vec)) < 0.0


def reversion_by_normals(z_prev, z_new, sphere: SphereConstraint, tangent_vec) -> bool:
    """Cross-check of :func:`detect_reversion` via componentwise normal angles.

    Compares ``arccos`` of the unit sphere normals at the candidate with
    those at the previous point and along the forward tangent; the candidate
    is backward when it is closer to the previous point's angles.
    """
    n_new = np.arccos(np.clip(_unit(np.asarray(z_new) - sphere.center), -1, 1))
    n_fwd = np.arccos(np.clip(_unit(tangent_vec), -1, 1))
    if z_prev is None:
        n_back = np.arccos(np.clip(-_unit(tangent_vec), -1, 1))
    else:
        n_back = np.arccos(np.clip(_unit(np.asarray(z_prev) - sphere.center), -1, 1))
    return float(np.linalg.norm(n_new - n_back)) < float(np.linalg.norm(n_new - n_fwd))


def curvature_tau(t_prev, t_new, arc_step: float, tau_cap: float = 1e3) -> float:
    """Radius of curvature from two unit tangents ``arc_step`` apart.

    Uses the turning angle ``theta`` between the tangents (its sine is the
    norm of the tangent change orthogonal to ``t_new``): ``tau = arc/theta``.
    """
    if not arc_step > 0:
        raise ValueError("arc_step must be positive")
    a, b = _unit(t_prev), _unit(t_new)
    cos = float(np.clip(a @ b, -1.0, 1.0))
    sin = float(np.linalg.norm(a - cos * b))
    theta = math.atan2(sin, cos)
    if theta == 0.0:
        return tau_cap
    return min(arc_step / theta, tau_cap)


def adapt_radius(policy: RadiusPolicy, tau: float) -> float:
    """``(A e^tau - B e^-tau)/(e^tau + e^-tau)`` clamped to ``[r_min, r_max]``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    q = math.exp(-2.0 * tau)
    r = (policy.a_max - policy.b_coeff * q) / (1.0 + q)
    return min(max(r, policy.r_min), policy.r_max)


# ---------------------------------------------------------------------------
# driver


def _params(sys, z):
    return np.asarray(sys.lam_free(z), dtype=float)


def _in_box(sys, z, box) -> bool:
    if box is None:
        return True
    lam = _params(sys, z)
    return all(lo <= v <= hi for v, (lo, hi) in zip(lam, box))


def _polish(sys, z, ref, eps, max_iter=10):
    """Pull ``z`` onto ``H = 0`` with minimum-norm-like steps orthogonal to ``ref``."""
    z = np.array(z, dtype=float)
    for _ in range(max_iter):
        H, dH, _ = sys.evaluate(z)
        if np.max(np.abs(H)) < eps * 0.1:
            break
        if sp.issparse(dH):
            A = sp.vstack([dH, sp.csr_matrix(ref[None, :])]).tocsc()
        else:
            A = np.vstack([dH, ref[None, :]])
        z = z + _solve_square(A, np.concatenate([-H, [0.0]]))
    return z


def _make_step(sys, z, tinfo, r, tau, iters, H=None, extra=None):
    if H is None:
        H, _dH, extra = sys.evaluate(z, need_gradient=False)
    flags = sys.flags(z) if hasattr(sys, "flags") else {}
    sigma = getattr(extra, "sigma_min", float("nan"))
    return TraceStep(z=np.array(z), tangent=tinfo, radius_used=r, curvature_tau=tau, flags=flags,
                     corrector_iters=iters, residual_inf=float(np.max(np.abs(H))), sigma_min=sigma)


def _crossing(ev0, ev1):
    """Index of the first event function that changed sign, or None."""
    if ev0 is None or ev1 is None:
        return None
    hit = np.flatnonzero(np.isfinite(ev0) & np.isfinite(ev1) & (np.sign(ev0) * np.sign(ev1) < 0))
    return int(hit[0]) if hit.size else None


def locate_crossing(sys, switcher, z0, t0, r_hi: float, event: int, settings: TraceSettings,
                    tol: float = 1e-7):
    """Bisect the arc length ``rho`` in ``(0, r_hi]`` for a sign change of event ``event``.

    Returns ``(z, rho)`` with ``z`` the corrected point on the near side of the crossing.
    """
    e0 = switcher.events(z0)[event]
    lo, hi = 0.0, r_hi
    z_lo = np.array(z0, dtype=float)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        try:
            z_mid, _ = correct(sys, SphereConstraint(z0, mid), predict(z0, t0, mid), settings.eps,
                               settings.max_corrector_iter, settings.eta_min)
        except CorrectorDiverged:
            break
        if np.sign(switcher.events(z_mid)[event]) == np.sign(e0):
            lo, z_lo = mid, z_mid
        else:
            hi = mid
    return z_lo, lo


def trace_curve(sys, seed_z, policy: RadiusPolicy = RadiusPolicy(), settings: TraceSettings = TraceSettings(),
                seed_origin: str = "", label: dict | None = None, switcher=None) -> BoundaryCurve:
    """Trace the curve through ``seed_z`` until it closes, leaves the box, stalls or hits ``max_steps``.

    With a ``switcher`` (see :class:`feasbound.boundary.BranchSwitcher`) the
    trace changes branch where its event functions change sign, instead of
    running straight through the crossing.
    """
    if sys.dim != sys.n_eq + 1:
        raise ValueError("trace_curve needs exactly one more unknown than equations")
    policy = policy or RadiusPolicy()
    settings = settings or TraceSettings()
    eps = settings.eps
    z = np.array(seed_z, dtype=float)
    H, dH, _ = sys.evaluate(z)
    t_info = tangent(sys, z, None, dH, settings.rank_tol)
    if np.max(np.abs(H)) >= eps:
        z = _polish(sys, z, t_info.delta_z, eps)
        H, dH, _ = sys.evaluate(z)
        t_info = tangent(sys, z, None, dH, settings.rank_tol)
    extra = sys.evaluate(z, need_gradient=False)[2]
    steps = [_make_step(sys, z, t_info, 0.0, settings.tau_cap, 0, H, extra)]
    curve = BoundaryCurve(steps, Termination.MAX_STEPS, seed_origin, dict(label or {}))
    if not _in_box(sys, z, settings.box):
        curve.termination = Termination.PARAMETER_BOX
        return curve

    if settings.fixed_radius is not None:
        r = settings.fixed_radius
    elif settings.initial_radius is not None:
        r = settings.initial_radius
    else:
        r = min(policy.r_max, max(policy.r_min, 0.05 * policy.a_max))
    z_start, t_start = z.copy(), t_info.delta_z.copy()
    z_prev = None
    ev = switcher.events(z) if switcher is not None else None

    while len(steps) <= settings.max_steps:
        t = t_info.delta_z
        r_try = r
        retries = 0
        accepted = None
        while retries <= settings.max_retries:
            curve.pc_cycles += 1
            sphere = SphereConstraint(z, r_try)
            try:
                z_new, iters = correct(sys, sphere, predict(z, t, r_try), eps,
                                       settings.max_corrector_iter, settings.eta_min)
            except CorrectorDiverged as exc:
                log.debug("corrector failed at r=%.3g: %s", r_try, exc)
                r_try *= 0.5
                retries += 1
                curve.radius_halvings += 1
                continue
            if detect_reversion(z_prev, z_new, sphere, t):
                curve.reversions += 1
                r_try *= 1.0 + settings.dr_frac
                retries += 1
                continue
            try:
                H_new, dH_new, extra = sys.evaluate(z_new)
                t_new = tangent(sys, z_new, t, dH_new, settings.rank_tol)
            except (DegenerateSigmaError, RankDeficientError, ConvergenceError) as exc:
                log.debug("rejecting point: %s", exc)
                r_try *= 0.5
                retries += 1
                curve.radius_halvings += 1
                continue
            accepted = (z_new, iters, H_new, extra, t_new)
            break
        if accepted is None:
            curve.termination = Termination.STALLED
            return curve

        z_new, iters, H_new, extra, t_new = accepted
        if switcher is not None:
            ev_new = switcher.events(z_new)
            k_ev = _crossing(ev, ev_new)
            switched = None
            if k_ev is not None:
                z_star, rho = locate_crossing(sys, switcher, z, t, r_try, k_ev, settings)
                switched = switcher.switch(z_star, k_ev, z, t, settings)
            if switched is not None:
                z_star, d_arm, z1, t1 = switched
                curve.switches.append(len(steps))
                steps.append(_make_step(sys, z_star, TangentInfo(d_arm, 1), rho, settings.tau_cap, 0))
                steps.append(_make_step(sys, z1, t1, float(np.linalg.norm(z1 - z_star)), settings.tau_cap, 0))
                z_prev, z, t_info = z_star, z1, t1
                ev = switcher.events(z)
                r = max(policy.r_min, float(np.linalg.norm(z1 - z_star)))
                if not _in_box(sys, z, settings.box):
                    curve.termination = Termination.PARAMETER_BOX
                    return curve
                continue
            ev = ev_new
        tau = curvature_tau(t, t_new.delta_z, r_try, settings.tau_cap)
        steps.append(_make_step(sys, z_new, t_new, r_try, tau, iters, H_new, extra))
        z_prev, z, t_info = z, z_new, t_new
        if settings.fixed_radius is not None:
            r = settings.fixed_radius
        elif settings.adaptive:
            r = adapt_radius(policy, tau)
        else:
            r = r_try

        if not _in_box(sys, z, settings.box):
            curve.termination = Termination.PARAMETER_BOX
            return curve
        if len(steps) - 1 >= settings.min_closed_steps:
            if (np.linalg.norm(z - z_start) <= max(r, r_try)
                    and float(t_info.delta_z @ t_start) > 0.0):
                curve.termination = Termination.CLOSED_LOOP
                return curve
    curve.termination = Termination.MAX_STEPS
    return curve


# -- multi-seed and sweep drivers --------------------------------------------

def _segment_distance(points: np.ndarray, q: np.ndarray) -> float:
    """Smallest distance from ``q`` to the polyline through ``points``."""
    if len(points) == 1:
        return float(np.linalg.norm(points[0] - q))
    a, b = points[:-1], points[1:]
    d = b - a
    L2 = np.einsum("ij,ij->i", d, d)
    s = np.clip(np.einsum("ij,ij->i", q - a, d) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
    return float(np.min(np.linalg.norm(a + s[:, None] * d - q, axis=1)))


def on_curve(sys, curve: BoundaryCurve, z, tol: float = 0.02) -> bool:
    """Whether ``z`` lies within ``tol`` of ``curve`` (slack signs ignored)."""
    canon = getattr(sys, "canonical", lambda v: v)
    pts = np.array([canon(p) for p in curve.points])
    if curve.termination == Termination.CLOSED_LOOP:
        pts = np.vstack([pts, pts[:1]])
    return _segment_distance(pts, canon(np.asarray(z, dtype=float))) <= tol


def trace_seeds(sys, seeds: Sequence[np.ndarray], policy: RadiusPolicy = RadiusPolicy(),
                settings: TraceSettings = TraceSettings(), origins: Sequence[str] | None = None,
                label: dict | None = None, switcher_factory: Callable | None = None,
                distinct_tol: float = 0.02) -> list[BoundaryCurve]:
    """Trace every seed that is not already on a previously traced curve.

    Seeds must already be expressed in ``sys`` (two free parameters).  The
    curve index within the call is stored as ``label["curve"]``.
    """
    curves: list[BoundaryCurve] = []
    origins = list(origins) if origins is not None else [""] * len(seeds)
    for z0, origin in zip(seeds, origins):
        if any(on_curve(sys, c, z0, distinct_tol) for c in curves):
            log.debug("seed %s lies on an earlier curve, skipped", origin)
            continue
        lab = dict(label or {})
        lab["curve"] = len(curves)
        sw = switcher_factory(sys) if switcher_factory is not None else None
        curves.append(trace_curve(sys, z0, policy, settings, origin, lab, switcher=sw))
    return curves


class SweepResult(list):
    """List of curves from :func:`sweep_contours`; ``failures`` maps value -> message."""

    def __init__(self, curves=(), failures=None):
        super().__init__(curves)
        self.failures: dict[float, str] = dict(failures or {})


def sweep_contours(sys, third_param: int, values: Sequence[float], policy: RadiusPolicy = RadiusPolicy(),
                   settings: TraceSettings = TraceSettings(), n_restarts: int = 8, seed: int = 0,
                   newton=None, switcher_factory: Callable | None = None, jobs: int = 1) -> SweepResult:
    """Contour family: one set of boundary curves per value of a fixed parameter.

    Parameters
    ----------
    sys : BoundarySystem
        Parameters 0 and 1 span the plane; ``third_param`` indexes the
        parameter that is fixed to each entry of ``values`` in turn.  The
        current values of parameters 0 and 1 are the seeding start.
    values : sequence of float
        Must be finite.  An empty sequence gives an empty result.

    Returns
    -------
    SweepResult
        Curves in value order, each labeled with ``value`` and ``param``.
        Values whose seeding fails are listed in ``failures``.
    """
    from concurrent.futures import ThreadPoolExecutor

    from .boundary import NewtonSettings, find_seeds
    from .errors import EmptySeedSet

    values = [float(v) for v in values]
    if not all(math.isfinite(v) for v in values):
        raise ValueError("sweep values must be finite")
    if third_param in (0, 1) or not 0 <= third_param < sys.params.p:
        raise ValueError("third_param must index a parameter other than the plane pair")
    newton = newton or NewtonSettings()
    name = sys.params.bindings[third_param].label()

    def one(v):
        vals = sys.params.values.copy()
        vals[third_param] = v
        stage1 = sys.with_free((0,), vals)
        stage2 = sys.with_free((0, 1), vals)
        try:
            seeds = find_seeds(stage1, n_restarts, newton, seed=seed)
        except EmptySeedSet as exc:
            return [], str(exc)
        lifted = [stage2.lift(s.z, stage1) for s in seeds]
        curves = trace_seeds(stage2, lifted, policy, settings, [s.origin for s in seeds],
                             {"param": name, "value": v}, switcher_factory)
        return curves, None

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(one, values))
    else:
        results = [one(v) for v in values]
    out = SweepResult()
    for v, (curves, err) in zip(values, results):
        out.extend(curves)
        if err is not None:
            log.warning("sweep value %s=%g: %s", name, v, err)
            out.failures[v] = err
    return out
