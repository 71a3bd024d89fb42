"""Boundary system H(z) = [F(x, lam); g(x)] and single-point solvers.

``BoundarySystem`` fixes a case, a full parameter vector and the subset of
parameters that are free.  With ``p`` free parameters the unknown vector is
``z = (x, lam_free)`` for the singular-value condition, or
``z = (x, y, lam_free)`` for the eigenvector condition.

``tenr_solve`` finds one boundary point with a single free parameter by
damped Newton on the square system; ``find_seeds`` runs it from the flat
start and from randomized restarts to collect distinct roots.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, DegenerateSigmaError, EmptySeedSet, NoConvergence
from .netcase import NetworkCase
from .pfsystem import Binding, ParameterVector, feasibility_flags, layout
from .transversality import GAP_TOL, gsvd, gsvd_gradient

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NewtonSettings:
    eps_newton: float = 1e-8
    eps_singular: float = 1e-6
    max_iter: int = 100
    relaxed_iters: int = 5
    relaxed_tol: float = 1e-3
    dedup_tol: float = 1e-4
    armijo_c: float = 1e-4
    min_step: float = 2.0**-10
    perturbation: float = 0.3
    max_step: float = 0.5


class BoundarySystem:
    """Residual map ``H(z)`` with an analytic sparse Jacobian.

    Parameters
    ----------
    case : NetworkCase
    params : ParameterVector
        All parameters with their current values; values of non-free
        parameters stay fixed.
    free : sequence of int
        Indices into ``params`` that are unknowns (``p = len(free)``).
    transversality : {"svd", "eig"}
    limits : bool
        Include the slack-variable voltage-limit rows (feasibility boundary)
        or not (solvability boundary).
    """

    def __init__(
        self,
        case: NetworkCase,
        params: ParameterVector,
        free: Sequence[int] = (0,),
        transversality: str = "svd",
        limits: bool = True,
        gap_tol: float = GAP_TOL,
        svd_method: str = "auto",
    ):
        if transversality not in ("svd", "eig"):
            raise ValueError("transversality must be 'svd' or 'eig'")
        self.case = case
        self.params = params
        self.free = tuple(int(j) for j in free)
        if not self.free or len(set(self.free)) != len(self.free):
            raise ValueError("free must list distinct parameter indices")
        if any(j < 0 or j >= params.p for j in self.free):
            raise ValueError("free index out of range")
        self.transversality = transversality
        self.limits = limits
        self.gap_tol = gap_tol
        self.svd_method = svd_method
        self.layout = layout(case, limits)
        self.layout.check_bindings(params.bindings)
        self.n = self.layout.n
        self.p = len(self.free)
        self._ny = self.n if transversality == "eig" else 0

    # -- bookkeeping ------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.n + self._ny + self.p

    @property
    def n_eq(self) -> int:
        return self.n + self._ny + 1

    def with_free(self, free: Sequence[int], values=None) -> "BoundarySystem":
        """Same case and bindings with a different free set (and optionally new values)."""
        params = self.params if values is None else self.params.with_values(values)
        return BoundarySystem(self.case, params, free, self.transversality, self.limits,
                              self.gap_tol, self.svd_method)

    def split(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise ValueError(f"z has shape {z.shape}, expected ({self.dim},)")
        x = z[: self.n]
        y = z[self.n : self.n + self._ny] if self._ny else None
        vals = self.params.values.copy()
        vals[list(self.free)] = z[self.n + self._ny :]
        return x, self.params.with_values(vals), y

    def join(self, x, lam_free=None, y=None) -> np.ndarray:
        if lam_free is None:
            lam_free = self.params.values[list(self.free)]
        parts = [np.asarray(x, dtype=float)]
        if self._ny:
            if y is None:
                y = gsvd(self.layout.jacobian(x), self.svd_method).v
            parts.append(np.asarray(y, dtype=float))
        parts.append(np.atleast_1d(np.asarray(lam_free, dtype=float)))
        return np.concatenate(parts)

    def lam_free(self, z) -> np.ndarray:
        return np.asarray(z)[self.n + self._ny :]

    def full_params(self, z) -> np.ndarray:
        return self.split(z)[1].values

    def flat_start(self, lam_free=None) -> np.ndarray:
        return self.join(self.layout.flat_state(), lam_free)

    def canonical(self, z) -> np.ndarray:
        """Representative with nonnegative slack variables."""
        z = np.array(z, dtype=float, copy=True)
        z[: self.n] = self.layout.canonical(z[: self.n])
        return z

    # -- evaluation -------------------------------------------------------
    def evaluate(self, z, need_gradient: bool = True):
        """Return ``(H, dH, triplet)``; ``dH`` is sparse ``n_eq x dim`` (None if not requested)."""
        x, lam, y = self.split(z)
        lay = self.layout
        F = lay.residual_vector(x, lam)
        Jx = lay.jacobian(x)
        triplet = gsvd(Jx, self.svd_method)
        Fl = lay.param_jacobian(x, lam)[:, list(self.free)]
        if self.transversality == "svd":
            H = np.concatenate([F, [triplet.sigma_min]])
            if not need_gradient:
                return H, None, triplet
            gx, _gl = gsvd_gradient(self.case, x, lam, triplet, self.limits, self.gap_tol)
            top = sp.hstack([Jx, sp.csr_matrix(Fl)])
            bottom = sp.csr_matrix(np.concatenate([gx, np.zeros(self.p)])[None, :])
            return H, sp.vstack([top, bottom]).tocsr(), triplet
        Jy = Jx @ y
        H = np.concatenate([F, Jy, [y @ y - 1.0]])
        if not need_gradient:
            return H, None, triplet
        n, p = self.n, self.p
        Z = sp.csr_matrix((n, n))
        rows = [
            sp.hstack([Jx, Z, sp.csr_matrix(Fl)]),
            sp.hstack([lay.quadratic_part(y), Jx, sp.csr_matrix((n, p))]),
            sp.csr_matrix(np.concatenate([np.zeros(n), 2 * y, np.zeros(p)])[None, :]),
        ]
        return H, sp.vstack(rows).tocsr(), triplet

    def residual(self, z) -> np.ndarray:
        return self.evaluate(z, need_gradient=False)[0]

    def jacobian(self, z) -> sp.csr_matrix:
        return self.evaluate(z)[1]

    def flags(self, z) -> dict:
        """Limit activity per PQ bus id at ``z`` (see :func:`feasibility_flags`)."""
        return feasibility_flags(self.case, self.split(z)[0], limits=self.limits)

    def lift(self, z_sub, source: "BoundarySystem") -> np.ndarray:
        """Re-express a point of ``source`` (same bindings, other free set) in this system."""
        x, lam, y = source.split(z_sub)
        return self.join(x, lam.values[list(self.free)], y)

    def sigma_min(self, z) -> float:
        x = self.split(z)[0]
        return gsvd(self.layout.jacobian(x), self.svd_method).sigma_min


@dataclass(frozen=True)
class SeedPoint:
    z: np.ndarray
    residual_norm: float
    sigma_min: float
    origin: str = "TenrFromFlat"
    restart: int = 0
    iterations: int = 0
    lam_fixed: np.ndarray = field(default=None, repr=False)

    @property
    def lam1(self) -> float:
        return float(self.z[-1])


def _armijo_newton(sys: BoundarySystem, z, settings: NewtonSettings, relaxed: bool,
                   bracket=None, max_iter=None):
    """Damped Newton on the square system; returns ``(z, |H|_inf, iterations)``."""
    max_iter = settings.max_iter if max_iter is None else max_iter
    z = np.array(z, dtype=float)
    H, dH, _ = sys.evaluate(z)
    norm = float(np.max(np.abs(H)))
    it = 0
    while norm >= settings.eps_newton:
        if it >= max_iter:
            raise NoConvergence(it, norm)
        it += 1
        try:
            step = spla.spsolve(dH.tocsc(), -H)
        except RuntimeError:
            raise NoConvergence(it, norm, "singular Newton matrix") from None
        if not np.all(np.isfinite(step)):
            raise NoConvergence(it, norm, "singular Newton matrix")
        big = float(np.max(np.abs(step)))
        scale = 1.0
        if big > settings.max_step:
            # capped step: the predicted decrease shrinks by the same factor
            scale = settings.max_step / big
            step *= scale
        phi = 0.5 * float(H @ H)
        alpha = 1.0
        loose = relaxed and it <= settings.relaxed_iters
        while True:
            trial = z + alpha * step
            try:
                H_t, dH_t, _ = sys.evaluate(trial)
            except (DegenerateSigmaError, ConvergenceError):
                if alpha <= settings.min_step:
                    raise
                alpha *= 0.5
                continue
            phi_t = 0.5 * float(H_t @ H_t)
            if loose and phi_t <= phi + settings.relaxed_tol:
                break
            if phi_t <= (1.0 - 2.0 * settings.armijo_c * alpha * scale) * phi or alpha <= settings.min_step:
                break
            alpha *= 0.5
        z, H, dH = trial, H_t, dH_t
        norm = float(np.max(np.abs(H)))
        if not np.isfinite(norm) or norm > 1e12:
            raise NoConvergence(it, norm, "Newton iteration blew up")
    if bracket is not None:
        lo, hi = bracket
        lam1 = float(sys.lam_free(z)[0])
        if not lo <= lam1 <= hi:
            raise NoConvergence(it, norm, f"lambda1={lam1:.6g} outside bracket [{lo}, {hi}]")
    return z, norm, it


def tenr_solve(sys: BoundarySystem, z0, settings: NewtonSettings = NewtonSettings(),
               bracket=None, relaxed: bool = False, origin: str = "TenrFromFlat",
               restart: int = 0) -> SeedPoint:
    """Transversality-enforced Newton-Raphson for a single boundary point.

    Solves ``[F(x, lam1); g(x)] = 0`` for ``(x, lam1)`` starting at ``z0``.
    """
    if sys.p != 1:
        raise ValueError("tenr_solve needs exactly one free parameter")
    z, norm, it = _armijo_newton(sys, z0, settings, relaxed, bracket)
    sigma = sys.sigma_min(z)
    if sigma >= settings.eps_singular:
        raise NoConvergence(it, norm, f"converged point is not singular (sigma={sigma:.2e})")
    return SeedPoint(
        z=z,
        residual_norm=norm,
        sigma_min=sigma,
        origin=origin,
        restart=restart,
        iterations=it,
        lam_fixed=sys.params.values.copy(),
    )


def perturbed_start(sys: BoundarySystem, rng: np.random.Generator, lam_free=None,
                    amplitude: float = 0.3) -> np.ndarray:
    """Flat start with voltage parts perturbed in ``±amplitude``; slacks re-solved."""
    lay = sys.layout
    V = lay.voltages(lay.flat_state())
    ns = lay.nonslack
    V[ns] = V[ns] + rng.uniform(-amplitude, amplitude, ns.size) + 1j * rng.uniform(-amplitude, amplitude, ns.size)
    return sys.join(lay.state_from_voltages(V), lam_free)


def dedup_seeds(seeds: Sequence[SeedPoint], tol: float) -> list[SeedPoint]:
    """Drop seeds within ``tol`` (max norm on z) of an earlier one; sort by lam1 then z."""
    ordered = sorted(seeds, key=lambda s: (round(float(s.z[-1]), 12), tuple(np.round(s.z, 12))))
    out: list[SeedPoint] = []
    for s in ordered:
        if all(np.max(np.abs(s.z - t.z)) > tol for t in out):
            out.append(s)
    return out


def find_seeds(sys: BoundarySystem, n_restarts: int = 32, settings: NewtonSettings = NewtonSettings(),
               seed: int = 0, bracket=None, jobs: int = 1, lam_free=None) -> list[SeedPoint]:
    """Boundary points from the flat start plus ``n_restarts - 1`` randomized starts.

    Seeds are canonicalised (nonnegative slacks), deduplicated and sorted,
    so the result does not depend on completion order.
    """
    if n_restarts < 1:
        raise ValueError("n_restarts must be >= 1")
    children = np.random.SeedSequence(seed).spawn(n_restarts)

    def run(k):
        if k == 0:
            z0 = sys.flat_start(lam_free)
            relaxed, origin = False, "TenrFromFlat"
        else:
            z0 = perturbed_start(sys, np.random.default_rng(children[k]), lam_free, settings.perturbation)
            relaxed, origin = True, f"TenrRelaxedRestart({k})"
        try:
            s = tenr_solve(sys, z0, settings, bracket, relaxed, origin, k)
        except (NoConvergence, DegenerateSigmaError, ConvergenceError) as exc:
            log.debug("restart %d failed: %s", k, exc)
            return None
        return replace(s, z=sys.canonical(s.z))

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(run, range(n_restarts)))
    else:
        results = [run(k) for k in range(n_restarts)]
    seeds = [s for s in results if s is not None]
    if not seeds:
        raise EmptySeedSet(f"none of {n_restarts} TENR starts converged")
    return dedup_seeds(seeds, settings.dedup_tol)


def plane_system(case: NetworkCase, plane: Sequence[Binding], fixed: dict[Binding, float] | None = None,
                 start=(0.0, 0.0), limits: bool = True, transversality: str = "svd") -> BoundarySystem:
    """System with the two ``plane`` parameters first and any ``fixed`` ones after.

    The first plane parameter is free (stage-one seeding); use
    ``with_free((0, 1))`` for tracing.
    """
    fixed = dict(fixed or {})
    bindings = tuple(plane) + tuple(fixed)
    values = list(start) + list(fixed.values())
    return BoundarySystem(case, ParameterVector(bindings, values), (0,), transversality, limits)


def signed_pf_sigma(case: NetworkCase, V: np.ndarray, svd_method: str = "auto") -> float:
    """``sign(det J_pf) * sigma_min(J_pf)`` for the plain power-flow Jacobian at voltages ``V``.

    Changes sign exactly where the solution crosses the solvability fold.
    """
    lay = layout(case, limits=False)
    J = lay.jacobian(lay.state_from_voltages(V))
    sigma = gsvd(J, svd_method).sigma_min
    if J.shape[0] < 200:
        sign = np.linalg.slogdet(J.toarray())[0]
    else:
        from .tracer import _lu_det_sign

        try:
            sign = _lu_det_sign(spla.splu(J.tocsc()))
        except RuntimeError:
            sign = 0.0
    return float(sign) * sigma


class BranchSwitcher:
    """Follow the feasibility boundary through branch crossings.

    ``H = 0`` is a union of smooth branches: limit branches (one slack
    variable zero) and the solvability branch (plain Jacobian singular,
    every slack nonzero).  Plain continuation runs straight through their
    crossings.  This helper watches event functions along the trace and,
    when one changes sign, moves onto the branch that continues the
    boundary of the feasible set:

    * on a limit branch reaching another limit, onto that limit;
    * on a limit branch reaching the fold, onto the solvability branch;
    * on the solvability branch reaching a limit, onto that limit, on the
      sheet (sign of ``det J_pf``) the trace came from.
    """

    def __init__(self, sys: BoundarySystem, active_tol: float = 1e-6, switch_radius: float = 1e-3):
        if sys.transversality != "svd" or not sys.limits or sys.p != 2:
            raise ValueError("branch switching needs a two-parameter svd system with limit rows")
        self.sys = sys
        lay = sys.layout
        self.slack_idx = np.concatenate([lay.s_up[lay.pq], lay.s_lo[lay.pq]]).astype(int)
        self.active_tol = active_tol
        self.switch_radius = switch_radius
        self.sheet = 0.0

    def slacks(self, z) -> np.ndarray:
        return np.asarray(z)[self.slack_idx]

    def active(self, z) -> int | None:
        """Index (into the slack list) of the limit branch ``z`` lies on, None on the solvability branch."""
        s = np.abs(self.slacks(z))
        if s.size == 0:
            return None
        k = int(np.argmin(s))
        return k if s[k] < self.active_tol else None

    def pf_sigma(self, z) -> float:
        lay = self.sys.layout
        return signed_pf_sigma(self.sys.case, lay.voltages(np.asarray(z)[: self.sys.n]), self.sys.svd_method)

    def events(self, z) -> np.ndarray:
        ev = np.append(self.slacks(z), np.nan)
        a = self.active(z)
        if a is not None:
            ev[a] = np.nan
            ev[-1] = self.pf_sigma(z)
        return ev

    def describe(self, k: int) -> str:
        if k == self.slack_idx.size:
            return "fold"
        lay, case = self.sys.layout, self.sys.case
        npq = lay.pq.size
        bus = case.buses[lay.pq[k % npq]].id
        return f"{bus}:{'Upper' if k < npq else 'Lower'}"

    def _limit_kernel(self, z, k: int) -> np.ndarray:
        """Unit kernel vector of ``[dF/dz; e_k^T]`` (tangent of limit branch ``k``)."""
        sys = self.sys
        x, lam, _ = sys.split(z)
        JF = sp.hstack([sys.layout.jacobian(x),
                        sp.csr_matrix(sys.layout.param_jacobian(x, lam)[:, list(sys.free)])]).toarray()
        e = np.zeros((1, sys.dim))
        e[0, self.slack_idx[k]] = 1.0
        _u, _s, vt = np.linalg.svd(np.vstack([JF, e]))
        return vt[-1]

    def _land(self, z_star, d, settings):
        from .tracer import CorrectorDiverged, SphereConstraint, correct, predict

        rho = self.switch_radius
        try:
            z1, _ = correct(self.sys, SphereConstraint(z_star, rho), predict(z_star, d, rho),
                            settings.eps, settings.max_corrector_iter, settings.eta_min)
        except CorrectorDiverged:
            return None
        return z1

    def switch(self, z_star, k: int, z_before, t_before, settings):
        """Return ``(z_star, arm_direction, z_on_new_branch, TangentInfo)`` or None."""
        from .errors import RankDeficientError
        from .tracer import tangent

        sys = self.sys
        a = self.active(z_before)
        fold = k == self.slack_idx.size
        if a is not None:
            # leaving a limit branch: move its slack off zero (both signs are mirror copies)
            d = np.zeros(sys.dim)
            d[self.slack_idx[a]] = 1.0
            if fold:
                self.sheet = float(np.sign(self.pf_sigma(z_before)))
            candidates = [d]
        else:
            kvec = self._limit_kernel(z_star, k)
            candidates = [kvec, -kvec]
        best = None
        for d in candidates:
            z1 = self._land(z_star, d, settings)
            if z1 is None:
                continue
            on_target = self.active(z1) is None if fold else self.active(z1) == k
            if not on_target:
                continue
            if a is None:
                sheet = np.sign(self.pf_sigma(z1))
                if self.sheet != 0.0 and sheet != self.sheet:
                    continue
                lam_d = sys.lam_free(z1) - sys.lam_free(z_star)
                if self.sheet == 0.0 and float(lam_d @ sys.lam_free(t_before)) < 0:
                    continue
            best = (d, z1)
            break
        if best is None:
            log.debug("no admissible arm at %s crossing", self.describe(k))
            return None
        d, z1 = best
        try:
            t1 = tangent(sys, z1, z1 - z_star)
        except (RankDeficientError, DegenerateSigmaError):
            return None
        log.debug("switched at %s crossing", self.describe(k))
        return z_star, d, z1, t1
