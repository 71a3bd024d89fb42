"""Rectangular power-flow residuals with slack-variable voltage limits.

Variables and equations are interleaved per non-slack bus, in bus order:

=========  ==============================  ===========================================
bus kind   variables                       rows
=========  ==============================  ===========================================
PQ         ``vr, vm, s_up, s_lo``          P balance, Q balance, upper limit, lower limit
PV         ``vr, vm``                      P balance, voltage setpoint
=========  ==============================  ===========================================

With ``limits=False`` the PQ block shrinks to ``vr, vm`` / P, Q (plain power
flow, used for solvability boundaries and the oracle).

The limit rows are::

    vr^2 + vm^2 - v_max^2 + s_up^2 = 0
    vr^2 + vm^2 - v_min^2 - s_lo^2 = 0

so real slacks exist exactly when ``v_min <= |V| <= v_max``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, ValidationError
from .netcase import BusKind, NetworkCase

TOL_ACTIVE = 1e-4


class LimitFlag(str, Enum):
    INTERIOR = "Interior"
    AT_UPPER = "AtUpper"
    AT_LOWER = "AtLower"


@dataclass(frozen=True)
class Binding:
    """What a parameter controls.

    ``bus=None`` scales every injection uniformly (``quantity`` ignored);
    otherwise the parameter *is* the ``quantity`` ("P" or "Q") injection at
    external bus ``bus``.
    """

    bus: int | None = None
    quantity: str = "P"

    def label(self) -> str:
        return "lambda" if self.bus is None else f"{self.quantity}{self.bus}"

    @classmethod
    def parse(cls, text: str) -> "Binding":
        """``"3:P"`` -> bus 3 active injection; ``"uniform"`` -> uniform scaling."""
        text = text.strip()
        if text.lower() in ("uniform", "lambda"):
            return cls(None)
        bus, _, qty = text.partition(":")
        qty = qty.strip().upper() or "P"
        if qty not in ("P", "Q"):
            raise ValueError(f"bad binding quantity in {text!r}")
        return cls(int(bus), qty)


@dataclass(frozen=True)
class ParameterVector:
    bindings: tuple[Binding, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).reshape(-1))
        object.__setattr__(self, "bindings", tuple(self.bindings))
        if len(self.bindings) != self.values.size:
            raise DimensionMismatch("one value per binding required")

    @property
    def p(self) -> int:
        return len(self.bindings)

    def with_values(self, values) -> "ParameterVector":
        return ParameterVector(self.bindings, values)


def uniform(value: float = 1.0) -> ParameterVector:
    return ParameterVector((Binding(None),), [value])


@dataclass(frozen=True)
class ResidualReport:
    f: np.ndarray
    jac: sp.csr_matrix
    norm_inf: float


class Layout:
    """Index bookkeeping for one case and limit mode."""

    def __init__(self, case: NetworkCase, limits: bool = True):
        self.case = case
        self.limits = limits
        nb = case.n_bus
        self.vr = np.full(nb, -1)
        self.vm = np.full(nb, -1)
        self.s_up = np.full(nb, -1)
        self.s_lo = np.full(nb, -1)
        self.row_p = np.full(nb, -1)
        self.row_q = np.full(nb, -1)  # Q balance (PQ) or setpoint (PV)
        self.row_up = np.full(nb, -1)
        self.row_lo = np.full(nb, -1)
        k = 0
        for i, b in enumerate(case.buses):
            if b.kind is BusKind.SLACK:
                continue
            self.vr[i], self.vm[i] = k, k + 1
            self.row_p[i], self.row_q[i] = k, k + 1
            k += 2
            if b.kind is BusKind.PQ and limits:
                self.s_up[i], self.s_lo[i] = k, k + 1
                self.row_up[i], self.row_lo[i] = k, k + 1
                k += 2
        self.n = k
        self.nonslack = np.array([i for i, b in enumerate(case.buses) if b.kind is not BusKind.SLACK], dtype=int)
        self.pq = np.array(case.pq_indices, dtype=int)
        self.pv = np.array(case.pv_indices, dtype=int)
        self.slack = case.slack_index
        self.v_slack = complex(case.buses[self.slack].v_ref)
        self.v_ref = np.array([b.v_ref or 0.0 for b in case.buses])
        self.v_min = np.array([b.v_min or 0.0 for b in case.buses])
        self.v_max = np.array([b.v_max or 0.0 for b in case.buses])
        self.p_base = np.array([b.p_inj for b in case.buses])
        self.q_base = np.array([b.q_inj for b in case.buses])
        self._build_pattern()

    # -- sparsity ---------------------------------------------------------
    def _build_pattern(self):
        Y = self.case.ybus.Y.tocoo()
        nb = self.case.n_bus
        pairs = {(int(i), int(k)) for i, k in zip(Y.row, Y.col)}
        pairs |= {(i, i) for i in range(nb)}
        pairs = sorted(pairs)
        yi = np.array([p[0] for p in pairs], dtype=int)
        yk = np.array([p[1] for p in pairs], dtype=int)
        Ycsr = self.case.ybus.Y.tocsr()
        yv = np.asarray(Ycsr[yi, yk]).reshape(-1)
        # keep entries whose row and column are both state buses
        keep = (self.row_p[yi] >= 0) & (self.vr[yk] >= 0)
        self._yi, self._yk, self._yv = yi[keep], yk[keep], yv[keep]
        self._ydiag = yi[keep] == yk[keep]

        rows, cols = [], []
        yi, yk = self._yi, self._yk
        qrow_pq = self.row_q[yi]
        is_pq = np.isin(yi, self.pq)
        rows += [self.row_p[yi], self.row_p[yi]]
        cols += [self.vr[yk], self.vm[yk]]
        rows += [qrow_pq[is_pq], qrow_pq[is_pq]]
        cols += [self.vr[yk][is_pq], self.vm[yk][is_pq]]
        self._n_pq_entries = int(is_pq.sum())
        self._is_pq_entry = is_pq
        pv = self.pv
        rows += [self.row_q[pv], self.row_q[pv]]
        cols += [self.vr[pv], self.vm[pv]]
        if self.limits and self.pq.size:
            pq = self.pq
            rows += [self.row_up[pq]] * 3 + [self.row_lo[pq]] * 3
            cols += [self.vr[pq], self.vm[pq], self.s_up[pq], self.vr[pq], self.vm[pq], self.s_lo[pq]]
        r = np.concatenate(rows) if rows else np.zeros(0, int)
        c = np.concatenate(cols) if cols else np.zeros(0, int)
        order = sp.coo_matrix(
            (np.arange(1, r.size + 1, dtype=float), (r, c)), shape=(self.n, self.n)
        ).tocsr()
        self._csr_indices = order.indices.copy()
        self._csr_indptr = order.indptr.copy()
        self._csr_perm = order.data.astype(int) - 1
        self.pattern_nnz = r.size

    # -- state helpers ----------------------------------------------------
    def voltages(self, x: np.ndarray) -> np.ndarray:
        """Complex voltage at every bus (slack fixed)."""
        V = np.zeros(self.case.n_bus, dtype=complex)
        V[self.slack] = self.v_slack
        ns = self.nonslack
        V[ns] = x[self.vr[ns]] + 1j * x[self.vm[ns]]
        return V

    def flat_state(self) -> np.ndarray:
        """Flat start: ``1+0j`` at PQ buses, ``v_ref+0j`` at PV buses, slacks from the limits."""
        V = np.ones(self.case.n_bus, dtype=complex)
        V[self.pv] = self.v_ref[self.pv]
        return self.state_from_voltages(V)

    def state_from_voltages(self, V: np.ndarray, slack_sign: float = 1.0) -> np.ndarray:
        """State vector for voltages ``V``; slacks solved from the limit identities (clipped at 0)."""
        x = np.zeros(self.n)
        ns = self.nonslack
        x[self.vr[ns]] = V[ns].real
        x[self.vm[ns]] = V[ns].imag
        if self.limits and self.pq.size:
            pq = self.pq
            m2 = np.abs(V[pq]) ** 2
            x[self.s_up[pq]] = slack_sign * np.sqrt(np.maximum(self.v_max[pq] ** 2 - m2, 0.0))
            x[self.s_lo[pq]] = slack_sign * np.sqrt(np.maximum(m2 - self.v_min[pq] ** 2, 0.0))
        return x

    def canonical(self, x: np.ndarray) -> np.ndarray:
        """Copy with nonnegative slack variables (their sign is a symmetry of F)."""
        x = np.array(x, dtype=float, copy=True)
        if self.limits and self.pq.size:
            idx = np.concatenate([self.s_up[self.pq], self.s_lo[self.pq]])
            x[idx] = np.abs(x[idx])
        return x

    # -- parameters -------------------------------------------------------
    def check_bindings(self, bindings: Sequence[Binding]) -> None:
        if sum(b.bus is None for b in bindings) > 1:
            raise ValidationError("at most one uniform scaling parameter")
        keyed = [(b.bus, b.quantity) for b in bindings if b.bus is not None]
        if len(set(keyed)) != len(keyed):
            raise ValidationError("duplicate parameter bindings")
        for b in bindings:
            if b.bus is None:
                continue
            try:
                i = self.case.index_of(b.bus)
            except KeyError:
                raise ValidationError(f"binding {b.label()} references a missing bus") from None
            kind = self.case.buses[i].kind
            if kind is BusKind.SLACK:
                raise ValidationError(f"bus {b.bus} is the slack bus; its injection is not a parameter")
            if b.quantity == "Q" and kind is not BusKind.PQ:
                raise ValidationError(f"Q{b.bus}: reactive injection is a parameter only at PQ buses")

    def injections(self, lam: ParameterVector):
        """Effective ``(P, Q)`` injections for every bus, and their λ-derivatives.

        Returns ``p, q, dp, dq`` with ``dp``/``dq`` of shape ``(n_bus, n_params)``.
        """
        nb = self.case.n_bus
        p_direct = np.zeros(nb, dtype=bool)
        q_direct = np.zeros(nb, dtype=bool)
        for b in lam.bindings:
            if b.bus is not None:
                i = self.case.index_of(b.bus)
                (p_direct if b.quantity == "P" else q_direct)[i] = True
        p = self.p_base.copy()
        q = self.q_base.copy()
        dp = np.zeros((nb, lam.p))
        dq = np.zeros((nb, lam.p))
        for j, (b, v) in enumerate(zip(lam.bindings, lam.values)):
            if b.bus is None:
                p[~p_direct] *= v
                q[~q_direct] *= v
                dp[~p_direct, j] = self.p_base[~p_direct]
                dq[~q_direct, j] = self.q_base[~q_direct]
        for j, (b, v) in enumerate(zip(lam.bindings, lam.values)):
            if b.bus is not None:
                i = self.case.index_of(b.bus)
                if b.quantity == "P":
                    p[i] = v
                    dp[i, :] = 0.0
                    dp[i, j] = 1.0
                else:
                    q[i] = v
                    dq[i, :] = 0.0
                    dq[i, j] = 1.0
        return p, q, dp, dq

    # -- evaluation -------------------------------------------------------
    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise DimensionMismatch(f"state has shape {x.shape}, expected ({self.n},)")
        return x

    def residual_vector(self, x: np.ndarray, lam: ParameterVector) -> np.ndarray:
        x = self._check(x)
        V = self.voltages(x)
        S = V * np.conj(self.case.ybus.Y @ V)
        p, q, _, _ = self.injections(lam)
        f = np.zeros(self.n)
        ns = self.nonslack
        f[self.row_p[ns]] = S[ns].real - p[ns]
        pq, pv = self.pq, self.pv
        f[self.row_q[pq]] = S[pq].imag - q[pq]
        m2 = np.abs(V) ** 2
        f[self.row_q[pv]] = m2[pv] - self.v_ref[pv] ** 2
        if self.limits and pq.size:
            f[self.row_up[pq]] = m2[pq] - self.v_max[pq] ** 2 + x[self.s_up[pq]] ** 2
            f[self.row_lo[pq]] = m2[pq] - self.v_min[pq] ** 2 - x[self.s_lo[pq]] ** 2
        return f

    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        """Analytic ``dF/dx`` (independent of the parameters)."""
        x = self._check(x)
        V = self.voltages(x)
        I = self.case.ybus.Y @ V
        yi, yk, yv = self._yi, self._yk, self._yv
        Vi = V[yi]
        base = Vi * np.conj(yv)
        dS_dvr = base.copy()
        dS_dvm = -1j * base
        d = self._ydiag
        dS_dvr[d] += np.conj(I[yi[d]])
        dS_dvm[d] += 1j * np.conj(I[yi[d]])
        pq_e = self._is_pq_entry
        parts = [dS_dvr.real, dS_dvm.real, dS_dvr.imag[pq_e], dS_dvm.imag[pq_e]]
        pv = self.pv
        parts += [2 * V[pv].real, 2 * V[pv].imag]
        if self.limits and self.pq.size:
            pq = self.pq
            vr2, vm2 = 2 * V[pq].real, 2 * V[pq].imag
            parts += [vr2, vm2, 2 * x[self.s_up[pq]], vr2, vm2, -2 * x[self.s_lo[pq]]]
        data = np.concatenate(parts) if parts else np.zeros(0)
        return sp.csr_matrix(
            (data[self._csr_perm], self._csr_indices.copy(), self._csr_indptr.copy()),
            shape=(self.n, self.n),
        )

    def param_jacobian(self, x: np.ndarray, lam: ParameterVector) -> np.ndarray:
        """Dense ``dF/dλ`` of shape ``(n, p)``."""
        _, _, dp, dq = self.injections(lam)
        out = np.zeros((self.n, lam.p))
        ns, pq = self.nonslack, self.pq
        out[self.row_p[ns]] = -dp[ns]
        out[self.row_q[pq]] = -dq[pq]
        return out

    def quadratic_part(self, y: np.ndarray) -> sp.csr_matrix:
        """``J(y) - J(0)``: the Jacobian's linear-in-state part evaluated at ``y``.

        Every row of F is quadratic in the state, so for fixed vectors u, v
        ``d/dx (u^T J(x) v) = (J(v) - J(0))^T u``.
        """
        return (self.jacobian(y) - self.jacobian(np.zeros(self.n))).tocsr()


@lru_cache(maxsize=64)
def layout(case: NetworkCase, limits: bool = True) -> Layout:
    return Layout(case, limits)


def residual(case: NetworkCase, x, lam: ParameterVector, limits: bool = True) -> ResidualReport:
    """Residual vector, state Jacobian and max-norm at ``(x, lam)``."""
    lay = layout(case, limits)
    lay.check_bindings(lam.bindings)
    f = lay.residual_vector(x, lam)
    return ResidualReport(f=f, jac=lay.jacobian(x), norm_inf=float(np.max(np.abs(f), initial=0.0)))


def jacobian_fd_check(case: NetworkCase, x, lam: ParameterVector, h: float = 1e-6, limits: bool = True) -> float:
    """Max relative deviation between the analytic Jacobian and central differences.

    Entries where both values are below 1e-8 in magnitude are skipped.
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    lay = layout(case, limits)
    x = np.asarray(x, dtype=float)
    J = lay.jacobian(x).toarray()
    fd = np.empty_like(J)
    for k in range(lay.n):
        e = np.zeros(lay.n)
        e[k] = h
        fd[:, k] = (lay.residual_vector(x + e, lam) - lay.residual_vector(x - e, lam)) / (2 * h)
    scale = np.maximum(np.abs(J), np.abs(fd))
    mask = scale > 1e-8
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(J - fd)[mask] / scale[mask]))


def feasibility_flags(case: NetworkCase, x, tol_active: float = TOL_ACTIVE, limits: bool = True) -> dict[int, LimitFlag]:
    """Limit activity at each PQ bus, keyed by external bus id.

    Uses the slack variables when the state carries them, else the voltage
    magnitude distance to the bounds.
    """
    lay = layout(case, limits)
    x = np.asarray(x, dtype=float)
    V = lay.voltages(x)
    flags = {}
    for i in lay.pq:
        if limits:
            up, lo = abs(x[lay.s_up[i]]), abs(x[lay.s_lo[i]])
        else:
            m = abs(V[i])
            up, lo = max(lay.v_max[i] - m, 0.0), max(m - lay.v_min[i], 0.0)
        if up < tol_active:
            flag = LimitFlag.AT_UPPER
        elif lo < tol_active:
            flag = LimitFlag.AT_LOWER
        else:
            flag = LimitFlag.INTERIOR
        flags[case.buses[i].id] = flag
    return flags
