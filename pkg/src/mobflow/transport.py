"""Nonlinear mobility, the transport action, and its bound-preserving prox.

The action per cell is phi(rho, m) = |m|^2 / M(rho) for M(rho) > 0, zero at
(M, m) = (0, 0) and +inf otherwise, with the concave quadratic mobility
M(rho) = (rho - alpha)(beta - rho).  Its proximal map reduces to a scalar
root-finding problem

    f(r) = r - rho - lam * M'(r) |m|^2 / (2 (lam + M(r))^2) = 0

on (alpha, beta), solved by Newton iteration whose initial guess is chosen
from a seven-case analysis of f at alpha, (alpha+beta)/2, rho and beta; the
two outermost cases return an endpoint with zero momentum outright.  f is
strictly increasing, concave left of the midpoint and convex right of it,
which makes these Newton iterations monotone; a bisection fallback guards
the floating-point edge cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Field, State

#: |f| <= NEWTON_TOL * (1 + |rho|) stops the iteration
NEWTON_TOL = 1e-13
NEWTON_CAP = 60
_BISECT_SWEEPS = 100


@dataclass(frozen=True)
class Mobility:
    """M(rho) = (rho - alpha)(beta - rho), degenerate at both bounds."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not self.beta > self.alpha:
            raise ValueError("mobility bounds require alpha < beta")

    def m(self, rho):
        rho = np.asarray(rho, dtype=float)
        return (rho - self.alpha) * (self.beta - rho)

    def dm(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.alpha + self.beta - 2.0 * rho

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.alpha + self.beta)


@dataclass
class ProxResult:
    rho_star: float
    m_star: np.ndarray
    newton_iters: int
    case_id: int


def action(rho: float, m, mob: Mobility) -> float:
    """phi(rho, m): |m|^2/M(rho), zero at (0,0)-degeneracy, +inf otherwise."""
    msq = float(np.sum(np.square(np.atleast_1d(np.asarray(m, dtype=float)))))
    if rho < mob.alpha or rho > mob.beta:
        return math.inf
    mval = float(mob.m(rho))
    if mval > 0.0:
        return msq / mval
    return 0.0 if msq == 0.0 else math.inf


def action_cellwise(rho: np.ndarray, msq: np.ndarray, mob: Mobility) -> np.ndarray:
    """Vectorized phi over cells, +inf where inadmissible."""
    mval = mob.m(rho)
    out = np.full(rho.shape, np.inf)
    pos = mval > 0.0
    np.divide(msq, mval, out=out, where=pos)
    zero = (~pos) & (msq == 0.0) & (rho >= mob.alpha) & (rho <= mob.beta)
    out[zero] = 0.0
    return out


def transport_cost(u: State, mob: Mobility) -> float:
    """Phi(u) = sum over cells of phi/2 times the cell volume."""
    stack = u.stack()
    msq = np.sum(stack[1:] ** 2, axis=0)
    phi = action_cellwise(stack[0], msq, mob)
    return 0.5 * float(np.sum(phi)) * u.grid.cell_volume


def reduced_objective(rho_t, rho: float, msq: float, lam: float, mob: Mobility):
    """F(r) = (r-rho)^2/2 + lam*|m|^2 / (2(lam+M(r))), the prox objective
    after eliminating the momentum; continuous up to the endpoints."""
    rho_t = np.asarray(rho_t, dtype=float)
    return 0.5 * (rho_t - rho) ** 2 + 0.5 * lam * msq / (lam + mob.m(rho_t))


def _prox_rho(rho: np.ndarray, msq: np.ndarray, lam: float, mob: Mobility):
    """Vectorized Newton solve for the prox density; returns (rho*, case, iters)."""
    a, b = mob.alpha, mob.beta
    mid = mob.midpoint
    thr = (b - a) * msq / (2.0 * lam)

    case = np.zeros(rho.shape, dtype=np.int8)
    case[rho <= a - thr] = 6
    case[rho >= b + thr] = 7
    free = case == 0
    case[free & (rho == mid)] = 3
    case[free & (rho >= a) & (rho < mid)] = 1
    case[free & (rho > mid) & (rho <= b)] = 2
    case[free & (rho < a)] = 4
    case[free & (rho > b)] = 5

    out = np.where(case == 6, a, np.where(case == 7, b, mid))
    iters = np.zeros(rho.shape, dtype=np.int32)

    active = (case == 1) | (case == 2) | (case == 4) | (case == 5)
    if not np.any(active):
        return out, case, iters

    idx = np.flatnonzero(active.ravel())
    cs = case.ravel()[idx]
    rho_a = rho.ravel()[idx]
    msq_a = msq.ravel()[idx]
    r = np.where(cs == 1, rho_a, np.where(cs == 2, rho_a, np.where(cs == 4, a, b)))
    lo = np.where(cs == 1, rho_a, np.where(cs == 4, a, mid))
    hi = np.where(cs == 2, rho_a, np.where(cs == 5, b, mid))
    tol = NEWTON_TOL * (1.0 + np.abs(rho_a))

    live = np.ones(r.shape, dtype=bool)
    fallback = np.zeros(r.shape, dtype=bool)
    it = np.zeros(r.shape, dtype=np.int32)
    for _ in range(NEWTON_CAP):
        if not np.any(live):
            break
        rl = r[live]
        mval = (rl - a) * (b - rl)
        den = lam + mval
        dm = a + b - 2.0 * rl
        fv = rl - rho_a[live] - lam * dm * msq_a[live] / (2.0 * den * den)
        done = np.abs(fv) <= tol[live]
        fp = 1.0 + dm * dm * lam * msq_a[live] / den**3 + lam * msq_a[live] / den**2
        rn = rl - fv / fp
        escaped = (rn < lo[live]) | (rn > hi[live])
        rn = np.where(done | escaped, rl, rn)
        sub = np.flatnonzero(live)
        r[sub] = rn
        it[sub[~done]] += 1
        fallback[sub[escaped & ~done]] = True
        nlive = live.copy()
        nlive[sub[done | (escaped & ~done)]] = False
        live = nlive
    fallback |= live  # cap exhausted without meeting tolerance

    if np.any(fallback):
        # plain bisection; f(lo) < 0 < f(hi) by the case analysis
        fb = np.flatnonzero(fallback)
        L = lo[fb].copy()
        H = hi[fb].copy()
        for _ in range(_BISECT_SWEEPS):
            mid_ = 0.5 * (L + H)
            mval = (mid_ - a) * (b - mid_)
            den = lam + mval
            fv = mid_ - rho_a[fb] - lam * (a + b - 2.0 * mid_) * msq_a[fb] / (2.0 * den * den)
            down = fv < 0.0
            L = np.where(down, mid_, L)
            H = np.where(down, H, mid_)
        r[fb] = 0.5 * (L + H)

    out.ravel()[idx] = r
    iters.ravel()[idx] = it
    return out, case, iters


def prox_action(rho_in: float, m_in, lam: float, mob: Mobility) -> ProxResult:
    """Prox of (lam/2) phi at a single cell; bounds hold exactly."""
    if lam <= 0.0:
        raise ValueError("prox_action requires lam > 0")
    m_in = np.atleast_1d(np.asarray(m_in, dtype=float))
    msq = float(np.sum(m_in**2))
    r, case, iters = _prox_rho(
        np.asarray([float(rho_in)]), np.asarray([msq]), lam, mob
    )
    rho_star = float(r[0])
    mval = float(mob.m(rho_star))
    m_star = m_in * (mval / (lam + mval))
    if case[0] in (6, 7):
        m_star = np.zeros_like(m_in)
    return ProxResult(rho_star, m_star, int(iters[0]), int(case[0]))


def prox_action_field(u: State, lam: float, mob: Mobility) -> State:
    """Cell-wise prox over a whole state; 2D momenta are one 2-vector per cell."""
    if lam <= 0.0:
        raise ValueError("prox_action_field requires lam > 0")
    stack = u.stack()
    msq = np.sum(stack[1:] ** 2, axis=0)
    rho_star, case, _ = _prox_rho(stack[0], msq, lam, mob)
    mval = mob.m(rho_star)
    shrink = mval / (lam + mval)
    shrink = np.where((case == 6) | (case == 7), 0.0, shrink)
    out = np.empty_like(stack)
    out[0] = rho_star
    out[1:] = stack[1:] * shrink
    return State.from_stack(u.grid, out)


def prox_stack(stack: np.ndarray, lam: float, mob: Mobility) -> np.ndarray:
    """Solver-internal prox on a stacked (1+dim, ...) array."""
    msq = np.sum(stack[1:] ** 2, axis=0)
    rho_star, case, _ = _prox_rho(stack[0], msq, lam, mob)
    mval = mob.m(rho_star)
    shrink = np.where((case == 6) | (case == 7), 0.0, mval / (lam + mval))
    out = np.empty_like(stack)
    out[0] = rho_star
    out[1:] = stack[1:] * shrink
    return out
