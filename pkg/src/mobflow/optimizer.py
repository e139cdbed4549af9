"""Primal-dual inner solvers for one implicit (JKO) step.

One step minimizes  Phi(u) + tau * E(rho)  subject to ||A u - b|| <= delta
with b the previous density.  The three-operator splitting iterates

    phi  <- dual prox of the ball indicator at  phi + sigma A ubar
    u    <- cell-wise action prox at  u - lam grad - lam A^t phi
    ubar <- 2 u_new - u + lam (grad_old - grad_new)

The iteration runs in the cell-volume-weighted metric: the action prox then
takes the solver's lam unchanged in every dimension, and the gradient term
is the pointwise chemical potential tau * dE/drho / cell_volume.  The
preconditioned variant replaces the scalar dual step by the metric
M2 = lam A A^t, each application costing one SPD solve.

Stopping requires all three monitors at once: the volume-weighted
constraint norm below delta, relative changes of u and phi below TOL, and
relative changes of energy and action below TOL.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import physics, transport
from .grid import ContinuityOp, Field, Grid, SbpConstraintOp, SolverError, State, continuity_op

PD3O = "pd3o"
PREPD3O = "prepd3o"

#: floor for relative-change denominators
_FLOOR = 1e-30


@dataclass
class SbpConfig:
    """Diffusion regularization: coeff tau/eta in the constraint, 1/eta in
    the objective; eta = max(eta0, 1/(1 - ||rho||_inf)) when adaptive."""

    eta0: float = 80.0
    adaptive: bool = True

    def __post_init__(self):
        if self.eta0 <= 0:
            raise ValueError("eta0 must be positive")

    def effective_eta(self, rho: np.ndarray) -> float:
        if not self.adaptive:
            return self.eta0
        gap = 1.0 - float(np.max(np.abs(rho)))
        if gap <= 0.0:
            return np.inf
        return max(self.eta0, 1.0 / gap)


@dataclass
class SolverParams:
    """Primal step lam, dual step rule, ball radius delta, monitors, caps."""

    lam: float = 1.0
    sigma: float | None = None
    sigma_factor: float = 0.99
    delta: float | None = None
    tol: float = 1e-5
    max_iters: int = 50000
    variant: str = PD3O
    sbp: SbpConfig | None = None
    record_history: bool = False

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("primal step lam must be positive")
        if self.variant not in (PD3O, PREPD3O):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.tol <= 0 or self.max_iters < 1:
            raise ValueError("tol must be positive and max_iters >= 1")

    def resolve_delta(self, grid: Grid) -> float:
        """Default constraint radius 1e-5 * sqrt(|Omega|)."""
        if self.delta is not None:
            if self.delta < 0:
                raise ValueError("delta must be nonnegative")
            return self.delta
        return 1e-5 * np.sqrt(grid.measure)

    def resolve_sigma(self, lam_max: float) -> float:
        """Dual step; enforces sigma * lam * lambda_max(AA^t) < 1."""
        sigma = self.sigma
        if sigma is None:
            sigma = self.sigma_factor / (self.lam * lam_max)
        if sigma <= 0:
            raise ValueError("dual step sigma must be positive")
        if sigma * self.lam * lam_max >= 1.0:
            raise ValueError(
                f"step sizes violate sigma*lam*lambda_max = "
                f"{sigma * self.lam * lam_max:.6g} >= 1"
            )
        return sigma


@dataclass
class IterationStats:
    iters: int
    constraint_norm: float
    rel_u: float
    rel_phi: float
    rel_energy: float
    rel_action: float
    converged: bool
    history: list = field(default_factory=list)


@lru_cache(maxsize=16)
def _sbp_op(grid: Grid, coeff: float) -> SbpConstraintOp:
    """Cached regularized operator; hits when eta is frozen across steps."""
    return SbpConstraintOp(grid, coeff)


def _project_ball(y: np.ndarray, b: np.ndarray, delta: float) -> np.ndarray:
    d = y - b
    nrm = float(np.linalg.norm(d))
    if nrm <= delta:
        return y.copy()
    if nrm == 0.0:
        return b.copy()
    return b + (delta / nrm) * d


def project_ball(y: Field, b: Field, delta: float) -> Field:
    """Euclidean projection onto the ball of radius delta centered at b."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    return Field(y.grid, _project_ball(y.values, b.values, delta))


def _prox_dual(y: np.ndarray, sigma: float, b: np.ndarray, delta: float) -> np.ndarray:
    return y - sigma * _project_ball(y / sigma, b, delta)


def prox_dual(y: Field, sigma: float, b: Field, delta: float) -> Field:
    """Prox of the conjugate ball indicator: y - sigma Proj(y/sigma)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return Field(y.grid, _prox_dual(y.values, sigma, b.values, delta))


def prox_dual_pre(y: Field, op: ContinuityOp, lam: float, b: Field, delta: float) -> Field:
    """Extended dual prox in the metric M2 = lam AA^t:
    y - M2^{-1} Proj(M2 y)."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    z = lam * op.apply_AAt(y.values)
    proj = _project_ball(z, b.values, delta)
    resid = z - proj
    if not np.any(resid):
        return Field(y.grid, y.values - y.values)
    return Field(y.grid, y.values - op.solve_AAt(resid, lam))


class _Objective:
    """Energy value and pointwise gradient used inside one inner solve."""

    def __init__(self, grid: Grid, spec: physics.EnergySpec, tau: float,
                 mob: transport.Mobility, eta: float = np.inf):
        self.grid = grid
        self.spec = spec
        self.tau = tau
        self.mob = mob
        self.eta = eta
        self._w = grid.cell_volume

    def monitor_energy(self, rho: np.ndarray) -> float:
        e = physics.energy(Field(self.grid, rho), self.spec)
        if np.isfinite(self.eta):
            e -= self._w * physics.bound_entropy(rho, self.mob.alpha, self.mob.beta) / self.eta
        return e

    def grad_pointwise(self, rho: np.ndarray) -> np.ndarray:
        """tau * (dE^h/drho) / cell_volume, plus the entropy part if active."""
        g = physics.energy_grad(Field(self.grid, rho), self.spec).values * (self.tau / self._w)
        if np.isfinite(self.eta):
            g -= (self.tau / self.eta) * physics.bound_entropy_deriv(
                rho, self.mob.alpha, self.mob.beta
            )
        return g


def solve_inner(
    rho_k: Field,
    energy: physics.EnergySpec,
    mob: transport.Mobility,
    tau: float,
    params: SolverParams,
    sbp: SbpConfig | None = None,
) -> tuple[State, IterationStats]:
    """One implicit step from rho_k; returns the new state and solve stats.

    Starts from u = (rho_k, 0, ...) and phi = 0.  Raises SolverError on
    non-finite iterates; cap exhaustion returns the last iterate flagged
    unconverged.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    grid = rho_k.grid
    w = grid.cell_volume
    sbp = sbp if sbp is not None else params.sbp

    if sbp is not None:
        eta = sbp.effective_eta(rho_k.values)
        coeff = tau / eta if np.isfinite(eta) else 0.0
        op: ContinuityOp = _sbp_op(grid, coeff)
    else:
        eta = np.inf
        op = continuity_op(grid)

    obj = _Objective(grid, energy, tau, mob, eta)
    delta = params.resolve_delta(grid)
    lam = params.lam
    pre = params.variant == PREPD3O
    if not pre:
        sigma = params.resolve_sigma(op.lambda_max())

    b = rho_k.values
    nb = 1 + grid.dim
    u = np.zeros((nb,) + grid.shape)
    u[0] = b
    ubar = u.copy()
    phi = np.zeros(grid.shape)
    q = np.zeros(grid.shape)  # tracks M2 phi in the preconditioned variant
    g_cur = obj.grad_pointwise(u[0])
    e_cur = obj.monitor_energy(u[0])
    a_cur = 0.0  # action of the zero-momentum start

    stats = IterationStats(0, np.inf, np.inf, np.inf, np.inf, np.inf, False)
    for it in range(1, params.max_iters + 1):
        # dual step
        s = op.apply(ubar)
        if pre:
            z = q + s
            resid = z - _project_ball(z, b, delta)
            phi_new = op.solve_AAt(resid, lam, x0=phi) if np.any(resid) else np.zeros_like(phi)
            q = resid
        else:
            phi_new = _prox_dual(phi + sigma * s, sigma, b, delta)

        # primal step
        v = u - lam * op.adjoint(phi_new)
        v[0] -= lam * g_cur
        u_new = transport.prox_stack(v, lam, mob)
        if not np.all(np.isfinite(u_new)):
            raise SolverError(
                "inner solver produced non-finite iterates",
                iteration=it, lam=lam, variant=params.variant,
            )

        # extrapolation
        g_new = obj.grad_pointwise(u_new[0])
        ubar = 2.0 * u_new - u
        ubar[0] += lam * (g_cur - g_new)

        # monitors
        res = op.apply(u_new) - b
        cons = float(np.sqrt(np.sum(res * res) * w))
        rel_u = float(np.linalg.norm(u_new - u) / max(np.linalg.norm(u_new), _FLOOR))
        rel_phi = float(
            np.linalg.norm(phi_new - phi) / max(np.linalg.norm(phi_new), _FLOOR)
        )
        e_new = obj.monitor_energy(u_new[0])
        msq = np.sum(u_new[1:] ** 2, axis=0)
        a_new = 0.5 * w * float(np.sum(transport.action_cellwise(u_new[0], msq, mob)))
        rel_e = abs(e_new - e_cur) / max(abs(e_new), _FLOOR)
        rel_a = abs(a_new - a_cur) / max(abs(a_new), _FLOOR)

        u, phi, g_cur, e_cur, a_cur = u_new, phi_new, g_new, e_new, a_new
        stats.iters = it
        stats.constraint_norm = cons
        stats.rel_u, stats.rel_phi = rel_u, rel_phi
        stats.rel_energy, stats.rel_action = rel_e, rel_a
        if params.record_history:
            stats.history.append((it, cons, rel_u, rel_phi, rel_e, rel_a))
        if (
            cons <= delta
            and max(rel_u, rel_phi) <= params.tol
            and max(rel_e, rel_a) <= params.tol
        ):
            stats.converged = True
            break

    return State.from_stack(grid, u), stats
