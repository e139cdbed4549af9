"""Outer time loop, reference solutions, and the initial-condition library.

Each step solves one inner variational problem; diagnostics (energy, mass,
bounds, inner iterations, constraint norm) are recorded per step.  The
diffusion-regularized variant swaps the constraint operator and subtracts a
saturation entropy from the driving energy; as eta -> inf it recovers the
plain scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.signal import fftconvolve

from . import physics
from .grid import Field, Grid, SolverError, State
from .optimizer import IterationStats, SbpConfig, SolverParams, solve_inner
from .transport import Mobility

DIAG_COLUMNS = (
    "step",
    "time",
    "energy",
    "mass",
    "rho_min",
    "rho_max",
    "inner_iters",
    "constraint_norm",
)


@dataclass
class Trajectory:
    """Snapshots plus one diagnostics row per time step (incl. the start)."""

    grid: Grid
    times: list[float] = field(default_factory=list)
    snapshots: list[Field] = field(default_factory=list)
    snapshot_steps: list[int] = field(default_factory=list)
    diagnostics: list[tuple] = field(default_factory=list)
    failed: bool = False

    def diagnostics_array(self) -> np.ndarray:
        return np.asarray(self.diagnostics, dtype=float)

    @property
    def final(self) -> Field:
        return self.snapshots[-1]


def _diag_row(step: int, time: float, rho: Field, spec: physics.EnergySpec,
              stats: IterationStats | None) -> tuple:
    vals = rho.values
    return (
        step,
        time,
        physics.energy(rho, spec),
        rho.total(),
        float(vals.min()),
        float(vals.max()),
        0 if stats is None else stats.iters,
        0.0 if stats is None else stats.constraint_norm,
    )


def _n_steps(T: float, tau: float) -> int:
    n = int(math.ceil(T / tau - 1e-9))
    return max(n, 0)


def run(
    rho0: Field,
    T: float,
    tau: float,
    energy: physics.EnergySpec,
    mob: Mobility,
    params: SolverParams,
    save_every: int = 0,
    sbp: SbpConfig | None = None,
) -> Trajectory:
    """March ceil(T/tau) implicit steps from rho0.

    Snapshots are kept every ``save_every`` steps (0 keeps only first/last)
    and always at the final time.  An unconverged inner solve aborts the
    march; the partial trajectory is returned with ``failed`` set and the
    offending row kept.
    """
    grid = rho0.grid
    traj = Trajectory(grid)
    traj.snapshots.append(rho0.copy())
    traj.snapshot_steps.append(0)
    traj.times.append(0.0)
    traj.diagnostics.append(_diag_row(0, 0.0, rho0, energy, None))

    rho = rho0.copy()
    nsteps = _n_steps(T, tau)
    for k in range(1, nsteps + 1):
        state, stats = solve_inner(rho, energy, mob, tau, params, sbp=sbp)
        rho = state.rho
        t = k * tau
        traj.diagnostics.append(_diag_row(k, t, rho, energy, stats))
        if (save_every and k % save_every == 0) or k == nsteps:
            traj.snapshots.append(rho.copy())
            traj.snapshot_steps.append(k)
            traj.times.append(t)
        if not stats.converged:
            traj.failed = True
            if traj.snapshot_steps[-1] != k:
                traj.snapshots.append(rho.copy())
                traj.snapshot_steps.append(k)
                traj.times.append(t)
            break
    return traj


def run_sbp(
    rho0: Field,
    T: float,
    tau: float,
    energy: physics.EnergySpec,
    mob: Mobility,
    params: SolverParams,
    sbp: SbpConfig,
    save_every: int = 0,
) -> Trajectory:
    """Diffusion-regularized march; the effective eta is refreshed per step."""
    return run(rho0, T, tau, energy, mob, params, save_every=save_every, sbp=sbp)


def check_trajectory(
    traj: Trajectory,
    mob: Mobility,
    delta: float,
    tol: float,
) -> list[str]:
    """Structural checks on the diagnostics: bounds, mass drift, energy decay.

    Returns a list of human-readable violations (empty when all hold).
    """
    rows = traj.diagnostics_array()
    out = []
    root_measure = math.sqrt(traj.grid.measure)
    mass0 = rows[0, 3]
    for k in range(rows.shape[0]):
        step, _, e, mass, rmin, rmax, _, _ = rows[k]
        if rmin < mob.alpha - 1e-12 or rmax > mob.beta + 1e-12:
            out.append(f"step {int(step)}: bounds violated [{rmin}, {rmax}]")
        if abs(mass - mass0) > k * delta * root_measure + 1e-12:
            out.append(f"step {int(step)}: mass drift {abs(mass - mass0):.3e}")
        if k > 0:
            e_prev = rows[k - 1, 2]
            if e > e_prev + tol * (1.0 + abs(e_prev)):
                out.append(
                    f"step {int(step)}: energy increased {e_prev:.6e} -> {e:.6e}"
                )
    return out


# -- reference solutions --------------------------------------------------------


def saturation_critical_mass(alpha: float, C: float, D: float) -> float:
    """M_c = alpha sqrt(2 pi D / C), above which a plateau forms."""
    return alpha * math.sqrt(2.0 * math.pi * D / C)


@lru_cache(maxsize=32)
def saturation_plateau_halfwidth(
    mass: float, alpha: float, C: float, D: float, halfwidth: float
) -> float:
    """Plateau half-width l of the supercritical profile, from the mass
    closure over [-halfwidth, halfwidth] by bisection."""

    def total(l: float) -> float:
        tail, _ = quad(
            lambda x: alpha * math.exp(-C * (x * x - l * l) / (2.0 * D)),
            l,
            halfwidth,
            epsabs=1e-12,
            epsrel=1e-12,
        )
        return 2.0 * (alpha * l + tail)

    lo, hi = 0.0, halfwidth
    if total(hi) < mass:
        raise ValueError("domain cannot hold the requested mass at saturation")
    if total(lo) > mass:
        raise ValueError("mass is subcritical on this domain; no plateau exists")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total(mid) < mass:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def saturation_steady(
    x, mass: float, alpha: float, C: float, D: float, halfwidth: float = 4.0
):
    """Steady profile of the saturation model: a Gaussian below the critical
    mass, a plateau at alpha with Gaussian tails above it."""
    if mass <= 0:
        raise ValueError("mass must be positive")
    x = np.asarray(x, dtype=float)
    mc = saturation_critical_mass(alpha, C, D)
    if mass <= mc:
        return mass * math.sqrt(C / (2.0 * math.pi * D)) * np.exp(-C * x**2 / (2.0 * D))
    l = saturation_plateau_halfwidth(mass, alpha, C, D, halfwidth)
    return alpha * np.exp(-C * np.maximum(x**2 - l * l, 0.0) / (2.0 * D))


def ch_initial(x, epsilon: float):
    """Compactly supported cosine hump of half-width pi*eps/2 on top of -1."""
    x = np.asarray(x, dtype=float)
    s = (x - 0.5) / epsilon
    return np.where(np.abs(s) <= 0.5 * math.pi, np.cos(s) - 1.0, -1.0)


def ch_steady(x, epsilon: float):
    """Steady droplet profile (1/pi)(1 + cos((x-1/2)/eps)) - 1.

    The hump spreads to half-width pi*eps, where both branches meet
    continuously at -1; the profile conserves the mass of ch_initial.
    """
    x = np.asarray(x, dtype=float)
    s = (x - 0.5) / epsilon
    return np.where(np.abs(s) <= math.pi, (1.0 + np.cos(s)) / math.pi - 1.0, -1.0)


# -- initial conditions ---------------------------------------------------------


def mollifier_kernel(grid: Grid, epsilon: float) -> np.ndarray:
    """Gaussian mollifier sampled at cell-center offsets, unit discrete mass."""
    if grid.dim != 2:
        raise ValueError("the mollifier kernel is used on 2D grids")
    px = int(math.ceil(10.0 * epsilon / grid.dx))
    py = int(math.ceil(10.0 * epsilon / grid.dy))
    ox = np.arange(-px, px + 1) * grid.dx
    oy = np.arange(-py, py + 1) * grid.dy
    xx, yy = np.meshgrid(ox, oy, indexing="ij")
    ker = np.exp(-(xx**2 + yy**2) / (4.0 * epsilon**2))
    return ker / ker.sum()


def mollified_droplets(grid: Grid, disks, epsilon: float) -> Field:
    """Sharp disks (value 2 inside, 0 outside) convolved with the Gaussian
    mollifier, minus one; the indicator is sampled on a padded extension of
    the grid so droplets touching the substrate stay saturated there."""
    if grid.dim != 2:
        raise ValueError("mollified droplets require a 2D grid")
    ker = mollifier_kernel(grid, epsilon)
    px = (ker.shape[0] - 1) // 2
    py = (ker.shape[1] - 1) // 2
    x = grid.a + (np.arange(-px, grid.nx + px) + 0.5) * grid.dx
    y = grid.c + (np.arange(-py, grid.ny + py) + 0.5) * grid.dy
    xx, yy = np.meshgrid(x, y, indexing="ij")
    ind = np.zeros(xx.shape)
    for cx, cy, r in disks:
        ind = np.where((xx - cx) ** 2 + (yy - cy) ** 2 < r * r, 2.0, ind)
    smoothed = fftconvolve(ind, ker, mode="same")[px : px + grid.nx, py : py + grid.ny]
    return Field(grid, np.clip(smoothed - 1.0, -1.0, 1.0))


def random_field(grid: Grid, center: float, halfwidth: float, seed: int) -> Field:
    """Seeded i.i.d. uniform samples in [center - halfwidth, center + halfwidth]."""
    rng = np.random.default_rng(seed)
    vals = rng.uniform(center - halfwidth, center + halfwidth, size=grid.shape)
    return Field(grid, vals)


def oscillation_amplitude(values: np.ndarray, window: int = 5) -> float:
    """Sup deviation from a moving average; measures grid-scale wiggles on a
    plateau irrespective of any smooth offset."""
    values = np.asarray(values, dtype=float)
    if values.size < window + 2:
        return 0.0
    kernel = np.ones(window) / window
    smooth = np.convolve(values, kernel, mode="valid")
    trim = (window - 1) // 2
    core = values[trim : trim + smooth.size]
    return float(np.max(np.abs(core - smooth)))
