"""Free-energy functionals and the wetting boundary closure.

The discrete energy combines a bulk potential H(rho), an external potential
V(x) rho, a trapezoidal Dirichlet term (eps^2/2)|grad rho|^2 and, on wall
boundaries, the cubic wall energy

    f_w(rho) = (eps/sqrt(2)) cos(beta_w) (rho^3/3 - rho),

whose derivative closes the boundary-face density value rho_half through a
quadratic equation.  Gradients follow the one-sided boundary stencils of the
scheme; the implicit dependence of rho_half on the adjacent cell is kept
frozen (no chain rule), which is exact whenever the walls are disabled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Field, Grid

#: floor applied to every logarithm argument so endpoint states stay finite
LOG_CLIP = 1e-13

GINZBURG_LANDAU = "ginzburg_landau"
LOGARITHMIC = "logarithmic"
ENTROPY = "entropy"

_KINDS = (GINZBURG_LANDAU, LOGARITHMIC, ENTROPY)


@dataclass(frozen=True)
class Potential:
    """Bulk potential choice.

    ginzburg_landau: H(rho) = (rho^2-1)^2 / 4
    logarithmic:     H(rho) = (theta/2)[(1+rho)ln((1+rho)/2)+(1-rho)ln((1-rho)/2)]
                              + (theta_c/2)(1-rho^2),  rho in (-1,1)
    entropy:         H(rho) = D rho (ln rho - 1),      rho > 0
    """

    kind: str
    theta: float = 0.0
    theta_c: float = 1.0
    d_coeff: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.theta < 0 or self.theta_c <= 0 or self.d_coeff <= 0:
            raise ValueError("potential parameters out of range")


def _cliplog(x):
    return np.log(np.maximum(x, LOG_CLIP))


def potential_value(p: Potential, rho):
    """H(rho), vectorized; log arguments are clipped at 1e-13."""
    rho = np.asarray(rho, dtype=float)
    if p.kind == GINZBURG_LANDAU:
        return 0.25 * (rho**2 - 1.0) ** 2
    if p.kind == LOGARITHMIC:
        ent = (1.0 + rho) * _cliplog((1.0 + rho) / 2.0) + (1.0 - rho) * _cliplog(
            (1.0 - rho) / 2.0
        )
        return 0.5 * p.theta * ent + 0.5 * p.theta_c * (1.0 - rho**2)
    return p.d_coeff * rho * (_cliplog(rho) - 1.0)


def potential_deriv(p: Potential, rho):
    """H'(rho), vectorized, with the same clipping."""
    rho = np.asarray(rho, dtype=float)
    if p.kind == GINZBURG_LANDAU:
        return rho**3 - rho
    if p.kind == LOGARITHMIC:
        return 0.5 * p.theta * (
            _cliplog((1.0 + rho) / 2.0) - _cliplog((1.0 - rho) / 2.0)
        ) - p.theta_c * rho
    return p.d_coeff * _cliplog(rho)


@dataclass
class EnergySpec:
    """Energy configuration: potential, interface coefficient, V samples, wall."""

    potential: Potential
    epsilon: float = 0.0
    v_ext: np.ndarray | None = None
    beta_w: float = math.pi / 2.0
    wall_enabled: bool = False

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.wall_enabled:
            if not 0.0 < self.beta_w < math.pi:
                raise ValueError("wall contact angle must lie in (0, pi)")
            if self.epsilon <= 0:
                raise ValueError("wall energy requires epsilon > 0")
        if self.v_ext is not None:
            self.v_ext = np.asarray(self.v_ext, dtype=float)

    def v_on(self, grid: Grid) -> np.ndarray:
        if self.v_ext is None:
            return np.zeros(grid.shape)
        if self.v_ext.shape != grid.shape:
            raise ValueError("external potential samples do not match the grid")
        return self.v_ext


def wall_energy(rho, beta_w: float, epsilon: float):
    """f_w(rho) = (eps/sqrt(2)) cos(beta_w) (rho^3/3 - rho)."""
    rho = np.asarray(rho, dtype=float)
    return (epsilon / math.sqrt(2.0)) * math.cos(beta_w) * (rho**3 / 3.0 - rho)


def wall_energy_deriv(rho, beta_w: float, epsilon: float):
    """f_w'(rho) = (eps/sqrt(2)) cos(beta_w) (rho^2 - 1)."""
    rho = np.asarray(rho, dtype=float)
    return (epsilon / math.sqrt(2.0)) * math.cos(beta_w) * (rho**2 - 1.0)


@dataclass
class BoundaryClosure:
    """Boundary-face density and the implied ghost value 2*rho_half - rho_1."""

    rho_half: float
    rho_ghost: float


def _half_values(rho_adj: np.ndarray, spec: EnergySpec, dx_normal: float) -> np.ndarray:
    """Vectorized wetting closure: the in-range root of the face quadratic.

    Solves gamma X^2 + eps X - (eps rho_1 + gamma) = 0 with
    gamma = (sqrt(2) dx/4) cos(beta_w), using the sign-safe quadratic
    formula plus one Newton polish.  For |rho_1| <= 1 the discriminant is
    (eps + 2 gamma rho_1)^2 + 4 gamma^2 (1 - rho_1^2) >= 0 and a root always
    lies in [-1, 1].
    """
    rho_adj = np.asarray(rho_adj, dtype=float)
    cosb = math.cos(spec.beta_w)
    if not spec.wall_enabled or cosb == 0.0:
        return rho_adj.copy()
    eps = spec.epsilon
    gamma = math.sqrt(2.0) * dx_normal / 4.0 * cosb
    cc = -(eps * rho_adj + gamma)
    disc = eps * eps - 4.0 * gamma * cc
    if np.any(disc < 0.0):
        raise ValueError(
            "wetting closure has no real root; inadmissible configuration "
            f"(rho_adj range [{rho_adj.min()}, {rho_adj.max()}], beta_w={spec.beta_w}, "
            f"eps={eps}, dx={dx_normal})"
        )
    sq = np.sqrt(disc)
    q = -0.5 * (eps + sq)  # eps > 0, so this is the cancellation-free branch
    r1 = q / gamma
    r2 = cc / q
    in1 = np.abs(r1) <= 1.0 + 1e-12
    in2 = np.abs(r2) <= 1.0 + 1e-12
    # prefer the in-range root; if both qualify take the one closer to rho_adj
    both = in1 & in2
    pick1 = in1 & (~in2 | (both & (np.abs(r1 - rho_adj) <= np.abs(r2 - rho_adj))))
    x = np.where(pick1, r1, r2)
    if np.any(~(in1 | in2)):
        raise ValueError(
            "wetting closure has no root in the phase range [-1, 1]; "
            f"inadmissible configuration (rho_adj outside [-1,1]?)"
        )
    # one Newton polish keeps the plug-back residual at rounding level
    x = x - (gamma * x * x + eps * x + cc) / (2.0 * gamma * x + eps)
    return np.clip(x, -1.0, 1.0)


def boundary_value(rho_adjacent: float, spec: EnergySpec, dx_normal: float) -> BoundaryClosure:
    """Wetting closure for one boundary face; cos(beta_w)=0 gives rho_half=rho_1."""
    x = float(_half_values(np.asarray([rho_adjacent]), spec, dx_normal)[0])
    return BoundaryClosure(rho_half=x, rho_ghost=2.0 * x - float(rho_adjacent))


# -- 1D energy ----------------------------------------------------------------

def energy_1d(rho: Field, spec: EnergySpec) -> float:
    g = rho.grid
    if g.dim != 1:
        raise ValueError("energy_1d requires a 1D grid")
    r = rho.values
    dx = g.dx
    v = spec.v_on(g)
    e = float(np.sum(potential_value(spec.potential, r) + v * r) * dx)
    eps = spec.epsilon
    if eps > 0.0:
        grad_in = (r[1:] - r[:-1]) / dx
        hl = float(_half_values(r[:1], spec, dx)[0])
        hr = float(_half_values(r[-1:], spec, dx)[0])
        gl = 2.0 * (r[0] - hl) / dx
        gr = 2.0 * (hr - r[-1]) / dx
        e += eps**2 / 4.0 * dx * (gl**2 + 2.0 * float(np.sum(grad_in**2)) + gr**2)
        if spec.wall_enabled:
            e += float(wall_energy(hl, spec.beta_w, eps))
            e += float(wall_energy(hr, spec.beta_w, eps))
    return e


def energy_grad_1d(rho: Field, spec: EnergySpec) -> Field:
    """dE^h/drho_i: bulk term (H'+V)dx minus eps^2 times the one-sided
    second difference, plus f_w'(rho_half) at wall endpoints."""
    g = rho.grid
    if g.dim != 1:
        raise ValueError("energy_grad_1d requires a 1D grid")
    r = rho.values
    dx = g.dx
    out = (potential_deriv(spec.potential, r) + spec.v_on(g)) * dx
    eps = spec.epsilon
    if eps > 0.0:
        lap = np.empty_like(r)
        lap[1:-1] = r[2:] - 2.0 * r[1:-1] + r[:-2]
        lap[0] = r[1] - r[0]
        lap[-1] = r[-2] - r[-1]
        out -= eps**2 * lap / dx
        if spec.wall_enabled:
            hl = float(_half_values(r[:1], spec, dx)[0])
            hr = float(_half_values(r[-1:], spec, dx)[0])
            out[0] += float(wall_energy_deriv(hl, spec.beta_w, eps))
            out[-1] += float(wall_energy_deriv(hr, spec.beta_w, eps))
    return Field(g, out)


# -- 2D energy ----------------------------------------------------------------

def energy_2d(rho: Field, spec: EnergySpec) -> float:
    """Midpoint bulk + trapezoidal Dirichlet energy; the substrate (y=c) face
    carries the wetting closure, all other boundary faces are Neumann."""
    g = rho.grid
    if g.dim != 2:
        raise ValueError("energy_2d requires a 2D grid")
    r = rho.values
    dx, dy, w = g.dx, g.dy, g.cell_volume
    v = spec.v_on(g)
    e = float(np.sum(potential_value(spec.potential, r) + v * r) * w)
    eps = spec.epsilon
    if eps > 0.0:
        gx = (r[1:, :] - r[:-1, :]) / dx
        gy = (r[:, 1:] - r[:, :-1]) / dy
        e += eps**2 / 2.0 * w * (float(np.sum(gx**2)) + float(np.sum(gy**2)))
        if spec.wall_enabled:
            half = _half_values(r[:, 0], spec, dy)
            gsub = 2.0 * (r[:, 0] - half) / dy
            e += eps**2 / 4.0 * w * float(np.sum(gsub**2))
            e += float(np.sum(wall_energy(half, spec.beta_w, eps))) * dx
    return e


def energy_grad_2d(rho: Field, spec: EnergySpec) -> Field:
    g = rho.grid
    if g.dim != 2:
        raise ValueError("energy_grad_2d requires a 2D grid")
    r = rho.values
    dx, dy, w = g.dx, g.dy, g.cell_volume
    out = (potential_deriv(spec.potential, r) + spec.v_on(g)) * w
    eps = spec.epsilon
    if eps > 0.0:
        lx = np.empty_like(r)
        lx[1:-1, :] = (r[2:, :] - 2.0 * r[1:-1, :] + r[:-2, :]) / dx**2
        lx[0, :] = (r[1, :] - r[0, :]) / dx**2
        lx[-1, :] = (r[-2, :] - r[-1, :]) / dx**2
        ly = np.empty_like(r)
        ly[:, 1:-1] = (r[:, 2:] - 2.0 * r[:, 1:-1] + r[:, :-2]) / dy**2
        ly[:, 0] = (r[:, 1] - r[:, 0]) / dy**2
        ly[:, -1] = (r[:, -2] - r[:, -1]) / dy**2
        out -= eps**2 * (lx + ly) * w
        if spec.wall_enabled:
            half = _half_values(r[:, 0], spec, dy)
            out[:, 0] += wall_energy_deriv(half, spec.beta_w, eps) * dx
    return Field(g, out)


def energy(rho: Field, spec: EnergySpec) -> float:
    return energy_1d(rho, spec) if rho.grid.dim == 1 else energy_2d(rho, spec)


def energy_grad(rho: Field, spec: EnergySpec) -> Field:
    return energy_grad_1d(rho, spec) if rho.grid.dim == 1 else energy_grad_2d(rho, spec)


# -- saturation entropy for the diffusion-regularized scheme -------------------

def bound_entropy(rho: np.ndarray, alpha: float, beta: float) -> float:
    """sum of [(rho-a)ln(rho-a) + (b-rho)ln(b-rho)] / (b-a), logs clipped.

    Caller multiplies by the cell volume; this is the entropy that keeps the
    density away from its saturation bounds.
    """
    s = (rho - alpha) * _cliplog(rho - alpha) + (beta - rho) * _cliplog(beta - rho)
    return float(np.sum(s) / (beta - alpha))


def bound_entropy_deriv(rho: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """Pointwise d/drho of the entropy density: ln((rho-a)/(b-rho)) / (b-a)."""
    return (_cliplog(rho - alpha) - _cliplog(beta - rho)) / (beta - alpha)
