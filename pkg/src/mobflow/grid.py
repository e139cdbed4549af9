"""Finite-volume meshes, cell fields, and the discrete continuity constraint.

The constraint operator acts on a primal state u = (rho, m) as

    A u = rho + div_h(m),

where div_h is the centered difference of each momentum component with
odd-reflection ghost cells (m_0 = -m_1 and so on), encoding the no-flux
boundary condition.  Its adjoint, the spectral norm of A A^t and a
matrix-free SPD solve for (scale * A A^t) x = y are provided as well; they
back both the plain and the diffusion-regularized constraint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.fft import dctn, idctn


class SolverError(RuntimeError):
    """An iterative kernel failed to reach its tolerance within its cap."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered mesh on [a,b] (1D) or [a,b]x[c,d] (2D).

    ``substrate`` marks the wall boundary: y = c in 2D, both endpoints in 1D.
    """

    dim: int
    nx: int
    a: float
    b: float
    ny: int = 0
    c: float = 0.0
    d: float = 0.0
    substrate: bool = False

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.nx < 2 or (self.dim == 2 and self.ny < 2):
            raise ValueError("need at least 2 cells per direction")
        if not self.b > self.a:
            raise ValueError("domain bounds require b > a")
        if self.dim == 2 and not self.d > self.c:
            raise ValueError("domain bounds require d > c")

    @property
    def dx(self) -> float:
        return (self.b - self.a) / self.nx

    @property
    def dy(self) -> float:
        if self.dim == 1:
            raise AttributeError("1D grid has no dy")
        return (self.d - self.c) / self.ny

    @property
    def shape(self) -> tuple:
        return (self.nx,) if self.dim == 1 else (self.nx, self.ny)

    @property
    def ncells(self) -> int:
        return self.nx if self.dim == 1 else self.nx * self.ny

    @property
    def cell_volume(self) -> float:
        return self.dx if self.dim == 1 else self.dx * self.dy

    @property
    def measure(self) -> float:
        """Total domain measure |Omega|."""
        return self.ncells * self.cell_volume

    def xcenters(self) -> np.ndarray:
        return self.a + (np.arange(self.nx) + 0.5) * self.dx

    def ycenters(self) -> np.ndarray:
        return self.c + (np.arange(self.ny) + 0.5) * self.dy

    def meshgrid(self):
        """Cell-center coordinate arrays, shaped like a field."""
        if self.dim == 1:
            return (self.xcenters(),)
        return np.meshgrid(self.xcenters(), self.ycenters(), indexing="ij")


@dataclass
class Field:
    """One scalar per cell; values are shaped (nx,) or (nx, ny)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.size != self.grid.ncells:
            raise ValueError(
                f"field size {vals.size} does not match grid with {self.grid.ncells} cells"
            )
        vals = vals.reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite entries")
        self.values = vals

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def total(self) -> float:
        """Discrete integral sum(values) * cell_volume."""
        return float(self.values.sum() * self.grid.cell_volume)


@dataclass
class State:
    """Primal unknown u = (rho, m): density plus one momentum per dimension."""

    rho: Field
    mx: Field
    my: Field | None = None

    def __post_init__(self):
        grids = [self.rho.grid, self.mx.grid]
        if self.my is not None:
            grids.append(self.my.grid)
        if any(g != grids[0] for g in grids):
            raise ValueError("state components live on mismatched grids")
        if grids[0].dim == 2 and self.my is None:
            raise ValueError("2D state requires a my component")
        if grids[0].dim == 1 and self.my is not None:
            raise ValueError("1D state must not carry a my component")

    @property
    def grid(self) -> Grid:
        return self.rho.grid

    def stack(self) -> np.ndarray:
        """(1+dim, nx[, ny]) array view used by the solver internals."""
        comps = [self.rho.values, self.mx.values]
        if self.my is not None:
            comps.append(self.my.values)
        return np.stack(comps)

    @staticmethod
    def from_stack(grid: Grid, u: np.ndarray) -> "State":
        if grid.dim == 1:
            return State(Field(grid, u[0]), Field(grid, u[1]))
        return State(Field(grid, u[0]), Field(grid, u[1]), Field(grid, u[2]))

    @staticmethod
    def zero_momentum(rho: Field) -> "State":
        g = rho.grid
        my = Field(g, np.zeros(g.shape)) if g.dim == 2 else None
        return State(rho.copy(), Field(g, np.zeros(g.shape)), my)


# -- momentum difference stencils -------------------------------------------
#
# Forward: (D m)_i = (m_{i+1} - m_{i-1}) / (2 dx) with odd ghosts m_0 = -m_1.
# Adjoint: (D^t p)_j = (p_{j-1} - p_{j+1}) / (2 dx) with even ghosts p_0 = p_1,
# which is the exact matrix transpose of the forward stencil.

def _ddiff(m: np.ndarray, h: float, axis: int) -> np.ndarray:
    m = np.moveaxis(m, axis, 0)
    out = np.empty_like(m)
    out[1:-1] = m[2:] - m[:-2]
    out[0] = m[1] + m[0]
    out[-1] = -m[-1] - m[-2]
    return np.moveaxis(out, 0, axis) / (2.0 * h)


def _ddiff_adj(p: np.ndarray, h: float, axis: int) -> np.ndarray:
    p = np.moveaxis(p, axis, 0)
    out = np.empty_like(p)
    out[1:-1] = p[:-2] - p[2:]
    out[0] = p[0] - p[1]
    out[-1] = p[-2] - p[-1]
    return np.moveaxis(out, 0, axis) / (2.0 * h)


def laplacian_neumann(rho: np.ndarray, grid: Grid) -> np.ndarray:
    """Discrete Laplacian with homogeneous Neumann (even-ghost) closure."""
    out = np.zeros_like(rho)
    for axis, h in ((0, grid.dx),) if grid.dim == 1 else ((0, grid.dx), (1, grid.dy)):
        r = np.moveaxis(rho, axis, 0)
        part = np.empty_like(r)
        part[1:-1] = r[2:] - 2.0 * r[1:-1] + r[:-2]
        part[0] = r[1] - r[0]
        part[-1] = r[-2] - r[-1]
        out += np.moveaxis(part, 0, axis) / h**2
    return out


class ContinuityOp:
    """Matrix-free A u = rho + div_h(m) and friends, for one grid.

    Pure functions of their inputs; instances hold only the grid, cached
    spectral data, and scratch-free numpy kernels, so concurrent use on a
    shared instance is safe.
    """

    #: power-iteration controls; cap chosen so that <=64-cell grids reach
    #: 1e-6 relative accuracy (Rayleigh quotients converge slowly when the
    #: top of the spectrum clusters).
    POWER_TOL = 1e-12
    POWER_CAP = 20000

    def __init__(self, grid: Grid):
        self.grid = grid
        self._lambda_max = None
        self.lambda_max_converged = True
        self._power_v0 = None
        self._eigs = None

    # -- forward / adjoint ---------------------------------------------------

    def rho_block(self, rho: np.ndarray) -> np.ndarray:
        """Action of A on the density block (identity here)."""
        return rho

    def apply(self, u: np.ndarray) -> np.ndarray:
        """A u for a stacked state array of shape (1+dim, ...)."""
        g = self.grid
        out = self.rho_block(u[0]) + _ddiff(u[1], g.dx, 0)
        if g.dim == 2:
            out = out + _ddiff(u[2], g.dy, 1)
        return out

    def adjoint(self, phi: np.ndarray) -> np.ndarray:
        """A^t phi as a stacked state array."""
        g = self.grid
        blocks = [self.rho_block(phi), _ddiff_adj(phi, g.dx, 0)]
        if g.dim == 2:
            blocks.append(_ddiff_adj(phi, g.dy, 1))
        return np.stack(blocks)

    def apply_AAt(self, phi: np.ndarray) -> np.ndarray:
        return self.apply(self.adjoint(phi))

    # -- spectral norm ---------------------------------------------------------

    def lambda_max(self, v0: np.ndarray | None = None) -> float:
        """Largest eigenvalue of A A^t by power iteration (cached).

        The start vector is all-ones plus a fixed sine perturbation so it
        is never orthogonal to the leading eigenvector (the constant vector
        is an eigenvector of the *smallest* eigenvalue).
        """
        if self._lambda_max is not None:
            return self._lambda_max
        n = self.grid.ncells
        if v0 is None:
            v = 1.0 + 0.5 * np.sin(1.2345 * (np.arange(n) + 1.0))
        else:
            v = v0.reshape(n).astype(float).copy()
        v = v.reshape(self.grid.shape)
        v /= np.linalg.norm(v)
        q_prev = 0.0
        q = 1.0
        converged = False
        for _ in range(self.POWER_CAP):
            w = self.apply_AAt(v)
            q = float(np.vdot(v, w))
            if abs(q - q_prev) <= self.POWER_TOL * abs(q):
                converged = True
                break
            q_prev = q
            v = w / np.linalg.norm(w)
        self._lambda_max = q
        self.lambda_max_converged = converged
        self._power_v0 = v
        return q

    # -- SPD solve -------------------------------------------------------------

    def _laplacian_coeff(self) -> float:
        return 0.0

    def _spectral_eigs(self) -> np.ndarray:
        """Eigenvalues of A A^t in the tensor cosine (DCT-II) basis.

        The difference stencil D with odd momentum ghosts and the Neumann
        Laplacian share the eigenvectors cos((i+1/2) k pi / n); D D^t has
        eigenvalues sin^2(k pi / n) / h^2 per direction, the Laplacian
        -4 sin^2(k pi / 2n) / h^2.
        """
        g = self.grid
        kx = np.arange(g.nx)
        sx = np.sin(kx * np.pi / g.nx) ** 2 / g.dx**2
        lx = 4.0 * np.sin(kx * np.pi / (2 * g.nx)) ** 2 / g.dx**2
        if g.dim == 1:
            s2, lap = sx, lx
        else:
            ky = np.arange(g.ny)
            sy = np.sin(ky * np.pi / g.ny) ** 2 / g.dy**2
            ly = 4.0 * np.sin(ky * np.pi / (2 * g.ny)) ** 2 / g.dy**2
            s2 = sx[:, None] + sy[None, :]
            lap = lx[:, None] + ly[None, :]
        return (1.0 + self._laplacian_coeff() * lap) ** 2 + s2

    def solve_AAt(
        self,
        rhs: np.ndarray,
        scale: float,
        x0: np.ndarray | None = None,
        tol: float = 1e-10,
    ) -> np.ndarray:
        """Solve (scale * A A^t) x = rhs exactly in the cosine eigenbasis.

        A A^t is SPD with smallest eigenvalue >= 1, so the solve is well
        posed for any scale > 0; the spectral factorization leaves a
        rounding-level residual, well below the 1e-10 relative contract.
        """
        if scale <= 0.0:
            raise ValueError("scale must be positive")
        if self._eigs is None:
            self._eigs = self._spectral_eigs()
        z = dctn(rhs, type=2, norm="ortho")
        return idctn(z / (scale * self._eigs), type=2, norm="ortho")

    def solve_AAt_cg(
        self,
        rhs: np.ndarray,
        scale: float,
        x0: np.ndarray | None = None,
        tol: float = 1e-10,
    ) -> np.ndarray:
        """Matrix-free conjugate-gradient solve of (scale * A A^t) x = rhs.

        Relative residual <= tol, iteration cap 10 * ncells.  Kept as the
        structure-agnostic reference path; the spectral solve is preferred
        in iteration-heavy loops.
        """
        if scale <= 0.0:
            raise ValueError("scale must be positive")
        rhs_norm = np.linalg.norm(rhs)
        if rhs_norm == 0.0:
            return np.zeros_like(rhs)
        x = np.zeros_like(rhs) if x0 is None else x0.copy()
        r = rhs - scale * self.apply_AAt(x)
        p = r.copy()
        rr = float(np.vdot(r, r))
        target = tol * rhs_norm
        cap = 10 * self.grid.ncells
        for _ in range(cap):
            if np.sqrt(rr) <= target:
                return x
            Ap = scale * self.apply_AAt(p)
            alpha = rr / float(np.vdot(p, Ap))
            x += alpha * p
            r -= alpha * Ap
            rr_new = float(np.vdot(r, r))
            p = r + (rr_new / rr) * p
            rr = rr_new
        if np.sqrt(rr) <= target:
            return x
        raise SolverError(
            "conjugate-gradient solve of scale*AA^t exceeded its iteration cap",
            achieved_residual=float(np.sqrt(rr) / rhs_norm),
            cap=cap,
        )


class SbpConstraintOp(ContinuityOp):
    """Diffusion-regularized constraint A u = (I - coeff * L_N) rho + div_h(m).

    L_N is the Neumann-ghost Laplacian; coeff = tau/eta.  Column sums of
    L_N vanish, so the mass-telescoping identity of the plain operator is
    retained.
    """

    def __init__(self, grid: Grid, coeff: float):
        super().__init__(grid)
        self.coeff = float(coeff)

    def _laplacian_coeff(self) -> float:
        return self.coeff

    def rho_block(self, rho: np.ndarray) -> np.ndarray:
        if self.coeff == 0.0:
            return rho
        return rho - self.coeff * laplacian_neumann(rho, self.grid)


@lru_cache(maxsize=64)
def _cached_op(grid: Grid) -> ContinuityOp:
    return ContinuityOp(grid)


def continuity_op(grid: Grid) -> ContinuityOp:
    """Shared plain constraint operator for a grid (lambda_max cached)."""
    return _cached_op(grid)


# -- spec-level wrappers ------------------------------------------------------

def apply_constraint(u: State) -> Field:
    """A u; the discrete total of the result equals the total of rho."""
    return Field(u.grid, continuity_op(u.grid).apply(u.stack()))


def apply_constraint_adjoint(phi: Field) -> State:
    """A^t phi, the exact transpose in the unweighted Euclidean pairing."""
    return State.from_stack(phi.grid, continuity_op(phi.grid).adjoint(phi.values))


def lambda_max_AAt(grid: Grid) -> float:
    return continuity_op(grid).lambda_max()


def solve_AAt(rhs: Field, scale: float) -> Field:
    return Field(rhs.grid, continuity_op(rhs.grid).solve_AAt(rhs.values, scale))
