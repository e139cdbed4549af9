"""Experiment configuration: schema, validation, presets, and builders.

A configuration is a plain dict of flat sections (grid / energy / mobility /
solver / time / init / sbp) mirroring ExperimentConfig.  Presets fill in a
complete document; a YAML config file and CLI flags override preset keys,
in that order.  Validation rejects unknown keys and out-of-range values
before anything is allocated.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from . import stepper
from .grid import Field, Grid
from .optimizer import PD3O, PREPD3O, SbpConfig, SolverParams
from .physics import ENTROPY, GINZBURG_LANDAU, LOGARITHMIC, EnergySpec, Potential
from .transport import Mobility


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""


_POTENTIAL_ALIASES = {
    "gl": GINZBURG_LANDAU,
    "ginzburg_landau": GINZBURG_LANDAU,
    "log": LOGARITHMIC,
    "logarithmic": LOGARITHMIC,
    "entropy": ENTROPY,
}

_INIT_KINDS = ("uniform_mass", "ch_cosine", "piecewise_linear", "uniform_random", "droplets")

# section -> key -> (expected types, short description)
_SCHEMA = {
    "grid": {
        "dim": (int, "1 or 2"),
        "nx": (int, "cells in x"),
        "ny": (int, "cells in y (2D)"),
        "a": ((int, float), "left bound"),
        "b": ((int, float), "right bound"),
        "c": ((int, float), "bottom bound (2D)"),
        "d": ((int, float), "top bound (2D)"),
        "substrate": (bool, "wall marker"),
    },
    "energy": {
        "potential": (str, "gl|log|entropy"),
        "theta": ((int, float), "log-potential temperature"),
        "theta_c": ((int, float), "log-potential critical temperature"),
        "d_coeff": ((int, float), "entropy strength"),
        "epsilon": ((int, float), "interface coefficient"),
        "beta_w": ((int, float), "contact angle (radians)"),
        "wall": (bool, "wall energy on/off"),
        "confinement_c": ((int, float), "quadratic external potential C|x|^2/2"),
    },
    "mobility": {
        "alpha": ((int, float), "lower saturation bound"),
        "beta": ((int, float), "upper saturation bound"),
    },
    "solver": {
        "variant": (str, "pd3o|prepd3o"),
        "lam": ((int, float), "primal step"),
        "sigma": ((int, float, type(None)), "explicit dual step"),
        "sigma_factor": ((int, float), "dual step safety factor"),
        "delta": ((int, float, type(None)), "constraint ball radius"),
        "tol": ((int, float), "monitor tolerance"),
        "max_iters": (int, "inner iteration cap"),
    },
    "time": {
        "tau": ((int, float), "time step"),
        "t_final": ((int, float), "final time"),
        "save_every": (int, "snapshot cadence in steps"),
    },
    "init": {
        "kind": (str, "|".join(_INIT_KINDS)),
        "mass": ((int, float), "total mass (uniform_mass)"),
        "center": ((int, float), "uniform_random center"),
        "halfwidth": ((int, float), "uniform_random halfwidth"),
        "disks": (list, "droplet disks [cx, cy, r]"),
    },
    "sbp": {
        "enabled": (bool, "regularized constraint on/off"),
        "eta0": ((int, float), "baseline regularization"),
        "adaptive": (bool, "adaptive eta"),
    },
}

_TOP_KEYS = ("preset", "grid", "energy", "mobility", "solver", "time", "init", "sbp", "seed", "out")


@dataclass
class ExperimentConfig:
    """Validated configuration; ``raw`` holds the resolved document."""

    raw: dict

    @property
    def preset(self) -> str:
        return self.raw["preset"]

    @property
    def seed(self):
        return self.raw.get("seed")

    def section(self, name: str) -> dict:
        return self.raw[name]


def validate(cfg: dict) -> ExperimentConfig:
    """Schema-check a resolved config document; raises ConfigError."""
    for key in cfg:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown top-level key {key!r}")
    for section, keys in _SCHEMA.items():
        if section == "sbp" and cfg.get("sbp") is None:
            continue
        body = cfg.get(section)
        if body is None:
            raise ConfigError(f"missing config section {section!r}")
        for key, val in body.items():
            if key not in keys:
                raise ConfigError(f"unknown key {section}.{key}")
            expected = keys[key][0]
            if isinstance(val, bool) and expected is not bool and not (
                isinstance(expected, tuple) and bool in expected
            ):
                raise ConfigError(f"{section}.{key} has wrong type (bool)")
            if not isinstance(val, expected):
                raise ConfigError(
                    f"{section}.{key} has wrong type {type(val).__name__}"
                )

    g = cfg["grid"]
    if g["dim"] not in (1, 2):
        raise ConfigError("grid.dim must be 1 or 2")
    if g["nx"] < 2 or (g["dim"] == 2 and g.get("ny", 0) < 2):
        raise ConfigError("grid.nx/ny must be >= 2")
    if not g["b"] > g["a"] or (g["dim"] == 2 and not g["d"] > g["c"]):
        raise ConfigError("grid bounds must be increasing")

    e = cfg["energy"]
    if e["potential"] not in _POTENTIAL_ALIASES:
        raise ConfigError(f"energy.potential must be one of {sorted(_POTENTIAL_ALIASES)}")
    if e.get("epsilon", 0.0) < 0:
        raise ConfigError("energy.epsilon must be nonnegative")
    if e.get("wall", False):
        bw = e.get("beta_w", 0.0)
        if not 0.0 < bw < math.pi:
            raise ConfigError(f"energy.beta_w={bw} outside (0, pi)")
        if e.get("epsilon", 0.0) <= 0:
            raise ConfigError("energy.wall requires epsilon > 0")

    m = cfg["mobility"]
    if not m["beta"] > m["alpha"]:
        raise ConfigError("mobility.alpha must be below mobility.beta")

    s = cfg["solver"]
    if s["variant"] not in (PD3O, PREPD3O):
        raise ConfigError("solver.variant must be pd3o or prepd3o")
    if s["lam"] <= 0 or s["tol"] <= 0 or s["max_iters"] < 1:
        raise ConfigError("solver.lam/tol/max_iters out of range")
    if s.get("delta") is not None and s["delta"] < 0:
        raise ConfigError("solver.delta must be nonnegative")

    t = cfg["time"]
    if t["tau"] <= 0 or t["t_final"] <= 0:
        raise ConfigError("time.tau and time.t_final must be positive")
    if t.get("save_every", 0) < 0:
        raise ConfigError("time.save_every must be nonnegative")

    init = cfg["init"]
    if init["kind"] not in _INIT_KINDS:
        raise ConfigError(f"init.kind must be one of {_INIT_KINDS}")
    if init["kind"] == "uniform_random" and cfg.get("seed") is None:
        raise ConfigError("randomized init requires an explicit seed")
    if init["kind"] == "droplets":
        disks = init.get("disks", [])
        if not disks:
            raise ConfigError("init.disks must list at least one disk")
        for d in disks:
            if len(d) != 3 or d[2] <= 0:
                raise ConfigError("init.disks entries must be [cx, cy, r] with r > 0")
    return ExperimentConfig(cfg)


# -- builders -------------------------------------------------------------------


def build_grid(cfg: ExperimentConfig) -> Grid:
    g = cfg.section("grid")
    if g["dim"] == 1:
        return Grid(1, g["nx"], float(g["a"]), float(g["b"]),
                    substrate=g.get("substrate", False))
    return Grid(2, g["nx"], float(g["a"]), float(g["b"]), g["ny"],
                float(g["c"]), float(g["d"]), substrate=g.get("substrate", False))


def build_energy(cfg: ExperimentConfig, grid: Grid) -> EnergySpec:
    e = cfg.section("energy")
    kind = _POTENTIAL_ALIASES[e["potential"]]
    pot = Potential(kind, theta=float(e.get("theta", 0.0)),
                    theta_c=float(e.get("theta_c", 1.0)),
                    d_coeff=float(e.get("d_coeff", 1.0)))
    v_ext = None
    c_conf = float(e.get("confinement_c", 0.0))
    if c_conf != 0.0:
        coords = grid.meshgrid()
        r2 = sum(c**2 for c in coords)
        v_ext = 0.5 * c_conf * r2
    return EnergySpec(
        potential=pot,
        epsilon=float(e.get("epsilon", 0.0)),
        v_ext=v_ext,
        beta_w=float(e.get("beta_w", math.pi / 2)),
        wall_enabled=bool(e.get("wall", False)),
    )


def build_mobility(cfg: ExperimentConfig) -> Mobility:
    m = cfg.section("mobility")
    return Mobility(float(m["alpha"]), float(m["beta"]))


def build_solver_params(cfg: ExperimentConfig) -> SolverParams:
    s = cfg.section("solver")
    sbp_cfg = None
    sb = cfg.raw.get("sbp")
    if sb is not None and sb.get("enabled", False):
        sbp_cfg = SbpConfig(eta0=float(sb.get("eta0", 80.0)),
                            adaptive=bool(sb.get("adaptive", True)))
    return SolverParams(
        lam=float(s["lam"]),
        sigma=None if s.get("sigma") is None else float(s["sigma"]),
        sigma_factor=float(s.get("sigma_factor", 0.99)),
        delta=None if s.get("delta") is None else float(s["delta"]),
        tol=float(s["tol"]),
        max_iters=int(s["max_iters"]),
        variant=s["variant"],
        sbp=sbp_cfg,
    )


def build_initial(cfg: ExperimentConfig, grid: Grid, energy: EnergySpec) -> Field:
    init = cfg.section("init")
    kind = init["kind"]
    if kind == "uniform_mass":
        value = float(init["mass"]) / grid.measure
        return Field(grid, np.full(grid.shape, value))
    if kind == "ch_cosine":
        x = grid.xcenters()
        prof = stepper.ch_initial(x, energy.epsilon)
        if grid.dim == 1:
            return Field(grid, prof)
        return Field(grid, np.repeat(prof[:, None], grid.ny, axis=1))
    if kind == "piecewise_linear":
        x = grid.xcenters()
        vals = np.select(
            [
                (x >= 0.0) & (x <= 1.0 / 3.0 - 0.05),
                np.abs(x - 1.0 / 3.0) <= 0.05,
                np.abs(x - 0.82) <= 0.05,
            ],
            [np.ones_like(x), 20.0 * (1.0 / 3.0 - x), -20.0 * np.abs(x - 0.82)],
            default=-1.0,
        )
        return Field(grid, vals)
    if kind == "uniform_random":
        return stepper.random_field(
            grid, float(init["center"]), float(init["halfwidth"]), int(cfg.seed)
        )
    if kind == "droplets":
        return stepper.mollified_droplets(grid, init["disks"], energy.epsilon)
    raise ConfigError(f"unhandled init kind {kind!r}")


# -- preset table -----------------------------------------------------------------


def _base(preset: str) -> dict:
    return {
        "preset": preset,
        "grid": {},
        "energy": {"potential": "gl", "theta": 0.0, "theta_c": 1.0, "d_coeff": 1.0,
                   "epsilon": 0.0, "beta_w": math.pi / 2, "wall": False,
                   "confinement_c": 0.0},
        "mobility": {"alpha": -1.0, "beta": 1.0},
        "solver": {"variant": PREPD3O, "lam": 1.0, "sigma": None, "sigma_factor": 0.99,
                   "delta": None, "tol": 1e-5, "max_iters": 100000},
        "time": {"tau": 0.01, "t_final": 1.0, "save_every": 0},
        "init": {"kind": "uniform_mass", "mass": 1.0},
        "sbp": {"enabled": False, "eta0": 80.0, "adaptive": True},
        "seed": None,
        "out": "out",
    }


def _saturation(nx: int, t_final: float) -> dict:
    cfg = _base("saturation1d")
    cfg["grid"] = {"dim": 1, "nx": nx, "a": -4.0, "b": 4.0, "substrate": False}
    cfg["energy"].update(potential="entropy", d_coeff=1.0, confinement_c=1.0)
    cfg["mobility"] = {"alpha": 0.0, "beta": 1.0}
    cfg["solver"].update(variant=PREPD3O, lam=0.05, delta=5e-6, max_iters=200000)
    cfg["time"] = {"tau": 0.01, "t_final": t_final, "save_every": 200}
    cfg["init"] = {"kind": "uniform_mass", "mass": 3.32}
    return cfg


def _ch1d_converge(nx: int, t_final: float) -> dict:
    cfg = _base("ch1d-converge")
    cfg["grid"] = {"dim": 1, "nx": nx, "a": 0.0, "b": 1.0, "substrate": False}
    cfg["energy"].update(potential="log", theta=0.0, theta_c=1.0, epsilon=0.1)
    cfg["solver"].update(variant=PREPD3O, lam=1.0, delta=1e-9, max_iters=200000)
    cfg["time"] = {"tau": 0.001, "t_final": t_final, "save_every": 0}
    cfg["init"] = {"kind": "ch_cosine"}
    return cfg


def _ch1d_log(t_final: float) -> dict:
    cfg = _base("ch1d-log")
    cfg["grid"] = {"dim": 1, "nx": 80, "a": 0.0, "b": 1.0, "substrate": False}
    cfg["energy"].update(potential="log", theta=0.3, theta_c=1.0,
                         epsilon=math.sqrt(1e-3))
    cfg["solver"].update(variant=PREPD3O, lam=1.0, delta=1e-7, max_iters=200000)
    cfg["time"] = {"tau": 0.1, "t_final": t_final, "save_every": 10}
    cfg["init"] = {"kind": "piecewise_linear"}
    return cfg


def _ch1d_separation(t_final: float, potential: str = "log") -> dict:
    cfg = _base("ch1d-separation")
    cfg["grid"] = {"dim": 1, "nx": 200, "a": -40.0, "b": 40.0, "substrate": False}
    cfg["energy"].update(potential=potential, theta=0.3, theta_c=1.0, epsilon=1.0)
    cfg["solver"].update(variant=PREPD3O, lam=1.0, delta=1e-6, max_iters=200000)
    cfg["time"] = {"tau": 0.01, "t_final": t_final, "save_every": 100}
    cfg["init"] = {"kind": "uniform_random", "center": 0.0, "halfwidth": 0.5}
    cfg["seed"] = 1
    return cfg


def _ch2d_converge(n: int, t_final: float) -> dict:
    cfg = _base("ch2d-converge")
    cfg["grid"] = {"dim": 2, "nx": n, "ny": n, "a": 0.0, "b": 1.0, "c": 0.0, "d": 1.0,
                   "substrate": False}
    cfg["energy"].update(potential="log", theta=0.0, theta_c=1.0, epsilon=0.1)
    cfg["solver"].update(variant=PREPD3O, lam=1.0, delta=1e-9, max_iters=200000)
    cfg["time"] = {"tau": 0.01, "t_final": t_final, "save_every": 0}
    cfg["init"] = {"kind": "ch_cosine"}
    return cfg


def _ch2d_separation(n: int, t_final: float) -> dict:
    cfg = _base("ch2d-separation")
    cfg["grid"] = {"dim": 2, "nx": n, "ny": n, "a": 0.0, "b": 1.0, "c": 0.0, "d": 1.0,
                   "substrate": False}
    cfg["energy"].update(potential="gl", epsilon=0.018)
    cfg["solver"].update(variant=PREPD3O, lam=50.0, max_iters=200000)
    cfg["time"] = {"tau": 0.001, "t_final": t_final, "save_every": 100}
    cfg["init"] = {"kind": "uniform_random", "center": -0.4, "halfwidth": 0.1}
    cfg["seed"] = 7
    return cfg


def _droplet(preset: str, nx: int, ny: int, bounds, epsilon: float, beta_w: float,
             tau: float, t_final: float, disks) -> dict:
    cfg = _base(preset)
    a, b, c, d = bounds
    cfg["grid"] = {"dim": 2, "nx": nx, "ny": ny, "a": a, "b": b, "c": c, "d": d,
                   "substrate": True}
    cfg["energy"].update(potential="gl", epsilon=epsilon, beta_w=beta_w, wall=True)
    cfg["solver"].update(variant=PREPD3O, lam=20.0, max_iters=200000)
    cfg["time"] = {"tau": tau, "t_final": t_final, "save_every": 20}
    cfg["init"] = {"kind": "droplets", "disks": [list(d_) for d_ in disks]}
    return cfg


def preset_config(name: str) -> dict:
    """A complete config document for a named preset."""
    builders = {
        "saturation1d": lambda: _saturation(200, 15.0),
        "saturation1d-small": lambda: _saturation(200, 0.4),
        "ch1d-converge": lambda: _ch1d_converge(100, 1.0),
        "ch1d-converge-small": lambda: _ch1d_converge(25, 0.05),
        "ch1d-log": lambda: _ch1d_log(30.0),
        "ch1d-log-small": lambda: _ch1d_log(1.0),
        "ch1d-separation": lambda: _ch1d_separation(100.0),
        "ch1d-separation-small": lambda: _ch1d_separation(0.2),
        "ch2d-converge": lambda: _ch2d_converge(80, 1.0),
        "ch2d-converge-small": lambda: _ch2d_converge(20, 0.1),
        "ch2d-separation": lambda: _ch2d_separation(64, 1.0),
        "ch2d-separation-small": lambda: _ch2d_separation(32, 0.01),
        "droplet-angles": lambda: _droplet(
            "droplet-angles", 256, 256, (-0.5, 0.5, 0.0, 1.0), 0.012, math.pi / 4,
            0.01, 0.1, [(0.0, 0.0, 0.25)]),
        "droplet-angles-small": lambda: _droplet(
            "droplet-angles-small", 64, 64, (-0.5, 0.5, 0.0, 1.0), 0.012, math.pi / 4,
            0.01, 0.02, [(0.0, 0.0, 0.25)]),
        "droplet-pair": lambda: _droplet(
            "droplet-pair", 256, 64, (-1.0, 1.0, 0.0, 0.5), 0.005, math.pi / 4,
            0.005, 1.0, [(-0.35, 0.0, 0.3), (0.35, 0.0, 0.3)]),
        "droplet-pair-small": lambda: _droplet(
            "droplet-pair-small", 64, 16, (-1.0, 1.0, 0.0, 0.5), 0.02, math.pi / 4,
            0.005, 0.025, [(-0.35, 0.0, 0.3), (0.35, 0.0, 0.3)]),
        "droplet-sizes": lambda: _droplet(
            "droplet-sizes", 256, 96, (-1.0, 1.0, 0.0, 0.75), 0.02, 3 * math.pi / 4,
            0.1, 10.0, [(-0.4, 0.0, 0.3), (0.45, 0.0, 0.18)]),
        "droplet-sizes-small": lambda: _droplet(
            "droplet-sizes-small", 64, 24, (-1.0, 1.0, 0.0, 0.75), 0.02, 3 * math.pi / 4,
            0.1, 0.4, [(-0.4, 0.0, 0.3), (0.45, 0.0, 0.18)]),
    }
    if name not in builders:
        raise ConfigError(f"unknown preset {name!r}; known: {sorted(builders)}")
    return builders[name]()


def preset_names() -> list[str]:
    return sorted(
        ["saturation1d", "saturation1d-small", "ch1d-converge", "ch1d-converge-small",
         "ch1d-log", "ch1d-log-small", "ch1d-separation", "ch1d-separation-small",
         "ch2d-converge", "ch2d-converge-small", "ch2d-separation",
         "ch2d-separation-small", "droplet-angles", "droplet-angles-small",
         "droplet-pair", "droplet-pair-small", "droplet-sizes", "droplet-sizes-small"]
    )


def merge_overrides(base: dict, *layers: dict) -> dict:
    """Deep-merge override layers (file, then flags) onto a preset document."""
    out = copy.deepcopy(base)
    for layer in layers:
        if not layer:
            continue
        for key, val in layer.items():
            if isinstance(val, dict) and isinstance(out.get(key), dict):
                out[key].update(val)
            else:
                out[key] = val
    return out


def apply_dx(cfg: dict, dx: float) -> dict:
    """Re-resolve cell counts from a target spacing (square cells in 2D)."""
    g = cfg["grid"]
    nx = round((g["b"] - g["a"]) / dx)
    if not math.isclose(nx * dx, g["b"] - g["a"], rel_tol=1e-9):
        raise ConfigError(f"dx={dx} does not evenly divide the domain")
    g["nx"] = int(nx)
    if g["dim"] == 2:
        ny = round((g["d"] - g["c"]) / dx)
        if not math.isclose(ny * dx, g["d"] - g["c"], rel_tol=1e-9):
            raise ConfigError(f"dx={dx} does not evenly divide the domain in y")
        g["ny"] = int(ny)
    return cfg
