"""Command-line driver: presets, convergence studies, prox oracle checks.

    mobflow run <preset> [--config FILE] [--out DIR] [--seed N] [--dx DX]
                [--variant pd3o|prepd3o] [--sbp] [--beta-w B] [--potential P]
                [--tmax T]
    mobflow converge <preset> --dx-list 0.04,0.02,0.01 [--out DIR]
    mobflow proxcheck --count N --seed N

Outputs are plain CSV with a one-line ``#`` header carrying the resolved
config.  Exit codes: 0 success, 1 validation error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import presets, stepper
from .grid import SolverError
from .optimizer import SbpConfig
from .presets import ConfigError, ExperimentConfig
from .transport import Mobility, prox_action, reduced_objective


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def _config_header(cfg: dict) -> str:
    return "# config: " + json.dumps(cfg, sort_keys=True, default=str)


def write_diagnostics(path: Path, cfg: dict, traj: stepper.Trajectory) -> None:
    lines = [_config_header(cfg), ",".join(stepper.DIAG_COLUMNS)]
    for row in traj.diagnostics:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_snapshot(path: Path, cfg: dict, snap) -> None:
    grid = snap.grid
    lines = [_config_header(cfg)]
    if grid.dim == 1:
        lines.append("x,rho")
        for x, r in zip(grid.xcenters(), snap.values):
            lines.append(f"{_fmt(x)},{_fmt(r)}")
    else:
        lines.append("x,y,rho")
        xs, ys = grid.xcenters(), grid.ycenters()
        vals = snap.values
        for i in range(grid.nx):
            for j in range(grid.ny):
                lines.append(f"{_fmt(xs[i])},{_fmt(ys[j])},{_fmt(vals[i, j])}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_diagnostics(path: Path) -> np.ndarray:
    rows = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#") or line.startswith("step,"):
            continue
        rows.append([float(v) for v in line.split(",")])
    return np.asarray(rows)


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> int:
    """Run one configured experiment and emit diagnostics + snapshots."""
    out = Path(out_dir if out_dir is not None else cfg.raw.get("out", "out"))
    out.mkdir(parents=True, exist_ok=True)

    grid = presets.build_grid(cfg)
    energy = presets.build_energy(cfg, grid)
    mob = presets.build_mobility(cfg)
    params = presets.build_solver_params(cfg)
    rho0 = presets.build_initial(cfg, grid, energy)
    t = cfg.section("time")

    sbp = params.sbp
    try:
        traj = stepper.run(
            rho0, float(t["t_final"]), float(t["tau"]), energy, mob, params,
            save_every=int(t.get("save_every", 0)), sbp=sbp,
        )
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2

    write_diagnostics(out / "diagnostics.csv", cfg.raw, traj)
    for step, snap in zip(traj.snapshot_steps, traj.snapshots):
        write_snapshot(out / f"snap_{step}.csv", cfg.raw, snap)
    if traj.failed:
        print("inner solver hit its iteration cap; partial outputs kept",
              file=sys.stderr)
        return 2
    return 0


@dataclass
class ConvergenceReport:
    """Weighted-l2 errors against the analytic steady state per spacing."""

    dx: list
    errors: list
    orders: list  # log2(e_i / e_{i+1}), one fewer than errors


def steady_state_error(snap, energy) -> float:
    """||rho - rho_inf||_2 = sqrt(sum |rho - rho_inf(x_i)|^2 * cell volume)."""
    grid = snap.grid
    ref = stepper.ch_steady(grid.xcenters(), energy.epsilon)
    if grid.dim == 2:
        ref = np.repeat(ref[:, None], grid.ny, axis=1)
    diff = snap.values - ref
    return float(np.sqrt(np.sum(diff**2) * grid.cell_volume))


def run_convergence(base_cfg: dict, dx_list, out_dir: str | Path | None = None) -> ConvergenceReport:
    """Run a steady-state preset over a spacing list and report observed orders."""
    if base_cfg["preset"].split("-small")[0] not in ("ch1d-converge", "ch2d-converge"):
        raise ConfigError("convergence study requires a preset with an analytic steady state")
    errors = []
    for dx in dx_list:
        cfg_doc = presets.apply_dx(presets.merge_overrides(base_cfg), float(dx))
        cfg = presets.validate(cfg_doc)
        grid = presets.build_grid(cfg)
        energy = presets.build_energy(cfg, grid)
        mob = presets.build_mobility(cfg)
        params = presets.build_solver_params(cfg)
        rho0 = presets.build_initial(cfg, grid, energy)
        t = cfg.section("time")
        traj = stepper.run(rho0, float(t["t_final"]), float(t["tau"]), energy, mob,
                           params, save_every=0)
        if traj.failed:
            raise SolverError(f"inner solver failed at dx={dx}")
        errors.append(steady_state_error(traj.final, energy))
    orders = [math.log2(errors[i] / errors[i + 1]) for i in range(len(errors) - 1)]
    report = ConvergenceReport([float(d) for d in dx_list], errors, orders)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = [_config_header(base_cfg), "dx,l2_error,order"]
        for i, (dx, err) in enumerate(zip(report.dx, report.errors)):
            order = "" if i == 0 else _fmt(report.orders[i - 1])
            lines.append(f"{_fmt(dx)},{_fmt(err)},{order}")
        (out / "convergence.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return report


# -- prox oracle ----------------------------------------------------------------


def prox_grid_oracle(rho: float, msq: float, lam: float, mob: Mobility,
                     step: float = 1e-5):
    """Brute-force minimizer of the reduced prox objective on a uniform grid."""
    g = np.arange(mob.alpha, mob.beta + step, step)
    g = np.clip(g, mob.alpha, mob.beta)
    f = reduced_objective(g, rho, msq, lam, mob)
    i = int(np.argmin(f))
    return float(g[i]), float(f[i])


def sample_prox_instance(rng: np.random.Generator, target_case: int):
    """One random prox instance engineered to land in a given case."""
    alpha = rng.uniform(-1.5, 0.5)
    beta = alpha + rng.uniform(0.5, 2.5)
    lam = 10.0 ** rng.uniform(-3, 2)
    mnorm = 10.0 ** rng.uniform(-1.3, 0.5)
    msq = mnorm**2
    mid = 0.5 * (alpha + beta)
    thr = (beta - alpha) * msq / (2.0 * lam)
    if target_case == 1:
        rho = rng.uniform(alpha, mid - 1e-9)
    elif target_case == 2:
        rho = rng.uniform(mid + 1e-9, beta)
    elif target_case == 3:
        rho = mid
    elif target_case == 4:
        rho = rng.uniform(alpha - thr, alpha)
    elif target_case == 5:
        rho = rng.uniform(beta, beta + thr)
    elif target_case == 6:
        rho = alpha - thr - rng.uniform(0.0, 1.0)
    else:
        rho = beta + thr + rng.uniform(0.0, 1.0)
    return float(rho), msq, lam, Mobility(alpha, beta)


def run_proxcheck(count: int, seed: int, tol: float = 2e-5) -> int:
    """Compare the Newton prox against the grid oracle on random instances."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_gap = 0.0
    for i in range(count):
        rho, msq, lam, mob = sample_prox_instance(rng, i % 7 + 1)
        res = prox_action(rho, [math.sqrt(msq)], lam, mob)
        r_oracle, f_oracle = prox_grid_oracle(rho, msq, lam, mob)
        f_newton = float(reduced_objective(res.rho_star, rho, msq, lam, mob))
        worst = max(worst, abs(res.rho_star - r_oracle))
        worst_gap = max(worst_gap, f_newton - f_oracle)
    print(f"proxcheck: {count} instances, max |rho*-oracle| = {worst:.3e}, "
          f"max objective gap = {worst_gap:.3e}")
    return 0 if (worst <= tol and worst_gap <= 1e-10) else 1


# -- argument parsing -------------------------------------------------------------


def _flag_overrides(args) -> dict:
    over: dict = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out is not None:
        over["out"] = args.out
    if args.variant is not None:
        over.setdefault("solver", {})["variant"] = args.variant
    if args.sbp:
        over["sbp"] = {"enabled": True}
    if args.beta_w is not None:
        over.setdefault("energy", {})["beta_w"] = args.beta_w
    if args.potential is not None:
        over.setdefault("energy", {})["potential"] = args.potential
    if args.tmax is not None:
        over.setdefault("time", {})["t_final"] = args.tmax
    if args.tol is not None:
        over.setdefault("solver", {})["tol"] = args.tol
    return over


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mobflow", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment preset")
    run_p.add_argument("preset", help=f"one of {', '.join(presets.preset_names())}")
    run_p.add_argument("--config", help="YAML config overriding preset keys")
    run_p.add_argument("--out", help="output directory")
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--dx", type=float, help="target cell spacing")
    run_p.add_argument("--variant", choices=["pd3o", "prepd3o"])
    run_p.add_argument("--sbp", action="store_true", help="regularized constraint")
    run_p.add_argument("--beta-w", dest="beta_w", type=float, help="contact angle")
    run_p.add_argument("--potential", choices=["gl", "log", "entropy"])
    run_p.add_argument("--tmax", type=float, help="final time override")
    run_p.add_argument("--tol", type=float, help="monitor tolerance override")

    conv_p = sub.add_parser("converge", help="spatial convergence study")
    conv_p.add_argument("preset")
    conv_p.add_argument("--dx-list", required=True,
                        help="comma-separated spacings, e.g. 0.04,0.02,0.01")
    conv_p.add_argument("--out", default="out")

    prox_p = sub.add_parser("proxcheck", help="prox vs brute-force oracle")
    prox_p.add_argument("--count", type=int, default=500)
    prox_p.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            base = presets.preset_config(args.preset)
            file_over = {}
            if args.config:
                file_over = yaml.safe_load(Path(args.config).read_text(encoding="utf-8")) or {}
            doc = presets.merge_overrides(base, file_over, _flag_overrides(args))
            if args.dx is not None:
                presets.apply_dx(doc, args.dx)
            cfg = presets.validate(doc)
            return run_experiment(cfg)
        if args.command == "converge":
            base = presets.preset_config(args.preset)
            dx_list = [float(s) for s in args.dx_list.split(",") if s]
            if not dx_list:
                raise ConfigError("--dx-list must name at least one spacing")
            report = run_convergence(base, dx_list, args.out)
            for i, (dx, err) in enumerate(zip(report.dx, report.errors)):
                order = "" if i == 0 else f"  order {report.orders[i-1]:.3f}"
                print(f"dx {dx:g}: l2 error {err:.6e}{order}")
            return 0
        if args.command == "proxcheck":
            return run_proxcheck(args.count, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
