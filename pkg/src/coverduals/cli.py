"""Experiment runner: single runs, parameter sweeps, feasibility studies.

Experiments are described by a flat key=value spec file; results are CSV
files (one per run plus a sweep summary) so plotting stays external.  Runs
are deterministic in (spec, seed) and unaffected by the thread count.

Exit codes: 0 success, 2 bad spec, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import os
import sys
from dataclasses import dataclass, field as dc_field, fields as dc_fields
from pathlib import Path

import numpy as np

from . import lpac
from .controllers import (CentralizedCVT, ClairvoyantCVT, DecentralizedCVT,
                          Policy)
from .duality import DualState, RunResult, run_primal_dual
from .world import World, WorldConfig

log = logging.getLogger("coverduals")

CONTROLLERS = {
    "clairvoyant": ClairvoyantCVT,
    "centralized": CentralizedCVT,
    "decentralized": DecentralizedCVT,
}

ALPHA_STD = 0.1  # spread of the constraint thresholds around mu


@dataclass
class ExperimentSpec:
    """Parsed experiment description.

    Sweep axes default to a single cell taken from the base world config;
    every listed axis value produces one sweep cell (cartesian product).
    """

    mode: str = "fair"
    controller: str = "clairvoyant"
    repetitions: int = 1
    seed: int = 0
    weights: str = ""
    world: WorldConfig = dc_field(default_factory=WorldConfig)
    robot_counts: list[int] = dc_field(default_factory=list)
    idf_counts: list[int] = dc_field(default_factory=list)
    env_sizes: list[float] = dc_field(default_factory=list)
    comm_radii: list[float] = dc_field(default_factory=list)
    sensor_sizes: list[int] = dc_field(default_factory=list)
    mu_levels: list[float] = dc_field(default_factory=list)

    _LISTS = {
        "robot_counts": int, "idf_counts": int, "sensor_sizes": int,
        "env_sizes": float, "comm_radii": float, "mu_levels": float,
    }

    @classmethod
    def from_file(cls, path) -> "ExperimentSpec":
        world_keys = {f.name for f in dc_fields(WorldConfig)}
        spec = cls()
        world_kwargs = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value")
                key, val = (s.strip() for s in line.split("=", 1))
                if key in cls._LISTS:
                    conv = cls._LISTS[key]
                    setattr(spec, key, [conv(p) for p in val.split(",") if p])
                elif key == "mode":
                    spec.mode = val
                elif key == "controller":
                    spec.controller = val
                elif key == "repetitions":
                    spec.repetitions = int(val)
                elif key == "seed":
                    spec.seed = int(val)
                elif key == "weights":
                    spec.weights = val
                elif key in WorldConfig._SCALARS and key in world_keys:
                    world_kwargs[key] = WorldConfig._SCALARS[key](val)
                elif key in WorldConfig._PAIRS:
                    parts = [float(p) for p in val.split(",")]
                    world_kwargs[key] = (parts[0], parts[1])
                else:
                    raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        spec.world = WorldConfig(**world_kwargs)
        spec.validate()
        return spec

    def validate(self) -> None:
        if self.mode not in ("fair", "constrained"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.controller not in set(CONTROLLERS) | {"lpac"}:
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.controller == "lpac" and not self.weights:
            raise ValueError("lpac controller requires a weights path")
        if self.mode == "constrained" and not self.mu_levels:
            raise ValueError("constrained mode requires mu_levels")
        for name in self._LISTS:
            axis = getattr(self, name)
            if axis is not None and axis == [] and name == "mu_levels" \
                    and self.mode == "constrained":
                raise ValueError("mu_levels must be nonempty")

    def cells(self) -> list[dict]:
        """Cartesian product of the sweep axes (base config fills gaps)."""
        w = self.world
        axes = {
            "num_robots": self.robot_counts or [w.num_robots],
            "num_idfs": self.idf_counts or [w.num_idfs],
            "env_size": self.env_sizes or [w.env_size],
            "comm_radius": self.comm_radii or [w.comm_radius],
            "sensor_size": self.sensor_sizes or [w.sensor_size],
            "mu": self.mu_levels or [float("nan")],
        }
        keys = list(axes)
        return [dict(zip(keys, combo))
                for combo in itertools.product(*(axes[k] for k in keys))]


def make_policy(spec: ExperimentSpec) -> Policy:
    if spec.controller == "lpac":
        return lpac.LpacPolicy(lpac.WeightBundle.load(spec.weights))
    return CONTROLLERS[spec.controller]()


def _fmt(x: float) -> str:
    return repr(float(x))


def write_run_csv(path: Path, result: RunResult, dual_period: int,
                  dt: float, controller: str, seed: int) -> None:
    m = result.costs.shape[1]
    header = (["step", "time_s"] + [f"J_{i}" for i in range(m)]
              + ["max_J"] + [f"lambda_{i}" for i in range(m)]
              + ["controller", "seed"])
    lines = [",".join(header)]
    for step in range(result.costs.shape[0]):
        lam = result.lambdas[step // dual_period]  # weights in effect
        row = ([str(step), _fmt((step + 1) * dt)]
               + [_fmt(v) for v in result.costs[step]]
               + [_fmt(result.costs[step].max())]
               + [_fmt(v) for v in lam]
               + [controller, str(seed)])
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def feasibility_report(final_means: np.ndarray, alphas: np.ndarray
                       ) -> tuple[float, float]:
    """Percentages of infeasible constraints and problems.

    A constraint is infeasible when its final-window mean cost exceeds its
    threshold; a problem is infeasible when any of its constraints is.
    """
    final_means = np.atleast_2d(final_means)
    alphas = np.atleast_2d(alphas)
    if final_means.shape != alphas.shape:
        raise ValueError("final means and thresholds must align")
    violated = final_means > alphas
    return (100.0 * violated.mean(), 100.0 * violated.any(axis=1).mean())


def run(spec: ExperimentSpec, out_dir: Path) -> list[Path]:
    """Execute every sweep cell x repetition; returns the files written.

    Seeds: repetition r of cell c uses seed = base + 1000 * c + r.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    summary_lines = [
        "cell,num_robots,num_idfs,env_size,comm_radius,sensor_size,mu,"
        "repetitions,mean_final_max_cost,std_final_max_cost,"
        "pct_infeasible_constraints,pct_infeasible_problems"]
    for c_idx, cell in enumerate(spec.cells()):
        finals = []
        final_means = []
        alphas_used = []
        for rep in range(spec.repetitions):
            seed = spec.seed + 1000 * c_idx + rep
            config = WorldConfig(
                env_size=cell["env_size"],
                resolution=spec.world.resolution,
                num_robots=cell["num_robots"],
                num_idfs=cell["num_idfs"],
                comm_radius=cell["comm_radius"],
                sensor_size=cell["sensor_size"],
                max_speed=spec.world.max_speed,
                dt=spec.world.dt,
                num_steps=spec.world.num_steps,
                dual_period=spec.world.dual_period,
                dual_step=spec.world.dual_step,
                seed=seed,
                gaussians_per_idf=spec.world.gaussians_per_idf,
                variance_range=spec.world.variance_range,
                scale_range=spec.world.scale_range,
            )
            config.validate()
            world = World.from_config(config)
            if spec.mode == "fair":
                dual = DualState.fair(config.num_idfs, eta=config.dual_step,
                                      period=config.dual_period)
            else:
                alpha = world.rng.normal(cell["mu"], ALPHA_STD,
                                         size=config.num_idfs)
                dual = DualState.constrained(alpha, eta=config.dual_step,
                                             period=config.dual_period)
                alphas_used.append(alpha)
            policy = make_policy(spec)
            log.info("cell %d rep %d seed %d: running %s/%s",
                     c_idx, rep, seed, spec.mode, spec.controller)
            result = run_primal_dual(policy, world, dual)
            path = out_dir / f"run_c{c_idx:03d}_r{rep:03d}.csv"
            write_run_csv(path, result, config.dual_period, config.dt,
                          spec.controller, seed)
            written.append(path)
            finals.append(result.max_costs[-1])
            final_means.append(result.final_window_mean(config.dual_period))
        finals = np.array(finals)
        if spec.mode == "constrained":
            pct_c, pct_p = feasibility_report(np.array(final_means),
                                              np.array(alphas_used))
            pct_c_s, pct_p_s = _fmt(pct_c), _fmt(pct_p)
        else:
            pct_c_s = pct_p_s = ""
        summary_lines.append(",".join([
            str(c_idx), str(cell["num_robots"]), str(cell["num_idfs"]),
            _fmt(cell["env_size"]), _fmt(cell["comm_radius"]),
            str(cell["sensor_size"]),
            "" if np.isnan(cell["mu"]) else _fmt(cell["mu"]),
            str(spec.repetitions), _fmt(finals.mean()),
            _fmt(finals.std()), pct_c_s, pct_p_s]))
    summary = out_dir / "summary.csv"
    summary.write_text("\n".join(summary_lines) + "\n", encoding="ascii")
    written.append(summary)
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="coverduals",
        description="Run multi-objective coverage experiments to CSV.")
    parser.add_argument("--spec", required=True, help="experiment spec file")
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument("--controller", default=None,
                        help="override the spec's controller")
    parser.add_argument("--mode", default=None,
                        help="override the spec's mode (fair|constrained)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the spec's base seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker thread count (never affects outputs)")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=os.environ.get("COVERDUALS_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s")

    if args.threads is not None and args.threads > 0:
        import numba
        numba.set_num_threads(args.threads)

    try:
        spec = ExperimentSpec.from_file(args.spec)
        if args.controller is not None:
            spec.controller = args.controller
        if args.mode is not None:
            spec.mode = args.mode
        if args.seed is not None:
            spec.seed = args.seed
        spec.validate()
    except (OSError, ValueError) as exc:
        print(f"error: bad spec: {exc}", file=sys.stderr)
        return 2

    try:
        files = run(spec, Path(args.out))
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {len(files)} files to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
