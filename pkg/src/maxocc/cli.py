"""Command-line entry point: ``maxocc {solve,simulate,sweep,verify}``.

Exit codes: 0 success, 1 usage or configuration error, 2 solver did not
converge, 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import experiments as ex
from .envs.base import config_from_dict
from .envs.cartpole import CartpoleModel
from .mdp import MdpError, mdp_from_json
from .sim import MetricsReport, cell_grid, metrics_csv, write_pgm
from .solver import MaxIterationsExceeded, SolverConfig, read_hval, value_from_json, value_to_json, write_hval

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_VERIFY = 0, 1, 2, 3
SWEEP_CSV_METRICS = ("survival", "visit_fraction", "cw", "ccw", "fence_open_fraction", "mean_return")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    env: str
    agent: str = "h"
    env_config: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    epsilon: float = 0.0
    episodes: int = 50
    steps: int = 1000
    seed: int = 0
    mdp_path: str | None = None
    start: int = 0
    value_path: str | None = None
    out_dir: str = "out"
    heatmaps: bool = False
    sweep: dict | None = None
    base_dir: Path = field(default=Path("."), repr=False)

    def __post_init__(self):
        if self.env not in ex.ENV_NAMES:
            raise ConfigError(f"env must be one of {', '.join(ex.ENV_NAMES)}")
        if self.agent not in ex.AGENTS:
            raise ConfigError(f"agent must be one of {', '.join(ex.AGENTS)}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must lie in [0, 1]")
        if self.episodes < 1 or self.steps < 1:
            raise ConfigError("episodes and steps must be positive")
        unknown = sorted(set(self.solver) - {"tolerance", "max_iterations"})
        if unknown:
            raise ConfigError(f"unknown solver field(s): {', '.join(unknown)}")
        if self.env == "custom_mdp" and not self.mdp_path:
            raise ConfigError("custom_mdp needs mdp_path")
        if self.env == "cartpole" and self.agent == "kl":
            raise ConfigError("the kl agent is not available on the cartpole")

    def path(self, p: str | None) -> Path | None:
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def solver_config(self) -> SolverConfig:
        try:
            return SolverConfig(**self.solver)
        except (TypeError, ValueError) as err:
            raise ConfigError(str(err)) from err

    def env_settings(self):
        cls = ex.CONFIG_TYPES.get(self.env)
        if cls is None:
            if self.env_config:
                raise ConfigError("custom_mdp takes no env_config")
            return None
        try:
            return config_from_dict(cls, self.env_config)
        except (TypeError, ValueError) as err:
            raise ConfigError(str(err)) from err


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as err:
        raise ConfigError(f"config file not found: {path}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    names = {f.name for f in fields(RunConfig)} - {"base_dir"}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
    if "env" not in doc:
        raise ConfigError("config needs an 'env' field")
    try:
        return RunConfig(**doc, base_dir=path.parent)
    except TypeError as err:
        raise ConfigError(str(err)) from err


# --- helpers ------------------------------------------------------------------

def _build(cfg: RunConfig, env_config=None):
    if cfg.env == "custom_mdp":
        mdp_file = cfg.path(cfg.mdp_path)
        if not mdp_file.exists():
            raise ConfigError(f"mdp file not found: {mdp_file}")
        try:
            mdp = mdp_from_json(mdp_file.read_text())
        except (ValueError, KeyError, MdpError) as err:
            raise ConfigError(f"bad mdp file: {err}") from err
        return ex.custom_env(mdp, cfg.start)
    try:
        return ex.build_env(cfg.env, env_config if env_config is not None else cfg.env_settings())
    except MdpError as err:
        raise ConfigError(f"environment failed validation: {err}") from err


def _out_dir(cfg: RunConfig, override: str | None) -> Path:
    out = Path(override) if override else cfg.path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _solve(cfg: RunConfig, env):
    return ex.solve_agent(env, cfg.agent, cfg.solver_config(), epsilon=cfg.epsilon)


def _write_value(out: Path, sol, env, fmt: str) -> Path:
    mdp = env.mdp
    if fmt == "hval":
        target = out / "value.hval"
        write_hval(target, sol.value)
    else:
        extra = {"agent": sol.agent}
        if sol.agent == "r":
            extra["epsilon"] = sol.epsilon
        target = out / "value.json"
        target.write_text(value_to_json(sol.value, mdp.gamma, mdp.alpha, mdp.beta, **extra))
    return target


def _read_value(path: Path) -> np.ndarray:
    if path.suffix == ".hval":
        return read_hval(path)
    return value_from_json(path.read_text())[0]


def _find_value(cfg: RunConfig, out: Path) -> Path:
    if cfg.value_path:
        p = cfg.path(cfg.value_path)
        if not p.exists():
            raise ConfigError(f"value file not found: {p}")
        return p
    for name in ("value.json", "value.hval"):
        if (out / name).exists():
            return out / name
    raise ConfigError(f"no value file; run 'solve' first or set value_path (looked in {out})")


def _simulate(cfg: RunConfig, env, value, threads: int, seed: int) -> MetricsReport:
    if isinstance(env, CartpoleModel):
        return ex.simulate_cartpole(env, cfg.agent, value, cfg.episodes, cfg.steps, seed, cfg.epsilon, threads)
    policy = ex.policy_from_value(env, cfg.agent, value, cfg.epsilon)
    return ex.simulate_tabular(env, policy, cfg.episodes, cfg.steps, seed, threads)


def _figures(out: Path, env, report: MetricsReport, fmt: str, heatmaps: bool) -> list[Path]:
    from . import plotting

    written = []
    if isinstance(env, CartpoleModel):
        written.append(plotting.plot_angle_histogram(report.extra["theta_counts"], report.extra["theta_bins"], out / "theta_histogram.png", "pole angle occupancy"))
    else:
        grid = cell_grid(report.occupancy, env.cell_rc, env.grid_shape)
        written.append(plotting.plot_heatmap(grid, out / "occupancy.png", "agent location occupancy"))
        if fmt == "pgm" or heatmaps:
            write_pgm(out / "occupancy.pgm", grid)
            written.append(out / "occupancy.pgm")
        if "pet_occupancy" in report.extra:
            pet = cell_grid(report.extra["pet_occupancy"], env.cell_rc, env.grid_shape)
            written.append(plotting.plot_heatmap(pet, out / "pet_occupancy.png", "pet location occupancy"))
            if fmt == "pgm" or heatmaps:
                write_pgm(out / "pet_occupancy.pgm", pet)
    written.append(plotting.plot_episode_metric(report.column("survival"), out / "survival.png", "survival (steps)"))
    return written


def _threads(n: int) -> int:
    if n == 0:
        return os.cpu_count() or 1
    return max(1, n)


# --- commands -----------------------------------------------------------------

def cmd_solve(args) -> int:
    cfg = load_run_config(args.config)
    out = _out_dir(cfg, args.out)
    env = _build(cfg)
    t0 = time.perf_counter()
    try:
        sol = _solve(cfg, env)
    except MaxIterationsExceeded as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NONCONVERGED
    wall = time.perf_counter() - t0
    fmt = args.format if args.format in ("json", "hval") else "json"
    target = _write_value(out, sol, env, fmt)
    start = env.start if hasattr(env, "start") else env.config.n_grid_states // 2
    report = {
        "env": cfg.env,
        "agent": cfg.agent,
        "n_states": int(env.mdp.n_states),
        "iterations": int(sol.iterations),
        "final_delta": float(sol.meta.get("final_delta", float("nan"))),
        "residual": float(sol.residual),
        "start_value": float(sol.value[start]),
    }
    (out / "solve_report.json").write_text(json.dumps(report, indent=2) + "\n")
    print(f"solved {cfg.env}/{cfg.agent}: {report['n_states']} states, {report['iterations']} sweeps, "
          f"residual {report['residual']:.3g}, V(start) = {report['start_value']:.6f}, wall {wall:.2f} s -> {target}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_run_config(args.config)
    out = _out_dir(cfg, args.out)
    seed = cfg.seed if args.seed is None else args.seed
    env = _build(cfg)
    if cfg.agent == "random":
        value = np.zeros(env.mdp.n_states)
    else:
        value = _read_value(_find_value(cfg, out))
        if len(value) != env.mdp.n_states:
            raise ConfigError(f"value file has {len(value)} entries, environment has {env.mdp.n_states} states")
    report = _simulate(cfg, env, value, _threads(args.threads), seed)
    (out / "metrics.csv").write_text(metrics_csv(report))
    if not args.no_figures:
        _figures(out, env, report, args.format, cfg.heatmaps)
    surv = report.mean_sem("survival")
    print(f"simulated {len(report.episodes)} episodes x {cfg.steps} steps; survival {surv[0]:.1f} +- {surv[1]:.1f} -> {out / 'metrics.csv'}")
    return EXIT_OK


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as err:
        raise ConfigError(f"bad --values list: {text!r}") from err


def cmd_sweep(args) -> int:
    cfg = load_run_config(args.config)
    out = _out_dir(cfg, args.out)
    seed = cfg.seed if args.seed is None else args.seed
    spec = dict(cfg.sweep or {})
    unknown = sorted(set(spec) - {"parameter", "values"})
    if unknown:
        raise ConfigError(f"unknown sweep field(s): {', '.join(unknown)}")
    parameter = args.param or spec.get("parameter")
    values = _parse_values(args.values) if args.values else spec.get("values")
    if parameter not in ex.SWEEP_PARAMETERS:
        raise ConfigError(f"sweep parameter must be one of {', '.join(ex.SWEEP_PARAMETERS)}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    base = cfg.env_settings()
    lines = ["parameter,value,episodes," + ",".join(f"{m}_mean,{m}_sem" for m in SWEEP_CSV_METRICS) + ",clockwise_fraction"]
    means, sems = [], []
    primary = {"beta": "fence_open_fraction", "kappa": "cw", "F": "cw", "food_gain": "visit_fraction"}.get(parameter, "survival")
    for v in values:
        try:
            env_cfg = ex.with_parameter(cfg.env, base, parameter, v)
        except ValueError as err:
            raise ConfigError(str(err)) from err
        run = RunConfig(**{**{f.name: getattr(cfg, f.name) for f in fields(RunConfig)}, "epsilon": float(v) if parameter == "epsilon" else cfg.epsilon})
        env = _build(run, env_cfg)
        try:
            sol = _solve(run, env)
        except MaxIterationsExceeded as err:
            print(f"error: {parameter}={v}: {err}", file=sys.stderr)
            return EXIT_NONCONVERGED
        report = _simulate(run, env, sol.value, _threads(args.threads), seed)
        cells = []
        for m in SWEEP_CSV_METRICS:
            mu, se = report.mean_sem(m)
            cells += [repr(mu), repr(se)]
        lines.append(f"{parameter},{v!r},{len(report.episodes)}," + ",".join(cells) + f",{report.clockwise_fraction!r}")
        mu, se = report.mean_sem(primary)
        means.append(mu)
        sems.append(se)
        print(f"{parameter}={v}: {primary} {mu:.4f} +- {se:.4f}")
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    if not args.no_figures:
        from . import plotting

        plotting.plot_sweep(values, means, sems, out / "sweep.png", parameter, primary)
    return EXIT_OK


def cmd_verify(args) -> int:
    from . import verify

    results = verify.run_all(args.seed if args.seed is not None else 0)
    print(verify.format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxocc", description="Entropy-seeking agents on finite decision processes.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="run configuration (JSON)")
        p.add_argument("--out", help="output directory (default: the config's out_dir)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads, 0 = all cores; never changes results")
        p.add_argument("--format", choices=("json", "hval", "csv", "pgm"), default="json")

    p = sub.add_parser("solve", help="solve the configured agent and write its value function")
    common(p)
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("simulate", help="run seeded episodes from a solved value function")
    common(p)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("sweep", help="solve and simulate for each value of one parameter")
    common(p)
    p.add_argument("--param", help="food_gain, beta, epsilon, kappa or F")
    p.add_argument("--values", help="comma-separated values")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("verify", help="run the built-in correctness checks")
    common(p, config=False)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_OK if err.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
