"""Command-line front end.

Exit codes: 0 success, 2 validation error, 3 numerical failure
(non-convergence or singularity), 4 pattern-assertion failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from .config import FORMATS, RunConfig, load_config
from .core import ParameterError, SingularityError, decision_components
from .emit import csv_text, effectiveness_svg, policy_map_svg, write_csv, write_manifest
from .experiments import (
    PATTERN_KIND,
    ExperimentConfig,
    PolicyMapResult,
    figure_checks,
    pattern_verdict,
    reproduce_effectiveness_curves,
    reproduce_policy_maps,
    run_sensitivity,
    underconfident_comparison,
)
from .oracle import AbsorptionError, ConvergenceError, absorption_probabilities
from .planner import build_app_mdp, extract_windows, plan
from .simulator import batch_stats, episode_seeds, rollout, write_trajectory

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_PATTERN = 0, 2, 3, 4


class PatternFailure(Exception):
    pass


class _Run:
    """Collects a command's tables and results, then writes or prints them."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command = command
        self.cfg = cfg
        self.tables: list[tuple[str, list]] = []
        self.svgs: dict[str, str] = {}
        self.results: dict = {}
        self.extra_outputs: list[str] = []

    def finish(self) -> None:
        cfg = self.cfg
        if cfg.out is None:
            # one format on stdout: CSV tables unless JSON alone was asked for
            if "csv" in cfg.formats or "json" not in cfg.formats:
                for table, rows in self.tables:
                    sys.stdout.write(csv_text(table, rows))
            else:
                sys.stdout.write(json.dumps(self.results, indent=2, sort_keys=True) + "\n")
            return
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        written = list(self.extra_outputs)
        if "csv" in cfg.formats:
            written += [write_csv(out, table, rows).name for table, rows in self.tables]
        if "json" in cfg.formats:
            path = out / "results.json"
            path.write_text(json.dumps(self.results, indent=2, sort_keys=True) + "\n")
            written.append(path.name)
        if "svg" in cfg.formats:
            for name, text in self.svgs.items():
                (out / name).write_text(text)
                written.append(name)
        write_manifest(out, self.command, cfg.to_dict(), written, self.results, __version__)


def _label(cfg: RunConfig) -> str:
    return cfg.preset or "custom"


def cmd_solve_user(cfg: RunConfig) -> _Run:
    run = _Run("solve-user", cfg)
    theta, world = cfg.theta(), cfg.world
    rows = []
    for w in range(world.n_states - 1, 0, -1):
        delta = world.n_states - w
        c = decision_components(theta, world.d_world, delta)
        rows.append(
            {
                "delta": delta,
                "w": w,
                "v_stay": c.disengage_term,
                "v_right": c.act_value,
                "v_star": max(c.disengage_term, c.act_value),
                "policy": int(c.act_value > c.disengage_term),
            }
        )
    run.tables.append(("solve_user", rows))
    run.results = {"rows": rows}
    return run


def _single_policy(cfg: RunConfig):
    theta = cfg.theta()
    profile = cfg.make_profile(theta)
    pol = plan(theta, cfg.world, profile, cfg.gamma_app)
    return theta, profile, pol


def _windows_json(decomp) -> list:
    return [
        {
            "first_w": r.first_w,
            "last_w": r.last_w,
            "label": r.label.value,
            "bounded": sorted(k.value for k in r.bounded),
            "signature": sorted(k.value for k in r.signature),
        }
        for r in decomp.runs
    ]


def cmd_plan(cfg: RunConfig) -> _Run:
    run = _Run("plan", cfg)
    theta, profile, pol = _single_policy(cfg)
    decomp = extract_windows(pol)
    name = _label(cfg)
    exp = ExperimentConfig(world=cfg.world, presets=())
    result = PolicyMapResult(exp, {name: pol}, {name: decomp}, {})
    run.tables.append(("policy_map", result.rows()))
    run.svgs["policy_map.svg"] = policy_map_svg(result.rows())
    run.results = {"preset": cfg.preset, "windows": _windows_json(decomp)}
    if cfg.preset in PATTERN_KIND:
        v = pattern_verdict(decomp, PATTERN_KIND[cfg.preset])
        window2 = sorted({k.value for r in decomp.runs for k in r.bounded})
        run.results.update(verdict=v.status, problems=list(v.problems), window2=window2)
        if v.status == "fail":
            raise PatternFailure(run, f"{name}: " + "; ".join(v.problems))
    return run


def cmd_min_effect(cfg: RunConfig) -> _Run:
    run = _Run("min-effect", cfg)
    theta = cfg.theta()
    name = _label(cfg)
    base = cfg.experiment()
    # route the resolved user through a one-preset experiment
    exp = ExperimentConfig(
        world=base.world,
        base_user=theta,
        gamma_app=base.gamma_app,
        d_floor=base.d_floor,
        epsilon_B=base.epsilon_B,
        resolution=base.resolution,
        presets=("default",),
    )
    curves = reproduce_effectiveness_curves(exp)
    rows = [dict(r, preset=name) for r in curves.rows()]
    run.tables.append(("effectiveness", rows))
    run.svgs["effectiveness.svg"] = effectiveness_svg(rows, name)
    run.results = {"rows": rows}
    return run


def cmd_simulate(cfg: RunConfig, trajectories: int = 0) -> _Run:
    run = _Run("simulate", cfg)
    theta, profile, pol = _single_policy(cfg)
    seeds = episode_seeds(cfg.seed, cfg.episodes)
    stats = batch_stats(theta, cfg.world, pol, profile, seeds, cfg.horizon, cfg.start_w)
    row = {
        "episodes": stats.n,
        "start_w": cfg.start_w,
        "horizon": cfg.horizon,
        "goal_rate": stats.goal_rate,
        "goal_ci_low": stats.goal_ci[0],
        "goal_ci_high": stats.goal_ci[1],
        "disengage_rate": stats.disengage_rate,
        "disengage_ci_low": stats.disengage_ci[0],
        "disengage_ci_high": stats.disengage_ci[1],
        "horizon_rate": stats.horizon_rate,
        "mean_return": stats.mean_return,
        "mean_steps": stats.mean_steps,
        "mean_steps_to_goal": stats.mean_steps_to_goal,
    }
    run.tables.append(("simulate", [row]))
    mdp = build_app_mdp(theta, cfg.world, profile, cfg.gamma_app)
    chosen = [pol.chosen(w).index for w in range(1, cfg.world.n_states)] + [0, 0]
    try:
        absorb = absorption_probabilities(mdp, chosen)[cfg.start_w - 1]
        analytic = {"goal": float(absorb[0]), "disengaged": float(absorb[1])}
    except AbsorptionError:
        analytic = None
    run.results = {"stats": stats.as_dict(), "analytic_absorption": analytic}
    if trajectories and cfg.out is not None:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "trajectories.ndjson", "w") as fh:
            for seed in seeds[:trajectories]:
                write_trajectory(rollout(theta, cfg.world, pol, profile, seed, cfg.horizon, cfg.start_w), fh)
        run.extra_outputs.append("trajectories.ndjson")
    return run


def cmd_sensitivity(cfg: RunConfig) -> _Run:
    run = _Run("sensitivity", cfg)
    result = run_sensitivity(cfg.trials, cfg.seed, cfg.experiment(), workers=cfg.workers)
    rows, trials = [], []
    for t in result.trials:
        for preset, v in t.verdicts.items():
            runs = t.windows[preset].runs
            text = "|".join(
                f"{r.label.value}[{','.join(sorted(k.value for k in r.bounded))}]:{r.first_w}-{r.last_w}" for r in runs
            )
            rows.append(
                dict(
                    trial=t.index,
                    **t.draw,
                    preset=preset,
                    verdict=v.status,
                    full_pattern=int(v.full),
                    window3=int(v.has_window3),
                    windows=text,
                    trial_verdict=t.status,
                )
            )
        trials.append(
            {
                "trial": t.index,
                "draw": t.draw,
                "verdict": t.status,
                "presets": {p: {"verdict": v.status, "problems": list(v.problems)} for p, v in t.verdicts.items()},
            }
        )
    run.tables.append(("sensitivity", rows))
    run.results = {
        "counts": {s: result.count(s) for s in ("pass", "fail", "vacuous")},
        "window3_trials": sum(t.window3_seen for t in result.trials),
        "trials": trials,
    }
    if result.count("fail"):
        raise PatternFailure(run, f"{result.count('fail')} of {len(result.trials)} trials violate the window patterns")
    return run


def cmd_reproduce_figures(cfg: RunConfig) -> _Run:
    run = _Run("reproduce-figures", cfg)
    exp = cfg.experiment()
    maps = reproduce_policy_maps(exp)
    curves = reproduce_effectiveness_curves(exp)
    map_rows = maps.rows()
    curve_rows = curves.rows()
    run.tables += [("policy_map", map_rows), ("effectiveness", curve_rows)]
    run.svgs["policy_map.svg"] = policy_map_svg(map_rows)
    for preset in exp.presets:
        run.svgs[f"effectiveness_{preset}.svg"] = effectiveness_svg(curve_rows, preset)
    report = underconfident_comparison(curves, maps.policies["underconfident"])
    failures = figure_checks(maps)
    run.results = {
        "windows": {p: _windows_json(d) for p, d in maps.windows.items()},
        "verdicts": {p: v.status for p, v in maps.verdicts.items()},
        "figure_check_failures": failures,
        "underconfident_comparison": {
            "far_states": list(report.far_states),
            "comparison_state": report.comparison_state,
            "values": {str(w): {k.value: v for k, v in vals.items()} for w, vals in report.values.items()},
        },
    }
    if failures:
        raise PatternFailure(run, "; ".join(failures))
    return run


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file, or a manifest.json from an earlier run")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory (default: print to stdout)")
    common.add_argument("--format", action="append", choices=FORMATS, dest="formats")
    common.add_argument("--preset")
    common.add_argument("--n-states", type=int)
    common.add_argument("--gamma-app", type=float)

    p = argparse.ArgumentParser(prog="nudgemdp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve-user", parents=[common], help="closed-form user values per distance")
    sub.add_parser("plan", parents=[common], help="app policy and window decomposition")
    sub.add_parser("min-effect", parents=[common], help="minimum effectiveness curves")
    sim = sub.add_parser("simulate", parents=[common], help="Monte Carlo rollouts of the planned policy")
    sim.add_argument("--episodes", type=int)
    sim.add_argument("--horizon", type=int)
    sim.add_argument("--start-w", type=int)
    sim.add_argument("--trajectories", type=int, default=0, help="export the first K episodes as NDJSON")
    sens = sub.add_parser("sensitivity", parents=[common], help="sampled-parameter pattern checks")
    sens.add_argument("--trials", type=int)
    sens.add_argument("--workers", type=int)
    sub.add_parser("reproduce-figures", parents=[common], help="policy maps and effectiveness curves")
    return p


COMMANDS = {
    "solve-user": cmd_solve_user,
    "plan": cmd_plan,
    "min-effect": cmd_min_effect,
    "simulate": cmd_simulate,
    "sensitivity": cmd_sensitivity,
    "reproduce-figures": cmd_reproduce_figures,
}


def main(argv: Optional[list[str]] = None) -> int:
    args = _parser().parse_args(argv)
    overrides = {
        "seed": args.seed,
        "out": args.out,
        "formats": args.formats,
        "preset": args.preset,
        "gamma_app": args.gamma_app,
        "world": {"n_states": args.n_states},
        "episodes": getattr(args, "episodes", None),
        "horizon": getattr(args, "horizon", None),
        "start_w": getattr(args, "start_w", None),
        "trials": getattr(args, "trials", None),
        "workers": getattr(args, "workers", None),
    }
    try:
        cfg = load_config(args.config, overrides)
    except SingularityError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        if args.command == "simulate":
            run = cmd_simulate(cfg, args.trajectories)
        else:
            run = COMMANDS[args.command](cfg)
    except PatternFailure as exc:
        run, message = exc.args
        run.finish()
        print(f"pattern check failed: {message}", file=sys.stderr)
        return EXIT_PATTERN
    except (SingularityError, ConvergenceError, AbsorptionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    run.finish()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
