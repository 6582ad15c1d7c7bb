"""Command-line front end: init, run, benchmark, report, simulate.

Exit codes: 0 on success, 2 for configuration problems, 3 for runtime
failures.  Log verbosity follows the CAAI_LOG_LEVEL environment variable
(error, info, debug).
"""

from __future__ import annotations

import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np
import yaml

from . import benchmark, cognition, gp, knowledge, report
from .errors import (
    CogoptError,
    ConfigError,
    ConstraintViolation,
    MalformedInput,
    ParseError,
    SchemaError,
)
from .knowledge import GoalSpec, ResourceBudget, default_kb, load_kb, save_kb
from .plant import DEFAULT_BOUNDS, VpsSimulator
from .rating import RatingWeights

log = logging.getLogger("cogopt")

CONFIG_ERRORS = (ConfigError, SchemaError, ConstraintViolation, ParseError, FileNotFoundError)

DEFAULT_SCENARIOS = ((0.8, 0.1, 0.1), (0.5, 0.25, 0.25))


def _setup_logging():
    level = os.environ.get("CAAI_LOG_LEVEL", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        level = "error"
    logging.basicConfig(level=levels[level], format="%(levelname)s %(name)s: %(message)s")


@dataclass
class RunConfig:
    kb_path: str = "kb.yaml"
    output_dir: str = "out"
    cycles: int = 36
    goal: GoalSpec = field(default_factory=lambda: GoalSpec(
        "Optimization", ("energy", "processing_time", "corn_amount"), "mean", "minimize"))
    plant_bounds: tuple[float, float] = DEFAULT_BOUNDS
    plant_noise_sd: float = 0.02
    plant_weights: tuple = (1.0 / 3, 1.0 / 3, 1.0 / 3)
    plant_seed: int = 0
    plant_seed_data: str | None = None
    cognition: cognition.CognitionConfig = field(default_factory=cognition.CognitionConfig)
    scenarios: tuple = DEFAULT_SCENARIOS
    campaign_budget: int = 36
    campaign_checkpoints: tuple = benchmark.DEFAULT_CHECKPOINTS
    campaign_reps: int = 10
    campaign_k_instances: int = 5
    campaign_workers: int = 1


def default_config_doc() -> dict:
    return {
        "kb": "kb.yaml",
        "output_dir": "out",
        "cycles": 36,
        "goal": {
            "overall_goal": "Optimization",
            "signals": ["energy", "processing_time", "corn_amount"],
            "aggregation": "mean",
            "direction": "minimize",
        },
        "plant": {
            "bounds": list(DEFAULT_BOUNDS),
            "noise_sd": 0.02,
            "weights": [1.0 / 3, 1.0 / 3, 1.0 / 3],
            "seed": 0,
            "seed_data": None,
        },
        "cognition": {
            "s": 12,
            "theta": 5,
            "epsilon": None,
            "weights": [0.8, 0.1, 0.1],
            "k_instances": 5,
            "tuning_budget": 5,
            "bench_budget": 36,
            "reps": 10,
            "stagnation_delta": 0.01,
            "master_seed": 0,
            "design_kind": "full_factorial",
            "design_reps": 3,
            "sim_method": "decomposition",
            "workers": 1,
        },
        "resources": {
            "max_parallel_pipelines": 4,
            "deadline": 60.0,
            "memory_cap": 1 << 30,
        },
        "rating": {"scenarios": [list(s) for s in DEFAULT_SCENARIOS]},
        "campaign": {
            "budget": 36,
            "checkpoints": list(benchmark.DEFAULT_CHECKPOINTS),
            "reps": 10,
            "k_instances": 5,
            "workers": 1,
        },
    }


def load_config(path, seed_override: int | None = None, out_override: str | None = None) -> RunConfig:
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ParseError(f"malformed config: {exc}") from exc
    base = Path(path).parent

    goal_doc = doc.get("goal", {})
    goal = GoalSpec(
        overall_goal=goal_doc.get("overall_goal", "Optimization"),
        signals=tuple(goal_doc.get("signals", ["signal"])),
        aggregation=goal_doc.get("aggregation", "mean"),
        direction=goal_doc.get("direction", "minimize"),
    )
    plant_doc = doc.get("plant", {})
    cog_doc = dict(doc.get("cognition", {}))
    res_doc = doc.get("resources", {})
    rating_weights = cog_doc.pop("weights", [0.8, 0.1, 0.1])
    cog = cognition.CognitionConfig(
        weights=RatingWeights(*rating_weights),
        resources=ResourceBudget(
            max_parallel_pipelines=res_doc.get("max_parallel_pipelines", 4),
            deadline=res_doc.get("deadline", 60.0),
            memory_cap=res_doc.get("memory_cap", 1 << 30),
        ),
        **cog_doc,
    )
    if seed_override is not None:
        cog.master_seed = seed_override
    camp = doc.get("campaign", {})
    kb_path = doc.get("kb", "kb.yaml")
    cfg = RunConfig(
        kb_path=str(base / kb_path) if not os.path.isabs(kb_path) else kb_path,
        output_dir=out_override or doc.get("output_dir", "out"),
        cycles=int(doc.get("cycles", 36)),
        goal=goal,
        plant_bounds=tuple(plant_doc.get("bounds", DEFAULT_BOUNDS)),
        plant_noise_sd=float(plant_doc.get("noise_sd", 0.02)),
        plant_weights=tuple(plant_doc.get("weights", [1.0 / 3, 1.0 / 3, 1.0 / 3])),
        plant_seed=int(plant_doc.get("seed", 0)) if seed_override is None else seed_override,
        plant_seed_data=plant_doc.get("seed_data"),
        cognition=cog,
        scenarios=tuple(tuple(s) for s in doc.get("rating", {}).get("scenarios", DEFAULT_SCENARIOS)),
        campaign_budget=int(camp.get("budget", 36)),
        campaign_checkpoints=tuple(camp.get("checkpoints", benchmark.DEFAULT_CHECKPOINTS)),
        campaign_reps=int(camp.get("reps", 10)),
        campaign_k_instances=int(camp.get("k_instances", 5)),
        campaign_workers=int(camp.get("workers", 1)),
    )
    return cfg


def _make_plant(cfg: RunConfig) -> VpsSimulator:
    return VpsSimulator(
        weights=cfg.plant_weights,
        noise_sd=cfg.plant_noise_sd,
        seed=cfg.plant_seed,
        bounds=cfg.plant_bounds,
        seed_data_path=cfg.plant_seed_data,
    )


@click.group()
@click.option("--config", "config_path", type=click.Path(), default="config.yaml",
              help="Path to the run configuration YAML.")
@click.option("--seed", type=int, default=None, help="Override master and plant seeds.")
@click.option("--out", type=click.Path(), default=None, help="Override the output directory.")
@click.option("--force", is_flag=True, help="Overwrite existing output files.")
@click.pass_context
def main(ctx, config_path, seed, out, force):
    """Online algorithm selection for closed-loop process optimization."""
    _setup_logging()
    ctx.ensure_object(dict)
    ctx.obj.update(config_path=config_path, seed=seed, out=out, force=force)


def _guarded(ctx, fn):
    try:
        fn()
    except CONFIG_ERRORS as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)
    except (CogoptError, OSError) as exc:
        click.echo(f"runtime error: {exc}", err=True)
        sys.exit(3)


@main.command()
@click.argument("directory", type=click.Path(), default=".")
@click.pass_context
def init(ctx, directory):
    """Write a template knowledge base and run configuration into DIRECTORY."""

    def body():
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        kb_file = d / "kb.yaml"
        cfg_file = d / "config.yaml"
        if (kb_file.exists() or cfg_file.exists()) and not ctx.obj["force"]:
            raise ConfigError(f"{kb_file} or {cfg_file} exists; use --force to overwrite")
        save_kb(default_kb(), kb_file)
        with open(cfg_file, "w") as fh:
            yaml.safe_dump(default_config_doc(), fh, sort_keys=False)
        click.echo(f"wrote {kb_file} and {cfg_file}")

    _guarded(ctx, body)


def _prepare_out(ctx, cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


@main.command()
@click.option("--cycles", type=int, default=None, help="Number of loop cycles to run.")
@click.option("--theta", type=int, default=None, help="Selection step size.")
@click.option("--epsilon", type=float, default=None, help="Application threshold.")
@click.pass_context
def run(ctx, cycles, theta, epsilon):
    """Bootstrap the plant and execute the closed optimization loop."""

    def body():
        cfg = load_config(ctx.obj["config_path"], ctx.obj["seed"], ctx.obj["out"])
        if cycles is not None:
            cfg.cycles = cycles
        if theta is not None:
            cfg.cognition.theta = theta
        if epsilon is not None:
            cfg.cognition.epsilon = epsilon
        kb = load_kb(cfg.kb_path)
        plant = _make_plant(cfg)
        out = _prepare_out(ctx, cfg)
        log_path = out / "runlog.jsonl"
        if log_path.exists() and not ctx.obj["force"]:
            raise ConfigError(f"{log_path} exists; use --force to overwrite")

        state = cognition.CognitionState()
        cognition.bootstrap(state, plant, cfg.cognition)
        entries = [{
            "type": "bootstrap",
            "design_size": cfg.cognition.s,
            "cycles_recorded": len(state.d),
            "x": state.x,
        }]
        for _ in range(cfg.cycles):
            state, kb = cognition.step(state, plant, kb, cfg.cognition, cfg.goal)
            entry = dict(state.log_entries[-1])
            entry["type"] = "cycle"
            entries.append(entry)
            if entry["selection_ran"] and state.last_rating is not None:
                entries.append({
                    "type": "selection",
                    "iteration": entry["iteration"],
                    "p_best": state.p_best,
                    "survivors": list(state.last_rating.survivors),
                    "eliminated": list(state.last_rating.eliminated),
                    "ratings": {
                        pid: {
                            "improvement": r.improvement,
                            "norm_obj": r.norm_obj,
                            "mem_ratio": r.mem_ratio,
                            "cpu_ratio": r.cpu_ratio,
                            "aggregate": r.aggregate,
                            "rank": r.rank,
                        }
                        for pid, r in state.last_rating.ratings.items()
                    },
                })
        with open(log_path, "w") as fh:
            for entry in entries:
                fh.write(json.dumps(entry) + "\n")
        save_kb(kb, out / "kb_final.yaml")
        click.echo(f"wrote {log_path} and {out / 'kb_final.yaml'}")

    _guarded(ctx, body)


@main.command("benchmark")
@click.pass_context
def benchmark_cmd(ctx):
    """Standalone portfolio campaign on ground truth and simulation instances."""

    def body():
        cfg = load_config(ctx.obj["config_path"], ctx.obj["seed"], ctx.obj["out"])
        kb = load_kb(cfg.kb_path)
        plant = _make_plant(cfg)
        out = _prepare_out(ctx, cfg)
        records = report.campaign(
            plant, kb, cfg.goal.path,
            budget=cfg.campaign_budget,
            checkpoints=cfg.campaign_checkpoints,
            reps=cfg.campaign_reps,
            k_instances=cfg.campaign_k_instances,
            master_seed=cfg.cognition.master_seed,
            workers=cfg.campaign_workers,
        )
        benchmark.records_to_csv(records, out / "campaign.csv")
        report.write_rank_csv(records, sim=False, path=out / "ranks_ground_truth.csv")
        report.write_rank_csv(records, sim=True, path=out / "ranks_simulation.csv")
        click.echo(f"wrote {out / 'campaign.csv'} and rank tables")

    _guarded(ctx, body)


@main.command("report")
@click.argument("records_csv", type=click.Path(exists=True))
@click.pass_context
def report_cmd(ctx, records_csv):
    """Correlation, weight-scenario rank tables, and resource trajectories."""

    def body():
        cfg = load_config(ctx.obj["config_path"], ctx.obj["seed"], ctx.obj["out"])
        out = _prepare_out(ctx, cfg)
        records = benchmark.records_from_csv(records_csv)
        if not records:
            raise MalformedInput(f"{records_csv}: no records")
        for i, (rw, table, p_best) in enumerate(
            report.scenario_tables(records, cfg.scenarios), start=1
        ):
            report.write_scenario_csv(table, out / f"scenario_{i}.csv")
        report.write_trajectories_csv(records, out / "trajectories.csv")
        click.echo(report.summary_text(records, cfg.scenarios))

    _guarded(ctx, body)


@main.command()
@click.option("-k", "--instances", type=int, default=None, help="Number of simulation instances.")
@click.pass_context
def simulate(ctx, instances):
    """Dump the ground-truth curve and simulation instances as CSV."""

    def body():
        cfg = load_config(ctx.obj["config_path"], ctx.obj["seed"], ctx.obj["out"])
        plant = _make_plant(cfg)
        out = _prepare_out(ctx, cfg)
        k = instances if instances is not None else cfg.campaign_k_instances
        objectives = report.build_objectives(plant, k, cfg.cognition.master_seed,
                                             cfg.cognition.sim_method)
        grid = np.linspace(plant.bounds[0], plant.bounds[1], gp.GRID_SIZE)
        path = out / "simulations.csv"
        with open(path, "w") as fh:
            fh.write("instance,x,y\n")
            for name, obj in objectives.items():
                for x in grid:
                    fh.write(f"{name},{float(x)!r},{float(obj(np.array([x])))!r}\n")
        click.echo(f"wrote {path}")

    _guarded(ctx, body)


if __name__ == "__main__":
    main()
