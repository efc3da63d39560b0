from __future__ import annotations

import importlib.metadata
import sys
from pathlib import Path
from typing import Any, List, Optional

import click
import typer
import yaml

from pirrt.config import (
    ExperimentConfig,
    PirrtConfig,
    default_sweep_path,
    default_sweep_text,
    load_config,
    load_experiments,
    normalize_algorithm,
)

app = typer.Typer(help="pirrt: path-integral RRT planning experiments", no_args_is_help=True)

EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_CHECK_FAILED = 3


def version_callback(value: bool) -> None:
    if value:
        typer.echo(f"pirrt {_get_version()}")
        raise typer.Exit()


@app.callback()
def main_callback(
    version: bool = typer.Option(False, "--version", callback=version_callback, is_eager=True),
) -> None:
    pass


def _get_version() -> str:
    try:
        return importlib.metadata.version("pirrt")
    except importlib.metadata.PackageNotFoundError:
        return "dev"


def _parse_params(pairs: list[str]) -> dict[str, Any]:
    """``key=value`` pairs; values are read as YAML scalars or lists."""
    overrides: dict[str, Any] = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or not key.strip():
            raise typer.BadParameter(f"expected key=value, got {pair!r}", param_hint="--param")
        overrides[key.strip()] = yaml.safe_load(raw)
    return overrides


def _experiment(
    cfg: PirrtConfig,
    scenario: str,
    algorithm: str,
    alpha: float,
    seed: int,
    trials: int = 1,
    paired: bool = False,
    params: Optional[List[str]] = None,
) -> ExperimentConfig:
    try:
        algorithm = normalize_algorithm(algorithm)
    except ValueError as exc:
        raise typer.BadParameter(str(exc), param_hint="--algorithm") from exc
    return ExperimentConfig(
        scenario=scenario,
        algorithm=algorithm,
        alpha=alpha,
        trials=trials,
        master_seed=seed,
        paired=paired,
        params=cfg.params.with_overrides(_parse_params(params or [])),
    )


def _run_dir(cfg: PirrtConfig, out: Optional[Path], label: str) -> Path:
    return out if out is not None else cfg.output_dir / label


@app.command()
def plan(
    scenario: str = typer.Option("single_slit", "--scenario", help="Environment preset id"),
    alpha: float = typer.Option(0.25, "--alpha", help="Noise level"),
    seed: int = typer.Option(0, "--seed", help="Master seed"),
    algorithm: str = typer.Option("pirrt", "--algorithm", help="rrt or pirrt"),
    out: Optional[Path] = typer.Option(None, "--out", help="Output directory"),
    param: Optional[List[str]] = typer.Option(
        None, "--param", help="Planner parameter override key=value (repeatable)"
    ),
    no_plots: bool = typer.Option(False, "--no-plots", help="Skip SVG figures"),
) -> None:
    """Run one mission and write its records and figures."""
    from pirrt.harness import run_label, run_single
    from pirrt.plots import emit_plots
    from pirrt.records import log_run, write_mission

    cfg = load_config()
    config = _experiment(cfg, scenario, algorithm, alpha, seed, params=param)
    env = cfg.load_scenario(config.scenario, config.geometry)
    mission = run_single(config, env, mission_timeout=cfg.mission_timeout, keep_trees=True)
    directory = _run_dir(cfg, out, f"plan-{run_label(config)}-s{seed}")
    written = write_mission(mission, env, config.to_dict(), directory)
    if not no_plots:
        written += emit_plots(mission, directory, env, config.to_dict())
    log_run(
        cfg.journal_path,
        {
            "command": "plan",
            "scenario": config.scenario,
            "algorithm": config.algorithm,
            "alpha": config.alpha,
            "seed": seed,
            "outcome": mission.outcome.value,
            "corridor": mission.corridor.value if mission.corridor else None,
            "cycles": len(mission.cycles),
        },
    )
    corridor = mission.corridor.title if mission.corridor else "-"
    end = mission.final
    typer.echo(f"Outcome:  {mission.outcome.value}")
    typer.echo(f"Corridor: {corridor}")
    typer.echo(f"Cycles:   {len(mission.cycles)}")
    typer.echo(f"Final:    x={end.state[0]:.3f} y={end.state[1]:.3f} t={end.time:.2f}")
    typer.echo(f"Wrote {len(written)} files to {directory}")
    raise typer.Exit(code=0)


@app.command()
def montecarlo(
    scenario: str = typer.Option("double_slit", "--scenario", help="Environment preset id"),
    alpha: float = typer.Option(0.25, "--alpha", help="Noise level"),
    trials: int = typer.Option(100, "--trials", help="Number of missions"),
    algorithm: str = typer.Option("pirrt", "--algorithm", help="rrt or pirrt"),
    seed: int = typer.Option(0, "--seed", help="Master seed"),
    paired: bool = typer.Option(False, "--paired", help="Share trial streams across algorithms"),
    workers: Optional[int] = typer.Option(None, "--workers", help="Worker processes"),
    out: Optional[Path] = typer.Option(None, "--out", help="Output directory"),
    param: Optional[List[str]] = typer.Option(
        None, "--param", help="Planner parameter override key=value (repeatable)"
    ),
    no_plots: bool = typer.Option(False, "--no-plots", help="Skip the SVG overlay"),
) -> None:
    """Run seeded trials of one algorithm and print the outcome table."""
    from pirrt.harness import SweepReport, run_experiment, run_label, write_experiment
    from pirrt.plots import emit_plots

    cfg = load_config()
    config = _experiment(cfg, scenario, algorithm, alpha, seed, trials, paired, param)
    result = run_experiment(config, settings=cfg, workers=workers)
    directory = _run_dir(cfg, out, f"montecarlo-{run_label(config)}-s{seed}")
    written = write_experiment(result, directory)
    if not no_plots:
        written += emit_plots(result, directory)
    for line in SweepReport([result]).lines():
        typer.echo(line)
    typer.echo(f"\nWrote {len(written)} files to {directory}")
    raise typer.Exit(code=0)


@app.command()
def sweep(
    config: Optional[Path] = typer.Option(
        None, "--config", help="Sweep file (default: sweep.yaml in the config dir)"
    ),
    workers: Optional[int] = typer.Option(None, "--workers", help="Worker processes"),
    out: Optional[Path] = typer.Option(None, "--out", help="Output directory"),
    no_plots: bool = typer.Option(False, "--no-plots", help="Skip the SVG overlays"),
) -> None:
    """Run every experiment in a sweep file and print the combined table."""
    from pirrt.harness import run_label, write_sweep
    from pirrt.harness import sweep as run_sweep
    from pirrt.plots import emit_plots

    cfg = load_config()
    path = config
    if path is None:
        user_sweep = cfg.config_dir / "sweep.yaml"
        path = user_sweep if user_sweep.exists() else default_sweep_path()
    configs = load_experiments(path, cfg.params)
    report = run_sweep(configs, settings=cfg, workers=workers)
    directory = _run_dir(cfg, out, f"sweep-{path.stem}")
    written = write_sweep(report, directory)
    if not no_plots:
        for result in report.results:
            written += emit_plots(result, directory / run_label(result.config))
    for line in report.lines():
        typer.echo(line)
    typer.echo(f"\nWrote {len(written)} files to {directory}")
    raise typer.Exit(code=0)


@app.command("check-duality")
def check_duality(
    samples: int = typer.Option(100_000, "--samples", help="Monte Carlo samples per estimate"),
    rho: float = typer.Option(4.0, "--rho", help="|rho| = 1 / alpha^2"),
    seed: int = typer.Option(0, "--seed", help="Master seed"),
    x0: float = typer.Option(1.0, "--x0", help="Initial state"),
) -> None:
    """Compare the free energy with policy costs on a scalar integrator."""
    from pirrt.duality import ToyProblem, duality_report

    report = duality_report(ToyProblem(x0=x0, rho_magnitude=rho), samples=samples, seed=seed)
    for line in report.lines():
        typer.echo(line)
    raise typer.Exit(code=0 if report.passed else EXIT_CHECK_FAILED)


@app.command()
def scenarios() -> None:
    """List environment presets."""
    cfg = load_config()
    names = cfg.scenario_names()
    if not names:
        typer.echo("No scenarios found.")
        raise typer.Exit(code=0)
    typer.echo(f"{'Name':<20} {'Obstacles':>9} {'Corridors':>9}  Source")
    typer.echo("-" * 52)
    for name in names:
        env = cfg.load_scenario(name)
        path = cfg.scenario_path(name)
        source = "user" if path is not None and path.parent == cfg.scenarios_dir else "built-in"
        typer.echo(f"{name[:20]:<20} {len(env.obstacles):>9} {len(env.corridors):>9}  {source}")
    typer.echo(f"\nTotal: {len(names)} scenarios")
    raise typer.Exit(code=0)


@app.command()
def init() -> None:
    """Create the config directories and a starter sweep file."""
    cfg = load_config()
    cfg.config_dir.mkdir(parents=True, exist_ok=True)
    cfg.cache_dir.mkdir(parents=True, exist_ok=True)
    cfg.data_dir.mkdir(parents=True, exist_ok=True)
    cfg.scenarios_dir.mkdir(parents=True, exist_ok=True)

    sweep_path = cfg.config_dir / "sweep.yaml"
    if not sweep_path.exists():
        sweep_path.write_text(default_sweep_text(), encoding="utf-8")
        created = "created"
    else:
        created = "exists"

    typer.echo(f"Config directory: {cfg.config_dir}")
    typer.echo(f"Sweep file: {sweep_path} ({created})")
    typer.echo(f"Scenarios directory: {cfg.scenarios_dir}")
    typer.echo(f"Cache directory: {cfg.cache_dir}")
    typer.echo(f"Output directory: {cfg.output_dir}")
    raise typer.Exit(code=0)


def main(argv: Optional[List[str]] = None) -> int:
    try:
        result = app(args=argv, prog_name="pirrt", standalone_mode=False)
    except typer.Exit as e:
        return e.exit_code if e.exit_code is not None else 0
    except click.exceptions.Abort:
        typer.echo("Aborted.", err=True)
        return EXIT_USAGE
    except click.exceptions.UsageError as e:
        e.show()
        return EXIT_USAGE
    except (ValueError, RuntimeError, OSError) as e:
        typer.echo(f"Error: {e}", err=True)
        return EXIT_RUNTIME
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(main())
