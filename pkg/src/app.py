import functools
import logging
from pathlib import Path

import click

from Config import config, load_run_config, parse_assignments
from Errors import ExitCode, HyperRecError
from HypergraphValidator import run_property_suite
from RecommendationPipeline import (
    RecommendationPipeline,
    Stage,
    config_from_manifest,
    run_pipeline,
    run_repeats,
    run_rho_sweep,
    synthesize,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _overrides(options) -> dict:
    overrides = parse_assignments(options["assignments"])
    if options["seed"] is not None:
        overrides["seed"] = options["seed"]
    if options["threads"] is not None:
        overrides["threads"] = options["threads"]
    if options["output_dir"] is not None:
        overrides["paths.output_dir"] = str(options["output_dir"])
    return overrides


def _resolve(ctx, extra=None):
    options = ctx.obj
    overrides = {**_overrides(options), **(extra or {})}
    return load_run_config(options["config_path"], overrides)


def _handle_errors(fn):
    """Map pipeline errors to their exit codes"""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except HyperRecError as e:
            click.echo(f"error: {e}", err=True)
            raise SystemExit(int(e.exit_code))

    return wrapper


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), help="JSON run config")
@click.option("--set", "assignments", multiple=True, metavar="KEY=VALUE", help="Override one config key")
@click.option("--seed", type=int, help="Run seed")
@click.option("--threads", type=int, help="Worker threads; 1 is fully deterministic")
@click.option("--output-dir", type=click.Path(file_okay=False, path_type=Path), help="Artifact directory")
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    default=None,
)
@click.pass_context
def cli(ctx, config_path, assignments, seed, threads, output_dir, log_level):
    """Heterogeneous-hypergraph recommender pipeline."""
    logging.basicConfig(level=(log_level or config.LOG_LEVEL).upper(), format=LOG_FORMAT)
    ctx.obj = {
        "config_path": config_path,
        "assignments": assignments,
        "seed": seed,
        "threads": threads,
        "output_dir": output_dir,
    }


def _stage_command(stage: Stage, help_text: str):
    @click.pass_context
    @_handle_errors
    def command(ctx):
        cfg = _resolve(ctx)
        artifacts = RecommendationPipeline(cfg).run(until=stage, write_all=False)
        if stage is Stage.BUILD:
            for key, value in artifacts.stats.items():
                click.echo(f"{key}: {value}")
        click.echo(f"wrote {', '.join(artifacts.written)} to {cfg.paths.output_dir}")

    command.__doc__ = help_text
    return cli.command(name=stage.value)(command)


_stage_command(Stage.INGEST, "Load the interaction log and write id_map.tsv.")
_stage_command(Stage.SPLIT, "Split interactions and write split.tsv.")
_stage_command(Stage.BUILD, "Build the training hypergraph; write hypergraph.tsv and stats.csv.")
_stage_command(Stage.COMPLETE, "Complete hyperedges; write hypergraph_completed.tsv and completion.tsv.")
_stage_command(Stage.SAMPLE, "Sample sub-hypergraph views and write views.tsv.")
_stage_command(Stage.TRAIN, "Train the model; write checkpoint.npz and history.csv.")


@cli.command(name="eval")
@click.option("--checkpoint", type=click.Path(dir_okay=False, path_type=Path), help="Evaluate a saved model")
@click.pass_context
@_handle_errors
def evaluate(ctx, checkpoint):
    """Evaluate on the test split and write metrics.csv."""
    cfg = _resolve(ctx)
    artifacts = RecommendationPipeline(cfg).run(until=Stage.EVAL, write_all=False, checkpoint=checkpoint)
    click.echo(artifacts.report.format_table())


@cli.command()
@click.pass_context
@_handle_errors
def synth(ctx):
    """Generate the clustered synthetic dataset."""
    cfg = _resolve(ctx, {"source": "synthetic"})
    summary = synthesize(cfg)
    for key, value in summary.items():
        click.echo(f"{key}: {value}")


@cli.command()
@click.option("--repeats", type=int, default=None, help="Reseeded repetitions; reports mean and std")
@click.option("--rho-sweep", default=None, metavar="R1,R2,...", help="Completion rates to compare")
@click.option("--manifest", type=click.Path(dir_okay=False, path_type=Path), help="Replay a previous run")
@click.pass_context
@_handle_errors
def run(ctx, repeats, rho_sweep, manifest):
    """Run the whole pipeline and write every artifact plus manifest.json."""
    if manifest is not None:
        cfg = config_from_manifest(manifest)
        overrides = _overrides(ctx.obj)
        if overrides:
            cfg = cfg.derive(overrides)
    else:
        cfg = _resolve(ctx)

    if rho_sweep:
        try:
            rhos = [float(r) for r in rho_sweep.split(",") if r.strip()]
        except ValueError:
            raise click.BadParameter(f"expected comma-separated numbers, got '{rho_sweep}'")
        sweep = run_rho_sweep(cfg, rhos, repeats)
        click.echo(sweep.to_string(index=False))
    elif (repeats or cfg.repeats) > 1:
        click.echo(run_repeats(cfg, repeats).to_string(index=False))
    else:
        artifacts = run_pipeline(cfg)
        click.echo(artifacts.report.format_table())


@cli.command()
@click.option("--instances", type=int, default=100, show_default=True)
@click.option("--seeds", "seeds_per_instance", type=int, default=20, show_default=True)
@click.pass_context
@_handle_errors
def check(ctx, instances, seeds_per_instance):
    """Run the property and oracle suites on random instances."""
    cfg = _resolve(ctx)
    result = run_property_suite(cfg.seed, instances, seeds_per_instance)
    for message in result.errors:
        click.echo(f"  {message}", err=True)
    click.echo(result.summary())
    if not result.is_valid:
        raise SystemExit(int(ExitCode.FAILURE))


if __name__ == "__main__":
    cli()
