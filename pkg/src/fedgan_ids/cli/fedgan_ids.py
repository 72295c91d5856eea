from pathlib import Path
from typing import Optional

import numpy as np
import typer
from rich.console import Console
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn
from rich.table import Table

from fedgan_ids.constants import (
    CENTRAL_CHECKPOINT_NAME,
    CLUSTER_CHECKPOINT_TEMPLATE,
    DEFAULT_THRESHOLD,
    METRICS_FILE_NAME,
    SUMMARY_FILE_NAME,
)
from fedgan_ids.errors import AggregationError, ContractViolation
from fedgan_ids.federation.aggregate import (
    ImpactVector,
    NodeUpdate,
    aggregate_fedavg,
    aggregate_fgan,
)
from fedgan_ids.gan.model import GanModel, Label, TrainingHyperparameters, train_round
from fedgan_ids.io.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from fedgan_ids.io.config_file import dump_config, parse_config
from fedgan_ids.io.features import load_feature_csv
from fedgan_ids.io.metrics import MetricsWriter, read_metrics, render_record
from fedgan_ids.models.records import AttackEvaluation, RoundRecord, Tier
from fedgan_ids.simulation.evaluation import evaluate_batch
from fedgan_ids.simulation.harness import SimMetrics, run_simulation
from fedgan_ids.utils.hashing import content_hash
from fedgan_ids.utils.logging import configure_logging, stderr_console
from fedgan_ids.utils.typer import (
    VariadicOptionCommand,
    exit_on_input_errors,
    run_typer_app_as_main,
)

app = typer.Typer(
    help="Federated GAN intrusion detection: simulate, train, aggregate, inspect.",
    no_args_is_help=True,
)


def main() -> None:
    run_typer_app_as_main(app, prog_name="fedgan-ids")


def _setup_logging(quiet: bool, verbose: bool) -> None:
    if quiet and verbose:
        raise typer.BadParameter("--quiet and --verbose cannot be combined.")
    configure_logging(quiet=quiet, verbose=verbose)


QUIET_OPTION = typer.Option(
    False, "--quiet", "-q", help="Only log warnings and errors; no progress bar."
)
VERBOSE_OPTION = typer.Option(False, "--verbose", "-v", help="Log debug messages.")


def evaluation_table(
    title: str, evaluations: dict[str, list[AttackEvaluation]]
) -> Table:
    table = Table(title=title)
    table.add_column("Cluster")
    table.add_column("Attack")
    for column in ("AUC", "Accuracy", "FPR"):
        table.add_column(column, justify="right")
    for cluster_id, results in evaluations.items():
        for result in results:
            table.add_row(
                cluster_id,
                result.attack_type,
                f"{result.auc:.3f}",
                f"{result.accuracy:.3f}",
                f"{result.false_positive_rate:.3f}",
            )
    return table


def _write_simulation_outputs(
    out: Path, metrics: SimMetrics, config_digest: str
) -> None:
    (out / SUMMARY_FILE_NAME).write_text(
        render_record(metrics.summary) + "\n", encoding="utf-8"
    )
    if metrics.central is not None:
        save_checkpoint(
            out / CENTRAL_CHECKPOINT_NAME,
            Checkpoint(
                model=metrics.central.current_model,
                round_index=metrics.central.round_index,
                config_digest=config_digest,
            ),
        )
    for cluster_id, state in metrics.clusters.items():
        save_checkpoint(
            out / CLUSTER_CHECKPOINT_TEMPLATE.format(cluster_id=cluster_id),
            Checkpoint(
                model=state.current_model,
                round_index=state.round_index,
                config_digest=config_digest,
            ),
        )


@app.command()
def simulate(
    config_path: Path = typer.Option(
        ...,
        "--config",
        "-c",
        exists=True,
        dir_okay=False,
        readable=True,
        help="Scenario file (JSON). An empty object runs the default scenario.",
    ),
    out: Path = typer.Option(
        ...,
        "--out",
        "-o",
        file_okay=False,
        help="Directory for the metrics stream, summary and checkpoints.",
    ),
    seed: Optional[int] = typer.Option(
        None,
        "--seed",
        min=0,
        help="Scenario seed; takes precedence over the seed in the config file.",
    ),
    quiet: bool = QUIET_OPTION,
    verbose: bool = VERBOSE_OPTION,
) -> None:
    """Run a scenario and write metrics, a summary and final checkpoints per tier."""
    _setup_logging(quiet, verbose)
    with exit_on_input_errors():
        config = parse_config(config_path)
    if seed is not None:
        config = config.model_copy(update={"seed": seed})
    config_digest = content_hash(dump_config(config).encode("utf-8"))
    out.mkdir(parents=True, exist_ok=True)

    progress = Progress(
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        console=stderr_console(),
        disable=quiet,
    )
    metrics_stream = (out / METRICS_FILE_NAME).open("w", encoding="utf-8")
    with progress, MetricsWriter(metrics_stream) as writer:
        task = progress.add_task("Simulating", total=config.duration)
        metrics = run_simulation(
            config,
            on_record=writer.write,
            on_tick=lambda _: progress.advance(task),
        )
        writer.write(metrics.summary)
    _write_simulation_outputs(out, metrics, config_digest)

    if not quiet:
        console = stderr_console()
        console.print(
            evaluation_table("Final cluster models", metrics.summary.final_evaluations)
        )
        if metrics.summary.central_evaluations:
            console.print(
                evaluation_table(
                    "Final central model", metrics.summary.central_evaluations
                )
            )


@app.command("train-local")
def train_local(
    data: Path = typer.Option(
        ..., "--data", "-d", exists=True, dir_okay=False, help="Labeled feature CSV."
    ),
    out: Path = typer.Option(
        ..., "--out", "-o", dir_okay=False, help="Checkpoint to write."
    ),
    steps: int = typer.Option(25, "--steps", min=1, help="SGD steps per network."),
    seed: int = typer.Option(
        0, "--seed", min=0, help="Seed for initialization and sampling."
    ),
    learning_rate: float = typer.Option(0.05, "--lr", min=0.0, help="Learning rate."),
    batch_size: int = typer.Option(
        32, "--batch-size", min=1, help="Samples per step."
    ),
    semi_supervised: bool = typer.Option(
        False,
        "--semi-supervised",
        help="Also train the discriminator to reject malicious-labeled rows.",
    ),
    init: Optional[Path] = typer.Option(
        None,
        "--init",
        exists=True,
        dir_okay=False,
        help="Start from this checkpoint instead of a freshly initialized model.",
    ),
    quiet: bool = QUIET_OPTION,
    verbose: bool = VERBOSE_OPTION,
) -> None:
    """Train one local round on a feature CSV and save the resulting model."""
    _setup_logging(quiet, verbose)
    with exit_on_input_errors():
        start = load_checkpoint(init).model if init is not None else None
        batch = load_feature_csv(
            data, expected_dim=start.feature_dim if start is not None else None
        )
    model = (
        start
        if start is not None
        else GanModel.initialize(batch.dim, np.random.default_rng(seed))
    )
    genuine_count = len(batch.select(Label.GENUINE))
    if genuine_count == 0:
        raise typer.BadParameter(
            "The data has no genuine rows to train on.", param_hint="--data"
        )
    trained, trace = train_round(
        model,
        batch,
        TrainingHyperparameters(
            learning_rate=learning_rate,
            batch_size=batch_size,
            steps=steps,
            seed=seed,
            semi_supervised=semi_supervised,
        ),
    )
    save_checkpoint(out, Checkpoint(model=trained, sample_count=genuine_count))
    if not quiet:
        final = trace[-1]
        stderr_console().print(
            f"Trained {steps} steps: discriminator loss "
            f"{final.discriminator_loss:.4f}, generator loss "
            f"{final.generator_loss:.4f}. Model {trained.model_hash}."
        )


class AggregateCommand(VariadicOptionCommand):
    variadic_options = frozenset({"--inputs", "-i", "--impacts"})


@app.command(cls=AggregateCommand)
def aggregate(
    inputs: list[Path] = typer.Option(
        ...,
        "--inputs",
        "-i",
        exists=True,
        dir_okay=False,
        help="Checkpoints to aggregate: `--inputs a.fgck b.fgck`.",
    ),
    out: Path = typer.Option(
        ..., "--out", "-o", dir_okay=False, help="Checkpoint to write."
    ),
    impacts: Optional[list[float]] = typer.Option(
        None,
        "--impacts",
        help="Impact of each input, in input order: `--impacts 0.7 0.3`. "
        "Omit for plain sample-weighted averaging.",
    ),
) -> None:
    """Average checkpoints, weighting each by its sample count and optional impact."""
    with exit_on_input_errors():
        first = load_checkpoint(inputs[0])
        checkpoints = [first] + [
            load_checkpoint(path, expected=first.model) for path in inputs[1:]
        ]
    updates = [
        NodeUpdate(
            source_id=str(path),
            params=checkpoint.model.params,
            sample_count=checkpoint.sample_count or 1,
            local_loss=0.0,
        )
        for path, checkpoint in zip(inputs, checkpoints)
    ]
    if impacts:
        if len(impacts) != len(inputs):
            raise typer.BadParameter(
                f"{len(impacts)} impacts given for {len(inputs)} inputs.",
                param_hint="--impacts",
            )
        try:
            params = aggregate_fgan(updates, ImpactVector(tuple(impacts)))
        except AggregationError as e:
            raise typer.BadParameter(str(e), param_hint="--impacts") from e
    else:
        params = aggregate_fedavg(updates)
    save_checkpoint(
        out,
        Checkpoint(
            model=first.model.with_params(params),
            round_index=max(c.round_index for c in checkpoints) + 1,
            sample_count=sum(u.sample_count for u in updates),
        ),
    )


def _round_table(record: RoundRecord) -> Table:
    report = record.report
    table = Table(
        title=(
            f"{report.tier.value} {report.server_id} round {report.round_index} "
            f"(tick {report.tick}, limit {report.intake_limit}, "
            f"theta_A {report.theta_a:g})"
        )
    )
    for column in (
        "Source",
        "Priority",
        "Reported A",
        "Submitted",
        "Samples",
        "Impact",
        "Status",
    ):
        table.add_column(column)
    zero = set(report.zero_impact_ids)
    for summary in report.accepted:
        status = "zero impact" if summary.source_id in zero else "aggregated"
        table.add_row(
            summary.source_id,
            f"{summary.priority:.6g}",
            str(summary.reported_a),
            str(summary.submitted_at),
            str(summary.sample_count),
            f"{summary.impact:.6g}" if summary.impact is not None else "-",
            status,
        )
    for summary in report.discarded:
        table.add_row(
            summary.source_id,
            f"{summary.priority:.6g}",
            str(summary.reported_a),
            str(summary.submitted_at),
            str(summary.sample_count),
            "-",
            "discarded",
        )
    return table


@app.command("inspect-queue")
def inspect_queue(
    trace: Path = typer.Option(
        ..., "--trace", "-t", exists=True, dir_okay=False, help="Metrics stream."
    ),
    round_index: int = typer.Option(..., "--round", "-r", min=1, help="Round index."),
    tier: Optional[Tier] = typer.Option(
        None, "--tier", help="Only rounds of this tier."
    ),
    server: Optional[str] = typer.Option(
        None, "--server", help="Only rounds of this server."
    ),
    as_json: bool = typer.Option(
        False, "--json", help="Print the round reports as JSON."
    ),
) -> None:
    """Show which queued requests a round aggregated and which it discarded."""
    records = [
        record
        for record in read_metrics(trace)
        if isinstance(record, RoundRecord)
        and record.report.round_index == round_index
        and (tier is None or record.report.tier is tier)
        and (server is None or record.report.server_id == server)
    ]
    if not records:
        stderr_console().print(
            f"[bold red]Error:[/bold red] No round {round_index} in {trace}.",
            highlight=False,
        )
        raise typer.Exit(code=2)
    console = Console()
    for record in records:
        if as_json:
            print(render_record(record.report))
        else:
            console.print(_round_table(record))


@app.command("eval")
def evaluate(
    checkpoint_path: Path = typer.Option(
        ..., "--checkpoint", exists=True, dir_okay=False, help="Model to evaluate."
    ),
    data: Path = typer.Option(
        ..., "--data", "-d", exists=True, dir_okay=False, help="Labeled feature CSV."
    ),
    threshold: float = typer.Option(
        DEFAULT_THRESHOLD,
        "--threshold",
        help="Anomaly score at or above which a row is flagged malicious; "
        "strictly between 0 and 1.",
    ),
    as_json: bool = typer.Option(False, "--json", help="Print the result as JSON."),
) -> None:
    """Score a labeled feature CSV: accuracy at the threshold, AUC and FPR."""
    if not 0.0 < threshold < 1.0:
        raise typer.BadParameter(
            f"{threshold} is not strictly between 0 and 1.", param_hint="--threshold"
        )
    with exit_on_input_errors():
        model = load_checkpoint(checkpoint_path).model
        batch = load_feature_csv(data, expected_dim=model.feature_dim)
    try:
        result = evaluate_batch(model, batch, threshold)
    except ContractViolation as e:
        raise typer.BadParameter(str(e), param_hint="--data") from e
    if as_json:
        print(render_record(result))
    else:
        Console().print(evaluation_table(str(checkpoint_path), {data.name: [result]}))


if __name__ == "__main__":
    main()
