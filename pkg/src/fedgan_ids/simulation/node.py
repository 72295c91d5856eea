"""Nodes: log incoming traffic, count attacks, train and submit to the proxy server."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from fedgan_ids.coordination.coordinator import SubmissionOutcome
from fedgan_ids.coordination.proxy import ClusterState
from fedgan_ids.errors import ContractViolation
from fedgan_ids.federation.aggregate import NodeUpdate, local_loss
from fedgan_ids.gan.mlp import FloatArray
from fedgan_ids.gan.model import Batch, Label, TrainingHyperparameters, train_round
from fedgan_ids.models.config import GanConfig
from fedgan_ids.simulation.traffic import TrafficEvent

logger = logging.getLogger(__name__)


def training_hyperparameters(gan: GanConfig, seed: int) -> TrainingHyperparameters:
    return TrainingHyperparameters(
        learning_rate=gan.learning_rate,
        batch_size=gan.batch_size,
        steps=gan.local_steps,
        seed=seed,
        semi_supervised=gan.semi_supervised,
    )


@dataclass(frozen=True)
class TrainingRecord:
    """One local training run: enough to replay it from the node's log."""

    tick: int
    node_id: str
    seed: int
    rows: int
    base_model_hash: str
    model_hash: str
    outcome: SubmissionOutcome


@dataclass
class Node:
    node_id: str
    cluster_id: str
    seed_sequence: np.random.SeedSequence = field(repr=False)
    batch_trigger: int = 40
    label_noise: float = 0.0
    report_offset: int = 0

    samples: list[FloatArray] = field(default_factory=list, repr=False)
    labels: list[Label] = field(default_factory=list, repr=False)
    event_ids: list[str] = field(default_factory=list, repr=False)
    attack_index: int = 0
    new_samples: int = 0
    model_hash: str | None = None
    history: list[TrainingRecord] = field(default_factory=list, repr=False)
    rng: np.random.Generator = field(init=False, repr=False)
    _stacked: FloatArray = field(init=False, repr=False, compare=False)
    _stacked_rows: int = field(default=0, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        # The first child drives label noise; later children seed training runs.
        self.rng = np.random.default_rng(self.seed_sequence.spawn(1)[0])
        self._stacked = np.empty((0, 0), dtype=np.float64)

    @property
    def reported_attack_index(self) -> int:
        return self.attack_index + self.report_offset

    @property
    def genuine_count(self) -> int:
        return sum(1 for label in self.labels if label is Label.GENUINE)

    def local_batch(self, rows: int | None = None) -> Batch:
        """The first `rows` logged samples (all of them by default)."""
        end = len(self.samples) if rows is None else rows
        return Batch(self._stack(end), tuple(self.labels[:end]))

    def _stack(self, end: int) -> FloatArray:
        # Rows already copied stay put; new ones are appended, doubling capacity.
        logged = len(self.samples)
        if self._stacked_rows < logged:
            new_rows = np.vstack(self.samples[self._stacked_rows :])
            if self._stacked.shape[0] < logged:
                grown = np.empty(
                    (max(2 * self._stacked.shape[0], logged), new_rows.shape[1]),
                    dtype=np.float64,
                )
                grown[: self._stacked_rows] = self._stacked[: self._stacked_rows]
                self._stacked = grown
            self._stacked[self._stacked_rows : logged] = new_rows
            self._stacked_rows = logged
        return self._stacked[:end]

    def next_training_seed(self) -> int:
        return int(self.seed_sequence.spawn(1)[0].generate_state(1)[0])


def node_ingest(node: Node, events: Sequence[TrafficEvent]) -> None:
    """Log events locally, labeling them and counting the malicious ones in A."""
    for event in events:
        if event.node_id != node.node_id:
            raise ContractViolation(
                f"Event {event.event_id} targets {event.node_id}, not {node.node_id}."
            )
        label = event.truth
        if node.label_noise > 0.0 and node.rng.random() < node.label_noise:
            label = label.flipped()
        node.samples.append(event.vector)
        node.labels.append(label)
        node.event_ids.append(event.event_id)
        if label is Label.MALICIOUS:
            node.attack_index += 1
    node.new_samples += len(events)


def node_maybe_train_and_submit(
    node: Node, cluster: ClusterState, now: int, gan: GanConfig
) -> SubmissionOutcome | None:
    """Train on the local log and submit, once enough new samples have arrived.

    Nothing happens while the node has a request pending or is below its sample trigger.
    Suspended nodes still train; their submission comes back rejected.
    """
    if node.node_id not in cluster.members:
        raise ContractViolation(
            f"{node.node_id} is not a member of {cluster.server_id}."
        )
    if cluster.has_pending(node.node_id) or node.new_samples < node.batch_trigger:
        return None
    genuine_count = node.genuine_count
    if genuine_count == 0:
        logger.warning("%s has no genuine samples yet and cannot train.", node.node_id)
        node.new_samples = 0
        return None

    rows = len(node.samples)
    data = node.local_batch(rows)
    seed = node.next_training_seed()
    base = cluster.current_model
    model, _ = train_round(base, data, training_hyperparameters(gan, seed))
    node.new_samples = 0
    node.model_hash = model.model_hash

    update = NodeUpdate(
        source_id=node.node_id,
        params=model.params,
        sample_count=genuine_count,
        local_loss=local_loss(model, data, semi_supervised=gan.semi_supervised),
        reported_attack_index=node.reported_attack_index,
    )
    outcome = cluster.submit_request(
        node.node_id, update, node.reported_attack_index, now
    )
    if not outcome:
        logger.debug(
            "%s rejected the update from %s at tick %d: %s.",
            cluster.server_id,
            node.node_id,
            now,
            outcome.reason.value if outcome.reason else "unknown",
        )
    node.history.append(
        TrainingRecord(
            tick=now,
            node_id=node.node_id,
            seed=seed,
            rows=rows,
            base_model_hash=base.model_hash,
            model_hash=model.model_hash,
            outcome=outcome,
        )
    )
    return outcome
