"""The tick loop tying traffic, nodes, proxy servers and the central server together.

Each tick runs, in order: suspension lifting, node joins, traffic generation and ingest,
local training and submission, proxy rounds, and finally the central round with model
redistribution. Clusters and nodes are always visited in configuration order, and every
random stream is derived from the scenario seed, so a configuration fully determines the
output.

A node that joins at tick t receives traffic from tick t + 1 on. A proxy round runs when its
queue holds at least ceil(C * N) requests, or when `round_interval` ticks have passed since
the last round and the queue is not empty. After each proxy round the cluster submits its
model to the central server, which runs a round once half of the clusters have a request
pending, or `round_interval` ticks after its last round if its queue is not empty.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterator, Mapping
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from fedgan_ids.coordination.central import CentralState, distribute_model
from fedgan_ids.coordination.coordinator import Coordinator
from fedgan_ids.coordination.priority import cluster_attack_index
from fedgan_ids.coordination.proxy import ClusterState
from fedgan_ids.federation.aggregate import NodeUpdate
from fedgan_ids.gan.model import GanModel, Label
from fedgan_ids.models.config import SimConfig
from fedgan_ids.models.records import (
    AttackEvaluation,
    ReputationEvent,
    RoundRecord,
    RoundReport,
    SummaryRecord,
    Tier,
)
from fedgan_ids.simulation.evaluation import EvalSet, build_eval_sets, evaluate_model
from fedgan_ids.simulation.node import Node, node_ingest, node_maybe_train_and_submit
from fedgan_ids.simulation.traffic import (
    AttackProfile,
    events_by_node,
    generate_traffic,
)

logger = logging.getLogger(__name__)

CENTRAL_SERVER_ID = "central"
NETWORK_CREATED_AT = 0


class SeedDomain(IntEnum):
    MODEL = 0
    TRAFFIC = 1
    NODES = 2
    EVALUATION = 3


def seed_sequence(seed: int, domain: SeedDomain) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(int(domain),))


def node_id_for(cluster_id: str, index: int) -> str:
    return f"{cluster_id}.node-{index}"


def _trigger_size(participation: float, member_count: int) -> int:
    return max(1, math.ceil(round(participation * member_count, 9)))


@dataclass
class ClusterRuntime:
    state: ClusterState
    profile: AttackProfile
    rng: np.random.Generator = field(repr=False)
    nodes: list[Node] = field(default_factory=list)
    join_ticks: list[int] = field(default_factory=list)
    round_interval: int = 50
    isolate_suspended: bool = True
    last_round: int = NETWORK_CREATED_AT

    @property
    def cluster_id(self) -> str:
        return self.state.server_id

    def receiving_nodes(self, tick: int) -> list[Node]:
        return [
            node
            for node in self.nodes
            if node.node_id in self.state.members
            and self.state.members[node.node_id].joined_at < tick
            and not (
                self.isolate_suspended and self.state.is_blacklisted(node.node_id)
            )
        ]

    def round_due(self, tick: int) -> bool:
        pending = len(self.state.queue)
        if pending == 0:
            return False
        return (
            pending >= _trigger_size(self.state.participation, self.state.member_count)
            or tick - self.last_round >= self.round_interval
        )


@dataclass
class SimMetrics:
    """Everything a run produced: the metrics records and the final simulation state."""

    config: SimConfig
    records: list[RoundRecord]
    summary: SummaryRecord
    initial_model: GanModel
    clusters: dict[str, ClusterState]
    central: CentralState | None
    nodes: dict[str, Node]
    eval_sets: Mapping[str, list[EvalSet]] = field(repr=False)

    def lines(self) -> Iterator[RoundRecord | SummaryRecord]:
        yield from self.records
        yield self.summary


class Simulation:
    def __init__(
        self,
        config: SimConfig,
        *,
        on_record: Callable[[RoundRecord], None] | None = None,
        on_tick: Callable[[int], None] | None = None,
    ) -> None:
        self.config = config
        self.on_record = on_record
        self.on_tick = on_tick
        gan = config.gan
        self.initial_model = GanModel.initialize(
            config.feature_dim,
            np.random.default_rng(seed_sequence(config.seed, SeedDomain.MODEL)),
            noise_dim=gan.noise_dim,
            discriminator_hidden=gan.discriminator_hidden,
            generator_hidden=gan.generator_hidden,
        )
        self.eval_sets = build_eval_sets(
            config, seed_sequence(config.seed, SeedDomain.EVALUATION)
        )
        self.records: list[RoundRecord] = []
        self.traffic_events = 0
        self.malicious_events = 0
        self._event_marks: dict[str, int] = {}

        traffic_seeds = seed_sequence(config.seed, SeedDomain.TRAFFIC).spawn(
            len(config.clusters)
        )
        node_seeds = seed_sequence(config.seed, SeedDomain.NODES).spawn(
            len(config.clusters)
        )
        self.clusters: list[ClusterRuntime] = []
        for cluster_id, cluster, traffic_seed, node_seed in zip(
            config.cluster_ids, config.clusters, traffic_seeds, node_seeds
        ):
            node_ids = [node_id_for(cluster_id, i) for i in range(cluster.node_count)]
            runtime = ClusterRuntime(
                state=ClusterState(
                    server_id=cluster_id,
                    created_at=cluster.created_at,
                    participation=cluster.participation,
                    suspension_ticks=cluster.suspension_ticks,
                    current_model=self.initial_model,
                    high_attack=cluster.high_attack,
                    inverted_maturity=cluster.inverted_maturity,
                ),
                profile=AttackProfile.from_config(
                    cluster.attack_profile, config.feature_dim, node_ids
                ),
                rng=np.random.default_rng(traffic_seed),
                join_ticks=(
                    list(cluster.join_schedule)
                    if cluster.join_schedule is not None
                    else [cluster.created_at] * cluster.node_count
                ),
                round_interval=cluster.round_interval,
                isolate_suspended=cluster.isolate_suspended,
                last_round=cluster.created_at,
            )
            for index, (node_id, seed) in enumerate(
                zip(node_ids, node_seed.spawn(cluster.node_count))
            ):
                runtime.nodes.append(
                    Node(
                        node_id=node_id,
                        cluster_id=cluster_id,
                        seed_sequence=seed,
                        batch_trigger=cluster.batch_trigger,
                        label_noise=cluster.label_noise,
                        report_offset=cluster.inflated_reports.get(index, 0),
                    )
                )
            self.clusters.append(runtime)

        central = config.central
        self.central: CentralState | None = (
            CentralState(
                server_id=CENTRAL_SERVER_ID,
                created_at=NETWORK_CREATED_AT,
                participation=central.participation,
                suspension_ticks=central.suspension_ticks,
                current_model=self.initial_model,
                high_attack=central.high_attack,
                inverted_maturity=central.inverted_maturity,
            )
            if central.enabled
            else None
        )
        self.last_central_round = NETWORK_CREATED_AT
        self._admit(NETWORK_CREATED_AT)

    @property
    def servers(self) -> list[Coordinator]:
        servers: list[Coordinator] = [runtime.state for runtime in self.clusters]
        if self.central is not None:
            servers.append(self.central)
        return servers

    def _admit(self, tick: int) -> None:
        for runtime in self.clusters:
            if self.central is not None and runtime.state.created_at == tick:
                self.central.add_member(runtime.cluster_id, tick)
            for node, join_tick in zip(runtime.nodes, runtime.join_ticks):
                if join_tick == tick:
                    runtime.state.add_member(node.node_id, tick)
                    logger.debug(
                        "%s joined %s at tick %d.",
                        node.node_id,
                        runtime.cluster_id,
                        tick,
                    )

    def _new_reputation_events(self, server: Coordinator) -> list[ReputationEvent]:
        start = self._event_marks.get(server.server_id, 0)
        self._event_marks[server.server_id] = len(server.reputation_events)
        return server.reputation_events[start:]

    def _queue_depths(self) -> dict[str, int]:
        return {server.server_id: len(server.queue) for server in self.servers}

    def _record(
        self,
        report: RoundReport,
        server: Coordinator,
        evaluations: dict[str, list[AttackEvaluation]],
    ) -> None:
        record = RoundRecord(
            report=report,
            evaluations=evaluations,
            queue_depths=self._queue_depths(),
            reputation_events=self._new_reputation_events(server),
        )
        self.records.append(record)
        if self.on_record is not None:
            self.on_record(record)

    def _evaluate(
        self, model: GanModel, cluster_ids: list[str]
    ) -> dict[str, list[AttackEvaluation]]:
        threshold = self.config.evaluation.threshold
        return {
            cluster_id: evaluate_model(model, self.eval_sets[cluster_id], threshold)
            for cluster_id in cluster_ids
        }

    def _traffic(self, tick: int) -> None:
        for runtime in self.clusters:
            receiving = runtime.receiving_nodes(tick)
            if not receiving:
                continue
            events = generate_traffic(
                runtime.profile, tick, runtime.rng, [node.node_id for node in receiving]
            )
            self.traffic_events += len(events)
            self.malicious_events += sum(e.truth is Label.MALICIOUS for e in events)
            grouped = events_by_node(events)
            for node in receiving:
                node_ingest(node, grouped.get(node.node_id, []))

    def _train(self, tick: int) -> None:
        for runtime in self.clusters:
            for node in runtime.nodes:
                if node.node_id in runtime.state.members:
                    node_maybe_train_and_submit(
                        node, runtime.state, tick, self.config.gan
                    )

    def _proxy_rounds(self, tick: int) -> None:
        for runtime in self.clusters:
            if not runtime.round_due(tick):
                continue
            state = runtime.state
            model, report = state.model_update_round(tick)
            runtime.last_round = tick
            self._record(report, state, self._evaluate(model, [runtime.cluster_id]))
            if self.central is not None and not report.noop:
                self._submit_cluster(self.central, runtime, report, tick)

    def _submit_cluster(
        self,
        central: CentralState,
        runtime: ClusterRuntime,
        report: RoundReport,
        tick: int,
    ) -> None:
        """Forward a fresh cluster model to the central server, reporting A_C."""
        contributing = [
            r for r in report.accepted if r.source_id not in report.zero_impact_ids
        ]
        cluster_a = cluster_attack_index(
            node.reported_attack_index for node in runtime.nodes
        )
        update = NodeUpdate(
            source_id=runtime.cluster_id,
            params=runtime.state.current_model.params,
            sample_count=sum(r.sample_count for r in contributing),
            local_loss=report.fedavg_loss if report.fedavg_loss is not None else 0.0,
            reported_attack_index=cluster_a,
        )
        outcome = central.submit_request(runtime.cluster_id, update, cluster_a, tick)
        if not outcome:
            logger.debug(
                "The central server rejected %s at tick %d: %s.",
                runtime.cluster_id,
                tick,
                outcome.reason.value if outcome.reason else "unknown",
            )

    def _central_round(self, tick: int) -> None:
        central = self.central
        if central is None or len(central.queue) == 0:
            return
        half = math.ceil(central.member_count / 2)
        if (
            len(central.queue) < half
            and tick - self.last_central_round < self.config.central.round_interval
        ):
            return
        model, report = central.central_update_round(tick)
        self.last_central_round = tick
        distribute_model(central, [runtime.state for runtime in self.clusters])
        self._record(report, central, self._evaluate(model, self.config.cluster_ids))

    def step(self, tick: int) -> None:
        for server in self.servers:
            server.lift_suspensions(tick)
        self._admit(tick)
        self._traffic(tick)
        self._train(tick)
        self._proxy_rounds(tick)
        self._central_round(tick)

    def run(self) -> SimMetrics:
        logger.info(
            "Simulating %d ticks over %d clusters (seed %d).",
            self.config.duration,
            len(self.clusters),
            self.config.seed,
        )
        for tick in range(NETWORK_CREATED_AT + 1, self.config.duration + 1):
            self.step(tick)
            if self.on_tick is not None:
                self.on_tick(tick)
        summary = self._summary()
        logger.info(
            "Finished: %d proxy rounds, %d central rounds, %d traffic events.",
            summary.proxy_rounds,
            summary.central_rounds,
            summary.traffic_events,
        )
        return SimMetrics(
            config=self.config,
            records=self.records,
            summary=summary,
            initial_model=self.initial_model,
            clusters={runtime.cluster_id: runtime.state for runtime in self.clusters},
            central=self.central,
            nodes={
                node.node_id: node
                for runtime in self.clusters
                for node in runtime.nodes
            },
            eval_sets=self.eval_sets,
        )

    def _summary(self) -> SummaryRecord:
        nodes = [node for runtime in self.clusters for node in runtime.nodes]
        trainings = [record for node in nodes for record in node.history]
        reputation_events = sorted(
            (event for server in self.servers for event in server.reputation_events),
            key=lambda e: (
                e.tick,
                0 if e.tier is Tier.PROXY else 1,
                e.server_id,
                e.source_id,
            ),
        )
        cluster_ids = self.config.cluster_ids
        return SummaryRecord(
            ticks=self.config.duration,
            proxy_rounds=sum(r.report.tier is Tier.PROXY for r in self.records),
            central_rounds=sum(r.report.tier is Tier.CENTRAL for r in self.records),
            traffic_events=self.traffic_events,
            malicious_events=self.malicious_events,
            local_trainings=len(trainings),
            rejected_submissions=sum(not record.outcome for record in trainings),
            reputation_events=reputation_events,
            attack_indices={node.node_id: node.attack_index for node in nodes},
            final_evaluations={
                runtime.cluster_id: evaluate_model(
                    runtime.state.current_model,
                    self.eval_sets[runtime.cluster_id],
                    self.config.evaluation.threshold,
                )
                for runtime in self.clusters
            },
            central_evaluations=(
                self._evaluate(self.central.current_model, cluster_ids)
                if self.central is not None
                else {}
            ),
            cluster_model_hashes={
                runtime.cluster_id: runtime.state.current_model.model_hash
                for runtime in self.clusters
            },
            central_model_hash=(
                self.central.current_model.model_hash
                if self.central is not None
                else None
            ),
        )


def run_simulation(
    config: SimConfig,
    *,
    on_record: Callable[[RoundRecord], None] | None = None,
    on_tick: Callable[[int], None] | None = None,
) -> SimMetrics:
    """Run a scenario end to end.

    `on_record` sees each round record as soon as it exists, `on_tick` each finished tick.
    """
    return Simulation(config, on_record=on_record, on_tick=on_tick).run()
