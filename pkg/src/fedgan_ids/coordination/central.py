from __future__ import annotations

import logging
from collections.abc import Iterable
from dataclasses import dataclass
from typing import ClassVar

from fedgan_ids.coordination.coordinator import Coordinator
from fedgan_ids.coordination.priority import compute_cluster_priority
from fedgan_ids.coordination.proxy import ClusterState
from fedgan_ids.errors import ContractViolation
from fedgan_ids.gan.model import GanModel
from fedgan_ids.models.records import RoundReport, Tier

logger = logging.getLogger(__name__)


@dataclass
class CentralState(Coordinator):
    """The central server; its members are the clusters' proxy servers.

    `created_at` is the network's creation time and each member's joining time is its
    cluster's creation time.
    """

    tier: ClassVar[Tier] = Tier.CENTRAL

    def priority_for(self, source_id: str, reported_A: int, now: int) -> float:
        return compute_cluster_priority(
            reported_A,
            self.member_count,
            now,
            self.members[source_id].joined_at,
            self.created_at,
            inverted_maturity=self.inverted_maturity,
        )

    def central_update_round(self, now: int) -> tuple[GanModel, RoundReport]:
        return self._run_round(now)


def distribute_model(central: CentralState, clusters: Iterable[ClusterState]) -> None:
    """Replace every cluster's model with the central model.

    Reputation state (blacklists, strike counters, joining times) is left untouched.
    """
    model = central.current_model
    for cluster in clusters:
        if (
            cluster.current_model.generator_spec != model.generator_spec
            or cluster.current_model.discriminator_spec != model.discriminator_spec
        ):
            raise ContractViolation(
                f"Cluster {cluster.server_id} runs a different network layout than the "
                "central server."
            )
        cluster.current_model = model
    logger.debug("Distributed central model %s.", model.model_hash)
