from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

from fedgan_ids.coordination.coordinator import Coordinator
from fedgan_ids.gan.model import GanModel
from fedgan_ids.models.records import RoundReport, Tier


@dataclass
class ClusterState(Coordinator):
    """The proxy server of one training cluster; its members are nodes."""

    tier: ClassVar[Tier] = Tier.PROXY

    def model_update_round(self, now: int) -> tuple[GanModel, RoundReport]:
        return self._run_round(now)
