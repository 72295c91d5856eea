"""Structured records written to the metrics stream, one per line."""

from __future__ import annotations

from enum import Enum
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter


class Tier(str, Enum):
    PROXY = "proxy"
    CENTRAL = "central"


class RecordModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RequestSummary(RecordModel):
    source_id: str
    priority: float
    reported_a: int
    submitted_at: int
    sample_count: int
    impact: float | None = Field(
        None,
        description="Impact this request had in aggregation: 0 when its zero priority "
        "excluded it, unset when it was discarded.",
    )


class RoundReport(RecordModel):
    tier: Tier
    server_id: str
    round_index: int
    tick: int
    noop: bool = False
    intake_limit: int = 0
    accepted: list[RequestSummary] = Field(default_factory=list)
    discarded: list[RequestSummary] = Field(default_factory=list)
    impacts: list[float] = Field(default_factory=list)
    zero_impact_ids: list[str] = Field(default_factory=list)
    uniform_fallback: bool = False
    theta_a: float
    fedavg_loss: float | None = None
    fgan_loss: float | None = None
    model_hash: str

    @property
    def accepted_ids(self) -> list[str]:
        return [r.source_id for r in self.accepted]

    @property
    def discarded_ids(self) -> list[str]:
        return [r.source_id for r in self.discarded]


class ReputationEventKind(str, Enum):
    BLACKLISTED = "blacklisted"
    REINSTATED = "reinstated"


class ReputationEvent(RecordModel):
    tick: int
    tier: Tier
    server_id: str
    source_id: str
    kind: ReputationEventKind
    suspended_until: int | None = None


class AttackEvaluation(RecordModel):
    attack_type: str
    accuracy: float = Field(ge=0.0, le=1.0)
    auc: float = Field(ge=0.0, le=1.0)
    false_positive_rate: float = Field(ge=0.0, le=1.0)
    genuine_count: int
    attack_count: int


class RoundRecord(RecordModel):
    kind: Literal["round"] = "round"
    report: RoundReport
    evaluations: dict[str, list[AttackEvaluation]] = Field(default_factory=dict)
    queue_depths: dict[str, int] = Field(default_factory=dict)
    reputation_events: list[ReputationEvent] = Field(default_factory=list)

    @property
    def order_key(self) -> tuple[int, int]:
        return (self.report.tick, 0 if self.report.tier is Tier.PROXY else 1)


class SummaryRecord(RecordModel):
    kind: Literal["summary"] = "summary"
    ticks: int
    proxy_rounds: int
    central_rounds: int
    traffic_events: int
    malicious_events: int
    local_trainings: int
    rejected_submissions: int
    reputation_events: list[ReputationEvent] = Field(default_factory=list)
    attack_indices: dict[str, int] = Field(default_factory=dict)
    final_evaluations: dict[str, list[AttackEvaluation]] = Field(default_factory=dict)
    central_evaluations: dict[str, list[AttackEvaluation]] = Field(default_factory=dict)
    cluster_model_hashes: dict[str, str] = Field(default_factory=dict)
    central_model_hash: str | None = None


MetricsLine = Annotated[Union[RoundRecord, SummaryRecord], Field(discriminator="kind")]
metrics_line_adapter: TypeAdapter[RoundRecord | SummaryRecord] = TypeAdapter(
    MetricsLine
)
