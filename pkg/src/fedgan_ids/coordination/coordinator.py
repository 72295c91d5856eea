"""Request intake, reputation and aggregation rounds shared by proxy and central servers.

A coordinator owns a priority queue of update requests, at most one per source. A round
takes the top floor(C * N) requests, discards the rest, and replaces the current model with
the impact-weighted average of the taken requests, using their enqueue-time priorities as
impacts. A source that reports an attack index above the threshold for three consecutive
requests is suspended for `suspension_ticks` and rejoins with its joining time reset to the
end of the suspension.
"""

from __future__ import annotations

import logging
import math
import sys
from dataclasses import dataclass, field
from enum import Enum
from typing import ClassVar

from fedgan_ids.constants import BLACKLIST_STRIKES
from fedgan_ids.coordination.priority import compute_priority
from fedgan_ids.coordination.queue import UpdateQueue, UpdateRequest
from fedgan_ids.errors import ContractViolation
from fedgan_ids.federation.aggregate import (
    ImpactVector,
    NodeUpdate,
    aggregate_fgan,
    fedavg_loss,
    fgan_loss,
)
from fedgan_ids.gan.model import GanModel
from fedgan_ids.models.config import HighAttackPolicy
from fedgan_ids.models.records import (
    ReputationEvent,
    ReputationEventKind,
    RequestSummary,
    RoundReport,
    Tier,
)

if sys.version_info >= (3, 11):
    from typing import Self
else:
    from typing_extensions import Self

logger = logging.getLogger(__name__)


class RejectReason(str, Enum):
    ALREADY_HAS_PENDING_REQUEST = "already_has_pending_request"
    BLACKLISTED = "blacklisted"
    UNKNOWN_MEMBER = "unknown_member"


@dataclass(frozen=True)
class SubmissionOutcome:
    source_id: str
    accepted: bool
    reason: RejectReason | None = None
    suspended_until: int | None = None
    priority: float | None = None

    def __bool__(self) -> bool:
        return self.accepted

    @classmethod
    def accept(cls, source_id: str, priority: float) -> Self:
        return cls(source_id=source_id, accepted=True, priority=priority)

    @classmethod
    def reject(
        cls, source_id: str, reason: RejectReason, suspended_until: int | None = None
    ) -> Self:
        return cls(
            source_id=source_id,
            accepted=False,
            reason=reason,
            suspended_until=suspended_until,
        )


@dataclass
class MemberRecord:
    joined_at: int
    consecutive_high_A: int = 0


def intake_limit(participation: float, member_count: int) -> int:
    """floor(C * N), robust to binary rounding of C (e.g. 0.29 * 100)."""
    return math.floor(round(participation * member_count, 9))


@dataclass
class Coordinator:
    tier: ClassVar[Tier]

    server_id: str
    created_at: int
    participation: float
    suspension_ticks: int
    current_model: GanModel
    high_attack: HighAttackPolicy = field(default_factory=HighAttackPolicy)
    inverted_maturity: bool = False

    members: dict[str, MemberRecord] = field(default_factory=dict)
    queue: UpdateQueue = field(default_factory=UpdateQueue)
    blacklist: dict[str, int] = field(default_factory=dict)
    theta_a: float = field(init=False)
    round_index: int = field(default=0, init=False)
    reputation_events: list[ReputationEvent] = field(default_factory=list, init=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.participation <= 1.0:
            raise ContractViolation(
                f"Participation fraction must be in (0, 1], got {self.participation}."
            )
        if self.suspension_ticks < 1:
            raise ContractViolation("The suspension time must be positive.")
        self.theta_a = self.high_attack.initial_threshold()

    @property
    def member_count(self) -> int:
        return len(self.members)

    def add_member(self, source_id: str, joined_at: int) -> None:
        if source_id in self.members:
            raise ContractViolation(f"{source_id} is already a member of {self.server_id}.")
        if joined_at < self.created_at:
            raise ContractViolation(
                f"{source_id} cannot join {self.server_id} at {joined_at}, before its "
                f"creation at {self.created_at}."
            )
        self.members[source_id] = MemberRecord(joined_at=joined_at)

    def has_pending(self, source_id: str) -> bool:
        return source_id in self.queue

    def is_blacklisted(self, source_id: str) -> bool:
        return source_id in self.blacklist

    def priority_for(self, source_id: str, reported_A: int, now: int) -> float:
        return compute_priority(
            reported_A,
            self.member_count,
            now,
            self.members[source_id].joined_at,
            self.created_at,
            inverted_maturity=self.inverted_maturity,
        )

    def submit_request(
        self, source_id: str, payload: NodeUpdate, reported_A: int, now: int
    ) -> SubmissionOutcome:
        member = self.members.get(source_id)
        if member is None:
            return SubmissionOutcome.reject(source_id, RejectReason.UNKNOWN_MEMBER)
        if source_id in self.blacklist:
            return SubmissionOutcome.reject(
                source_id,
                RejectReason.BLACKLISTED,
                suspended_until=self.blacklist[source_id],
            )
        if source_id in self.queue:
            return SubmissionOutcome.reject(
                source_id, RejectReason.ALREADY_HAS_PENDING_REQUEST
            )

        if reported_A > self.theta_a:
            member.consecutive_high_A += 1
        else:
            member.consecutive_high_A = 0
        if member.consecutive_high_A >= BLACKLIST_STRIKES:
            return self._suspend(source_id, member, now)

        priority = self.priority_for(source_id, reported_A, now)
        self.queue.push(
            UpdateRequest(
                source_id=source_id,
                payload=payload,
                reported_A=reported_A,
                submitted_at=now,
                priority=priority,
            )
        )
        return SubmissionOutcome.accept(source_id, priority)

    def _suspend(
        self, source_id: str, member: MemberRecord, now: int
    ) -> SubmissionOutcome:
        until = now + self.suspension_ticks
        self.blacklist[source_id] = until
        self.queue.discard(source_id)
        member.consecutive_high_A = 0
        self.reputation_events.append(
            ReputationEvent(
                tick=now,
                tier=self.tier,
                server_id=self.server_id,
                source_id=source_id,
                kind=ReputationEventKind.BLACKLISTED,
                suspended_until=until,
            )
        )
        logger.warning(
            "%s blacklisted %s until tick %d after %d consecutive attack index "
            "reports above %.6g.",
            self.server_id,
            source_id,
            until,
            BLACKLIST_STRIKES,
            self.theta_a,
        )
        return SubmissionOutcome.reject(
            source_id, RejectReason.BLACKLISTED, suspended_until=until
        )

    def lift_suspensions(self, now: int) -> list[str]:
        """Reinstate sources whose suspension has ended, resetting their joining time."""
        reinstated = sorted(
            source_id for source_id, until in self.blacklist.items() if until <= now
        )
        for source_id in reinstated:
            until = self.blacklist.pop(source_id)
            self.members[source_id].joined_at = until
            self.reputation_events.append(
                ReputationEvent(
                    tick=now,
                    tier=self.tier,
                    server_id=self.server_id,
                    source_id=source_id,
                    kind=ReputationEventKind.REINSTATED,
                )
            )
            logger.info("%s reinstated %s at tick %d.", self.server_id, source_id, now)
        return reinstated

    def _run_round(self, now: int) -> tuple[GanModel, RoundReport]:
        self.round_index += 1
        pending = len(self.queue)
        if pending == 0:
            return self.current_model, RoundReport(
                tier=self.tier,
                server_id=self.server_id,
                round_index=self.round_index,
                tick=now,
                noop=True,
                theta_a=self.theta_a,
                model_hash=self.current_model.model_hash,
            )

        limit = intake_limit(self.participation, self.member_count)
        if limit == 0:
            logger.warning(
                "%s: floor(C * N) = floor(%g * %d) is 0; taking one request instead.",
                self.server_id,
                self.participation,
                self.member_count,
            )
            limit = 1
        taken = [self.queue.extract_top() for _ in range(min(limit, pending))]
        discarded = self.queue.empty_queue()

        contributing = [r for r in taken if r.priority > 0.0]
        uniform_fallback = not contributing
        if uniform_fallback:
            logger.warning(
                "%s round %d: every priority is zero; using uniform impacts.",
                self.server_id,
                self.round_index,
            )
            contributing = taken
            impacts = ImpactVector.uniform(len(taken))
        else:
            impacts = ImpactVector(tuple(r.priority for r in contributing))
        updates = [r.payload for r in contributing]

        new_model = self.current_model.with_params(aggregate_fgan(updates, impacts))
        theta_in_force = self.theta_a
        self.theta_a = self.high_attack.next_threshold(
            self.theta_a, [r.reported_A for r in (*taken, *discarded)]
        )
        self.current_model = new_model

        report = RoundReport(
            tier=self.tier,
            server_id=self.server_id,
            round_index=self.round_index,
            tick=now,
            intake_limit=limit,
            accepted=[
                _summarize(r, impact=1.0 if uniform_fallback else r.priority)
                for r in taken
            ],
            discarded=[_summarize(r) for r in discarded],
            impacts=list(impacts.impacts),
            zero_impact_ids=[
                r.source_id for r in taken if r.priority == 0.0 and not uniform_fallback
            ],
            uniform_fallback=uniform_fallback,
            theta_a=theta_in_force,
            fedavg_loss=fedavg_loss(updates),
            fgan_loss=fgan_loss(updates, impacts),
            model_hash=new_model.model_hash,
        )
        logger.debug(
            "%s round %d at tick %d: aggregated %s, discarded %s.",
            self.server_id,
            self.round_index,
            now,
            report.accepted_ids,
            report.discarded_ids,
        )
        return new_model, report


def _summarize(request: UpdateRequest, impact: float | None = None) -> RequestSummary:
    return RequestSummary(
        source_id=request.source_id,
        priority=request.priority,
        reported_a=request.reported_A,
        submitted_at=request.submitted_at,
        sample_count=request.payload.sample_count,
        impact=impact,
    )
