from __future__ import annotations

import heapq
from collections.abc import Iterator
from dataclasses import dataclass, field

from fedgan_ids.errors import ContractViolation
from fedgan_ids.federation.aggregate import NodeUpdate


@dataclass(frozen=True)
class UpdateRequest:
    """A submitted update. `priority` is fixed when the request is enqueued."""

    source_id: str
    payload: NodeUpdate
    reported_A: int
    submitted_at: int
    priority: float

    @property
    def sort_key(self) -> tuple[float, int, str]:
        # Highest priority first, then earliest submission, then source id.
        return (-self.priority, self.submitted_at, self.source_id)


@dataclass
class UpdateQueue:
    """Priority queue holding at most one request per source."""

    _heap: list[tuple[tuple[float, int, str], UpdateRequest]] = field(
        default_factory=list
    )
    _sources: set[str] = field(default_factory=set)

    def __len__(self) -> int:
        return len(self._heap)

    def __contains__(self, source_id: object) -> bool:
        return source_id in self._sources

    def __iter__(self) -> Iterator[UpdateRequest]:
        """Requests in extraction order, without removing them."""
        return (request for _, request in sorted(self._heap, key=lambda e: e[0]))

    def push(self, request: UpdateRequest) -> None:
        if request.source_id in self._sources:
            raise ContractViolation(
                f"{request.source_id} already has a request in the queue."
            )
        heapq.heappush(self._heap, (request.sort_key, request))
        self._sources.add(request.source_id)

    def extract_top(self) -> UpdateRequest:
        _, request = heapq.heappop(self._heap)
        self._sources.discard(request.source_id)
        return request

    def discard(self, source_id: str) -> UpdateRequest | None:
        """Remove the pending request of `source_id`, if any."""
        if source_id not in self._sources:
            return None
        [entry] = [e for e in self._heap if e[1].source_id == source_id]
        self._heap.remove(entry)
        heapq.heapify(self._heap)
        self._sources.discard(source_id)
        return entry[1]

    def empty_queue(self) -> list[UpdateRequest]:
        """Remove and return every remaining request, in priority order."""
        remaining = list(self)
        self._heap.clear()
        self._sources.clear()
        return remaining
