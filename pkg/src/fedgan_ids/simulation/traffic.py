"""Synthetic traffic.

Genuine traffic is an isotropic Gaussian around the cluster's genuine mean. Each attack type
shifts that mean along a few axes and scales the spread. Event counts per node per tick are
Poisson with the configured rates.
"""

from __future__ import annotations

import sys
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from fedgan_ids.gan.mlp import FloatArray
from fedgan_ids.gan.model import Label
from fedgan_ids.models.config import AttackProfileConfig, AttackTypeConfig

if sys.version_info >= (3, 11):
    from typing import Self
else:
    from typing_extensions import Self


@dataclass(frozen=True)
class AttackType:
    name: str
    mean: FloatArray = field(repr=False)
    std: float
    rate: float
    targets: frozenset[str] | None = None

    def targets_node(self, node_id: str) -> bool:
        return self.targets is None or node_id in self.targets

    def sample(self, rng: np.random.Generator, count: int) -> FloatArray:
        return rng.normal(self.mean, self.std, size=(count, self.mean.shape[0]))


def attack_type_from_config(
    attack: AttackTypeConfig,
    genuine_mean: FloatArray,
    genuine_std: float,
    targets: frozenset[str] | None = None,
) -> AttackType:
    mean = genuine_mean.copy()
    for axis, shift in attack.mean_shift.items():
        mean[axis] += shift
    return AttackType(
        name=attack.name,
        mean=mean,
        std=genuine_std * attack.covariance_scale,
        rate=attack.rate,
        targets=targets,
    )


@dataclass(frozen=True)
class AttackProfile:
    genuine_mean: FloatArray = field(repr=False)
    genuine_std: float
    genuine_rate: float
    attack_types: tuple[AttackType, ...] = ()

    @property
    def feature_dim(self) -> int:
        return int(self.genuine_mean.shape[0])

    def sample_genuine(self, rng: np.random.Generator, count: int) -> FloatArray:
        return rng.normal(
            self.genuine_mean, self.genuine_std, size=(count, self.feature_dim)
        )

    @classmethod
    def from_config(
        cls,
        config: AttackProfileConfig,
        feature_dim: int,
        node_ids: Sequence[str] = (),
    ) -> Self:
        genuine_mean = (
            np.array(config.genuine.mean, dtype=np.float64)
            if config.genuine.mean is not None
            else np.zeros(feature_dim)
        )
        attack_types = tuple(
            attack_type_from_config(
                attack,
                genuine_mean,
                config.genuine.std,
                targets=(
                    frozenset(node_ids[i] for i in attack.targets)
                    if attack.targets is not None
                    else None
                ),
            )
            for attack in config.attack_types
        )
        return cls(
            genuine_mean=genuine_mean,
            genuine_std=config.genuine.std,
            genuine_rate=config.genuine_rate,
            attack_types=attack_types,
        )


@dataclass(frozen=True)
class TrafficEvent:
    event_id: str
    tick: int
    node_id: str
    vector: FloatArray = field(repr=False)
    truth: Label
    attack_type: str | None = None


def generate_traffic(
    profile: AttackProfile,
    tick: int,
    rng: np.random.Generator,
    node_ids: Sequence[str],
) -> list[TrafficEvent]:
    """One tick of traffic for the given nodes, in node order, genuine events first."""
    events: list[TrafficEvent] = []
    for node_id in node_ids:
        batches: list[tuple[FloatArray, Label, str | None]] = [
            (
                profile.sample_genuine(rng, int(rng.poisson(profile.genuine_rate))),
                Label.GENUINE,
                None,
            )
        ]
        for attack in profile.attack_types:
            if attack.targets_node(node_id):
                count = int(rng.poisson(attack.rate))
                batches.append(
                    (attack.sample(rng, count), Label.MALICIOUS, attack.name)
                )
        for vectors, truth, attack_name in batches:
            for vector in vectors:
                events.append(
                    TrafficEvent(
                        event_id=f"{tick}:{node_id}:{len(events)}",
                        tick=tick,
                        node_id=node_id,
                        vector=vector,
                        truth=truth,
                        attack_type=attack_name,
                    )
                )
    return events


def events_by_node(events: Sequence[TrafficEvent]) -> Mapping[str, list[TrafficEvent]]:
    grouped: dict[str, list[TrafficEvent]] = {}
    for event in events:
        grouped.setdefault(event.node_id, []).append(event)
    return grouped
