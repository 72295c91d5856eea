"""Scenario configuration.

Every field has a default, so an empty document describes the default scenario: two
clusters of five nodes over 2000 ticks, cluster A seeing only attack type `alpha` (mean
shift +4 on axis 0) and cluster B only `beta` (mean shift +4 on axis 1).
"""

from __future__ import annotations

import math
import statistics
import sys
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from fedgan_ids.constants import (
    DEFAULT_DISCRIMINATOR_HIDDEN,
    DEFAULT_GENERATOR_HIDDEN,
    DEFAULT_HIGH_ATTACK_FACTOR,
    DEFAULT_HIGH_ATTACK_MINIMUM,
    DEFAULT_NOISE_DIM,
    DEFAULT_THRESHOLD,
)
from fedgan_ids.errors import ConfigConflict

if sys.version_info >= (3, 11):
    from typing import Self
else:
    from typing_extensions import Self


class ConfigModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class GaussianConfig(ConfigModel):
    mean: list[float] | None = Field(
        None, description="Per-axis mean; all zeros when omitted."
    )
    std: float = Field(1.0, gt=0.0, description="Isotropic standard deviation.")


class AttackTypeConfig(ConfigModel):
    name: str = Field(..., min_length=1)
    mean_shift: dict[int, float] = Field(
        ..., description="Axis index -> shift added to the genuine mean."
    )
    covariance_scale: float = Field(
        1.0, gt=0.0, description="Multiplier on the genuine standard deviation."
    )
    rate: float = Field(
        0.25, ge=0.0, description="Expected events per tick per targeted node."
    )
    targets: list[int] | None = Field(
        None, description="Indices of targeted nodes; every node when omitted."
    )


class AttackProfileConfig(ConfigModel):
    genuine: GaussianConfig = GaussianConfig()
    genuine_rate: float = Field(
        1.0, ge=0.0, description="Expected genuine events per tick per node."
    )
    attack_types: list[AttackTypeConfig] = Field(default_factory=list)


class HighAttackPolicy(ConfigModel):
    """The threshold above which a reported attack index counts as suspiciously high.

    With `fixed`, the threshold never changes. Otherwise it starts at `minimum` and, after
    every round with requests, becomes `factor` times the mean reported attack index of
    that round's requests (or their median), but never less than `minimum`.
    """

    fixed: float | None = Field(None, gt=0.0)
    statistic: Literal["mean", "median"] = Field(
        "mean", description="How a round's reported attack indices are summarized."
    )
    factor: float = Field(DEFAULT_HIGH_ATTACK_FACTOR, gt=0.0)
    minimum: float = Field(DEFAULT_HIGH_ATTACK_MINIMUM, gt=0.0)

    def initial_threshold(self) -> float:
        return self.fixed if self.fixed is not None else self.minimum

    def next_threshold(self, current: float, reported: list[int]) -> float:
        if self.fixed is not None or not reported:
            return current
        summary = (
            float(statistics.median(reported))
            if self.statistic == "median"
            else math.fsum(reported) / len(reported)
        )
        return max(self.minimum, self.factor * summary)


class ClusterConfig(ConfigModel):
    name: str | None = Field(None, description="Cluster id; `cluster-<index>` if omitted.")
    node_count: int = Field(5, ge=1)
    join_schedule: list[int] | None = Field(
        None, description="Join tick per node; all nodes are founding members if omitted."
    )
    created_at: int = Field(0, ge=0)
    attack_profile: AttackProfileConfig = AttackProfileConfig()
    participation: float = Field(0.6, gt=0.0, le=1.0, alias="C")
    high_attack: HighAttackPolicy = Field(HighAttackPolicy(), alias="theta_A")
    suspension_ticks: int = Field(100, ge=1, alias="T_sus")
    round_interval: int = Field(50, ge=1, alias="delta_round")
    batch_trigger: int = Field(
        40, ge=1, description="New samples a node collects before it trains again."
    )
    label_noise: float = Field(0.0, ge=0.0, le=1.0)
    isolate_suspended: bool = Field(
        True, description="Stop delivering external traffic to suspended nodes."
    )
    inflated_reports: dict[int, int] = Field(
        default_factory=dict,
        description="Node index -> amount that node adds to the attack index it reports.",
    )
    inverted_maturity: bool = False

    @model_validator(mode="after")
    def validate_nodes(self) -> Self:
        if self.join_schedule is not None:
            if len(self.join_schedule) != self.node_count:
                raise ConfigConflict(
                    f"join_schedule has {len(self.join_schedule)} entries for "
                    f"{self.node_count} nodes",
                    location=("join_schedule",),
                )
            for index, tick in enumerate(self.join_schedule):
                if tick < self.created_at:
                    raise ConfigConflict(
                        "nodes cannot join before the cluster is created",
                        location=("join_schedule", index),
                    )
        for attack_index, attack in enumerate(self.attack_profile.attack_types):
            for target_index, target in enumerate(attack.targets or []):
                if not 0 <= target < self.node_count:
                    raise ConfigConflict(
                        f"attack {attack.name!r} targets node {target}, but the "
                        f"cluster has {self.node_count} nodes",
                        location=(
                            "attack_profile",
                            "attack_types",
                            attack_index,
                            "targets",
                            target_index,
                        ),
                    )
        for index, offset in self.inflated_reports.items():
            if not 0 <= index < self.node_count:
                raise ConfigConflict(
                    f"inflated_reports names node {index}, but the cluster has "
                    f"{self.node_count} nodes",
                    location=("inflated_reports", str(index)),
                )
            if offset < 0:
                raise ConfigConflict(
                    "inflated_reports offsets must be non-negative",
                    location=("inflated_reports", str(index)),
                )
        return self


class CentralConfig(ConfigModel):
    enabled: bool = Field(
        True, description="Run central rounds; disable for the no-federation ablation."
    )
    participation: float = Field(1.0, gt=0.0, le=1.0, alias="C_central")
    round_interval: int = Field(100, ge=1, alias="delta_central")
    high_attack: HighAttackPolicy = Field(
        HighAttackPolicy(minimum=100.0), alias="theta_A"
    )
    suspension_ticks: int = Field(200, ge=1, alias="T_sus")
    inverted_maturity: bool = False


class GanConfig(ConfigModel):
    noise_dim: int = Field(DEFAULT_NOISE_DIM, ge=1)
    discriminator_hidden: list[int] = Field(
        default_factory=lambda: list(DEFAULT_DISCRIMINATOR_HIDDEN)
    )
    generator_hidden: list[int] = Field(
        default_factory=lambda: list(DEFAULT_GENERATOR_HIDDEN)
    )
    learning_rate: float = Field(0.05, ge=0.0)
    batch_size: int = Field(32, ge=1)
    local_steps: int = Field(25, ge=1)
    semi_supervised: bool = True

    @model_validator(mode="after")
    def validate_widths(self) -> Self:
        for field in ("discriminator_hidden", "generator_hidden"):
            for index, width in enumerate(getattr(self, field)):
                if width < 1:
                    raise ConfigConflict(
                        "hidden layer widths must be positive", location=(field, index)
                    )
        return self


class EvaluationConfig(ConfigModel):
    samples_per_class: int = Field(
        400, ge=1, description="Held-out genuine and per-attack samples per cluster."
    )
    threshold: float = Field(DEFAULT_THRESHOLD, gt=0.0, lt=1.0)


def default_clusters() -> list[ClusterConfig]:
    return [
        ClusterConfig(
            name="A",
            attack_profile=AttackProfileConfig(
                attack_types=[AttackTypeConfig(name="alpha", mean_shift={0: 4.0})]
            ),
        ),
        ClusterConfig(
            name="B",
            attack_profile=AttackProfileConfig(
                attack_types=[AttackTypeConfig(name="beta", mean_shift={1: 4.0})]
            ),
        ),
    ]


class SimConfig(ConfigModel):
    seed: int = Field(0, ge=0)
    feature_dim: int = Field(4, ge=1)
    duration: int = Field(2000, ge=1, description="Number of simulation ticks.")
    clusters: list[ClusterConfig] = Field(default_factory=default_clusters, min_length=1)
    central: CentralConfig = CentralConfig()
    gan: GanConfig = GanConfig()
    evaluation: EvaluationConfig = EvaluationConfig()

    @property
    def cluster_ids(self) -> list[str]:
        return [
            cluster.name if cluster.name is not None else f"cluster-{index}"
            for index, cluster in enumerate(self.clusters)
        ]

    @model_validator(mode="after")
    def validate_scenario(self) -> Self:
        ids = self.cluster_ids
        for index, cluster_id in enumerate(ids):
            if cluster_id in ids[:index]:
                raise ConfigConflict(
                    f"cluster names must be unique, got {ids}",
                    location=("clusters", index, "name"),
                )
        for index, cluster in enumerate(self.clusters):
            profile = cluster.attack_profile
            mean = profile.genuine.mean
            if mean is not None and len(mean) != self.feature_dim:
                raise ConfigConflict(
                    f"genuine mean has {len(mean)} entries, feature_dim is "
                    f"{self.feature_dim}",
                    location=("clusters", index, "attack_profile", "genuine", "mean"),
                )
            for attack_index, attack in enumerate(profile.attack_types):
                for axis in attack.mean_shift:
                    if not 0 <= axis < self.feature_dim:
                        raise ConfigConflict(
                            f"attack {attack.name!r} shifts axis {axis}, outside "
                            f"feature_dim {self.feature_dim}",
                            location=(
                                "clusters",
                                index,
                                "attack_profile",
                                "attack_types",
                                attack_index,
                                "mean_shift",
                                str(axis),
                            ),
                        )
            for node, tick in enumerate(cluster.join_schedule or []):
                if tick > self.duration:
                    raise ConfigConflict(
                        "a node joins after the simulation ends",
                        location=("clusters", index, "join_schedule", node),
                    )
        return self

    def attack_types(self) -> dict[str, AttackTypeConfig]:
        """Every attack type in the scenario by name; the first definition wins."""
        types: dict[str, AttackTypeConfig] = {}
        for cluster in self.clusters:
            for attack in cluster.attack_profile.attack_types:
                types.setdefault(attack.name, attack)
        return types
