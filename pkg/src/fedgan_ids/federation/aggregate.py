"""Parameter aggregation across nodes or clusters.

The per-node loss F_k(w) is the mean per-sample discriminator cross-entropy on the node's
data. Server-side aggregation applies the FedAvg weights n_k / n, optionally multiplied by a
per-update impact h_k, coordinate-wise to the parameter vectors of both networks. Weights are
renormalized to sum to one, so the result is always a convex combination of the inputs.
"""

from __future__ import annotations

import math
import sys
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from fedgan_ids.errors import AggregationError, ContractViolation
from fedgan_ids.gan.mlp import FloatArray, ParamVector, forward
from fedgan_ids.gan.model import Batch, GanModel, Label, ParamPair

if sys.version_info >= (3, 11):
    from typing import Self
else:
    from typing_extensions import Self


@dataclass(frozen=True)
class NodeUpdate:
    """A model update from a node, or from a proxy server on behalf of its cluster."""

    source_id: str
    params: ParamPair
    sample_count: int
    local_loss: float
    reported_attack_index: int = 0

    def __post_init__(self) -> None:
        if self.sample_count < 1:
            raise ContractViolation(
                f"Update from {self.source_id} has sample count {self.sample_count}."
            )
        if self.reported_attack_index < 0:
            raise ContractViolation(
                f"Update from {self.source_id} reports a negative attack index."
            )
        if not math.isfinite(self.local_loss):
            raise ContractViolation(
                f"Update from {self.source_id} reports a non-finite loss."
            )


@dataclass(frozen=True)
class ImpactVector:
    impacts: tuple[float, ...]

    def __post_init__(self) -> None:
        impacts = tuple(float(h) for h in self.impacts)
        if not impacts:
            raise AggregationError("An impact vector needs at least one entry.")
        if any(not (math.isfinite(h) and h > 0.0) for h in impacts):
            raise AggregationError(f"Impacts must be positive and finite: {impacts}")
        object.__setattr__(self, "impacts", impacts)

    def __len__(self) -> int:
        return len(self.impacts)

    @classmethod
    def uniform(cls, size: int) -> Self:
        return cls(impacts=(1.0,) * size)


def per_sample_losses(
    discriminator: ParamVector, dataset: Batch, *, semi_supervised: bool = False
) -> FloatArray:
    """f_i(w) for every sample that contributes to the node's loss.

    Genuine samples contribute -log D(x). Malicious samples contribute -log(1 - D(x)) in
    semi-supervised mode and are left out otherwise.
    """
    scores = forward(discriminator.spec, discriminator, dataset.samples)[:, 0]
    malicious = dataset.label_array()
    losses = np.where(malicious, -np.log1p(-scores), -np.log(scores))
    return losses if semi_supervised else losses[~malicious]


def local_loss(
    w: ParamPair | GanModel, dataset: Batch, *, semi_supervised: bool = False
) -> float:
    """F_k(w) = (1 / n_k) * sum of f_i(w) over the node's dataset."""
    params = w.params if isinstance(w, GanModel) else w
    losses = per_sample_losses(
        params.discriminator, dataset, semi_supervised=semi_supervised
    )
    if losses.shape[0] == 0:
        raise ContractViolation(
            f"No {Label.GENUINE.value} samples to evaluate the local loss on."
        )
    return float(np.mean(losses))


def _check_updates(updates: Sequence[NodeUpdate]) -> None:
    if not updates:
        raise AggregationError("Nothing to aggregate: the update list is empty.")
    first = updates[0].params
    for update in updates[1:]:
        for part, reference in zip(update.params, first):
            if part.spec != reference.spec:
                raise AggregationError(
                    f"Update from {update.source_id} has {len(part)} parameters for "
                    f"layers {part.spec.layer_sizes}; expected {len(reference)} for "
                    f"layers {reference.spec.layer_sizes}."
                )


def _sample_fractions(updates: Sequence[NodeUpdate]) -> FloatArray:
    counts = np.array([u.sample_count for u in updates], dtype=np.float64)
    return counts / counts.sum()


def aggregation_weights(
    updates: Sequence[NodeUpdate], impacts: ImpactVector
) -> FloatArray:
    """(n_k / n) * h_k, renormalized to sum to one.

    Uniform impacts cancel under the normalization and are replaced by ones, so that
    uniform-impact aggregation is bit-identical to FedAvg.
    """
    if len(impacts) != len(updates):
        raise AggregationError(
            f"{len(impacts)} impacts given for {len(updates)} updates."
        )
    h = np.array(impacts.impacts, dtype=np.float64)
    if np.all(h == h[0]):
        h = np.ones_like(h)
    raw = _sample_fractions(updates) * h
    return raw / raw.sum()


def _weighted_average(
    updates: Sequence[NodeUpdate], weights: npt.NDArray[np.float64]
) -> ParamPair:
    averaged = []
    for index, reference in enumerate(updates[0].params):
        stacked = np.stack([u.params[index].values for u in updates])
        averaged.append(ParamVector(spec=reference.spec, values=weights @ stacked))
    return ParamPair(*averaged)


def aggregate_fgan(updates: Sequence[NodeUpdate], impacts: ImpactVector) -> ParamPair:
    """Impact-weighted federated average of generator and discriminator parameters."""
    _check_updates(updates)
    return _weighted_average(updates, aggregation_weights(updates, impacts))


def aggregate_fedavg(updates: Sequence[NodeUpdate]) -> ParamPair:
    """Sample-count-weighted federated average (all impacts equal)."""
    _check_updates(updates)
    return aggregate_fgan(updates, ImpactVector.uniform(len(updates)))


def fedavg_loss(updates: Sequence[NodeUpdate]) -> float:
    """f(w) = sum of (n_k / n) * F_k(w) over the reported local losses."""
    _check_updates(updates)
    losses = np.array([u.local_loss for u in updates], dtype=np.float64)
    return float(_sample_fractions(updates) @ losses)


def fgan_loss(updates: Sequence[NodeUpdate], impacts: ImpactVector) -> float:
    """f_FGAN(w) = sum of (n_k / n) * h_k * F_k(w), without renormalization."""
    _check_updates(updates)
    if len(impacts) != len(updates):
        raise AggregationError(
            f"{len(impacts)} impacts given for {len(updates)} updates."
        )
    losses = np.array([u.local_loss for u in updates], dtype=np.float64)
    h = np.array(impacts.impacts, dtype=np.float64)
    return float((_sample_fractions(updates) * h) @ losses)
