"""Detection quality of a model on held-out genuine and attack traffic.

AUC is the Mann-Whitney rank statistic over anomaly scores with malicious as the positive
class: the probability that a random attack sample outscores a random genuine one, ties
counting one half.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from fedgan_ids.constants import DEFAULT_THRESHOLD
from fedgan_ids.errors import ContractViolation
from fedgan_ids.gan.mlp import FloatArray
from fedgan_ids.gan.model import Batch, GanModel, Label, anomaly_scores
from fedgan_ids.models.config import SimConfig
from fedgan_ids.models.records import AttackEvaluation
from fedgan_ids.simulation.traffic import AttackProfile, attack_type_from_config

ALL_ATTACKS = "all"


@dataclass(frozen=True)
class EvalSet:
    attack_type: str
    genuine: FloatArray = field(repr=False)
    attack: FloatArray = field(repr=False)
    event_ids: frozenset[str] = field(default_factory=frozenset, repr=False)


def average_ranks(values: npt.ArrayLike) -> FloatArray:
    """1-based ranks, tied values sharing the mean of their positions."""
    data = np.asarray(values, dtype=np.float64)
    order = np.argsort(data, kind="mergesort")
    ordered = data[order]
    starts = np.concatenate(([0], np.flatnonzero(np.diff(ordered)) + 1))
    ends = np.concatenate((starts[1:], [data.shape[0]]))
    ranks = np.empty(data.shape[0], dtype=np.float64)
    ranks[order] = np.repeat((starts + ends + 1) / 2.0, ends - starts)
    return ranks


def rank_auc(genuine_scores: npt.ArrayLike, attack_scores: npt.ArrayLike) -> float:
    negatives = np.asarray(genuine_scores, dtype=np.float64).ravel()
    positives = np.asarray(attack_scores, dtype=np.float64).ravel()
    if negatives.shape[0] == 0 or positives.shape[0] == 0:
        raise ContractViolation("AUC needs at least one genuine and one attack score.")
    ranks = average_ranks(np.concatenate((positives, negatives)))
    n_pos = positives.shape[0]
    n_neg = negatives.shape[0]
    rank_sum = float(np.sum(ranks[:n_pos]))
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _evaluate_scores(
    attack_type: str,
    genuine_scores: FloatArray,
    attack_scores: FloatArray,
    threshold: float,
) -> AttackEvaluation:
    false_alarms = int(np.count_nonzero(genuine_scores >= threshold))
    detections = int(np.count_nonzero(attack_scores >= threshold))
    n_genuine = genuine_scores.shape[0]
    n_attack = attack_scores.shape[0]
    return AttackEvaluation(
        attack_type=attack_type,
        accuracy=(n_genuine - false_alarms + detections) / (n_genuine + n_attack),
        auc=rank_auc(genuine_scores, attack_scores),
        false_positive_rate=false_alarms / n_genuine,
        genuine_count=n_genuine,
        attack_count=n_attack,
    )


def evaluate_model(
    model: GanModel,
    eval_sets: Sequence[EvalSet],
    threshold: float = DEFAULT_THRESHOLD,
) -> list[AttackEvaluation]:
    """Accuracy at `threshold`, AUC and false-positive rate for each attack type."""
    results = []
    for eval_set in eval_sets:
        if eval_set.genuine.shape[0] == 0 or eval_set.attack.shape[0] == 0:
            raise ContractViolation(
                f"The evaluation set for {eval_set.attack_type!r} is empty."
            )
        results.append(
            _evaluate_scores(
                eval_set.attack_type,
                anomaly_scores(model, eval_set.genuine),
                anomaly_scores(model, eval_set.attack),
                threshold,
            )
        )
    return results


def evaluate_batch(
    model: GanModel,
    batch: Batch,
    threshold: float = DEFAULT_THRESHOLD,
    attack_type: str = ALL_ATTACKS,
) -> AttackEvaluation:
    """Evaluate on a labeled batch, every malicious row counting as `attack_type`."""
    genuine = batch.select(Label.GENUINE)
    attack = batch.select(Label.MALICIOUS)
    if genuine.shape[0] == 0 or attack.shape[0] == 0:
        raise ContractViolation(
            "Evaluation data needs both genuine and malicious rows."
        )
    return _evaluate_scores(
        attack_type,
        anomaly_scores(model, genuine),
        anomaly_scores(model, attack),
        threshold,
    )


def build_eval_sets(
    config: SimConfig, seed_sequence: np.random.SeedSequence
) -> Mapping[str, list[EvalSet]]:
    """Held-out sets per cluster, one per attack type anywhere in the scenario.

    Each cluster's sets share one draw of its genuine traffic. Attack samples follow the
    attack's shift and spread applied to that cluster's genuine distribution, so a cluster is
    also tested on attacks it never sees in training.
    """
    n = config.evaluation.samples_per_class
    attack_types = config.attack_types()
    children = seed_sequence.spawn(len(config.clusters))
    eval_sets: dict[str, list[EvalSet]] = {}
    for cluster_id, cluster, child in zip(
        config.cluster_ids, config.clusters, children
    ):
        rng = np.random.default_rng(child)
        profile = AttackProfile.from_config(cluster.attack_profile, config.feature_dim)
        genuine = profile.sample_genuine(rng, n)
        genuine_ids = {f"eval:{cluster_id}:genuine:{k}" for k in range(n)}
        sets = []
        for name, attack_config in attack_types.items():
            attack = attack_type_from_config(
                attack_config, profile.genuine_mean, profile.genuine_std
            )
            sets.append(
                EvalSet(
                    attack_type=name,
                    genuine=genuine,
                    attack=attack.sample(rng, n),
                    event_ids=frozenset(genuine_ids).union(
                        f"eval:{cluster_id}:{name}:{k}" for k in range(n)
                    ),
                )
            )
        eval_sets[cluster_id] = sets
    return eval_sets
