from __future__ import annotations

import math

import numpy as np
import pytest

from fedgan_ids.errors import AggregationError, ContractViolation
from fedgan_ids.federation.aggregate import (
    ImpactVector,
    NodeUpdate,
    aggregate_fedavg,
    aggregate_fgan,
    aggregation_weights,
    fedavg_loss,
    fgan_loss,
    local_loss,
    per_sample_losses,
)
from fedgan_ids.gan.mlp import Activation, MlpSpec, ParamVector
from fedgan_ids.gan.model import Batch, GanModel, Label, ParamPair

PROPERTY_SPEC = MlpSpec((3, 1), output_activation=Activation.IDENTITY)


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def unit_discriminator() -> GanModel:
    """D(x) = sigmoid(x) on one feature."""
    model = GanModel.initialize(
        1, np.random.default_rng(0), noise_dim=1, discriminator_hidden=()
    )
    discriminator = ParamVector.from_layers(
        model.discriminator_spec, [([[1.0]], [0.0])]
    )
    return model.with_params(ParamPair(model.generator_params, discriminator))


def test_local_loss_of_one_sample():
    model = unit_discriminator()
    # -log D(x) = 0.7 when D(x) = exp(-0.7).
    data = Batch(np.array([[logit(math.exp(-0.7))]]))
    assert local_loss(model, data) == pytest.approx(0.7, abs=1e-12)


def test_local_loss_is_the_mean_over_samples():
    model = unit_discriminator()
    data = Batch(np.array([[logit(math.exp(-0.2))], [logit(math.exp(-0.4))]]))
    assert local_loss(model, data) == pytest.approx(0.3, abs=1e-12)
    assert local_loss(model.params, data) == local_loss(model, data)


def test_local_loss_matches_a_per_sample_loop(small_model: GanModel):
    rng = np.random.default_rng(5)
    samples = rng.normal(size=(12, 2))
    labels = tuple(
        Label.MALICIOUS if i % 3 == 0 else Label.GENUINE for i in range(12)
    )
    data = Batch(samples, labels)

    genuine_only = [
        -math.log(float(small_model.discriminate(x)[0]))
        for x, label in zip(samples, labels)
        if label is Label.GENUINE
    ]
    both = [
        -math.log(float(small_model.discriminate(x)[0]))
        if label is Label.GENUINE
        else -math.log(1.0 - float(small_model.discriminate(x)[0]))
        for x, label in zip(samples, labels)
    ]
    assert local_loss(small_model, data) == pytest.approx(
        sum(genuine_only) / len(genuine_only), abs=1e-12
    )
    assert local_loss(small_model, data, semi_supervised=True) == pytest.approx(
        sum(both) / len(both), abs=1e-12
    )
    assert per_sample_losses(small_model.discriminator_params, data).shape == (8,)


def test_local_loss_needs_genuine_samples(small_model: GanModel):
    data = Batch(np.ones((2, 2)), (Label.MALICIOUS, Label.MALICIOUS))
    with pytest.raises(ContractViolation):
        local_loss(small_model, data)


def test_fedavg_of_identical_params_is_those_params(make_update):
    updates = [
        make_update("a", 1.25, sample_count=3),
        make_update("b", 1.25, sample_count=9),
    ]
    result = aggregate_fedavg(updates)
    assert result == updates[0].params


def test_fedavg_weights_by_sample_count(make_update):
    result = aggregate_fedavg(
        [make_update("a", 2.0, sample_count=1), make_update("b", 4.0, sample_count=3)]
    )
    np.testing.assert_allclose(
        result.generator.values, [3.5, 3.5], rtol=0, atol=1e-12
    )
    np.testing.assert_allclose(
        result.discriminator.values, [3.5, 3.5], rtol=0, atol=1e-12
    )


def test_fgan_applies_normalized_impacts(make_update):
    updates = [make_update("a", 0.0), make_update("b", 1.0)]
    result = aggregate_fgan(updates, ImpactVector((1.0, 3.0)))
    np.testing.assert_allclose(
        result.discriminator.values, [0.75, 0.75], rtol=0, atol=1e-12
    )
    np.testing.assert_allclose(
        aggregation_weights(updates, ImpactVector((1.0, 3.0))), [0.25, 0.75]
    )


def test_losses_follow_the_weighting(make_update):
    updates = [
        make_update("a", sample_count=1, local_loss=2.0),
        make_update("b", sample_count=3, local_loss=4.0),
    ]
    assert fedavg_loss(updates) == pytest.approx(3.5)
    # (1/4 * 2) * 2.0 + (3/4 * 1) * 4.0, without renormalization.
    assert fgan_loss(updates, ImpactVector((2.0, 1.0))) == pytest.approx(4.0)


def test_aggregation_errors(make_update):
    with pytest.raises(AggregationError):
        aggregate_fedavg([])
    with pytest.raises(AggregationError):
        aggregate_fgan([make_update("a")], ImpactVector((1.0, 1.0)))
    with pytest.raises(AggregationError):
        aggregate_fedavg(
            [
                make_update("a"),
                make_update("b", [0.0, 0.0, 0.0, 0.0], spec=PROPERTY_SPEC),
            ]
        )
    for bad in [(0.0,), (-1.0,), (math.inf,), ()]:
        with pytest.raises(AggregationError):
            ImpactVector(bad)


def test_node_update_validation(make_update):
    with pytest.raises(ContractViolation):
        make_update("a", sample_count=0)
    with pytest.raises(ContractViolation):
        make_update("a", local_loss=math.nan)
    with pytest.raises(ContractViolation):
        make_update("a", reported_attack_index=-1)


def random_updates(rng: np.random.Generator) -> list[NodeUpdate]:
    updates = []
    for index in range(int(rng.integers(1, 7))):
        generator = ParamVector(
            spec=PROPERTY_SPEC, values=rng.normal(0.0, 3.0, PROPERTY_SPEC.param_count)
        )
        discriminator = ParamVector(
            spec=PROPERTY_SPEC, values=rng.normal(0.0, 3.0, PROPERTY_SPEC.param_count)
        )
        updates.append(
            NodeUpdate(
                source_id=f"node-{index}",
                params=ParamPair(generator, discriminator),
                sample_count=int(rng.integers(1, 200)),
                local_loss=float(rng.uniform(0.0, 5.0)),
            )
        )
    return updates


def stacked(pair: ParamPair) -> np.ndarray:
    return np.concatenate((pair.generator.values, pair.discriminator.values))


def test_aggregation_properties_on_random_inputs():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        updates = random_updates(rng)
        n = len(updates)
        impacts = ImpactVector(tuple(rng.uniform(0.01, 10.0, n)))
        result = stacked(aggregate_fgan(updates, impacts))

        uniform = stacked(aggregate_fgan(updates, ImpactVector((2.5,) * n)))
        np.testing.assert_allclose(
            uniform, stacked(aggregate_fedavg(updates)), rtol=0, atol=1e-12
        )

        scaled = ImpactVector(tuple(7.0 * h for h in impacts.impacts))
        np.testing.assert_allclose(
            stacked(aggregate_fgan(updates, scaled)), result, rtol=0, atol=1e-12
        )

        order = rng.permutation(n)
        permuted = stacked(
            aggregate_fgan(
                [updates[i] for i in order],
                ImpactVector(tuple(impacts.impacts[i] for i in order)),
            )
        )
        np.testing.assert_allclose(permuted, result, rtol=0, atol=1e-12)

        inputs = np.stack([stacked(u.params) for u in updates])
        assert (result >= inputs.min(axis=0) - 1e-12).all()
        assert (result <= inputs.max(axis=0) + 1e-12).all()

        weights = aggregation_weights(updates, impacts)
        assert weights.sum() == pytest.approx(1.0, abs=1e-12)

        single = updates[:1]
        lone_impact = ImpactVector((float(rng.uniform(0.1, 9.0)),))
        assert aggregate_fgan(single, lone_impact) == single[0].params
