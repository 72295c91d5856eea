from __future__ import annotations

import logging
from collections.abc import Callable, Iterator, Sequence

import numpy as np
import pytest

from fedgan_ids.federation.aggregate import NodeUpdate
from fedgan_ids.gan.mlp import Activation, MlpSpec, ParamVector
from fedgan_ids.gan.model import GanModel, ParamPair
from fedgan_ids.models.config import (
    AttackProfileConfig,
    AttackTypeConfig,
    CentralConfig,
    ClusterConfig,
    EvaluationConfig,
    GanConfig,
    SimConfig,
)
from fedgan_ids.utils.logging import PACKAGE_LOGGER

# A two-parameter network: one weight and one bias.
SCALAR_SPEC = MlpSpec(
    layer_sizes=(1, 1),
    hidden_activation=Activation.RELU,
    output_activation=Activation.IDENTITY,
)

UpdateFactory = Callable[..., NodeUpdate]


@pytest.fixture(autouse=True)
def package_logger() -> Iterator[None]:
    """Undo CLI logging setup so that caplog sees package records."""
    yield
    logger = logging.getLogger(PACKAGE_LOGGER)
    logger.handlers.clear()
    logger.setLevel(logging.NOTSET)
    logger.propagate = True


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def small_model(rng: np.random.Generator) -> GanModel:
    return GanModel.initialize(
        2, rng, noise_dim=2, discriminator_hidden=(4,), generator_hidden=(4,)
    )


def constant_params(value: float, spec: MlpSpec = SCALAR_SPEC) -> ParamPair:
    vector = ParamVector(spec=spec, values=np.full(spec.param_count, value))
    return ParamPair(vector, vector)


@pytest.fixture
def make_update() -> UpdateFactory:
    def factory(
        source_id: str,
        value: float | Sequence[float] = 0.0,
        *,
        sample_count: int = 1,
        local_loss: float = 0.0,
        reported_attack_index: int = 0,
        spec: MlpSpec = SCALAR_SPEC,
    ) -> NodeUpdate:
        if isinstance(value, (int, float)):
            params = constant_params(float(value), spec)
        else:
            vector = ParamVector(spec=spec, values=np.asarray(value, dtype=np.float64))
            params = ParamPair(vector, vector)
        return NodeUpdate(
            source_id=source_id,
            params=params,
            sample_count=sample_count,
            local_loss=local_loss,
            reported_attack_index=reported_attack_index,
        )

    return factory


def _tiny_gan() -> GanConfig:
    return GanConfig(
        noise_dim=2,
        discriminator_hidden=[6],
        generator_hidden=[6],
        local_steps=3,
        batch_size=8,
    )


def _tiny_scenario(**overrides: object) -> SimConfig:
    """Two small clusters with disjoint attacks, short enough for unit tests."""
    settings: dict[str, object] = {
        "seed": 7,
        "feature_dim": 2,
        "duration": 60,
        "clusters": [
            ClusterConfig(
                name="A",
                node_count=3,
                batch_trigger=8,
                participation=0.6,
                round_interval=10,
                attack_profile=AttackProfileConfig(
                    attack_types=[
                        AttackTypeConfig(name="alpha", mean_shift={0: 4.0}, rate=0.3)
                    ]
                ),
            ),
            ClusterConfig(
                name="B",
                node_count=3,
                batch_trigger=8,
                participation=0.6,
                round_interval=10,
                attack_profile=AttackProfileConfig(
                    attack_types=[
                        AttackTypeConfig(name="beta", mean_shift={1: 4.0}, rate=0.3)
                    ]
                ),
            ),
        ],
        "central": CentralConfig(round_interval=20),
        "gan": _tiny_gan(),
        "evaluation": EvaluationConfig(samples_per_class=30),
    }
    settings.update(overrides)
    return SimConfig.model_validate(settings)


ScenarioFactory = Callable[..., SimConfig]


@pytest.fixture
def make_scenario() -> ScenarioFactory:
    return _tiny_scenario


@pytest.fixture
def scenario() -> SimConfig:
    return _tiny_scenario()
