"""GAN model, losses, training and anomaly scoring.

The discriminator D maps a traffic feature vector to the probability that it is genuine.
The generator G maps standard-normal noise to synthetic feature vectors. Training plays the
usual min-max game on V(G, D) = E[log D(x)] + E[log(1 - D(G(z)))], with the non-saturating
generator loss -E[log D(G(z))].
"""

from __future__ import annotations

import logging
import sys
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field

from fedgan_ids.constants import (
    DEFAULT_DISCRIMINATOR_HIDDEN,
    DEFAULT_GENERATOR_HIDDEN,
    DEFAULT_NOISE_DIM,
    DEFAULT_THRESHOLD,
)
from fedgan_ids.errors import ContractViolation, TrainingError
from fedgan_ids.gan.mlp import (
    Activation,
    FloatArray,
    MlpSpec,
    ParamVector,
    backward,
    forward,
    forward_with_cache,
    initialize_params,
)
from fedgan_ids.utils.hashing import content_hash

if sys.version_info >= (3, 11):
    from typing import Self
else:
    from typing_extensions import Self

logger = logging.getLogger(__name__)


class Label(str, Enum):
    GENUINE = "genuine"
    MALICIOUS = "malicious"

    def flipped(self) -> Label:
        return Label.MALICIOUS if self is Label.GENUINE else Label.GENUINE


class LossKind(str, Enum):
    DISCRIMINATOR = "discriminator"
    GENERATOR = "generator"


@dataclass(frozen=True, eq=False)
class Batch:
    """A non-empty set of equal-dimension feature vectors, optionally labeled.

    Unlabeled batches are treated as genuine traffic.
    """

    samples: FloatArray = field(repr=False)
    labels: tuple[Label, ...] | None = None

    def __post_init__(self) -> None:
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples.reshape(1, -1)
        if samples.ndim != 2 or samples.shape[0] == 0 or samples.shape[1] == 0:
            raise ContractViolation(
                f"A batch needs at least one non-empty sample, got shape {samples.shape}."
            )
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        if self.labels is not None:
            labels = tuple(Label(label) for label in self.labels)
            if len(labels) != samples.shape[0]:
                raise ContractViolation(
                    f"{len(labels)} labels given for {samples.shape[0]} samples."
                )
            object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    @property
    def dim(self) -> int:
        return int(self.samples.shape[1])

    def select(self, label: Label) -> FloatArray:
        """Samples carrying `label` (possibly none)."""
        if self.labels is None:
            return self.samples if label is Label.GENUINE else self.samples[:0]
        mask = np.fromiter(
            (lbl is label for lbl in self.labels), dtype=bool, count=len(self)
        )
        return self.samples[mask]

    def label_array(self) -> npt.NDArray[np.bool_]:
        """Boolean mask, True for malicious samples."""
        if self.labels is None:
            return np.zeros(len(self), dtype=bool)
        return np.array([lbl is Label.MALICIOUS for lbl in self.labels], dtype=bool)


class ParamPair(NamedTuple):
    generator: ParamVector
    discriminator: ParamVector


def default_discriminator_spec(
    feature_dim: int, hidden: Sequence[int] = DEFAULT_DISCRIMINATOR_HIDDEN
) -> MlpSpec:
    return MlpSpec(
        layer_sizes=(feature_dim, *hidden, 1),
        hidden_activation=Activation.RELU,
        output_activation=Activation.SIGMOID,
    )


def default_generator_spec(
    feature_dim: int,
    noise_dim: int = DEFAULT_NOISE_DIM,
    hidden: Sequence[int] = DEFAULT_GENERATOR_HIDDEN,
) -> MlpSpec:
    return MlpSpec(
        layer_sizes=(noise_dim, *hidden, feature_dim),
        hidden_activation=Activation.TANH,
        output_activation=Activation.IDENTITY,
    )


@dataclass(frozen=True, eq=False)
class GanModel:
    generator_spec: MlpSpec
    discriminator_spec: MlpSpec
    generator_params: ParamVector
    discriminator_params: ParamVector
    noise_dim: int

    def __post_init__(self) -> None:
        if self.generator_spec.input_dim != self.noise_dim:
            raise ContractViolation(
                f"Generator input {self.generator_spec.input_dim} does not match "
                f"noise dimension {self.noise_dim}."
            )
        if self.generator_spec.output_dim != self.discriminator_spec.input_dim:
            raise ContractViolation(
                f"Generator output {self.generator_spec.output_dim} does not match "
                f"discriminator input {self.discriminator_spec.input_dim}."
            )
        if (
            self.discriminator_spec.output_dim != 1
            or self.discriminator_spec.output_activation is not Activation.SIGMOID
        ):
            raise ContractViolation(
                "The discriminator must have a single sigmoid output."
            )
        if self.generator_params.spec != self.generator_spec:
            raise ContractViolation("Generator parameters do not match their spec.")
        if self.discriminator_params.spec != self.discriminator_spec:
            raise ContractViolation(
                "Discriminator parameters do not match their spec."
            )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GanModel):
            return NotImplemented
        return (
            self.noise_dim == other.noise_dim
            and self.generator_params == other.generator_params
            and self.discriminator_params == other.discriminator_params
        )

    __hash__ = None  # type: ignore[assignment]

    @classmethod
    def initialize(
        cls,
        feature_dim: int,
        rng: np.random.Generator,
        *,
        noise_dim: int = DEFAULT_NOISE_DIM,
        discriminator_hidden: Sequence[int] = DEFAULT_DISCRIMINATOR_HIDDEN,
        generator_hidden: Sequence[int] = DEFAULT_GENERATOR_HIDDEN,
    ) -> Self:
        generator_spec = default_generator_spec(
            feature_dim, noise_dim=noise_dim, hidden=generator_hidden
        )
        discriminator_spec = default_discriminator_spec(
            feature_dim, hidden=discriminator_hidden
        )
        return cls(
            generator_spec=generator_spec,
            discriminator_spec=discriminator_spec,
            generator_params=initialize_params(generator_spec, rng),
            discriminator_params=initialize_params(discriminator_spec, rng),
            noise_dim=noise_dim,
        )

    @property
    def feature_dim(self) -> int:
        return self.discriminator_spec.input_dim

    @property
    def params(self) -> ParamPair:
        return ParamPair(self.generator_params, self.discriminator_params)

    def with_params(self, params: ParamPair) -> GanModel:
        return GanModel(
            generator_spec=self.generator_spec,
            discriminator_spec=self.discriminator_spec,
            generator_params=params.generator,
            discriminator_params=params.discriminator,
            noise_dim=self.noise_dim,
        )

    @property
    def model_hash(self) -> str:
        return content_hash(
            self.generator_params.to_bytes(), self.discriminator_params.to_bytes()
        )

    def discriminate(self, samples: npt.ArrayLike) -> FloatArray:
        """D(x) for each row of `samples`."""
        return forward(
            self.discriminator_spec, self.discriminator_params, np.atleast_2d(samples)
        )[:, 0]

    def generate(self, noise: npt.ArrayLike) -> FloatArray:
        return forward(self.generator_spec, self.generator_params, np.atleast_2d(noise))


class TrainingHyperparameters(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    learning_rate: float = Field(0.05, ge=0.0, alias="lr")
    batch_size: int = Field(32, ge=1)
    steps: int = Field(25, ge=1)
    seed: int = Field(0, ge=0, alias="rng_seed")
    semi_supervised: bool = False


@dataclass(frozen=True)
class StepLoss:
    step: int
    discriminator_loss: float
    generator_loss: float


def _check_batch(model: GanModel, batch: Batch) -> None:
    if batch.dim != model.feature_dim:
        raise ContractViolation(
            f"Batch dimension {batch.dim} does not match discriminator input "
            f"{model.feature_dim}."
        )


def value_function(model: GanModel, real_batch: Batch, fake_batch: Batch) -> float:
    """Empirical V(G, D) on the given batches, with D clamped away from 0 and 1."""
    _check_batch(model, real_batch)
    _check_batch(model, fake_batch)
    real_scores = model.discriminate(real_batch.samples)
    fake_scores = model.discriminate(fake_batch.samples)
    return float(np.mean(np.log(real_scores)) + np.mean(np.log1p(-fake_scores)))


def discriminator_loss(model: GanModel, real_batch: Batch, fake_batch: Batch) -> float:
    return -value_function(model, real_batch, fake_batch)


def generator_loss(model: GanModel, fake_batch: Batch) -> float:
    _check_batch(model, fake_batch)
    return float(-np.mean(np.log(model.discriminate(fake_batch.samples))))


def generator_objective(model: GanModel, noise: npt.ArrayLike) -> float:
    """The generator loss on G(noise); the function `backprop` differentiates."""
    return generator_loss(model, Batch(model.generate(noise)))


def _check_noise(model: GanModel, noise: npt.ArrayLike) -> FloatArray:
    z = np.atleast_2d(np.asarray(noise, dtype=np.float64))
    if z.ndim != 2 or z.shape[1] != model.noise_dim or z.shape[0] == 0:
        raise ContractViolation(
            f"Noise of shape {np.shape(noise)} does not match noise dimension "
            f"{model.noise_dim}."
        )
    return z


def _discriminator_step(
    spec: MlpSpec, params: ParamVector, real: FloatArray, fake: FloatArray
) -> tuple[float, FloatArray]:
    cache = forward_with_cache(spec, params, np.vstack((real, fake)))
    scores = cache.output[:, 0]
    n_real = real.shape[0]
    n_fake = fake.shape[0]
    real_scores, fake_scores = scores[:n_real], scores[n_real:]
    loss = -(np.mean(np.log(real_scores)) + np.mean(np.log1p(-fake_scores)))
    output_grad = np.concatenate(
        (-1.0 / (n_real * real_scores), 1.0 / (n_fake * (1.0 - fake_scores)))
    )
    gradient, _ = backward(spec, params, cache, output_grad[:, None])
    return float(loss), gradient


def _generator_step(
    model: GanModel, noise: FloatArray
) -> tuple[float, FloatArray]:
    generator_cache = forward_with_cache(
        model.generator_spec, model.generator_params, noise
    )
    discriminator_cache = forward_with_cache(
        model.discriminator_spec, model.discriminator_params, generator_cache.output
    )
    scores = discriminator_cache.output[:, 0]
    loss = -np.mean(np.log(scores))
    output_grad = (-1.0 / (scores.shape[0] * scores))[:, None]
    _, sample_grad = backward(
        model.discriminator_spec,
        model.discriminator_params,
        discriminator_cache,
        output_grad,
    )
    gradient, _ = backward(
        model.generator_spec, model.generator_params, generator_cache, sample_grad
    )
    return float(loss), gradient


def backprop(
    model: GanModel,
    loss_kind: LossKind,
    *,
    real_batch: Batch | None = None,
    fake_batch: Batch | None = None,
    noise: npt.ArrayLike | None = None,
) -> ParamVector:
    """Exact gradient of one of the two GAN losses.

    The discriminator loss is differentiated with respect to the discriminator parameters
    and needs `real_batch` and `fake_batch`. The generator loss is differentiated with
    respect to the generator parameters only and needs `noise`.
    """
    match LossKind(loss_kind):
        case LossKind.DISCRIMINATOR:
            if real_batch is None or fake_batch is None:
                raise ContractViolation(
                    "The discriminator gradient needs a real and a fake batch."
                )
            _check_batch(model, real_batch)
            _check_batch(model, fake_batch)
            _, gradient = _discriminator_step(
                model.discriminator_spec,
                model.discriminator_params,
                real_batch.samples,
                fake_batch.samples,
            )
            return ParamVector(spec=model.discriminator_spec, values=gradient)
        case LossKind.GENERATOR:
            if noise is None:
                raise ContractViolation("The generator gradient needs a noise batch.")
            _, gradient = _generator_step(model, _check_noise(model, noise))
            return ParamVector(spec=model.generator_spec, values=gradient)
    raise NotImplementedError(f"Unsupported loss kind: {loss_kind}")


def train_round(
    model: GanModel, local_data: Batch, hyper: TrainingHyperparameters
) -> tuple[GanModel, list[StepLoss]]:
    """Alternate one discriminator and one generator SGD step, `hyper.steps` times.

    The real pool is the genuine-labeled part of `local_data`. In semi-supervised mode the
    malicious-labeled samples join the generated samples in the discriminator's fake pool.
    """
    _check_batch(model, local_data)
    genuine = local_data.select(Label.GENUINE)
    if genuine.shape[0] == 0:
        raise TrainingError("The node holds no genuine samples and cannot train.")
    malicious = (
        local_data.select(Label.MALICIOUS)
        if hyper.semi_supervised
        else local_data.samples[:0]
    )

    rng = np.random.default_rng(hyper.seed)
    lr = hyper.learning_rate
    size = hyper.batch_size
    trace: list[StepLoss] = []
    for step in range(hyper.steps):
        real = genuine[rng.integers(0, genuine.shape[0], size=size)]
        fake = model.generate(rng.standard_normal((size, model.noise_dim)))
        if malicious.shape[0]:
            fake = np.vstack(
                (fake, malicious[rng.integers(0, malicious.shape[0], size=size)])
            )
        d_loss, d_grad = _discriminator_step(
            model.discriminator_spec, model.discriminator_params, real, fake
        )
        model = model.with_params(
            ParamPair(
                model.generator_params,
                ParamVector(
                    spec=model.discriminator_spec,
                    values=model.discriminator_params.values - lr * d_grad,
                ),
            )
        )
        g_loss, g_grad = _generator_step(
            model, rng.standard_normal((size, model.noise_dim))
        )
        model = model.with_params(
            ParamPair(
                ParamVector(
                    spec=model.generator_spec,
                    values=model.generator_params.values - lr * g_grad,
                ),
                model.discriminator_params,
            )
        )
        trace.append(
            StepLoss(step=step, discriminator_loss=d_loss, generator_loss=g_loss)
        )
    logger.debug(
        "Trained %d steps on %d genuine / %d malicious samples, final D loss %.4f.",
        hyper.steps,
        genuine.shape[0],
        malicious.shape[0],
        trace[-1].discriminator_loss,
    )
    return model, trace


def anomaly_scores(model: GanModel, samples: npt.ArrayLike) -> FloatArray:
    return 1.0 - model.discriminate(samples)


def anomaly_score(model: GanModel, x: npt.ArrayLike) -> float:
    """1 - D(x): high when `x` looks unlike the genuine traffic the model learned."""
    vector = np.asarray(x, dtype=np.float64)
    if vector.ndim != 1:
        raise ContractViolation("anomaly_score takes a single feature vector.")
    return float(anomaly_scores(model, vector)[0])


def _check_threshold(threshold: float) -> None:
    if not 0.0 < threshold < 1.0:
        raise ContractViolation(f"Threshold must be in (0, 1), got {threshold}.")


def classify(
    model: GanModel, x: npt.ArrayLike, threshold: float = DEFAULT_THRESHOLD
) -> Label:
    """Malicious when the anomaly score reaches the threshold (ties alert)."""
    _check_threshold(threshold)
    return Label.MALICIOUS if anomaly_score(model, x) >= threshold else Label.GENUINE


def classify_batch(
    model: GanModel, samples: npt.ArrayLike, threshold: float = DEFAULT_THRESHOLD
) -> npt.NDArray[np.bool_]:
    """True where a row is classified malicious."""
    _check_threshold(threshold)
    return anomaly_scores(model, samples) >= threshold
