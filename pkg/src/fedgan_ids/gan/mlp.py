"""Multilayer perceptrons over flat parameter vectors.

Parameters are stored as one flat vector per network. The layout is derived from the
`MlpSpec`: for every layer, the weight matrix (fan_in x fan_out, row-major) followed by its
bias vector.
"""

from __future__ import annotations

import hashlib
import json
import struct
import sys
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any

import numpy as np
import numpy.typing as npt

from fedgan_ids.constants import (
    LOG_CLAMP_EPSILON,
    PARAM_VECTOR_COUNT_FORMAT,
    PARAM_VECTOR_VALUE_DTYPE,
    SPEC_HASH_SIZE,
)
from fedgan_ids.errors import (
    CheckpointError,
    ContractViolation,
    NumericalError,
    SpecMismatchError,
)

if sys.version_info >= (3, 11):
    from typing import Self
else:
    from typing_extensions import Self

FloatArray = npt.NDArray[np.float64]

_HEADER_SIZE = SPEC_HASH_SIZE + struct.calcsize(PARAM_VECTOR_COUNT_FORMAT)


class Activation(str, Enum):
    RELU = "relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    IDENTITY = "identity"


HIDDEN_ACTIVATIONS = frozenset({Activation.RELU, Activation.TANH})
OUTPUT_ACTIVATIONS = frozenset({Activation.SIGMOID, Activation.IDENTITY})


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple[int, ...]
    hidden_activation: Activation = Activation.RELU
    output_activation: Activation = Activation.SIGMOID

    def __post_init__(self) -> None:
        sizes = tuple(int(size) for size in self.layer_sizes)
        if len(sizes) < 2:
            raise ContractViolation(
                f"An MLP needs at least an input and an output size, got {sizes}."
            )
        if any(size < 1 for size in sizes):
            raise ContractViolation(f"Layer sizes must be positive, got {sizes}.")
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(
            self, "hidden_activation", Activation(self.hidden_activation)
        )
        object.__setattr__(
            self, "output_activation", Activation(self.output_activation)
        )
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ContractViolation(
                f"Unsupported hidden activation: {self.hidden_activation.value}"
            )
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ContractViolation(
                f"Unsupported output activation: {self.output_activation.value}"
            )

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def layer_count(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) for each weight layer."""
        return list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    @property
    def param_count(self) -> int:
        return sum(fan_in * fan_out + fan_out for fan_in, fan_out in self.layer_shapes)

    def activation_for(self, layer_index: int) -> Activation:
        if layer_index == self.layer_count - 1:
            return self.output_activation
        return self.hidden_activation

    def layer_of_coordinate(self, index: int) -> int:
        """The weight layer that owns coordinate `index` of a flat parameter vector."""
        offset = 0
        for layer_index, (fan_in, fan_out) in enumerate(self.layer_shapes):
            offset += fan_in * fan_out + fan_out
            if index < offset:
                return layer_index
        raise ContractViolation(f"Coordinate {index} is outside the parameter vector.")

    def as_dict(self) -> dict[str, Any]:
        return {
            "layer_sizes": list(self.layer_sizes),
            "hidden_activation": self.hidden_activation.value,
            "output_activation": self.output_activation.value,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        return cls(
            layer_sizes=tuple(data["layer_sizes"]),
            hidden_activation=Activation(data["hidden_activation"]),
            output_activation=Activation(data["output_activation"]),
        )

    @cached_property
    def spec_hash(self) -> bytes:
        canonical = json.dumps(self.as_dict(), sort_keys=True).encode("utf-8")
        return hashlib.blake2b(canonical, digest_size=SPEC_HASH_SIZE).digest()


@dataclass(frozen=True, eq=False)
class ParamVector:
    """An immutable, finite, flat parameter vector laid out according to `spec`."""

    spec: MlpSpec
    values: FloatArray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.shape[0] != self.spec.param_count:
            raise ContractViolation(
                f"Parameter vector of shape {values.shape} does not match the "
                f"{self.spec.param_count} parameters of layers {self.spec.layer_sizes}."
            )
        finite = np.isfinite(values)
        if not finite.all():
            first_bad = int(np.argmin(finite))
            raise NumericalError(
                f"Non-finite parameter at coordinate {first_bad}",
                layer_index=self.spec.layer_of_coordinate(first_bad),
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ParamVector):
            return NotImplemented
        return self.spec == other.spec and bool(
            np.array_equal(self.values, other.values)
        )

    __hash__ = None  # type: ignore[assignment]

    def layers(self) -> list[tuple[FloatArray, FloatArray]]:
        return _split_layers(self.spec, self.values)

    @classmethod
    def from_layers(
        cls, spec: MlpSpec, layers: Sequence[tuple[npt.ArrayLike, npt.ArrayLike]]
    ) -> Self:
        if len(layers) != spec.layer_count:
            raise ContractViolation(
                f"Expected {spec.layer_count} layers, got {len(layers)}."
            )
        parts: list[FloatArray] = []
        for (fan_in, fan_out), (weights, biases) in zip(spec.layer_shapes, layers):
            w = np.asarray(weights, dtype=np.float64)
            b = np.asarray(biases, dtype=np.float64)
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise ContractViolation(
                    f"Layer shapes {w.shape}/{b.shape} do not match "
                    f"({fan_in}, {fan_out})/({fan_out},)."
                )
            parts.extend((w.ravel(), b))
        return cls(spec=spec, values=np.concatenate(parts))

    @classmethod
    def zeros(cls, spec: MlpSpec) -> Self:
        return cls(spec=spec, values=np.zeros(spec.param_count))

    def to_bytes(self) -> bytes:
        """Spec hash (8 bytes), then a little-endian u32 count and float64 values."""
        return (
            self.spec.spec_hash
            + struct.pack(PARAM_VECTOR_COUNT_FORMAT, len(self))
            + self.values.astype(PARAM_VECTOR_VALUE_DTYPE).tobytes()
        )

    @classmethod
    def from_bytes(cls, data: bytes, spec: MlpSpec) -> Self:
        if len(data) < _HEADER_SIZE:
            raise CheckpointError("Parameter vector data is truncated.")
        found_hash = data[:SPEC_HASH_SIZE]
        if found_hash != spec.spec_hash:
            raise SpecMismatchError(
                expected=spec.spec_hash.hex(), found=found_hash.hex()
            )
        (count,) = struct.unpack_from(PARAM_VECTOR_COUNT_FORMAT, data, SPEC_HASH_SIZE)
        expected_size = _HEADER_SIZE + count * np.dtype(PARAM_VECTOR_VALUE_DTYPE).itemsize
        if len(data) != expected_size:
            raise CheckpointError(
                f"Parameter vector data has {len(data)} bytes, expected {expected_size}."
            )
        values = np.frombuffer(
            data, dtype=PARAM_VECTOR_VALUE_DTYPE, count=count, offset=_HEADER_SIZE
        )
        return cls(spec=spec, values=values.astype(np.float64))


@dataclass(frozen=True)
class ForwardCache:
    """Per-layer activations kept for backpropagation.

    `activations[0]` is the input batch and `activations[-1]` the network output.
    """

    activations: list[FloatArray]
    pre_activations: list[FloatArray]

    @property
    def output(self) -> FloatArray:
        return self.activations[-1]


def initialize_params(spec: MlpSpec, rng: np.random.Generator) -> ParamVector:
    """Glorot-uniform weights, zero biases."""
    layers = []
    for fan_in, fan_out in spec.layer_shapes:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        layers.append((weights, np.zeros(fan_out)))
    return ParamVector.from_layers(spec, layers)


def _split_layers(
    spec: MlpSpec, values: FloatArray
) -> list[tuple[FloatArray, FloatArray]]:
    layers = []
    offset = 0
    for fan_in, fan_out in spec.layer_shapes:
        weight_end = offset + fan_in * fan_out
        layers.append(
            (
                values[offset:weight_end].reshape(fan_in, fan_out),
                values[weight_end : weight_end + fan_out],  # noqa: E203
            )
        )
        offset = weight_end + fan_out
    return layers


def _sigmoid(z: FloatArray) -> FloatArray:
    # tanh form does not overflow for large |z|.
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _activate(activation: Activation, z: FloatArray) -> FloatArray:
    match activation:
        case Activation.RELU:
            return np.maximum(z, 0.0)
        case Activation.TANH:
            return np.tanh(z)
        case Activation.SIGMOID:
            return np.clip(_sigmoid(z), LOG_CLAMP_EPSILON, 1.0 - LOG_CLAMP_EPSILON)
        case Activation.IDENTITY:
            return z
    raise NotImplementedError(f"Unsupported activation: {activation}")


def _activation_derivative(
    activation: Activation, z: FloatArray, a: FloatArray
) -> FloatArray:
    match activation:
        case Activation.RELU:
            return (z > 0.0).astype(np.float64)
        case Activation.TANH:
            return 1.0 - a * a
        case Activation.SIGMOID:
            # Zero where the output is pinned to the clamp bounds.
            s = _sigmoid(z)
            inside = (s > LOG_CLAMP_EPSILON) & (s < 1.0 - LOG_CLAMP_EPSILON)
            return np.where(inside, s * (1.0 - s), 0.0)
        case Activation.IDENTITY:
            return np.ones_like(z)
    raise NotImplementedError(f"Unsupported activation: {activation}")


def _check_params(spec: MlpSpec, params: ParamVector) -> None:
    if params.spec != spec:
        raise ContractViolation(
            f"Parameters for layers {params.spec.layer_sizes} used with layers "
            f"{spec.layer_sizes}."
        )


def _as_batch(spec: MlpSpec, inputs: npt.ArrayLike) -> FloatArray:
    batch = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if batch.ndim != 2 or batch.shape[1] != spec.input_dim:
        raise ContractViolation(
            f"Input of shape {np.shape(inputs)} does not match input dimension "
            f"{spec.input_dim}."
        )
    return batch


def forward_with_cache(
    spec: MlpSpec, params: ParamVector, inputs: npt.ArrayLike
) -> ForwardCache:
    _check_params(spec, params)
    activation = _as_batch(spec, inputs)
    activations = [activation]
    pre_activations = []
    for layer_index, (weights, biases) in enumerate(params.layers()):
        z = activation @ weights + biases
        activation = _activate(spec.activation_for(layer_index), z)
        if not np.isfinite(activation).all():
            raise NumericalError(
                "Non-finite activation in forward pass", layer_index=layer_index
            )
        pre_activations.append(z)
        activations.append(activation)
    return ForwardCache(activations=activations, pre_activations=pre_activations)


def forward(spec: MlpSpec, params: ParamVector, inputs: npt.ArrayLike) -> FloatArray:
    """Run the network on one feature vector (1-D) or a batch of them (2-D)."""
    output = forward_with_cache(spec, params, inputs).output
    return output[0] if np.ndim(inputs) == 1 else output


def backward(
    spec: MlpSpec,
    params: ParamVector,
    cache: ForwardCache,
    output_grad: npt.ArrayLike,
) -> tuple[FloatArray, FloatArray]:
    """Backpropagate dL/d(output) through the network.

    :return: The flat gradient with respect to `params` (same layout) and the gradient
        with respect to the network input.
    """
    _check_params(spec, params)
    upstream = np.asarray(output_grad, dtype=np.float64)
    if upstream.shape != cache.output.shape:
        raise ContractViolation(
            f"Output gradient of shape {upstream.shape} does not match network "
            f"output {cache.output.shape}."
        )
    layers = params.layers()
    grads: list[tuple[FloatArray, FloatArray]] = []
    for layer_index in reversed(range(spec.layer_count)):
        z = cache.pre_activations[layer_index]
        a = cache.activations[layer_index + 1]
        delta = upstream * _activation_derivative(
            spec.activation_for(layer_index), z, a
        )
        weights, _ = layers[layer_index]
        weight_grad = cache.activations[layer_index].T @ delta
        bias_grad = delta.sum(axis=0)
        if not (np.isfinite(weight_grad).all() and np.isfinite(bias_grad).all()):
            raise NumericalError(
                "Non-finite gradient in backward pass", layer_index=layer_index
            )
        grads.append((weight_grad, bias_grad))
        upstream = delta @ weights.T
    grads.reverse()
    flat = np.concatenate([part for w, b in grads for part in (w.ravel(), b)])
    return flat, upstream
