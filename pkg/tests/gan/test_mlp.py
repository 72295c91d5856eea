from __future__ import annotations

import math

import numpy as np
import pytest

from fedgan_ids.errors import (
    CheckpointError,
    ContractViolation,
    NumericalError,
    SpecMismatchError,
)
from fedgan_ids.gan.mlp import (
    Activation,
    MlpSpec,
    ParamVector,
    backward,
    forward,
    forward_with_cache,
    initialize_params,
)

STEP = 1e-5

GRADIENT_SPECS = [
    MlpSpec((3, 4, 1), Activation.RELU, Activation.SIGMOID),
    MlpSpec((2, 5, 3), Activation.TANH, Activation.IDENTITY),
]


def assert_gradients_close(analytic: np.ndarray, numeric: np.ndarray) -> None:
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    error = np.abs(analytic - numeric)
    ok = (error <= 1e-4 * scale) | (error < 1e-7)
    assert ok.all(), f"worst mismatch at {np.argmax(error)}: {analytic} vs {numeric}"


def straight_line_forward(
    spec: MlpSpec, params: ParamVector, x: list[float]
) -> list[float]:
    """Plain-Python forward pass over the flat layout, for comparison."""
    values = [float(v) for v in params.values]
    activation = list(x)
    offset = 0
    for layer, (fan_in, fan_out) in enumerate(spec.layer_shapes):
        weights = values[offset : offset + fan_in * fan_out]
        offset += fan_in * fan_out
        biases = values[offset : offset + fan_out]
        offset += fan_out
        out = []
        for j in range(fan_out):
            z = biases[j] + sum(
                activation[i] * weights[i * fan_out + j] for i in range(fan_in)
            )
            if layer == spec.layer_count - 1:
                out.append(1.0 / (1.0 + math.exp(-z)))
            else:
                out.append(max(z, 0.0))
        activation = out
    return activation


def test_sigmoid_of_zero_is_one_half():
    spec = MlpSpec((1, 1), output_activation=Activation.SIGMOID)
    assert forward(spec, ParamVector.zeros(spec), [1.0])[0] == pytest.approx(0.5)


def test_identity_layer_is_a_dot_product():
    spec = MlpSpec((2, 1), output_activation=Activation.IDENTITY)
    params = ParamVector.from_layers(spec, [([[1.0], [1.0]], [0.0])])
    assert forward(spec, params, [3.0, 4.0])[0] == pytest.approx(7.0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_forward_matches_straight_line_reimplementation(seed: int):
    spec = MlpSpec((2, 3, 1))
    params = initialize_params(spec, np.random.default_rng(seed))
    noise = np.random.default_rng(seed + 100).normal(0, 0.1, len(params))
    params = ParamVector(spec=spec, values=params.values + noise)
    expected = straight_line_forward(spec, params, [0.1, 0.2])
    np.testing.assert_allclose(
        forward(spec, params, [0.1, 0.2]), expected, rtol=0, atol=1e-12
    )


def test_forward_batches_rows_independently(rng: np.random.Generator):
    spec = MlpSpec((3, 4, 1))
    params = initialize_params(spec, rng)
    batch = rng.normal(size=(5, 3))
    stacked = forward(spec, params, batch)
    assert stacked.shape == (5, 1)
    for row, out in zip(batch, stacked):
        np.testing.assert_allclose(
            forward(spec, params, row), out, rtol=0, atol=1e-12
        )


def test_sigmoid_outputs_stay_inside_the_clamp():
    spec = MlpSpec((1, 1))
    params = ParamVector.from_layers(spec, [([[1000.0]], [0.0])])
    out = forward(spec, params, [[1.0], [-1.0]])[:, 0]
    assert 0.0 < out[1] < out[0] < 1.0


def test_forward_rejects_wrong_input_dimension(rng: np.random.Generator):
    spec = MlpSpec((3, 2, 1))
    with pytest.raises(ContractViolation):
        forward(spec, initialize_params(spec, rng), [1.0, 2.0])


def test_forward_rejects_params_of_another_spec(rng: np.random.Generator):
    spec = MlpSpec((3, 2, 1))
    other = MlpSpec((3, 3, 1))
    with pytest.raises(ContractViolation):
        forward(spec, initialize_params(other, rng), [1.0, 2.0, 3.0])


@pytest.mark.parametrize(
    "spec", GRADIENT_SPECS, ids=lambda s: "-".join(map(str, s.layer_sizes))
)
@pytest.mark.parametrize("seed", [11, 12, 13])
def test_backward_matches_central_finite_differences(spec: MlpSpec, seed: int):
    rng = np.random.default_rng(seed)
    params = initialize_params(spec, rng)
    # Non-zero biases so that every coordinate is exercised.
    params = ParamVector(
        spec=spec, values=params.values + rng.normal(0, 0.1, len(params))
    )
    inputs = rng.normal(size=(4, spec.input_dim))
    weights = rng.normal(size=(4, spec.output_dim))

    def loss(values: np.ndarray, x: np.ndarray = inputs) -> float:
        out = forward(spec, ParamVector(spec=spec, values=values), x)
        return float(np.sum(weights * out))

    cache = forward_with_cache(spec, params, inputs)
    param_grad, input_grad = backward(spec, params, cache, weights)

    numeric = np.empty(len(params))
    for i in range(len(params)):
        bump = np.zeros(len(params))
        bump[i] = STEP
        numeric[i] = (loss(params.values + bump) - loss(params.values - bump)) / (
            2 * STEP
        )
    assert_gradients_close(param_grad, numeric)

    numeric_input = np.empty_like(inputs)
    for index in np.ndindex(inputs.shape):
        bump = np.zeros_like(inputs)
        bump[index] = STEP
        numeric_input[index] = (
            loss(params.values, inputs + bump) - loss(params.values, inputs - bump)
        ) / (2 * STEP)
    assert_gradients_close(input_grad.ravel(), numeric_input.ravel())


def test_backward_rejects_misshaped_output_gradient(rng: np.random.Generator):
    spec = MlpSpec((2, 3, 1))
    params = initialize_params(spec, rng)
    cache = forward_with_cache(spec, params, np.ones((2, 2)))
    with pytest.raises(ContractViolation):
        backward(spec, params, cache, np.ones((3, 1)))


def test_spec_rejects_unsupported_activations():
    with pytest.raises(ContractViolation):
        MlpSpec((2, 1), hidden_activation=Activation.SIGMOID)
    with pytest.raises(ContractViolation):
        MlpSpec((2, 1), output_activation=Activation.RELU)
    with pytest.raises(ContractViolation):
        MlpSpec((2,))


def test_layer_of_coordinate_follows_the_flat_layout():
    spec = MlpSpec((2, 3, 1))
    # Layer 0 holds 2 * 3 weights and 3 biases, layer 1 holds 3 weights and 1 bias.
    assert spec.param_count == 13
    assert spec.layer_of_coordinate(8) == 0
    assert spec.layer_of_coordinate(9) == 1
    with pytest.raises(ContractViolation):
        spec.layer_of_coordinate(13)


def test_non_finite_parameter_names_its_layer():
    spec = MlpSpec((2, 3, 1))
    values = np.zeros(spec.param_count)
    values[10] = np.nan
    with pytest.raises(NumericalError) as info:
        ParamVector(spec=spec, values=values)
    assert info.value.layer_index == 1


def test_param_vector_is_read_only(rng: np.random.Generator):
    params = initialize_params(MlpSpec((2, 2, 1)), rng)
    with pytest.raises(ValueError):
        params.values[0] = 1.0


def test_param_vector_bytes_round_trip(rng: np.random.Generator):
    spec = MlpSpec((3, 4, 1))
    params = initialize_params(spec, rng)
    restored = ParamVector.from_bytes(params.to_bytes(), spec)
    assert restored == params
    assert restored.values.tobytes() == params.values.tobytes()


def test_param_vector_bytes_layout(rng: np.random.Generator):
    spec = MlpSpec((2, 1))
    data = ParamVector.zeros(spec).to_bytes()
    assert data[:8] == spec.spec_hash
    assert int.from_bytes(data[8:12], "little") == 3
    assert len(data) == 8 + 4 + 3 * 8


def test_param_vector_from_bytes_checks_spec_and_length(rng: np.random.Generator):
    spec = MlpSpec((3, 4, 1))
    data = initialize_params(spec, rng).to_bytes()
    with pytest.raises(SpecMismatchError) as info:
        ParamVector.from_bytes(data, MlpSpec((3, 5, 1)))
    assert info.value.found == spec.spec_hash.hex()
    with pytest.raises(CheckpointError):
        ParamVector.from_bytes(data[:-1], spec)
    with pytest.raises(CheckpointError):
        ParamVector.from_bytes(data[:5], spec)


def test_spec_hash_depends_on_activations():
    relu = MlpSpec((2, 3, 1), hidden_activation=Activation.RELU)
    tanh = MlpSpec((2, 3, 1), hidden_activation=Activation.TANH)
    assert relu.spec_hash != tanh.spec_hash
    assert MlpSpec.from_dict(relu.as_dict()) == relu
