"""Fully connected networks with a rescaled symmetric sigmoid, MSE and backprop.

Parameter layout
----------------
A network is stored as one flat float64 vector. Layers are laid out in order
from input to output; for each layer the weight matrix comes first, then the
bias vector. Weight matrices have shape ``(fan_in, fan_out)`` and are stored
row-major (C order), so the forward map of a layer is ``x @ W + b``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np


# Scale of the initialization interval. 1.5 keeps hidden units in the
# moderately nonlinear range for unit-variance inputs.
DEFAULT_SATURATION = 1.5


class ShapeError(ValueError):
    """Raised when array dimensions do not match an architecture."""


@dataclass(frozen=True)
class ArchitectureSpec:
    input_dim: int
    output_dim: int
    hidden_count: int
    hidden_width: int
    saturation_factor: float = DEFAULT_SATURATION
    output_activation: str = "linear"

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")
        if self.hidden_count < 0:
            raise ValueError("hidden_count must be >= 0")
        if self.hidden_width < 1:
            raise ValueError("hidden_width must be >= 1")
        if not self.saturation_factor > 0:
            raise ValueError("saturation_factor must be > 0")
        if self.output_activation not in ("linear", "sigmoid"):
            raise ValueError(f"unknown output_activation {self.output_activation!r}")

    @property
    def layer_sizes(self) -> List[int]:
        return [self.input_dim] + [self.hidden_width] * self.hidden_count + [self.output_dim]

    @property
    def layer_shapes(self) -> List[Tuple[int, int]]:
        """(fan_in, fan_out) of every affine layer."""
        sizes = self.layer_sizes
        return list(zip(sizes[:-1], sizes[1:]))

    @property
    def param_count(self) -> int:
        return param_count(self)

    def label(self) -> str:
        return f"{self.input_dim}-{self.hidden_width}x{self.hidden_count}-{self.output_dim}"


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.targets.ndim != 2:
            raise ShapeError("inputs and targets must be 2-D")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ShapeError(
                f"inputs have {self.inputs.shape[0]} rows but targets have "
                f"{self.targets.shape[0]}")
        if self.inputs.shape[0] < 1:
            raise ShapeError("dataset needs at least one sample")

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def constraint_count(self) -> int:
        return self.targets.shape[0] * self.targets.shape[1]


@dataclass
class EvalResult:
    objective: float
    gradient: Optional[np.ndarray] = None


def param_count(arch: ArchitectureSpec) -> int:
    return sum((fan_in + 1) * fan_out for fan_in, fan_out in arch.layer_shapes)


def activation(x):
    """Symmetric sigmoid ``2 / (1 + exp(-2x)) - 1``, rescaled to unit slope at 0.

    That expression equals ``tanh(x)`` identically; ``np.tanh`` is used because it
    is the fastest overflow-free evaluation and is exactly odd.
    """
    return np.tanh(x)


def flatten(layers: Sequence[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Concatenate ``[(W1, b1), (W2, b2), ...]`` into one flat vector."""
    parts = []
    for W, b in layers:
        parts.append(np.ascontiguousarray(W, dtype=np.float64).ravel())
        parts.append(np.ascontiguousarray(b, dtype=np.float64).ravel())
    return np.concatenate(parts) if parts else np.zeros(0)


def unflatten(values: np.ndarray, arch: ArchitectureSpec) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Split a flat vector into per-layer ``(W, b)`` views (no copy)."""
    values = np.asarray(values, dtype=np.float64)
    expected = param_count(arch)
    if values.ndim != 1 or values.size != expected:
        raise ShapeError(
            f"parameter vector has shape {values.shape}, expected ({expected},) "
            f"for architecture {arch.label()}")
    layers = []
    offset = 0
    for fan_in, fan_out in arch.layer_shapes:
        W = values[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = values[offset:offset + fan_out]
        offset += fan_out
        layers.append((W, b))
    return layers


def _check_inputs(arch: ArchitectureSpec, inputs: np.ndarray) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != arch.input_dim:
        raise ShapeError(
            f"layer 1 expects inputs with {arch.input_dim} columns, "
            f"got array of shape {inputs.shape}")
    return inputs


def _check_targets(arch: ArchitectureSpec, dataset: Dataset) -> None:
    if dataset.targets.shape[1] != arch.output_dim:
        raise ShapeError(
            f"output layer {len(arch.layer_shapes)} produces {arch.output_dim} "
            f"columns, targets have shape {dataset.targets.shape}")


def _forward_cached(arch, params, inputs):
    layers = unflatten(params, arch)
    inputs = _check_inputs(arch, inputs)
    acts = [inputs]
    h = inputs
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        z = h @ W + b
        if i < last or arch.output_activation == "sigmoid":
            h = activation(z)
        else:
            h = z
        acts.append(h)
    return layers, acts


def forward(arch: ArchitectureSpec, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Network outputs for every row of ``inputs``; shape ``(n, output_dim)``."""
    return _forward_cached(arch, params, inputs)[1][-1]


def objective(arch: ArchitectureSpec, params: np.ndarray, dataset: Dataset,
              reduction: str = "mean") -> EvalResult:
    """Squared error over all residual components.

    ``reduction="mean"`` divides the raw sum by ``n_samples * output_dim``;
    ``reduction="sum"`` gives the plain least-squares sum.
    """
    _check_targets(arch, dataset)
    r = forward(arch, params, dataset.inputs) - dataset.targets
    return EvalResult(_reduce(r, reduction))


def _reduce(residual: np.ndarray, reduction: str) -> float:
    flat = residual.ravel()
    sq = float(np.dot(flat, flat))
    if reduction == "mean":
        return sq / flat.size
    if reduction == "sum":
        return sq
    raise ValueError(f"unknown reduction {reduction!r}")


def gradient(arch: ArchitectureSpec, params: np.ndarray, dataset: Dataset,
             reduction: str = "mean") -> EvalResult:
    """Objective value and its exact gradient by backpropagation."""
    _check_targets(arch, dataset)
    layers, acts = _forward_cached(arch, params, dataset.inputs)
    r = acts[-1] - dataset.targets
    value = _reduce(r, reduction)
    scale = 2.0 / r.size if reduction == "mean" else 2.0

    grad = np.empty(param_count(arch))
    grads = unflatten(grad, arch)  # views into grad
    delta = scale * r
    if arch.output_activation == "sigmoid":
        delta = delta * (1.0 - acts[-1] ** 2)
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        gW, gb = grads[i]
        np.matmul(acts[i].T, delta, out=gW)
        np.sum(delta, axis=0, out=gb)
        if i > 0:
            delta = (delta @ W.T) * (1.0 - acts[i] ** 2)
    return EvalResult(value, grad)


def make_objective(arch: ArchitectureSpec, dataset: Dataset, reduction: str = "mean"):
    """Closure ``x -> (value, gradient)`` over a fixed architecture and dataset."""
    def value_and_grad(x):
        res = gradient(arch, x, dataset, reduction)
        return res.objective, res.gradient
    return value_and_grad
