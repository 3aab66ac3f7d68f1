"""
Fully-connected feed-forward networks with reverse-mode gradients.

Layer l maps v to act_l(W_l v + b_l). Inputs are processed in batches of rows;
forward keeps everything backward needs in a ForwardCache.

File: hdsurv/src/learners/mlp.py
"""
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from src.cox.partial_likelihood import CoxObjective
from src.data.records import SurvivalDataset
from src.errors import ConfigError, DimensionError
from src.models.base import record_fit

logger = logging.getLogger(__name__)


class Activation(str, Enum):
    RELU = "relu"
    LINEAR = "linear"
    SIGMOID = "sigmoid"

    def apply(self, z: np.ndarray) -> np.ndarray:
        if self == Activation.RELU:
            return np.maximum(z, 0.0)
        if self == Activation.SIGMOID:
            return 1.0 / (1.0 + np.exp(-z))
        return z

    def derivative(self, z: np.ndarray) -> np.ndarray:
        if self == Activation.RELU:
            return np.where(z > 0, 1.0, 0.0)
        if self == Activation.SIGMOID:
            s = 1.0 / (1.0 + np.exp(-z))
            return s * (1.0 - s)
        return np.ones_like(z)


@dataclass
class Layer:
    weights: np.ndarray
    biases: np.ndarray
    activation: Activation

    @property
    def shape(self) -> Tuple[int, int]:
        return self.weights.shape


@dataclass
class ForwardCache:
    """Layer inputs, pre-activations and dropout masks of one forward pass."""
    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]
    masks: List[Optional[np.ndarray]]


@dataclass
class Gradients:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    inputs: np.ndarray

    def flatten(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])


@dataclass
class Network:
    """Chain of layers; scalar-output networks end in a 1-unit linear layer."""
    layers: List[Layer]
    loss_trace: List[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.layers:
            raise DimensionError("Network needs at least one layer")
        for k in range(1, len(self.layers)):
            if self.layers[k].weights.shape[1] != self.layers[k - 1].weights.shape[0]:
                raise DimensionError(
                    f"Layer {k} expects {self.layers[k].weights.shape[1]} inputs, "
                    f"previous layer has {self.layers[k - 1].weights.shape[0]} units"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[0]

    @property
    def dims(self) -> List[int]:
        return [self.input_dim] + [layer.weights.shape[0] for layer in self.layers]

    @property
    def n_params(self) -> int:
        return sum(layer.weights.size + layer.biases.size for layer in self.layers)

    @classmethod
    def init(
        cls,
        dims: Sequence[int],
        activations: Sequence[str],
        seed: Optional[int] = None,
    ) -> "Network":
        """
        Randomly initialized network.

        Relu layers draw weights uniformly on +-sqrt(6 / fan_in); other layers
        use +-sqrt(6 / (fan_in + fan_out)). Biases start at zero.

        Args:
            dims: Layer widths [k_0, ..., k_L]
            activations: One activation per layer (L entries)
            seed: Random seed
        """
        if len(dims) < 2 or len(activations) != len(dims) - 1:
            raise DimensionError(f"{len(dims)} widths need {len(dims) - 1} activations, got {len(activations)}")
        rng = np.random.default_rng(seed)
        layers = []
        for fan_in, fan_out, act in zip(dims[:-1], dims[1:], activations):
            act = Activation(act)
            if act == Activation.RELU:
                limit = np.sqrt(6.0 / fan_in)
            else:
                limit = np.sqrt(6.0 / (fan_in + fan_out))
            layers.append(
                Layer(rng.uniform(-limit, limit, size=(fan_out, fan_in)), np.zeros(fan_out), act)
            )
        return cls(layers)

    def get_params(self) -> np.ndarray:
        return np.concatenate([np.concatenate([layer.weights.ravel(), layer.biases]) for layer in self.layers])

    def with_params(self, params: np.ndarray) -> "Network":
        """Copy of the network carrying a flat parameter vector."""
        params = np.asarray(params, dtype=float)
        if params.size != self.n_params:
            raise DimensionError(f"Expected {self.n_params} parameters, got {params.size}")
        layers, offset = [], 0
        for layer in self.layers:
            k_out, k_in = layer.weights.shape
            W = params[offset:offset + k_out * k_in].reshape(k_out, k_in)
            offset += k_out * k_in
            b = params[offset:offset + k_out].copy()
            offset += k_out
            layers.append(Layer(W.copy(), b, layer.activation))
        return Network(layers, list(self.loss_trace))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dims": self.dims,
            "layers": [
                {
                    "weights": layer.weights.tolist(),
                    "biases": layer.biases.tolist(),
                    "activation": layer.activation.value,
                }
                for layer in self.layers
            ],
            "loss_trace": list(self.loss_trace),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Network":
        layers = [
            Layer(
                np.asarray(layer["weights"], dtype=float),
                np.asarray(layer["biases"], dtype=float),
                Activation(layer["activation"]),
            )
            for layer in data["layers"]
        ]
        return cls(layers, list(data.get("loss_trace", [])))


def forward(
    net: Network,
    X: np.ndarray,
    dropout: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, ForwardCache]:
    """
    Evaluate the network on a batch.

    Args:
        net: Network
        X: Inputs (n, k_0) or a single vector (k_0,)
        dropout: Drop probability for hidden activations (training only)
        rng: Generator for dropout masks

    Returns:
        (outputs (n, k_L), cache)
    """
    A = np.atleast_2d(np.asarray(X, dtype=float))
    if A.shape[1] != net.input_dim:
        raise DimensionError(f"Network expects {net.input_dim} inputs, got {A.shape[1]}")
    if dropout > 0 and rng is None:
        raise ConfigError("Dropout requires a random generator", field="rng")
    cache = ForwardCache([], [], [])
    last = len(net.layers) - 1
    for k, layer in enumerate(net.layers):
        cache.inputs.append(A)
        Z = A @ layer.weights.T + layer.biases
        cache.pre_activations.append(Z)
        A = layer.activation.apply(Z)
        mask = None
        if dropout > 0 and k < last:
            mask = (rng.uniform(size=A.shape) >= dropout) / (1.0 - dropout)
            A = A * mask
        cache.masks.append(mask)
    return A, cache


def backward(net: Network, grad_output: np.ndarray, cache: ForwardCache) -> Gradients:
    """
    Reverse-mode gradients of a scalar loss.

    Args:
        net: Network used in the forward pass
        grad_output: dLoss/dOutput, same shape as the forward output
        cache: Cache from forward

    Returns:
        Gradients for every layer's weights and biases plus the inputs

    Raises:
        DimensionError: grad_output does not match the cached output shape
    """
    n = cache.inputs[0].shape[0]
    dA = np.asarray(grad_output, dtype=float)
    if dA.ndim == 1 and net.output_dim == 1:
        dA = dA[:, None]
    if dA.shape != (n, net.output_dim):
        raise DimensionError(f"Upstream gradient has shape {dA.shape}, expected {(n, net.output_dim)}")
    dW: List[np.ndarray] = [None] * len(net.layers)
    db: List[np.ndarray] = [None] * len(net.layers)
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        if cache.masks[k] is not None:
            dA = dA * cache.masks[k]
        dZ = dA * layer.activation.derivative(cache.pre_activations[k])
        dW[k] = dZ.T @ cache.inputs[k]
        db[k] = dZ.sum(axis=0)
        dA = dZ @ layer.weights
    return Gradients(weights=dW, biases=db, inputs=dA)


def predict(net: Network, X: np.ndarray) -> np.ndarray:
    """Evaluation-mode outputs; scalar-output networks return a vector."""
    out, _ = forward(net, X)
    return out[:, 0] if net.output_dim == 1 else out


class CoxNetOptions(BaseModel):
    """Training schedule for the Cox-loss network."""
    lr: float = Field(default=0.05, gt=0)
    epochs: int = Field(default=500, ge=0)
    seed: int = 0
    dropout: float = Field(default=0.0, ge=0, lt=1)
    activation: Activation = Activation.RELU
    max_halvings: int = Field(default=30, ge=0)


def train_cox_net(
    ds: SurvivalDataset,
    architecture: Sequence[int] = (16, 16),
    opts: Optional[CoxNetOptions] = None,
) -> Network:
    """
    Fit a scalar log-risk network by minimizing the mean negative log partial likelihood.

    Full-batch gradient descent; each step is halved until the evaluation-mode
    loss does not increase, so loss_trace is non-increasing.

    Args:
        ds: Training data
        architecture: Hidden-layer widths (empty gives the linear Cox model)
        opts: Training schedule

    Returns:
        Trained Network with its loss trace
    """
    start_time = time.perf_counter()
    opts = opts or CoxNetOptions()
    dims = [ds.p, *architecture, 1]
    activations = [opts.activation.value] * len(architecture) + [Activation.LINEAR.value]
    net = Network.init(dims, activations, seed=opts.seed)
    rng = np.random.default_rng(opts.seed)
    objective = CoxObjective(ds.time, ds.event)

    def loss(candidate: Network) -> float:
        return objective.value_eta(predict(candidate, ds.X)) / ds.n

    current = loss(net)
    trace = [current]
    for epoch in range(opts.epochs):
        out, cache = forward(net, ds.X, opts.dropout, rng if opts.dropout > 0 else None)
        upstream = objective.gradient_eta(out[:, 0]) / ds.n
        step = backward(net, upstream, cache).flatten()
        params = net.get_params()
        lr = opts.lr
        for _ in range(opts.max_halvings + 1):
            candidate = net.with_params(params - lr * step)
            value = loss(candidate)
            if value <= current:
                break
            lr /= 2.0
        else:
            logger.debug(f"No descent at epoch {epoch}; stopping")
            break
        net, current = candidate, value
        trace.append(current)

    net.loss_trace = trace
    duration_ms = record_fit("cox_net", True, start_time)
    logger.info(f"Trained {dims} Cox network for {len(trace) - 1} epochs in {duration_ms}ms, loss {current:.5f}")
    return net
