"""
Covariate log-risk functions h(x) of the illness-death transitions.

Every implementation satisfies h(0) = 0: linear functions by construction,
networks by subtracting their output at the origin.

File: hdsurv/src/scr/log_risk.py
"""
from abc import ABC, abstractmethod
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from src.errors import ConfigError, DimensionError
from src.learners.mlp import Network, backward, forward, predict


class LogRisk(ABC):
    """Base class for log-risk functions with flat parameter access."""

    kind: str = ""

    @property
    @abstractmethod
    def input_dim(self) -> int:
        pass

    @abstractmethod
    def __call__(self, X: np.ndarray) -> np.ndarray:
        """
        Evaluate h on every row.

        Args:
            X: Covariates (n, p)

        Returns:
            Array (n,)
        """
        pass

    @abstractmethod
    def get_params(self) -> np.ndarray:
        pass

    @abstractmethod
    def with_params(self, params: np.ndarray) -> "LogRisk":
        pass

    @abstractmethod
    def evaluate(
        self,
        X: np.ndarray,
        dropout: float = 0.0,
        rng: Optional[np.random.Generator] = None,
    ) -> Tuple[np.ndarray, Callable[[np.ndarray], np.ndarray]]:
        """
        Values h(x_i) with a closure for reverse-mode gradients.

        Args:
            X: Covariates (n, p)
            dropout: Training-time drop probability (networks only)
            rng: Generator for dropout masks

        Returns:
            (values (n,), pullback) where pullback(upstream) is the gradient of
            sum_i upstream_i h(x_i) with respect to the flat parameters
        """
        pass

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        pass

    @property
    def n_params(self) -> int:
        return int(self.get_params().size)

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "LogRisk":
        if data.get("kind") == LinearLogRisk.kind:
            return LinearLogRisk(np.asarray(data["beta"], dtype=float))
        if data.get("kind") == NetworkLogRisk.kind:
            return NetworkLogRisk(Network.from_dict(data["network"]))
        raise ConfigError(f"Unknown log-risk kind {data.get('kind')!r}", field="kind")


class LinearLogRisk(LogRisk):
    """h(x) = x'beta."""

    kind = "linear"

    def __init__(self, beta: np.ndarray) -> None:
        self.beta = np.asarray(beta, dtype=float).reshape(-1)

    @property
    def input_dim(self) -> int:
        return self.beta.size

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.beta.size:
            raise DimensionError(f"Log-risk expects {self.beta.size} covariates, got {X.shape[1]}")
        return X @ self.beta

    def get_params(self) -> np.ndarray:
        return self.beta.copy()

    def with_params(self, params: np.ndarray) -> "LinearLogRisk":
        params = np.asarray(params, dtype=float)
        if params.size != self.beta.size:
            raise DimensionError(f"Expected {self.beta.size} coefficients, got {params.size}")
        return LinearLogRisk(params)

    def evaluate(self, X, dropout=0.0, rng=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        values = self(X)
        return values, lambda upstream: X.T @ np.asarray(upstream, dtype=float)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "beta": self.beta.tolist()}


class NetworkLogRisk(LogRisk):
    """h(x) = net(x) - net(0) for a scalar-output network."""

    kind = "network"

    def __init__(self, network: Network) -> None:
        if network.output_dim != 1:
            raise DimensionError(f"Log-risk networks need one output, got {network.output_dim}")
        self.network = network

    @property
    def input_dim(self) -> int:
        return self.network.input_dim

    def _origin(self) -> np.ndarray:
        return np.zeros((1, self.network.input_dim))

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return predict(self.network, X) - predict(self.network, self._origin())[0]

    def get_params(self) -> np.ndarray:
        return self.network.get_params()

    def with_params(self, params: np.ndarray) -> "NetworkLogRisk":
        return NetworkLogRisk(self.network.with_params(params))

    def evaluate(self, X, dropout=0.0, rng=None):
        out, cache = forward(self.network, X, dropout, rng)
        origin_out, origin_cache = forward(self.network, self._origin())

        def pullback(upstream: np.ndarray) -> np.ndarray:
            upstream = np.asarray(upstream, dtype=float)
            grad = backward(self.network, upstream, cache).flatten()
            return grad - backward(self.network, np.array([upstream.sum()]), origin_cache).flatten()

        return out[:, 0] - origin_out[0, 0], pullback

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "network": self.network.to_dict()}
