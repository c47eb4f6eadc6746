"""Feedforward ReLU classifiers: loading, forward evaluation, label scores.

Networks are plain affine+activation stacks. The final layer is always
affine (identity activation), so the outputs are raw per-label scores;
no softmax is ever applied. The predicted label is the argmax of the
scores with ties broken toward the lowest label index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NetworkFormatError

RELU = "relu"
IDENTITY = "identity"

# Substitute input box when a network file carries no "input_bounds";
# the verifier needs a bounded root region.
DEFAULT_INPUT_BOUND = 1.0e6


@dataclass
class Layer:
    """One affine layer: ``act(W @ z + b)`` with W of shape (out_dim, in_dim)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weights.ndim != 2:
            raise NetworkFormatError("layer weights must be a 2-D matrix")
        if self.bias.shape != (self.weights.shape[0],):
            raise NetworkFormatError(
                "bias length %d does not match weight rows %d"
                % (self.bias.size, self.weights.shape[0])
            )
        if self.activation not in (RELU, IDENTITY):
            raise NetworkFormatError("unsupported activation %r" % (self.activation,))
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise NetworkFormatError("layer contains non-finite weights or biases")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class Network:
    """Immutable layered classifier. Safe to share across worker threads."""

    input_dim: int
    layers: list[Layer]
    input_bounds: np.ndarray = field(default=None)  # (input_dim, 2)

    def __post_init__(self):
        if self.input_dim <= 0:
            raise NetworkFormatError("input_dim must be positive")
        if not self.layers:
            raise NetworkFormatError("network has no layers")
        expected = self.input_dim
        for i, layer in enumerate(self.layers):
            if layer.in_dim != expected:
                raise NetworkFormatError(
                    "dimension mismatch at layer %d: expected in_dim %d, got %d"
                    % (i, expected, layer.in_dim)
                )
            expected = layer.out_dim
        if self.layers[-1].activation != IDENTITY:
            raise NetworkFormatError("final layer must have identity activation")
        if self.input_bounds is None:
            self.input_bounds = np.array(
                [[-DEFAULT_INPUT_BOUND, DEFAULT_INPUT_BOUND]] * self.input_dim
            )
        self.input_bounds = np.asarray(self.input_bounds, dtype=float)
        if self.input_bounds.shape != (self.input_dim, 2):
            raise NetworkFormatError(
                "input_bounds must have shape (%d, 2)" % self.input_dim
            )
        if np.any(self.input_bounds[:, 0] > self.input_bounds[:, 1]):
            raise NetworkFormatError("input_bounds lower > upper for some dimension")

    @property
    def label_count(self) -> int:
        return self.layers[-1].out_dim


def load_network(path) -> Network:
    """Load a network from its JSON file.

    Expected schema::

        {"input_dim": n, "labels": m,
         "input_bounds": [[lo, hi], ...],        # optional
         "layers": [{"weights": [[...], ...], "bias": [...],
                     "activation": "relu" | "identity"}, ...]}

    Weights are row-major with one row per output neuron. Raises
    NetworkFormatError with the offending field or layer named.
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise NetworkFormatError("network file not found: %s" % (path,))
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(
            "invalid JSON in %s at line %d column %d: %s"
            % (path, exc.lineno, exc.colno, exc.msg)
        )
    for key in ("input_dim", "labels", "layers"):
        if key not in raw:
            raise NetworkFormatError("missing field %r in %s" % (key, path))
    layers = []
    for i, spec in enumerate(raw["layers"]):
        for key in ("weights", "bias", "activation"):
            if key not in spec:
                raise NetworkFormatError("layer %d: missing field %r" % (i, key))
        try:
            layers.append(Layer(spec["weights"], spec["bias"], spec["activation"]))
        except NetworkFormatError as exc:
            raise NetworkFormatError("layer %d: %s" % (i, exc))
        except (TypeError, ValueError) as exc:
            raise NetworkFormatError("layer %d: malformed arrays (%s)" % (i, exc))
    net = Network(
        input_dim=int(raw["input_dim"]),
        layers=layers,
        input_bounds=raw.get("input_bounds"),
    )
    if net.label_count != int(raw["labels"]):
        raise NetworkFormatError(
            "declared %d labels but final layer has %d outputs"
            % (int(raw["labels"]), net.label_count)
        )
    return net


def save_network(net: Network, path) -> None:
    """Write a network in the JSON schema accepted by load_network."""
    doc = {
        "input_dim": net.input_dim,
        "labels": net.label_count,
        "input_bounds": [[float(lo), float(hi)] for lo, hi in net.input_bounds],
        "layers": [
            {
                "weights": [[float(w) for w in row] for row in layer.weights],
                "bias": [float(b) for b in layer.bias],
                "activation": layer.activation,
            }
            for layer in net.layers
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def evaluate(net: Network, x) -> np.ndarray:
    """Forward pass for a single input; returns the raw score vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.input_dim,):
        raise ValueError(
            "input has shape %s, expected (%d,)" % (x.shape, net.input_dim)
        )
    z = x
    for layer in net.layers:
        z = layer.weights @ z + layer.bias
        if layer.activation == RELU:
            z = np.maximum(z, 0.0)
    return z


def evaluate_batch(net: Network, X) -> np.ndarray:
    """Forward pass for a batch of rows; returns an (n, label_count) array."""
    Z = np.asarray(X, dtype=float)
    if Z.ndim != 2 or Z.shape[1] != net.input_dim:
        raise ValueError("batch must have shape (n, %d)" % net.input_dim)
    for layer in net.layers:
        Z = Z @ layer.weights.T + layer.bias
        if layer.activation == RELU:
            Z = np.maximum(Z, 0.0)
    return Z


def predicted_label(net: Network, x) -> int:
    """Argmax label of ``evaluate(net, x)``; ties go to the lowest index."""
    return int(np.argmax(evaluate(net, x)))
