"""Feed-forward stacks with hand-written forward and backward passes.

The same :class:`NetworkStack` class backs the feature extractor, the label
predictor and the domain discriminator. Gradient reversal is a free
function applied to the gradient flowing from the discriminator back into
the feature extractor.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, ParameterError, ParseError, StateError
from .numeric import SeededRng, as_matrix

ACTIVATIONS = ("relu", "identity")


class AffineLayer:
    """``y = act(x W^T + b)`` with ``W`` of shape (out, in)."""

    def __init__(self, weight, bias, activation: str = "identity"):
        weight = as_matrix(weight)
        bias = np.asarray(bias, dtype=np.float64).reshape(-1)
        if activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {activation!r}")
        if bias.shape[0] != weight.shape[0]:
            raise DimensionError(
                f"bias of length {bias.shape[0]} does not match weight {weight.shape}"
            )
        self.weight = weight.copy()
        self.bias = bias.copy()
        self.activation = activation

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def init(cls, n_in: int, n_out: int, activation: str, rng: SeededRng) -> "AffineLayer":
        # normal(0, 1/sqrt(fan_in)) weights, zero bias
        w = rng.normal((n_out, n_in), 0.0, 1.0 / np.sqrt(n_in))
        return cls(w, np.zeros(n_out), activation)


@dataclass
class ParamGrads:
    weights: list
    biases: list

    @classmethod
    def zeros_like(cls, net: "NetworkStack") -> "ParamGrads":
        return cls([np.zeros_like(l.weight) for l in net.layers],
                   [np.zeros_like(l.bias) for l in net.layers])

    def __iadd__(self, other: "ParamGrads"):
        for a, b in zip(self.weights, other.weights):
            a += b
        for a, b in zip(self.biases, other.biases):
            a += b
        return self

    def arrays(self):
        """Parameter-ordered gradient arrays: w0, b0, w1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


class NetworkStack:
    def __init__(self, layers):
        layers = list(layers)
        if not layers:
            raise ParameterError("a network needs at least one layer")
        for i, (a, b) in enumerate(zip(layers, layers[1:])):
            if a.n_out != b.n_in:
                raise DimensionError(
                    f"layer {i} outputs {a.n_out} features but layer {i + 1} expects {b.n_in}"
                )
        self.layers = layers
        self._cache = None

    @classmethod
    def build(cls, widths, rng: SeededRng, hidden_activation: str = "relu",
              output_activation: str = "identity") -> "NetworkStack":
        """Stack of ``len(widths) - 1`` layers; the last uses ``output_activation``."""
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ParameterError(f"invalid widths {widths}")
        layers = []
        for i, (a, b) in enumerate(zip(widths, widths[1:])):
            act = output_activation if i == len(widths) - 2 else hidden_activation
            layers.append(AffineLayer.init(a, b, act, rng))
        return cls(layers)

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    def params(self):
        """Live parameter arrays in the order w0, b0, w1, b1, ..."""
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def forward(self, x) -> np.ndarray:
        x = as_matrix(x)
        if x.shape[1] != self.n_in:
            raise DimensionError(
                f"input has {x.shape[1]} columns, network expects {self.n_in}"
            )
        inputs, pre = [], []
        a = x
        for layer in self.layers:
            inputs.append(a)
            z = a @ layer.weight.T + layer.bias
            pre.append(z)
            a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        self._cache = (inputs, pre, a.shape)
        return a

    def predict(self, x) -> np.ndarray:
        """Forward pass that leaves the backward cache untouched."""
        cache = self._cache
        try:
            return self.forward(x)
        finally:
            self._cache = cache

    def backward(self, upstream_grad):
        """Reverse-mode pass for the last :meth:`forward` call.

        Returns the gradient with respect to the input batch and the
        parameter gradients of ``sum(output * upstream_grad)``.
        """
        if self._cache is None:
            raise StateError("backward called before forward")
        inputs, pre, out_shape = self._cache
        g = as_matrix(upstream_grad)
        if g.shape != out_shape:
            raise DimensionError(
                f"upstream gradient has shape {g.shape}, last output was {out_shape}"
            )
        n = len(self.layers)
        dw, db = [None] * n, [None] * n
        for i in range(n - 1, -1, -1):
            layer = self.layers[i]
            if layer.activation == "relu":
                # subgradient 0 at the kink
                g = g * (pre[i] > 0.0)
            dw[i] = g.T @ inputs[i]
            db[i] = g.sum(axis=0)
            g = g @ layer.weight
        return g, ParamGrads(dw, db)


def grad_reverse(upstream_grad, lambda2: float) -> np.ndarray:
    """Backward stage of the gradient-reversal layer (forward is identity)."""
    if lambda2 < 0:
        raise ParameterError(f"reversal coefficient must be >= 0, got {lambda2}")
    return -float(lambda2) * as_matrix(upstream_grad)


# Snapshot format (text, one token group per line):
#   fisherda-snapshot 1
#   net <name> <n_layers>
#   layer <activation> <out> <in>      followed by <out> weight rows and one bias row
#   array <name> <rows> <cols>          followed by <rows> rows
# Values are written with repr() so they round-trip exactly.

def _row(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_snapshot(path, nets: dict, arrays: dict | None = None) -> None:
    lines = ["fisherda-snapshot 1"]
    for name, net in nets.items():
        lines.append(f"net {name} {len(net.layers)}")
        for layer in net.layers:
            lines.append(f"layer {layer.activation} {layer.n_out} {layer.n_in}")
            lines += [_row(r) for r in layer.weight]
            lines.append(_row(layer.bias))
    for name, arr in (arrays or {}).items():
        arr = as_matrix(arr)
        lines.append(f"array {name} {arr.shape[0]} {arr.shape[1]}")
        lines += [_row(r) for r in arr]
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def load_snapshot(path):
    """Inverse of :func:`save_snapshot`; returns ``(nets, arrays)``."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "fisherda-snapshot 1":
        raise ParseError("not a fisherda snapshot", row=1)
    pos = 1

    def take_rows(count, width):
        nonlocal pos
        rows = []
        for _ in range(count):
            if pos >= len(lines):
                raise ParseError("unexpected end of snapshot", row=pos + 1)
            vals = lines[pos].split()
            if len(vals) != width:
                raise ParseError(f"expected {width} values, got {len(vals)}", row=pos + 1)
            try:
                rows.append([float(v) for v in vals])
            except ValueError as exc:
                raise ParseError(str(exc), row=pos + 1) from None
            pos += 1
        return np.array(rows, dtype=np.float64).reshape(count, width)

    nets, arrays = {}, {}
    while pos < len(lines):
        head = lines[pos].split()
        pos += 1
        if not head:
            continue
        try:
            if head[0] == "net":
                name, n_layers = head[1], int(head[2])
                layers = []
                for _ in range(n_layers):
                    spec = lines[pos].split()
                    pos += 1
                    if spec[0] != "layer":
                        raise ParseError("expected a layer header", row=pos)
                    act, n_out, n_in = spec[1], int(spec[2]), int(spec[3])
                    w = take_rows(n_out, n_in)
                    b = take_rows(1, n_out)[0]
                    layers.append(AffineLayer(w, b, act))
                nets[name] = NetworkStack(layers)
            elif head[0] == "array":
                arrays[head[1]] = take_rows(int(head[2]), int(head[3]))
            else:
                raise ParseError(f"unknown record {head[0]!r}", row=pos)
        except (IndexError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"malformed header: {exc}", row=pos) from None
    return nets, arrays
