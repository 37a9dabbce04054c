"""Feedforward networks: representation, JSON loading, evaluation, margin construction."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when layer dimensions do not chain."""


class ActivationKind(str, enum.Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"
    IDENTITY = "none"

    @classmethod
    def parse(cls, name) -> "ActivationKind":
        if isinstance(name, cls):
            return name
        if name is None:
            return cls.IDENTITY
        key = str(name).lower()
        if key in ("none", "identity", "linear"):
            return cls.IDENTITY
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown activation {name!r}") from None

    @property
    def is_sigmoidal(self) -> bool:
        return self is not ActivationKind.IDENTITY


@dataclass(frozen=True)
class AffineLayer:
    weights: np.ndarray
    bias: np.ndarray
    activation: ActivationKind = ActivationKind.IDENTITY

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, ndmin=2)
        b = np.array(self.bias, dtype=np.float64).reshape(-1)
        if w.ndim != 2:
            raise ShapeError(f"weights must be a matrix, got shape {w.shape}")
        if b.shape[0] != w.shape[0]:
            raise ShapeError(f"bias length {b.shape[0]} != weight rows {w.shape[0]}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("layer parameters must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "activation", ActivationKind.parse(self.activation))

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class Network:
    """Sequence of affine layers, each followed by its activation.

    Identity layers may appear anywhere here (margin networks stack one after the
    original logits); files read by :func:`load_network` only allow it last.
    """

    layers: tuple[AffineLayer, ...] = field()

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ShapeError("a network needs at least one layer")
        for i in range(1, len(layers)):
            if layers[i].in_dim != layers[i - 1].out_dim:
                raise ShapeError(
                    f"layer {i} expects {layers[i].in_dim} inputs but layer {i - 1} "
                    f"produces {layers[i - 1].out_dim}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def __len__(self):
        return len(self.layers)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "layers": [
                {
                    "type": "dense",
                    "weights": layer.weights.tolist(),
                    "bias": layer.bias.tolist(),
                    "activation": layer.activation.value,
                }
                for layer in self.layers
            ],
        }


@dataclass(frozen=True)
class InputRegion:
    """l-infinity ball of radius ``radius`` around ``center``."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.array(self.center, dtype=np.float64).reshape(-1)
        c.setflags(write=False)
        if not np.isfinite(self.radius) or self.radius < 0:
            raise ValueError(f"radius must be a finite nonnegative number, got {self.radius}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.radius

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.radius

    def check_dim(self, net: Network):
        if self.center.shape[0] != net.input_dim:
            raise ShapeError(
                f"region has dimension {self.center.shape[0]}, network expects {net.input_dim}"
            )


def _apply_activation(kind: ActivationKind, z: np.ndarray) -> np.ndarray:
    if kind is ActivationKind.SIGMOID:
        # scipy's expit is stable for large |z|
        from scipy.special import expit

        return expit(z)
    if kind is ActivationKind.TANH:
        return np.tanh(z)
    return z


def eval_forward(net: Network, x) -> np.ndarray:
    """Evaluate ``net`` at ``x``; a 2-D ``x`` is treated as a batch of rows."""
    z = np.asarray(x, dtype=np.float64)
    if z.shape[-1] != net.input_dim:
        raise ShapeError(f"input has dimension {z.shape[-1]}, network expects {net.input_dim}")
    for layer in net.layers:
        z = _apply_activation(layer.activation, z @ layer.weights.T + layer.bias)
    return z


def eval_preactivations(net: Network, x) -> list[np.ndarray]:
    """Pre-activation values of every layer, for a single input or a batch."""
    z = np.asarray(x, dtype=np.float64)
    out = []
    for layer in net.layers:
        pre = z @ layer.weights.T + layer.bias
        out.append(pre)
        z = _apply_activation(layer.activation, pre)
    return out


def append_margin_layer(net: Network, true_label: int, other_label: int) -> Network:
    """Network computing ``f[true_label](x) - f[other_label](x)``."""
    m = net.output_dim
    for name, idx in (("true_label", true_label), ("other_label", other_label)):
        if not 0 <= idx < m:
            raise IndexError(f"{name}={idx} out of range for {m} outputs")
    if true_label == other_label:
        raise ValueError("true_label and other_label must differ")
    if net.layers[-1].activation is not ActivationKind.IDENTITY:
        raise ValueError("margin layer requires an identity output layer")
    row = np.zeros((1, m))
    row[0, true_label] = 1.0
    row[0, other_label] = -1.0
    margin = AffineLayer(row, np.zeros(1), ActivationKind.IDENTITY)
    return Network(net.layers + (margin,))


def gen_random_network(
    sizes: Sequence[int],
    activation="sigmoid",
    scale: float = 1.0,
    seed: int = 0,
) -> Network:
    """Random dense network with weights and biases uniform in [-scale, scale].

    ``sizes`` lists the layer widths from input to output; every hidden layer
    gets ``activation`` and the output layer is identity.
    """
    sizes = list(sizes)
    if len(sizes) < 2:
        raise ValueError("sizes must name an input width and at least one layer width")
    if scale <= 0:
        raise ValueError("scale must be positive")
    kind = ActivationKind.parse(activation)
    rng = np.random.default_rng(seed)
    layers = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        w = rng.uniform(-scale, scale, size=(n_out, n_in))
        b = rng.uniform(-scale, scale, size=n_out)
        last = i == len(sizes) - 2
        layers.append(AffineLayer(w, b, ActivationKind.IDENTITY if last else kind))
    return Network(tuple(layers))


def conv2d_to_dense(kernel, input_shape, stride: int = 1, padding: int = 0, bias=None):
    """Lower a 2-D convolution to an equivalent (weights, bias) pair.

    ``kernel`` is ``(out_c, in_c, kh, kw)`` or a single-channel ``(kh, kw)``;
    inputs and outputs are flattened in channel-height-width order.
    """
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim == 2:
        k = k[None, None]
    if k.ndim != 4:
        raise ShapeError(f"conv kernel must be 2-D or 4-D, got shape {k.shape}")
    out_c, in_c, kh, kw = k.shape
    c, h, w = (int(v) for v in input_shape)
    if c != in_c:
        raise ShapeError(f"kernel expects {in_c} input channels, input has {c}")
    if stride < 1 or padding < 0:
        raise ValueError("stride must be >= 1 and padding >= 0")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ShapeError("kernel larger than padded input")
    dense = np.zeros((out_c, oh, ow, c, h, w))
    for i in range(oh):
        for j in range(ow):
            for di in range(kh):
                for dj in range(kw):
                    r = i * stride + di - padding
                    s = j * stride + dj - padding
                    if 0 <= r < h and 0 <= s < w:
                        dense[:, i, j, :, r, s] = k[:, :, di, dj]
    b = np.zeros(out_c) if bias is None else np.asarray(bias, dtype=np.float64).reshape(-1)
    if b.shape[0] != out_c:
        raise ShapeError(f"conv bias length {b.shape[0]} != output channels {out_c}")
    return dense.reshape(out_c * oh * ow, c * h * w), np.repeat(b, oh * ow)


def network_from_dict(spec: dict) -> Network:
    try:
        raw_layers = spec["layers"]
    except (KeyError, TypeError):
        raise ValueError("network description needs a 'layers' list") from None
    layers = []
    for i, item in enumerate(raw_layers):
        kind = item.get("type", "dense")
        act = ActivationKind.parse(item.get("activation", "none"))
        if kind == "dense":
            layer = AffineLayer(item["weights"], item["bias"], act)
        elif kind == "conv2d":
            w, b = conv2d_to_dense(
                item["kernel"],
                item["input_shape"],
                stride=int(item.get("stride", 1)),
                padding=int(item.get("padding", 0)),
                bias=item.get("bias"),
            )
            layer = AffineLayer(w, b, act)
        else:
            raise ValueError(f"unsupported layer type {kind!r} at index {i}")
        if act is ActivationKind.IDENTITY and i != len(raw_layers) - 1:
            raise ValueError(f"identity activation only allowed on the final layer (layer {i})")
        layers.append(layer)
    net = Network(tuple(layers))
    if "input_dim" in spec and int(spec["input_dim"]) != net.input_dim:
        raise ShapeError(f"declared input_dim {spec['input_dim']} != first layer width {net.input_dim}")
    return net


def load_network(source: str | bytes | IO) -> Network:
    """Parse a network from a JSON string, bytes, or readable stream."""
    if hasattr(source, "read"):
        source = source.read()
    try:
        spec = json.loads(source)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed network JSON: {exc}") from exc
    return network_from_dict(spec)


def save_network(net: Network, fh: IO[str]):
    json.dump(net.to_dict(), fh)


def load_instances(source: str | bytes | IO) -> list[dict]:
    """Parse an instance file: a JSON array of ``{"x0", "label", "epsilon"}``."""
    if hasattr(source, "read"):
        source = source.read()
    items = json.loads(source)
    out = []
    for item in items:
        out.append(
            {
                "x0": np.asarray(item["x0"], dtype=np.float64),
                "label": int(item["label"]),
                "epsilon": float(item.get("epsilon", 0.0)),
            }
        )
    return out
