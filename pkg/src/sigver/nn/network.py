"""Declarative layer specs and the network built from them."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import ConfigError, ShapeError
from . import functional as F

KINDS = ("conv", "lrn", "maxpool", "fc", "dropout", "relu", "softmax")

_DEFAULTS = {
    "conv": {"stride": 1, "pad": 0},
    "lrn": {"alpha": 1e-4, "beta": 0.75, "k": 2.0, "n": 5},
    "maxpool": {"size": 3, "stride": 2},
    "dropout": {"p": 0.5},
}
_REQUIRED = {"conv": ("filters", "size"), "fc": ("units",)}


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        for key in _REQUIRED.get(self.kind, ()):
            if key not in self.params:
                raise ConfigError(f"{self.kind} layer needs {key!r}")
        merged = {**_DEFAULTS.get(self.kind, {}), **self.params}
        object.__setattr__(self, "params", merged)

    def __getitem__(self, key):
        return self.params[key]


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]
    name: str = ""

    @property
    def feature_layer_index(self) -> int:
        """Index of the final fc layer; features are what feeds into it."""
        fcs = [i for i, l in enumerate(self.layers) if l.kind == "fc"]
        if len(fcs) < 2:
            raise ConfigError("network needs a hidden fc layer before the classifier")
        return fcs[-1]


def _parse_value(text: str):
    if re.fullmatch(r"[+-]?\d+", text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        return text


def parse_network_spec(text: str, name: str = "") -> NetworkSpec:
    """Parse the line format used by the bundled ``*.net`` files.

    One layer per line: ``kind key=value ...``; ``#`` starts a comment. The
    first statement must be ``input C H W``. ``fc units=classes`` is
    resolved when the network is built.
    """
    input_shape = None
    layers = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        if head == "input":
            if len(rest) != 3:
                raise ConfigError(f"line {lineno}: input needs C H W")
            input_shape = tuple(int(v) for v in rest)
            continue
        params = {}
        for tok in rest:
            if "=" not in tok:
                raise ConfigError(f"line {lineno}: expected key=value, got {tok!r}")
            k, v = tok.split("=", 1)
            params[k] = _parse_value(v)
        layers.append(LayerSpec(head, params))
    if input_shape is None:
        raise ConfigError("network spec lacks an input line")
    return NetworkSpec(input_shape, tuple(layers), name)


def load_network_spec(source: str) -> NetworkSpec:
    """Load ``canonical``/``reduced`` from the bundled specs, or a file path."""
    path = Path(source)
    if path.is_file():
        return parse_network_spec(path.read_text(encoding="utf-8"), path.stem)
    bundled = resources.files("sigver.specs") / f"{source}.net"
    if not bundled.is_file():
        raise ConfigError(f"no network spec file or bundled spec named {source!r}")
    return parse_network_spec(bundled.read_text(encoding="utf-8"), source)


def glorot_fans(shape: tuple[int, ...]) -> tuple[int, int]:
    if len(shape) == 2:
        return shape[1], shape[0]
    receptive = math.prod(shape[2:])
    return shape[1] * receptive, shape[0] * receptive


def glorot_init(shape, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """Uniform Glorot/Bengio init on ``[-L, L]``, ``L = sqrt(6/(fan_in+fan_out))``."""
    fan_in, fan_out = glorot_fans(tuple(shape))
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """One instantiated layer: parameters, forward cache and gradients."""

    def __init__(self, spec: LayerSpec, in_shape: tuple[int, ...], n_classes: int | None):
        self.spec = spec
        self.in_shape = in_shape
        self.params: list[np.ndarray] = []
        self.grads: list[np.ndarray] = []
        self._cache = None
        kind = spec.kind
        if kind == "conv":
            c, h, w = in_shape
            size = spec["size"]
            if size > h + 2 * spec["pad"] or size > w + 2 * spec["pad"]:
                raise ShapeError(f"conv kernel {size} does not fit input {in_shape}")
            self.param_shapes = [(spec["filters"], c, size, size), (spec["filters"],)]
            self.out_shape = (
                spec["filters"],
                F.conv_output_size(h, size, spec["stride"], spec["pad"]),
                F.conv_output_size(w, size, spec["stride"], spec["pad"]),
            )
        elif kind == "maxpool":
            c, h, w = in_shape
            if spec["size"] > min(h, w):
                raise ShapeError(f"pool window {spec['size']} does not fit input {in_shape}")
            self.param_shapes = []
            self.out_shape = (
                c,
                F.conv_output_size(h, spec["size"], spec["stride"], 0),
                F.conv_output_size(w, spec["size"], spec["stride"], 0),
            )
        elif kind == "fc":
            units = spec["units"]
            if units == "classes":
                if n_classes is None:
                    raise ConfigError("fc units=classes needs the number of classes")
                units = n_classes
            self.param_shapes = [(int(units), math.prod(in_shape)), (int(units),)]
            self.out_shape = (int(units),)
        else:
            self.param_shapes = []
            self.out_shape = in_shape

    @property
    def kind(self) -> str:
        return self.spec.kind

    def init_params(self, rng: np.random.Generator, dtype) -> None:
        self.params = []
        if self.param_shapes:
            self.params = [glorot_init(self.param_shapes[0], rng, dtype), np.zeros(self.param_shapes[1], dtype)]

    def forward(self, x, train: bool, rng):
        s, kind = self.spec, self.kind
        if kind == "conv":
            y, self._cache = F.conv2d_forward(x, self.params[0], self.params[1], s["stride"], s["pad"])
        elif kind == "lrn":
            y, self._cache = F.lrn_forward(x, s["alpha"], s["beta"], s["k"], s["n"])
        elif kind == "maxpool":
            y, self._cache = F.maxpool_forward(x, s["size"], s["stride"])
        elif kind == "fc":
            y, self._cache = F.fc_forward(x, self.params[0], self.params[1])
        elif kind == "relu":
            y, self._cache = F.relu_forward(x)
        elif kind == "dropout":
            y, self._cache = F.dropout_forward(x, s["p"], train, rng)
        else:  # softmax is folded into the loss
            y = x
        return y

    def backward(self, g):
        kind = self.kind
        if kind == "conv":
            gx, gw, gb = F.conv2d_backward(g, self._cache)
            self.grads = [gw, gb]
        elif kind == "fc":
            gx, gw, gb = F.fc_backward(g, self._cache)
            self.grads = [gw, gb]
        elif kind == "lrn":
            gx = F.lrn_backward(g, self._cache)
        elif kind == "maxpool":
            gx = F.maxpool_backward(g, self._cache)
        elif kind == "relu":
            gx = F.relu_backward(g, self._cache)
        elif kind == "dropout":
            gx = F.dropout_backward(g, self._cache)
        else:
            gx = g
        return gx


class Network:
    def __init__(self, spec: NetworkSpec, n_classes: int, dtype=np.float32):
        self.spec = spec
        self.n_classes = n_classes
        self.dtype = np.dtype(dtype)
        self.layers: list[Layer] = []
        shape = tuple(spec.input_shape)
        for ls in spec.layers:
            layer = Layer(ls, shape, n_classes)
            self.layers.append(layer)
            shape = layer.out_shape
        if shape != (n_classes,):
            raise ShapeError(f"network output shape {shape} != ({n_classes},)")
        self.feature_index = spec.feature_layer_index

    @classmethod
    def initialize(cls, spec: NetworkSpec, n_classes: int, seed: int, dtype=np.float32) -> "Network":
        net = cls(spec, n_classes, dtype)
        rng = np.random.default_rng(seed)
        for layer in net.layers:
            layer.init_params(rng, net.dtype)
        return net

    @property
    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    @property
    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    @property
    def decay_mask(self) -> list[bool]:
        """True for weight tensors, False for biases."""
        return [i == 0 for layer in self.layers for i in range(len(layer.params))]

    @property
    def shape_chain(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(layer.kind, layer.out_shape) for layer in self.layers]

    @property
    def feature_dim(self) -> int:
        return math.prod(self.layers[self.feature_index].in_shape)

    def _check_input(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 3:
            x = x[:, None]
        if x.shape[1:] != tuple(self.spec.input_shape):
            raise ShapeError(f"input batch {x.shape[1:]} != network input {self.spec.input_shape}")
        return x

    def forward(self, x, train: bool = False, rng: np.random.Generator | None = None, stop: int | None = None):
        """Logits for a batch (N, C, H, W) or (N, H, W); ``stop`` truncates."""
        x = self._check_input(x)
        for layer in self.layers[:stop]:
            x = layer.forward(x, train, rng)
        return x

    def backward(self, grad_logits) -> np.ndarray:
        g = grad_logits
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def loss_and_grads(self, x, labels, rng=None, train: bool = True):
        logits = self.forward(x, train=train, rng=rng)
        loss, g = F.softmax_xent(logits.astype(np.float64), labels)
        self.backward(g.astype(self.dtype))
        return loss, logits

    def extract_features(self, x, batch_size: int = 64) -> np.ndarray:
        """Inference-mode activations feeding the classifier layer, one row per image."""
        x = self._check_input(x)
        out = [
            self.forward(x[i:i + batch_size], train=False, stop=self.feature_index).reshape(len(x[i:i + batch_size]), -1)
            for i in range(0, len(x), batch_size)
        ]
        return np.concatenate(out) if out else np.zeros((0, self.feature_dim), self.dtype)

    def predict(self, x, batch_size: int = 64) -> np.ndarray:
        x = self._check_input(x)
        return np.concatenate([self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)])
