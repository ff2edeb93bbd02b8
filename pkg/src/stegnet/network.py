"""Config-driven layer graph and the five-block steganalysis topology."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .layers import (
    Abs,
    AvgPool,
    BatchNorm,
    Conv2d,
    FullyConnected,
    GlobalAvgPool,
    Layer,
    ReLU,
    Scale,
    Softmax,
    SoftmaxCrossEntropy,
    Trunc,
    same_pad,
)
from .srm import N_FILTERS, preprocess_layer
from .tensor import ShapeError, Tensor, check_rank4

MIN_INPUT_SIZE = 32
KINDS = ("preproc", "conv", "abs", "bn", "scale", "trunc", "relu", "avgpool", "globalpool", "fc", "softmax")


class BuildError(ValueError):
    """A layer list or config that cannot form a valid graph."""


@dataclass
class NetConfig:
    widths: tuple[int, ...] = (30, 30, 32, 64, 256)
    kernel_sizes: tuple[int, ...] = (5, 5, 3, 3, 3)
    trunc_thresholds: tuple[int, int] = (3, 2)
    pool_window: int = 5
    pool_stride: int = 2
    fc_widths: tuple[int, ...] = (256, 1024, 2)
    input_size: int = 256
    bn_eps: float = 1e-5
    bn_momentum: float = 0.9

    def __post_init__(self):
        for f in ("widths", "kernel_sizes", "trunc_thresholds", "fc_widths"):
            setattr(self, f, tuple(int(v) for v in getattr(self, f)))

    def validate(self) -> None:
        if len(self.widths) != 5 or len(self.kernel_sizes) != 5:
            raise BuildError("exactly five convolutional blocks are required")
        if any(w < 1 for w in self.widths):
            raise BuildError(f"block widths must be positive: {self.widths}")
        if any(k not in (3, 5) for k in self.kernel_sizes):
            raise BuildError(f"kernel sizes must be 3 or 5: {self.kernel_sizes}")
        if len(self.trunc_thresholds) != 2 or any(t < 1 for t in self.trunc_thresholds):
            raise BuildError(f"two positive truncation thresholds are required: {self.trunc_thresholds}")
        if not self.fc_widths or self.fc_widths[-1] != 2:
            raise BuildError(f"the last fully connected layer must have 2 units: {self.fc_widths}")
        if self.pool_window < 2 or self.pool_stride < 1:
            raise BuildError("pool window must be >= 2 and stride >= 1")
        if self.input_size < MIN_INPUT_SIZE:
            raise BuildError(f"input_size must be >= {MIN_INPUT_SIZE}")

    def to_dict(self) -> dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "NetConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise BuildError(f"unknown network config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "NetConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class LayerSpec:
    name: str
    kind: str
    args: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "kind": self.kind, "args": dict(self.args)}


def network_specs(cfg: NetConfig) -> list[LayerSpec]:
    cfg.validate()
    specs = [LayerSpec("preproc", "preproc")]
    t1, t2 = cfg.trunc_thresholds
    pool = {"k": cfg.pool_window, "stride": cfg.pool_stride, "pad": same_pad(cfg.pool_window)}
    bn = {"eps": cfg.bn_eps, "stat_momentum": cfg.bn_momentum}
    in_ch = N_FILTERS
    for b, (width, k) in enumerate(zip(cfg.widths, cfg.kernel_sizes), start=1):
        p = f"block{b}"
        specs.append(LayerSpec(f"{p}.conv", "conv", {"in_channels": in_ch, "out_channels": width, "k": k}))
        if b == 1:
            specs.append(LayerSpec(f"{p}.abs", "abs"))
        specs.append(LayerSpec(f"{p}.bn", "bn", {"channels": width, **bn}))
        specs.append(LayerSpec(f"{p}.scale", "scale", {"channels": width}))
        if b <= 2:
            specs.append(LayerSpec(f"{p}.trunc", "trunc", {"T": t1 if b == 1 else t2}))
        else:
            specs.append(LayerSpec(f"{p}.relu", "relu"))
        if b == 5:
            specs.append(LayerSpec(f"{p}.pool", "globalpool"))
        elif b >= 2:
            specs.append(LayerSpec(f"{p}.pool", "avgpool", dict(pool)))
        in_ch = width
    for i, units in enumerate(cfg.fc_widths, start=1):
        specs.append(LayerSpec(f"fc{i}", "fc", {"in_features": in_ch, "out_features": units}))
        if i < len(cfg.fc_widths):
            specs.append(LayerSpec(f"fc{i}.relu", "relu"))
        in_ch = units
    specs.append(LayerSpec("softmax", "softmax"))
    return specs


def _make_layer(spec: LayerSpec, dtype) -> Layer:
    a = spec.args
    kind = spec.kind
    if kind == "preproc":
        return preprocess_layer(dtype=dtype)
    if kind == "conv":
        k = a["k"]
        w = Tensor(np.zeros((a["out_channels"], a["in_channels"], k, k), dtype=dtype))
        return Conv2d(w, stride=a.get("stride", 1), pad=a.get("pad", same_pad(k)))
    if kind == "abs":
        return Abs()
    if kind == "bn":
        return BatchNorm(a["channels"], eps=a.get("eps", 1e-5), stat_momentum=a.get("stat_momentum", 0.9))
    if kind == "scale":
        return Scale.identity(a["channels"], dtype=dtype)
    if kind == "trunc":
        return Trunc(a["T"])
    if kind == "relu":
        return ReLU()
    if kind == "avgpool":
        return AvgPool(a["k"], a["stride"], a.get("pad", 0))
    if kind == "globalpool":
        return GlobalAvgPool()
    if kind == "fc":
        return FullyConnected(np.zeros((a["out_features"], a["in_features"]), dtype=dtype),
                              np.zeros(a["out_features"], dtype=dtype))
    if kind == "softmax":
        return Softmax()
    raise BuildError(f"{spec.name}: unknown layer kind {kind!r}")


class NetworkGraph:
    """Ordered layers with named parameters.

    ``forward`` returns class probabilities (and the mean cross-entropy when
    labels are given); in train mode it keeps the buffers ``backward`` needs.
    """

    def __init__(self, specs: list[LayerSpec], input_size: int = 256,
                 config: NetConfig | None = None, dtype=np.float32):
        self.specs = list(specs)
        self.input_size = input_size
        self.config = config
        self.dtype = np.dtype(dtype)
        self.mode = "eval"
        self._check_order()
        self.layers: list[Layer] = []
        for spec in self.specs:
            try:
                self.layers.append(_make_layer(spec, self.dtype))
            except (KeyError, ValueError) as exc:
                raise BuildError(f"{spec.name}: {exc}") from exc
        self.shapes = self.trace_shapes((1, 1, input_size, input_size))
        self._loss = SoftmaxCrossEntropy()

    def _check_order(self) -> None:
        kinds = [s.kind for s in self.specs]
        names = [s.name for s in self.specs]
        if len(set(names)) != len(names):
            raise BuildError("layer names must be unique")
        for s in self.specs:
            if s.kind not in KINDS:
                raise BuildError(f"{s.name}: unknown layer kind {s.kind!r}")
        if kinds.count("preproc") != 1 or kinds[0] != "preproc":
            raise BuildError(f"{names[0] if names else '<empty>'}: exactly one preproc layer is required, first")
        if kinds.count("softmax") != 1 or kinds[-1] != "softmax":
            raise BuildError(f"{names[-1]}: exactly one softmax layer is required, last")
        for s in self.specs:
            if s.kind == "conv" and s.args.get("bias"):
                raise BuildError(f"{s.name}: convolution layers carry no bias")

    def trace_shapes(self, shape: tuple[int, ...]) -> list[tuple[int, ...]]:
        out = []
        for spec, layer in zip(self.specs, self.layers):
            try:
                shape = layer.output_shape(shape)
            except ShapeError as exc:
                raise BuildError(f"{spec.name}: {exc}") from exc
            out.append(shape)
        return out

    def __iter__(self):
        return iter(zip(self.specs, self.layers))

    def layer(self, name: str) -> Layer:
        for spec, layer in self:
            if spec.name == name:
                return layer
        raise KeyError(name)

    def named_params(self) -> dict[str, Tensor]:
        return {f"{spec.name}.{pname}": p for spec, layer in self for pname, p in layer.params().items()}

    def named_buffers(self) -> dict[str, np.ndarray | None]:
        return {f"{spec.name}.{bname}": b for spec, layer in self for bname, b in layer.buffers().items()}

    def train(self) -> "NetworkGraph":
        self.mode = "train"
        return self

    def eval(self) -> "NetworkGraph":
        self.mode = "eval"
        return self

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()

    def logits(self, x: np.ndarray, train: bool) -> np.ndarray:
        for layer in self.layers[:-1]:
            x = layer.forward(x, train=train)
        return x

    def forward(self, batch: np.ndarray, labels=None, mode: str | None = None):
        mode = mode or self.mode
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        check_rank4(batch, "network input")
        if batch.shape[1] != 1:
            raise ShapeError("network input channels", 1, batch.shape[1])
        if min(batch.shape[2:]) < MIN_INPUT_SIZE:
            raise ShapeError("network input height/width", f">= {MIN_INPUT_SIZE}", batch.shape[2:])
        x = np.asarray(batch, dtype=self.dtype)
        z = self.logits(x, train=mode == "train")
        if labels is None:
            return self.layers[-1].forward(z), None
        loss, probs = self._loss.forward(z, labels)
        return probs, loss

    def backward(self) -> None:
        """Accumulate parameter gradients of the last labelled forward."""
        dy = self._loss.backward().astype(self.dtype, copy=False)
        first_learnable = next(i for i, layer in enumerate(self.layers) if layer.params())
        for i in range(len(self.layers) - 2, first_learnable - 1, -1):
            dy = self.layers[i].backward(dy, need_input_grad=i > first_learnable)

    def calibrate_bn(self, batches) -> None:
        """Initialise batch-norm running statistics without touching weights."""
        for x in batches:
            self.logits(np.asarray(x, dtype=self.dtype), train=True)

    def parameter_count(self) -> tuple[int, int]:
        """``(learnable excluding bn/scale, all learnable)``; the fixed bank counts for neither."""
        excl = total = 0
        for spec, layer in self:
            n = sum(p.size for p in layer.params().values())
            total += n
            if spec.kind not in ("bn", "scale"):
                excl += n
        return excl, total

    def describe(self) -> str:
        lines = []
        for (spec, layer), shape in zip(self, self.shapes):
            lines.append(f"{spec.name:14s} {layer!r:48s} -> {shape}")
        return "\n".join(lines)

    def config_text(self) -> str:
        payload = {
            "config": self.config.to_dict() if self.config is not None else None,
            "input_size": self.input_size,
            "layers": [s.to_dict() for s in self.specs],
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_config_text(cls, text: str) -> "NetworkGraph":
        payload = json.loads(text)
        cfg = NetConfig.from_dict(payload["config"]) if payload.get("config") else None
        specs = [LayerSpec(d["name"], d["kind"], d.get("args", {})) for d in payload["layers"]]
        return cls(specs, input_size=payload["input_size"], config=cfg)


def build_graph(specs: list[LayerSpec], input_size: int = 256) -> NetworkGraph:
    return NetworkGraph(specs, input_size=input_size)


def build_network(cfg: NetConfig | None = None) -> NetworkGraph:
    cfg = cfg or NetConfig()
    return NetworkGraph(network_specs(cfg), input_size=cfg.input_size, config=cfg)


def init_xavier(g: NetworkGraph, seed: int = 0) -> NetworkGraph:
    """Gaussian Xavier init: conv/fc weights ~ N(0, 2 / (fan_in + fan_out)),
    fc biases 0, scale gamma 1 and beta 0."""
    rng = np.random.default_rng(seed)
    for spec, layer in g:
        if isinstance(layer, Conv2d) and layer.learnable:
            o, c, kh, kw = layer.weight.shape
            std = np.sqrt(2.0 / (c * kh * kw + o * kh * kw))
            layer.weight.data[...] = rng.normal(0.0, std, layer.weight.shape)
        elif isinstance(layer, FullyConnected):
            o, i = layer.weight.shape
            layer.weight.data[...] = rng.normal(0.0, np.sqrt(2.0 / (i + o)), layer.weight.shape)
            layer.bias.data[...] = 0
        elif isinstance(layer, Scale):
            layer.gamma.data[...] = 1
            layer.beta.data[...] = 0
    return g
