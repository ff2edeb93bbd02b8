"""Central-difference gradient checking for the layer primitives."""

from __future__ import annotations

from dataclasses import dataclass, field

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
    SoftmaxCrossEntropy,
    Trunc,
)


@dataclass
class Offender:
    group: str
    index: tuple[int, ...]
    analytic: float
    numeric: float

    @property
    def abs_error(self) -> float:
        return abs(self.analytic - self.numeric)


@dataclass
class GradCheckReport:
    name: str
    tol: float
    errors: dict[str, float] = field(default_factory=dict)
    checked: dict[str, int] = field(default_factory=dict)
    skipped: int = 0
    worst: list[Offender] = field(default_factory=list)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol

    def summary(self) -> str:
        groups = ", ".join(f"{g}={e:.2e}" for g, e in self.errors.items())
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: max rel err {self.max_error:.2e} (tol {self.tol:g}) [{groups}] skipped={self.skipped}"


class CrossEntropyProbe(Layer):
    """Adapter so the softmax cross-entropy loss can be checked like a layer."""

    kind = "softmax_xent"

    def __init__(self, labels):
        super().__init__()
        self.labels = np.asarray(labels)
        self.loss = SoftmaxCrossEntropy()

    def forward(self, x, train=False):
        value, _ = self.loss.forward(x, self.labels)
        return np.array([value])

    def backward(self, dy, need_input_grad=True):
        return dy[0] * self.loss.backward()


def _relative(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-12)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def grad_check(layer: Layer, x: np.ndarray, tol: float = 1e-4, step: float = 1e-5,
               seed: int = 0, name: str | None = None, n_worst: int = 5) -> GradCheckReport:
    """Compare ``layer.backward`` with central differences of ``sum(forward(x) * r)``.

    ``r`` is a fixed random projection.  Each gradient group (the input and
    every learnable parameter) gets one error figure: the largest absolute
    deviation divided by the largest gradient magnitude in that group.  Input
    elements within ``10 * step`` of a layer breakpoint are skipped.
    """
    x = np.array(x, dtype=np.float64)
    for p in layer.params().values():
        if p.data.dtype != np.float64:
            raise TypeError("gradient checks need double-precision parameters")
    rng = np.random.default_rng(seed)
    y = layer.forward(x, train=True)
    r = rng.standard_normal(y.shape)

    def loss() -> float:
        return float((layer.forward(x, train=True) * r).sum())

    layer.zero_grad()
    layer.forward(x, train=True)
    dx = layer.backward(r)
    groups = {"input": (x, dx)}
    for pname, p in layer.params().items():
        groups[pname] = (p.data, p.grad.copy())

    report = GradCheckReport(name=name or type(layer).__name__, tol=tol)
    near_kink = np.zeros(x.shape, dtype=bool)
    for bp in layer.breakpoints:
        near_kink |= np.abs(x - bp) < 10 * step
    offenders: list[Offender] = []
    for gname, (arr, analytic) in groups.items():
        numeric = np.zeros_like(arr)
        mask = np.ones(arr.shape, dtype=bool)
        if gname == "input":
            mask = ~near_kink
            report.skipped = int(near_kink.sum())
        for idx in zip(*np.nonzero(mask)):
            old = arr[idx]
            arr[idx] = old + step
            plus = loss()
            arr[idx] = old - step
            minus = loss()
            arr[idx] = old
            numeric[idx] = (plus - minus) / (2 * step)
        a, n = analytic[mask], numeric[mask]
        report.errors[gname] = _relative(a, n)
        report.checked[gname] = int(mask.sum())
        for flat in np.argsort(-np.abs(a - n))[:n_worst]:
            idx = tuple(int(i) for i in np.argwhere(mask)[flat])
            offenders.append(Offender(gname, idx, float(analytic[idx]), float(numeric[idx])))
    report.worst = sorted(offenders, key=lambda o: -o.abs_error)[:n_worst]
    return report


def layer_suite(seed: int = 0) -> list[tuple[str, Layer, np.ndarray]]:
    """Random double-precision instances of every layer type in the network."""
    rng = np.random.default_rng(seed)

    def normal(*shape):
        return rng.standard_normal(shape)

    return [
        ("conv2d 3x3 pad1", Conv2d(normal(4, 3, 3, 3), stride=1, pad=1), normal(2, 3, 6, 6)),
        ("conv2d 5x5 pad2", Conv2d(normal(2, 3, 5, 5), stride=1, pad=2), normal(2, 3, 7, 6)),
        ("conv2d 5x5 wide", Conv2d(normal(3, 5, 5, 5), stride=1, pad=2), normal(2, 5, 6, 5)),
        ("conv2d 3x3 stride2", Conv2d(normal(3, 2, 3, 3), stride=2, pad=1), normal(2, 2, 7, 7)),
        ("abs", Abs(), normal(2, 3, 5, 5)),
        ("trunc T=1", Trunc(1), 2.0 * normal(2, 3, 5, 5)),
        ("relu", ReLU(), normal(2, 3, 5, 5)),
        ("batch_norm train", BatchNorm(3), 3.0 * normal(4, 3, 4, 4) + 1.5),
        ("scale", Scale(normal(3), normal(3)), normal(2, 3, 4, 4)),
        ("avg_pool k5 s2 p2", AvgPool(5, 2, 2), normal(2, 2, 8, 7)),
        ("avg_pool k2 s2", AvgPool(2, 2, 0), normal(2, 2, 6, 6)),
        ("global_avg_pool", GlobalAvgPool(), normal(2, 3, 4, 5)),
        ("fully_connected", FullyConnected(normal(5, 18), normal(5)), normal(4, 2, 3, 3)),
        ("softmax_xent", CrossEntropyProbe(rng.integers(0, 2, size=6)), 2.0 * normal(6, 2)),
    ]


def run_suite(tol: float = 1e-4, seed: int = 0) -> list[GradCheckReport]:
    return [grad_check(layer, x, tol=tol, seed=seed, name=name) for name, layer, x in layer_suite(seed)]
