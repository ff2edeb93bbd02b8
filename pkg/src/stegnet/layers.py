"""Layer primitives with hand-written forward and backward passes.

Every layer maps a rank-4 ``(n, c, h, w)`` array to another array (the fully
connected layer flattens and returns ``(n, units)``).  ``forward(x, train=True)``
caches what ``backward`` needs; ``forward(x, train=False)`` keeps nothing.
Parameter gradients are accumulated into ``Tensor.grad``.
"""

from __future__ import annotations

import numpy as np

from .tensor import NumericalError, ShapeError, Tensor, check_finite, check_rank4


class Layer:
    kind = "layer"
    # input values where the layer is not differentiable; the gradient checker
    # skips probe points close to these
    breakpoints: tuple[float, ...] = ()

    def __init__(self):
        self.cache = None

    def params(self) -> dict[str, Tensor]:
        return {}

    def buffers(self) -> dict[str, np.ndarray | None]:
        return {}

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        return shape

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray, need_input_grad: bool = True) -> np.ndarray | None:
        raise NotImplementedError

    def zero_grad(self) -> None:
        for p in self.params().values():
            p.zero_grad()

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def same_pad(k: int) -> int:
    """Symmetric zero padding that preserves the spatial size at stride 1."""
    return (k - 1) // 2


class Conv2d(Layer):
    """Bias-free 2D cross-correlation (no kernel flip).

    The input is zero padded and laid out as ``(c, n * hp * wp)``; the
    contribution of kernel tap ``(a, b)`` is then a contiguous shift of that
    buffer by ``a * wp + b``, so the forward pass is k*k small GEMMs on views
    and no im2col matrix is materialised.  Outputs are computed on the full
    padded grid and cropped; stride > 1 subsamples the stride-1 result.
    """

    kind = "conv"
    STACK_LIMIT = 100

    def __init__(self, weight, stride: int = 1, pad: int = 0, learnable: bool = True):
        super().__init__()
        w = weight if isinstance(weight, Tensor) else Tensor(weight, requires_grad=learnable)
        if w.data.ndim != 4 or w.shape[2] != w.shape[3]:
            raise ShapeError("conv weight", "(out, in, k, k)", w.shape)
        if stride < 1:
            raise ValueError(f"stride must be positive, got {stride}")
        if pad < 0:
            raise ValueError(f"pad must be non-negative, got {pad}")
        self.weight = w
        self.stride = stride
        self.pad = pad
        self.learnable = learnable

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def k(self) -> int:
        return self.weight.shape[2]

    def params(self):
        return {"weight": self.weight} if self.learnable else {}

    def output_shape(self, shape):
        n, c, h, w = shape
        if c != self.in_channels:
            raise ShapeError("conv input channels", self.in_channels, c)
        ho = conv_output_size(h, self.k, self.stride, self.pad)
        wo = conv_output_size(w, self.k, self.stride, self.pad)
        if ho < 1 or wo < 1:
            raise ShapeError("conv input height/width", f">= {self.k - 2 * self.pad}", (h, w))
        return (n, self.out_channels, ho, wo)

    def forward(self, x, train=False):
        check_rank4(x, "conv input")
        n, c, h, w = x.shape
        self.output_shape(x.shape)
        check_finite(x, "conv input")
        k, p, s = self.k, self.pad, self.stride
        hp, wp = h + 2 * p, w + 2 * p
        length = n * hp * wp
        tail = (k - 1) * wp + (k - 1)
        dtype = np.result_type(x.dtype, self.weight.data.dtype)

        xf = np.zeros((c, length + tail), dtype=dtype)
        xf[:, :length].reshape(c, n, hp, wp)[:, :, p:p + h, p:p + w] = x.transpose(1, 0, 2, 3)
        taps = self.weight.data.astype(dtype, copy=False).transpose(2, 3, 0, 1).copy()

        if c * k * k <= self.STACK_LIMIT:
            # few input channels: one GEMM over all stacked taps beats k*k
            # rank-c updates
            stacked = np.empty((k * k * c, length), dtype=dtype)
            for a in range(k):
                for b in range(k):
                    off = a * wp + b
                    t = (a * k + b) * c
                    stacked[t:t + c] = xf[:, off:off + length]
            yf = taps.transpose(2, 0, 1, 3).reshape(self.out_channels, k * k * c) @ stacked
        else:
            yf = np.zeros((self.out_channels, length), dtype=dtype)
            tmp = np.empty_like(yf)
            for a in range(k):
                for b in range(k):
                    off = a * wp + b
                    np.matmul(taps[a, b], xf[:, off:off + length], out=tmp)
                    yf += tmp

        ho1, wo1 = hp - k + 1, wp - k + 1
        y = yf.reshape(self.out_channels, n, hp, wp)[:, :, :ho1:s, :wo1:s]
        y = np.ascontiguousarray(y.transpose(1, 0, 2, 3))
        if train:
            self.cache = (xf, taps, x.shape)
        return y

    def backward(self, dy, need_input_grad=True):
        xf, taps, (n, c, h, w) = self.cache
        k, p, s = self.k, self.pad, self.stride
        hp, wp = h + 2 * p, w + 2 * p
        length = n * hp * wp
        ho1, wo1 = hp - k + 1, wp - k + 1
        o = self.out_channels

        dyf = np.zeros((o, length), dtype=xf.dtype)
        dyf.reshape(o, n, hp, wp)[:, :, :ho1:s, :wo1:s] = dy.transpose(1, 0, 2, 3)

        if self.learnable:
            dw = np.empty((k, k, o, c), dtype=xf.dtype)
            for a in range(k):
                for b in range(k):
                    off = a * wp + b
                    np.matmul(dyf, xf[:, off:off + length].T, out=dw[a, b])
            self.weight.grad += dw.transpose(2, 3, 0, 1).astype(self.weight.grad.dtype, copy=False)

        if not need_input_grad:
            return None
        dxf = np.zeros_like(xf)
        tmp = np.empty((c, length), dtype=xf.dtype)
        for a in range(k):
            for b in range(k):
                off = a * wp + b
                np.matmul(taps[a, b].T, dyf, out=tmp)
                dxf[:, off:off + length] += tmp
        dx = dxf[:, :length].reshape(c, n, hp, wp)[:, :, p:p + h, p:p + w]
        return np.ascontiguousarray(dx.transpose(1, 0, 2, 3))

    def __repr__(self):
        return (f"Conv2d({self.in_channels}->{self.out_channels}, k={self.k}, "
                f"stride={self.stride}, pad={self.pad}, learnable={self.learnable})")


class Abs(Layer):
    kind = "abs"
    breakpoints = (0.0,)

    def forward(self, x, train=False):
        if train:
            self.cache = np.sign(x)
        return np.abs(x)

    def backward(self, dy, need_input_grad=True):
        return dy * self.cache


class ReLU(Layer):
    kind = "relu"
    breakpoints = (0.0,)

    def forward(self, x, train=False):
        if train:
            self.cache = x > 0
        return np.maximum(x, 0)

    def backward(self, dy, need_input_grad=True):
        return dy * self.cache


class Trunc(Layer):
    """Clamp to [-T, T]; the gradient is 1 on the closed interval, 0 outside."""

    kind = "trunc"

    def __init__(self, threshold: int):
        super().__init__()
        if int(threshold) != threshold or threshold < 1:
            raise ValueError(f"truncation threshold must be a positive integer, got {threshold}")
        self.threshold = int(threshold)

    @property
    def breakpoints(self):
        return (-float(self.threshold), float(self.threshold))

    def forward(self, x, train=False):
        t = self.threshold
        if train:
            self.cache = (x >= -t) & (x <= t)
        return np.clip(x, -t, t)

    def backward(self, dy, need_input_grad=True):
        return dy * self.cache

    def __repr__(self):
        return f"Trunc(T={self.threshold})"


class BatchNorm(Layer):
    """Per-channel standardisation without affine terms (see :class:`Scale`).

    Train mode normalises with batch statistics and folds them into the
    running estimates as ``running = m * running + (1 - m) * batch``; the
    first train-mode call initialises the running estimates directly.  The
    running variance uses the unbiased batch variance.
    """

    kind = "bn"

    def __init__(self, channels: int, eps: float = 1e-5, stat_momentum: float = 0.9):
        super().__init__()
        if eps <= 0:
            raise ValueError("eps must be positive")
        if not 0 < stat_momentum < 1:
            raise ValueError("stat_momentum must lie in (0, 1)")
        self.channels = channels
        self.eps = eps
        self.stat_momentum = stat_momentum
        self.running_mean: np.ndarray | None = None
        self.running_var: np.ndarray | None = None

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def output_shape(self, shape):
        if shape[1] != self.channels:
            raise ShapeError("batch norm channels", self.channels, shape[1])
        return shape

    def forward(self, x, train=False):
        check_rank4(x, "batch norm input")
        self.output_shape(x.shape)
        if train:
            m = x.shape[0] * x.shape[2] * x.shape[3]
            if m < 2:
                raise ShapeError("batch norm values per channel", ">= 2", m)
            mu = x.mean(axis=(0, 2, 3))
            xc = x - mu[None, :, None, None]
            var = (xc * xc).mean(axis=(0, 2, 3))
            inv = 1.0 / np.sqrt(var + self.eps)
            xhat = xc * inv[None, :, None, None]
            self.cache = (xhat, inv)
            unbiased = var * (m / (m - 1))
            if self.running_mean is None:
                self.running_mean = mu.copy()
                self.running_var = unbiased.copy()
            else:
                mom = self.stat_momentum
                dt = self.running_mean.dtype
                self.running_mean = (mom * self.running_mean + (1 - mom) * mu).astype(dt)
                self.running_var = (mom * self.running_var + (1 - mom) * unbiased).astype(dt)
            return xhat
        if self.running_mean is None:
            raise RuntimeError("uninitialized statistics: batch norm has not seen a train-mode batch")
        inv = (1.0 / np.sqrt(self.running_var + self.eps)).astype(x.dtype)
        mean = self.running_mean.astype(x.dtype)
        return (x - mean[None, :, None, None]) * inv[None, :, None, None]

    def backward(self, dy, need_input_grad=True):
        xhat, inv = self.cache
        m = dy.shape[0] * dy.shape[2] * dy.shape[3]
        sum_dy = dy.sum(axis=(0, 2, 3))
        sum_dy_xhat = (dy * xhat).sum(axis=(0, 2, 3))
        return (inv / m)[None, :, None, None] * (
            m * dy - sum_dy[None, :, None, None] - xhat * sum_dy_xhat[None, :, None, None])

    def __repr__(self):
        return f"BatchNorm({self.channels}, eps={self.eps}, stat_momentum={self.stat_momentum})"


class Scale(Layer):
    """Per-channel affine map ``gamma * x + beta``; holds the block's bias."""

    kind = "scale"

    def __init__(self, gamma, beta):
        super().__init__()
        self.gamma = gamma if isinstance(gamma, Tensor) else Tensor(gamma)
        self.beta = beta if isinstance(beta, Tensor) else Tensor(beta)
        if self.gamma.shape != self.beta.shape or self.gamma.data.ndim != 1:
            raise ShapeError("scale gamma/beta", "two equal-length vectors", (self.gamma.shape, self.beta.shape))

    @classmethod
    def identity(cls, channels: int, dtype=np.float32) -> "Scale":
        return cls(np.ones(channels, dtype=dtype), np.zeros(channels, dtype=dtype))

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def output_shape(self, shape):
        if shape[1] != self.channels:
            raise ShapeError("scale channels", self.channels, shape[1])
        return shape

    def forward(self, x, train=False):
        self.output_shape(x.shape)
        if train:
            self.cache = x
        return x * self.gamma.data[None, :, None, None] + self.beta.data[None, :, None, None]

    def backward(self, dy, need_input_grad=True):
        x = self.cache
        self.gamma.grad += (dy * x).sum(axis=(0, 2, 3)).astype(self.gamma.grad.dtype, copy=False)
        self.beta.grad += dy.sum(axis=(0, 2, 3)).astype(self.beta.grad.dtype, copy=False)
        return dy * self.gamma.data[None, :, None, None]

    def __repr__(self):
        return f"Scale({self.channels})"


class AvgPool(Layer):
    """Average pooling whose border windows divide by the number of real
    (unpadded) pixels they cover."""

    kind = "avgpool"

    def __init__(self, k: int, stride: int, pad: int = 0):
        super().__init__()
        if k < 2:
            raise ValueError(f"pool window must be >= 2, got {k}")
        if stride < 1 or pad < 0:
            raise ValueError("pool stride must be positive and pad non-negative")
        self.k, self.stride, self.pad = k, stride, pad

    def output_shape(self, shape):
        n, c, h, w = shape
        if self.k > h + 2 * self.pad or self.k > w + 2 * self.pad:
            raise ShapeError("pool window vs padded input", f"<= {(h + 2 * self.pad, w + 2 * self.pad)}", self.k)
        return (n, c, conv_output_size(h, self.k, self.stride, self.pad),
                conv_output_size(w, self.k, self.stride, self.pad))

    def _window_sum(self, xp, ho, wo):
        k, s = self.k, self.stride
        out = np.zeros(xp.shape[:2] + (ho, wo), dtype=xp.dtype)
        for a in range(k):
            for b in range(k):
                out += xp[:, :, a:a + s * (ho - 1) + 1:s, b:b + s * (wo - 1) + 1:s]
        return out

    def _counts(self, h, w, ho, wo, dtype):
        p = self.pad
        ones = np.zeros((1, 1, h + 2 * p, w + 2 * p), dtype=dtype)
        ones[:, :, p:p + h, p:p + w] = 1
        return self._window_sum(ones, ho, wo)

    def forward(self, x, train=False):
        check_rank4(x, "pool input")
        n, c, ho, wo = self.output_shape(x.shape)
        h, w = x.shape[2:]
        p = self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        counts = self._counts(h, w, ho, wo, x.dtype)
        if train:
            self.cache = (x.shape, counts)
        return self._window_sum(xp, ho, wo) / counts

    def backward(self, dy, need_input_grad=True):
        (n, c, h, w), counts = self.cache
        k, s, p = self.k, self.stride, self.pad
        ho, wo = dy.shape[2:]
        g = dy / counts
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=dy.dtype)
        for a in range(k):
            for b in range(k):
                dxp[:, :, a:a + s * (ho - 1) + 1:s, b:b + s * (wo - 1) + 1:s] += g
        return np.ascontiguousarray(dxp[:, :, p:p + h, p:p + w])

    def __repr__(self):
        return f"AvgPool(k={self.k}, stride={self.stride}, pad={self.pad})"


class GlobalAvgPool(Layer):
    kind = "globalpool"

    def output_shape(self, shape):
        if shape[2] < 1 or shape[3] < 1:
            raise ShapeError("global pool height/width", ">= 1", shape[2:])
        return (shape[0], shape[1], 1, 1)

    def forward(self, x, train=False):
        check_rank4(x, "global pool input")
        if train:
            self.cache = x.shape
        return x.mean(axis=(2, 3), keepdims=True)

    def backward(self, dy, need_input_grad=True):
        n, c, h, w = self.cache
        return np.broadcast_to(dy / (h * w), (n, c, h, w)).copy()


class FullyConnected(Layer):
    """``y = x W^T + b`` on the flattened input; ``W`` is ``(out, in)``."""

    kind = "fc"

    def __init__(self, weight, bias):
        super().__init__()
        self.weight = weight if isinstance(weight, Tensor) else Tensor(weight)
        self.bias = bias if isinstance(bias, Tensor) else Tensor(bias)
        if self.weight.data.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError("fc weight/bias", "(out, in) and (out,)", (self.weight.shape, self.bias.shape))

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def output_shape(self, shape):
        width = int(np.prod(shape[1:]))
        if width != self.in_features:
            raise ShapeError("fc input width", self.in_features, width)
        return (shape[0], self.out_features)

    def forward(self, x, train=False):
        self.output_shape(x.shape)
        flat = x.reshape(x.shape[0], -1)
        if train:
            self.cache = (flat, x.shape)
        return flat @ self.weight.data.T + self.bias.data

    def backward(self, dy, need_input_grad=True):
        flat, shape = self.cache
        self.weight.grad += (dy.T @ flat).astype(self.weight.grad.dtype, copy=False)
        self.bias.grad += dy.sum(axis=0).astype(self.bias.grad.dtype, copy=False)
        if not need_input_grad:
            return None
        return (dy @ self.weight.data).reshape(shape)

    def __repr__(self):
        return f"FullyConnected({self.in_features}->{self.out_features})"


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class Softmax(Layer):
    kind = "softmax"

    def output_shape(self, shape):
        return shape

    def forward(self, x, train=False):
        return softmax(x)


class SoftmaxCrossEntropy:
    """Mean cross-entropy of a row-wise softmax against integer labels."""

    def forward(self, logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
        labels = np.asarray(labels)
        n, k = logits.shape
        if labels.shape != (n,):
            raise ShapeError("labels", (n,), labels.shape)
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise ValueError(f"label out of range [0, {k})")
        z = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
        log_p = z - log_norm
        probs = np.exp(log_p)
        loss = float(-log_p[np.arange(n), labels].mean())
        if not np.isfinite(loss):
            raise NumericalError("non-finite cross-entropy")
        self.cache = (probs, labels)
        return loss, probs

    def backward(self) -> np.ndarray:
        probs, labels = self.cache
        n = probs.shape[0]
        d = probs.copy()
        d[np.arange(n), labels] -= 1
        return d / n


def softmax_xent(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    return SoftmaxCrossEntropy().forward(logits, labels)


def conv2d(x: np.ndarray, weight: np.ndarray, stride: int = 1, pad: int = 0) -> np.ndarray:
    return Conv2d(weight, stride=stride, pad=pad, learnable=False).forward(x)


def avg_pool(x: np.ndarray, k: int, stride: int, pad: int = 0) -> np.ndarray:
    return AvgPool(k, stride, pad).forward(x)


def trunc(x: np.ndarray, threshold: int) -> np.ndarray:
    return Trunc(threshold).forward(x)
