"""Differentiable layers and the weighted quadratic loss.

Every layer works on whatever float type its input and parameters carry, so
a network cast to float64 doubles as a high-precision oracle for gradient
checks. ``forward(..., cache=False)`` leaves no state behind and is safe to
call from several threads on a shared layer.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import AuxInputError, DimensionError, WeightError
from .tensor import DTYPE, col2im, conv_output_size, gemm, im2col


# -- layer descriptions -----------------------------------------------------

@dataclass(frozen=True)
class Conv:
    kh: int
    kw: int
    out_channels: int

    def __post_init__(self):
        if min(self.kh, self.kw, self.out_channels) < 1:
            raise ValueError(f"invalid Conv spec {self}")


@dataclass(frozen=True)
class MaxPool:
    ph: int
    pw: int

    def __post_init__(self):
        if min(self.ph, self.pw) < 1:
            raise ValueError(f"invalid MaxPool spec {self}")


ACTIVATIONS = ("tanh", "relu", "sigmoid")


@dataclass(frozen=True)
class Activation:
    kind: str

    def __post_init__(self):
        if self.kind not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.kind!r}")


@dataclass(frozen=True)
class FullyConnected:
    out: int
    aux_inputs: int = 0

    def __post_init__(self):
        if self.out < 1 or self.aux_inputs < 0:
            raise ValueError(f"invalid FullyConnected spec {self}")


@dataclass(frozen=True)
class Dropout:
    rate: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")


LayerSpec = Conv | MaxPool | Activation | FullyConnected | Dropout

_SPEC_TYPES = {cls.__name__: cls for cls in (Conv, MaxPool, Activation, FullyConnected, Dropout)}


def spec_to_dict(spec: LayerSpec) -> dict:
    return {"type": type(spec).__name__, **asdict(spec)}


def spec_from_dict(d: dict) -> LayerSpec:
    d = dict(d)
    try:
        cls = _SPEC_TYPES[d.pop("type")]
    except KeyError as exc:
        raise ValueError(f"unknown layer type in {d}") from exc
    return cls(**d)


def describe(spec: LayerSpec) -> str:
    if isinstance(spec, Conv):
        return f"conv {spec.kh}x{spec.kw}x{spec.out_channels}"
    if isinstance(spec, MaxPool):
        return f"maxpool {spec.ph}x{spec.pw}"
    if isinstance(spec, Activation):
        return spec.kind
    if isinstance(spec, FullyConnected):
        extra = f" (+{spec.aux_inputs} aux)" if spec.aux_inputs else ""
        return f"fc o={spec.out}{extra}"
    return f"dropout {spec.rate}"


# -- layer implementations --------------------------------------------------

class Layer:
    """Base layer. Parametric layers keep ``params`` and matching ``grads``."""

    def __init__(self, name: str = ""):
        self.name = name
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def output_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def forward(self, x, aux=None, training=False, rng=None, cache=True):
        raise NotImplementedError

    def backward(self, grad, need_input_grad=True):
        raise NotImplementedError

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0)

    def astype(self, dtype):
        """Convert parameters in place (gradients are reset); returns self."""
        for k in self.params:
            self.params[k] = self.params[k].astype(dtype)
            self.grads[k] = np.zeros_like(self.params[k])
        return self


class ConvLayer(Layer):
    """Valid, stride-1 cross-correlation with a per-filter bias."""

    def __init__(self, spec: Conv, in_shape, name="", dtype=DTYPE):
        super().__init__(name)
        self.spec = spec
        C = in_shape[0]
        self.params["weights"] = np.zeros((spec.out_channels, C, spec.kh, spec.kw), dtype=dtype)
        self.params["bias"] = np.zeros(spec.out_channels, dtype=dtype)
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._cache = None

    def fan_in_out(self):
        F, C, kh, kw = self.params["weights"].shape
        return C * kh * kw, F * kh * kw

    def output_shape(self, in_shape):
        C, H, W = in_shape
        wC = self.params["weights"].shape[1]
        if C != wC:
            raise DimensionError(f"{self.name}: input has {C} channels, filters expect {wC}")
        if H < self.spec.kh or W < self.spec.kw:
            raise DimensionError(f"{self.name}: kernel {self.spec.kh}x{self.spec.kw} larger than input {H}x{W}")
        return (self.spec.out_channels, conv_output_size(H, self.spec.kh), conv_output_size(W, self.spec.kw))

    def forward(self, x, aux=None, training=False, rng=None, cache=True):
        w, b = self.params["weights"], self.params["bias"]
        F, C, kh, kw = w.shape
        if x.ndim != 4 or x.shape[1] != C:
            raise DimensionError(f"{self.name}: expected N x {C} x H x W input, got {x.shape}")
        N, _, H, W = x.shape
        OH, OW = conv_output_size(H, kh), conv_output_size(W, kw)
        # columns are kept in float64: gemm accumulates in float64 anyway
        cols = im2col(x, kh, kw, dtype=np.float64)
        out = gemm(w.reshape(F, -1), cols, dtype=w.dtype)
        out += b[:, None]
        if cache:
            self._cache = (x.shape, cols)
        return np.ascontiguousarray(out.reshape(F, N, OH, OW).transpose(1, 0, 2, 3))

    def backward(self, grad, need_input_grad=True):
        in_shape, cols = self._cache
        w = self.params["weights"]
        F, C, kh, kw = w.shape
        g2 = grad.transpose(1, 0, 2, 3).reshape(F, -1)
        self.grads["weights"] += gemm(g2, cols.T, dtype=w.dtype).reshape(w.shape)
        self.grads["bias"] += g2.sum(axis=1, dtype=np.float64).astype(w.dtype)
        if not need_input_grad:
            return None
        dcols = gemm(w.reshape(F, -1).T, g2)
        return col2im(dcols, in_shape, kh, kw)


class MaxPoolLayer(Layer):
    """Non-overlapping max pooling; ties go to the first element in row-major order."""

    def __init__(self, spec: MaxPool, name=""):
        super().__init__(name)
        self.spec = spec
        self._cache = None

    def output_shape(self, in_shape):
        C, H, W = in_shape
        ph, pw = self.spec.ph, self.spec.pw
        if H % ph or W % pw:
            raise DimensionError(f"{self.name}: {H}x{W} input is not divisible by pooling window {ph}x{pw}")
        return (C, H // ph, W // pw)

    def forward(self, x, aux=None, training=False, rng=None, cache=True):
        N, C, H, W = x.shape
        ph, pw = self.spec.ph, self.spec.pw
        OH, OW = self.output_shape((C, H, W))[1:]
        win = x.reshape(N, C, OH, ph, OW, pw).transpose(0, 1, 2, 4, 3, 5).reshape(N, C, OH, OW, ph * pw)
        idx = win.argmax(axis=-1)
        out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        if cache:
            self._cache = (x.shape, idx)
        return out

    def backward(self, grad, need_input_grad=True):
        (N, C, H, W), idx = self._cache
        ph, pw = self.spec.ph, self.spec.pw
        OH, OW = H // ph, W // pw
        win = np.zeros((N, C, OH, OW, ph * pw), dtype=grad.dtype)
        np.put_along_axis(win, idx[..., None], grad[..., None], axis=-1)
        return np.ascontiguousarray(
            win.reshape(N, C, OH, OW, ph, pw).transpose(0, 1, 2, 4, 3, 5).reshape(N, C, H, W)
        )


def sigmoid(x):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


class ActivationLayer(Layer):
    def __init__(self, spec: Activation, name=""):
        super().__init__(name)
        self.kind = spec.kind
        self._cache = None

    def forward(self, x, aux=None, training=False, rng=None, cache=True):
        if self.kind == "tanh":
            y = np.tanh(x)
        elif self.kind == "relu":
            y = np.maximum(x, 0)
        else:
            y = sigmoid(x).astype(x.dtype, copy=False)
        if cache:
            self._cache = (x, y)
        return y

    def backward(self, grad, need_input_grad=True):
        x, y = self._cache
        if self.kind == "tanh":
            return grad * (1 - y * y)
        if self.kind == "relu":
            return grad * (x > 0)
        return grad * (y * (1 - y))


class FullyConnectedLayer(Layer):
    """``out = [x || aux] @ W.T + b``; image-shaped input is flattened first."""

    def __init__(self, spec: FullyConnected, in_shape, name="", dtype=DTYPE):
        super().__init__(name)
        self.spec = spec
        self.in_features = int(np.prod(in_shape))
        D, A = self.in_features, spec.aux_inputs
        self.params["weights"] = np.zeros((spec.out, D + A), dtype=dtype)
        self.params["bias"] = np.zeros(spec.out, dtype=dtype)
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._cache = None

    def fan_in_out(self):
        O, DA = self.params["weights"].shape
        return DA, O

    def output_shape(self, in_shape):
        if int(np.prod(in_shape)) != self.in_features:
            raise DimensionError(f"{self.name}: expected {self.in_features} input features, got shape {in_shape}")
        return (self.spec.out,)

    def forward(self, x, aux=None, training=False, rng=None, cache=True):
        N = x.shape[0]
        flat = x.reshape(N, -1)
        if flat.shape[1] != self.in_features:
            raise DimensionError(f"{self.name}: expected {self.in_features} input features, got {flat.shape[1]}")
        A = self.spec.aux_inputs
        if A:
            if aux is None:
                raise AuxInputError(f"{self.name}: layer declares {A} auxiliary inputs but none were supplied")
            aux = np.asarray(aux, dtype=flat.dtype)
            if aux.shape != (N, A):
                raise AuxInputError(f"{self.name}: auxiliary input must be {N}x{A}, got {aux.shape}")
            z = np.concatenate([flat, aux], axis=1)
        else:
            if aux is not None:
                raise AuxInputError(f"{self.name}: auxiliary input supplied to a layer without aux inputs")
            z = flat
        out = gemm(z, self.params["weights"].T)
        out += self.params["bias"]
        if cache:
            self._cache = (x.shape, z)
        return out

    def backward(self, grad, need_input_grad=True):
        in_shape, z = self._cache
        w = self.params["weights"]
        self.grads["weights"] += gemm(grad.T, z)
        self.grads["bias"] += grad.sum(axis=0, dtype=np.float64).astype(w.dtype)
        if not need_input_grad:
            return None
        dz = gemm(grad, w)
        return np.ascontiguousarray(dz[:, : self.in_features]).reshape(in_shape)


class DropoutLayer(Layer):
    """Inverted dropout: survivors are scaled by 1/(1-rate) during training."""

    def __init__(self, spec: Dropout, name=""):
        super().__init__(name)
        self.rate = spec.rate
        self._cache = None

    def forward(self, x, aux=None, training=False, rng=None, cache=True):
        if not training or self.rate == 0.0:
            if cache:
                self._cache = None
            return x
        if rng is None:
            raise ValueError(f"{self.name}: training-mode dropout needs an rng")
        scale = np.asarray(1.0 / (1.0 - self.rate), dtype=x.dtype)
        mask = (rng.random(x.shape) >= self.rate).astype(x.dtype) * scale
        if cache:
            self._cache = mask
        return x * mask

    def backward(self, grad, need_input_grad=True):
        if self._cache is None:
            return grad
        return grad * self._cache


def make_layer(spec: LayerSpec, in_shape, name="", dtype=DTYPE) -> Layer:
    if isinstance(spec, Conv):
        return ConvLayer(spec, in_shape, name, dtype)
    if isinstance(spec, MaxPool):
        return MaxPoolLayer(spec, name)
    if isinstance(spec, Activation):
        return ActivationLayer(spec, name)
    if isinstance(spec, FullyConnected):
        return FullyConnectedLayer(spec, in_shape, name, dtype)
    if isinstance(spec, Dropout):
        return DropoutLayer(spec, name)
    raise TypeError(f"not a layer spec: {spec!r}")


# -- loss -------------------------------------------------------------------

def weighted_quadratic_loss(pred, target, weights):
    """Weighted squared error normalised by the total weight.

    Returns ``(loss, grad)`` where
    ``loss = sum_i w_i * ||pred_i - target_i||^2 / sum_i w_i``.
    """
    pred = np.asarray(pred)
    target = np.asarray(target, dtype=pred.dtype).reshape(pred.shape)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape[0] != pred.shape[0]:
        raise WeightError(f"{w.shape[0]} weights for {pred.shape[0]} predictions")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise WeightError("example weights must be finite and non-negative")
    total = w.sum()
    if total <= 0:
        raise WeightError("example weights sum to zero")
    diff = pred.astype(np.float64) - target
    sq = (diff * diff).reshape(diff.shape[0], -1).sum(axis=1)
    loss = float((w * sq).sum() / total)
    scale = (2.0 * w / total).reshape((-1,) + (1,) * (pred.ndim - 1))
    return loss, (scale * diff).astype(pred.dtype)
