"""Layer pipelines, the two preset architectures, and model files.

Model file layout (little-endian)::

    b"PTNM" | u32 version | u32 n | n bytes of UTF-8 JSON {"spec", "metadata"}
    | one PTNT block per parameter tensor, in layer order (weights, then bias)
"""

from __future__ import annotations

import copy
import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import layers as L
from .errors import AuxInputError, BuildError, DimensionError, FormatError, VersionError
from .initializers import InitScheme, initialize_layer
from .tensor import DTYPE, read_tensor, write_tensor

MODEL_MAGIC = b"PTNM"
MODEL_VERSION = 1
PATCH_SIZE = 28


@dataclass
class NetworkSpec:
    input_shape: tuple[int, int, int]
    layers: list
    aux_layer_index: int | None = None

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        self.layers = list(self.layers)
        aux = [i for i, s in enumerate(self.layers) if isinstance(s, L.FullyConnected) and s.aux_inputs > 0]
        if len(aux) > 1:
            raise BuildError(f"at most one auxiliary injection point allowed, found layers {aux}")
        if self.aux_layer_index is None and aux:
            raise BuildError(f"layer {aux[0]} declares auxiliary inputs but aux_layer_index is unset")
        if self.aux_layer_index is not None and aux != [self.aux_layer_index]:
            raise BuildError(
                f"aux_layer_index={self.aux_layer_index} must point at the fully connected layer with aux inputs"
            )

    @property
    def aux_width(self) -> int:
        if self.aux_layer_index is None:
            return 0
        return self.layers[self.aux_layer_index].aux_inputs

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "layers": [L.spec_to_dict(s) for s in self.layers],
            "aux_layer_index": self.aux_layer_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(tuple(d["input_shape"]), [L.spec_from_dict(s) for s in d["layers"]], d.get("aux_layer_index"))


def _preset(input_shape, conv1, conv2, fc1, act, out, out_act, spatial_prior) -> NetworkSpec:
    layers = [
        L.Conv(*conv1),
        L.MaxPool(2, 2),
        L.Activation(act),
        L.Conv(*conv2),
        L.Activation(act),
        L.FullyConnected(fc1[0]),
        L.Activation(act),
        L.FullyConnected(fc1[1], aux_inputs=2 if spatial_prior else 0),
        L.Activation(act),
        L.FullyConnected(out),
        L.Activation(out_act),
    ]
    return NetworkSpec(input_shape, layers, 7 if spatial_prior else None)


def road_spec(spatial_prior: bool = True) -> NetworkSpec:
    """Binary road detector: one tanh score per patch."""
    return _preset((3, 28, 28), (7, 7, 12), (5, 5, 6), (48, 192), "relu", 1, "tanh", spatial_prior)


def urban_spec(spatial_prior: bool = True, num_classes: int = 8) -> NetworkSpec:
    """Multi-class scene labeler: one sigmoid score per class."""
    return _preset((3, 28, 28), (7, 7, 16), (5, 5, 12), (64, 192), "tanh", num_classes, "sigmoid", spatial_prior)


def tiny_spec(task: str = "road", spatial_prior: bool = True) -> NetworkSpec:
    """Shrunken preset (8x8 input, 2-filter convolutions) for gradient checks."""
    if task == "road":
        act, out, out_act = "relu", 1, "tanh"
    else:
        act, out, out_act = "tanh", 8, "sigmoid"
    return _preset((3, 8, 8), (3, 3, 2), (2, 2, 2), (4, 4), act, out, out_act, spatial_prior)


PRESETS = {"road": road_spec, "urban": urban_spec}


def with_dropout(spec: NetworkSpec, rate: float = 0.5) -> NetworkSpec:
    """Insert dropout after every hidden fully connected activation."""
    out = []
    last = len(spec.layers) - 1
    for i, s in enumerate(spec.layers):
        out.append(s)
        if (
            isinstance(s, L.Activation)
            and i > 0
            and isinstance(spec.layers[i - 1], L.FullyConnected)
            and i != last
        ):
            out.append(L.Dropout(rate))
    aux = [i for i, s in enumerate(out) if isinstance(s, L.FullyConnected) and s.aux_inputs]
    return NetworkSpec(spec.input_shape, out, aux[0] if aux else None)


def propagate_shapes(spec: NetworkSpec, dtype=DTYPE):
    """Instantiate layers and the shape after each one.

    Raises BuildError naming the first layer whose input shape is invalid.
    """
    shape = spec.input_shape
    layers, shapes = [], [shape]
    for i, s in enumerate(spec.layers):
        name = f"layer {i + 1} ({L.describe(s)})"
        try:
            layer = L.make_layer(s, shape, name, dtype)
            shape = layer.output_shape(shape)
        except DimensionError as exc:
            raise BuildError(f"shape propagation failed at {name}: {exc}") from exc
        layers.append(layer)
        shapes.append(shape)
    return layers, shapes


class Model:
    """An ordered layer pipeline with its parameters and metadata."""

    def __init__(self, spec: NetworkSpec, layers, metadata=None, shapes=None):
        self.spec = spec
        self.layers = layers
        self.metadata = dict(metadata or {})
        self.shapes = shapes or propagate_shapes(spec)[1]

    @property
    def output_width(self) -> int:
        return int(np.prod(self.shapes[-1]))

    @property
    def num_classes(self) -> int:
        """Label count: 2 for a single-score binary network."""
        return 2 if self.output_width == 1 else self.output_width

    @property
    def has_aux(self) -> bool:
        return self.spec.aux_layer_index is not None

    @property
    def dtype(self):
        for layer in self.layers:
            if "weights" in layer.params:
                return layer.params["weights"].dtype
        return np.dtype(DTYPE)

    def shape_report(self) -> list[str]:
        lines = [f"input: {self.shapes[0]}"]
        for layer, shape in zip(self.layers, self.shapes[1:]):
            lines.append(f"{layer.name}: {shape}")
        return lines

    def parameters(self):
        """Yield ``(layer_index, name, param, grad)`` in serialization order."""
        for i, layer in enumerate(self.layers):
            for name in ("weights", "bias"):
                if name in layer.params:
                    yield i, name, layer.params[name], layer.grads[name]

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def forward(self, patches, positions=None, training=False, rng=None, cache=True):
        x = np.asarray(patches)
        if x.ndim == 3:
            x = x[None]
        if x.dtype != self.dtype:
            x = x.astype(self.dtype)
        if tuple(x.shape[1:]) != self.spec.input_shape:
            raise DimensionError(f"expected patches of shape N x {self.spec.input_shape}, got {x.shape}")
        mean = self.metadata.get("input_mean")
        if mean is not None:
            x = x - np.asarray(mean, dtype=x.dtype).reshape(1, -1, 1, 1)
        if self.has_aux:
            if positions is None:
                raise AuxInputError("this network has a spatial prior; positions are required")
            positions = np.asarray(positions, dtype=x.dtype)
            if positions.shape != (x.shape[0], self.spec.aux_width):
                raise AuxInputError(f"positions must be {x.shape[0]}x{self.spec.aux_width}, got {positions.shape}")
            if np.any(positions < 0) or np.any(positions > 1):
                raise AuxInputError("positions must lie in [0, 1]")
        for i, layer in enumerate(self.layers):
            aux = positions if i == self.spec.aux_layer_index else None
            x = layer.forward(x, aux=aux, training=training, rng=rng, cache=cache)
        return x

    def backward(self, loss_grad, need_input_grad=False):
        """Fill every parameter gradient; optionally return d(loss)/d(patches)."""
        g = loss_grad
        last = len(self.layers) - 1
        for i in range(last, -1, -1):
            g = self.layers[i].backward(g, need_input_grad=need_input_grad or i > 0)
        return g

    def copy(self) -> "Model":
        return copy.deepcopy(self)

    def astype(self, dtype) -> "Model":
        m = self.copy()
        for layer in m.layers:
            layer.astype(dtype)
        return m

    # -- serialization ------------------------------------------------------

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        header = json.dumps(
            {"spec": self.spec.to_dict(), "metadata": self.metadata}, sort_keys=True, separators=(",", ":")
        ).encode("utf-8")
        buf.write(MODEL_MAGIC)
        buf.write(struct.pack("<II", MODEL_VERSION, len(header)))
        buf.write(header)
        for _, _, p, _ in self.parameters():
            write_tensor(buf, p)
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Model":
        buf = io.BytesIO(data)
        magic = buf.read(4)
        if magic != MODEL_MAGIC:
            raise FormatError(f"not a model file (magic {magic!r})")
        head = buf.read(8)
        if len(head) != 8:
            raise FormatError("truncated model header")
        version, n = struct.unpack("<II", head)
        if version != MODEL_VERSION:
            raise VersionError(f"model file version {version}, this build reads version {MODEL_VERSION}")
        try:
            header = json.loads(buf.read(n).decode("utf-8"))
            spec = NetworkSpec.from_dict(header["spec"])
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"corrupt model header: {exc}") from exc
        layers, shapes = propagate_shapes(spec)
        model = cls(spec, layers, header.get("metadata"), shapes)
        for i, name, p, _ in model.parameters():
            t = read_tensor(buf)
            if t.shape != p.shape:
                raise FormatError(f"layer {i + 1} {name}: stored shape {t.shape}, expected {p.shape}")
            p[...] = t
        if buf.read(1):
            raise FormatError("trailing bytes after last parameter block")
        return model

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Model":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def build(spec: NetworkSpec, init=InitScheme.NORMALIZED, rng=None, metadata=None, dtype=DTYPE) -> Model:
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    layers, shapes = propagate_shapes(spec, dtype)
    for layer in layers:
        initialize_layer(layer, init, rng)
    return Model(spec, layers, metadata, shapes)


save = Model.save
load = Model.load


def scores_to_probs(scores) -> np.ndarray:
    """Turn raw network outputs (N x O) into class probabilities (N x K).

    A single tanh score s becomes ``[1 - s', s']`` with ``s' = (s + 1) / 2``;
    sigmoid outputs are renormalised to sum to one.
    """
    s = np.asarray(scores, dtype=np.float64)
    s = s.reshape(s.shape[0], -1)
    if s.shape[1] == 1:
        p = np.clip((s[:, 0] + 1.0) / 2.0, 0.0, 1.0)
        return np.stack([1.0 - p, p], axis=1)
    s = np.clip(s, 0.0, None)
    total = s.sum(axis=1, keepdims=True)
    k = s.shape[1]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, s / total, 1.0 / k)


def encode_targets(labels, output_width: int, dtype=DTYPE) -> np.ndarray:
    """Binary: label 1 -> +1, anything else -> -1. Multi-class: one-hot rows."""
    labels = np.asarray(labels, dtype=np.int64)
    if output_width == 1:
        return np.where(labels == 1, 1.0, -1.0).astype(dtype).reshape(-1, 1)
    if np.any(labels < 0) or np.any(labels >= output_width):
        raise ValueError(f"labels outside [0, {output_width})")
    out = np.zeros((labels.size, output_width), dtype=dtype)
    out[np.arange(labels.size), labels] = 1
    return out
