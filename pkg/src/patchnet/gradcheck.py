"""Central finite-difference checks for layers and whole networks.

Analytic gradients come from the float32 code path; the numeric reference is
evaluated on a float64 copy with identical parameter values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as L
from .layers import weighted_quadratic_loss
from .network import build, encode_targets, tiny_spec
from .tensor import DTYPE


@dataclass
class CheckResult:
    name: str
    rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.rel_error < self.tolerance


def rel_error(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def numeric_gradient(f, x: np.ndarray, eps: float) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to ``x``, perturbed in place."""
    grad = np.zeros(x.shape, dtype=np.float64)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = f()
        flat[i] = old - eps
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * eps)
    return grad


def _layer_input(spec, shape, rng):
    x = rng.standard_normal(shape)
    if isinstance(spec, L.Activation) and spec.kind == "relu":
        x = np.sign(x) * (np.abs(x) + 0.05)  # keep clear of the kink
    if isinstance(spec, L.MaxPool):
        x = (rng.permutation(x.size).reshape(shape) * 0.01).astype(np.float64)  # distinct values
    return x


def check_layer(spec, in_shape, seed: int = 0, batch: int = 2, eps: float = 1e-3, tol: float = 1e-3,
                aux_width: int = 0):
    """Check input and parameter gradients of one layer against finite differences."""
    rng = np.random.default_rng(seed)
    layer = L.make_layer(spec, in_shape, "checked", DTYPE)
    for p in layer.params.values():
        p[...] = rng.standard_normal(p.shape) * 0.5
    x64 = _layer_input(spec, (batch,) + tuple(in_shape), rng)
    aux64 = rng.uniform(0, 1, size=(batch, aux_width)) if aux_width else None
    out_shape = (batch,) + tuple(layer.output_shape(tuple(in_shape)))
    r = rng.standard_normal(out_shape)

    layer.forward(x64.astype(DTYPE), aux=None if aux64 is None else aux64.astype(DTYPE))
    layer.zero_grad()
    dx = layer.backward(r.astype(DTYPE))
    analytic = {"input": dx, **{k: g.copy() for k, g in layer.grads.items()}}

    ref = L.make_layer(spec, in_shape, "reference", np.float64)
    for k in ref.params:
        ref.params[k][...] = layer.params[k].astype(np.float64)

    def loss():
        return float(np.sum(ref.forward(x64, aux=aux64, cache=False) * r))

    numeric = {"input": numeric_gradient(loss, x64, eps)}
    for k, p in ref.params.items():
        numeric[k] = numeric_gradient(loss, p, eps)
    label = L.describe(spec)
    return [CheckResult(f"{label} d/{k}", rel_error(analytic[k], numeric[k]), tol) for k in analytic]


def check_network(spec, seed: int = 0, batch: int = 4, eps: float = 1e-5, tol: float = 1e-3):
    """Whole-network check under the weighted quadratic loss."""
    rng = np.random.default_rng(seed)
    model = build(spec, "normalized", rng)
    # zero biases can pin a dead ReLU stack exactly on the kink, where no derivative exists
    for _, name, p, _ in model.parameters():
        if name == "bias":
            p[...] = rng.uniform(-0.1, 0.1, size=p.shape)
    x = rng.uniform(0, 1, size=(batch,) + spec.input_shape)
    pos = rng.uniform(0, 1, size=(batch, 2)) if model.has_aux else None
    labels = rng.integers(0, model.num_classes, size=batch)
    target = encode_targets(labels, model.output_width, np.float64)
    w = rng.uniform(0.5, 2.0, size=batch)

    out = model.forward(x.astype(DTYPE), None if pos is None else pos.astype(DTYPE))
    model.zero_grad()
    _, g = weighted_quadratic_loss(out, target, w)
    dx = model.backward(g, need_input_grad=True)
    analytic = [("input", dx)] + [(f"layer {i + 1} {n}", gr.copy()) for i, n, _, gr in model.parameters()]

    ref = model.astype(np.float64)

    def loss():
        return weighted_quadratic_loss(ref.forward(x, pos, cache=False), target, w)[0]

    numeric = [("input", numeric_gradient(loss, x, eps))]
    numeric += [(f"layer {i + 1} {n}", numeric_gradient(loss, p, eps)) for i, n, p, _ in ref.parameters()]
    return [CheckResult(name, rel_error(a, n), tol) for (name, a), (_, n) in zip(analytic, numeric)]


def layer_suite():
    """(spec, input shape, aux width) cases covering every layer type."""
    return [
        (L.Conv(3, 3, 2), (3, 6, 6), 0),
        (L.Conv(1, 1, 2), (2, 4, 4), 0),
        (L.MaxPool(2, 2), (2, 4, 6), 0),
        (L.Activation("tanh"), (3, 4, 4), 0),
        (L.Activation("relu"), (3, 4, 4), 0),
        (L.Activation("sigmoid"), (3, 4, 4), 0),
        (L.FullyConnected(5), (2, 3, 3), 0),
        (L.FullyConnected(4, aux_inputs=2), (6,), 2),
    ]


def run_suite(preset: str = "tiny", seeds: int = 20, tol: float = 1e-3):
    """All layer and tiny-network checks over ``seeds`` seeds."""
    if preset != "tiny":
        raise ValueError(f"unknown gradcheck preset {preset!r}")
    results = []
    for seed in range(seeds):
        for spec, shape, aux in layer_suite():
            for res in check_layer(spec, shape, seed, aux_width=aux, tol=tol):
                res.name = f"seed {seed} {res.name}"
                results.append(res)
        for task in ("road", "urban"):
            for res in check_network(tiny_spec(task), seed, tol=tol):
                res.name = f"seed {seed} tiny-{task} {res.name}"
                results.append(res)
    return results
