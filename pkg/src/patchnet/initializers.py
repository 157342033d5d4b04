"""Weight initialisation schemes.

heuristic:  U[-1/sqrt(n_in), 1/sqrt(n_in)]
normalized: U[-sqrt(6)/sqrt(n_in + n_out), sqrt(6)/sqrt(n_in + n_out)]

For a convolution n_in = C*kh*kw and n_out = F*kh*kw; for a fully connected
layer n_in counts auxiliary inputs too. Biases always start at zero.
"""

from __future__ import annotations

import enum
import math

import numpy as np


class InitScheme(str, enum.Enum):
    HEURISTIC = "heuristic"
    NORMALIZED = "normalized"
    ZERO = "zero"


def init_bound(scheme, n_in: int, n_out: int) -> float:
    scheme = InitScheme(scheme)
    if scheme is InitScheme.HEURISTIC:
        return 1.0 / math.sqrt(n_in)
    if scheme is InitScheme.NORMALIZED:
        return math.sqrt(6.0) / math.sqrt(n_in + n_out)
    return 0.0


def initialize_layer(layer, scheme, rng: np.random.Generator) -> None:
    if "weights" not in layer.params:
        return
    n_in, n_out = layer.fan_in_out()
    bound = init_bound(scheme, n_in, n_out)
    w = layer.params["weights"]
    if bound > 0:
        w[...] = rng.uniform(-bound, bound, size=w.shape).astype(w.dtype)
    else:
        w.fill(0)
    layer.params["bias"].fill(0)
