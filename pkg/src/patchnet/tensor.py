"""Dense tensors and the numeric kernels the layers are built on.

Tensors are plain ``numpy.ndarray`` objects in C (row-major) order. Image-like
data is laid out samples x channels x height x width, flat data samples x
features. The default element type is 32-bit float.

``gemm`` accumulates in float64 and rounds the result once to the output
type. Work is split into a fixed grid of tiles that does not depend on the
number of threads, so results are identical for any thread count and, in
practice, for any batch size.
"""

from __future__ import annotations

import os
import struct
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import BinaryIO

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DimensionError, FormatError

DTYPE = np.float32

TENSOR_MAGIC = b"PTNT"

# Tile sizes are fixed so that the arithmetic never depends on thread count.
TILE_ROWS = 256
TILE_COLS = 4096

_num_threads = 1
_executor: ThreadPoolExecutor | None = None
_lock = threading.Lock()


def default_threads() -> int:
    env = os.environ.get("PATCHNET_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            n = 0
        if n < 1:
            raise ConfigError(f"PATCHNET_THREADS must be a positive integer, got {env!r}")
        return n
    return os.cpu_count() or 1


def set_num_threads(n: int) -> None:
    """Set the worker count used by ``gemm``."""
    global _num_threads, _executor
    if n < 1:
        raise ValueError("thread count must be >= 1")
    with _lock:
        if _executor is not None and n != _num_threads:
            _executor.shutdown(wait=True)
            _executor = None
        _num_threads = n


def get_num_threads() -> int:
    return _num_threads


def _pool() -> ThreadPoolExecutor:
    global _executor
    with _lock:
        if _executor is None:
            _executor = ThreadPoolExecutor(max_workers=_num_threads, thread_name_prefix="gemm")
        return _executor


def zeros(shape, dtype=DTYPE) -> np.ndarray:
    shape = tuple(int(s) for s in shape)
    if any(s < 1 for s in shape):
        raise DimensionError(f"all dimension sizes must be >= 1, got {shape}")
    return np.zeros(shape, dtype=dtype)


def flat_index(shape, n: int, c: int, y: int, x: int) -> int:
    """Offset of element (n, c, y, x) in a row-major N x C x H x W buffer."""
    _, C, H, W = shape
    return ((n * C + c) * H + y) * W + x


def gemm(A, B, alpha=1.0, beta=0.0, C=None, dtype=None) -> np.ndarray:
    """Return ``alpha * A @ B + beta * C``.

    When ``C`` is given it is updated in place and returned. ``dtype`` sets
    the result type (default: the promoted input type, at least float32).
    """
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise DimensionError(f"gemm shape mismatch: A{A.shape} x B{B.shape}")
    M, N = A.shape[0], B.shape[1]
    if C is not None:
        C = np.asarray(C)
        if C.shape != (M, N):
            raise DimensionError(f"gemm output shape mismatch: C{C.shape} vs A{A.shape} x B{B.shape}")
    if C is not None:
        out_dtype = C.dtype
    else:
        out_dtype = dtype or np.result_type(A.dtype, B.dtype, DTYPE)

    A64 = A.astype(np.float64, copy=False)
    B64 = B.astype(np.float64, copy=False)
    acc = np.empty((M, N), dtype=np.float64)

    tiles = [(r, c) for r in range(0, M, TILE_ROWS) for c in range(0, N, TILE_COLS)]

    def run(tile):
        r, c = tile
        rs, cs = slice(r, r + TILE_ROWS), slice(c, c + TILE_COLS)
        np.matmul(A64[rs], B64[:, cs], out=acc[rs, cs])

    if _num_threads > 1 and len(tiles) > 1 and threading.current_thread().name[:4] != "gemm":
        list(_pool().map(run, tiles))
    else:
        for t in tiles:
            run(t)

    if alpha != 1.0:
        acc *= alpha
    if C is not None:
        if beta != 0.0:
            acc += beta * C.astype(np.float64)
        C[...] = acc
        return C
    return acc.astype(out_dtype, copy=False)


def conv_output_size(size: int, k: int, stride: int = 1) -> int:
    return (size - k) // stride + 1


def im2col(x, kh: int, kw: int, stride: int = 1, dtype=None) -> np.ndarray:
    """Unfold an N x C x H x W tensor into a (C*kh*kw) x (N*OH*OW) matrix.

    Rows run channel-major, then row-major inside the window. Column
    ``(n*OH + oy)*OW + ox`` holds the receptive field of output (oy, ox) of
    sample n. No padding. ``dtype`` optionally converts during the copy.
    """
    x = np.asarray(x)
    if x.ndim != 4:
        raise DimensionError(f"im2col expects N x C x H x W, got shape {x.shape}")
    N, C, H, W = x.shape
    if H < kh or W < kw:
        raise DimensionError(f"kernel {kh}x{kw} larger than input {H}x{W}")
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    OH, OW = win.shape[2], win.shape[3]
    # N, C, OH, OW, kh, kw -> C, kh, kw, N, OH, OW
    cols = np.empty((C, kh, kw, N, OH, OW), dtype=dtype or x.dtype)
    cols[...] = win.transpose(1, 4, 5, 0, 2, 3)
    return cols.reshape(C * kh * kw, N * OH * OW)


def col2im(cols, input_shape, kh: int, kw: int, stride: int = 1) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add columns back into an image tensor."""
    cols = np.asarray(cols)
    N, C, H, W = input_shape
    if H < kh or W < kw:
        raise DimensionError(f"kernel {kh}x{kw} larger than input {H}x{W}")
    OH, OW = conv_output_size(H, kh, stride), conv_output_size(W, kw, stride)
    if cols.shape != (C * kh * kw, N * OH * OW):
        raise DimensionError(
            f"col2im expects {(C * kh * kw, N * OH * OW)} for input {tuple(input_shape)}, got {cols.shape}"
        )
    c6 = cols.reshape(C, kh, kw, N, OH, OW)
    out = np.zeros((N, C, H, W), dtype=cols.dtype)
    for ky in range(kh):
        for kx in range(kw):
            out[:, :, ky:ky + stride * OH:stride, kx:kx + stride * OW:stride] += c6[:, ky, kx].transpose(1, 0, 2, 3)
    return out


# -- PTNT binary dump -------------------------------------------------------

def write_tensor(fh: BinaryIO, t) -> None:
    t = np.asarray(t)
    fh.write(TENSOR_MAGIC)
    fh.write(struct.pack("<I", t.ndim))
    fh.write(struct.pack(f"<{t.ndim}I", *t.shape))
    fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def read_tensor(fh: BinaryIO) -> np.ndarray:
    magic = fh.read(4)
    if magic != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic {magic!r}")
    head = fh.read(4)
    if len(head) != 4:
        raise FormatError("truncated tensor header")
    (rank,) = struct.unpack("<I", head)
    raw = fh.read(4 * rank)
    if len(raw) != 4 * rank:
        raise FormatError("truncated tensor header")
    dims = struct.unpack(f"<{rank}I", raw)
    count = int(np.prod(dims)) if rank else 1
    data = fh.read(4 * count)
    if len(data) != 4 * count:
        raise FormatError(f"tensor data truncated: expected {count} values")
    return np.frombuffer(data, dtype="<f4").astype(DTYPE).reshape(dims)


def save_tensor(path, t) -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, t)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tensor(fh)
