"""Binary portable pixmap (P6) and graymap (P5) reading and writing."""

from __future__ import annotations

import numpy as np

from .errors import FormatError


def _read_header(data: bytes, magic: bytes):
    if data[:2] != magic:
        raise FormatError(f"expected {magic.decode()} file, got magic {data[:2]!r}")
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise FormatError("truncated header")
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        try:
            fields.append(int(data[start:pos]))
        except ValueError as exc:
            raise FormatError(f"bad header field {data[start:pos]!r}") from exc
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("missing whitespace after header")
    width, height, maxval = fields
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise FormatError(f"invalid header {width}x{height} maxval {maxval}")
    return width, height, maxval, pos + 1


def _read_raster(path, magic: bytes, channels: int):
    with open(path, "rb") as fh:
        data = fh.read()
    width, height, maxval, offset = _read_header(data, magic)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    need = count * dtype.itemsize
    if len(data) - offset < need:
        raise FormatError(f"raster truncated: need {need} bytes, have {len(data) - offset}")
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    return raster.reshape(height, width, channels), maxval


def read_ppm(path) -> np.ndarray:
    """Read a P6 file as a 3 x H x W float32 array in [0, 1]."""
    raster, maxval = _read_raster(path, b"P6", 3)
    return (raster.transpose(2, 0, 1).astype(np.float32) / np.float32(maxval)).astype(np.float32)


def _comment_line(comment) -> bytes:
    if comment is None:
        return b""
    if "\n" in comment or "\r" in comment:
        raise FormatError("header comments must be a single line")
    return b"# " + comment.encode("utf-8") + b"\n"


def write_ppm(path, pixels, comment: str | None = None) -> None:
    """Write a 3 x H x W array in [0, 1] as an 8-bit P6 file, with an optional header comment."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[0] != 3:
        raise FormatError(f"expected 3 x H x W pixels, got {pixels.shape}")
    raster = np.clip(np.rint(pixels * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    _, h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n" + _comment_line(comment) + b"%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(raster).tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a P5 file as an H x W integer array (uint8, or uint16 for maxval > 255)."""
    raster, maxval = _read_raster(path, b"P5", 1)
    raster = raster[..., 0]
    return raster.astype(np.uint16 if maxval > 255 else np.uint8)


def write_pgm(path, values, comment: str | None = None) -> None:
    values = np.asarray(values)
    if values.ndim != 2:
        raise FormatError(f"expected H x W values, got {values.shape}")
    if values.min(initial=0) < 0 or values.max(initial=0) > 255:
        raise FormatError("graymap values must lie in [0, 255]")
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n" + _comment_line(comment) + b"%d %d\n255\n" % (w, h))
        fh.write(values.astype(np.uint8).tobytes())
