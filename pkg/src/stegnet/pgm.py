"""Binary PGM (P5, maxval 255) reading and writing."""

from __future__ import annotations

from pathlib import Path

import numpy as np


class PgmError(ValueError):
    pass


class MalformedHeaderError(PgmError):
    pass


class ShortPayloadError(PgmError):
    pass


class UnsupportedVariantError(PgmError):
    pass


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise MalformedHeaderError("header ends early")
        c = data[i:i + 1]
        if c == b"#":
            end = data.find(b"\n", i)
            i = len(data) if end < 0 else end + 1
        elif c.isspace():
            i += 1
        else:
            start = i
            while i < len(data) and not data[i:i + 1].isspace() and data[i:i + 1] != b"#":
                i += 1
            tokens.append(data[start:i])
    # exactly one whitespace byte separates maxval from the raster
    if i >= len(data) or not data[i:i + 1].isspace():
        raise MalformedHeaderError("missing whitespace after maxval")
    return tokens, i + 1


def decode_pgm(data: bytes) -> np.ndarray:
    magic = data[:2]
    if magic in (b"P1", b"P2", b"P3", b"P4", b"P6", b"P7"):
        raise UnsupportedVariantError(f"unsupported PNM variant {magic.decode()}")
    if magic != b"P5":
        raise MalformedHeaderError("not a PNM file")
    tokens, offset = _header_tokens(data[2:], 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise MalformedHeaderError(f"non-numeric header field: {tokens}") from exc
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedVariantError(f"unsupported PNM variant: maxval {maxval} (only 255)")
    raster = data[2 + offset:]
    if len(raster) < width * height:
        raise ShortPayloadError(f"expected {width * height} pixel bytes, got {len(raster)}")
    return np.frombuffer(raster[:width * height], dtype=np.uint8).reshape(height, width).copy()


def encode_pgm(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {img.shape}")
    if img.dtype != np.uint8:
        if img.min() < 0 or img.max() > 255 or not np.array_equal(img, np.round(img)):
            raise ValueError("pixel values must be integers in [0, 255]")
        img = img.astype(np.uint8)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def load_pgm(path) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())


def save_pgm(img: np.ndarray, path) -> None:
    Path(path).write_bytes(encode_pgm(img))
