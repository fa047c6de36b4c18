"""Digital-image colorimetry: portable pixmap decoding and region colour means."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from etchvm.errors import DataError

MAX_DIM = 2**16
_WS = b" \t\r\n\v\f"


@dataclass(frozen=True)
class Image:
    """RGB image; ``pixels`` has shape (height, width, 3), dtype uint8, row-major."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.shape != (self.height, self.width, 3):
            raise DataError(f"pixel array shape {px.shape} != ({self.height}, {self.width}, 3)")
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)


@dataclass(frozen=True)
class Rect:
    x0: int
    y0: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DataError(f"rect must be at least 1x1, got {self.width}x{self.height}")
        if self.x0 < 0 or self.y0 < 0:
            raise DataError(f"rect origin must be non-negative, got ({self.x0}, {self.y0})")


def _header(data: bytes) -> tuple[bytes, list[int], int]:
    """Return (magic, [width, height, maxval], offset of first raster byte)."""
    pos = 0
    tokens: list[bytes] = []
    n = len(data)
    while len(tokens) < 4:
        while pos < n and data[pos] in _WS:
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
            continue
        if pos >= n:
            raise DataError("truncated PPM header")
        start = pos
        while pos < n and data[pos] not in _WS and data[pos : pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    magic = tokens[0]
    if magic not in (b"P3", b"P6"):
        raise DataError(f"bad magic number {magic!r}; expected P3 or P6")
    try:
        nums = [int(t) for t in tokens[1:]]
    except ValueError:
        raise DataError("non-integer value in PPM header") from None
    # exactly one whitespace byte separates maxval from a binary raster
    if pos >= n or data[pos] not in _WS:
        if magic == b"P6":
            raise DataError("truncated PPM header")
    return magic, nums, pos + 1


def decode_ppm(data: bytes) -> Image:
    magic, (width, height, maxval), offset = _header(data)
    if not (0 < width <= MAX_DIM and 0 < height <= MAX_DIM):
        raise DataError(f"unsupported dimensions {width}x{height}")
    if maxval != 255:
        raise DataError(f"unsupported maxval {maxval}; only 255 is supported")
    count = width * height * 3
    if magic == b"P6":
        raster = data[offset : offset + count]
        if len(raster) < count:
            raise DataError(f"truncated pixel data: {len(raster)} of {count} bytes")
        px = np.frombuffer(raster, dtype=np.uint8)
    else:
        body = data[offset:]
        # comments are legal between ASCII samples too
        cleaned = b"\n".join(line.split(b"#", 1)[0] for line in body.splitlines())
        fields = cleaned.split()
        if len(fields) < count:
            raise DataError(f"truncated pixel data: {len(fields)} of {count} samples")
        try:
            px = np.array([int(f) for f in fields[:count]], dtype=np.int64)
        except ValueError:
            raise DataError("non-integer sample in P3 raster") from None
        if px.min() < 0 or px.max() > maxval:
            raise DataError("sample value outside [0, maxval]")
    return Image(width, height, px.astype(np.uint8).reshape(height, width, 3))


def read_ppm(path) -> Image:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: cannot read: {exc}") from None
    try:
        return decode_ppm(data)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def encode_ppm(image: Image, binary: bool = True) -> bytes:
    head = f"{'P6' if binary else 'P3'}\n{image.width} {image.height}\n255\n".encode("ascii")
    if binary:
        return head + image.pixels.tobytes()
    rows = (" ".join(str(int(v)) for v in row.reshape(-1)) for row in image.pixels)
    return head + ("\n".join(rows) + "\n").encode("ascii")


def write_ppm(image: Image, path, binary: bool = True) -> None:
    Path(path).write_bytes(encode_ppm(image, binary))


def mean_rgb(image: Image, region: Rect) -> tuple[float, float, float]:
    if region.x0 + region.width > image.width or region.y0 + region.height > image.height:
        raise DataError(
            f"region ({region.x0}, {region.y0}, {region.width}x{region.height}) "
            f"outside {image.width}x{image.height} image"
        )
    block = image.pixels[region.y0 : region.y0 + region.height, region.x0 : region.x0 + region.width]
    sums = block.reshape(-1, 3).sum(axis=0, dtype=np.int64)
    n = region.width * region.height
    return tuple(float(s) / n for s in sums)
