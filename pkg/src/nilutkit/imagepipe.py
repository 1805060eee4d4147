"""Image decode/encode (PNG 8/16-bit, binary PPM) and pixelwise enhancement.

PNG goes through OpenCV because Pillow silently truncates 48-bit RGB PNGs to
8 bits, which would break lossless Hald interchange. PPM (P6) is simple
enough to handle directly.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from . import neuralut
from .errors import CorruptData, ShapeMismatch, UnsupportedFormat
from .lut3d import HaldMap, Lut3d, apply_trilinear_bulk

logger = logging.getLogger(__name__)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
IMAGE_SUFFIXES = (".png", ".ppm")


@dataclass(frozen=True, eq=False)
class ImageRgb:
    """RGB image with float64 pixels in [0, 1], shape ``(height, width, 3)``."""

    pixels: np.ndarray = field(repr=False)
    depth: int = 8
    name: str = ""

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ShapeMismatch(f"image pixels must be (H, W, 3), got {px.shape}")
        if self.depth not in (8, 16):
            raise ShapeMismatch(f"bit depth must be 8 or 16, got {self.depth}")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def _dequantize(arr: np.ndarray, depth: int) -> np.ndarray:
    return arr.astype(np.float64) / (2**depth - 1)


def _quantize(px: np.ndarray, depth: int) -> np.ndarray:
    dtype = np.uint8 if depth == 8 else np.uint16
    return np.rint(np.clip(px, 0.0, 1.0) * (2**depth - 1)).astype(dtype)


# --------------------------------------------------------------------------
# PPM


_PPM_HEADER = re.compile(rb"P6(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)\s")


def _decode_ppm(data: bytes) -> ImageRgb:
    m = _PPM_HEADER.match(data)
    if m is None:
        raise CorruptData("malformed PPM header")
    width, height, maxval = (int(g) for g in m.groups())
    if not 0 < maxval < 65536 or width == 0 or height == 0:
        raise CorruptData(f"invalid PPM dimensions or maxval ({width}x{height}, {maxval})")
    dtype = np.dtype(">u2" if maxval > 255 else "u1")
    need = width * height * 3 * dtype.itemsize
    body = data[m.end() : m.end() + need]
    if len(body) < need:
        raise CorruptData(f"PPM data truncated: {len(body)} of {need} bytes")
    arr = np.frombuffer(body, dtype=dtype).reshape(height, width, 3)
    depth = 16 if maxval > 255 else 8
    return ImageRgb(arr.astype(np.float64) / maxval, depth=depth)


def _encode_ppm(img: ImageRgb, depth: int) -> bytes:
    q = _quantize(img.pixels, depth)
    if depth == 16:
        q = q.astype(">u2")
    header = f"P6\n{img.width} {img.height}\n{2**depth - 1}\n".encode("ascii")
    return header + q.tobytes()


# --------------------------------------------------------------------------
# PNG


def _decode_png(data: bytes) -> ImageRgb:
    buf = np.frombuffer(data, dtype=np.uint8)
    arr = cv2.imdecode(buf, cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise CorruptData("PNG stream could not be decoded")
    if arr.dtype == np.uint8:
        depth = 8
    elif arr.dtype == np.uint16:
        depth = 16
    else:
        raise UnsupportedFormat(f"unsupported PNG sample type {arr.dtype}")
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    elif arr.shape[2] == 4:
        arr = cv2.cvtColor(arr, cv2.COLOR_BGRA2RGB)
    elif arr.shape[2] == 3:
        arr = cv2.cvtColor(arr, cv2.COLOR_BGR2RGB)
    else:
        raise UnsupportedFormat(f"unsupported PNG channel count {arr.shape[2]}")
    return ImageRgb(_dequantize(arr, depth), depth=depth)


def _encode_png(img: ImageRgb, depth: int) -> bytes:
    q = _quantize(img.pixels, depth)
    ok, buf = cv2.imencode(".png", cv2.cvtColor(q, cv2.COLOR_RGB2BGR))
    if not ok:
        raise CorruptData("PNG encoding failed")
    return buf.tobytes()


# --------------------------------------------------------------------------
# Public API


def decode_image(data: bytes) -> ImageRgb:
    """Decode PNG (8/16-bit gray, RGB or RGBA; alpha dropped) or binary PPM.

    Raises:
        UnsupportedFormat: for any other container.
        CorruptData: for truncated or undecodable streams.
    """
    if data.startswith(PNG_SIGNATURE):
        return _decode_png(data)
    if data.startswith(b"P6"):
        return _decode_ppm(data)
    raise UnsupportedFormat("only PNG and binary PPM (P6) images are supported")


def encode_image(img: ImageRgb, depth: int = 8, fmt: str = "png") -> bytes:
    """Quantize with ``round(v * (2**depth - 1))`` and encode as PNG or PPM."""
    if depth not in (8, 16):
        raise ShapeMismatch(f"depth must be 8 or 16, got {depth}")
    if fmt == "png":
        return _encode_png(img, depth)
    if fmt == "ppm":
        return _encode_ppm(img, depth)
    raise UnsupportedFormat(f"unknown output format {fmt!r}")


def read_image(path) -> ImageRgb:
    path = Path(path)
    img = decode_image(path.read_bytes())
    return ImageRgb(img.pixels, depth=img.depth, name=path.name)


def write_image(img: ImageRgb, path, depth: int | None = None) -> None:
    path = Path(path)
    fmt = "ppm" if path.suffix.lower() == ".ppm" else "png"
    path.write_bytes(encode_image(img, depth or img.depth, fmt))


def load_corpus(directory) -> tuple[list[ImageRgb], list[tuple[str, str]]]:
    """Read every PNG/PPM in ``directory`` (sorted by name).

    Undecodable files are skipped and returned as ``(name, reason)`` pairs.
    """
    images, skipped = [], []
    for path in sorted(Path(directory).iterdir()):
        if path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        try:
            images.append(read_image(path))
        except (UnsupportedFormat, CorruptData) as exc:
            logger.warning("skipping %s: %s", path.name, exc)
            skipped.append((path.name, str(exc)))
    return images, skipped


def hald_to_image(hald: HaldMap) -> ImageRgb:
    return ImageRgb(hald.raster(), depth=16, name=f"hald{hald.bits}")


def enhance_image(img: ImageRgb, transform, cond=None) -> ImageRgb:
    """Apply a :class:`Lut3d` or a fitted model pixelwise.

    ``transform`` is either a ``Lut3d`` or an ``MlpParams``; ``cond`` must be
    supplied exactly when the model is conditional.
    """
    if isinstance(transform, Lut3d):
        if cond is not None:
            raise ShapeMismatch("a condition vector only applies to conditional models")
        out = np.clip(apply_trilinear_bulk(transform, img.pixels), 0.0, 1.0)
    else:
        out = neuralut.apply_model(transform, img.pixels, cond)
    return ImageRgb(out, depth=img.depth, name=img.name)
