"""Classical 3D LUT machinery.

A :class:`Lut3d` stores an ``N x N x N`` RGB lattice in ``.cube`` order (red
index fastest, then green, then blue). :func:`apply_trilinear_bulk` is the
ground-truth color operator every fitted network is measured against, and
:func:`hald_identity` enumerates the full b-bit RGB cube that serves as
training data.
"""

from __future__ import annotations

import io
import logging
import math
import re
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .errors import (
    CountMismatch,
    InvalidBits,
    Lut1dUnsupported,
    MalformedRow,
    MissingSize,
    RowCountMismatch,
    SizeOutOfRange,
    UnknownStyle,
)

logger = logging.getLogger(__name__)

MAX_CUBE_SIZE = 256
_KEYWORD = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True, eq=False)
class Lut3d:
    """Immutable 3D LUT.

    ``lattice`` has shape ``(N**3, 3)`` in red-fastest order; ``table`` views
    the same data as ``(N_blue, N_green, N_red, 3)``.
    """

    size: int
    lattice: np.ndarray
    domain_min: tuple[float, float, float] = (0.0, 0.0, 0.0)
    domain_max: tuple[float, float, float] = (1.0, 1.0, 1.0)
    title: str = ""

    def __post_init__(self):
        if not 2 <= self.size <= MAX_CUBE_SIZE:
            raise SizeOutOfRange(f"LUT size {self.size} outside [2, {MAX_CUBE_SIZE}]")
        lattice = np.array(self.lattice, dtype=np.float64).reshape(-1, 3)
        if lattice.shape[0] != self.size**3:
            raise RowCountMismatch(
                f"lattice has {lattice.shape[0]} entries, expected {self.size**3}"
            )
        if not np.all(np.isfinite(lattice)):
            raise MalformedRow("lattice contains non-finite values")
        lo = tuple(float(v) for v in self.domain_min)
        hi = tuple(float(v) for v in self.domain_max)
        if not all(a < b for a, b in zip(lo, hi)):
            raise MalformedRow(f"DOMAIN_MIN {lo} must be below DOMAIN_MAX {hi}")
        lattice.setflags(write=False)
        object.__setattr__(self, "lattice", lattice)
        object.__setattr__(self, "domain_min", lo)
        object.__setattr__(self, "domain_max", hi)

    @property
    def table(self) -> np.ndarray:
        n = self.size
        return self.lattice.reshape(n, n, n, 3)

    def node(self, ri: int, gi: int, bi: int) -> np.ndarray:
        return self.table[bi, gi, ri]

    def node_coordinates(self) -> np.ndarray:
        """Input colors of every lattice node, in lattice order."""
        lo = np.asarray(self.domain_min)
        hi = np.asarray(self.domain_max)
        return lo + lattice_grid(self.size) * (hi - lo)

    def allclose(self, other: "Lut3d", atol: float = 1e-6) -> bool:
        return (
            self.size == other.size
            and np.allclose(self.domain_min, other.domain_min, rtol=0, atol=atol)
            and np.allclose(self.domain_max, other.domain_max, rtol=0, atol=atol)
            and np.allclose(self.lattice, other.lattice, rtol=0, atol=atol)
        )


def lattice_grid(n: int) -> np.ndarray:
    """Unit-cube node coordinates ``(i, j, k) / (n - 1)``, red fastest."""
    ramp = np.arange(n, dtype=np.float64) / (n - 1)
    b, g, r = np.meshgrid(ramp, ramp, ramp, indexing="ij")
    return np.stack([r.ravel(), g.ravel(), b.ravel()], axis=1)


# --------------------------------------------------------------------------
# .cube text format


def _parse_floats(tokens: list[str], count: int, lineno: int, what: str) -> tuple:
    if len(tokens) != count:
        raise MalformedRow(f"{what} expects {count} values, got {len(tokens)}", lineno)
    try:
        values = tuple(float(t) for t in tokens)
    except ValueError:
        raise MalformedRow(f"non-numeric value in {what}: {' '.join(tokens)}", lineno)
    if not all(math.isfinite(v) for v in values):
        raise MalformedRow(f"non-finite value in {what}", lineno)
    return values


def parse_cube(text: str | TextIO) -> Lut3d:
    """Parse IRIDAS/Adobe ``.cube`` text into a :class:`Lut3d`.

    Recognized keywords are ``TITLE``, ``DOMAIN_MIN``, ``DOMAIN_MAX`` and
    ``LUT_3D_SIZE``; ``LUT_1D_SIZE`` is rejected and any other upper-case
    keyword line is skipped. Numbers are parsed with ``float`` so the result
    never depends on the process locale.
    """
    if not isinstance(text, str):
        text = text.read()

    size = None
    title = ""
    dmin = (0.0, 0.0, 0.0)
    dmax = (1.0, 1.0, 1.0)
    rows: list[tuple[float, float, float]] = []
    first_data_line = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head = tokens[0]
        if _KEYWORD.match(head) and not _is_number(head):
            key = head.upper()
            if rows and key != "TITLE":
                raise MalformedRow(f"keyword {head} after data rows", lineno)
            if key == "TITLE":
                title = line[len(head):].strip().strip('"')
            elif key == "LUT_3D_SIZE":
                (n,) = _parse_floats(tokens[1:], 1, lineno, "LUT_3D_SIZE")
                if n != int(n):
                    raise MalformedRow("LUT_3D_SIZE must be an integer", lineno)
                size = int(n)
                if not 2 <= size <= MAX_CUBE_SIZE:
                    raise SizeOutOfRange(
                        f"LUT_3D_SIZE {size} outside [2, {MAX_CUBE_SIZE}]", lineno
                    )
            elif key == "LUT_1D_SIZE":
                raise Lut1dUnsupported("1D LUTs are not supported", lineno)
            elif key == "DOMAIN_MIN":
                dmin = _parse_floats(tokens[1:], 3, lineno, "DOMAIN_MIN")
            elif key == "DOMAIN_MAX":
                dmax = _parse_floats(tokens[1:], 3, lineno, "DOMAIN_MAX")
            else:
                logger.debug("ignoring .cube keyword %s on line %d", head, lineno)
            continue
        if first_data_line is None:
            first_data_line = lineno
        rows.append(_parse_floats(tokens, 3, lineno, "data row"))

    if size is None:
        raise MissingSize("no LUT_3D_SIZE line found", first_data_line)
    if len(rows) != size**3:
        raise RowCountMismatch(f"expected {size**3} data rows for size {size}, got {len(rows)}")
    return Lut3d(size=size, lattice=np.array(rows), domain_min=dmin, domain_max=dmax, title=title)


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def write_cube(lut: Lut3d) -> str:
    """Serialize to ``.cube`` text. Comments from a parsed source are not kept."""
    out = io.StringIO()
    if lut.title:
        out.write(f'TITLE "{lut.title}"\n')
    out.write(f"LUT_3D_SIZE {lut.size}\n")
    if lut.domain_min != (0.0, 0.0, 0.0) or lut.domain_max != (1.0, 1.0, 1.0):
        out.write("DOMAIN_MIN {:.10g} {:.10g} {:.10g}\n".format(*lut.domain_min))
        out.write("DOMAIN_MAX {:.10g} {:.10g} {:.10g}\n".format(*lut.domain_max))
    for r, g, b in lut.lattice:
        out.write(f"{r:.10f} {g:.10f} {b:.10f}\n")
    return out.getvalue()


def read_cube(path) -> Lut3d:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_cube(fh.read())


def save_cube(lut: Lut3d, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_cube(lut))


# --------------------------------------------------------------------------
# Trilinear application


def apply_trilinear_bulk(lut: Lut3d, pixels) -> np.ndarray:
    """Apply ``lut`` to an array of RGB triples with trilinear interpolation.

    Accepts any shape ``(..., 3)`` and returns the same shape in float64.
    Inputs are clamped into the LUT domain. An input sitting exactly on a
    lattice node returns that node's stored value bit-for-bit.
    """
    px = np.asarray(pixels, dtype=np.float64)
    shape = px.shape
    if shape[-1:] != (3,):
        raise ValueError(f"expected trailing axis of 3, got shape {shape}")
    px = px.reshape(-1, 3)
    lo = np.asarray(lut.domain_min)
    hi = np.asarray(lut.domain_max)
    n = lut.size

    t = (np.clip(px, lo, hi) - lo) / (hi - lo) * (n - 1)
    # Snap coordinates that land on a node up to rounding, e.g. (i/32)*32.
    nearest = np.rint(t)
    t = np.where(np.abs(t - nearest) < 1e-9, nearest, t)
    i0 = np.minimum(np.floor(t), n - 2).astype(np.intp)
    f = t - i0

    table = lut.table
    ri, gi, bi = i0[:, 0], i0[:, 1], i0[:, 2]
    fr, fg, fb = f[:, 0:1], f[:, 1:2], f[:, 2:3]

    def lerp(a, b, w):
        # a + w*(b-a) is exact when a == b and, for the identity lattice with
        # a power-of-two N-1, everywhere; w == 1 returns b exactly.
        return np.where(w == 1.0, b, a + w * (b - a))

    c00 = lerp(table[bi, gi, ri], table[bi, gi, ri + 1], fr)
    c10 = lerp(table[bi, gi + 1, ri], table[bi, gi + 1, ri + 1], fr)
    c01 = lerp(table[bi + 1, gi, ri], table[bi + 1, gi, ri + 1], fr)
    c11 = lerp(table[bi + 1, gi + 1, ri], table[bi + 1, gi + 1, ri + 1], fr)
    c0 = lerp(c00, c10, fg)
    c1 = lerp(c01, c11, fg)
    return lerp(c0, c1, fb).reshape(shape)


def apply_trilinear(lut: Lut3d, rgb) -> np.ndarray:
    """Single-color form of :func:`apply_trilinear_bulk`."""
    return apply_trilinear_bulk(lut, np.asarray(rgb, dtype=np.float64).reshape(1, 3))[0]


# --------------------------------------------------------------------------
# Hald RGB maps


def hald_dimensions(bits: int) -> tuple[int, int]:
    """Raster ``(width, height)`` holding ``(2**bits)**3`` pixels."""
    _check_bits(bits)
    total = 3 * bits
    return 2 ** ((total + 1) // 2), 2 ** (total // 2)


def _check_bits(bits: int) -> None:
    if not isinstance(bits, (int, np.integer)) or not 1 <= bits <= 8:
        raise InvalidBits(f"bits must be an integer in [1, 8], got {bits!r}")


@dataclass(frozen=True, eq=False)
class HaldMap:
    """A full b-bit RGB cube laid out as a 2D raster.

    ``pixels`` has shape ``(height * width, 3)``; linear index ``r + g*2**b +
    b*2**(2b)`` is also the row-major raster index.
    """

    bits: int
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        _check_bits(self.bits)
        px = np.asarray(self.pixels, dtype=np.float64).reshape(-1, 3)
        if px.shape[0] != (2**self.bits) ** 3:
            raise CountMismatch(
                f"{px.shape[0]} pixels do not match bits={self.bits} "
                f"({(2 ** self.bits) ** 3} expected)"
            )
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return hald_dimensions(self.bits)[0]

    @property
    def height(self) -> int:
        return hald_dimensions(self.bits)[1]

    def raster(self) -> np.ndarray:
        return self.pixels.reshape(self.height, self.width, 3)


def hald_identity(bits: int) -> HaldMap:
    """Identity Hald map enumerating each b-bit RGB triple exactly once."""
    _check_bits(bits)
    levels = 2**bits
    return HaldMap(bits=bits, pixels=lattice_grid(levels))


def hald_to_samples(hald: HaldMap) -> np.ndarray:
    """Flatten a Hald map to ``(count, 3)`` samples in linear order."""
    return np.array(hald.pixels)


def samples_to_hald(pixels, bits: int) -> HaldMap:
    """Inverse of :func:`hald_to_samples`."""
    _check_bits(bits)
    px = np.asarray(pixels, dtype=np.float64)
    if px.shape != ((2**bits) ** 3, 3):
        raise CountMismatch(f"sample array of shape {px.shape} does not match bits={bits}")
    return HaldMap(bits=bits, pixels=px)


def hald_from_raster(raster, bits: int, snap: bool = True) -> HaldMap:
    """Rebuild a HaldMap from an ``(H, W, 3)`` raster.

    With ``snap`` set, values are re-quantized to the b-bit grid, which makes
    a round trip through a 16-bit image exact for identity maps.
    """
    arr = np.asarray(raster, dtype=np.float64)
    w, h = hald_dimensions(bits)
    if arr.shape != (h, w, 3):
        raise CountMismatch(f"raster shape {arr.shape} does not match bits={bits} ({h}, {w}, 3)")
    px = arr.reshape(-1, 3)
    if snap:
        q = 2**bits - 1
        px = np.rint(px * q) / q
    return HaldMap(bits=bits, pixels=px)


def apply_lut_to_hald(lut: Lut3d, hald: HaldMap) -> HaldMap:
    return HaldMap(bits=hald.bits, pixels=apply_trilinear_bulk(lut, hald.pixels))


# --------------------------------------------------------------------------
# Synthetic stand-in LUTs

MIXER_MATRIX = np.array(
    [
        [0.80, 0.15, 0.05],
        [0.10, 0.80, 0.10],
        [0.05, 0.15, 0.80],
    ]
)
GAMMA_EXPONENTS = (2.2, 1.8, 0.9)
WARM_GAINS = (1.18, 1.0, 0.82)
COOL_GAINS = (0.85, 1.0, 1.15)
HUE_MAX_DEGREES = 24.0
SOFTCLIP_KNEE = 0.1

SYNTH_KINDS = ("identity", "gamma", "channel_mixer", "warm", "cool", "hue_rotate")
# Non-identity kinds used as the default multi-LUT benchmark set.
SYNTH_SUITE = ("gamma", "channel_mixer", "warm", "hue_rotate")


def _gamma(rgb: np.ndarray) -> np.ndarray:
    return rgb ** np.asarray(GAMMA_EXPONENTS)


def _mixer(rgb: np.ndarray) -> np.ndarray:
    return rgb @ MIXER_MATRIX.T


def _white_balance(gains):
    g = np.asarray(gains)

    def curve(rgb: np.ndarray) -> np.ndarray:
        # Rational curve with slope `g` at 0 that pins 0 -> 0 and 1 -> 1.
        return g * rgb / (1.0 + (g - 1.0) * rgb)

    return curve


def _softclip(x: np.ndarray, knee: float = SOFTCLIP_KNEE) -> np.ndarray:
    """C1 compression of the real line into (0, 1); identity on [knee, 1-knee]."""
    hi = 1.0 - knee
    out = np.where(x > hi, hi + knee * np.tanh((x - hi) / knee), x)
    return np.where(x < knee, knee + knee * np.tanh((x - knee) / knee), out)


def _hue_rotate(rgb: np.ndarray) -> np.ndarray:
    # Rotate about the grey diagonal by an angle that varies sinusoidally
    # with mean intensity; the grey component is left untouched.
    axis = np.full(3, 1.0 / math.sqrt(3.0))
    mean = rgb.mean(axis=1, keepdims=True)
    chroma = rgb - mean
    theta = math.radians(HUE_MAX_DEGREES) * np.sin(np.pi * mean)
    cos, sin = np.cos(theta), np.sin(theta)
    cross = np.cross(axis, chroma)
    rotated = chroma * cos + cross * sin  # chroma is orthogonal to axis
    return _softclip(mean + rotated)


_SYNTH = {
    "identity": lambda rgb: rgb.copy(),
    "gamma": _gamma,
    "channel_mixer": _mixer,
    "warm": _white_balance(WARM_GAINS),
    "cool": _white_balance(COOL_GAINS),
    "hue_rotate": _hue_rotate,
}


def synth_transform(kind: str, rgb) -> np.ndarray:
    """Evaluate the analytic color transform behind a synthetic LUT kind."""
    try:
        fn = _SYNTH[kind]
    except KeyError:
        raise UnknownStyle(f"unknown synthetic LUT kind {kind!r}; choose from {SYNTH_KINDS}")
    return fn(np.asarray(rgb, dtype=np.float64).reshape(-1, 3))


def synth_lut(kind: str, size: int = 33) -> Lut3d:
    """Sample a smooth analytic transform on an ``size**3`` lattice."""
    nodes = lattice_grid(size)
    return Lut3d(size=size, lattice=synth_transform(kind, nodes), title=f"synthetic {kind}")


def identity_lut(size: int = 33) -> Lut3d:
    return synth_lut("identity", size)
