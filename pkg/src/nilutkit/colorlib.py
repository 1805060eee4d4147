"""sRGB -> CIELAB conversion and the two fidelity metrics (PSNR, Delta E 76).

All functions accept array-likes with a trailing axis of length 3 and work
on whole images at once. Reductions go through numpy's pairwise summation,
which is deterministic for a given array layout.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidColor, ShapeMismatch

# Linear sRGB -> XYZ, D65 (IEC 61966-2-1).
SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
# Reference white taken from the matrix itself so that RGB (1,1,1) lands on
# L=100, a=b=0 exactly rather than within the rounding of a published triple.
WHITE_D65 = SRGB_TO_XYZ.sum(axis=1)

_EPSILON = 216.0 / 24389.0
_KAPPA = 24389.0 / 27.0


def _finite(x, name: str = "color") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidColor(f"{name} contains non-finite values")
    return arr


def srgb_to_linear(rgb: np.ndarray) -> np.ndarray:
    """Piecewise sRGB EOTF (2.4 exponent segment above 0.04045)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)


def srgb_to_lab(rgb) -> np.ndarray:
    """Convert display-referred sRGB in [0, 1] to CIELAB (D65).

    Values outside [0, 1] are clamped first. The input may be a single triple
    or any array of shape ``(..., 3)``.

    Raises:
        InvalidColor: if any component is NaN or infinite.
    """
    rgb = _finite(rgb)
    if rgb.shape[-1:] != (3,):
        raise ShapeMismatch(f"expected trailing axis of 3, got shape {rgb.shape}")
    lin = srgb_to_linear(np.clip(rgb, 0.0, 1.0))
    xyz = lin @ SRGB_TO_XYZ.T
    t = xyz / WHITE_D65
    f = np.where(t > _EPSILON, np.cbrt(t), (_KAPPA * t + 16.0) / 116.0)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def delta_e(p, q) -> np.ndarray | float:
    """CIE76 color difference: Euclidean distance between Lab triples."""
    p = _finite(p, "p")
    q = _finite(q, "q")
    if p.shape != q.shape:
        raise ShapeMismatch(f"shape {p.shape} != {q.shape}")
    diff = np.abs(p - q)
    # Scale before squaring so tiny differences do not underflow to zero.
    peak = diff.max(axis=-1, keepdims=True)
    safe = np.where(peak > 0, peak, 1.0)
    d = peak[..., 0] * np.sqrt(np.sum((diff / safe) ** 2, axis=-1))
    return float(d) if d.ndim == 0 else d


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for data with peak 1.0.

    The MSE is pooled over every element of both arrays. Identical inputs
    give ``math.inf``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shape {a.shape} != {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidColor("psnr operands must be finite")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def mean_delta_e(a, b) -> float:
    """Mean per-pixel Delta E 76 between two sRGB images (or triple arrays)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shape {a.shape} != {b.shape}")
    if a.size == 0:
        raise ShapeMismatch("empty input")
    return float(np.mean(delta_e(srgb_to_lab(a), srgb_to_lab(b))))
