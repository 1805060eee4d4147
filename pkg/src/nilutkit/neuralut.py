"""Coordinate MLPs mapping RGB (optionally + a style condition) to RGB.

Three architectures share one parameter layout:

* ``mlp``      -- plain MLP with ReLU or tanh hidden activations,
* ``mlp_res``  -- the same MLP plus a global skip, ``out = rgb + net(z)``,
* ``siren``    -- sinusoidal activations ``sin(omega0 * u)``.

A network with ``hidden_layers = L`` has an input layer ``(3+m) -> N``,
``L`` hidden ``N -> N`` layers and a linear ``N -> 3`` head. Parameters
live in a single flat float64 array, layer by layer, each layer's weight
matrix (``(fan_out, fan_in)``, row-major) before its bias.

Gradients of the mean absolute error are computed by hand-written reverse
mode; no autograd framework is involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    MissingCondition,
    NonFinite,
    ShapeMismatch,
    UnexpectedCondition,
    UsageError,
)

ARCHS = ("mlp", "mlp_res", "siren")
ACTIVATIONS = ("relu", "tanh")
DEFAULT_CHUNK = 65536


@dataclass(frozen=True)
class MlpConfig:
    arch: str = "mlp_res"
    neurons: int = 128
    hidden_layers: int = 2
    cond_dim: int = 0
    omega0: float = 30.0
    activation: str = "relu"

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise UsageError(f"unknown architecture {self.arch!r}; choose from {ARCHS}")
        if self.activation not in ACTIVATIONS:
            raise UsageError(f"unknown activation {self.activation!r}")
        if self.neurons < 1 or self.hidden_layers < 1 or self.cond_dim < 0:
            raise UsageError("neurons and hidden_layers must be >= 1, cond_dim >= 0")
        if self.arch == "siren" and not self.omega0 > 0:
            raise UsageError("omega0 must be positive for siren")

    @property
    def in_dim(self) -> int:
        return 3 + self.cond_dim

    def layer_shapes(self) -> list[tuple[int, int]]:
        """``(fan_out, fan_in)`` for every affine layer, input to output."""
        n = self.neurons
        return [(n, self.in_dim)] + [(n, n)] * self.hidden_layers + [(3, n)]

    def describe(self) -> str:
        act = "sin" if self.arch == "siren" else self.activation
        cond = f", m={self.cond_dim}" if self.cond_dim else ""
        return f"{self.arch}({act}) {self.neurons}x{self.hidden_layers}{cond}"


def param_count(config: MlpConfig) -> int:
    n, layers, m = config.neurons, config.hidden_layers, config.cond_dim
    return (3 + m) * n + n + layers * (n * n + n) + 3 * n + 3


@dataclass(frozen=True, eq=False)
class MlpParams:
    """Flat parameter vector together with the config that gives it shape."""

    config: MlpConfig
    flat: np.ndarray = field(repr=False)

    def __post_init__(self):
        flat = np.asarray(self.flat, dtype=np.float64).ravel()
        if flat.size != param_count(self.config):
            raise ShapeMismatch(
                f"{flat.size} parameters do not match {self.config.describe()} "
                f"({param_count(self.config)} expected)"
            )
        object.__setattr__(self, "flat", flat)

    def layers(self, dtype=np.float64) -> list[tuple[np.ndarray, np.ndarray]]:
        return unpack(self.config, self.flat.astype(dtype, copy=False))

    def copy(self) -> "MlpParams":
        return MlpParams(self.config, self.flat.copy())


def unpack(config: MlpConfig, flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a flat vector into ``(W, b)`` views following the layout contract."""
    out = []
    pos = 0
    for fan_out, fan_in in config.layer_shapes():
        w = flat[pos : pos + fan_out * fan_in].reshape(fan_out, fan_in)
        pos += fan_out * fan_in
        b = flat[pos : pos + fan_out]
        pos += fan_out
        out.append((w, b))
    return out


def init_params(config: MlpConfig, seed: int = 0) -> MlpParams:
    """Seeded initialization.

    mlp / mlp_res use He-style uniform fan-in bounds (``sqrt(6/fan_in)`` for
    ReLU, ``sqrt(3/fan_in)`` for tanh and the linear head) with biases in
    ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``. mlp_res zeroes its head so the
    network starts as the exact identity. siren follows the usual scheme:
    ``U(-1/fan_in, 1/fan_in)`` for the first layer and
    ``U(-sqrt(6/fan_in)/omega0, +...)`` afterwards.
    """
    rng = np.random.default_rng(seed)
    shapes = config.layer_shapes()
    chunks = []
    for i, (fan_out, fan_in) in enumerate(shapes):
        is_head = i == len(shapes) - 1
        if config.arch == "siren":
            bound = 1.0 / fan_in if i == 0 else np.sqrt(6.0 / fan_in) / config.omega0
            bias_bound = bound
        else:
            gain = 2.0 if (config.activation == "relu" and not is_head) else 1.0
            bound = np.sqrt(3.0 * gain / fan_in)
            bias_bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = rng.uniform(-bias_bound, bias_bound, size=fan_out)
        if is_head and config.arch == "mlp_res":
            w[:] = 0.0
            b[:] = 0.0
        chunks += [w.ravel(), b]
    return MlpParams(config, np.concatenate(chunks))


# --------------------------------------------------------------------------
# Forward / backward


def _check_inputs(config: MlpConfig, inputs) -> np.ndarray:
    x = np.asarray(inputs)
    if x.ndim != 2 or x.shape[1] != config.in_dim:
        raise ShapeMismatch(
            f"inputs of shape {x.shape} do not match input width {config.in_dim}"
        )
    return x


def _forward_chunk(config: MlpConfig, layers, x: np.ndarray, keep: bool, skip: bool = True):
    """Run one chunk; ``keep`` retains what the backward pass needs."""
    arch = config.arch
    omega = config.omega0
    h = x
    cache = []
    for w, b in layers[:-1]:
        u = h @ w.T
        u += b
        if arch == "siren":
            a = np.sin(omega * u)
            saved = u
        elif config.activation == "relu":
            a = np.maximum(u, 0)
            saved = a
        else:
            a = np.tanh(u)
            saved = a
        if keep:
            cache.append((h, saved))
        h = a
    w, b = layers[-1]
    y = h @ w.T
    y += b
    if arch == "mlp_res" and skip:
        y += x[:, :3]
    if keep:
        cache.append((h, None))
    return y, cache


def _backward_chunk(config: MlpConfig, layers, cache, dy: np.ndarray, grads):
    """Accumulate parameter gradients for one chunk into ``grads`` (float64)."""
    omega = config.omega0
    dh = dy
    for idx in range(len(layers) - 1, -1, -1):
        w, _ = layers[idx]
        h_in, saved = cache[idx]
        if saved is None:
            du = dh
        elif config.arch == "siren":
            du = dh * (omega * np.cos(omega * saved))
        elif config.activation == "relu":
            # relu'(0) := 0
            du = dh * (saved > 0)
        else:
            du = dh * (1.0 - saved * saved)
        gw, gb = grads[idx]
        gw += du.T @ h_in
        gb += du.sum(axis=0)
        if idx > 0:
            dh = du @ w


def forward(params: MlpParams, inputs, dtype=np.float64, chunk_size: int = DEFAULT_CHUNK) -> np.ndarray:
    """Raw (unclamped) network outputs for an ``(n, 3+m)`` input array.

    The layers run in ``dtype``; the result is float64. For ``mlp_res`` the
    skip connection adds the float64 input, so a zero head reproduces the
    input exactly whatever the compute precision.
    """
    config = params.config
    x = _check_inputs(config, inputs)
    layers = params.layers(dtype)
    out = np.empty((x.shape[0], 3), dtype=np.float64)
    for start in range(0, x.shape[0], chunk_size):
        rows = slice(start, start + chunk_size)
        xc = x[rows].astype(dtype, copy=False)
        out[rows], _ = _forward_chunk(config, layers, xc, keep=False, skip=False)
        if config.arch == "mlp_res":
            out[rows] += x[rows, :3]
    return out


def loss_and_grad(
    params: MlpParams,
    inputs,
    targets,
    dtype=np.float64,
    chunk_size: int = DEFAULT_CHUNK,
) -> tuple[float, np.ndarray]:
    """Mean absolute error over samples and channels, and its gradient.

    The gradient uses ``sign(0) = 0`` for the absolute value and
    ``relu'(0) = 0``. Chunks are accumulated in a fixed order so results are
    bit-reproducible for a given ``chunk_size``.

    Raises:
        ShapeMismatch: when inputs and targets disagree in sample count.
        NonFinite: when the loss or any gradient entry is not finite.
    """
    config = params.config
    x = _check_inputs(config, inputs)
    t = np.asarray(targets)
    if t.shape != (x.shape[0], 3):
        raise ShapeMismatch(f"targets shape {t.shape} != ({x.shape[0]}, 3)")
    count = x.shape[0] * 3
    if count == 0:
        raise ShapeMismatch("empty batch")

    layers = params.layers(dtype)
    grad_flat = np.zeros(params.flat.size, dtype=np.float64)
    grads = unpack(config, grad_flat)
    abs_sum = 0.0
    scale = 1.0 / count
    # overflow surfaces as NonFinite below rather than as warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, x.shape[0], chunk_size):
            xc = x[start : start + chunk_size].astype(dtype, copy=False)
            tc = t[start : start + chunk_size].astype(dtype, copy=False)
            y, cache = _forward_chunk(config, layers, xc, keep=True)
            err = y - tc
            abs_sum += float(np.abs(err).sum(dtype=np.float64))
            dy = np.sign(err)
            dy *= scale
            _backward_chunk(config, layers, cache, dy, grads)

    loss = abs_sum * scale
    if not np.isfinite(loss) or not np.all(np.isfinite(grad_flat)):
        raise NonFinite("loss or gradient is not finite")
    return loss, grad_flat


# --------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size))


def adam_step(
    state: AdamState, params: MlpParams, grads: np.ndarray, lr: float = 1e-3
) -> tuple[AdamState, MlpParams]:
    """One bias-corrected Adam update; inputs are left untouched."""
    g = np.asarray(grads, dtype=np.float64)
    if g.shape != params.flat.shape:
        raise ShapeMismatch(f"gradient length {g.size} != {params.flat.size}")
    if not np.all(np.isfinite(g)):
        raise NonFinite("non-finite gradient passed to adam_step")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    flat = params.flat - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(m=m, v=v, step=t, beta1=state.beta1, beta2=state.beta2, eps=state.eps)
    return new_state, MlpParams(params.config, flat)


# --------------------------------------------------------------------------
# Inference


def condition_inputs(pixels, cond: Sequence[float] | np.ndarray | None, cond_dim: int) -> np.ndarray:
    """Append a condition vector to every RGB row, validating presence."""
    px = np.asarray(pixels, dtype=np.float64).reshape(-1, 3)
    if cond_dim == 0:
        if cond is not None:
            raise UnexpectedCondition("model is unconditional but a condition vector was given")
        return px
    if cond is None:
        raise MissingCondition(f"model expects a condition vector of length {cond_dim}")
    c = np.asarray(cond, dtype=np.float64).ravel()
    if c.size != cond_dim:
        raise ShapeMismatch(f"condition has length {c.size}, model expects {cond_dim}")
    if not np.all(np.isfinite(c)):
        raise ShapeMismatch("condition vector must be finite")
    return np.hstack([px, np.broadcast_to(c, (px.shape[0], cond_dim))])


def one_hot(index: int, size: int) -> np.ndarray:
    c = np.zeros(size)
    c[index] = 1.0
    return c


def apply_model(
    params: MlpParams,
    pixels,
    cond=None,
    dtype=np.float64,
    chunk_size: int = DEFAULT_CHUNK,
) -> np.ndarray:
    """Apply the network pixelwise and clamp the result to [0, 1].

    ``pixels`` may have any shape ``(..., 3)``; the output has the same shape.
    """
    px = np.asarray(pixels, dtype=np.float64)
    shape = px.shape
    if shape[-1:] != (3,):
        raise ShapeMismatch(f"expected trailing axis of 3, got shape {shape}")
    x = condition_inputs(px, cond, params.config.cond_dim)
    y = forward(params, x, dtype=dtype, chunk_size=chunk_size).astype(np.float64)
    return np.clip(y, 0.0, 1.0).reshape(shape)
