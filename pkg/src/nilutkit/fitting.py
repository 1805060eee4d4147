"""Training loops and evaluation protocols.

Training data is the identity Hald map at ``TrainOptions.bits``; targets are
the trilinear outputs of the reference LUT(s) on that map. Each step draws a
seeded mini-batch of Hald samples (or the whole map when ``batch_size`` is
``None``), takes the gradient of the L1 objective and applies one Adam
update. Every ``eval_every`` steps the model is scored on an identity Hald
map at ``eval_bits`` and the best-scoring parameters are kept.

Evaluation follows two protocols: map level (``eval_rgb_map``; model vs LUT
on a Hald map) and image level (``eval_images``; model vs LUT on a corpus of
natural images).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import neuralut as nn
from .colorlib import mean_delta_e, psnr
from .errors import (
    CorruptData,
    Diverged,
    EmptyCorpus,
    NonConvexWeights,
    NonFinite,
    StyleCountMismatch,
    UnsupportedFormat,
    UsageError,
)
from .imagepipe import ImageRgb, read_image
from .lut3d import Lut3d, apply_trilinear_bulk, hald_identity
from .neuralut import AdamState, MlpConfig, MlpParams

logger = logging.getLogger(__name__)

QUALITY_DB = 40.0
CONVEX_TOLERANCE = 0.05
ONE_HOT_TOLERANCE_DB = 0.5
_DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass(frozen=True)
class TrainOptions:
    steps: int = 5000
    lr: float = 1e-3
    seed: int = 0
    bits: int = 7
    batch_size: int | None = 4096
    chunk_size: int = nn.DEFAULT_CHUNK
    eval_every: int = 100
    eval_bits: int = 6
    dtype: str = "float32"

    def __post_init__(self):
        if self.steps < 1:
            raise UsageError("steps must be >= 1")
        if not self.lr > 0:
            raise UsageError("lr must be positive")
        for name in ("bits", "eval_bits"):
            value = getattr(self, name)
            if not 1 <= value <= 8:
                raise UsageError(f"{name} must lie in [1, 8], got {value}")
        if self.batch_size is not None and self.batch_size < 1:
            raise UsageError("batch_size must be >= 1 (or None for full batch)")
        if self.eval_every < 1 or self.chunk_size < 1:
            raise UsageError("eval_every and chunk_size must be >= 1")
        if self.dtype not in _DTYPES:
            raise UsageError(f"dtype must be one of {tuple(_DTYPES)}")


@dataclass(frozen=True)
class HistoryPoint:
    step: int
    loss: float
    psnr_rgb: float
    style_psnr: tuple[float, ...] = ()
    blend_psnr: float | None = None


@dataclass
class TrainRun:
    params: MlpParams
    history: list[HistoryPoint]
    options: TrainOptions
    best_step: int
    steps_to_40db: int | None = None
    wall_time: float = 0.0
    kind: str = "nilut"

    @property
    def config(self) -> MlpConfig:
        return self.params.config

    @property
    def best_psnr(self) -> float:
        return max(h.psnr_rgb for h in self.history)


@dataclass
class StyleScore:
    name: str
    psnr_rgb: float | None = None
    delta_e_rgb: float | None = None
    psnr_img: float | None = None
    delta_e_img: float | None = None


@dataclass
class EvalReport:
    psnr_rgb: float | None = None
    delta_e_rgb: float | None = None
    psnr_img: float | None = None
    delta_e_img: float | None = None
    per_style: list[StyleScore] = field(default_factory=list)
    images: list[dict] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)
    samples: int | None = None

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _jsonable(obj):
    """Replace non-finite floats by strings so the output is strict JSON."""
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return "nan"
        return obj
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


# --------------------------------------------------------------------------
# Shared training machinery


class _MapData:
    """Training inputs and per-style targets on an identity Hald map."""

    def __init__(self, luts: Sequence[Lut3d], bits: int, dtype):
        self.inputs = hald_identity(bits).pixels.astype(dtype)
        self.targets = [apply_trilinear_bulk(lut, self.inputs).astype(dtype) for lut in luts]


def _eval_map(params: MlpParams, data: _MapData, dtype, chunk_size: int):
    """Map-level loss (sum over styles) and per-style PSNR."""
    m = params.config.cond_dim
    losses, scores = [], []
    for k, target in enumerate(data.targets):
        cond = None if m == 0 else nn.one_hot(k, m)
        x = nn.condition_inputs(data.inputs, cond, m)
        raw = nn.forward(params, x, dtype=dtype, chunk_size=chunk_size).astype(np.float64)
        losses.append(float(np.mean(np.abs(raw - target))))
        scores.append(psnr(np.clip(raw, 0.0, 1.0), target))
    return float(sum(losses)), scores


def _run_loop(
    params: MlpParams,
    opts: TrainOptions,
    make_batch: Callable[[int, np.random.Generator], tuple[np.ndarray, np.ndarray, float]],
    evaluate: Callable[[MlpParams], HistoryPoint],
    score: Callable[[HistoryPoint], float],
    kind: str,
) -> TrainRun:
    dtype = _DTYPES[opts.dtype]
    rng = np.random.default_rng([opts.seed, 1])
    state = AdamState.zeros(params.flat.size)
    history: list[HistoryPoint] = []
    best_params, best_score, best_step = params, -math.inf, 0
    t0 = time.perf_counter()

    def record(step: int, p: MlpParams) -> None:
        nonlocal best_params, best_score, best_step
        point = evaluate(p)
        point = HistoryPoint(step, point.loss, point.psnr_rgb, point.style_psnr, point.blend_psnr)
        history.append(point)
        s = score(point)
        if s > best_score:
            best_params, best_score, best_step = p, s, step
        logger.info("%s step %d loss %.6f psnr %.2f dB", kind, step, point.loss, point.psnr_rgb)

    record(0, params)
    last_stable = 0
    for step in range(1, opts.steps + 1):
        x, t, weight = make_batch(step, rng)
        try:
            _, grad = nn.loss_and_grad(params, x, t, dtype=dtype, chunk_size=opts.chunk_size)
            if weight != 1.0:
                grad *= weight
            state, params = nn.adam_step(state, params, grad, opts.lr)
        except NonFinite as exc:
            raise Diverged(f"training diverged at step {step}: {exc}", last_stable) from exc
        if not np.all(np.isfinite(params.flat)):
            raise Diverged(f"parameters became non-finite at step {step}", last_stable)
        last_stable = step
        if step % opts.eval_every == 0 or step == opts.steps:
            record(step, params)

    reached = [h.step for h in history if h.psnr_rgb >= QUALITY_DB]
    return TrainRun(
        params=best_params,
        history=history,
        options=opts,
        best_step=best_step,
        steps_to_40db=reached[0] if reached else None,
        wall_time=time.perf_counter() - t0,
        kind=kind,
    )


def _batch_indices(opts: TrainOptions, total: int, rng: np.random.Generator) -> np.ndarray | slice:
    if opts.batch_size is None or opts.batch_size >= total:
        return slice(None)
    return rng.integers(0, total, size=opts.batch_size)


def _mean_psnr(scores: Sequence[float]) -> float:
    return float(np.mean(scores))


# --------------------------------------------------------------------------
# Fitting


def fit_nilut(config: MlpConfig, target: Lut3d, opts: TrainOptions = TrainOptions()) -> TrainRun:
    """Fit an unconditional network to one LUT; returns the best checkpoint."""
    if config.cond_dim != 0:
        raise StyleCountMismatch("fit_nilut needs an unconditional config (cond_dim=0)")
    dtype = _DTYPES[opts.dtype]
    train = _MapData([target], opts.bits, dtype)
    val = _MapData([target], opts.eval_bits, dtype)
    total = train.inputs.shape[0]

    def make_batch(step, rng):
        idx = _batch_indices(opts, total, rng)
        return train.inputs[idx], train.targets[0][idx], 1.0

    def evaluate(p):
        loss, scores = _eval_map(p, val, dtype, opts.chunk_size)
        return HistoryPoint(0, loss, scores[0])

    params = nn.init_params(config, opts.seed)
    return _run_loop(params, opts, make_batch, evaluate, lambda h: h.psnr_rgb, "nilut")


def _one_hot_batch(x: np.ndarray, targets: Sequence[np.ndarray], m: int) -> tuple[np.ndarray, np.ndarray]:
    n = x.shape[0]
    inputs = np.empty((m * n, 3 + m), dtype=x.dtype)
    for k in range(m):
        rows = slice(k * n, (k + 1) * n)
        inputs[rows, :3] = x
        inputs[rows, 3:] = 0
        inputs[rows, 3 + k] = 1
    return inputs, np.concatenate(list(targets))


def fit_cnilut(config: MlpConfig, targets: Sequence[Lut3d], opts: TrainOptions = TrainOptions()) -> TrainRun:
    """Fit one conditional network to ``m`` LUTs selected by one-hot conditions.

    Every step evaluates all ``m`` one-hot conditions on the same batch of
    Hald samples and sums the ``m`` L1 losses.
    """
    m = config.cond_dim
    if m < 2 or len(targets) != m:
        raise StyleCountMismatch(f"config has cond_dim={m} but {len(targets)} target LUTs were given")
    dtype = _DTYPES[opts.dtype]
    train = _MapData(targets, opts.bits, dtype)
    val = _MapData(targets, opts.eval_bits, dtype)
    total = train.inputs.shape[0]

    def make_batch(step, rng):
        idx = _batch_indices(opts, total, rng)
        x, t = _one_hot_batch(train.inputs[idx], [tk[idx] for tk in train.targets], m)
        # mean over the stacked batch times m == sum of the per-style means
        return x, t, float(m)

    def evaluate(p):
        loss, scores = _eval_map(p, val, dtype, opts.chunk_size)
        return HistoryPoint(0, loss, _mean_psnr(scores), tuple(scores))

    params = nn.init_params(config, opts.seed)
    return _run_loop(params, opts, make_batch, evaluate, lambda h: h.psnr_rgb, "cnilut")


def random_blend_weights(rng: np.random.Generator, m: int) -> np.ndarray:
    """Softmax of standard normal draws: a random point in the simplex."""
    z = rng.standard_normal(m)
    e = np.exp(z - z.max())
    return e / e.sum()


def finetune_blend(
    run: TrainRun,
    targets: Sequence[Lut3d],
    opts: TrainOptions = TrainOptions(lr=1e-4),
    tolerance_db: float = ONE_HOT_TOLERANCE_DB,
) -> TrainRun:
    """Continue training a CNILUT so condition = blend weights reproduces blended LUTs.

    Odd steps use one random convex weight vector ``w`` for the whole batch
    with target ``sum_k w_k * lut_k(x)``; even steps repeat the plain one-hot
    objective so the basis styles are not forgotten. Optimizer moments start
    from zero, so a learning rate well below the fitting one is advisable.

    The returned checkpoint maximizes the equal-weight blend PSNR among the
    evaluations whose one-hot PSNRs all stay within ``tolerance_db`` of their
    values at the start (the start itself always qualifies).
    """
    params = run.params
    m = params.config.cond_dim
    if m < 2 or len(targets) != m:
        raise StyleCountMismatch(f"model has cond_dim={m} but {len(targets)} target LUTs were given")
    dtype = _DTYPES[opts.dtype]
    train = _MapData(targets, opts.bits, dtype)
    val = _MapData(targets, opts.eval_bits, dtype)
    total = train.inputs.shape[0]
    uniform = np.full(m, 1.0 / m)
    val_blend = sum(w * t.astype(np.float64) for w, t in zip(uniform, val.targets))
    blend_rng = np.random.default_rng([opts.seed, 2])
    _, start = _eval_map(params, val, dtype, opts.chunk_size)
    floor = np.asarray(start) - tolerance_db

    def make_batch(step, rng):
        idx = _batch_indices(opts, total, rng)
        x = train.inputs[idx]
        if step % 2 == 0:
            xs, ts = _one_hot_batch(x, [tk[idx] for tk in train.targets], m)
            return xs, ts, float(m)
        w = random_blend_weights(blend_rng, m)
        t = sum(wk * tk[idx] for wk, tk in zip(w.astype(dtype), train.targets))
        return nn.condition_inputs(x, w, m).astype(dtype), t, 1.0

    def evaluate(p):
        loss, scores = _eval_map(p, val, dtype, opts.chunk_size)
        blended = nn.apply_model(p, val.inputs, uniform, dtype=dtype, chunk_size=opts.chunk_size)
        return HistoryPoint(0, loss, _mean_psnr(scores), tuple(scores), psnr(blended, val_blend))

    def score(h):
        if np.all(np.asarray(h.style_psnr) >= floor):
            return h.blend_psnr
        return -math.inf

    return _run_loop(params, opts, make_batch, evaluate, score, "blend")


# --------------------------------------------------------------------------
# Evaluation


def _condition_check(params: MlpParams, cond):
    m = params.config.cond_dim
    if m == 0 and cond is not None:
        nn.condition_inputs(np.zeros((1, 3)), cond, 0)
    return m


def map_scores(params: MlpParams, target: Lut3d, cond=None, bits: int = 7) -> tuple[float, float]:
    """PSNR and mean Delta E between model and LUT on the identity Hald map."""
    x = hald_identity(bits).pixels
    out = nn.apply_model(params, x, cond, dtype=np.float32)
    ref = apply_trilinear_bulk(target, x)
    return psnr(out, ref), mean_delta_e(out, ref)


def _styles(params: MlpParams, targets, cond, names=None) -> list[tuple[str, Lut3d, np.ndarray | None]]:
    """Resolve (name, target, condition) triples for evaluation."""
    m = params.config.cond_dim
    if isinstance(targets, Lut3d):
        targets = [targets]
    targets = list(targets)
    if m == 0 or cond is not None:
        if len(targets) != 1:
            raise StyleCountMismatch("a single target LUT is needed for an explicit condition")
        return [((names or [targets[0].title or "style"])[0], targets[0], cond)]
    if len(targets) != m:
        raise StyleCountMismatch(f"model has {m} styles but {len(targets)} LUTs were given")
    names = names or [t.title or f"style_{k + 1}" for k, t in enumerate(targets)]
    return [(names[k], targets[k], nn.one_hot(k, m)) for k in range(m)]


def eval_rgb_map(params: MlpParams, targets, cond=None, bits: int = 7, names=None) -> EvalReport:
    """Map-level fidelity on the identity Hald map with ``(2**bits)**3`` samples.

    For a conditional model without ``cond``, each one-hot style is scored
    against its own LUT and the aggregates are the mean over styles.
    """
    _condition_check(params, cond)
    styles = _styles(params, targets, cond, names)
    scores = []
    for name, lut, c in styles:
        p, d = map_scores(params, lut, c, bits)
        scores.append(StyleScore(name=name, psnr_rgb=p, delta_e_rgb=d))
    return EvalReport(
        psnr_rgb=_mean_psnr([s.psnr_rgb for s in scores]),
        delta_e_rgb=float(np.mean([s.delta_e_rgb for s in scores])),
        per_style=scores if len(scores) > 1 else [],
        samples=(2**bits) ** 3,
    )


def _resolve_corpus(corpus: Iterable) -> tuple[list[ImageRgb], list[tuple[str, str]]]:
    images, skipped = [], []
    for item in corpus:
        if isinstance(item, ImageRgb):
            images.append(item)
            continue
        try:
            images.append(read_image(item))
        except (UnsupportedFormat, CorruptData, OSError) as exc:
            logger.warning("skipping %s: %s", item, exc)
            skipped.append((str(item), str(exc)))
    return images, skipped


def image_scores(params: MlpParams, target: Lut3d, images: Sequence[ImageRgb], cond=None) -> list[dict]:
    rows = []
    for img in images:
        out = nn.apply_model(params, img.pixels, cond, dtype=np.float32)
        ref = np.clip(apply_trilinear_bulk(target, img.pixels), 0.0, 1.0)
        rows.append({"name": img.name, "psnr": psnr(out, ref), "delta_e": mean_delta_e(out, ref)})
    return rows


def eval_images(params: MlpParams, targets, corpus: Iterable, cond=None, names=None) -> EvalReport:
    """Image-level fidelity: model vs trilinear LUT on every corpus image.

    Aggregates are unweighted means over images (and over styles for a
    conditional model evaluated one-hot). Images that fail to decode are
    skipped and listed in ``skipped``.
    """
    _condition_check(params, cond)
    images, skipped = _resolve_corpus(corpus)
    if not images:
        raise EmptyCorpus("no decodable images in the corpus")
    styles = _styles(params, targets, cond, names)
    scores, per_image = [], []
    for name, lut, c in styles:
        rows = image_scores(params, lut, images, c)
        for r in rows:
            r["style"] = name
        per_image += rows
        scores.append(
            StyleScore(
                name=name,
                psnr_img=_mean_psnr([r["psnr"] for r in rows]),
                delta_e_img=float(np.mean([r["delta_e"] for r in rows])),
            )
        )
    return EvalReport(
        psnr_img=_mean_psnr([s.psnr_img for s in scores]),
        delta_e_img=float(np.mean([s.delta_e_img for s in scores])),
        per_style=scores if len(scores) > 1 else [],
        images=per_image,
        skipped=skipped,
    )


def evaluate(params: MlpParams, targets, corpus=None, cond=None, bits: int = 7, names=None) -> EvalReport:
    """Both protocols in one report (image fields stay empty without a corpus)."""
    report = eval_rgb_map(params, targets, cond, bits, names)
    if corpus is None:
        return report
    img = eval_images(params, targets, corpus, cond, names)
    report.psnr_img, report.delta_e_img = img.psnr_img, img.delta_e_img
    report.images, report.skipped = img.images, img.skipped
    by_name = {s.name: s for s in img.per_style}
    for s in report.per_style:
        s.psnr_img = by_name[s.name].psnr_img
        s.delta_e_img = by_name[s.name].delta_e_img
    return report


def check_weights(weights, m: int) -> np.ndarray:
    """Validate convex blend weights; sums within tolerance are renormalized."""
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.size != m:
        raise NonConvexWeights(f"expected {m} weights, got {w.size}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise NonConvexWeights("blend weights must be finite and non-negative")
    total = w.sum()
    if abs(total - 1.0) > CONVEX_TOLERANCE:
        raise NonConvexWeights(f"blend weights sum to {total:g}, not 1")
    return w / total


def blend_equivalence(params: MlpParams, targets: Sequence[Lut3d], weights, corpus: Iterable) -> float:
    """Mean PSNR between implicit blending (condition = weights) and the
    explicit convex combination of the per-style LUT outputs."""
    m = params.config.cond_dim
    if len(targets) != m:
        raise StyleCountMismatch(f"model has {m} styles but {len(targets)} LUTs were given")
    w = check_weights(weights, m)
    images, _ = _resolve_corpus(corpus)
    if not images:
        raise EmptyCorpus("no decodable images in the corpus")
    values = []
    for img in images:
        implicit = nn.apply_model(params, img.pixels, w, dtype=np.float32)
        explicit = sum(
            wk * np.clip(apply_trilinear_bulk(lut, img.pixels), 0.0, 1.0) for wk, lut in zip(w, targets)
        )
        values.append(psnr(implicit, explicit))
    return _mean_psnr(values)


def _fd_jacobian(fn, x: np.ndarray, h: float) -> np.ndarray:
    jac = np.empty((x.shape[0], 3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        jac[:, :, j] = (fn(x + e) - fn(x - e)) / (2 * h)
    return jac


def jacobian_agreement(
    params: MlpParams,
    target: Lut3d,
    probes: int = 256,
    seed: int = 0,
    cond=None,
    h: float = 1e-3,
) -> float:
    """Mean relative Frobenius discrepancy between model and LUT Jacobians.

    Both Jacobians are central finite differences with step ``h``; the model
    side uses the unclamped forward pass. Probe colors are drawn uniformly
    from ``(eps, 1 - eps)**3`` with ``eps = 1.5 / (N - 1)``.
    """
    if probes < 1:
        raise UsageError("probes must be >= 1")
    m = params.config.cond_dim
    eps = 1.5 / (target.size - 1)
    rng = np.random.default_rng(seed)
    x = eps + (1.0 - 2.0 * eps) * rng.random((probes, 3))

    def model(rgb):
        return nn.forward(params, nn.condition_inputs(rgb, cond, m))

    j_model = _fd_jacobian(model, x, h)
    j_lut = _fd_jacobian(lambda rgb: apply_trilinear_bulk(target, rgb), x, h)
    num = np.linalg.norm(j_model - j_lut, axis=(1, 2))
    den = np.maximum(np.linalg.norm(j_lut, axis=(1, 2)), 1e-12)
    return float(np.mean(num / den))


# --------------------------------------------------------------------------
# Serialization of histories


def history_csv(history: Sequence[HistoryPoint]) -> str:
    """``step,loss,psnr_rgb[,psnr_style_k...][,psnr_blend]`` with a header row."""
    styles = max((len(h.style_psnr) for h in history), default=0)
    blend = any(h.blend_psnr is not None for h in history)
    header = ["step", "loss", "psnr_rgb"] + [f"psnr_style_{k + 1}" for k in range(styles)]
    if blend:
        header.append("psnr_blend")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for h in history:
        row = [h.step, repr(h.loss), _fmt(h.psnr_rgb)] + [_fmt(v) for v in h.style_psnr]
        if blend:
            row.append(_fmt(h.blend_psnr))
        writer.writerow(row)
    return buf.getvalue()


def _fmt(v: float | None) -> str:
    if v is None:
        return ""
    return "inf" if math.isinf(v) else repr(v)


def read_history_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [{k: (int(v) if k == "step" else float(v)) for k, v in r.items() if v != ""} for r in rows]
