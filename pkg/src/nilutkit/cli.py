"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 input-format error, 4 training
diverged, 5 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import fitting, lut3d, modelfile
from .errors import NilutError, UnexpectedCondition, UsageError
from .imagepipe import enhance_image, hald_to_image, load_corpus, read_image, write_image
from .neuralut import MlpConfig

logger = logging.getLogger("nilutkit")

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 2, 5
COND_SUM_TOLERANCE = 1e-6


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def parse_cond(text: str | None, m: int) -> np.ndarray | None:
    """Parse ``w1,w2,...`` and validate it against a model with ``m`` styles."""
    if text is None:
        return None
    if m == 0:
        raise UnexpectedCondition("--cond given but the model is unconditional")
    try:
        w = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"--cond must be comma-separated numbers, got {text!r}")
    if w.size != m:
        raise UsageError(f"--cond has {w.size} entries, model has {m} styles")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise UsageError("--cond weights must be finite and non-negative")
    total = w.sum()
    if total <= 0:
        raise UsageError("--cond weights must not all be zero")
    if abs(total - 1.0) > COND_SUM_TOLERANCE:
        logger.warning("--cond weights sum to %g; normalizing", total)
        w = w / total
    return w


def _figure_path(path) -> Path:
    return Path(path).with_suffix(".png")


# --------------------------------------------------------------------------
# Subcommands


def cmd_hald_gen(args) -> int:
    hald = lut3d.hald_identity(args.bits)
    write_image(hald_to_image(hald), args.out, depth=16)
    print(f"wrote {hald.width}x{hald.height} 16-bit Hald map ({args.bits} bits) to {args.out}")
    return EXIT_OK


def cmd_lut_apply(args) -> int:
    lut = lut3d.read_cube(args.cube)
    img = read_image(args.inp)
    write_image(enhance_image(img, lut), args.out)
    return EXIT_OK


def cmd_lut_synth(args) -> int:
    lut3d.save_cube(lut3d.synth_lut(args.kind, args.size), args.out)
    return EXIT_OK


def _train_options(args) -> fitting.TrainOptions:
    return fitting.TrainOptions(
        steps=args.steps,
        lr=args.lr,
        seed=args.seed,
        bits=args.bits,
        batch_size=args.batch_size or None,
        eval_every=args.eval_every,
        eval_bits=args.eval_bits,
    )


def _config(args, cond_dim: int) -> MlpConfig:
    return MlpConfig(
        arch=args.arch,
        neurons=args.neurons,
        hidden_layers=args.layers,
        cond_dim=cond_dim,
        omega0=args.omega0,
        activation=args.activation,
    )


def _provenance(args, opts: fitting.TrainOptions, cubes: list[str], **extra) -> dict:
    prov = {
        "seed": opts.seed,
        "steps": opts.steps,
        "lr": opts.lr,
        "bits": opts.bits,
        "batch_size": opts.batch_size,
        "sources": [{"file": Path(c).name, "sha256": _sha256(c)} for c in cubes],
    }
    prov.update(extra)
    return prov


def _write_history(args, history: list[fitting.HistoryPoint], title: str) -> None:
    if not args.history:
        return
    Path(args.history).write_text(fitting.history_csv(history))
    if not args.no_figures:
        from .plotting import plot_history

        plot_history(history, _figure_path(args.history), title)


def _summarize(run: fitting.TrainRun) -> None:
    reached = run.steps_to_40db if run.steps_to_40db is not None else "never"
    print(
        f"best PSNR {run.best_psnr:.2f} dB at step {run.best_step}; "
        f"40 dB reached at step {reached}; {run.wall_time:.1f} s"
    )


def cmd_nilut_fit(args) -> int:
    if len(args.cube) != 1:
        raise UsageError("nilut fit takes exactly one --cube; use cnilut fit for several")
    lut = lut3d.read_cube(args.cube[0])
    opts = _train_options(args)
    config = _config(args, 0)
    run = fitting.fit_nilut(config, lut, opts)
    _summarize(run)
    meta = modelfile.ModelMeta(style_names=[], provenance=_provenance(args, opts, args.cube))
    modelfile.write_model(args.out, run.params, meta)
    _write_history(args, run.history, config.describe())
    return EXIT_OK


def cmd_cnilut_fit(args) -> int:
    if len(args.cube) < 2:
        raise UsageError("cnilut fit needs at least two --cube files")
    luts = [lut3d.read_cube(c) for c in args.cube]
    opts = _train_options(args)
    config = _config(args, len(luts))
    run = fitting.fit_cnilut(config, luts, opts)
    _summarize(run)
    history = list(run.history)
    params = run.params
    if args.blend_finetune:
        ft_opts = dataclasses.replace(
            opts, steps=args.blend_finetune, lr=args.blend_lr, seed=opts.seed + 1
        )
        ft = fitting.finetune_blend(run, luts, ft_opts)
        params = ft.params
        offset = run.history[-1].step
        history += [
            fitting.HistoryPoint(h.step + offset, h.loss, h.psnr_rgb, h.style_psnr, h.blend_psnr)
            for h in ft.history[1:]
        ]
        kept = next(h for h in ft.history if h.step == ft.best_step)
        print(f"blend fine-tune: kept step {ft.best_step}, equal-blend PSNR {kept.blend_psnr:.2f} dB")
    names = [Path(c).stem for c in args.cube]
    meta = modelfile.ModelMeta(
        style_names=names,
        provenance=_provenance(
            args, opts, args.cube, blend_finetune=args.blend_finetune or 0, blend_lr=args.blend_lr
        ),
    )
    modelfile.write_model(args.out, params, meta)
    _write_history(args, history, config.describe())
    return EXIT_OK


def cmd_nilut_apply(args) -> int:
    params, _ = modelfile.read_model(args.model)
    cond = parse_cond(args.cond, params.config.cond_dim)
    img = read_image(args.inp)
    write_image(enhance_image(img, params, cond), args.out)
    return EXIT_OK


def _check_sources(meta: modelfile.ModelMeta, cubes: list[str]) -> None:
    known = {s.get("sha256") for s in meta.provenance.get("sources", [])}
    if not known:
        return
    for c in cubes:
        if _sha256(c) not in known:
            logger.warning("%s was not among the LUTs this model was trained on", c)


def cmd_nilut_eval(args) -> int:
    params, meta = modelfile.read_model(args.model)
    m = params.config.cond_dim
    cond = parse_cond(args.cond, m)
    luts = [lut3d.read_cube(c) for c in args.cube]
    _check_sources(meta, args.cube)
    names = meta.style_names if (m and cond is None and len(meta.style_names) == m) else None
    names = names or [Path(c).stem for c in args.cube]
    targets = luts[0] if len(luts) == 1 else luts
    corpus = None
    skipped = []
    if args.corpus:
        corpus, skipped = load_corpus(args.corpus)
    report = fitting.evaluate(params, targets, corpus, cond, bits=args.bits, names=names)
    report.skipped = skipped + report.skipped
    Path(args.report).write_text(report.to_json() + "\n")
    if not args.no_figures:
        from .plotting import plot_eval_report

        plot_eval_report(report, _figure_path(args.report), params.config.describe())
    line = f"PSNR_rgb {report.psnr_rgb:.2f} dB, dE_rgb {report.delta_e_rgb:.3f}"
    if report.psnr_img is not None:
        line += f"; PSNR_img {report.psnr_img:.2f} dB, dE_img {report.delta_e_img:.3f}"
    print(line)
    return EXIT_OK


def cmd_nilut_info(args) -> int:
    params, meta = modelfile.read_model(args.model)
    rep = modelfile.size_report(params)
    print(params.config.describe())
    if meta.style_names:
        print("styles: " + ", ".join(meta.style_names))
    for line in rep.lines():
        print(line)
    if args.json:
        print(json.dumps(rep.to_dict(), sort_keys=True))
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser


def _add_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cube", action="append", required=True, help="target .cube file (repeatable)")
    p.add_argument("--arch", choices=("mlp", "mlp_res", "siren"), default="mlp_res")
    p.add_argument("--activation", choices=("relu", "tanh"), default="relu")
    p.add_argument("--omega0", type=float, default=30.0)
    p.add_argument("--neurons", type=int, default=128)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bits", type=int, default=7)
    p.add_argument("--batch-size", type=int, default=4096, help="0 = full Hald map per step")
    p.add_argument("--eval-every", type=int, default=100)
    p.add_argument("--eval-bits", type=int, default=6)
    p.add_argument("--out", required=True)
    p.add_argument("--history")
    p.add_argument("--no-figures", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nilutkit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    groups = parser.add_subparsers(dest="group", required=True)

    hald = groups.add_parser("hald").add_subparsers(dest="action", required=True)
    p = hald.add_parser("gen", help="write an identity Hald map as 16-bit PNG")
    p.add_argument("--bits", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_hald_gen)

    lut = groups.add_parser("lut").add_subparsers(dest="action", required=True)
    p = lut.add_parser("apply", help="apply a .cube LUT to an image")
    p.add_argument("--cube", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lut_apply)
    p = lut.add_parser("synth", help="write a synthetic .cube LUT")
    p.add_argument("--kind", choices=lut3d.SYNTH_KINDS, required=True)
    p.add_argument("--size", type=int, default=33)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lut_synth)

    nilut = groups.add_parser("nilut").add_subparsers(dest="action", required=True)
    p = nilut.add_parser("fit", help="fit a network to one LUT")
    _add_training_flags(p)
    p.set_defaults(func=cmd_nilut_fit)
    p = nilut.add_parser("apply", help="apply a fitted model to an image")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cond")
    p.set_defaults(func=cmd_nilut_apply)
    p = nilut.add_parser("eval", help="score a model against LUT(s)")
    p.add_argument("--model", required=True)
    p.add_argument("--cube", action="append", required=True)
    p.add_argument("--corpus")
    p.add_argument("--cond")
    p.add_argument("--bits", type=int, default=7)
    p.add_argument("--report", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_nilut_eval)
    p = nilut.add_parser("info", help="parameter count and size vs a 33^3 LUT")
    p.add_argument("--model", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_nilut_info)

    cnilut = groups.add_parser("cnilut").add_subparsers(dest="action", required=True)
    p = cnilut.add_parser("fit", help="fit one conditional network to several LUTs")
    _add_training_flags(p)
    p.add_argument("--blend-finetune", type=int, default=0, metavar="STEPS")
    p.add_argument("--blend-lr", type=float, default=1e-4)
    p.set_defaults(func=cmd_cnilut_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except NilutError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
