"""Neural implicit 3D LUTs: fit small MLPs that replace color-grading LUTs."""

from .colorlib import delta_e, mean_delta_e, psnr, srgb_to_lab
from .fitting import (
    EvalReport,
    TrainOptions,
    TrainRun,
    blend_equivalence,
    eval_images,
    eval_rgb_map,
    finetune_blend,
    fit_cnilut,
    fit_nilut,
    jacobian_agreement,
)
from .lut3d import HaldMap, Lut3d, apply_trilinear, apply_trilinear_bulk, hald_identity, synth_lut
from .modelfile import load_model, save_model, size_report
from .neuralut import MlpConfig, MlpParams, apply_model, init_params, param_count

__version__ = "0.1.0"
