"""Wasserstein-regularized diffusion downscaling: Python bindings.

The heavy lifting lives in the C++ extension module; this package re-exports
its public surface.
"""

from ._core import (  # noqa: F401
    Architecture,
    BlendKernel,
    ConditionTensor,
    GridField,
    NoiseSchedule,
    PatchPlan,
    SamplerConfig,
    ScoreModel,
    SyntheticPair,
    TrainConfig,
    bias,
    coarsen,
    crps,
    csi,
    denormalize,
    generate_pair,
    hrre,
    js_divergence,
    kl_divergence,
    load_checkpoint,
    mae,
    make_blend_kernel,
    merge_step,
    mppe,
    normalize,
    normalize_condition,
    pc_sample,
    perturb,
    plan_patches,
    qq_curve,
    read_grid,
    sample_ensemble,
    sample_projections,
    score_target,
    sigma_at,
    sliced_wasserstein,
    tail_sensitivity_demo,
    tiled_pc_sample,
    train,
    upsample_bilinear,
    wasserstein_1d,
    write_grid,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
