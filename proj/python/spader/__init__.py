"""Spatially-weighted reconstruction anomaly detection on a noisy-digit benchmark."""

from ._spader import (
    STRATEGIES,
    Config,
    ConfigError,
    FormatError,
    Regressor,
    ShapeError,
    Vae,
    WeightsFormatError,
    auroc,
    evaluate,
    gen_data,
    generate,
    load_config,
    load_regressor,
    load_vae,
    loss_image,
    read_scores,
    run_pipeline,
    score,
    score_image,
    train,
    upsample_bilinear,
    visualize,
)

__all__ = [
    "STRATEGIES",
    "Config",
    "ConfigError",
    "FormatError",
    "Regressor",
    "ShapeError",
    "Vae",
    "WeightsFormatError",
    "auroc",
    "evaluate",
    "gen_data",
    "generate",
    "load_config",
    "load_regressor",
    "load_vae",
    "loss_image",
    "read_scores",
    "run_pipeline",
    "score",
    "score_image",
    "train",
    "upsample_bilinear",
    "visualize",
]
