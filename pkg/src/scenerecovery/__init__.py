"""Scene recovery for hazy, sand-dust and low-light images.

Classical prior operators (gamma bank, percentile stretching), paired
degradation synthesis, a multi-branch restoration network with an
encoder-decoder fusion stage, the composite training objective, quality
metrics, and a training/evaluation/ablation harness with a CLI.
"""

__version__ = "0.1.0"

from .degrade import (
    AtmoLightSet,
    DegradationSpec,
    default_atmo_set,
    sample_atmo_light,
    sample_spec,
    synth_lowlight,
    synth_pair,
    synth_scatter,
)
from .harness import (
    DatasetManifest,
    ManifestEntry,
    TrainConfig,
    TrainLog,
    build_manifest,
    ols_sweep,
    run_ablation,
    train,
)
from .imaging import clamp01, load_image, percentile, save_image
from .losses import (
    FeatureTapWeights,
    LossWeights,
    SurrogateExtractor,
    color_loss,
    cr_loss,
    l1_loss,
    total_loss,
)
from .metrics import MetricReport, evaluate_split, niqe, psnr, ssim
from .net import (
    Checkpoint,
    NetworkConfig,
    SceneRecoveryNet,
    build_network,
    init_checkpoint,
    load_checkpoint,
    network_from_checkpoint,
    restore_image,
    save_checkpoint,
)
from .priors import (
    GammaBank,
    OLSParams,
    gamma_bank_apply,
    gamma_correct,
    linear_stretch,
    local_contrast,
    optimized_linear_stretch,
)

__all__ = [
    "__version__",
    "AtmoLightSet",
    "Checkpoint",
    "DatasetManifest",
    "DegradationSpec",
    "FeatureTapWeights",
    "GammaBank",
    "LossWeights",
    "ManifestEntry",
    "MetricReport",
    "NetworkConfig",
    "OLSParams",
    "SceneRecoveryNet",
    "SurrogateExtractor",
    "TrainConfig",
    "TrainLog",
    "build_manifest",
    "build_network",
    "clamp01",
    "color_loss",
    "cr_loss",
    "default_atmo_set",
    "evaluate_split",
    "gamma_bank_apply",
    "gamma_correct",
    "init_checkpoint",
    "l1_loss",
    "linear_stretch",
    "load_checkpoint",
    "load_image",
    "local_contrast",
    "network_from_checkpoint",
    "niqe",
    "ols_sweep",
    "optimized_linear_stretch",
    "percentile",
    "psnr",
    "restore_image",
    "run_ablation",
    "sample_atmo_light",
    "sample_spec",
    "save_checkpoint",
    "save_image",
    "ssim",
    "synth_lowlight",
    "synth_pair",
    "synth_scatter",
    "total_loss",
    "train",
]
