"""Dense depth from a single image and sparse range measurements.

A self-contained depth completion lab: a numpy autodiff engine, a learned
conditional prior network, a two-branch completion network, stereo
photometric supervision, synthetic scene generation, and benchmark metrics.
"""

from .tensor import Tensor, grad_check, no_grad
from .optim import Adam, halved_lr
from .networks import (
    ConvLayerSpec,
    CpnModel,
    DcnModel,
    EncoderSpec,
    build_cpn,
    build_dcn,
    count_parameters,
    cpn_forward,
    cpn_score,
    dcn_forward,
    load_checkpoint,
    parameter_breakdown,
    save_checkpoint,
)
from .geometry import DisparityMap, StereoRig, disparity_from_depth, ssim_map, warp_horizontal
from .losses import (
    LossWeights,
    NormSpec,
    photometric_raw,
    photometric_ssim,
    posterior_score,
    sparse_fidelity,
    stereo_loss,
    supervised_loss,
    unsupervised_loss,
)
from .data import (
    AugmentationConfig,
    Scene,
    SceneConfig,
    SparseSample,
    augment,
    dataset_manifest,
    generate_scene,
    read_depth_png,
    sample_sparse,
    write_depth_png,
)
from .metrics import EvalResult, compute_metrics
from .harness import RunConfig, ablate, evaluate_checkpoint, predict, train_cpn, train_dcn

__version__ = "0.1.0"
