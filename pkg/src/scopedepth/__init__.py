"""Single-view depth and uncertainty workbench on procedural tube scenes.

The package provides, in dependency order: raster containers with PFM/PPM
I/O (`imagery`), pinhole/SE(3) geometry and inverse warping (`geometry`),
SSIM / photometric residual / edge-aware smoothness (`photometry`),
heteroscedastic L1 likelihood losses with analytic gradients (`losses`),
a coarse log-parameter depth field predictor (`predictor`), deep-ensemble
fusion with variance decomposition (`ensemble`), gradient-descent training
under five supervision regimes plus a finite-difference audit (`trainer`),
depth and calibration metrics (`metrics`), a procedural colon-like scene
generator (`synthcolon`), and the `scopedepth` command line (`cli`).
"""

from .ensemble import EnsembleOutput, fuse, load_ensemble, save_ensemble, selfsup_fuse
from .geometry import (
    CameraIntrinsics,
    Pose,
    backproject,
    project,
    relative_pose,
    synthesize_warped_image,
    warp_pixel,
)
from .imagery import (
    DepthMap,
    Image,
    Mask,
    UncMap,
    bilinear_sample,
    read_pfm,
    read_ppm,
    write_pfm,
    write_ppm,
)
from .losses import (
    LossConfig,
    LossValue,
    plain_student_nll,
    prior_loss,
    selfsup_nll,
    supervised_nll,
    uncertain_teacher_nll,
)
from .metrics import (
    CalibrationCurve,
    DepthMetrics,
    MetricsConfig,
    auce,
    calibration_curve,
    default_p_grid,
    depth_metrics,
    normal_ppf,
    scale_correction,
)
from .photometry import (
    PhotometricConfig,
    edge_aware_smoothness,
    photometric_residual,
    ssim_map,
)
from .predictor import DepthField, TrainConfig, backward, forward, init_random
from .synthcolon import (
    LightModel,
    SceneParams,
    generate_trajectory,
    render_view,
    simulate_sfm_labels,
    write_dataset,
)
from .trainer import (
    LabeledFrame,
    Regime,
    StudentFrame,
    TrainData,
    TrainReport,
    Triplet,
    audit_random_fields,
    finite_diff_audit,
    train_ensemble,
    train_member,
)

__version__ = "0.1.0"
