"""Desk-scale pedestrian trajectory prediction benchmark toolkit.

Builds prediction instances from low-rate trajectory annotations (with
camera-crop geometry), runs unimodal and multimodal kinematic predictors,
scores them with five multimodal metrics, and audits resampling for
future-information leakage.
"""

from .config import RunConfig, load_config
from .dataset import (
    CropRef,
    LeakageEntry,
    LeakageReport,
    MotionChangeSelection,
    PredictionInstance,
    SplitConfig,
    TaskConfig,
    assign_splits,
    audit_leakage,
    extract_instances,
    motion_onset_us,
    select_motion_changes,
)
from .geometry import Box3D, CameraModel, PixelBox, attach_crops, expand_crop, project_box, project_point
from .metrics import (
    MetricRow,
    ReportTable,
    evaluate,
    exp_rms,
    min_ade,
    min_fde,
    nll,
    pred_rms,
    render_tables,
)
from .predictors import (
    ConstantVelocityPredictor,
    DecayingAccelerationPredictor,
    KinematicEnsemble,
    ModePrediction,
    MultimodalPrediction,
    calibrate_covariance,
    predict_cv,
    predict_da,
    wrap_unimodal,
)
from .synth import CorpusTemplate, Phase, ScenarioParams, apply_smoothing_artifact, generate_corpus, generate_scenario
from .tracks import (
    CameraFrameRef,
    KinematicState,
    RawSample,
    RawTrack,
    ResampledTrack,
    SquareCrop,
    estimate_kinematics,
    match_camera_frames,
    resample_track,
)

__version__ = "0.1.0"
