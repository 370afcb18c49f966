"""peerloc: infrastructure-free collaborative relative localization.

Per-node particle filters fuse visual-inertial odometry deltas with
peer-to-peer UWB ranges; a Rao-Blackwellized joint filter corrects each
observer's own drift collaboratively; a discrete-event model covers the
BLE/UWB ranging protocol; and a simulation harness reproduces the
accuracy, drift, and scaling behavior of the system at desk scale.
"""

from .geometry import (
    BehindCameraError,
    CameraIntrinsics,
    Pose6DoF,
    RelState,
    Vec3,
    compose,
    invert,
    project,
    relative_position,
    rotate_yaw,
)
from .joint_filter import FilterConfig, JointFilter, ModeChangeAfterStartError
from .particles import (
    ParticleSet,
    RangeMeasurement,
    RangeNoiseParams,
    SphericalShell,
    UndefinedThetaError,
    VioDelta,
    VioNoiseParams,
)
from .simulate import ScenarioConfig, run_world
from .experiment import RunReport, run_experiment, sweep

__all__ = [
    "BehindCameraError", "CameraIntrinsics", "Pose6DoF", "RelState", "Vec3",
    "compose", "invert", "project", "relative_position", "rotate_yaw",
    "FilterConfig", "JointFilter", "ModeChangeAfterStartError",
    "ParticleSet", "RangeMeasurement", "RangeNoiseParams", "SphericalShell",
    "UndefinedThetaError", "VioDelta", "VioNoiseParams",
    "ScenarioConfig", "run_world", "RunReport", "run_experiment", "sweep",
]

__version__ = "0.1.0"
