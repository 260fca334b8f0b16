"""Dense variational stereo for non-rectified fisheye image pairs."""

from .camera import (CameraBase, PinholeCamera, PolynomialFisheyeCamera,
                     RelativePose, StereoRig, UnifiedCamera, load_rig,
                     save_rig, triangulate_midpoint)
from .fields import (generate_calibration_field, generate_trajectory_field,
                     trace_epipolar_curve, translation_only_rig)
from .solver import SolverParams, StereoResult, solve_pyramid
from .synth import Scene, default_rig, default_scene, make_ground_truth, render

__all__ = [
    "CameraBase", "PinholeCamera", "PolynomialFisheyeCamera", "RelativePose",
    "StereoRig", "UnifiedCamera", "load_rig", "save_rig", "triangulate_midpoint",
    "generate_calibration_field", "generate_trajectory_field",
    "trace_epipolar_curve", "translation_only_rig",
    "SolverParams", "StereoResult", "solve_pyramid",
    "Scene", "default_rig", "default_scene", "make_ground_truth", "render",
]

__version__ = "0.1.0"
