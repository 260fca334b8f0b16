import numpy as np
import pytest

from fisheyestereo.camera import RelativePose, StereoRig, UnifiedCamera
from fisheyestereo.synth import Plane, Scene, Sphere, ValueNoise, render, make_ground_truth


@pytest.fixture(scope="session")
def small_fisheye_rig() -> StereoRig:
    """200x200 unified-model rig used by module tests (fast to render)."""
    cam0 = UnifiedCamera(width=200, height=200, fx=100.0, fy=100.0,
                         cx=99.5, cy=99.5, fov=np.pi, xi=0.9)
    cam1 = UnifiedCamera(width=200, height=200, fx=100.0, fy=100.0,
                         cx=100.0, cy=99.7, fov=np.pi, xi=0.9)
    pose = RelativePose.from_displacement((0.1, 0.0, 0.0), rotvec=(0.0, 0.02, 0.005))
    return StereoRig(cam0, cam1, pose)


@pytest.fixture(scope="session")
def small_scene() -> Scene:
    return Scene(primitives=(
        Sphere(center=(0.0, 0.0, 0.0), radius=5.0,
               texture=ValueNoise(scale=1.0, octaves=3, seed=11, lo=0.2, hi=0.9)),
        Plane(point=(0.0, 0.0, 1.2), normal=(0.0, 0.0, -1.0),
              texture=ValueNoise(scale=0.3, octaves=3, seed=5, lo=0.1, hi=0.95)),
        Sphere(center=(0.2, -0.15, 0.8), radius=0.22,
               texture=ValueNoise(scale=0.08, octaves=3, seed=23, lo=0.1, hi=0.9)),
    ))


@pytest.fixture(scope="session")
def small_pair(small_fisheye_rig, small_scene):
    """Rendered pair + ground truth on the small rig."""
    rig = small_fisheye_rig
    i0, _, _ = render(small_scene, rig.cam0, supersample=2)
    i1, _, _ = render(small_scene, rig.cam1, pose=rig.pose, supersample=2)
    gt = make_ground_truth(small_scene, rig)
    return i0, i1, gt
