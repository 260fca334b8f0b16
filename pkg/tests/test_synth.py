import numpy as np
import pytest

from fisheyestereo.camera import RelativePose, StereoRig, UnifiedCamera
from fisheyestereo.rasters import pixel_grid
from fisheyestereo.synth import (Box, Checkerboard, Plane, Scene, SineGrating,
                                 Sphere, ValueNoise, default_rig, default_scene,
                                 make_ground_truth, pinhole_rig, plane_scene,
                                 render, reseed_scene, scene_from_dict,
                                 scene_to_dict)


def test_render_is_deterministic(small_fisheye_rig, small_scene):
    rig = small_fisheye_rig
    a, da, ma = render(small_scene, rig.cam0)
    b, db, mb = render(small_scene, rig.cam0)
    assert np.array_equal(a, b)
    assert np.array_equal(da, db)
    assert np.array_equal(ma, mb)


def test_render_noise_seeded_and_clipped(small_fisheye_rig, small_scene):
    rig = small_fisheye_rig
    a, _, m = render(small_scene, rig.cam0, noise_sigma=0.05, noise_seed=3)
    b, _, _ = render(small_scene, rig.cam0, noise_sigma=0.05, noise_seed=3)
    c, _, _ = render(small_scene, rig.cam0, noise_sigma=0.05, noise_seed=4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.min() >= 0.0 and a.max() <= 1.0


def test_checkerboard_plane_symmetric_about_principal_point():
    # The radial model and the checker parity are both invariant under a
    # 180-degree rotation about the principal point.
    cam = UnifiedCamera(width=200, height=200, fx=100.0, fy=100.0,
                        cx=99.5, cy=99.5, fov=np.deg2rad(170.0), xi=0.9)
    rig = StereoRig(cam, cam, RelativePose())
    scene = plane_scene(depth=2.0, texture=Checkerboard(period=0.25))
    img, _, mask = render(scene, rig.cam0)
    rot = img[::-1, ::-1]
    rot_mask = mask[::-1, ::-1]
    sel = mask & rot_mask
    agree = np.mean(img[sel] == rot[sel])
    assert agree > 0.999


def test_plane_depth_matches_analytic_intersection():
    # Oracle: ray-plane formula t = z_plane / ray_z for a fronto plane.
    cam = UnifiedCamera(width=128, height=128, fx=64.0, fy=64.0, cx=63.5,
                        cy=63.5, fov=np.deg2rad(160.0), xi=0.8)
    scene = plane_scene(depth=2.0)
    _, depth, mask = render(scene, cam)
    rays, ok = cam.unproject(pixel_grid(128, 128))
    sel = mask & ok
    expected = 2.0 / rays[..., 2]
    assert np.max(np.abs(depth[sel] - expected[sel])) < 1e-9


def test_ground_truth_zero_for_identity_rig(small_scene):
    cam = UnifiedCamera(width=100, height=100, fx=50.0, fy=50.0, cx=49.5,
                        cy=49.5, fov=np.pi, xi=0.9)
    rig = StereoRig(cam, cam, RelativePose())
    gt = make_ground_truth(small_scene, rig)
    assert gt.covisibility.sum() > 0
    assert np.max(np.abs(gt.correspondence[gt.covisibility])) < 1e-9


def test_ground_truth_rectified_disparity_formula():
    # Oracle: constant disparity -f*b/z for a fronto plane under a pinhole rig.
    rig = pinhole_rig(width=200, height=200, f=150.0, baseline=0.1)
    scene = plane_scene(depth=3.0)
    gt = make_ground_truth(scene, rig)
    sel = gt.covisibility
    expected = -150.0 * 0.1 / 3.0
    assert np.allclose(gt.correspondence[sel][:, 0], expected, atol=1e-9)
    assert np.allclose(gt.correspondence[sel][:, 1], 0.0, atol=1e-9)


def test_ground_truth_correspondence_roundtrip(small_fisheye_rig, small_scene):
    # The invariant that defines the field: re-deriving the correspondence
    # from depth through the camera module reproduces it exactly.
    rig = small_fisheye_rig
    gt = make_ground_truth(small_scene, rig)
    grid = pixel_grid(rig.cam0.height, rig.cam0.width)
    rays, ok0 = rig.cam0.unproject(grid)
    pts = np.where(ok0[..., None], rays, 0.0) * gt.depth0[..., None]
    x1, ok1 = rig.cam1.project(rig.pose.transform(pts))
    sel = gt.covisibility
    assert np.max(np.abs((x1 - grid)[sel] - gt.correspondence[sel])) < 1e-9


def test_occlusion_excluded_from_covisibility():
    # A slab floating between the cameras and the far plane shadows a region
    # of the far plane from camera 1 only; those pixels must drop out.
    rig = pinhole_rig(width=200, height=200, f=150.0, baseline=0.12)
    open_scene = plane_scene(depth=4.0)
    blocker = Box(lo=(-0.55, -0.3, 1.95), hi=(-0.25, 0.3, 2.05),
                  texture=ValueNoise(seed=9))
    blocked_scene = Scene(primitives=open_scene.primitives + (blocker,))
    gt_open = make_ground_truth(open_scene, rig)
    gt_blocked = make_ground_truth(blocked_scene, rig)
    lost = gt_open.covisibility & ~gt_blocked.covisibility
    far_plane = gt_blocked.depth0 > 3.0
    assert (lost & far_plane).sum() > 50  # a shadowed far-plane region exists


def test_default_scene_covers_every_ray(small_fisheye_rig):
    _, depth, hit = render(default_scene(), default_rig().cam0)
    fov = default_rig().cam0.fov_mask()
    assert np.array_equal(hit, fov)
    assert np.all(depth[hit] > 0)


def test_supersampling_changes_intensities_not_geometry(small_fisheye_rig, small_scene):
    rig = small_fisheye_rig
    i1, d1, m1 = render(small_scene, rig.cam0, supersample=1)
    i2, d2, m2 = render(small_scene, rig.cam0, supersample=2)
    assert np.array_equal(d1, d2)
    assert np.array_equal(m1, m2)
    assert not np.array_equal(i1, i2)


def test_reseed_scene_changes_noise_textures(small_scene):
    same = reseed_scene(small_scene, 0)
    other = reseed_scene(small_scene, 5)
    assert same is small_scene
    assert other.primitives[0].texture.seed != small_scene.primitives[0].texture.seed


def test_scene_json_roundtrip():
    scene = Scene(primitives=(
        Plane(point=(0.0, 0.0, 2.0), normal=(0.0, 0.0, -1.0),
              texture=Checkerboard(period=0.3, lo=0.2, hi=0.8)),
        Sphere(center=(0.1, 0.2, 1.0), radius=0.25,
               texture=ValueNoise(scale=0.2, octaves=2, seed=7)),
        Box(lo=(-1.0, -1.0, -1.0), hi=(1.0, 1.0, 3.0),
            texture=SineGrating(wavelength=0.2, direction=(1.0, 1.0, 0.0))),
    ))
    back = scene_from_dict(scene_to_dict(scene))
    assert scene_to_dict(back) == scene_to_dict(scene)


def test_scene_from_dict_rejects_unknown_primitive():
    with pytest.raises(ValueError):
        scene_from_dict({"primitives": [{"kind": "torus", "texture": {"kind": "noise"}}]})


def test_texture_shading_ranges():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(500, 3)) * 2.0
    for tex in (ValueNoise(lo=0.2, hi=0.8), Checkerboard(lo=0.1, hi=0.9),
                SineGrating(lo=0.3, hi=0.7)):
        vals = tex.shade(pts)
        assert vals.min() >= 0.1 - 1e-9
        assert vals.max() <= 0.9 + 1e-9
