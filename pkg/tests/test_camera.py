import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridsight.camera import (
    CameraRig,
    Intrinsics,
    InvalidDisparity,
    align_to_reference,
    backproject,
    backproject_points,
    cityscapes_like_rig,
    disparity_to_depth,
    disparity_to_depth_array,
    fov_mask,
    load_rig,
    pose_matrix,
    project_points,
    ray_ground_intersection,
    ray_ground_intersections,
    save_rig,
)
from gridsight.grid import GridSpec, cell_centers


def rig(fx=100.0, fy=None, w=200, h=100, cx=None, cy=None, baseline=0.5, **pose):
    intr = Intrinsics(fx, fy or fx, cx if cx is not None else w / 2 - 0.5, cy if cy is not None else h / 2 - 0.5, w, h)
    return CameraRig(intr, baseline, pose_matrix(**pose))


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        Intrinsics(0, 1, 5, 5, 10, 10)
    with pytest.raises(ValueError):
        Intrinsics(1, 1, 10, 5, 10, 10)


def test_rig_validation():
    bad = np.eye(4)
    bad[0, 0] = 2
    with pytest.raises(ValueError):
        CameraRig(Intrinsics(1, 1, 5, 5, 10, 10), 0.5, bad)
    with pytest.raises(ValueError):
        CameraRig(Intrinsics(1, 1, 5, 5, 10, 10), 0.0)
    mirror = np.diag([1.0, 1.0, -1.0, 1.0])
    with pytest.raises(ValueError):
        CameraRig(Intrinsics(1, 1, 5, 5, 10, 10), 0.5, mirror)


def test_disparity_examples():
    assert disparity_to_depth(10, rig(fx=100, baseline=0.5)) == pytest.approx(5.0)
    assert disparity_to_depth(100, rig(fx=2262, baseline=0.22)) == pytest.approx(4.9764, abs=1e-4)
    with pytest.raises(InvalidDisparity):
        disparity_to_depth(0, rig())
    d = disparity_to_depth_array([10.0, 0.0, -1.0], rig(fx=100, baseline=0.5))
    assert d[0] == pytest.approx(5.0) and np.isnan(d[1:]).all()


def test_backproject_examples():
    r = rig()
    k = r.intrinsics
    np.testing.assert_allclose(backproject(k.cx, k.cy, 7, r), [7, 0, 0], atol=1e-12)
    np.testing.assert_allclose(backproject(k.cx + k.fx, k.cy, 2, r), [2, -2, 0], atol=1e-12)
    np.testing.assert_allclose(backproject(k.cx, k.cy, 3, rig(z=1.5)), [3, 0, 1.5], atol=1e-12)
    with pytest.raises(ValueError):
        backproject(0, 0, 0, r)


def test_project_backproject_round_trip():
    rng = np.random.default_rng(0)
    r = rig(fx=2262, w=2048, h=1024, x=1.7, z=1.22, pitch_deg=3, roll_deg=-2, yaw_deg=1)
    u = rng.uniform(0, 2048, 100_000)
    v = rng.uniform(0, 1024, 100_000)
    z = rng.uniform(0.5, 200, 100_000)
    pu, pv, pz = project_points(backproject_points(u, v, z, r), r)
    assert np.abs(pu - u).max() < 1e-6 and np.abs(pv - v).max() < 1e-6
    np.testing.assert_allclose(pz, z, rtol=1e-12)


def test_ray_ground_examples():
    r = rig(fy=200, z=1.5)
    k = r.intrinsics
    assert ray_ground_intersection(k.cx, k.cy, r) is None
    assert ray_ground_intersection(k.cx, k.cy + 100, r) == pytest.approx((3.0, 0.0))
    assert ray_ground_intersection(k.cx, k.cy - 10, r) is None


def test_ray_ground_below_ground_camera():
    r = rig(z=-0.5)
    assert ray_ground_intersection(10, 90, r) is None


@settings(max_examples=100, deadline=None)
@given(
    u=st.floats(0, 199),
    v=st.floats(0, 99),
    pitch=st.floats(-20, 20),
    roll=st.floats(-20, 20),
    h=st.floats(0.3, 3),
)
def test_ground_hit_lies_on_ground(u, v, pitch, roll, h):
    r = rig(z=h, pitch_deg=pitch, roll_deg=roll)
    x, y, hit = ray_ground_intersections(np.array([u]), np.array([v]), r)
    if hit[0]:
        # re-project the ground point: it must come back to the same pixel
        pu, pv, pz = project_points(np.array([[x[0], y[0], 0.0]]), r)
        assert pz[0] > 0
        assert abs(pu[0] - u) < 1e-6 and abs(pv[0] - v) < 1e-6


def test_pose_pitch_points_down():
    r = rig(z=1.0, pitch_deg=10)
    d = r.rotation @ np.array([0, 0, 1.0])
    assert d[2] < 0 and d[0] > 0


def test_fov_mask_behind_and_ahead():
    spec = GridSpec(8, 8, 1.0, -4.0)  # covers x in [-4, 4)
    r = rig(fx=100, w=200, h=200, z=1.0)  # 90 deg horizontal FOV
    m = fov_mask(r, spec)
    x, y = cell_centers(spec)
    assert not m[x < 0].any()
    r2 = rig(fx=100, w=200, h=200, z=1.0)
    assert fov_mask(r2, GridSpec())[GridSpec().rows - 1 - 30, 32]  # about 20 m straight ahead


def test_fov_mask_wedge_count():
    # level camera, 90 deg HFOV, tall image so only the lateral limit matters
    spec = GridSpec()
    r = rig(fx=100, w=200, h=2000, z=1.0)
    m = fov_mask(r, spec)
    x, y = cell_centers(spec)
    for i in range(spec.rows):
        # analytic footprint: |y| < x, i.e. cells with centre inside the wedge
        expect = np.count_nonzero(np.abs(y[i]) < x[i])
        assert abs(int(m[i].sum()) - expect) <= 1


def test_fov_mask_monotone_in_width():
    spec = GridSpec()
    prev = None
    for w in (2048, 1600, 1200, 800):
        r = rig(fx=2262, w=w, h=1024, x=1.7, z=1.22)
        m = fov_mask(r, spec)
        if prev is not None:
            assert not (m & ~prev).any()
        prev = m


def test_rig_json_round_trip(tmp_path):
    r = rig(x=1.0, z=2.0, pitch_deg=2.5)
    save_rig(r, tmp_path / "rig.json")
    back = load_rig(tmp_path / "rig.json")
    assert back == r
    d = r.to_dict()
    assert set(d) == {"fx", "fy", "cx", "cy", "width", "height", "baseline_m", "cam_to_vehicle"}
    assert len(d["cam_to_vehicle"]) == 16


def test_cityscapes_like_rig():
    r = cityscapes_like_rig()
    assert r.intrinsics.width == 2048 and r.intrinsics.fx == 2262
    assert r.baseline_m == 0.22


def test_align_identity():
    r = rig()
    img = np.random.default_rng(0).integers(0, 255, (100, 200, 3), dtype=np.uint8)
    out, intr = align_to_reference(img, r, r)
    np.testing.assert_array_equal(out, img)
    assert intr == r.intrinsics


def test_align_fov_arithmetic():
    src = rig(fx=500, w=1000, h=400)
    ref = rig(fx=250, w=400, h=160)
    # reference half-FOV: atan(400/500); source crop keeps 2*500*0.8 = 800 px
    img = np.tile(np.arange(1000, dtype=np.float64), (400, 1))
    out, intr = align_to_reference(img, src, ref)
    assert out.shape == (160, 400)
    assert intr.fx == pytest.approx(250)
    assert math.degrees(2 * math.atan(intr.width / (2 * intr.fx))) == pytest.approx(ref.intrinsics.hfov_deg)
    # first output column averages source columns 100 and 101 (scale 800 -> 400)
    assert out[80, 0] == pytest.approx(100.5)


def test_align_vertical_shift():
    src = rig(fx=100, w=200, h=100, cy=59.5)
    ref = rig(fx=100, w=200, h=100, cy=49.5)
    img = np.tile(np.arange(100, dtype=np.float64)[:, None], (1, 200))
    out, intr = align_to_reference(img, src, ref)
    assert intr.cy == pytest.approx(49.5)
    np.testing.assert_allclose(out[20:80, 100], np.arange(30, 90))


def test_align_rejects_narrow_source():
    with pytest.raises(ValueError):
        align_to_reference(np.zeros((100, 200)), rig(fx=400), rig(fx=100))


def test_align_labels_stay_categorical():
    src = rig(fx=500, w=1000, h=400)
    ref = rig(fx=250, w=400, h=160)
    labels = np.random.default_rng(0).choice([7, 8, 22], (400, 1000)).astype(np.uint8)
    out, _ = align_to_reference(labels, src, ref, labels=True)
    assert set(np.unique(out)) <= {7, 8, 22}
