import json

import numpy as np
import pytest

import anglereloc as ar

SMALL = json.dumps({"scene": {"point_count": 200, "n_train": 6, "n_test": 2}})


def test_angle_loss_is_bounded_behind_camera():
    intr = ar.CameraIntrinsics(525.0, 319.5, 239.5)
    pose = ar.PoseSE3()
    pixel = np.array([400.0, 200.0])
    d = np.array([pixel[0] - intr.cx, pixel[1] - intr.cy, intr.f])
    behind = -3.0 * d / d[2]
    reproj, _, status = ar.reproj_loss(intr, pose, behind, pixel)
    angle, grad, _ = ar.angle_loss(intr, pose, behind, pixel)
    assert status == "Behind"
    assert reproj < 1e-9
    assert angle == pytest.approx(2 * np.linalg.norm(d), rel=1e-12)
    assert np.all(np.isfinite(grad))


def test_ransac_recovers_dataset_pose():
    ds = ar.make_dataset(SMALL)
    image = ds.frame_ids("test")[0]
    pixels, worlds = ds.correspondences(image)
    est = ar.ransac_pnp(ds.intr, pixels, worlds, seed=3)
    assert est["status"] == "Ok"
    rot, trans = ar.pose_error(est["pose"], ds.pose(image))
    assert rot < 0.5
    assert trans < 0.05


def test_dataset_round_trip(tmp_path):
    ds = ar.make_dataset(SMALL)
    ar.save_dataset(ds, tmp_path / "scene")
    back = ar.load_dataset(tmp_path / "scene")
    assert back.frame_count == ds.frame_count == 8
    for image in ds.frame_ids("train"):
        assert np.array_equal(back.pose(image).matrix(), ds.pose(image).matrix())


def test_short_training_run(tmp_path):
    ds = ar.make_dataset(SMALL)
    result = ar.train(ds, json.dumps({"train": {"iterations": 50, "checkpoint_every": 25}}))
    assert not result.diverged
    assert result.log_csv.count("\n") == 4
    assert np.isfinite(result.coord_error(ds))
    result.save(tmp_path / "model.json")
    assert (tmp_path / "model.json").exists()


def test_gradcheck_passes():
    ok, suites = ar.gradcheck()
    assert ok
    assert {s["loss"] for s in suites} >= {"reproj", "angle"}


def test_errors_surface_as_exceptions():
    with pytest.raises(ar.Error, match="ConfigError"):
        ar.make_dataset('{"scene": {"bogus": 1}}')
