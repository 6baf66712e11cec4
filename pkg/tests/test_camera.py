import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvinpaint.camera import (
    AutoregressiveSet,
    BehindCameraError,
    Camera,
    DepthMap,
    View,
    build_scene_graph,
    euler_zyx,
    load_camera,
    project,
    project_points,
    rotation_zyx,
    save_camera,
    unproject,
    view_distance,
)

import oracles

angle = st.floats(-math.pi + 1e-3, math.pi, allow_nan=False)
pitch = st.floats(-math.pi / 2 + 1e-3, math.pi / 2 - 1e-3)


def Rz(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def cam_with(R, t=(0, 0, 0)):
    return Camera.from_params(100.0, 32.0, 24.0, R, t)


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


class TestCameraValidation:
    def test_rejects_non_rotation(self):
        with pytest.raises(ValueError):
            cam_with(np.diag([1.0, 1.0, 1.1]))

    def test_rejects_reflection(self):
        with pytest.raises(ValueError):
            cam_with(np.diag([1.0, 1.0, -1.0]))

    def test_rejects_bad_intrinsics(self):
        with pytest.raises(ValueError):
            Camera(np.diag([0.0, 1.0, 1.0]), np.eye(3), np.zeros(3))
        with pytest.raises(ValueError):
            Camera(np.diag([1.0, 1.0, 2.0]), np.eye(3), np.zeros(3))
        K = np.eye(3)
        K[1, 0] = 0.5
        with pytest.raises(ValueError):
            Camera(K, np.eye(3), np.zeros(3))

    def test_accepts_small_orthonormality_error(self):
        R = np.eye(3)
        R[0, 1] = 1e-8
        cam_with(R)

    def test_immutable_arrays(self):
        cam = cam_with(np.eye(3))
        with pytest.raises(ValueError):
            cam.R[0, 0] = 2.0

    def test_center(self):
        R = rotation_zyx([0.3, -0.2, 0.1])
        C = np.array([1.0, -2.0, 0.5])
        cam = cam_with(R, -R @ C)
        np.testing.assert_allclose(cam.center, C, atol=1e-12)


class TestCameraFiles:
    def test_round_trip(self, tmp_path):
        cam = cam_with(rotation_zyx([0.1, 0.2, 0.3]), [1, 2, 3])
        save_camera(cam, tmp_path / "c.json")
        assert load_camera(tmp_path / "c.json") == cam
        d = json.loads((tmp_path / "c.json").read_text())
        assert len(d["K"]) == 9 and len(d["R"]) == 9 and len(d["t"]) == 3

    def test_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="camera: file not found"):
            load_camera(tmp_path / "nope.json")

    def test_malformed(self, tmp_path):
        (tmp_path / "c.json").write_text('{"K": [1]}')
        with pytest.raises(ValueError, match="camera"):
            load_camera(tmp_path / "c.json")


class TestEuler:
    @given(angle, pitch, angle)
    def test_round_trip(self, a, b, c):
        R = rotation_zyx([a, b, c])
        got = euler_zyx(R)
        np.testing.assert_allclose(rotation_zyx(got), R, atol=1e-9)
        ref = oracles.euler_zyx_reference(R.tolist())
        np.testing.assert_allclose(got, ref, atol=1e-7)

    @given(angle, pitch, angle)
    def test_range(self, a, b, c):
        e = euler_zyx(rotation_zyx([a, b, c]))
        assert np.all(e > -math.pi) and np.all(e <= math.pi)

    def test_wraps_minus_pi(self):
        e = euler_zyx(Rz(-math.pi))
        assert e[0] == pytest.approx(math.pi)

    def test_gimbal_lock(self):
        R = rotation_zyx([0.4, math.pi / 2, 0.0])
        e = euler_zyx(R)
        np.testing.assert_allclose(rotation_zyx(e), R, atol=1e-9)


class TestViewDistance:
    def test_identity(self):
        assert view_distance(cam_with(np.eye(3)), cam_with(np.eye(3))) == 0.0

    def test_equal_rotations_exact_zero(self):
        R = rotation_zyx([0.3, 0.2, -1.0])
        assert view_distance(cam_with(R), cam_with(R, [5, 5, 5])) == 0.0

    def test_z_rotation(self):
        assert view_distance(cam_with(np.eye(3)), cam_with(Rz(0.3))) == pytest.approx(0.3, abs=1e-12)

    def test_translation_ignored(self):
        a = cam_with(Rz(0.2))
        b = cam_with(np.eye(3), [10, 0, 0])
        c = cam_with(np.eye(3))
        assert view_distance(a, b) == view_distance(a, c)

    @settings(max_examples=50)
    @given(st.integers(0, 2**31))
    def test_left_invariance(self, seed):
        rng = np.random.default_rng(seed)
        Ra, Rb, Q = (random_rotation(rng) for _ in range(3))
        d1 = view_distance(cam_with(Ra), cam_with(Rb))
        d2 = view_distance(cam_with(Q @ Ra), cam_with(Q @ Rb))
        assert d1 == pytest.approx(d2, abs=1e-9)

    def test_continuous_near_identity(self):
        # small negative rotations stay small after wrapping
        assert view_distance(cam_with(np.eye(3)), cam_with(Rz(-1e-3))) == pytest.approx(1e-3)


class TestSceneGraph:
    def test_complete_three(self):
        g = build_scene_graph([cam_with(Rz(a)) for a in (0, 0.1, 0.2)], "complete")
        assert len(g.edges) == 6
        assert all((j, i) in g.edges for i, j in g.edges)
        assert all(i != j for i, j in g.edges)

    def test_knn_example(self):
        g = build_scene_graph([cam_with(Rz(a)) for a in (0, 0.1, 0.2, 0.9)], 1)
        assert g.neighbors(3) == [2]

    def test_k_saturates(self):
        cams = [cam_with(Rz(a)) for a in (0, 0.4, 0.1, 0.3)]
        assert set(build_scene_graph(cams, 3).edges) == set(build_scene_graph(cams, "complete").edges)

    def test_tie_lower_index(self):
        g = build_scene_graph([cam_with(Rz(a)) for a in (0, 0.2, -0.2)], 1)
        assert g.neighbors(0) == [1]

    def test_distances_match(self):
        cams = [cam_with(Rz(a)) for a in (0, 0.5, 1.0)]
        g = build_scene_graph(cams, 2)
        for (i, j), d in zip(g.edges, g.distances):
            assert d == view_distance(cams[i], cams[j])

    def test_errors(self):
        with pytest.raises(ValueError):
            build_scene_graph([cam_with(np.eye(3))])
        with pytest.raises(ValueError):
            build_scene_graph([cam_with(np.eye(3))] * 3, 0)


class TestProjection:
    def test_optical_axis(self):
        cam = Camera.from_params(50.0, 31.5, 23.5)
        px, d = project(cam, [0, 0, 2])
        np.testing.assert_allclose(px, [31.5, 23.5])
        assert d == 2

    def test_behind(self):
        with pytest.raises(BehindCameraError):
            project(Camera.from_params(50.0, 0, 0), [0, 0, -1])
        with pytest.raises(BehindCameraError):
            project(Camera.from_params(50.0, 0, 0), [1, 0, 0])

    @given(st.floats(0, 63), st.floats(0, 47), st.floats(0.05, 100), st.integers(0, 1000))
    def test_round_trip(self, u, v, d, seed):
        rng = np.random.default_rng(seed)
        cam = Camera.from_params(55.0, 32.0, 24.0, random_rotation(rng), rng.normal(size=3))
        X = unproject(cam, [u, v], d)
        px, z = project(cam, X)
        assert np.abs(px - [u, v]).max() < 1e-6
        assert z == pytest.approx(d, rel=1e-9)

    def test_vectorized_matches_scalar(self, rng):
        cam = Camera.from_params(55.0, 32.0, 24.0, random_rotation(rng), [0, 0, 5])
        P = rng.normal(size=(20, 3))
        uv, z = project_points(cam, P)
        for k in range(20):
            px, d = project(cam, P[k])
            np.testing.assert_allclose(uv[k], px, rtol=1e-12)
            assert z[k] == pytest.approx(d)


class TestLookAt:
    def test_points_at_target(self):
        K = np.array([[50.0, 0, 32], [0, 50.0, 24], [0, 0, 1]])
        cam = Camera.look_at(K, [3, -2, 1], [0, 0, 0])
        px, _ = project(cam, [0, 0, 0])
        np.testing.assert_allclose(px, [32, 24], atol=1e-9)

    def test_up_is_up(self):
        K = np.array([[50.0, 0, 32], [0, 50.0, 24], [0, 0, 1]])
        cam = Camera.look_at(K, [0, 0, -5], [0, 0, 0])
        (_, v_high), _ = project(cam, [0, -1, 0])          # world -y is up
        assert v_high < 24


class TestContainers:
    def test_depth_validation(self):
        with pytest.raises(ValueError):
            DepthMap(np.array([[1.0, -1.0]]), np.array([[True, True]]))
        d = DepthMap(np.array([[1.0, 0.0, np.nan]]))
        assert d.valid.tolist() == [[True, False, False]]
        assert d.min_depth() == 1.0
        with pytest.raises(ValueError):
            DepthMap(np.zeros((2, 2))).min_depth()

    def test_view_effective_mask(self):
        m = np.ones((2, 3), bool)
        v = View(np.zeros((2, 3, 3)), m)
        assert v.effective_mask.all()
        v2 = View(np.zeros((2, 3, 3)), m, inpainted=True)
        assert not v2.effective_mask.any()
        assert v2.mask.all()

    def test_view_shape_checks(self):
        with pytest.raises(ValueError):
            View(np.zeros((2, 3)), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            View(np.zeros((2, 3, 3)), np.zeros((3, 2)))

    def test_autoregressive_set(self):
        views = [View(np.zeros((1, 1, 3)), [[True]], inpainted=b) for b in (True, False)]
        s = AutoregressiveSet(views)
        assert s.inpainted == [0] and not s.complete and len(s) == 2
