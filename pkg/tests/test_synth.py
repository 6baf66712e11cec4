import filecmp

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from matplotlib.path import Path as PolyPath
from scipy.ndimage import binary_dilation, binary_erosion
from scipy.spatial import ConvexHull

from mvinpaint.camera import Camera, DepthMap, euler_zyx, project_points
from mvinpaint.meshing import build_mesh
from mvinpaint.scenes import random_rgbd
from mvinpaint.synth import (
    SynthConfig,
    make_sample,
    perturb_mesh,
    read_gt,
    render_hull_mask,
    sample_occluder_mask,
    sample_reference_pose,
    single_view_camera,
    stroke_mask,
    write_sample,
)

CAM = single_view_camera(40, 30)


def sample(seed, cfg=SynthConfig(), **kw):
    """First make_sample that succeeds on a stream derived from ``seed``."""
    rng = np.random.default_rng(seed)
    image, depth, _, _ = random_rgbd(rng, 40, 30)
    for _ in range(8):
        try:
            return image, depth, make_sample(image, depth, cfg, rng, **kw)
        except ValueError:
            continue
    raise RuntimeError("no sample")


class TestConfig:
    def test_defaults(self):
        c = SynthConfig()
        assert (c.sigma_ar, c.sigma_tr, c.sigma_ap, c.sigma_tp, c.p_occluder) == (0.3, 0.2, 0.2, 0.01, 0.2)
        assert c.occluder_range == (0.6, 1.0)
        assert SynthConfig(mode="scene").occluder_range == (0.6, 0.8)
        assert c.n_occluder_points == 32

    @pytest.mark.parametrize("kw", [dict(sigma_ar=-0.1), dict(p_occluder=1.5), dict(p_occluder=-0.1),
                                    dict(o_min=0.9, o_max=0.7), dict(mode="city")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SynthConfig(**kw)


class TestReferencePose:
    def test_zero_sigma_identity(self):
        d = DepthMap(np.full((30, 40), 2.0))
        cam = sample_reference_pose(d, SynthConfig(sigma_ar=0, sigma_tr=0), np.random.default_rng(0))
        assert cam == CAM
        np.testing.assert_array_equal(cam.K, [[35, 0, 20], [0, 35, 15], [0, 0, 1]])

    def test_seeded(self):
        d = DepthMap(np.full((30, 40), 2.0))
        a = sample_reference_pose(d, SynthConfig(), np.random.default_rng(5))
        b = sample_reference_pose(d, SynthConfig(), np.random.default_rng(5))
        assert np.array_equal(a.R, b.R) and np.array_equal(a.t, b.t)

    def test_angle_std(self):
        d = DepthMap(np.full((3, 4), 2.0))
        rng = np.random.default_rng(1)
        ang = np.concatenate([euler_zyx(sample_reference_pose(d, SynthConfig(), rng).R) for _ in range(3334)])
        assert len(ang) >= 10_000
        assert abs(ang.std() - 0.3) < 0.05 * 0.3

    def test_translation_scaled_by_min_depth(self):
        v = np.full((3, 4), 5.0)
        v[0, 0] = 0.5
        rng = np.random.default_rng(2)
        t = np.stack([sample_reference_pose(DepthMap(v), SynthConfig(), rng).t for _ in range(4000)])
        assert abs(t.std() - 0.2 * 0.5) < 0.05 * 0.1

    def test_no_valid_depth(self):
        with pytest.raises(ValueError):
            sample_reference_pose(DepthMap(np.zeros((3, 3))), SynthConfig(), np.random.default_rng(0))


class TestPerturb:
    def mesh(self):
        image, depth, cam, _ = random_rgbd(np.random.default_rng(7), 40, 30)
        return build_mesh(depth, image, cam)

    def test_zero(self):
        m = self.mesh()
        p = perturb_mesh(m, SynthConfig(sigma_ap=0, sigma_tp=0), np.random.default_rng(0))
        np.testing.assert_array_equal(p.vertices, m.vertices)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 10**6))
    def test_rigid(self, seed):
        m = self.mesh()
        p = perturb_mesh(m, SynthConfig(), np.random.default_rng(seed))
        assert p.n_vertices == m.n_vertices and p.n_faces == m.n_faces
        assert np.array_equal(p.faces, m.faces) and np.array_equal(p.silhouette, m.silhouette)
        idx = np.random.default_rng(seed).choice(m.n_vertices, 200, replace=False)
        a, b = m.vertices[idx], p.vertices[idx]
        da = np.linalg.norm(a[:, None] - a[None], axis=-1)
        db = np.linalg.norm(b[:, None] - b[None], axis=-1)
        assert np.abs(da - db).max() < 1e-9
        assert not np.allclose(a, b)


def box_corners(lo, hi):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    return np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])


class TestOccluder:
    def test_behind_camera_empty(self):
        pts = np.random.default_rng(0).uniform([-1, -1, -4], [1, 1, -2], (50, 3))
        for mode in ("object", "scene"):
            m, occ = sample_occluder_mask(pts, CAM, 40, 30, SynthConfig(mode=mode), np.random.default_rng(1))
            assert occ.shape == (32, 3)
            assert not m.any()

    @pytest.mark.parametrize("lo,hi", [([-0.5, -0.4, 2.0], [0.3, 0.2, 2.6]),
                                       ([0.1, -0.6, 3.0], [0.9, 0.5, 3.2])])
    def test_box_footprint(self, lo, hi):
        C = box_corners(lo, hi)
        mask = render_hull_mask(C, CAM, 40, 30)
        uv, _ = project_points(CAM, C)
        poly = uv[ConvexHull(uv).vertices]
        vv, uu = np.mgrid[0:30, 0:40]
        oracle = PolyPath(poly).contains_points(np.stack([uu.ravel(), vv.ravel()], 1)).reshape(30, 40)
        k = np.ones((3, 3), bool)
        # agree up to a one-pixel band around the outline
        assert not np.any(mask & ~binary_dilation(oracle, k))
        assert not np.any(binary_erosion(oracle, k) & ~mask)
        assert abs(int(mask.sum()) - int(oracle.sum())) <= 0.15 * oracle.sum()

    def test_scene_mode_area_monotone(self):
        pts = np.random.default_rng(4).uniform([-1, -1, 3], [1, 1, 4], (200, 3))
        cfg = SynthConfig(mode="scene")
        for seed in range(10):
            areas = [sample_occluder_mask(pts, CAM, 40, 30, cfg, np.random.default_rng(seed), s)[0].sum()
                     for s in (0.6, 0.8, 1.0)]
            assert areas[0] <= areas[1] <= areas[2]

    def test_empty_cloud(self):
        with pytest.raises(ValueError):
            sample_occluder_mask(np.zeros((0, 3)), CAM, 40, 30, SynthConfig(), np.random.default_rng(0))

    def test_degenerate_cloud_gives_up(self):
        flat = np.random.default_rng(0).uniform([-1, -1, 2], [1, 1, 2], (30, 3))   # coplanar
        with pytest.raises(ValueError, match="hull"):
            sample_occluder_mask(flat, CAM, 40, 30, SynthConfig(), np.random.default_rng(0))


class TestStrokes:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6))
    def test_nonempty_and_seeded(self, seed):
        a = stroke_mask(40, 30, SynthConfig(), np.random.default_rng(seed))
        b = stroke_mask(40, 30, SynthConfig(), np.random.default_rng(seed))
        assert a.shape == (30, 40) and a.dtype == bool
        assert a.any() and np.array_equal(a, b)


class TestMakeSample:
    def test_gt_invariants(self):
        for s in range(15):
            _, _, smp = sample(s, SynthConfig(p_occluder=0.5))
            smp.gt.check(smp.mask)
            u = smp.unperturbed
            assert np.all(smp.gt.shadow <= (u["shadow"] & u["front"]))

    def test_p_occluder_zero_strokes(self):
        for s in range(10):
            assert sample(s, SynthConfig(p_occluder=0.0))[2].provenance["mask_type"] == "strokes"
        for s in range(5):
            assert sample(s, SynthConfig(p_occluder=1.0))[2].provenance["mask_type"] == "occluder"

    def test_identity_zero_perturbation(self):
        image, depth, smp = sample(3, ref_cam=CAM, perturb=False)
        u = smp.unperturbed
        np.testing.assert_array_equal(smp.gt.shadow, u["shadow"] & u["front"] & smp.mask)
        np.testing.assert_array_equal(smp.cues.front, u["front"])
        assert smp.cues.reference_distance == 0.0

    def test_reference_sees_nothing(self):
        image, depth, _, _ = random_rgbd(np.random.default_rng(0), 40, 30)
        away = Camera.look_at(CAM.K, [0, 0, 0], [0, 0, -1])
        with pytest.raises(ValueError):
            make_sample(image, depth, SynthConfig(), np.random.default_rng(0), ref_cam=away)

    def test_round_trip_and_determinism(self, tmp_path):
        for k in (0, 1):
            _, _, smp = sample(11, SynthConfig(p_occluder=0.5))
            write_sample(smp, tmp_path / str(k), {"seed": 11})
        g = read_gt(tmp_path / "0")
        for a in ("front", "back", "shadow"):
            np.testing.assert_array_equal(getattr(g, a), getattr(smp.gt, a))
        names = sorted(p.name for p in (tmp_path / "0").iterdir())
        assert {"gt_cf.png", "gt_cb.png", "gt_cs.png", "provenance.json", "color.png", "front.png",
                "back.png", "invdepth.pfm", "shadow.png", "mask.png", "target.png"} <= set(names)
        match, mismatch, errors = filecmp.cmpfiles(tmp_path / "0", tmp_path / "1", names, shallow=False)
        assert not mismatch and not errors

    def test_unperturbed_alignment_dominates(self):
        """Pixels whose rendered reference color matches the target: unperturbed >= perturbed."""
        cfg = SynthConfig(p_occluder=0.0)
        wins = n = 0
        for s in range(40):
            rng = np.random.default_rng(100 + s)
            image, depth, _, _ = random_rgbd(rng, 40, 30)
            ref_cam = sample_reference_pose(depth, cfg, rng)
            try:
                p = make_sample(image, depth, cfg, np.random.default_rng(s), ref_cam=ref_cam)
            except ValueError:
                continue
            u = make_sample(image, depth, cfg, np.random.default_rng(s), ref_cam=ref_cam, perturb=False)
            aligned = [(c.front & (np.abs(c.color - image).max(-1) < 0.02)).sum() for c in (p.cues, u.cues)]
            wins += aligned[1] >= aligned[0]
            n += 1
        assert n >= 30
        assert wins >= 0.95 * n
