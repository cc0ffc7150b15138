import os

import numpy as np
import pytest

from densedepth.data import (
    AugmentationConfig,
    SceneConfig,
    augment,
    dataset_manifest,
    generate_scene,
    quantize_depth,
    read_depth_png,
    read_image_png,
    sample_sparse,
    write_dataset,
    write_depth_png,
    write_image_png,
)
from densedepth.losses import photometric_raw, sparse_fidelity
from densedepth.tensor import Tensor

SMALL = SceneConfig(height=32, width=96, focal_px=48.0)


class TestGenerateScene:
    def test_same_seed_bit_identical(self):
        a = generate_scene(7, SMALL)
        b = generate_scene(7, SMALL)
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.depth, b.depth)
        assert np.array_equal(a.stereo_image, b.stereo_image)

    def test_different_seeds_differ(self):
        a = generate_scene(1, SMALL)
        b = generate_scene(2, SMALL)
        assert not np.array_equal(a.image, b.image)

    def test_depth_range_respected(self):
        for seed in range(5):
            s = generate_scene(seed, SMALL)
            assert s.depth.min() >= SMALL.d_min
            assert s.depth.max() <= SMALL.d_max
            assert np.all(np.isfinite(s.depth))

    def test_image_in_unit_range(self):
        s = generate_scene(3, SMALL)
        assert s.image.min() >= 0.0 and s.image.max() <= 1.0
        assert s.image.shape == (3, 32, 96)

    def test_degenerate_config_rejected(self):
        with pytest.raises(ValueError, match="extent"):
            SceneConfig(height=4, width=96)
        with pytest.raises(ValueError, match="d_min"):
            SceneConfig(d_min=5.0, d_max=2.0)

    def test_photometric_self_consistency(self):
        # the stereo mate warped by true disparity reproduces the image on
        # non-occluded pixels
        total_mean = []
        for seed in range(5):
            s = generate_scene(seed, SMALL)
            loss = photometric_raw(Tensor(s.image[None]), Tensor(s.stereo_image[None]),
                                   Tensor(s.depth[None]), s.rig, sign=s.stereo_sign)
            # restrict to generator-certified pixels: recompute masked mean
            from densedepth.geometry import disparity_from_depth, warp_horizontal
            disp = disparity_from_depth(Tensor(s.depth[None]), s.rig)
            warped, _ = warp_horizontal(Tensor(s.stereo_image[None]), disp, sign=s.stereo_sign)
            err = np.abs(s.image[None] - warped.data).sum(axis=1, keepdims=True)
            m = s.nonoccluded[None]
            mean_err = float((err * m).sum() / m.sum())
            total_mean.append(mean_err)
        assert np.mean(total_mean) <= 0.02

    def test_stereo_disabled(self):
        cfg = SceneConfig(height=32, width=96, make_stereo=False)
        s = generate_scene(0, cfg)
        assert s.stereo_image is None and s.rig is None


class TestSampleSparse:
    def test_count_at_five_percent(self):
        cfg = SceneConfig(height=64, width=192)
        s = generate_scene(0, cfg)
        sp = sample_sparse(s, 0.05, seed=0)
        assert sp.z.size == round(0.05 * 64 * 192) == 614

    def test_full_density(self):
        s = generate_scene(1, SMALL)
        sp = sample_sparse(s, 1.0, seed=0)
        assert sp.validity.sum() == 32 * 96
        dense = np.zeros_like(s.depth)
        dense[0, sp.omega[:, 0], sp.omega[:, 1]] = sp.z
        np.testing.assert_array_equal(dense, s.depth)

    def test_empirical_density_bound(self):
        s = generate_scene(2, SMALL)
        hw = 32 * 96
        for density in (0.001, 0.0143, 0.05, 0.2):
            sp = sample_sparse(s, density, seed=1)
            assert abs(sp.z.size / hw - density) <= 1.0 / hw

    def test_zero_points_rejected(self):
        s = generate_scene(3, SMALL)
        with pytest.raises(ValueError, match="zero points"):
            sample_sparse(s, 1e-6, seed=0)

    def test_values_match_scene_depth(self):
        s = generate_scene(4, SMALL)
        sp = sample_sparse(s, 0.05, seed=2)
        np.testing.assert_array_equal(sp.z, s.depth[0, sp.omega[:, 0], sp.omega[:, 1]])
        fid = sparse_fidelity(Tensor(s.depth[None]), sp.z, sp.omega, 1)
        assert fid.item() == 0.0

    def test_deterministic(self):
        s = generate_scene(5, SMALL)
        a = sample_sparse(s, 0.05, seed=9)
        b = sample_sparse(s, 0.05, seed=9)
        assert np.array_equal(a.omega, b.omega) and np.array_equal(a.z, b.z)


class TestAugment:
    def test_identity_config_unchanged(self):
        s = generate_scene(6, SMALL)
        sp = sample_sparse(s, 0.05, seed=0)
        cfg = AugmentationConfig()
        s2, sp2 = augment(s, sp, cfg, seed=0)
        assert np.array_equal(s2.image, s.image)
        assert np.array_equal(s2.depth, s.depth)
        assert np.array_equal(sp2.omega, sp.omega)
        assert np.array_equal(sp2.z, sp.z)

    def test_horizontal_flip_twice_restores(self):
        s = generate_scene(7, SMALL)
        sp = sample_sparse(s, 0.05, seed=0)
        cfg = AugmentationConfig(flip_h=1.0)
        s1, sp1 = augment(s, sp, cfg, seed=0)
        s2, sp2 = augment(s1, sp1, cfg, seed=1)
        assert np.array_equal(s2.image, s.image)
        assert np.array_equal(s2.depth, s.depth)
        assert s2.stereo_sign == s.stereo_sign
        order = np.lexsort((sp2.omega[:, 1], sp2.omega[:, 0]))
        base = np.lexsort((sp.omega[:, 1], sp.omega[:, 0]))
        assert np.array_equal(sp2.omega[order], sp.omega[base])

    def test_flip_h_flips_stereo_sign(self):
        s = generate_scene(8, SMALL)
        s1, _ = augment(s, None, AugmentationConfig(flip_h=1.0), seed=0)
        assert s1.stereo_sign == -s.stereo_sign

    def test_vertical_flip_applied_consistently(self):
        s = generate_scene(9, SMALL)
        sp = sample_sparse(s, 0.05, seed=0)
        s1, sp1 = augment(s, sp, AugmentationConfig(flip_v=1.0), seed=0)
        np.testing.assert_array_equal(s1.depth[0], s.depth[0, ::-1, :])
        np.testing.assert_array_equal(
            s1.depth[0, sp1.omega[:, 0], sp1.omega[:, 1]], sp1.z)

    def test_crop_applied_identically(self):
        s = generate_scene(10, SMALL)
        sp = sample_sparse(s, 0.1, seed=0)
        s1, sp1 = augment(s, sp, AugmentationConfig(crop=(16, 48)), seed=3)
        assert s1.image.shape == (3, 16, 48)
        assert s1.depth.shape == (1, 16, 48)
        assert sp1.validity.shape == (1, 16, 48)
        np.testing.assert_array_equal(s1.depth[0, sp1.omega[:, 0], sp1.omega[:, 1]], sp1.z)

    def test_crop_larger_than_scene_rejected(self):
        s = generate_scene(11, SMALL)
        with pytest.raises(ValueError, match="crop"):
            augment(s, None, AugmentationConfig(crop=(64, 256)), seed=0)

    def test_sparse_shift_preserves_values_up_to_loss(self):
        s = generate_scene(12, SMALL)
        sp = sample_sparse(s, 0.05, seed=0)
        s1, sp1 = augment(s, sp, AugmentationConfig(sparse_shift=True), seed=4)
        k0, k1 = sp.z.size, sp1.z.size
        assert k1 <= k0
        assert k1 >= 1
        original = set(np.round(sp.z, 9))
        assert all(np.round(v, 9) in original for v in sp1.z)
        # positions moved by at most one pixel
        # (every surviving point is within the 3x3 neighborhood of some original)
        orig_set = {tuple(p) for p in sp.omega}
        for p in sp1.omega:
            neighborhood = {(p[0] + di, p[1] + dj) for di in (-1, 0, 1) for dj in (-1, 0, 1)}
            assert neighborhood & orig_set

    def test_hist_eq_keeps_range_and_shape(self):
        s = generate_scene(13, SMALL)
        s1, _ = augment(s, None, AugmentationConfig(hist_eq=True), seed=0)
        assert s1.image.shape == s.image.shape
        assert s1.image.min() >= 0.0 and s1.image.max() <= 1.0
        assert not np.array_equal(s1.image, s.image)

    def test_inputs_not_mutated(self):
        s = generate_scene(14, SMALL)
        sp = sample_sparse(s, 0.05, seed=0)
        img0 = s.image.copy()
        omega0 = sp.omega.copy()
        augment(s, sp, AugmentationConfig(flip_h=1.0, flip_v=1.0, sparse_shift=True, hist_eq=True), seed=5)
        np.testing.assert_array_equal(s.image, img0)
        np.testing.assert_array_equal(sp.omega, omega0)


class TestDepthPng:
    def test_roundtrip_is_quantization(self, tmp_path):
        s = generate_scene(15, SMALL)
        path = os.path.join(tmp_path, "d.png")
        validity = np.ones_like(s.depth)
        write_depth_png(path, s.depth, validity)
        depth, v = read_depth_png(path)
        np.testing.assert_array_equal(depth, quantize_depth(s.depth))
        np.testing.assert_array_equal(v, validity)

    def test_one_meter_encodes_as_256(self, tmp_path):
        path = os.path.join(tmp_path, "one.png")
        d = np.full((1, 2, 2), 1.0)
        write_depth_png(path, d, np.ones_like(d))
        from PIL import Image
        raw = np.asarray(Image.open(path))
        assert raw.dtype == np.uint16 or raw.dtype == np.int32
        assert np.all(np.asarray(raw) == 256)

    def test_all_invalid_roundtrip(self, tmp_path):
        path = os.path.join(tmp_path, "inv.png")
        d = np.full((1, 3, 3), 10.0)
        write_depth_png(path, d, np.zeros_like(d))
        depth, v = read_depth_png(path)
        assert v.sum() == 0
        assert depth.sum() == 0

    def test_depth_over_256m_rejected(self, tmp_path):
        d = np.full((1, 2, 2), 300.0)
        with pytest.raises(ValueError, match="256"):
            write_depth_png(os.path.join(tmp_path, "big.png"), d, np.ones_like(d))

    def test_malformed_file_rejected(self, tmp_path):
        path = os.path.join(tmp_path, "rgb.png")
        write_image_png(path, np.random.default_rng(0).uniform(0, 1, size=(3, 4, 4)))
        with pytest.raises(ValueError, match="16-bit"):
            read_depth_png(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_depth_png(os.path.join(tmp_path, "nope.png"))

    def test_validity_preserved(self, tmp_path):
        s = generate_scene(16, SMALL)
        sp = sample_sparse(s, 0.05, seed=0)
        z_map = np.zeros_like(s.depth)
        z_map[0, sp.omega[:, 0], sp.omega[:, 1]] = sp.z
        path = os.path.join(tmp_path, "sparse.png")
        write_depth_png(path, z_map, sp.validity)
        _, v = read_depth_png(path)
        np.testing.assert_array_equal(v, sp.validity)


class TestImagePng:
    def test_roundtrip_8bit(self, tmp_path):
        rng = np.random.default_rng(17)
        img = rng.uniform(0, 1, size=(3, 8, 12))
        path = os.path.join(tmp_path, "img.png")
        write_image_png(path, img)
        back = read_image_png(path)
        assert back.shape == img.shape
        assert np.abs(back - img).max() <= 0.5 / 255 + 1e-9


class TestManifest:
    def test_empty_manifest(self, tmp_path):
        path = os.path.join(tmp_path, "empty.txt")
        open(path, "w").close()
        assert dataset_manifest(path) == []

    def test_writes_and_parses(self, tmp_path):
        manifest = write_dataset(str(tmp_path), seeds=[1, 2, 3], config=SMALL, with_stereo=True)
        entries = dataset_manifest(manifest)
        assert len(entries) == 3
        for e in entries:
            assert os.path.exists(e.image_path)
            assert os.path.exists(e.depth_path)
            assert e.stereo_path is not None and os.path.exists(e.stereo_path)
            assert e.rig is not None and e.rig.focal_px == SMALL.focal_px

    def test_dangling_paths_reported_with_line_numbers(self, tmp_path):
        path = os.path.join(tmp_path, "bad.txt")
        with open(path, "w") as f:
            f.write("missing_a.png missing_b.png\n")
            f.write("also_missing.png gone.png\n")
        with pytest.raises(ValueError, match="line 1"):
            dataset_manifest(path)
        with pytest.raises(ValueError, match="line 2"):
            dataset_manifest(path)

    def test_duplicate_lines_preserved(self, tmp_path):
        manifest = write_dataset(str(tmp_path), seeds=[4], config=SMALL, with_stereo=False)
        with open(manifest) as f:
            line = f.readline().strip()
        dup = os.path.join(tmp_path, "dup.txt")
        with open(dup, "w") as f:
            f.write(line + "\n" + line + "\n")
        entries = dataset_manifest(dup)
        assert len(entries) == 2
        assert entries[0] == entries[1]

    def test_bad_field_count_rejected(self, tmp_path):
        path = os.path.join(tmp_path, "fields.txt")
        with open(path, "w") as f:
            f.write("one two three\n")
        with pytest.raises(ValueError, match="2 or 5 fields"):
            dataset_manifest(path)

    def test_roundtrip_zero_metric_error(self, tmp_path):
        # written-then-read depth equals the quantized original exactly
        from densedepth.metrics import compute_metrics
        manifest = write_dataset(str(tmp_path), seeds=list(range(10)), config=SMALL, with_stereo=False)
        entries = dataset_manifest(manifest)
        for seed, e in zip(range(10), entries):
            scene = generate_scene(seed, SMALL)
            depth, v = read_depth_png(e.depth_path)
            res = compute_metrics(depth, quantize_depth(scene.depth), v)
            assert res.rmse_mm == 0.0 and res.mae_mm == 0.0 and res.absrel == 0.0
