import math

import numpy as np
import pytest

from grasptrack.config import ConfigError, DatasetConfig, SceneConfig
from grasptrack.geometry import GraspPose
from grasptrack.scene import (
    CH_COS,
    CH_POS,
    CH_SEM,
    CH_SIN,
    CH_WID,
    Clip,
    DatasetReader,
    InstanceFrame,
    generate_clip,
    generate_dataset,
    rasterize_targets,
    rle_decode,
    rle_encode,
)


def static_scene(**kw) -> SceneConfig:
    return SceneConfig(speed_max=1e-9, spin_max=0.0, noise=0.0, n_objects_min=1, n_objects_max=1, **kw)


def make_synthetic_clip(grasps, mask=None, h=64, w=64, w_max=60.0):
    """Hand-built single-frame clip for target rasterization tests."""
    if mask is None:
        mask = np.ones((h, w), dtype=bool)
    inst = InstanceFrame(instance_id=0, grasps=grasps, visible_mask=mask, visible_frac=1.0)
    return Clip(
        clip_id="synthetic",
        frames=[np.zeros((h, w, 3), dtype=np.uint8)],
        annotations=[{0: inst}],
        occluded=[[]],
        occlusions=[],
        target_id=0,
        w_max=w_max,
        scene=SceneConfig(height=h, width=w, w_max=w_max),
    )


class TestGenerateClip:
    def test_static_scene_frames_identical(self):
        clip = generate_clip(7, static_scene())
        for frame in clip.frames[1:]:
            assert np.array_equal(frame, clip.frames[0])
        g0 = clip.annotations[0][0].grasps
        for ann in clip.annotations[1:]:
            for a, b in zip(ann[0].grasps, g0):
                assert a.x == pytest.approx(b.x, abs=1e-6)
                assert a.theta == pytest.approx(b.theta, abs=1e-9)

    def test_determinism_bit_identical(self):
        cfg = SceneConfig(occlusion_prob=1.0)
        a = generate_clip(7, cfg)
        b = generate_clip(7, cfg)
        assert len(a.frames) == len(b.frames)
        for fa, fb in zip(a.frames, b.frames):
            assert np.array_equal(fa, fb)
        assert a.occlusions == b.occlusions and a.target_id == b.target_id

    def test_occlusion_drops_visibility_and_recovers(self):
        cfg = SceneConfig(occlusion_prob=1.0, occlusion_min=3, occlusion_max=3, n_frames=16)
        clip = generate_clip(3, cfg, n_frames=16)
        assert clip.occlusions, "occlusion scheduled with prob 1"
        inst, start, dur = clip.occlusions[0]
        for t in range(start, start + dur):
            assert clip.annotations[t][inst].visible_frac < 0.10
            assert inst in clip.occluded[t]
        assert clip.annotations[start + dur][inst].visible_frac > 0.5
        assert clip.annotations[start - 1][inst].visible_frac > 0.5

    def test_annotation_poses_valid_and_in_frame(self):
        for seed in range(8):
            clip = generate_clip(seed, SceneConfig(n_objects_min=2, n_objects_max=3))
            for ann in clip.annotations:
                for inst in ann.values():
                    for g in inst.grasps:
                        assert -math.pi / 2 <= g.theta < math.pi / 2
                        assert g.width > 0
                        assert g.in_frame(clip.scene.height, clip.scene.width)

    def test_too_small_frame_rejected(self):
        with pytest.raises(ConfigError, match="too small|larger than frame"):
            generate_clip(0, SceneConfig(height=40, width=40, margin=10))

    def test_object_count_range(self):
        counts = set()
        for seed in range(12):
            clip = generate_clip(seed, SceneConfig(n_objects_min=1, n_objects_max=3))
            counts.add(len(clip.annotations[0]))
        assert counts <= {1, 2, 3} and len(counts) > 1


class TestRle:
    def test_round_trip_random(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            mask = rng.random((13, 17)) > rng.random()
            assert np.array_equal(rle_decode(rle_encode(mask)), mask)

    def test_all_zero_and_all_one(self):
        zero = np.zeros((4, 5), dtype=bool)
        one = np.ones((4, 5), dtype=bool)
        assert np.array_equal(rle_decode(rle_encode(zero)), zero)
        assert np.array_equal(rle_decode(rle_encode(one)), one)
        assert rle_encode(one)["counts"][0] == 0  # starts with a zero-run

    def test_row_major_order(self):
        mask = np.zeros((2, 3), dtype=bool)
        mask[0, 2] = True
        mask[1, 0] = True
        # flattened row-major: 0 0 1 1 0 0
        assert rle_encode(mask)["counts"] == [2, 2, 2]


class TestTargets:
    def test_width_channel_value(self):
        clip = make_synthetic_clip([GraspPose(32, 32, 0.0, 30.0)], w_max=60.0)
        t = rasterize_targets(clip, 0, 0)
        strip = t[..., CH_POS] > 0
        assert strip.any()
        assert np.allclose(t[strip, CH_WID], 0.5)
        # central third along the jaw axis, full height: 10 x 15 strip
        assert t[32, 32, CH_POS] == 1.0
        assert t[32, 32 + 6, CH_POS] == 0.0  # outside |u| <= 5
        assert t[32 + 8, 32, CH_POS] == 0.0  # outside |v| <= 7.5

    def test_angle_channels_quarter_turn(self):
        clip = make_synthetic_clip([GraspPose(32, 32, math.pi / 4, 24.0)], w_max=60.0)
        t = rasterize_targets(clip, 0, 0)
        strip = t[..., CH_POS] > 0
        assert np.allclose(t[strip, CH_COS], 0.0, atol=1e-12)
        assert np.allclose(t[strip, CH_SIN], 1.0, atol=1e-12)

    def test_fully_occluded_gives_empty_channels(self):
        clip = make_synthetic_clip([GraspPose(32, 32, 0.0, 20.0)], mask=np.zeros((64, 64), dtype=bool))
        t = rasterize_targets(clip, 0, 0)
        assert t[..., CH_POS].sum() == 0 and t[..., CH_SEM].sum() == 0

    def test_channel_invariants_on_generated_clips(self):
        for seed in (1, 5, 9):
            clip = generate_clip(seed, SceneConfig(n_objects_min=2, n_objects_max=3))
            for frame in range(clip.length):
                for inst in clip.annotations[frame]:
                    t = rasterize_targets(clip, inst, frame)
                    pos, sem = t[..., CH_POS], t[..., CH_SEM]
                    assert set(np.unique(pos)) <= {0.0, 1.0}
                    assert set(np.unique(sem)) <= {0.0, 1.0}
                    assert np.all((t[..., CH_WID] >= 0) & (t[..., CH_WID] <= 1))
                    assert np.all(np.abs(t[..., CH_COS]) <= 1) and np.all(np.abs(t[..., CH_SIN]) <= 1)
                    # graspable area is a subset of the semantic mask
                    assert not np.any(pos * (1 - sem))
                    # angle/width vanish outside the position region
                    off = pos == 0
                    assert np.all(t[off, CH_COS] == 0) and np.all(t[off, CH_SIN] == 0)
                    assert np.all(t[off, CH_WID] == 0)

    def test_unknown_instance_raises(self):
        clip = generate_clip(0, static_scene())
        with pytest.raises(KeyError):
            rasterize_targets(clip, 99, 0)


class TestDatasetIO:
    def test_generate_and_reload(self, tmp_path):
        cfg = DatasetConfig(n_clips=3, seed=11, scene=SceneConfig(occlusion_prob=0.5))
        root = generate_dataset(tmp_path / "ds", cfg)
        reader = DatasetReader(root)
        assert len(reader) == 3
        fresh = generate_clip(np.random.SeedSequence(11).spawn(3)[1], cfg.scene, clip_id="clip_00001")
        loaded = reader.load_clip(1)
        assert loaded.clip_id == "clip_00001"
        assert loaded.target_id == fresh.target_id
        for t in range(fresh.length):
            assert np.array_equal(loaded.frames[t], fresh.frames[t])  # PNG is lossless
            for inst in fresh.annotations[t]:
                a, b = loaded.annotations[t][inst], fresh.annotations[t][inst]
                assert np.array_equal(a.visible_mask, b.visible_mask)
                for ga, gb in zip(a.grasps, b.grasps):
                    assert ga.x == pytest.approx(gb.x) and ga.theta == pytest.approx(gb.theta)

    def test_refuses_to_overwrite(self, tmp_path):
        out = tmp_path / "ds"
        cfg = DatasetConfig(n_clips=1, seed=0)
        generate_dataset(out, cfg)
        with pytest.raises(ConfigError, match="not empty"):
            generate_dataset(out, cfg)
        generate_dataset(out, cfg, force=True)

    def test_reader_rejects_non_dataset(self, tmp_path):
        with pytest.raises(ConfigError, match="dataset.json"):
            DatasetReader(tmp_path)
