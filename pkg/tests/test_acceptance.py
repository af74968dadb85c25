"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with -s to watch them stream).

The desk-scale criteria share one training run (plus a seed-fixed rerun
for the reproducibility bound); property criteria run standalone. The
whole module is self-contained: it generates its datasets under /tmp and
never touches the repo tree.

Budget notes: the two training runs dominate (minutes each); everything
else is seconds. Criteria with spec'd runtime bounds assert them.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from grasptrack import autodiff as ad
from grasptrack.autodiff import Tensor
from grasptrack.bench import ablate_memory, bench_latency, evaluate, occlusion_suite, recovery_rate
from grasptrack.config import (
    DatasetConfig,
    DecodeConfig,
    EvalConfig,
    LossConfig,
    ModelConfig,
    SceneConfig,
    TrainConfig,
)
from grasptrack.decoding import decode, logits_from_targets
from grasptrack.geometry import GraspPose, angle_diff, is_success, rect_from_pose, rect_iou
from grasptrack.losses import balance_alpha, clip_loss
from grasptrack.memory import MemoryBank, Session
from grasptrack.model import Prompt, PromptableGraspNet
from grasptrack.scene import generate_clip, generate_dataset, rasterize_targets
from grasptrack.training import train, unroll_clip_batch

from oracles import rasterized_iou
from test_autodiff import check_op, finite_diff
from test_memory import StubNet
from test_model import tiny_config

ROOT = Path("/tmp/grasptrack_acceptance")

# one training recipe shared by every desk-scale criterion
TRAIN_SCENE = SceneConfig(occlusion_prob=0.3)
TRAIN_EPOCHS = 60
N_CLIP = 8
N_HIST = 8
W_MAX = 40.0
DECODE = DecodeConfig(w_max=W_MAX)


def report(name: str, ok: bool, detail: str = "") -> None:
    print(f"[ACCEPT] {name}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, f"{name}: {detail}"


def dataset(name: str, seed: int, scene: SceneConfig, n_clips: int, n_frames: int | None = None) -> Path:
    path = ROOT / name
    if not (path / "dataset.json").exists():
        generate_dataset(path, DatasetConfig(n_clips=n_clips, seed=seed, scene=scene), n_frames=n_frames, force=True)
    return path


@pytest.fixture(scope="module")
def heldout_dir() -> Path:
    return dataset("heldout", 2000, SceneConfig(occlusion_prob=0.0), 25, n_frames=32)


@pytest.fixture(scope="module")
def trained(heldout_dir):
    """Two seed-fixed training runs on the acceptance dataset (criterion 7)."""
    train_dir = dataset("train", 1000, TRAIN_SCENE, 200)
    cfg = TrainConfig(epochs=TRAIN_EPOCHS, batch_clips=8, seed=0, n_clip=N_CLIP, n_hist=N_HIST,
                      re_prompt_fraction=0.2)
    runs = []
    for run_idx in range(2):
        out = ROOT / f"run_{run_idx}"
        ckpt = out / "checkpoint.bin"
        marker = out / "train_report.json"
        if not marker.exists():
            t0 = time.perf_counter()
            train(train_dir, cfg, out_dir=out, log=None)
            wall = time.perf_counter() - t0
        else:
            wall = json.loads(marker.read_text())["wall_clock_s"]
        acc = evaluate(ckpt, heldout_dir, EvalConfig(prompt_interval=8, n_hist=N_HIST), DECODE).accuracy
        runs.append({"ckpt": ckpt, "wall_s": wall, "accuracy": acc})
    return runs


class TestGradientCorrectness:
    def test_every_op_and_full_clip_loss(self):
        t0 = time.perf_counter()
        # every engine op against central finite differences (64-bit)
        check_op(ad.add, (3, 4), (3, 4))
        check_op(ad.sub, (3, 4), (3, 4))
        check_op(ad.mul, (2, 6, 1), (6, 3))
        check_op(ad.matmul, (2, 3, 4), (4, 5))
        check_op(ad.sigmoid, (3, 3))
        check_op(ad.tanh, (3, 3))
        check_op(lambda x: ad.softmax(x, axis=-1), (4, 6))
        check_op(ad.layer_norm, (3, 8), (8,), (8,))
        check_op(lambda a, b: ad.concat([a, b], axis=1), (2, 3), (2, 4))
        check_op(lambda x: x[:, 1:3], (3, 5))
        check_op(lambda x: ad.reshape(x, (6,)), (2, 3))
        check_op(lambda x: ad.transpose(x, (1, 0, 2)), (2, 3, 4))
        check_op(lambda x: ad.mean(x, axis=(1, 3)), (2, 3, 2, 4))
        check_op(lambda x: ad.sum_(x, axis=0), (3, 4))
        check_op(lambda x, w, b: ad.conv2d(x, w, b, stride=1, pad=1), (2, 5, 5, 2), (3, 3, 2, 3), (3,))
        check_op(lambda x, w, b: ad.conv2d(x, w, b, stride=2, pad=1), (2, 6, 6, 2), (4, 4, 2, 3), (3,))
        check_op(ad.upsample2x, (2, 3, 3, 2))
        check_op(lambda x: ad.avgpool(x, 2), (2, 4, 4, 3))
        check_op(ad.scaled_dot_attention, (2, 4, 8), (2, 6, 8), (2, 6, 8))

        # full clip objective end-to-end through a tiny float64 model
        model = PromptableGraspNet(tiny_config(), dtype=np.float64)
        rng = np.random.default_rng(0)
        frames = rng.integers(0, 255, size=(1, 2, 16, 16, 3), dtype=np.uint8)
        boxes = np.array([[2.0, 3.0, 12.0, 13.0]])
        targets = np.zeros((2, 1, 16, 16, 5))
        targets[:, :, 6:9, 6:10, 0] = 1.0
        targets[:, :, 6:9, 6:10, 1] = 0.6
        targets[:, :, 6:9, 6:10, 2] = -0.8
        targets[:, :, 6:9, 6:10, 3] = 0.5
        targets[:, :, 4:12, 4:12, 4] = 1.0

        def total_loss() -> Tensor:
            preds = unroll_clip_batch(model, frames, boxes, n_hist=2)
            return clip_loss(preds, [targets[t] for t in range(2)]).total_node

        loss = total_loss()
        for p in model.params.values():
            p.grad = None
        loss.backward()

        rng_pick = np.random.default_rng(1)
        checked = 0
        h = 1e-5
        for name, p in model.trainable().items():
            flat = p.data.reshape(-1)
            n_coords = min(2, flat.size)
            for idx in rng_pick.choice(flat.size, size=n_coords, replace=False):
                orig = flat[idx]
                flat[idx] = orig + h
                with ad.no_grad():
                    fp = float(total_loss().data)
                flat[idx] = orig - h
                with ad.no_grad():
                    fm = float(total_loss().data)
                flat[idx] = orig
                fd = (fp - fm) / (2 * h)
                # params unused by this forward (e.g. the point-prompt kind
                # embedding under a box prompt) legitimately have no grad
                an = 0.0 if p.grad is None else p.grad.reshape(-1)[idx]
                denom = max(abs(fd), abs(an), 1e-6)
                assert abs(fd - an) / denom < 1e-4, f"{name}[{idx}]: fd {fd} vs analytic {an}"
                checked += 1
        elapsed = time.perf_counter() - t0
        report("gradient-correctness", elapsed < 60.0, f"{checked} param coords checked in {elapsed:.1f}s")


class TestLossConstants:
    def test_paper_constants_and_alpha_clamp(self):
        cfg = LossConfig()
        ok = (cfg.w_pos, cfg.w_cos, cfg.w_sin, cfg.w_wid, cfg.w_sem) == (5.0, 5.0, 5.0, 1.0, 1.0)
        ok = ok and (cfg.beta_pos, cfg.beta_wid, cfg.beta_sem) == (20.0, 10.0, 5.0)
        target = np.zeros((64, 64))
        target.ravel()[:64] = 1.0  # negatives/positives = 4032/64 = 63
        ok = ok and float(balance_alpha(target, cfg.beta_pos).item()) == 20.0
        ok = ok and float(balance_alpha(target, 100.0).item()) == 63.0
        report("loss-constants", ok, "w=(5,5,5,1,1), beta=(20,10,5), alpha 63->20")


class TestGeometryOracle:
    def test_clipping_vs_rasterization_and_invariances(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(42)
        worst = 0.0
        for _ in range(1000):
            a = rect_from_pose(GraspPose(rng.uniform(12, 52), rng.uniform(12, 52), rng.uniform(-1.5, 1.5), rng.uniform(6, 26)))
            b = rect_from_pose(GraspPose(rng.uniform(12, 52), rng.uniform(12, 52), rng.uniform(-1.5, 1.5), rng.uniform(6, 26)))
            fast = rect_iou(a, b)
            worst = max(worst, abs(fast - rasterized_iou(a, b, grid=0.05)))
            assert fast == pytest.approx(rect_iou(b, a), rel=1e-9, abs=1e-12)
        assert worst < 0.02, f"max |clip - raster| = {worst:.4f}"

        for _ in range(300):
            pa = GraspPose(rng.uniform(20, 44), rng.uniform(20, 44), rng.uniform(-1.5, 1.5), rng.uniform(6, 24))
            pb = GraspPose(rng.uniform(20, 44), rng.uniform(20, 44), rng.uniform(-1.5, 1.5), rng.uniform(6, 24))
            base = rect_iou(rect_from_pose(pa), rect_from_pose(pb))
            rot = rng.uniform(-math.pi, math.pi)
            dx, dy = rng.uniform(-25, 25, 2)
            moved = rect_iou(rect_from_pose(pa.transformed(dx, dy, rot)), rect_from_pose(pb.transformed(dx, dy, rot)))
            assert moved == pytest.approx(base, rel=1e-9, abs=1e-9)
        elapsed = time.perf_counter() - t0
        report("geometry-oracle", elapsed < 30.0, f"1000 oracle pairs, worst gap {worst:.4f}, {elapsed:.1f}s")


class TestSuccessCriterion:
    def test_boundaries(self):
        pred = GraspPose(10, 10, 0.0, 10.0)
        at_exact = GraspPose(16, 10, 0.0, 10.0)  # IoU exactly 0.25
        ok = rect_iou(rect_from_pose(pred), rect_from_pose(at_exact)) == 0.25
        ok = ok and not is_success(pred, at_exact)
        dx = 10.0 - 26.0 / 1.26 / 5.0  # IoU 0.26
        just_above = GraspPose(10 + dx, 10, 0.0, 10.0)
        ok = ok and is_success(pred, just_above)
        truth = GraspPose(10, 10, 0.0, 10.0)
        ok = ok and is_success(GraspPose(10, 10, math.radians(29.0), 10.0), truth)
        ok = ok and not is_success(GraspPose(10, 10, math.radians(31.0), 10.0), truth)
        report("success-criterion", ok, "IoU 0.25/0.26 and 29/31 degree boundaries")


class TestRoundTrip:
    def test_500_scenes(self):
        from grasptrack.decoding import CH_COS, CH_SIN

        rng_scene = SceneConfig(n_objects_min=1, n_objects_max=2)
        checked = recovered = scenes_with_checks = 0
        for seed in range(500):
            clip = generate_clip(10_000 + seed, rng_scene, n_frames=1)
            cfg = DecodeConfig(w_max=clip.w_max, max_grasps=8)
            inst = clip.target_id
            target = rasterize_targets(clip, inst, 0)
            decoded = decode(logits_from_targets(target), cfg)
            sem = clip.annotations[0][inst].visible_mask
            yy, xx = np.mgrid[0 : sem.shape[0], 0 : sem.shape[1]].astype(float)
            any_checked = False
            for g in clip.annotations[0][inst].grasps:
                c, s = math.cos(g.theta), math.sin(g.theta)
                u = (xx - g.x) * c + (yy - g.y) * s
                v = -(xx - g.x) * s + (yy - g.y) * c
                strip = (np.abs(u) <= g.width / 6) & (np.abs(v) <= g.width / 4)
                # skip strips clipped by overlap or overwritten by a later
                # grasp (painting is later-wins by design)
                if strip.sum() == 0 or not np.all(sem[strip]):
                    continue
                own = (np.abs(target[..., CH_COS] - math.cos(2 * g.theta)) < 1e-9) & (
                    np.abs(target[..., CH_SIN] - math.sin(2 * g.theta)) < 1e-9
                )
                if not np.all(own[strip]):
                    continue
                checked += 1
                any_checked = True
                hit = any(
                    abs(d.x - g.x) <= 2.0
                    and abs(d.y - g.y) <= 2.0
                    and angle_diff(d.theta, g.theta) <= math.radians(3.0)
                    and abs(d.width - g.width) <= 0.10 * g.width
                    for d in decoded
                )
                recovered += int(hit)
            scenes_with_checks += int(any_checked)
        ok = checked >= 400 and recovered == checked and scenes_with_checks >= 450
        report("encode-decode-round-trip", ok,
               f"{recovered}/{checked} grasps recovered over 500 scenes ({scenes_with_checks} scenes contributed)")


class TestMemoryMachine:
    def test_fuzz_and_prompt_independence(self):
        rng = np.random.default_rng(0)
        frame = np.zeros((16, 16, 3), dtype=np.uint8)
        violations = 0
        for _ in range(10_000):
            n_hist = int(rng.integers(1, 5))
            session = Session(StubNet(), n_hist=n_hist, decode_cfg=DecodeConfig(w_max=W_MAX))
            expect = 0
            for step_i in range(int(rng.integers(1, 10))):
                prompted = rng.random() < 0.3 or step_i == 0
                session.step(frame, Prompt(kind="point", point=(4, 4)) if prompted else None)
                expect = 1 if prompted else expect + 1
                entries = session.bank.entries()
                idx = [s.frame_index for s in entries]
                if len(entries) > n_hist or len(entries) != min(expect, n_hist) or idx != sorted(idx):
                    violations += 1
        # prompted output is bit-independent of bank contents (real model)
        net = PromptableGraspNet(tiny_config())
        probe = np.random.default_rng(1).integers(0, 255, (16, 16, 3), dtype=np.uint8)
        prompt = Prompt(kind="box", box=(2, 2, 12, 12))
        fresh = Session(net, n_hist=4)
        m1, _ = fresh.step(probe, prompt)
        warm = Session(net, n_hist=4)
        warm.step(probe, Prompt(kind="point", point=(5, 5)))
        warm.step(probe, None)
        for s in warm.bank.entries():
            s.pos_mask.data[:] = 0.789
        m2, _ = warm.step(probe, prompt)
        bit_identical = np.array_equal(m1.channels, m2.channels)
        report("memory-state-machine", violations == 0 and bit_identical,
               f"10^4 sequences, {violations} violations; prompted bit-identical={bit_identical}")


class TestDeskTraining:
    def test_accuracy_and_reproducibility(self, trained):
        a, b = trained
        ok_budget = a["wall_s"] < 1800 and b["wall_s"] < 1800
        ok_acc = a["accuracy"] >= 0.80
        ok_repro = abs(a["accuracy"] - b["accuracy"]) <= 0.02
        report(
            "desk-training",
            ok_budget and ok_acc and ok_repro,
            f"acc {a['accuracy']:.3f}/{b['accuracy']:.3f}, wall {a['wall_s']:.0f}s/{b['wall_s']:.0f}s",
        )


class TestPromptIntervalTrend:
    def test_interval_1_8_whole(self, trained):
        ckpt = trained[0]["ckpt"]
        acc = {1: [], 8: [], 0: []}
        for i in range(5):
            ds = dataset(f"trend_{i}", 3000 + i, SceneConfig(occlusion_prob=0.0), 12, n_frames=48)
            for interval in acc:
                r = evaluate(ckpt, ds, EvalConfig(prompt_interval=interval, n_hist=N_HIST), DECODE)
                acc[interval].append(r.accuracy)
        m1, m8, m0 = (float(np.mean(acc[k])) for k in (1, 8, 0))
        ok = m1 >= m8 >= m0 and (m8 - m0) >= 0.02
        report("prompt-interval-trend", ok, f"interval1 {m1:.3f} >= interval8 {m8:.3f} >= first-only {m0:.3f}")


class TestMemoryAblationTrend:
    def test_occluded_gap(self, trained):
        ckpt = trained[0]["ckpt"]
        gaps = []
        for i in range(5):
            ds = dataset(
                f"ablate_{i}", 4000 + i,
                SceneConfig(occlusion_prob=1.0, occlusion_min=2, occlusion_max=4,
                            n_objects_min=2, n_objects_max=3),
                10, n_frames=24,
            )
            result = ablate_memory(ckpt, ds, EvalConfig(prompt_interval=8, n_hist=N_HIST))
            gaps.append(result["accuracy_gap"])
        mean_gap = float(np.mean(gaps))
        report("memory-ablation-trend", mean_gap >= 0.10, f"mean with-without gap {mean_gap:+.3f} over 5 seeds")


class TestOcclusionRecovery:
    def test_recovery_within_capacity(self, trained):
        ckpt = trained[0]["ckpt"]
        partial = dataset("occ_partial", 5000,
                          SceneConfig(occlusion_prob=1.0, occlusion_min=1, occlusion_max=4), 15, n_frames=24)
        heavy = dataset("occ_heavy", 5001,
                        SceneConfig(occlusion_prob=1.0, occlusion_min=5, occlusion_max=8), 15, n_frames=28)
        beyond = dataset("occ_beyond", 5002,
                         SceneConfig(occlusion_prob=1.0, occlusion_min=10, occlusion_max=12), 8, n_frames=32)
        rates = {}
        for name, ds in (("partial", partial), ("heavy", heavy)):
            r = evaluate(ckpt, ds, EvalConfig(prompt_interval=0, n_hist=N_HIST), DECODE)
            rates[name] = recovery_rate(r, N_HIST)["within_capacity"]
        recovered = sum(rates[k]["recovered"] for k in rates)
        totals = sum(rates[k]["total"] for k in rates)
        rate = recovered / totals if totals else 0.0
        # beyond-capacity occlusions: documented expected failure, report only
        rb = evaluate(ckpt, beyond, EvalConfig(prompt_interval=0, n_hist=N_HIST), DECODE)
        beyond_stats = recovery_rate(rb, N_HIST)["beyond_capacity"]
        ok = totals >= 20 and rate >= 0.90
        report(
            "occlusion-recovery",
            ok,
            f"within-capacity {recovered}/{totals} = {rate:.2%}; "
            f"beyond capacity {beyond_stats['recovered']}/{beyond_stats['total']} (expected failures tolerated)",
        )


class TestLatencyAccounting:
    def test_monotone_and_budget(self, trained, heldout_dir):
        ckpt = trained[0]["ckpt"]
        table = bench_latency(ckpt, heldout_dir, n_hist_values=(4, 6, 8),
                              cfg=EvalConfig(prompt_interval=0, max_sequences=8), single_thread=True)
        rows = table["rows"]
        times = [row["decode_propagate_ms"] for row in rows]
        totals = [row["total_ms"] for row in rows]
        frames = min(row["frames"] for row in rows)
        monotone = times[0] <= times[1] <= times[2]
        budget = max(totals) < 50.0
        report(
            "latency-accounting",
            monotone and budget and frames >= 100,
            f"decode+propagate ms {[f'{t:.2f}' for t in times]}, total max {max(totals):.1f} ms over >= {frames} frames",
        )


class TestOverfitSmoke:
    def test_4_clips_300_epochs(self):
        ds = dataset("overfit", 6000, SceneConfig(n_objects_min=1, n_objects_max=2), 4)
        cfg = TrainConfig(epochs=300, batch_clips=1, seed=0)
        _, _, rep = train(ds, cfg)
        totals = rep.curves["total"]
        ratio = totals[-1] / totals[0]
        window = 20
        means = [float(np.mean(totals[i : i + window])) for i in range(0, len(totals) - window, window)]
        monotone = all(b <= a * 1.02 for a, b in zip(means, means[1:]))
        report("overfit-smoke", ratio < 0.05 and monotone, f"loss ratio {ratio:.3f}, moving average monotone={monotone}")
