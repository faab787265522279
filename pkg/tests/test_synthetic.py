"""Synthetic clips, their closed-form flow, and the degradation front end."""

import math

import numpy as np
import pytest

from ditvr.numerics import Frame
from ditvr.synthetic import (
    MOTIONS,
    PATTERNS,
    SyntheticSpec,
    degrade,
    gen_synthetic,
    gt_flow_fields,
)

import oracles


class TestSpec:
    def test_defaults(self):
        spec = SyntheticSpec()
        assert spec.pattern in PATTERNS and spec.motion in MOTIONS

    def test_bad_pattern_rejected(self):
        with pytest.raises(ValueError):
            SyntheticSpec(pattern="plasma")

    def test_bad_motion_rejected(self):
        with pytest.raises(ValueError):
            SyntheticSpec(motion="zoom")

    def test_single_frame_rejected(self):
        with pytest.raises(ValueError):
            SyntheticSpec(num_frames=1)

    def test_bad_channels_rejected(self):
        with pytest.raises(ValueError):
            SyntheticSpec(channels=2)


class TestGeneration:
    def test_shapes_and_counts(self):
        spec = SyntheticSpec(pattern="texture", motion="translate", num_frames=5,
                             height=24, width=32)
        video, fwd = gen_synthetic(spec)
        assert len(video) == 5 and len(fwd) == 4
        assert video[0].shape == (1, 24, 32)
        assert (fwd[0].height, fwd[0].width) == (24, 32)

    def test_three_channel_output(self):
        spec = SyntheticSpec(pattern="glyphs", channels=3, height=32, width=32)
        video, _ = gen_synthetic(spec)
        assert video[0].channels == 3

    def test_values_inside_unit_interval(self):
        for pattern in PATTERNS:
            spec = SyntheticSpec(pattern=pattern, height=32, width=32)
            video, _ = gen_synthetic(spec)
            for fr in video:
                assert fr.pixels.min() >= 0.0 and fr.pixels.max() <= 1.0

    def test_deterministic_per_spec(self):
        spec = SyntheticSpec(pattern="glyphs", seed=9, height=32, width=32)
        a, _ = gen_synthetic(spec)
        b, _ = gen_synthetic(spec)
        for fa, fb in zip(a, b):
            np.testing.assert_array_equal(fa.pixels, fb.pixels)

    def test_translation_moves_content(self):
        spec = SyntheticSpec(pattern="texture", motion="translate", num_frames=3,
                             height=32, width=32, du=2.0, dv=0.0)
        video, _ = gen_synthetic(spec)
        # frame 1 at (u) equals frame 0 at (u - 2): pure shift of the pattern
        np.testing.assert_allclose(
            video[1].pixels[:, :, 2:], video[0].pixels[:, :, :-2], atol=1e-9
        )


class TestGtFlow:
    def test_translate_uniform(self):
        spec = SyntheticSpec(pattern="checker", motion="translate", num_frames=3,
                             height=16, width=16, du=1.0, dv=0.0)
        fwd, bwd = gt_flow_fields(spec)
        for f in fwd:
            np.testing.assert_allclose(f.du, 1.0, atol=1e-12)
            np.testing.assert_allclose(f.dv, 0.0, atol=1e-12)
        for b in bwd:
            np.testing.assert_allclose(b.du, -1.0, atol=1e-12)

    def test_static_flows_zero(self):
        spec = SyntheticSpec(pattern="checker", motion="translate", num_frames=2,
                             height=8, width=8, du=0.0, dv=0.0)
        fwd, bwd = gt_flow_fields(spec)
        np.testing.assert_allclose(fwd[0].du, 0.0, atol=1e-12)
        np.testing.assert_allclose(bwd[0].dv, 0.0, atol=1e-12)

    def test_rotation_spot_checked_by_hand(self):
        # 16x16 grid rotating by 0.1 rad per frame about the center (7.5, 7.5);
        # the forward flow at p is R(p - c) + c - p with R the 0.1-rad rotation
        omega = 0.1
        spec = SyntheticSpec(pattern="texture", motion="rotate", num_frames=2,
                             height=16, width=16, omega=omega)
        fwd, _ = gt_flow_fields(spec)
        c = 7.5
        cos_w, sin_w = math.cos(omega), math.sin(omega)
        for (u, v) in [(0, 0), (15, 0), (7, 12), (3, 8)]:
            ru, rv = u - c, v - c
            nu = cos_w * ru - sin_w * rv + c
            nv = sin_w * ru + cos_w * rv + c
            assert fwd[0].du[v, u] == pytest.approx(nu - u, abs=1e-9)
            assert fwd[0].dv[v, u] == pytest.approx(nv - v, abs=1e-9)

    def test_forward_backward_round_trip(self):
        spec = SyntheticSpec(pattern="texture", motion="mixed", num_frames=3,
                             height=16, width=16, du=0.5, dv=-0.5, omega=0.05)
        fwd, bwd = gt_flow_fields(spec)
        uu, vv = np.meshgrid(np.arange(16.0), np.arange(16.0))
        for f, b in zip(fwd, bwd):
            tu = uu + f.du
            tv = vv + f.dv
            # sample the backward field exactly at the forward landings
            from ditvr.flow import sample_flow

            bu, bv = sample_flow(b, tu, tv)
            inside = (tu >= 0) & (tu <= 15) & (tv >= 0) & (tv <= 15)
            np.testing.assert_allclose((tu + bu)[inside], uu[inside], atol=1e-6)
            np.testing.assert_allclose((tv + bv)[inside], vv[inside], atol=1e-6)


class TestDegrade:
    def test_zero_sigma_denoise_identity(self):
        spec = SyntheticSpec(height=16, width=16)
        video, _ = gen_synthetic(spec)
        out, op = degrade(video, "denoise50", noise_sigma=0.0, seed=0)
        for a, b in zip(out, video):
            np.testing.assert_array_equal(a.pixels, b.pixels)
        assert op.scale == 1

    def test_sr4_range_identity(self):
        spec = SyntheticSpec(height=32, width=32)
        video, _ = gen_synthetic(spec)
        out, op = degrade(video, "sr4", seed=0)
        assert out[0].shape == (1, 8, 8)
        for y in out:
            back = op.apply(op.apply_pinv(y))
            np.testing.assert_allclose(back.pixels, y.pixels, atol=1e-12)

    def test_sr_matches_block_mean_oracle(self):
        spec = SyntheticSpec(height=16, width=16)
        video, _ = gen_synthetic(spec)
        out, _ = degrade(video, "sr4", seed=0)
        want = oracles.block_means(video[0].pixels[0], 4)
        np.testing.assert_allclose(out[0].pixels[0], want, atol=1e-12)

    def test_noise_sigma_statistics(self):
        sigma = 75.0 / 255.0
        video = [Frame(np.full((1, 256, 256), 0.5)) for _ in range(4)]
        out, _ = degrade(video, "denoise75", seed=0)
        resid = np.concatenate([o.pixels - 0.5 for o in out])
        assert resid.std() == pytest.approx(sigma, rel=0.02)

    def test_noise_differs_across_frames(self):
        video = [Frame(np.full((1, 32, 32), 0.5)) for _ in range(3)]
        out, _ = degrade(video, "denoise50", seed=0)
        assert not np.array_equal(out[0].pixels, out[1].pixels)

    def test_observations_not_clamped(self):
        video = [Frame(np.zeros((1, 64, 64))) for _ in range(2)]
        out, _ = degrade(video, "denoise75", seed=1)
        assert out[0].pixels.min() < 0.0

    def test_same_seed_reproducible(self):
        spec = SyntheticSpec(height=16, width=16)
        video, _ = gen_synthetic(spec)
        a, _ = degrade(video, "denoise50", seed=5)
        b, _ = degrade(video, "denoise50", seed=5)
        for fa, fb in zip(a, b):
            np.testing.assert_array_equal(fa.pixels, fb.pixels)

    def test_unknown_task_rejected(self):
        video = [Frame(np.zeros((1, 8, 8)))] * 2
        with pytest.raises(ValueError):
            degrade(video, "jpeg90", seed=0)
