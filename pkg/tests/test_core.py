from __future__ import annotations

import json

import numpy as np
import pytest
from PIL import Image

from respcam.core import (
    Box2D,
    ClipRef,
    FrameSequence,
    crop_clamped,
    load_frames,
    resample_fps,
    round_half_up,
    write_frames,
)
from respcam.errors import (
    ConfigurationError,
    DegenerateBoxError,
    FormatError,
    InsufficientDataError,
)


def make_seq(n=10, h=8, w=12, fps=10.0, seed=0):
    rng = np.random.default_rng(seed)
    frames = rng.integers(0, 256, size=(n, h, w), dtype=np.uint8)
    return FrameSequence(frames=frames, fps=fps, color_mode="ir")


class TestBox2D:
    def test_negative_extent_rejected(self):
        with pytest.raises(DegenerateBoxError):
            Box2D(0, 0, -1, 5)

    def test_center_and_clamp(self):
        box = Box2D(-5, 90, 20, 20)
        assert box.center == (5, 100)
        clamped = box.clamped(100, 100)
        assert (clamped.x, clamped.y) == (0, 90)
        assert (clamped.w, clamped.h) == (15, 10)

    def test_scaled_about_center(self):
        box = Box2D(10, 10, 20, 10).scaled_about_center(2.0)
        assert (box.x, box.y, box.w, box.h) == (0, 5, 40, 20)


class TestRoundHalfUp:
    @pytest.mark.parametrize("v,expected", [(0.5, 1), (1.5, 2), (2.4, 2), (-0.5, 0), (-1.5, -1)])
    def test_half_goes_up(self, v, expected):
        assert round_half_up(v) == expected


class TestLoadFrames:
    def write_dir(self, path, frames, fps=10.0, shuffle=False):
        path.mkdir(parents=True, exist_ok=True)
        order = list(range(len(frames)))
        if shuffle:
            order = order[::-1]
        for i in order:
            Image.fromarray(frames[i]).save(path / f"frame_{i:06d}.png")
        (path / "meta.json").write_text(json.dumps({
            "fps": fps, "color_mode": "ir", "subject_id": "S01", "clip_id": "c1",
        }))

    def test_loads_in_filename_order(self, tmp_path):
        frames = [np.full((4, 4), i, dtype=np.uint8) for i in range(5)]
        self.write_dir(tmp_path / "d", frames, shuffle=True)
        seq = load_frames(tmp_path / "d")
        assert len(seq) == 5
        assert seq.fps == 10.0
        assert [f.max() for f in seq.frames] == [0, 1, 2, 3, 4]

    def test_single_frame_rejected(self, tmp_path):
        self.write_dir(tmp_path / "d", [np.zeros((4, 4), dtype=np.uint8)])
        with pytest.raises(InsufficientDataError):
            load_frames(tmp_path / "d")

    def test_mixed_dimensions_rejected(self, tmp_path):
        frames = [np.zeros((4, 4), dtype=np.uint8), np.zeros((6, 4), dtype=np.uint8)]
        self.write_dir(tmp_path / "d", frames)
        with pytest.raises(FormatError):
            load_frames(tmp_path / "d")

    def test_missing_meta_rejected(self, tmp_path):
        d = tmp_path / "d"
        self.write_dir(d, [np.zeros((4, 4), dtype=np.uint8)] * 3)
        (d / "meta.json").unlink()
        with pytest.raises(ConfigurationError):
            load_frames(d)

    def test_write_read_round_trip(self, tmp_path):
        seq = make_seq(n=4)
        ref = ClipRef(subject_id="S07", clip_id="c9", fps=10.0, color_mode="ir")
        write_frames(tmp_path / "clip", seq, ref)
        loaded = load_frames(tmp_path / "clip")
        assert np.array_equal(loaded.frames, seq.frames)
        assert loaded.color_mode == "ir"


class TestCropClamped:
    def test_interior_crop_is_identity(self):
        frame = np.arange(100 * 100, dtype=np.int64).reshape(100, 100) % 256
        frame = frame.astype(np.uint8)
        out = crop_clamped(frame, Box2D(10, 10, 20, 20))
        assert out.shape == (20, 20)
        assert np.array_equal(out, frame[10:30, 10:30])
        assert out.sum() == frame[10:30, 10:30].sum()

    def test_out_of_bounds_region_is_zero(self):
        frame = np.full((100, 100), 7, dtype=np.uint8)
        out = crop_clamped(frame, Box2D(90, 90, 20, 20))
        assert out.shape == (20, 20)
        assert np.array_equal(out[:10, :10], frame[90:, 90:])
        assert np.all(out[10:, :] == 0)
        assert np.all(out[:, 10:] == 0)

    def test_degenerate_box_rejected(self):
        frame = np.zeros((10, 10), dtype=np.uint8)
        with pytest.raises(DegenerateBoxError):
            crop_clamped(frame, Box2D(0, 0, 0, 5))

    def test_fractional_box_rounds_half_up(self):
        frame = np.arange(64, dtype=np.uint8).reshape(8, 8)
        out = crop_clamped(frame, Box2D(1.5, 0.4, 2.5, 3.6))
        assert out.shape == (4, 3)
        assert np.array_equal(out, frame[0:4, 2:5])

    def test_color_frames(self):
        frame = np.zeros((10, 10, 3), dtype=np.uint8)
        frame[2:4, 2:4] = (1, 2, 3)
        out = crop_clamped(frame, Box2D(2, 2, 2, 2))
        assert out.shape == (2, 2, 3)
        assert np.all(out == (1, 2, 3))


def nearest_index_oracle(n_in, fps_in, n_out, fps_out):
    """Nearest source timestamp per output sample; ties go to the later frame."""
    out = []
    for j in range(n_out):
        t = j / fps_out
        best, best_d = 0, float("inf")
        for i in range(n_in):
            d = abs(i / fps_in - t)
            if d < best_d or (d == best_d and i > best):
                best, best_d = i, d
        out.append(best)
    return out


class TestResampleFps:
    def test_same_rate_is_identity(self):
        seq = make_seq(n=20)
        out = resample_fps(seq, 10.0)
        assert out is seq

    def test_integer_decimation(self):
        seq = make_seq(n=600, fps=30.0)
        out = resample_fps(seq, 10.0)
        assert len(out) == 200
        assert np.array_equal(out.frames, seq.frames[::3])

    def test_upsampling_matches_timestamp_oracle(self):
        seq = make_seq(n=100, fps=10.0)
        out = resample_fps(seq, 15.0)
        assert len(out) == 150
        idx = nearest_index_oracle(100, 10.0, 150, 15.0)
        assert np.array_equal(out.frames, seq.frames[idx])

    def test_idempotent_at_same_rate(self):
        seq = make_seq(n=100, fps=10.0)
        once = resample_fps(seq, 15.0)
        twice = resample_fps(once, 15.0)
        assert np.array_equal(once.frames, twice.frames)

    def test_bad_target_rejected(self):
        with pytest.raises(ConfigurationError):
            resample_fps(make_seq(), 0.0)


class TestFrameSequence:
    def test_needs_two_frames(self):
        with pytest.raises(InsufficientDataError):
            FrameSequence(frames=np.zeros((1, 4, 4), dtype=np.uint8), fps=10.0)

    def test_luma_of_mono_is_identity(self):
        seq = make_seq(n=3)
        assert np.array_equal(seq.luma(), seq.frames.astype(np.float64))

    def test_rgb_replicates_mono(self):
        seq = make_seq(n=3)
        rgb = seq.rgb()
        assert rgb.shape == (3, 8, 12, 3)
        assert np.array_equal(rgb[..., 0], rgb[..., 2])
