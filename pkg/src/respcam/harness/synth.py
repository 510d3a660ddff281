"""Synthetic breathing clips with exact ground truth.

Renders a textured torso whose top edge (and the texture with it) rises and
falls sinusoidally at a chosen rate, next to a static head disk, over a dark
noisy background. Peak times, a perfect detection track, and the frames are
all derived from the same analytic motion, so the generator doubles as the
benchmark's desk-scale oracle.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.ndimage

from ..core import Box2D, ClipRef, FrameSequence, write_frames
from ..errors import ConfigurationError
from ..roi import DetectionEntry, DetectionTrack, write_detections
from ..signal import Band, PeakList, write_annotations

DEFAULT_WIDTH = 80
DEFAULT_HEIGHT = 64
DEFAULT_STRIDE = 10

_BACKGROUND = 18.0
_HEAD_VALUE = 130.0


def subject_band(bpm: float) -> Band | None:
    """Subject-specific band-pass bounds for a known resting rate.

    Subjects breathing at or below ~21 BPM sit at the default band's floor,
    where the annotation pulse train's second harmonic outweighs its
    attenuated fundamental and rate extraction doubles. Bracketing the rate
    from both sides keeps the fundamental dominant. Faster subjects work
    with the default band; None means no override.
    """
    if bpm >= 21.0:
        return None
    f = bpm / 60.0
    return Band(lo=max(0.1, 0.75 * f), hi=min(1.0, 1.9 * f))


def synth_clip(bpm: float, fps: float, duration: float, amplitude_px: float = 2.0,
               noise_sigma: float = 2.0 / 255.0, seed: int = 0,
               width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT,
               stride: int = DEFAULT_STRIDE,
               ) -> tuple[FrameSequence, PeakList, DetectionTrack]:
    """Render one clip; returns (frames, true peak times, detection track).

    ``noise_sigma`` is the Gaussian pixel noise level on a [0, 1] intensity
    scale. Bit-identical output for a fixed seed.
    """
    if not 12 <= bpm <= 80:
        raise ConfigurationError(f"bpm {bpm} outside the supported 12-80 range")
    if amplitude_px < 0.5:
        raise ConfigurationError(f"amplitude {amplitude_px} px is below detectable motion (0.5)")
    if fps <= 0 or duration <= 0:
        raise ConfigurationError("fps and duration must be positive")

    rng = np.random.default_rng(seed)
    freq = bpm / 60.0
    n_frames = round(duration * fps)

    # torso rectangle and head disk layout
    tx0, tx1 = 0.30 * width, 0.70 * width
    ty0, ty1 = 0.42 * height, 0.88 * height
    head_cx, head_cy = 0.5 * width, 0.25 * height
    head_r = 0.09 * min(width, height)

    pad = int(np.ceil(amplitude_px)) + 2
    atlas = scipy.ndimage.gaussian_filter(
        rng.uniform(40.0, 215.0, size=(height + 2 * pad, width)), 1.2
    )

    yy, xx = np.meshgrid(np.arange(height, dtype=np.float64),
                         np.arange(width, dtype=np.float64), indexing="ij")
    cover_x = np.clip(xx - tx0 + 0.5, 0, 1) * np.clip(tx1 - xx + 0.5, 0, 1)
    cover_bottom = np.clip(ty1 - yy + 0.5, 0, 1)
    head_alpha = np.clip(head_r - np.hypot(xx - head_cx, yy - head_cy) + 0.5, 0, 1)

    frames = np.empty((n_frames, height, width), dtype=np.uint8)
    for t in range(n_frames):
        shift = amplitude_px * np.sin(2.0 * np.pi * freq * t / fps)
        top = ty0 - shift
        # texture rides with the top edge (vertical translation by `shift`)
        tex = scipy.ndimage.map_coordinates(
            atlas, [yy + pad - shift, xx], order=1, mode="nearest"
        )
        alpha = cover_x * cover_bottom * np.clip(yy - top + 0.5, 0, 1)
        img = _BACKGROUND + alpha * (tex - _BACKGROUND)
        img = img * (1.0 - head_alpha) + _HEAD_VALUE * head_alpha
        img = img + rng.normal(0.0, noise_sigma * 255.0, size=img.shape)
        frames[t] = np.clip(np.rint(img), 0, 255).astype(np.uint8)

    seq = FrameSequence(frames=frames, fps=fps, color_mode="ir")

    # expansion maxima: sin peaks at (k + 1/4) periods
    peak_times = []
    k = 0
    while True:
        t = (0.25 + k) / freq
        if t >= duration:
            break
        peak_times.append(t)
        k += 1
    peaks = PeakList(timestamps=tuple(peak_times))

    body = Box2D(tx0 - 3.0, ty0 - amplitude_px - 3.0, (tx1 - tx0) + 6.0,
                 (ty1 - ty0) + amplitude_px + 6.0).clamped(width, height)
    face = Box2D(head_cx - head_r - 2.0, head_cy - head_r - 2.0,
                 2.0 * head_r + 4.0, 2.0 * head_r + 4.0).clamped(width, height)
    indices = list(range(0, n_frames, stride))
    if indices[-1] != n_frames - 1:
        indices.append(n_frames - 1)
    track = DetectionTrack(
        entries=tuple(
            DetectionEntry(frame=i, body=body, body_conf=0.98, face=face, face_conf=0.9)
            for i in indices
        ),
        stride=stride,
        image_w=width,
        image_h=height,
    )
    return seq, peaks, track


def write_synth_clip(out_dir: str | Path, ref: ClipRef, seq: FrameSequence,
                     peaks: PeakList, track: DetectionTrack) -> dict[str, str]:
    """Write frames/, detections.json, annotations.json under out_dir.

    Peak times are quantized to the clip's frame grid in the annotation
    file, exactly as manual annotation tools emit them.
    """
    out_dir = Path(out_dir)
    frames_dir = out_dir / "frames"
    write_frames(frames_dir, seq, ref)
    det_path = out_dir / "detections.json"
    write_detections(det_path, track)
    ann_path = out_dir / "annotations.json"
    peak_frames = [round(t * seq.fps) for t in peaks.timestamps]
    write_annotations(ann_path, ref.clip_id, seq.fps, peak_frames)
    return {
        "frames": str(frames_dir),
        "detections": str(det_path),
        "annotations": str(ann_path),
    }
