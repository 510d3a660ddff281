from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from respcam.core import Box2D, ClipRef, FrameSequence, write_frames
from respcam.harness import DatasetManifest, ManifestClip, synth_clip, write_manifest, write_synth_clip
from respcam.harness.synth import subject_band
from respcam.roi import DetectionEntry, DetectionTrack, write_detections
from respcam.signal import write_annotations

#: (subject, clip, bpm, seed) grid for the shared small dataset
SMALL_DATASET_SPEC = [
    ("S01", "c1", 18.0, 11), ("S01", "c2", 30.0, 12),
    ("S02", "c1", 24.0, 21), ("S02", "c2", 36.0, 22),
    ("S03", "c1", 40.0, 31), ("S03", "c2", 22.0, 32),
]


def build_dataset(root: Path, spec, fps=10.0, duration=20.0, amplitude=2.0) -> Path:
    clips = []
    for subject, clip_id, bpm, seed in spec:
        clip_dir = root / subject / clip_id
        seq, peaks, track = synth_clip(
            bpm=bpm, fps=fps, duration=duration, amplitude_px=amplitude,
            noise_sigma=2.0 / 255.0, seed=seed,
        )
        ref = ClipRef(subject_id=subject, clip_id=clip_id, fps=fps, color_mode="ir")
        paths = write_synth_clip(clip_dir, ref, seq, peaks, track)
        clips.append(ManifestClip(
            ref=ref,
            frames=Path(paths["frames"]),
            detections=Path(paths["detections"]),
            annotations=Path(paths["annotations"]),
            band=subject_band(bpm),
        ))
    manifest_path = root / "manifest.json"
    write_manifest(manifest_path, DatasetManifest(clips=tuple(clips)))
    return manifest_path


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory) -> Path:
    """3 subjects x 2 clips, 20 s at 10 fps; returns the manifest path."""
    root = tmp_path_factory.mktemp("small_dataset")
    return build_dataset(root, SMALL_DATASET_SPEC)


@pytest.fixture(scope="session")
def static_clip(tmp_path_factory) -> dict[str, str]:
    """A motionless clip: the pipeline must yield a no-rate outcome."""
    root = tmp_path_factory.mktemp("static_clip")
    frames = np.full((120, 48, 64), 90, dtype=np.uint8)
    seq = FrameSequence(frames=frames, fps=10.0, color_mode="ir")
    ref = ClipRef(subject_id="S99", clip_id="still", fps=10.0, color_mode="ir")
    frames_dir = write_frames(root / "frames", seq, ref)
    body = Box2D(10, 10, 40, 30)
    entries = tuple(
        DetectionEntry(frame=i, body=body, body_conf=0.9)
        for i in list(range(0, 120, 10)) + [119]
    )
    track = DetectionTrack(entries=entries, stride=10, image_w=64, image_h=48)
    det_path = root / "detections.json"
    write_detections(det_path, track)
    ann_path = root / "annotations.json"
    write_annotations(ann_path, "still", 10.0, [10, 40, 70, 100])
    return {
        "frames": str(frames_dir),
        "detections": str(det_path),
        "annotations": str(ann_path),
        "root": str(root),
    }
