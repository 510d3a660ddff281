"""Batch evaluation: run the estimator over a manifest's test folds.

Ground-truth rates are derived by pushing the annotation waveform through
exactly the same detrend/band-pass/peak path as predictions, so the two
sides are treated symmetrically. Clips for which either side yields no rate
are recorded and excluded from the per-subject statistics.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np

from ..core import load_frames
from ..errors import ConfigurationError, ManifestError, NoRateError
from ..estimator import PipelineConfig, estimate, postprocess
from ..roi import load_detections
from ..signal import eval_stats, load_annotations, waveform_from_peaks
from .folds import FoldSpec
from .manifest import DatasetManifest, ManifestClip

REPORT_SCHEMA = "resp-eval/1"


def config_fingerprint(cfg: PipelineConfig) -> str:
    return hashlib.sha256(
        json.dumps(dataclasses.asdict(cfg), sort_keys=True).encode()
    ).hexdigest()


def _mean_or_none(values: list[float]) -> float | None:
    usable = [v for v in values if v is not None]
    return float(np.mean(usable)) if usable else None


def _evaluate_clip(clip: ManifestClip, cfg: PipelineConfig) -> dict:
    seq = load_frames(clip.frames)
    if abs(seq.fps - clip.ref.fps) > 1e-9:
        raise ManifestError(
            f"{clip.ref.clip_id}: manifest fps {clip.ref.fps} != frames fps {seq.fps}"
        )
    track = load_detections(clip.detections)
    _, ann_fps, peaks = load_annotations(clip.annotations)
    band = clip.band or cfg.band
    record: dict = {
        "subject_id": clip.ref.subject_id,
        "clip_id": clip.ref.clip_id,
        "pred_bpm": None,
        "truth_bpm": None,
        "n_peaks": 0,
        "stage_errors": [],
    }

    truth_wave = waveform_from_peaks(peaks, fs=ann_fps, sigma=cfg.sigma, duration=seq.duration)
    try:
        _, _, truth_bpm = postprocess(
            truth_wave, band, cfg.detrend_lambda, differenced=False
        )
        record["truth_bpm"] = truth_bpm
    except NoRateError as e:
        record["stage_errors"].append(f"truth: {e}")

    try:
        result = estimate(seq, track, cfg, annotations=peaks, band=band)
        record["pred_bpm"] = result.bpm
        record["n_peaks"] = result.n_peaks
    except NoRateError as e:
        record["stage_errors"].append(f"{e.stage or 'peaks'}: {e}")

    record["excluded"] = record["pred_bpm"] is None or record["truth_bpm"] is None
    return record


def evaluate(manifest: DatasetManifest, folds: list[FoldSpec], cfg: PipelineConfig,
             loopback: bool = False) -> dict:
    """Evaluate every fold's test subjects; returns the report dict.

    ``loopback`` swaps the configured predictor for the annotation-fed
    loopback predictor, which must reproduce the ground-truth rates exactly
    (the sanity mode for the harness itself).
    """
    if loopback:
        cfg = dataclasses.replace(cfg, predictor="loopback")
    subjects_available = set(manifest.subjects())
    for fold in folds:
        if not fold.test:
            raise ConfigurationError(f"fold {fold.fold_index} has an empty test set")
        missing = set(fold.test) - subjects_available
        if missing:
            raise ManifestError(f"fold {fold.fold_index} tests unknown subjects {sorted(missing)}")

    clip_cache: dict[tuple[str, str], dict] = {}
    fold_reports = []
    all_clip_records = []
    for fold in folds:
        subject_rows = {}
        for sid in sorted(fold.test):
            preds, truths = [], []
            n_excluded = 0
            for clip in manifest.by_subject(sid):
                key = (sid, clip.ref.clip_id)
                if key not in clip_cache:
                    clip_cache[key] = _evaluate_clip(clip, cfg)
                record = clip_cache[key]
                all_clip_records.append({**record, "fold_index": fold.fold_index})
                if record["excluded"]:
                    n_excluded += 1
                    continue
                preds.append(record["pred_bpm"])
                truths.append(record["truth_bpm"])
            row = {"n_clips": len(preds), "n_excluded": n_excluded,
                   "mae": None, "rmse": None, "rho": None}
            if preds:
                mae, rmse, rho = eval_stats(preds, truths)
                row.update({"mae": mae, "rmse": rmse, "rho": rho})
            subject_rows[sid] = row

        scored = [r for r in subject_rows.values() if r["mae"] is not None]
        fold_reports.append({
            "fold_index": fold.fold_index,
            "train": list(fold.train),
            "val": list(fold.val),
            "test": list(fold.test),
            "subjects": subject_rows,
            "mae": _mean_or_none([r["mae"] for r in scored]),
            "rmse": _mean_or_none([r["rmse"] for r in scored]),
            "rho": _mean_or_none([r["rho"] for r in scored]),
        })

    report = {
        "schema": REPORT_SCHEMA,
        "config_fingerprint": config_fingerprint(cfg),
        "loopback": loopback,
        "folds": fold_reports,
        "overall": {
            "mae": _mean_or_none([f["mae"] for f in fold_reports]),
            "rmse": _mean_or_none([f["rmse"] for f in fold_reports]),
            "rho": _mean_or_none([f["rho"] for f in fold_reports]),
        },
        "clips": sorted(
            all_clip_records,
            key=lambda r: (r["fold_index"], r["subject_id"], r["clip_id"]),
        ),
        "n_excluded_clips": sum(r["excluded"] for r in clip_cache.values()),
    }
    return report


def write_report(path: str | Path, report: dict) -> None:
    """Serialize deterministically: two runs with one config and seed write
    byte-identical files."""
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
