"""Benchmark harness: folds, splits, synthetic clips, batch evaluation."""

from .evaluate import REPORT_SCHEMA, config_fingerprint, evaluate, write_report
from .folds import FoldSpec, enumerate_splits, make_folds
from .manifest import DatasetManifest, ManifestClip, load_manifest, write_manifest
from .synth import synth_clip, write_synth_clip

__all__ = [
    "REPORT_SCHEMA",
    "DatasetManifest",
    "FoldSpec",
    "ManifestClip",
    "config_fingerprint",
    "enumerate_splits",
    "evaluate",
    "load_manifest",
    "make_folds",
    "synth_clip",
    "write_manifest",
    "write_report",
    "write_synth_clip",
]
