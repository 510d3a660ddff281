"""FastAPI service wrapping the estimation pipeline and benchmark harness.

Paths in requests refer to the server's filesystem; the bundled CLI runs the
app in-process by default, so local workflows see one filesystem.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..core import ClipRef, clip_ref_from_meta, load_frames
from ..errors import ConfigurationError, NoRateError, RespcamError
from ..estimator import estimate, estimate_record
from ..flow import write_flow_dump
from ..harness import (
    FoldSpec,
    enumerate_splits,
    evaluate,
    load_manifest,
    make_folds,
    synth_clip,
    write_synth_clip,
)
from ..harness.plots import report_plots
from ..roi import load_detections
from ..signal import load_annotations
from . import schemas


def create_app() -> FastAPI:
    app = FastAPI(title="respcam", version=__version__)

    @app.exception_handler(RespcamError)
    async def respcam_error(request: Request, exc: RespcamError):
        return JSONResponse(
            status_code=422,
            content={
                "error": type(exc).__name__,
                "detail": str(exc),
                "stage": exc.stage,
            },
        )

    @app.exception_handler(FileNotFoundError)
    async def missing_file(request: Request, exc: FileNotFoundError):
        return JSONResponse(status_code=404, content={"error": "FileNotFoundError", "detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/estimate", response_model=schemas.EstimateResponse)
    def estimate_endpoint(req: schemas.EstimateRequest) -> schemas.EstimateResponse:
        cfg = req.config.to_config()
        seq = load_frames(req.frames_dir)
        ref = clip_ref_from_meta(req.frames_dir)
        track = load_detections(req.detections)
        annotations = None
        if req.annotations is not None:
            _, _, annotations = load_annotations(req.annotations)
        band = req.band.to_band() if req.band is not None else None

        if req.flow_dump is not None:
            try:
                result = estimate(seq, track, cfg, annotations=annotations, band=band,
                                  keep_flow=True)
                if result.flow_fields:
                    write_flow_dump(req.flow_dump, result.flow_fields)
                record = schemas.RateRecordModel(
                    clip_id=ref.clip_id, subject_id=ref.subject_id,
                    bpm=result.bpm, n_peaks=result.n_peaks,
                )
                wave = result.waveform
            except NoRateError as e:
                record = schemas.RateRecordModel(
                    clip_id=ref.clip_id, subject_id=ref.subject_id, bpm=None, n_peaks=0,
                    stage_errors=[f"{e.stage or 'peaks'}: {e}"],
                )
                wave = None
        else:
            rec, wave = estimate_record(
                seq, track, cfg, subject_id=ref.subject_id, clip_id=ref.clip_id,
                annotations=annotations, band=band,
            )
            record = schemas.RateRecordModel(**rec.to_dict())

        waveform = None
        if req.include_waveform and wave is not None:
            waveform = schemas.WaveformModel(fs=wave.fs, samples=[float(v) for v in wave.samples])
        return schemas.EstimateResponse(rate=record, waveform=waveform)

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth_endpoint(req: schemas.SynthRequest) -> schemas.SynthResponse:
        seq, peaks, track = synth_clip(
            bpm=req.bpm, fps=req.fps, duration=req.duration_s,
            amplitude_px=req.amplitude_px, noise_sigma=req.noise_sigma,
            seed=req.seed, width=req.width, height=req.height,
        )
        ref = ClipRef(subject_id=req.subject_id, clip_id=req.clip_id,
                      fps=req.fps, color_mode="ir")
        paths = write_synth_clip(Path(req.out_dir), ref, seq, peaks, track)
        return schemas.SynthResponse(
            frames=paths["frames"], detections=paths["detections"],
            annotations=paths["annotations"], n_frames=len(seq), n_peaks=len(peaks),
        )

    @app.post("/folds", response_model=schemas.FoldsResponse)
    def folds_endpoint(req: schemas.FoldsRequest) -> schemas.FoldsResponse:
        if not req.subjects:
            raise ConfigurationError("subjects must be non-empty")
        folds = make_folds(req.subjects, req.k, req.sizes, req.seed)
        return schemas.FoldsResponse(folds=[schemas.FoldModel(**f.to_dict()) for f in folds])

    @app.post("/splits", response_model=schemas.SplitsResponse)
    def splits_endpoint(req: schemas.SplitsRequest) -> schemas.SplitsResponse:
        if (req.n_subjects is None) == (req.subjects is None):
            raise ConfigurationError("provide exactly one of n_subjects or subjects")
        subjects = req.n_subjects if req.subjects is None else req.subjects
        splits = enumerate_splits(subjects, req.n_train, req.n_val)
        return schemas.SplitsResponse(
            count=len(splits),
            splits=[
                schemas.SplitModel(train=list(tr), val=list(va), test=list(te))
                for tr, va, te in splits
            ],
        )

    @app.post("/eval", response_model=schemas.EvalResponse)
    def eval_endpoint(req: schemas.EvalRequest) -> schemas.EvalResponse:
        manifest = load_manifest(req.manifest)
        if req.restrict_subjects is not None:
            manifest = manifest.restrict_subjects(set(req.restrict_subjects))
        cfg = req.config.to_config()
        if (req.folds is None) == (req.explicit_folds is None):
            raise ConfigurationError("provide exactly one of folds or explicit_folds")
        if req.folds is not None:
            subjects = req.folds.subjects or manifest.subjects()
            folds = make_folds(subjects, req.folds.k, req.folds.sizes, req.folds.seed)
        else:
            folds = [
                FoldSpec(fold_index=f.fold_index, train=tuple(f.train),
                         val=tuple(f.val), test=tuple(f.test))
                for f in req.explicit_folds
            ]
        report = evaluate(manifest, folds, cfg, loopback=req.loopback)
        plots: list[str] = []
        if req.plots_dir is not None:
            plots = [str(p) for p in report_plots(report, req.plots_dir)]
        return schemas.EvalResponse(report=report, plots=plots)

    return app


app = create_app()
