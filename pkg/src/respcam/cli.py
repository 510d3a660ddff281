"""Command-line client for the respcam service.

Every subcommand is a thin wrapper over one API endpoint. By default the
service runs in-process; pass --server (or set RESPCAM_SERVER) to talk to a
running instance instead.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .service.client import open_client


def _post(ctx, path: str, payload: dict) -> dict:
    with open_client(ctx.obj) as client:
        resp = client.post(path, json=payload)
    if resp.status_code >= 400:
        try:
            detail = resp.json()
        except ValueError:
            detail = resp.text
        click.echo(f"error ({resp.status_code}): {json.dumps(detail)}", err=True)
        sys.exit(1)
    return resp.json()


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _write_json(path: str, data: dict) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


@click.group()
@click.option("--server", envvar="RESPCAM_SERVER", default=None,
              help="Base URL of a running respcam service; default runs in-process.")
@click.pass_context
def main(ctx, server):
    ctx.obj = server


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


@main.command()
@click.option("--frames", required=True, help="Frame directory with meta.json.")
@click.option("--detections", required=True, help="Detection JSON file.")
@click.option("--annotations", default=None, help="Annotation JSON (loopback predictor only).")
@click.option("--config", "config_path", default=None, help="Pipeline config JSON file.")
@click.option("--out-waveform", default=None, help="Write the post-processed waveform CSV here.")
@click.option("--out-rate", default=None, help="Write the rate record JSON here.")
@click.option("--flow-dump", default=None, help="Write the clip's flow fields to this binary file.")
@click.pass_context
def estimate(ctx, frames, detections, annotations, config_path, out_waveform, out_rate, flow_dump):
    """Estimate the respiration waveform and rate for one clip."""
    payload = {
        "frames_dir": frames,
        "detections": detections,
        "annotations": annotations,
        "config": _load_config(config_path),
        "include_waveform": out_waveform is not None,
        "flow_dump": flow_dump,
    }
    data = _post(ctx, "/estimate", payload)
    rate = data["rate"]
    if out_rate:
        _write_json(out_rate, rate)
    if out_waveform and data.get("waveform"):
        import numpy as np

        from .signal import Waveform, write_waveform_csv

        wf = data["waveform"]
        write_waveform_csv(out_waveform, Waveform(samples=np.array(wf["samples"]), fs=wf["fs"]))
    bpm = rate["bpm"]
    click.echo(f"{rate['subject_id']}/{rate['clip_id']}: "
               + (f"{bpm:.2f} BPM ({rate['n_peaks']} peaks)" if bpm is not None
                  else f"no rate ({'; '.join(rate['stage_errors'])})"))


@main.command()
@click.option("--out", required=True, help="Output directory for the clip.")
@click.option("--bpm", type=float, required=True)
@click.option("--fps", type=float, default=10.0, show_default=True)
@click.option("--duration", type=float, default=60.0, show_default=True)
@click.option("--amplitude", type=float, default=2.0, show_default=True,
              help="Breathing motion amplitude in pixels.")
@click.option("--noise", type=float, default=2.0 / 255.0, show_default=True,
              help="Gaussian pixel noise sigma on a 0-1 scale.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--width", type=int, default=80, show_default=True)
@click.option("--height", type=int, default=64, show_default=True)
@click.option("--subject", default="S01", show_default=True)
@click.option("--clip", default="clip01", show_default=True)
@click.pass_context
def synth(ctx, out, bpm, fps, duration, amplitude, noise, seed, width, height, subject, clip):
    """Generate a synthetic breathing clip with ground truth."""
    data = _post(ctx, "/synth", {
        "out_dir": out, "bpm": bpm, "fps": fps, "duration_s": duration,
        "amplitude_px": amplitude, "noise_sigma": noise, "seed": seed,
        "width": width, "height": height, "subject_id": subject, "clip_id": clip,
    })
    click.echo(f"wrote {data['n_frames']} frames, {data['n_peaks']} peaks under {out}")


@main.command("eval")
@click.option("--manifest", required=True, help="Dataset manifest JSON.")
@click.option("--config", "config_path", default=None, help="Pipeline config JSON file.")
@click.option("--k", type=int, default=6, show_default=True, help="Number of folds.")
@click.option("--sizes", default="12,3,3", show_default=True,
              help="train,val,test subject counts per fold.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-report", required=True, help="Write the evaluation report JSON here.")
@click.option("--plots-dir", default=None, help="Optional directory for SVG plots.")
@click.option("--loopback", is_flag=True, help="Feed ground truth through the pipeline (sanity mode).")
@click.option("--subjects", default=None,
              help="Comma-separated subject subset (training-set-size style studies).")
@click.pass_context
def eval_cmd(ctx, manifest, config_path, k, sizes, seed, out_report, plots_dir, loopback, subjects):
    """Cross-validated benchmark evaluation over a manifest."""
    tr, va, te = (int(s) for s in sizes.split(","))
    data = _post(ctx, "/eval", {
        "manifest": manifest,
        "config": _load_config(config_path),
        "folds": {"subjects": [], "k": k, "sizes": [tr, va, te], "seed": seed},
        "loopback": loopback,
        "plots_dir": plots_dir,
        "restrict_subjects": None if subjects is None else subjects.split(","),
    })
    report = data["report"]
    Path(out_report).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    overall = report["overall"]
    rho = overall["rho"]
    click.echo(
        f"overall: MAE={overall['mae']:.3f} RMSE={overall['rmse']:.3f} "
        f"rho={'n/a' if rho is None else f'{rho:.3f}'} "
        f"(excluded clips: {report['n_excluded_clips']})"
    )
    for p in data.get("plots", []):
        click.echo(f"plot: {p}")


@main.command()
@click.option("--n-subjects", type=int, default=None, help="Number of subjects (ids generated).")
@click.option("--subjects", default=None, help="Comma-separated subject ids.")
@click.option("--n-train", type=int, default=3, show_default=True)
@click.option("--n-val", type=int, default=1, show_default=True)
@click.option("--out", default=None, help="Write the split list JSON here.")
@click.option("--plot-values", default=None,
              help="JSON array of per-split metric values to plot as a distribution.")
@click.option("--plots-dir", default=None, help="Directory for the distribution SVG.")
@click.pass_context
def splits(ctx, n_subjects, subjects, n_train, n_val, out, plot_values, plots_dir):
    """Enumerate every train/val/test split."""
    payload = {"n_train": n_train, "n_val": n_val}
    if subjects is not None:
        payload["subjects"] = subjects.split(",")
    else:
        payload["n_subjects"] = n_subjects
    data = _post(ctx, "/splits", payload)
    if out:
        _write_json(out, data)
    click.echo(f"{data['count']} splits")
    if plot_values and plots_dir:
        from .harness.plots import split_mae_distribution

        values = json.loads(Path(plot_values).read_text())
        out_svg = Path(plots_dir) / "split_mae_distribution.svg"
        out_svg.parent.mkdir(parents=True, exist_ok=True)
        split_mae_distribution(values, out_svg)
        click.echo(f"plot: {out_svg}")


@main.command()
@click.option("--subjects", required=True, help="Comma-separated subject ids.")
@click.option("--k", type=int, default=6, show_default=True)
@click.option("--sizes", default="12,3,3", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", default=None, help="Write the fold list JSON here.")
@click.pass_context
def folds(ctx, subjects, k, sizes, seed, out):
    """Build subject-wise cross-validation folds."""
    tr, va, te = (int(s) for s in sizes.split(","))
    data = _post(ctx, "/folds", {
        "subjects": subjects.split(","), "k": k, "sizes": [tr, va, te], "seed": seed,
    })
    if out:
        _write_json(out, data)
    for f in data["folds"]:
        click.echo(f"fold {f['fold_index']}: test={','.join(f['test'])} val={','.join(f['val'])}")


if __name__ == "__main__":
    main()
