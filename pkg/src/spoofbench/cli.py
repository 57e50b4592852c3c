"""Command-line surface wiring the full pipeline.

Subcommands: vad, present, pool, detect, eval, det, init-weights.
All commands exit 0 on success and 1 when any per-item failure was
recorded; partial results are still written.  Entry-level randomness is
seeded per utterance from the global seed, so results do not depend on
--parallelism or processing order.
"""

from __future__ import annotations

import datetime
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import click

from .audio import (
    detect_voice,
    load_wav,
    net_speech_prefix,
    net_speech_seconds,
    resample,
    save_wav,
    trim_nonspeech,
)
from .config import RunConfig, load_run_config
from .corpus import MIN_NET_SPEECH_S, PoolSpec, build_pool, read_manifest, write_manifest
from .detector.model import DetectorConfig, detector_forward, init_parameters, score
from .detector.params import load_parameters, save_parameters
from .features import log_mel
from .metrics import (
    EvalProtocol,
    TrialScore,
    checkpoint_eval,
    checkpoint_reports,
    det_curve,
    per_dataset_eval,
    pooled_eval,
    read_scores_csv,
    write_det_csv,
    write_scores_csv,
)
from .presentation import ChannelConfig, present
from .seeding import derive_seed


def _map_entries(fn, items, workers: int):
    """Apply fn to items, optionally in a thread pool; order is preserved."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _report_failures(failures) -> bool:
    for name, msg in failures:
        click.echo(f"error: {name}: {msg}", err=True)
    return bool(failures)


@click.group()
@click.option(
    "--config",
    "config_path",
    envvar="SPOOFBENCH_CONFIG",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="JSON run configuration (defaults apply when omitted).",
)
@click.pass_context
def main(ctx, config_path):
    """Deepfake-detection evaluation toolkit."""
    ctx.obj = load_run_config(config_path)


@main.command("vad")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--trim-dir", type=click.Path(file_okay=False), default=None)
@click.option("--parallelism", type=int, default=None)
@click.pass_obj
def cmd_vad(cfg: RunConfig, in_path, out_path, trim_dir, parallelism):
    """Fill net_speech_s for each manifest entry; optionally write trimmed WAVs."""
    entries = read_manifest(in_path)
    if trim_dir:
        Path(trim_dir).mkdir(parents=True, exist_ok=True)

    def process(entry):
        try:
            clip = resample(load_wav(entry.path), cfg.sample_rate_hz)
            mask = detect_voice(clip, cfg.vad)
            updated = replace(entry, net_speech_s=net_speech_seconds(mask))
            if trim_dir:
                trimmed_path = Path(trim_dir) / f"{entry.utt_id}.wav"
                save_wav(trim_nonspeech(clip, mask), trimmed_path)
                updated = replace(updated, path=str(trimmed_path))
            return updated, None
        except Exception as exc:  # per-entry failure, keep going
            return None, (entry.utt_id, str(exc))

    results = _map_entries(process, entries, parallelism or cfg.parallelism)
    ok = sorted((e for e, _ in results if e is not None), key=lambda e: e.utt_id)
    failures = [f for _, f in results if f is not None]
    write_manifest(ok, out_path)
    if _report_failures(failures):
        sys.exit(1)


@main.command("present")
@click.option("--jobs", "jobs_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="Global seed (default from config).")
@click.option("--parallelism", type=int, default=None)
@click.pass_obj
def cmd_present(cfg: RunConfig, jobs_path, seed, parallelism):
    """Run presentation jobs from a JSON Lines file.

    Job fields: input, output, path, codec, gain_db, snr_db, ir, seed,
    utt_id.  Per-job seed defaults to hash(global seed, utt_id); utt_id
    defaults to the input file stem.
    """
    global_seed = cfg.global_seed if seed is None else seed
    jobs = []
    with open(jobs_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                jobs.append((lineno, json.loads(line)))

    def run(item):
        lineno, job = item
        name = job.get("utt_id") or Path(job.get("input", f"line {lineno}")).stem
        try:
            clip = resample(load_wav(job["input"]), cfg.sample_rate_hz)
            ir = None
            if job.get("ir"):
                ir = resample(load_wav(job["ir"]), cfg.sample_rate_hz)
            channel = ChannelConfig(
                path=job["path"],
                ir=ir,
                codec=job.get("codec", "none"),
                gain_db=job.get("gain_db", 0.0),
                noise_snr_db=job.get("snr_db"),
            )
            job_seed = job["seed"] if "seed" in job else derive_seed(global_seed, name)
            out = present(clip, channel, job_seed)
            Path(job["output"]).parent.mkdir(parents=True, exist_ok=True)
            save_wav(out, job["output"])
            return None
        except Exception as exc:
            return (name, str(exc))

    failures = [f for f in _map_entries(run, jobs, parallelism or cfg.parallelism) if f]
    if _report_failures(failures):
        sys.exit(1)


@main.command("pool")
@click.option("--manifests", "manifest_opts", multiple=True, type=click.Path(exists=True))
@click.option("--per-class", type=int, default=3000, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--min-net-speech", type=float, default=MIN_NET_SPEECH_S, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.argument("manifest_args", nargs=-1, type=click.Path(exists=True))
@click.pass_obj
def cmd_pool(cfg: RunConfig, manifest_opts, per_class, seed, min_net_speech, out_path, manifest_args):
    """Build the balanced pooled test set from per-dataset manifests."""
    paths = list(manifest_opts) + list(manifest_args)
    if not paths:
        raise click.UsageError("no manifests given")
    manifests = [read_manifest(p) for p in paths]
    spec = PoolSpec(
        per_class_per_dataset=per_class,
        seed=cfg.global_seed if seed is None else seed,
        min_net_speech_s=min_net_speech,
    )
    try:
        pool = build_pool(manifests, spec)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    write_manifest(pool, out_path)


@main.command("detect")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--weights", "weights_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option(
    "--checkpoints",
    default=None,
    is_flag=False,
    flag_value="config",
    help="Comma-separated net-speech checkpoints in seconds; bare flag uses the protocol defaults.",
)
@click.option("--parallelism", type=int, default=None)
@click.pass_obj
def cmd_detect(cfg: RunConfig, manifest_path, weights_path, out_path, checkpoints, parallelism):
    """Score manifest entries: VAD -> (checkpoint prefix) -> log-mel -> detector."""
    entries = read_manifest(manifest_path)
    store = load_parameters(weights_path)
    det_cfg = DetectorConfig.from_dict(store.config) if store.config else cfg.detector
    if checkpoints is None:
        cps = None
    elif checkpoints == "config":
        cps = cfg.protocol.checkpoints_s
    else:
        cps = tuple(float(c) for c in checkpoints.split(","))

    def process(entry):
        try:
            clip = resample(load_wav(entry.path), cfg.sample_rate_hz)
            mask = detect_voice(clip, cfg.vad)
            net = net_speech_seconds(mask)
            if net < MIN_NET_SPEECH_S:
                return [], None, f"{entry.utt_id}: skipped ({net:.2f}s net speech < {MIN_NET_SPEECH_S}s)"
            rows = []
            if cps is None:
                speech = trim_nonspeech(clip, mask)
                logits = detector_forward(log_mel(speech, cfg.features), store, det_cfg)
                rows.append(
                    TrialScore(entry.utt_id, entry.label, score(logits).s, entry.dataset, None)
                )
            else:
                for k in cps:
                    if k > net + 1e-9:
                        continue
                    speech = net_speech_prefix(clip, mask, k)
                    logits = detector_forward(log_mel(speech, cfg.features), store, det_cfg)
                    rows.append(
                        TrialScore(entry.utt_id, entry.label, score(logits).s, entry.dataset, k)
                    )
            return rows, None, None
        except Exception as exc:
            return [], (entry.utt_id, str(exc)), None

    results = _map_entries(process, entries, parallelism or cfg.parallelism)
    trials = [t for rows, _, _ in results for t in rows]
    trials.sort(key=lambda t: (t.utt_id, t.checkpoint_s if t.checkpoint_s is not None else -1.0))
    write_scores_csv(trials, out_path)
    for _, _, note in results:
        if note:
            click.echo(note, err=True)
    failures = [f for _, f, _ in results if f is not None]
    if _report_failures(failures):
        sys.exit(1)


def _full_length(trials):
    full = [t for t in trials if t.checkpoint_s is None]
    return full if full else trials


@main.command("eval")
@click.option("--scores", "scores_path", required=True, type=click.Path(exists=True))
@click.option("--far", "far_target", type=float, default=0.01, show_default=True)
@click.option("--pooled", is_flag=True)
@click.option("--per-dataset", is_flag=True)
@click.option("--checkpoint-avg", is_flag=True)
@click.option("--no-timestamp", is_flag=True, help="Omit generated_at from the report.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_obj
def cmd_eval(cfg: RunConfig, scores_path, far_target, pooled, per_dataset, checkpoint_avg, no_timestamp, out_path):
    """Compute EER / MDR@FAR reports from a score CSV."""
    trials = read_scores_csv(scores_path)
    report: dict = {"far_target": far_target}
    if not (pooled or per_dataset or checkpoint_avg):
        pooled = True
    try:
        if pooled:
            report["pooled"] = pooled_eval(_full_length(trials), far_target).to_dict()
        if per_dataset:
            by_ds, average = per_dataset_eval(_full_length(trials), far_target)
            report["per_dataset"] = {ds: r.to_dict() for ds, r in by_ds.items()}
            report["per_dataset_average"] = average.to_dict()
        if checkpoint_avg:
            cp_trials = [t for t in trials if t.checkpoint_s is not None]
            report["checkpoint_avg"] = checkpoint_eval(cp_trials, cfg.protocol, far_target).to_dict()
            report["per_checkpoint"] = {
                f"{cp:g}": r.to_dict()
                for cp, r in checkpoint_reports(cp_trials, cfg.protocol, far_target).items()
            }
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    if not no_timestamp:
        report["generated_at"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    Path(out_path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


@main.command("det")
@click.option("--scores", "scores_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def cmd_det(scores_path, out_path):
    """Emit the DET-curve staircase as CSV (threshold, far, mdr)."""
    trials = read_scores_csv(scores_path)
    try:
        curve = det_curve(_full_length(trials))
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    write_det_csv(curve, out_path)


@main.command("init-weights")
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_obj
def cmd_init_weights(cfg: RunConfig, seed, out_path):
    """Write a freshly initialized weight file for the configured detector."""
    store = init_parameters(cfg.detector, cfg.global_seed if seed is None else seed)
    save_parameters(store, out_path)


if __name__ == "__main__":
    main()
