"""Batch command-line front end.

Exit codes: 0 success, 1 input or validation error, 2 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .audio import read_spans, read_wav, write_wav
from .embedding import (
    cluster_stats,
    fit_pca,
    group_mean_score,
    project,
    read_embeddings,
    replace_component,
    write_clusters,
    write_embeddings,
    write_model,
    write_scores,
)
from .intelligibility import METRICS, estoi_curve
from .plots import render_curve_svg, render_scatter_svg, render_vowel_space_svg
from .stats import (
    analyze_by_snr,
    read_trials,
    word_correct_rates,
    write_anova,
    write_participant_rates,
    write_rates,
    write_tukey,
)
from .stimulus import StimulusSpec, derive_seed, mix_at_snr, parse_snr, snr_label
from .vowels import read_annotations, vowel_formants, vowel_space_area, write_formants

log = logging.getLogger("intelkit")

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2
THREADS_ENV = "INTELKIT_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


FORMATS = """file formats (UTF-8 CSV, comma separated, header row required):
  manifest     utt_id,wav_path,spans_path   (paths relative to the manifest;
               spans_path may be empty where spans are not needed)
  spans        start_sec,end_sec
  annotations  utt_id,vowel,start_sec,end_sec   (vowel in a,e,i,o,u)
  embeddings   speaker_id,group,gender,e0,...,e{D-1}
               (group: announcer|non-expert, gender: male|female)
  trials       participant,word,snr_db,stimulus_type,correct
               (snr_db may be 'inf'; stimulus_type: non-expert|announcer|vc1|vc2;
               correct: 0|1)
WAV input: mono PCM16, PCM24 or float32."""


# ---------------------------------------------------------------- shared helpers

@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    wav_path: Path
    spans_path: Optional[Path]


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    base = path.parent
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"utt_id", "wav_path"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        entries = []
        for row in reader:
            spans = (row.get("spans_path") or "").strip()
            entries.append(ManifestEntry(row["utt_id"], base / row["wav_path"], base / spans if spans else None))
    ids = [e.utt_id for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate utt_id values")
    if not entries:
        raise ValueError(f"{path}: manifest is empty")
    return sorted(entries, key=lambda e: e.utt_id)


def parse_snr_list(text: str) -> list[float]:
    try:
        return [parse_snr(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ValueError(f"bad --snr list {text!r}: {exc}") from exc


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError(f"{THREADS_ENV} must be >= 0")
    return n or min(8, os.cpu_count() or 1)


def parallel_map(func, items):
    items = list(items)
    workers = min(worker_count(), len(items)) or 1
    if workers == 1:
        return [func(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


class OutputDir:
    """Creates the output directory and refuses to overwrite files unless forced."""

    def __init__(self, path, force: bool):
        self.root = Path(path)
        self.force = force
        self.root.mkdir(parents=True, exist_ok=True)

    def claim(self, names: Sequence[str]) -> None:
        if self.force:
            return
        taken = [n for n in names if (self.root / n).exists()]
        if taken:
            raise UsageError(f"refusing to overwrite {', '.join(taken)} in {self.root} (use --force)")

    def __truediv__(self, name: str) -> Path:
        return self.root / name


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path, data) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.10g}"


def _load_utterance(entry: ManifestEntry, need_spans: bool):
    clip = read_wav(entry.wav_path)
    if entry.spans_path is None:
        if need_spans:
            raise ValueError(f"manifest entry {entry.utt_id} has no spans_path")
        return clip, []
    return clip, read_spans(entry.spans_path)


# ------------------------------------------------------------------ subcommands

def cmd_mix(args) -> int:
    levels = parse_snr_list(args.snr)
    entries = read_manifest(args.manifest)
    out = OutputDir(args.out, args.force)
    names = ["mix_report.csv"]
    for e in entries:
        names.append(f"{e.utt_id}_clean.wav")
        names += [f"{e.utt_id}_snr{snr_label(s)}.wav" for s in levels]
    out.claim(names)
    subtype = {"float": "FLOAT", "pcm16": "PCM_16"}[args.format]

    def work(entry):
        clean, spans = _load_utterance(entry, need_spans=True)
        rows = []
        aligned = None
        for snr in levels:
            seed = derive_seed(args.seed, entry.utt_id, snr)
            spec = StimulusSpec(snr, args.lead, args.tail, args.gate, seed)
            stim = mix_at_snr(clean, spans, spec)
            aligned = stim.clean_aligned
            name = f"{entry.utt_id}_snr{snr_label(snr)}.wav"
            write_wav(out / name, stim.mixed, subtype)
            if stim.overflow:
                log.warning("%s: peak %.4f exceeds full scale (not clipped)", name, stim.peak)
            rows.append([entry.utt_id, snr_label(snr), str(seed), _fmt(stim.achieved_snr_db),
                         f"{stim.peak:.6f}", str(stim.overflow).lower(), name])
        if aligned is None:
            aligned = mix_at_snr(clean, spans, StimulusSpec(math.inf, args.lead, args.tail, args.gate)).clean_aligned
        write_wav(out / f"{entry.utt_id}_clean.wav", aligned, subtype)
        return rows

    rows = [r for chunk in parallel_map(work, entries) for r in chunk]
    _write_csv(out / "mix_report.csv",
               ["utt_id", "snr_db", "seed", "achieved_snr_db", "peak", "overflow", "wav_path"], rows)
    return EXIT_OK


def cmd_estoi(args) -> int:
    clean = read_wav(args.clean)
    degraded = read_wav(args.degraded)
    score = METRICS[args.metric](clean, degraded)
    print(json.dumps(score.to_dict()))
    return EXIT_OK


def cmd_curve(args) -> int:
    levels = parse_snr_list(args.snr)
    entries = read_manifest(args.manifest)
    out = OutputDir(args.out, args.force)
    names = ["curve.csv", "curve_by_utt.csv"] + (["curve.svg"] if args.svg else [])
    out.claim(names)

    def work(entry):
        clean, spans = _load_utterance(entry, need_spans=True)
        return entry.utt_id, estoi_curve(clean, spans, levels, args.seed, utt_id=entry.utt_id,
                                         lead_sec=args.lead, tail_sec=args.tail, gate_sec=args.gate)

    results = parallel_map(work, entries)
    by_utt = [[utt, snr_label(snr), f"{score:.10g}"] for utt, curve in results for snr, score in curve]
    _write_csv(out / "curve_by_utt.csv", ["utt_id", "snr_db", "estoi"], by_utt)
    means = []
    for i, snr in enumerate(levels):
        means.append((snr, math.fsum(curve[i][1] for _, curve in results) / len(results)))
    _write_csv(out / "curve.csv", ["snr_db", "estoi"], [[snr_label(s), f"{v:.10g}"] for s, v in means])
    if args.svg and means:
        render_curve_svg({args.label or Path(args.manifest).stem: means}, out / "curve.svg",
                         title="Average eSTOI")
    return EXIT_OK


def cmd_vowels(args) -> int:
    entries = {e.utt_id: e for e in read_manifest(args.manifest)}
    annotations = read_annotations(args.annotations)
    unknown = sorted({a.utt_id for a in annotations} - set(entries))
    if unknown:
        raise ValueError(f"annotations reference utterances missing from the manifest: {', '.join(unknown)}")
    out = OutputDir(args.out, args.force)
    out.claim(["formants.csv", "vowel_space.json"] + (["vowel_space.svg"] if args.svg else []))

    def work(utt_id):
        clip = read_wav(entries[utt_id].wav_path)
        return vowel_formants(clip, [a for a in annotations if a.utt_id == utt_id])

    samples = [s for chunk in parallel_map(work, sorted({a.utt_id for a in annotations})) for s in chunk]
    write_formants(out / "formants.csv", samples)
    polygon = vowel_space_area(samples)
    _write_json(out / "vowel_space.json", polygon.to_dict())
    if args.svg:
        render_vowel_space_svg({args.label or "vowel space": polygon}, out / "vowel_space.svg")
    return EXIT_OK


def cmd_pca(args) -> int:
    data = read_embeddings(args.embeddings, expect_dim=args.expect_dim)
    out = OutputDir(args.out, args.force)
    names = ["scores.csv", "model.json", "clusters.json"]
    if args.replace_speaker:
        names += ["modified_embeddings.csv", "replacement.json"]
    if args.svg:
        names.append("pca.svg")
    out.claim(names)

    model = fit_pca(data, args.n_components)
    write_model(out / "model.json", model)
    write_scores(out / "scores.csv", model, data)
    clusters = cluster_stats(model, data) if model.n_components >= 2 else []
    write_clusters(out / "clusters.json", clusters)

    if args.replace_speaker:
        k = args.component - 1
        target = group_mean_score(model, data, k, group=args.target_group, gender=args.target_gender)
        mask = data.select(speaker_id=args.replace_speaker)
        if not mask.any():
            raise ValueError(f"speaker {args.replace_speaker!r} not found in {args.embeddings}")
        modified = data.vectors.copy()
        modified[mask] = replace_component(model, data.vectors[mask], k, target)
        write_embeddings(out / "modified_embeddings.csv", data, np.flatnonzero(mask), modified)
        _write_json(out / "replacement.json", {
            "speaker_id": args.replace_speaker,
            "component": args.component,
            "target_group": args.target_group,
            "target_gender": args.target_gender,
            "target_score": target,
            "n_items": int(mask.sum()),
            "scores_before": project(model, data.vectors[mask])[:, k].tolist(),
        })
    if args.svg and model.n_components >= 2:
        scores = project(model, data.vectors)
        points = [(f"{g}/{s}", float(p[0]), float(p[1]))
                  for g, s, p in zip(data.groups, data.genders, scores)]
        ellipses = [(f"{c.group}/{c.gender}", c.centroid, c.covariance) for c in clusters]
        render_scatter_svg(points, out / "pca.svg", ellipses, title="Speaker embeddings")
    return EXIT_OK


def cmd_stats(args) -> int:
    trials = read_trials(args.trials)
    out = OutputDir(args.out, args.force)
    out.claim(["rates.csv", "participant_rates.csv", "anova.csv", "tukey.csv"] + (["rates.svg"] if args.svg else []))
    table = word_correct_rates(trials)
    analyses = analyze_by_snr(table, args.alpha)
    write_rates(out / "rates.csv", table)
    write_participant_rates(out / "participant_rates.csv", table)
    write_anova(out / "anova.csv", analyses)
    write_tukey(out / "tukey.csv", analyses)
    if args.svg:
        series = {}
        for s in table.summary:
            series.setdefault(s.stimulus_type, []).append((s.snr_db, s.mean))
        render_curve_svg(series, out / "rates.svg", title="Word correct rate", ylabel="correct rate")
    return EXIT_OK


def cmd_version(args) -> int:
    print(f"intelkit {__version__}")
    return EXIT_OK


# ------------------------------------------------------------------------ parser

def _add_out(p, svg=False):
    p.add_argument("--out", required=True, help="output directory (created if absent)")
    p.add_argument("--force", action="store_true", help="overwrite existing output files")
    if svg:
        p.add_argument("--svg", action="store_true", help="also write an SVG chart")


def _add_timeline(p):
    p.add_argument("--lead", type=float, default=0.2, help="leading noise in seconds (default 0.2)")
    p.add_argument("--tail", type=float, default=0.2, help="trailing noise in seconds (default 0.2)")
    p.add_argument("--gate", type=float, default=0.04, help="raised-cosine ramp in seconds (default 0.04)")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = _Parser(prog="intelkit", description="Speech-in-noise intelligibility toolkit.",
                     epilog=FORMATS, formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("mix", help="mask clean utterances with pink noise at given SNRs",
                       description="Write <utt_id>_snr<level>.wav, <utt_id>_clean.wav (clean on the same "
                                   "timeline) and mix_report.csv (utt_id,snr_db,seed,achieved_snr_db,"
                                   "peak,overflow,wav_path).",
                       epilog=FORMATS, formatter_class=fmt)
    p.add_argument("--manifest", required=True, help="manifest CSV: utt_id,wav_path,spans_path")
    p.add_argument("--snr", default="-9,-6,-3,0,inf", help="comma-separated SNR levels in dB, 'inf' = no noise")
    p.add_argument("--seed", type=int, default=0, help="base seed for per-stimulus noise (default 0)")
    p.add_argument("--format", choices=("float", "pcm16"), default="float",
                   help="output WAV encoding; float keeps overflowing peaks unclipped (default float)")
    _add_timeline(p)
    _add_out(p)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("estoi", help="score a clean/degraded WAV pair",
                       description='Print {"metric": ..., "value": ..., "n_segments": ...} as JSON.',
                       epilog=FORMATS, formatter_class=fmt)
    p.add_argument("--clean", required=True, help="clean reference WAV")
    p.add_argument("--degraded", required=True, help="degraded WAV of the same length and rate")
    p.add_argument("--metric", choices=sorted(METRICS), default="estoi", help="metric (default estoi)")
    p.set_defaults(func=cmd_estoi)

    p = sub.add_parser("curve", help="average eSTOI versus SNR over a manifest",
                       description="Write curve.csv (snr_db,estoi averaged over utterances), "
                                   "curve_by_utt.csv (utt_id,snr_db,estoi) and optionally curve.svg.",
                       epilog=FORMATS, formatter_class=fmt)
    p.add_argument("--manifest", required=True, help="manifest CSV: utt_id,wav_path,spans_path")
    p.add_argument("--snr", default="0,-3,-6,-9", help="comma-separated SNR levels in dB")
    p.add_argument("--seed", type=int, default=0, help="base seed for per-stimulus noise (default 0)")
    p.add_argument("--label", default=None, help="series label in the SVG legend")
    _add_timeline(p)
    _add_out(p, svg=True)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("vowels", help="formants per annotated vowel and vowel-space area",
                       description="Write formants.csv (utt_id,vowel,f1_hz,f2_hz), vowel_space.json "
                                   "(means, hull, area_hz2) and optionally vowel_space.svg.",
                       epilog=FORMATS, formatter_class=fmt)
    p.add_argument("--manifest", required=True, help="manifest CSV: utt_id,wav_path[,spans_path]")
    p.add_argument("--annotations", required=True, help="annotation CSV: utt_id,vowel,start_sec,end_sec")
    p.add_argument("--label", default=None, help="label for the SVG legend")
    _add_out(p, svg=True)
    p.set_defaults(func=cmd_vowels)

    p = sub.add_parser("pca", help="PCA of speaker embeddings and component replacement",
                       description="Write scores.csv, model.json and clusters.json; with --replace-speaker "
                                   "also modified_embeddings.csv and replacement.json; optionally pca.svg.",
                       epilog=FORMATS, formatter_class=fmt)
    p.add_argument("--embeddings", required=True, help="embedding CSV: speaker_id,group,gender,e0..")
    p.add_argument("--n-components", type=int, default=2, help="number of components (default 2)")
    p.add_argument("--expect-dim", type=int, default=None, help="fail unless the embedding dimension matches")
    p.add_argument("--replace-speaker", default=None, help="speaker whose items get a component replaced")
    p.add_argument("--component", type=int, default=2, help="1-based component to replace (default 2)")
    p.add_argument("--target-group", default="announcer", help="group defining the target mean (default announcer)")
    p.add_argument("--target-gender", default="male", help="gender defining the target mean (default male)")
    _add_out(p, svg=True)
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("stats", help="word-correct rates, per-SNR ANOVA and Tukey HSD",
                       description="Write rates.csv, participant_rates.csv, anova.csv (snr_db,f,df1,df2,p) "
                                   "and tukey.csv (one row per SNR; p:<a>|<b> and significant:<a>|<b> "
                                   "columns per pair); optionally rates.svg.",
                       epilog=FORMATS, formatter_class=fmt)
    p.add_argument("--trials", required=True, help="trial CSV: participant,word,snr_db,stimulus_type,correct")
    p.add_argument("--alpha", type=float, default=0.05, help="significance level (default 0.05)")
    _add_out(p, svg=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("version", help="print the version")
    p.set_defaults(func=cmd_version)
    return parser


def _attach_snr_values(argv: Sequence[str]) -> list[str]:
    # argparse reads "-9,-6" as an option; bind it to --snr explicitly
    out = []
    tokens = iter(argv)
    for tok in tokens:
        if tok == "--snr":
            value = next(tokens, None)
            out.append(tok if value is None else f"--snr={value}")
        else:
            out.append(tok)
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(_attach_snr_values(sys.argv[1:] if argv is None else argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ValueError, OSError, KeyError) as exc:
        print(f"intelkit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:
        traceback.print_exc(file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
