"""Formant measurement over annotated vowel segments and vowel-space area."""

from __future__ import annotations

import csv
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .audio import AudioClip, resample

VOWELS = ("a", "e", "i", "o", "u")

ANALYSIS_RATE = 10000
LPC_ORDER = 10
FRAME_SEC = 0.025
HOP_SEC = 0.010
PRE_EMPHASIS = 0.97
MIN_FORMANT_HZ = 90.0
MAX_FORMANT_HZ = 4900.0
MAX_BANDWIDTH_HZ = 400.0


class FormantWarning(UserWarning):
    """Issued when an annotated segment yields no usable F1/F2 estimate."""


@dataclass(frozen=True)
class SegmentAnnotation:
    utt_id: str
    vowel: str
    start: float
    end: float

    def __post_init__(self):
        if self.vowel not in VOWELS:
            raise ValueError(f"unknown vowel {self.vowel!r}; expected one of {', '.join(VOWELS)}")
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid segment ({self.start}, {self.end}) for {self.utt_id}")


@dataclass(frozen=True)
class FormantSample:
    vowel: str
    f1: float
    f2: float
    bandwidth1: float
    bandwidth2: float
    utt_id: str = ""

    def __post_init__(self):
        if not (0 < self.f1 < self.f2):
            raise ValueError(f"need 0 < f1 < f2, got f1={self.f1}, f2={self.f2}")
        if self.bandwidth1 <= 0 or self.bandwidth2 <= 0:
            raise ValueError("formant bandwidths must be positive")


class Formant(NamedTuple):
    frequency: float
    bandwidth: float


@dataclass(frozen=True)
class VowelSpacePolygon:
    points: dict  # vowel -> (mean f1, mean f2)
    hull: list  # counterclockwise (f1, f2) vertices
    hull_vowels: list
    area: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "means": {v: {"f1_hz": p[0], "f2_hz": p[1]} for v, p in sorted(self.points.items())},
            "hull": [{"vowel": v, "f1_hz": p[0], "f2_hz": p[1]} for v, p in zip(self.hull_vowels, self.hull)],
            "area_hz2": self.area,
            "degenerate": self.degenerate,
        }


def lpc_burg(frame, order: int) -> np.ndarray:
    """Burg-method linear prediction coefficients ``a_1..a_p``.

    Uses the convention ``x_hat[n] = sum_k a_k x[n-k]``. The inverse filter
    ``1 - sum_k a_k z^-k`` is minimum phase because every reflection
    coefficient has magnitude at most one.
    """
    x = np.asarray(frame, dtype=np.float64)
    if order < 1:
        raise ValueError("order must be >= 1")
    if x.ndim != 1 or x.size <= 2 * order:
        raise ValueError(f"frame of {x.size} samples is too short for order {order}")
    if not np.any(x):
        raise ValueError("cannot fit LPC to an all-zero frame")
    poly = np.array([1.0])
    fwd = x[1:].copy()
    bwd = x[:-1].copy()
    for _ in range(order):
        den = fwd @ fwd + bwd @ bwd
        if den == 0:
            # perfectly predicted; higher orders add nothing
            break
        k = -2.0 * (fwd @ bwd) / den
        poly = np.append(poly, 0.0)
        poly = poly + k * poly[::-1]
        fwd, bwd = (fwd + k * bwd)[1:], (bwd + k * fwd)[:-1]
    coeffs = np.zeros(order)
    coeffs[: poly.size - 1] = -poly[1:]
    return coeffs


def formants_from_lpc(coeffs, sample_rate: float) -> list[Formant]:
    """Resonances of ``1 - sum a_k z^-k`` within 90-4900 Hz and narrower than 400 Hz, ascending."""
    poly = np.concatenate([[1.0], -np.asarray(coeffs, dtype=np.float64)])
    roots = np.roots(poly)
    roots = roots[roots.imag > 0]
    freqs = np.angle(roots) * sample_rate / (2 * np.pi)
    with np.errstate(divide="ignore"):
        bws = -(sample_rate / np.pi) * np.log(np.abs(roots))
    keep = (freqs >= MIN_FORMANT_HZ) & (freqs <= MAX_FORMANT_HZ) & (bws < MAX_BANDWIDTH_HZ)
    order = np.argsort(freqs[keep], kind="stable")
    return [Formant(float(f), float(b)) for f, b in zip(freqs[keep][order], bws[keep][order])]


def _segment_frames(x: np.ndarray, start: float, end: float, rate: int) -> list[np.ndarray]:
    # frame centres step through the middle half of the segment; frames stay inside it
    frame_len = round(FRAME_SEC * rate)
    hop = round(HOP_SEC * rate)
    seg_lo, seg_hi = round(start * rate), min(round(end * rate), x.size)
    if seg_hi - seg_lo < frame_len:
        return []
    duration = seg_hi - seg_lo
    mid_lo = seg_lo + duration / 4
    mid_hi = seg_hi - duration / 4
    half = frame_len / 2
    frames = []
    centre = mid_lo
    while centre <= mid_hi:
        lo = round(centre - half)
        if lo >= seg_lo and lo + frame_len <= seg_hi:
            frames.append(x[lo:lo + frame_len])
        centre += hop
    if not frames:
        lo = seg_lo + (duration - frame_len) // 2
        frames.append(x[lo:lo + frame_len])
    return frames


def vowel_formants(clip: AudioClip, annotations: Sequence[SegmentAnnotation]) -> list[FormantSample]:
    """Median F1/F2 per annotated vowel segment.

    The clip is analysed at 10 kHz with pre-emphasis 0.97, 25 ms Hamming
    frames every 10 ms over the middle half of each segment and order-10 Burg
    LPC. Segments that are too short or never yield two formants are skipped
    with a :class:`FormantWarning`.
    """
    if clip.sample_rate != ANALYSIS_RATE:
        clip = resample(clip, ANALYSIS_RATE)
    x = clip.samples
    emphasized = np.append(x[:1], x[1:] - PRE_EMPHASIS * x[:-1])
    window = np.hamming(round(FRAME_SEC * ANALYSIS_RATE))
    samples = []
    for ann in annotations:
        if ann.end > clip.duration + 1.0 / ANALYSIS_RATE:
            raise ValueError(f"segment ({ann.start}, {ann.end}) of {ann.utt_id} exceeds the clip")
        frames = _segment_frames(emphasized, ann.start, ann.end, ANALYSIS_RATE)
        if not frames:
            warnings.warn(
                f"{ann.utt_id} /{ann.vowel}/ at {ann.start:.3f}s: segment shorter than one "
                f"{FRAME_SEC * 1000:.0f} ms frame, skipped",
                FormantWarning,
                stacklevel=2,
            )
            continue
        tracks = []
        for frame in frames:
            try:
                coeffs = lpc_burg(frame * window, LPC_ORDER)
            except ValueError:
                continue
            cands = [f for f in formants_from_lpc(coeffs, ANALYSIS_RATE) if f.bandwidth > 0]
            if len(cands) >= 2:
                tracks.append((cands[0].frequency, cands[1].frequency, cands[0].bandwidth, cands[1].bandwidth))
        if not tracks:
            warnings.warn(
                f"{ann.utt_id} /{ann.vowel}/ at {ann.start:.3f}s: no frame gave two formants, skipped",
                FormantWarning,
                stacklevel=2,
            )
            continue
        f1, f2, b1, b2 = np.median(np.array(tracks), axis=0)
        if not f1 < f2:
            # medians of ordered pairs can cross only on pathological tracks
            warnings.warn(f"{ann.utt_id} /{ann.vowel}/: median F1 >= F2, skipped", FormantWarning, stacklevel=2)
            continue
        samples.append(FormantSample(ann.vowel, float(f1), float(f2), float(b1), float(b2), ann.utt_id))
    return samples


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Sequence[tuple[float, float]]) -> list[int]:
    """Indices of the convex hull vertices, counterclockwise, collinear points dropped."""
    order = sorted(range(len(points)), key=lambda i: (points[i][0], points[i][1]))
    if len(order) < 3:
        return order

    def chain(indices):
        out = []
        for i in indices:
            while len(out) >= 2 and _cross(points[out[-2]], points[out[-1]], points[i]) <= 0:
                out.pop()
            out.append(i)
        return out

    lower = chain(order)
    upper = chain(reversed(order))
    return lower[:-1] + upper[:-1]


def shoelace_area(vertices: Sequence[tuple[float, float]]) -> float:
    n = len(vertices)
    if n < 3:
        return 0.0
    twice = math.fsum(
        vertices[i][0] * vertices[(i + 1) % n][1] - vertices[(i + 1) % n][0] * vertices[i][1]
        for i in range(n)
    )
    return abs(twice) / 2.0


def vowel_space_area(samples: Sequence[FormantSample]) -> VowelSpacePolygon:
    """Convex hull and area (Hz^2) of the per-vowel mean (F1, F2) points."""
    by_vowel = defaultdict(list)
    for s in samples:
        by_vowel[s.vowel].append(s)
    if len(by_vowel) < 3:
        raise ValueError(f"vowel space needs at least 3 distinct vowels, got {len(by_vowel)}")
    vowels = sorted(by_vowel)
    # fsum is correctly rounded, so the means do not depend on sample order
    means = {
        v: (
            math.fsum(s.f1 for s in by_vowel[v]) / len(by_vowel[v]),
            math.fsum(s.f2 for s in by_vowel[v]) / len(by_vowel[v]),
        )
        for v in vowels
    }
    pts = [means[v] for v in vowels]
    hull_idx = convex_hull(pts)
    hull = [pts[i] for i in hull_idx]
    area = shoelace_area(hull)
    degenerate = len(hull) < 3 or area == 0.0
    return VowelSpacePolygon(means, hull, [vowels[i] for i in hull_idx], 0.0 if degenerate else area, degenerate)


def read_annotations(path) -> list[SegmentAnnotation]:
    """Read ``utt_id,vowel,start_sec,end_sec`` rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"utt_id", "vowel", "start_sec", "end_sec"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        return [
            SegmentAnnotation(row["utt_id"], row["vowel"].strip(), float(row["start_sec"]), float(row["end_sec"]))
            for row in reader
        ]


def write_annotations(path, annotations: Sequence[SegmentAnnotation]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["utt_id", "vowel", "start_sec", "end_sec"])
        for a in annotations:
            writer.writerow([a.utt_id, a.vowel, repr(float(a.start)), repr(float(a.end))])


def write_formants(path, samples: Sequence[FormantSample]) -> None:
    rows = sorted(samples, key=lambda s: (s.utt_id, s.vowel, s.f1, s.f2))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["utt_id", "vowel", "f1_hz", "f2_hz"])
        for s in rows:
            writer.writerow([s.utt_id, s.vowel, f"{s.f1:.6f}", f"{s.f2:.6f}"])
