"""Deterministic synthetic material: speech-like clips, embeddings and trial tables.

Used by the test-suite and for demo runs of the CLI without the original corpus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .audio import AudioClip, VoicedSpan, write_spans, write_wav
from .embedding import EmbeddingSet, write_embeddings
from .stats import STIMULUS_TYPES, TrialRecord, write_trials
from .vowels import SegmentAnnotation, write_annotations

# rough adult-male Japanese vowel formants (F1, F2, F3) in Hz
VOWEL_FORMANTS = {
    "a": (750.0, 1250.0, 2600.0),
    "e": (480.0, 1850.0, 2600.0),
    "i": (300.0, 2250.0, 3000.0),
    "o": (500.0, 850.0, 2500.0),
    "u": (340.0, 1300.0, 2400.0),
}


def resonator(x: np.ndarray, freq: float, bandwidth: float, sample_rate: int) -> np.ndarray:
    """Two-pole resonator with unit gain at DC."""
    r = math.exp(-math.pi * bandwidth / sample_rate)
    a = [1.0, -2.0 * r * math.cos(2 * math.pi * freq / sample_rate), r * r]
    return lfilter([sum(a)], a, x)


def impulse_train(n_samples: int, sample_rate: int, f0) -> np.ndarray:
    """Unit impulses at the glottal pulse instants of a (possibly time-varying) F0."""
    f0 = np.broadcast_to(np.asarray(f0, dtype=np.float64), (n_samples,))
    phase = np.cumsum(f0) / sample_rate
    pulses = np.zeros(n_samples)
    pulses[0] = 1.0
    pulses[1:][np.floor(phase[1:]) > np.floor(phase[:-1])] = 1.0
    return pulses


def two_resonance_vowel(
    f1: float = 500.0,
    f2: float = 1500.0,
    bw1: float = 60.0,
    bw2: float = 90.0,
    f0: float = 100.0,
    duration: float = 0.3,
    sample_rate: int = 16000,
) -> AudioClip:
    """Impulse train at ``f0`` through a cascade of two resonators."""
    n = round(duration * sample_rate)
    y = resonator(impulse_train(n, sample_rate, f0), f1, bw1, sample_rate)
    y = resonator(y, f2, bw2, sample_rate)
    return AudioClip(0.5 * y / np.max(np.abs(y)), sample_rate)


@dataclass(frozen=True)
class SynthUtterance:
    utt_id: str
    clip: AudioClip
    voiced: list
    annotations: list


def synth_utterance(
    seed: int,
    utt_id: str = "utt",
    sample_rate: int = 16000,
    n_syllables: int = 6,
    f0: float = 120.0,
    formant_scale: float = 1.0,
) -> SynthUtterance:
    """A speech-like clip: CV syllables with noise-burst consonants and voiced vowels.

    Vowels are formant-filtered glottal pulse trains with a falling F0 contour
    and syllabic amplitude envelopes; voiced spans and vowel annotations are
    returned alongside.
    """
    rng = np.random.default_rng(seed)
    pieces = [np.zeros(round(0.08 * sample_rate))]
    t = pieces[0].size
    voiced, annotations = [], []
    for i in range(n_syllables):
        vowel = "aeiou"[int(rng.integers(5))] if i >= 5 else "aeiou"[(i + seed) % 5]
        # consonant: short band-limited noise burst
        n_cons = round(rng.uniform(0.03, 0.06) * sample_rate)
        burst = rng.standard_normal(n_cons) * np.hanning(n_cons) * 0.05
        burst = resonator(burst, rng.uniform(2000, 4000), 800.0, sample_rate)
        n_vow = round(rng.uniform(0.14, 0.24) * sample_rate)
        contour = f0 * (1.1 - 0.2 * np.linspace(0, 1, n_vow)) * (1 + 0.02 * rng.standard_normal())
        y = impulse_train(n_vow, sample_rate, contour) + 0.01 * rng.standard_normal(n_vow)
        for k, (freq, bw) in enumerate(zip(VOWEL_FORMANTS[vowel], (70.0, 90.0, 150.0))):
            y = resonator(y, freq * formant_scale, bw, sample_rate)
        y /= np.max(np.abs(y)) + 1e-12
        env = np.sin(np.pi * np.linspace(0, 1, n_vow)) ** 0.5
        y *= env * rng.uniform(0.3, 0.6)
        gap = np.zeros(round(rng.uniform(0.02, 0.07) * sample_rate))
        start = t + n_cons
        voiced.append(VoicedSpan(start / sample_rate, (start + n_vow) / sample_rate))
        annotations.append(SegmentAnnotation(utt_id, vowel, start / sample_rate, (start + n_vow) / sample_rate))
        pieces += [burst, y, gap]
        t += n_cons + n_vow + gap.size
    pieces.append(np.zeros(round(0.08 * sample_rate)))
    return SynthUtterance(utt_id, AudioClip(np.concatenate(pieces), sample_rate), voiced, annotations)


def synth_embeddings(
    seed: int,
    dim: int = 128,
    speakers_per_cluster: int = 5,
    items_per_speaker: int = 4,
):
    """Embeddings whose two dominant directions separate gender and speaking style.

    Speaker ids follow the corpus pattern (``MAU``/``M105`` are always present
    as a male announcer and a male non-expert).
    """
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    gender_axis, style_axis = basis[:, 0], basis[:, 1]
    rows, ids, groups, genders = [], [], [], []
    for group, style in (("announcer", 1.5), ("non-expert", -1.5)):
        for gender, sex in (("male", -3.0), ("female", 3.0)):
            for s in range(speakers_per_cluster):
                if group == "announcer":
                    sid = "MAU" if gender == "male" and s == 0 else f"{gender[0].upper()}A{s:02d}"
                else:
                    sid = "M105" if gender == "male" and s == 0 else f"{gender[0].upper()}{100 + s + 10}"
                offset = 0.4 * rng.standard_normal(dim)
                for _ in range(items_per_speaker):
                    rows.append(sex * gender_axis + style * style_axis + offset + 0.15 * rng.standard_normal(dim))
                    ids.append(sid)
                    groups.append(group)
                    genders.append(gender)
    return EmbeddingSet(np.array(rows), ids, groups, genders)


def synth_trials(seed: int, n_participants: int = 10, words_per_cell: int = 15):
    """Listening-test responses with announcer/VC advantages that grow as SNR drops."""
    rng = np.random.default_rng(seed)
    advantage = {"non-expert": 0.0, "announcer": 0.9, "vc1": 0.5, "vc2": 0.7}
    snrs = (-9.0, -6.0, -3.0, 0.0, math.inf)
    trials = []
    word = 0
    for p in range(n_participants):
        skill = 0.3 * rng.standard_normal()
        for snr in snrs:
            for stype in STIMULUS_TYPES:
                level = 4.0 if math.isinf(snr) else 0.35 * (snr + 6.0)
                bonus = advantage[stype] * (0.2 if math.isinf(snr) else 1.0)
                prob = 1.0 / (1.0 + math.exp(-(level + bonus + skill)))
                for _ in range(words_per_cell):
                    trials.append(TrialRecord(f"P{p + 1:02d}", f"w{word:04d}", snr, stype, bool(rng.random() < prob)))
                    word += 1
    return trials


def write_demo_corpus(root, n_utterances: int = 20, seed: int = 0, sample_rate: int = 16000) -> dict:
    """Write a synthetic corpus (WAVs, spans, manifest, annotations, embeddings, trials) under ``root``.

    Returns a dict of the written top-level file paths.
    """
    root = Path(root)
    (root / "wav").mkdir(parents=True, exist_ok=True)
    manifest_rows, annotations = [], []
    for i in range(n_utterances):
        utt_id = f"utt{i:03d}"
        utt = synth_utterance(seed * 1000 + i, utt_id=utt_id, sample_rate=sample_rate, f0=110.0 + 5 * (i % 4))
        write_wav(root / "wav" / f"{utt_id}.wav", utt.clip, "PCM_16")
        write_spans(root / "wav" / f"{utt_id}_spans.csv", utt.voiced)
        manifest_rows.append((utt_id, f"wav/{utt_id}.wav", f"wav/{utt_id}_spans.csv"))
        annotations += utt.annotations
    paths = {
        "manifest": root / "manifest.csv",
        "annotations": root / "annotations.csv",
        "embeddings": root / "embeddings.csv",
        "trials": root / "trials.csv",
    }
    with open(paths["manifest"], "w", encoding="utf-8", newline="") as fh:
        fh.write("utt_id,wav_path,spans_path\n")
        for row in manifest_rows:
            fh.write(",".join(row) + "\n")
    write_annotations(paths["annotations"], annotations)
    write_embeddings(paths["embeddings"], synth_embeddings(seed))
    write_trials(paths["trials"], synth_trials(seed))
    return paths
