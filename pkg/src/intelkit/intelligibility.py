"""STOI and extended STOI (eSTOI) between a clean reference and a degraded signal.

Both metrics share one front end: resample to 10 kHz, drop frames where the
clean signal is more than 40 dB below its loudest frame, take a 256/128/512
Hann STFT and pool it into 15 one-third-octave bands from 150 Hz. Scores are
averaged over all 30-frame segments, sliding by one frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .audio import AudioClip, Spectrogram, VoicedSpan, frame_signal, resample, stft
from .stimulus import StimulusSpec, derive_seed, mix_at_snr

FS = 10000
FRAME_LEN = 256
HOP = 128
FFT_LEN = 512
N_BANDS = 15
MIN_FREQ = 150.0
SEGMENT_LEN = 30
SDR_FLOOR_DB = -15.0
DYN_RANGE_DB = 40.0

# MATLAB-style hanning(N): the symmetric N+2 window without its zero endpoints
WINDOW = np.hanning(FRAME_LEN + 2)[1:-1]


@dataclass(frozen=True)
class BandEnvelopeMatrix:
    energies: np.ndarray  # (15, frames)
    center_freqs: np.ndarray


@dataclass(frozen=True)
class IntelligibilityScore:
    value: float
    metric: str
    n_segments: int
    raw: float

    def to_dict(self) -> dict:
        return {"metric": self.metric, "value": self.value, "n_segments": self.n_segments}


def center_frequencies() -> np.ndarray:
    return MIN_FREQ * 2.0 ** (np.arange(N_BANDS) / 3.0)


@lru_cache(maxsize=None)
def band_matrix(sample_rate: int = FS, fft_len: int = FFT_LEN) -> np.ndarray:
    """0/1 matrix ``(15, fft_len // 2 + 1)`` assigning FFT bins to third-octave bands.

    Bin ``k`` belongs to band ``j`` when ``fc_j * 2**(-1/6) <= f_k < fc_j * 2**(1/6)``.
    """
    freqs = np.arange(fft_len // 2 + 1) * sample_rate / fft_len
    centers = center_frequencies()
    lo = centers * 2.0 ** (-1 / 6)
    hi = centers * 2.0 ** (1 / 6)
    matrix = ((freqs >= lo[:, None]) & (freqs < hi[:, None])).astype(np.float64)
    matrix.setflags(write=False)
    return matrix


def third_octave_bands(spec: Spectrogram) -> BandEnvelopeMatrix:
    if spec.sample_rate != FS or spec.fft_len != FFT_LEN:
        raise ValueError(
            f"third-octave analysis needs {FS} Hz / FFT {FFT_LEN}, "
            f"got {spec.sample_rate} Hz / FFT {spec.fft_len}"
        )
    energies = np.sqrt(band_matrix() @ spec.magnitudes**2)
    return BandEnvelopeMatrix(energies, center_frequencies())


def _overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    n_frames, frame_len = frames.shape
    if n_frames == 0:
        return np.zeros(0)
    out = np.zeros((n_frames - 1) * hop + frame_len)
    for i, frame in enumerate(frames):
        out[i * hop:i * hop + frame_len] += frame
    return out


def remove_silent_frames(
    clean: AudioClip, degraded: AudioClip, threshold_db: float = DYN_RANGE_DB
) -> tuple[AudioClip, AudioClip]:
    """Drop frames whose clean energy is more than ``threshold_db`` below the loudest clean frame.

    Frames are 256 samples, 50% overlap, Hann-windowed; the kept frames of both
    signals are overlap-added back together. Only the clean signal decides.
    """
    _check_pair(clean, degraded)
    x_frames = frame_signal(clean.samples, FRAME_LEN, HOP) * WINDOW
    y_frames = frame_signal(degraded.samples, FRAME_LEN, HOP) * WINDOW
    with np.errstate(divide="ignore"):
        energies = 20.0 * np.log10(np.linalg.norm(x_frames, axis=1))
    keep = energies > np.max(energies) - threshold_db
    return (
        clean.with_samples(_overlap_add(x_frames[keep], HOP)),
        degraded.with_samples(_overlap_add(y_frames[keep], HOP)),
    )


def _check_pair(clean: AudioClip, degraded: AudioClip) -> None:
    if len(clean) != len(degraded):
        raise ValueError(f"length mismatch: clean {len(clean)} vs degraded {len(degraded)} samples")
    if clean.sample_rate != degraded.sample_rate:
        raise ValueError(
            f"rate mismatch: clean {clean.sample_rate} Hz vs degraded {degraded.sample_rate} Hz"
        )


def _segments(clean: AudioClip, degraded: AudioClip) -> tuple[np.ndarray, np.ndarray]:
    """Band envelopes cut into ``(segments, bands, 30)`` blocks for both signals."""
    _check_pair(clean, degraded)
    if clean.sample_rate != FS:
        clean, degraded = resample(clean, FS), resample(degraded, FS)
    clean, degraded = remove_silent_frames(clean, degraded)
    n_frames = 0 if len(clean) < FRAME_LEN else 1 + (len(clean) - FRAME_LEN) // HOP
    if n_frames < SEGMENT_LEN:
        raise ValueError(
            f"only {n_frames} STFT frames after silence removal; at least {SEGMENT_LEN} are needed"
        )
    x = third_octave_bands(stft(clean, FRAME_LEN, HOP, FFT_LEN, WINDOW)).energies
    y = third_octave_bands(stft(degraded, FRAME_LEN, HOP, FFT_LEN, WINDOW)).energies
    window = np.lib.stride_tricks.sliding_window_view
    return (
        window(x, SEGMENT_LEN, axis=1).transpose(1, 0, 2),
        window(y, SEGMENT_LEN, axis=1).transpose(1, 0, 2),
    )


def _unit(a: np.ndarray, axis: int) -> np.ndarray:
    # Mean-center and scale to unit norm; vectors that are constant up to
    # rounding normalize to zero instead of amplifying round-off.
    centered = a - a.mean(axis=axis, keepdims=True)
    norm = np.linalg.norm(centered, axis=axis, keepdims=True)
    scale = np.linalg.norm(a, axis=axis, keepdims=True)
    ok = norm > 1e-12 * scale
    return np.where(ok, centered / np.where(ok, norm, 1.0), 0.0)


def _score(metric: str, raw: float, n_segments: int) -> IntelligibilityScore:
    return IntelligibilityScore(min(1.0, max(0.0, raw)), metric, n_segments, raw)


def estoi(clean: AudioClip, degraded: AudioClip) -> IntelligibilityScore:
    """Extended STOI: mean over segments of the column-wise correlation of
    row- then column-normalized band-envelope blocks."""
    x, y = _segments(clean, degraded)
    xn = _unit(_unit(x, axis=2), axis=1)
    yn = _unit(_unit(y, axis=2), axis=1)
    per_segment = np.sum(xn * yn, axis=(1, 2)) / SEGMENT_LEN
    return _score("estoi", float(np.mean(per_segment)), x.shape[0])


def stoi(clean: AudioClip, degraded: AudioClip) -> IntelligibilityScore:
    """Classic STOI: per-band envelope correlation after level matching and SDR clipping."""
    x, y = _segments(clean, degraded)
    x_norm = np.linalg.norm(x, axis=2, keepdims=True)
    y_norm = np.linalg.norm(y, axis=2, keepdims=True)
    alpha = np.divide(x_norm, y_norm, out=np.zeros_like(x_norm), where=y_norm > 0)
    ceiling = 1.0 + 10.0 ** (-SDR_FLOOR_DB / 20.0)
    y_clipped = np.minimum(alpha * y, ceiling * x)
    corr = np.sum(_unit(x, axis=2) * _unit(y_clipped, axis=2), axis=2)
    return _score("stoi", float(np.mean(corr)), x.shape[0])


METRICS = {"estoi": estoi, "stoi": stoi}


def estoi_curve(
    clean: AudioClip,
    voiced: Sequence[VoicedSpan],
    snr_levels: Sequence[float],
    seed: int,
    utt_id: str = "",
    lead_sec: float = 0.2,
    tail_sec: float = 0.2,
    gate_sec: float = 0.04,
) -> list[tuple[float, float]]:
    """eSTOI of pink-noise-masked versions of ``clean`` at each SNR level.

    The reference is the padded clean timeline of each stimulus. Noise seeds
    come from :func:`derive_seed` so each level has its own realization.
    """
    curve = []
    for snr in snr_levels:
        if math.isnan(snr):
            raise ValueError("SNR level is NaN")
        spec = StimulusSpec(snr, lead_sec, tail_sec, gate_sec, derive_seed(seed, utt_id, snr))
        stim = mix_at_snr(clean, voiced, spec)
        curve.append((snr, estoi(stim.clean_aligned, stim.mixed).value))
    return curve
