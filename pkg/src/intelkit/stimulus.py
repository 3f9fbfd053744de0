"""Pink-noise masking of clean speech at a controlled voiced-region SNR.

Each stimulus is laid out as ``lead noise | clean + noise | tail noise``; the
noise track is gated with raised-cosine ramps that sit inside the padding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .audio import AudioClip, VoicedSpan, span_mask

PINK_LOW_HZ = 20.0

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def snr_label(snr_db: float) -> str:
    """Canonical text for an SNR level: ``-9``, ``0``, ``2.5``, ``inf``."""
    if math.isinf(snr_db):
        if snr_db < 0:
            raise ValueError("SNR of -inf is not a valid level")
        return "inf"
    if float(snr_db).is_integer():
        return str(int(snr_db))
    return repr(float(snr_db))


def parse_snr(text: str) -> float:
    text = text.strip().lower()
    if text in ("inf", "+inf", "infinity", "∞"):
        return math.inf
    value = float(text)
    if math.isnan(value) or value == -math.inf:
        raise ValueError(f"invalid SNR level {text!r}")
    return value


def derive_seed(base_seed: int, utt_id: str, snr_db: float) -> int:
    """Stable per-stimulus seed: 64-bit FNV-1a over ``seed || utt_id || snr-label``."""
    payload = b"|".join(
        [
            (int(base_seed) & _MASK64).to_bytes(8, "little"),
            utt_id.encode("utf-8"),
            snr_label(snr_db).encode("ascii"),
        ]
    )
    return fnv1a_64(payload)


@dataclass(frozen=True)
class StimulusSpec:
    snr_db: float
    lead_sec: float = 0.2
    tail_sec: float = 0.2
    gate_sec: float = 0.04
    noise_seed: int = 0

    def __post_init__(self):
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError(f"invalid snr_db {self.snr_db}")
        if min(self.lead_sec, self.tail_sec, self.gate_sec) < 0:
            raise ValueError("lead_sec, tail_sec and gate_sec must be non-negative")
        if self.gate_sec > self.lead_sec or self.gate_sec > self.tail_sec:
            raise ValueError("gate_sec must not exceed lead_sec or tail_sec")
        if not 0 <= self.noise_seed <= _MASK64:
            raise ValueError("noise_seed must be an unsigned 64-bit integer")

    @property
    def noiseless(self) -> bool:
        return math.isinf(self.snr_db)


@dataclass(frozen=True)
class NoisyStimulus:
    mixed: AudioClip
    clean_aligned: AudioClip
    achieved_snr_db: float
    lead_samples: int
    clean_samples: int
    noise_gain: float

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.mixed.samples))) if len(self.mixed) else 0.0

    @property
    def overflow(self) -> bool:
        """True if any mixed sample exceeds full scale; samples are never clipped."""
        return self.peak > 1.0


def gen_pink_noise(n_samples: int, sample_rate: int, seed: int) -> AudioClip:
    """Gaussian noise with a 1/f power spectrum, zero mean and unit RMS.

    The spectrum is shaped in the frequency domain; bins below 20 Hz are held
    at the 20 Hz level and the DC bin is zeroed.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(int(seed))
    n_bins = n_samples // 2 + 1
    spectrum = rng.standard_normal(n_bins) + 1j * rng.standard_normal(n_bins)
    freqs = np.arange(n_bins) * sample_rate / n_samples
    shape = 1.0 / np.sqrt(np.maximum(freqs, PINK_LOW_HZ))
    shape[0] = 0.0
    noise = np.fft.irfft(spectrum * shape, n=n_samples)
    noise -= noise.mean()
    level = np.sqrt(np.mean(noise**2))
    if level == 0:
        # only reachable for n_samples == 1
        return AudioClip(np.zeros(n_samples), sample_rate)
    return AudioClip(noise / level, sample_rate)


def gate_gain(n_samples: int, sample_rate: int, ramp_sec: float) -> np.ndarray:
    """Raised-cosine onset/offset gain curve; 0 at both ends, 1 in the interior."""
    n_ramp = round(ramp_sec * sample_rate)
    if ramp_sec < 0:
        raise ValueError("ramp_sec must be non-negative")
    if 2 * n_ramp > n_samples:
        raise ValueError(f"ramp of {ramp_sec} s is longer than half the clip")
    gain = np.ones(n_samples)
    if n_ramp:
        ramp = 0.5 * (1.0 - np.cos(np.pi * np.arange(n_ramp) / n_ramp))
        gain[:n_ramp] = ramp
        gain[n_samples - n_ramp:] = ramp[::-1]
    return gain


def raised_cosine_gate(clip: AudioClip, ramp_sec: float) -> AudioClip:
    return clip.with_samples(clip.samples * gate_gain(len(clip), clip.sample_rate, ramp_sec))


def noise_gain(speech_rms: float, noise_rms: float, snr_db: float) -> float:
    """Gain that puts noise of level ``noise_rms`` at ``snr_db`` below ``speech_rms``."""
    return speech_rms / (noise_rms * 10.0 ** (snr_db / 20.0))


def _timeline_mask(n_total, rate, voiced, lead, n_clean) -> np.ndarray:
    # spans are relative to the clean clip; no spans means the whole clean region
    if voiced:
        region = span_mask(n_clean, rate, voiced)
        if not region.any():
            raise ValueError("union of voiced spans is empty")
    else:
        region = np.ones(n_clean, dtype=bool)
    mask = np.zeros(n_total, dtype=bool)
    mask[lead:lead + n_clean] = region
    return mask


def mix_at_snr(clean: AudioClip, voiced: Sequence[VoicedSpan], spec: StimulusSpec) -> NoisyStimulus:
    """Embed ``clean`` in gated pink noise at ``spec.snr_db`` measured over ``voiced``.

    The noise gain is ``rms(clean, voiced) / (rms(noise under voiced) * 10**(snr/20))``,
    computed on the ungated noise. With an infinite SNR the timeline is the
    same but the noise track is silent.
    """
    if len(clean) == 0:
        raise ValueError("clean clip is empty")
    rate = clean.sample_rate
    lead = round(spec.lead_sec * rate)
    tail = round(spec.tail_sec * rate)
    n_total = lead + len(clean) + tail

    aligned = np.zeros(n_total)
    aligned[lead:lead + len(clean)] = clean.samples
    clean_aligned = AudioClip(aligned, rate)

    mask = _timeline_mask(n_total, rate, voiced, lead, len(clean))

    if spec.noiseless:
        return NoisyStimulus(clean_aligned, clean_aligned, math.inf, lead, len(clean), 0.0)

    speech_rms = float(np.sqrt(np.mean(aligned[mask] ** 2)))
    if speech_rms == 0:
        raise ValueError("voiced region is silent; a finite SNR is undefined")
    noise = gen_pink_noise(n_total, rate, spec.noise_seed).samples
    noise_rms = float(np.sqrt(np.mean(noise[mask] ** 2)))
    gain = noise_gain(speech_rms, noise_rms, spec.snr_db)
    noise_track = gain * noise * gate_gain(n_total, rate, spec.gate_sec)
    mixed = AudioClip(aligned + noise_track, rate)
    achieved = 20.0 * math.log10(speech_rms / float(np.sqrt(np.mean(noise_track[mask] ** 2))))
    return NoisyStimulus(mixed, clean_aligned, achieved, lead, len(clean), gain)


def measure_snr(stimulus: NoisyStimulus, voiced: Sequence[VoicedSpan]) -> float:
    """Voiced-region SNR in dB of a mixed stimulus; ``inf`` when the noise is zero."""
    mixed, clean = stimulus.mixed.samples, stimulus.clean_aligned.samples
    if mixed.shape != clean.shape or stimulus.mixed.sample_rate != stimulus.clean_aligned.sample_rate:
        raise ValueError("mixed and clean_aligned are not aligned")
    mask = _timeline_mask(
        mixed.size, stimulus.mixed.sample_rate, voiced, stimulus.lead_samples, stimulus.clean_samples
    )
    noise_energy = float(np.mean((mixed - clean)[mask] ** 2))
    if noise_energy == 0:
        return math.inf
    speech_energy = float(np.mean(clean[mask] ** 2))
    return 10.0 * math.log10(speech_energy / noise_energy)
