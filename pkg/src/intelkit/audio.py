"""Signal container, WAV I/O, resampling, STFT, mel filterbank and RMS."""

from __future__ import annotations

import csv
import wave
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.io import wavfile
from scipy.signal import firwin, resample_poly

KAISER_BETA = 8.6
ZERO_CROSSINGS = 64
LOG_FLOOR = 1e-10


class WavFormatError(ValueError):
    """Raised for WAV files that are malformed or outside the supported subset."""


def _frozen(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AudioClip:
    """Mono signal with its sample rate in Hz.

    Samples are stored as a read-only float64 array.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = _frozen(self.samples)
        if samples.ndim != 1:
            raise ValueError(f"AudioClip is mono only, got array of shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioClip samples must be finite")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples) -> "AudioClip":
        return AudioClip(samples, self.sample_rate)


@dataclass(frozen=True)
class VoicedSpan:
    """Half-open time region ``[start, end)`` in seconds."""

    start: float
    end: float

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid span ({self.start}, {self.end}): need 0 <= start < end")

    def to_samples(self, sample_rate: int) -> tuple[int, int]:
        return round(self.start * sample_rate), round(self.end * sample_rate)


@dataclass(frozen=True)
class Spectrogram:
    magnitudes: np.ndarray  # (fft_len // 2 + 1, frames)
    frame_len: int
    hop: int
    fft_len: int
    sample_rate: int

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[1]

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.fft_len // 2 + 1) * self.sample_rate / self.fft_len


@dataclass(frozen=True)
class MelConfig:
    """Log-mel analysis settings. Defaults are the 24 kHz voice-conversion front end."""

    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 8000.0
    frame_len: int = 1024
    hop: int = 256
    fft_len: int = 1024
    sample_rate: int = 24000
    window: str = "hann"

    def __post_init__(self):
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if not (0 <= self.fmin < self.fmax):
            raise ValueError(f"need 0 <= fmin < fmax, got fmin={self.fmin}, fmax={self.fmax}")
        if self.fmax > self.sample_rate / 2:
            raise ValueError(f"fmax {self.fmax} Hz exceeds Nyquist {self.sample_rate / 2} Hz")


@dataclass(frozen=True)
class MelSpectrogram:
    values: np.ndarray  # (n_mels, frames), natural-log energies
    config: MelConfig = field(default_factory=MelConfig)


# --------------------------------------------------------------------------- I/O

def read_wav(path) -> AudioClip:
    """Read a mono PCM16, PCM24 or float32 WAV file.

    Integer samples are scaled by ``1 / 2**(bits - 1)``; float samples pass through.
    """
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise WavFormatError(f"{path}: {exc}") from exc
    if data.ndim != 1:
        raise WavFormatError(f"{path}: unsupported channel count {data.shape[1]}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 2.0**15
    elif data.dtype == np.int32:
        bits = _pcm_bits(path)
        if bits not in (24,):
            raise WavFormatError(f"{path}: unsupported codec PCM{bits}")
        # scipy left-justifies 24-bit data into int32
        samples = data.astype(np.float64) / 2.0**31
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise WavFormatError(f"{path}: unsupported codec {data.dtype}")
    return AudioClip(samples, rate)


def _pcm_bits(path: Path) -> int:
    with wave.open(str(path), "rb") as fh:
        return fh.getsampwidth() * 8


def write_wav(path, clip: AudioClip, subtype: str = "PCM_16") -> None:
    """Write ``clip`` as a mono WAV file.

    ``subtype`` is one of ``PCM_16``, ``PCM_24`` or ``FLOAT``. Integer formats
    saturate at the representable range; ``FLOAT`` stores samples unclipped.
    """
    path = Path(path)
    x = clip.samples
    if subtype == "PCM_16":
        ints = np.clip(np.round(x * 2**15), -(2**15), 2**15 - 1).astype("<i2")
        wavfile.write(path, clip.sample_rate, ints)
    elif subtype == "PCM_24":
        ints = np.clip(np.round(x * 2**23), -(2**23), 2**23 - 1).astype("<i4")
        raw = ints.view(np.uint8).reshape(-1, 4)[:, :3].tobytes()
        with wave.open(str(path), "wb") as fh:
            fh.setnchannels(1)
            fh.setsampwidth(3)
            fh.setframerate(clip.sample_rate)
            fh.writeframes(raw)
    elif subtype == "FLOAT":
        wavfile.write(path, clip.sample_rate, x.astype(np.float32))
    else:
        raise ValueError(f"unknown WAV subtype {subtype!r}")


def read_spans(path) -> list[VoicedSpan]:
    """Read a ``start_sec,end_sec`` CSV file."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"start_sec", "end_sec"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        return [VoicedSpan(float(row["start_sec"]), float(row["end_sec"])) for row in reader]


def write_spans(path, spans: Iterable[VoicedSpan]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["start_sec", "end_sec"])
        for span in spans:
            writer.writerow([repr(float(span.start)), repr(float(span.end))])


# --------------------------------------------------------------------- resampling

@lru_cache(maxsize=32)
def _resample_filter(up: int, down: int) -> np.ndarray:
    # Kaiser-windowed sinc at the upsampled rate; sinc zeros are max(up, down) taps apart.
    max_rate = max(up, down)
    half_len = ZERO_CROSSINGS * max_rate
    taps = firwin(2 * half_len + 1, 1.0 / max_rate, window=("kaiser", KAISER_BETA))
    taps.setflags(write=False)
    return taps


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited polyphase resampling to ``target_rate``.

    The output has ``round(len * target_rate / rate)`` samples.
    """
    if target_rate <= 0 or int(target_rate) != target_rate:
        raise ValueError(f"target_rate must be a positive integer, got {target_rate!r}")
    target_rate = int(target_rate)
    if target_rate == clip.sample_rate:
        return AudioClip(clip.samples, clip.sample_rate)
    ratio = Fraction(target_rate, clip.sample_rate)
    up, down = ratio.numerator, ratio.denominator
    n_out = round(clip.samples.size * target_rate / clip.sample_rate)
    if clip.samples.size == 0:
        return AudioClip(np.zeros(0), target_rate)
    y = resample_poly(clip.samples, up, down, window=np.array(_resample_filter(up, down)))
    if y.size >= n_out:
        y = y[:n_out]
    else:
        y = np.concatenate([y, np.zeros(n_out - y.size)])
    return AudioClip(y, target_rate)


# ---------------------------------------------------------------------- framing

def get_window(window, frame_len: int) -> np.ndarray:
    """Resolve ``'hann'``/``'hamming'`` (periodic) or pass through an explicit array."""
    if isinstance(window, str):
        n = np.arange(frame_len)
        if window == "hann":
            return 0.5 - 0.5 * np.cos(2 * np.pi * n / frame_len)
        if window == "hamming":
            return 0.54 - 0.46 * np.cos(2 * np.pi * n / frame_len)
        raise ValueError(f"unknown window {window!r}; expected 'hann' or 'hamming'")
    w = np.asarray(window, dtype=np.float64)
    if w.shape != (frame_len,):
        raise ValueError(f"window length {w.size} does not match frame_len {frame_len}")
    return w


def frame_signal(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Return a ``(frames, frame_len)`` view; frames = 1 + (len - frame_len) // hop."""
    if hop < 1:
        raise ValueError("hop must be >= 1")
    if x.size < frame_len:
        raise ValueError(f"signal of {x.size} samples is shorter than one frame ({frame_len})")
    return np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop]


def stft(clip: AudioClip, frame_len: int, hop: int, fft_len: int, window="hann") -> Spectrogram:
    """Magnitude STFT without edge padding."""
    if fft_len < frame_len:
        raise ValueError(f"fft_len {fft_len} < frame_len {frame_len}")
    frames = frame_signal(clip.samples, frame_len, hop) * get_window(window, frame_len)
    mags = np.abs(np.fft.rfft(frames, n=fft_len, axis=1)).T
    return Spectrogram(mags, frame_len, hop, fft_len, clip.sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(config: MelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Triangular HTK-mel filterbank, shape ``(n_mels, fft_len // 2 + 1)``, and band centers in Hz."""
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax), config.n_mels + 2))
    freqs = np.arange(config.fft_len // 2 + 1) * config.sample_rate / config.fft_len
    lower, center, upper = edges_hz[:-2, None], edges_hz[1:-1, None], edges_hz[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    bank = np.maximum(0.0, np.minimum(rising, falling))
    # narrow low bands can fall between bins; give them their nearest bin
    for i in np.flatnonzero(bank.max(axis=1) <= 0):
        bank[i, np.argmin(np.abs(freqs - edges_hz[i + 1]))] = 1.0
    return bank, edges_hz[1:-1]


def mel_spectrogram(clip: AudioClip, config: MelConfig = MelConfig()) -> MelSpectrogram:
    if clip.sample_rate != config.sample_rate:
        raise ValueError(f"clip rate {clip.sample_rate} Hz != config rate {config.sample_rate} Hz")
    spec = stft(clip, config.frame_len, config.hop, config.fft_len, config.window)
    bank, _ = mel_filterbank(config)
    power = bank @ spec.magnitudes**2
    return MelSpectrogram(np.log(np.maximum(power, LOG_FLOOR)), config)


# --------------------------------------------------------------------------- RMS

def span_mask(n_samples: int, sample_rate: int, spans: Sequence[VoicedSpan], offset: int = 0) -> np.ndarray:
    """Boolean mask over ``n_samples`` covering the union of ``spans`` shifted by ``offset`` samples."""
    mask = np.zeros(n_samples, dtype=bool)
    for span in spans:
        start, end = span.to_samples(sample_rate)
        start, end = start + offset, end + offset
        if end > n_samples:
            raise ValueError(
                f"span ({span.start}, {span.end}) s exceeds clip of {n_samples / sample_rate:.6f} s"
            )
        mask[start:end] = True
    return mask


def rms(clip: AudioClip, spans: Sequence[VoicedSpan] = ()) -> float:
    """Root-mean-square over the union of ``spans``, or over the whole clip if none are given."""
    if not spans:
        if clip.samples.size == 0:
            raise ValueError("rms of an empty clip")
        region = clip.samples
    else:
        region = clip.samples[span_mask(clip.samples.size, clip.sample_rate, spans)]
        if region.size == 0:
            raise ValueError("union of spans is empty")
    return float(np.sqrt(np.mean(region**2)))
