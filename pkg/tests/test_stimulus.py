import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intelkit.audio import AudioClip, VoicedSpan, rms
from intelkit.stimulus import (
    NoisyStimulus,
    StimulusSpec,
    derive_seed,
    fnv1a_64,
    gate_gain,
    gen_pink_noise,
    measure_snr,
    mix_at_snr,
    noise_gain,
    parse_snr,
    raised_cosine_gate,
    snr_label,
)


def band_power(x, rate, lo, hi):
    spectrum = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(x.size, 1 / rate)
    return spectrum[(freqs >= lo) & (freqs < hi)].sum()


# ------------------------------------------------------------------ seeds

def test_fnv1a_reference_vectors():
    # published FNV-1a 64 test vectors
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a_64(b"foobar") == 0x85944171F73967E8


def test_derive_seed_distinct_and_stable():
    seeds = {derive_seed(7, u, s) for u in ("a", "b") for s in (-9.0, -6.0, math.inf)}
    assert len(seeds) == 6
    assert derive_seed(7, "a", -9.0) == derive_seed(7, "a", -9)
    assert derive_seed(7, "a", -9.0) != derive_seed(8, "a", -9.0)


@pytest.mark.parametrize("value, label", [(-9.0, "-9"), (0.0, "0"), (2.5, "2.5"), (math.inf, "inf"), (-0.0, "0")])
def test_snr_label(value, label):
    assert snr_label(value) == label
    assert parse_snr(label) == value


@pytest.mark.parametrize("text", ["", "abc", "nan", "-inf"])
def test_parse_snr_rejects(text):
    with pytest.raises(ValueError):
        parse_snr(text)


# ------------------------------------------------------------------ pink noise

def test_pink_noise_deterministic():
    a = gen_pink_noise(4000, 16000, 123).samples
    b = gen_pink_noise(4000, 16000, 123).samples
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, gen_pink_noise(4000, 16000, 124).samples)


@pytest.mark.parametrize("n", [1001, 16000, 3])
def test_pink_noise_unit_rms_zero_mean(n):
    x = gen_pink_noise(n, 16000, 9).samples
    assert np.sqrt(np.mean(x**2)) == pytest.approx(1.0, abs=1e-6)
    assert abs(np.mean(x)) < 1e-12


def test_pink_noise_octave_ratio():
    # 1/f power: each octave band holds the same power, so per-Hz density halves
    ratios = []
    for seed in range(100):
        x = gen_pink_noise(16000, 16000, seed).samples
        p250 = band_power(x, 16000, 250 / np.sqrt(2), 250 * np.sqrt(2)) / (250 * np.sqrt(2) - 250 / np.sqrt(2))
        p500 = band_power(x, 16000, 500 / np.sqrt(2), 500 * np.sqrt(2)) / (500 * np.sqrt(2) - 500 / np.sqrt(2))
        ratios.append(p250 / p500)
    assert abs(10 * np.log10(np.mean(ratios)) - 10 * np.log10(2.0)) <= 1.0


def test_pink_noise_rejects_empty():
    with pytest.raises(ValueError):
        gen_pink_noise(0, 16000, 0)


# ------------------------------------------------------------------ gating

def test_gate_endpoints_and_midpoint():
    rate, ramp = 16000, 0.04
    gain = gate_gain(16000, rate, ramp)
    n_ramp = round(ramp * rate)
    assert gain[0] == 0.0 and gain[-1] == 0.0
    assert gain[n_ramp] == 1.0 and gain[-n_ramp - 1] == 1.0
    assert abs(gain[n_ramp // 2] - 0.5) <= 1e-12
    assert abs(gain[-1 - n_ramp // 2] - 0.5) <= 1e-12
    assert np.all(np.diff(gain[:n_ramp + 1]) >= 0)


def test_gate_constant_interior_untouched():
    out = raised_cosine_gate(AudioClip(np.ones(8000), 16000), 0.04)
    np.testing.assert_array_equal(out.samples[640:-640], 1.0)


def test_gate_too_long():
    with pytest.raises(ValueError):
        raised_cosine_gate(AudioClip(np.ones(100), 1000), 0.06)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.05))
def test_gate_never_increases_magnitude(seed, ramp):
    x = np.random.default_rng(seed).standard_normal(2000)
    out = raised_cosine_gate(AudioClip(x, 16000), ramp)
    assert np.all(np.abs(out.samples) <= np.abs(x))


# ------------------------------------------------------------------ mixing

def test_noise_gain_formula():
    assert noise_gain(0.1, 1.0, 0.0) == pytest.approx(0.1)
    assert noise_gain(0.1, 1.0, -20.0) == pytest.approx(1.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        StimulusSpec(0.0, lead_sec=0.02, gate_sec=0.04)
    with pytest.raises(ValueError):
        StimulusSpec(float("nan"))
    with pytest.raises(ValueError):
        StimulusSpec(0.0, lead_sec=-1.0)
    assert StimulusSpec(math.inf).noiseless


def test_mix_infinite_snr_is_clean(speech_16k):
    stim = mix_at_snr(speech_16k.clip, speech_16k.voiced, StimulusSpec(math.inf, noise_seed=3))
    np.testing.assert_array_equal(stim.mixed.samples, stim.clean_aligned.samples)
    assert measure_snr(stim, speech_16k.voiced) == math.inf
    assert stim.achieved_snr_db == math.inf


def test_mix_timeline(speech_16k):
    clip = speech_16k.clip
    stim = mix_at_snr(clip, speech_16k.voiced, StimulusSpec(-6.0, noise_seed=1))
    lead = round(0.2 * clip.sample_rate)
    assert len(stim.mixed) == len(stim.clean_aligned) == len(clip) + 2 * lead
    np.testing.assert_array_equal(stim.clean_aligned.samples[lead:lead + len(clip)], clip.samples)
    assert not np.any(stim.clean_aligned.samples[:lead])
    assert stim.mixed.samples[0] == 0.0 and stim.mixed.samples[-1] == 0.0
    assert abs(measure_snr(stim, speech_16k.voiced) + 6.0) <= 0.01


def test_mix_gain_matches_voiced_rms(speech_16k):
    clip = speech_16k.clip
    spec = StimulusSpec(0.0, noise_seed=11)
    stim = mix_at_snr(clip, speech_16k.voiced, spec)
    noise = gen_pink_noise(len(stim.mixed), clip.sample_rate, 11).samples
    shifted = [VoicedSpan(s.start + 0.2, s.end + 0.2) for s in speech_16k.voiced]
    expected = rms(clip, speech_16k.voiced) / rms(AudioClip(noise, clip.sample_rate), shifted)
    assert stim.noise_gain == pytest.approx(expected, rel=1e-9)


def test_measure_snr_equal_energies():
    clean = AudioClip(np.random.default_rng(2).standard_normal(1000), 1000)
    stim = NoisyStimulus(clean.with_samples(2 * clean.samples), clean, 0.0, 0, 1000, 1.0)
    assert measure_snr(stim, []) == pytest.approx(0.0, abs=1e-12)


def test_mix_deterministic(speech_16k):
    spec = StimulusSpec(-3.0, noise_seed=99)
    a = mix_at_snr(speech_16k.clip, speech_16k.voiced, spec)
    b = mix_at_snr(speech_16k.clip, speech_16k.voiced, spec)
    assert a.mixed.samples.tobytes() == b.mixed.samples.tobytes()


def test_mix_overflow_flagged_not_clipped():
    clean = AudioClip(np.full(1600, 0.9), 16000)
    stim = mix_at_snr(clean, [], StimulusSpec(-20.0, noise_seed=0))
    assert stim.overflow
    assert stim.peak > 1.0


def test_mix_errors():
    silent = AudioClip(np.zeros(1600), 16000)
    with pytest.raises(ValueError, match="silent"):
        mix_at_snr(silent, [], StimulusSpec(0.0))
    with pytest.raises(ValueError):
        mix_at_snr(AudioClip(np.ones(1600), 16000), [VoicedSpan(0.05, 0.2)], StimulusSpec(0.0))
    with pytest.raises(ValueError):
        mix_at_snr(AudioClip(np.zeros(0), 16000), [], StimulusSpec(0.0))


@settings(max_examples=40, deadline=None)
@given(
    snr=st.floats(-20.0, 20.0),
    seed=st.integers(0, 2**64 - 1),
    n=st.integers(800, 4000),
    lead=st.floats(0.0, 0.1),
)
def test_round_trip_property(snr, seed, n, lead):
    rng = np.random.default_rng(seed % 2**32)
    clean = AudioClip(0.2 * rng.standard_normal(n), 8000)
    voiced = [VoicedSpan(0.01, n / 8000 * 0.5)]
    spec = StimulusSpec(snr, lead_sec=lead, tail_sec=lead, gate_sec=lead / 2, noise_seed=seed)
    stim = mix_at_snr(clean, voiced, spec)
    assert abs(measure_snr(stim, voiced) - snr) <= 0.01
    expected = n + 2 * round(lead * 8000)
    assert len(stim.mixed) == expected
