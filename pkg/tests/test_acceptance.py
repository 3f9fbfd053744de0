"""Acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` line with the measured quantity; the
lines are printed together in the terminal summary.
"""

import math
import time
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

import reference_stoi as ref
from conftest import ACCEPTANCE_LINES
from intelkit import cli
from intelkit.audio import AudioClip
from intelkit.embedding import fit_pca, project, reconstruct, replace_component
from intelkit.intelligibility import estoi, estoi_curve, stoi
from intelkit.stats import STIMULUS_TYPES, one_way_anova, tukey_hsd
from intelkit.stimulus import StimulusSpec, derive_seed, gate_gain, gen_pink_noise, measure_snr, mix_at_snr
from intelkit.synth import synth_embeddings, synth_utterance, two_resonance_vowel, write_demo_corpus
from intelkit.vowels import (
    FormantSample,
    FormantWarning,
    SegmentAnnotation,
    convex_hull,
    shoelace_area,
    vowel_formants,
    vowel_space_area,
)


def record(number, name, ok, detail):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {name}: {detail}")
    assert ok, detail


def test_criterion_01_estoi_identity():
    worst, slowest = 0.0, 0.0
    for seed in range(10):
        clip = synth_utterance(seed, sample_rate=16000, n_syllables=22).clip
        start = time.perf_counter()
        value = estoi(clip, clip).value
        elapsed = (time.perf_counter() - start) * 5.0 / clip.duration
        worst = max(worst, abs(value - 1.0))
        slowest = max(slowest, elapsed)
    record(1, "eSTOI identity", worst <= 1e-6 and slowest < 1.0,
           f"max |estoi(x,x)-1| = {worst:.2e}, slowest {slowest:.3f} s per 5 s clip")


def oracle_corpus():
    pairs = []
    for u in range(4):
        utt = synth_utterance(200 + u, utt_id=f"oracle{u}", sample_rate=10000, n_syllables=10)
        for snr in (math.inf, 0.0, -3.0, -6.0, -9.0):
            stim = mix_at_snr(utt.clip, utt.voiced, StimulusSpec(snr, noise_seed=derive_seed(11, utt.utt_id, snr)))
            pairs.append((stim.clean_aligned, stim.mixed))
    return pairs


def test_criterion_02_oracle_equivalence():
    pairs = oracle_corpus()
    assert len(pairs) == 20
    worst_estoi = max(abs(estoi(x, y).value - ref.estoi(x.samples, y.samples)) for x, y in pairs)
    worst_stoi = max(abs(stoi(x, y).value - ref.stoi(x.samples, y.samples)) for x, y in pairs)
    record(2, "eSTOI/STOI vs independent reference", worst_estoi <= 0.01 and worst_stoi <= 0.01,
           f"max |d| eSTOI = {worst_estoi:.4f}, STOI = {worst_stoi:.4f} over {len(pairs)} pairs (tol 0.01)")


def test_criterion_03_curve_trend():
    levels = [0.0, -3.0, -6.0, -9.0]
    monotone = 0
    for seed in range(10):
        utt = synth_utterance(300 + seed, utt_id=f"trend{seed}", sample_rate=16000, n_syllables=8)
        scores = [s for _, s in estoi_curve(utt.clip, utt.voiced, levels, seed=seed, utt_id=utt.utt_id)]
        monotone += all(b <= a + 0.02 for a, b in zip(scores, scores[1:]))
    record(3, "eSTOI curve non-increasing", monotone >= 9, f"{monotone}/10 seeds non-increasing within 0.02")


def test_criterion_04_snr_round_trip():
    worst = 0.0
    for seed in range(5):
        utt = synth_utterance(400 + seed, sample_rate=16000)
        for target in (-20.0, -9.0, -6.0, -3.0, 0.0, 6.0):
            stim = mix_at_snr(utt.clip, utt.voiced, StimulusSpec(target, noise_seed=seed))
            worst = max(worst, abs(measure_snr(stim, utt.voiced) - target))
    record(4, "SNR round trip", worst <= 0.01, f"max |measured - target| = {worst:.2e} dB")


def third_octave_psd(x, rate):
    spectrum = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(x.size, 1 / rate)
    centres = 100.0 * 2.0 ** (np.arange(17) / 3)
    centres = centres[centres <= 4000.0]
    psd = []
    for fc in centres:
        lo, hi = fc * 2 ** (-1 / 6), fc * 2 ** (1 / 6)
        psd.append(spectrum[(freqs >= lo) & (freqs < hi)].mean())
    return centres, np.array(psd)


def test_criterion_05_pink_slope():
    slopes = []
    for seed in range(100):
        x = gen_pink_noise(32000, 16000, seed).samples
        centres, psd = third_octave_psd(x, 16000)
        slopes.append(np.polyfit(np.log10(centres), np.log10(psd), 1)[0])
    slope = float(np.mean(slopes))
    same = all(gen_pink_noise(4096, 16000, s).samples.tobytes() == gen_pink_noise(4096, 16000, s).samples.tobytes()
               for s in range(5))
    record(5, "pink-noise slope", abs(slope + 1.0) <= 0.1 and same,
           f"mean log-PSD slope {slope:.4f} over 100 seeds; bit-exact per seed: {same}")


def test_criterion_06_gating():
    rate, ramp = 16000, 0.04
    gain = gate_gain(rate, rate, ramp)
    n_ramp = round(ramp * rate)
    endpoints = gain[0] == 0.0 and gain[-1] == 0.0 and gain[n_ramp] == 1.0
    midpoint = abs(gain[n_ramp // 2] - 0.5)
    rng = np.random.default_rng(0)
    increased = any(np.any(np.abs(x * gain) > np.abs(x)) for x in rng.standard_normal((50, rate)))
    record(6, "gating contract", endpoints and midpoint <= 1e-12 and not increased,
           f"endpoints exact: {endpoints}, |midpoint-0.5| = {midpoint:.1e}, magnitude increased: {increased}")


ORDER_VIOLATIONS = []


@settings(max_examples=1000, deadline=None, database=None)
@given(st.floats(250.0, 900.0), st.floats(1.2, 3.0), st.floats(80.0, 200.0), st.integers(0, 2**32 - 1))
def check_formant_order(f1, ratio, f0, seed):
    clip = two_resonance_vowel(f1, f1 * ratio, 60.0, 90.0, f0=f0, duration=0.025, sample_rate=10000)
    noisy = clip.with_samples(clip.samples + 0.05 * np.random.default_rng(seed).standard_normal(len(clip)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FormantWarning)
        found = vowel_formants(noisy, [SegmentAnnotation("p", "a", 0.0, 0.025)])
    ORDER_VIOLATIONS.extend(s for s in found if not s.f1 < s.f2)


def test_criterion_07_formant_recovery():
    clip = two_resonance_vowel(500.0, 1500.0, 60.0, 90.0, f0=100.0, duration=0.3, sample_rate=16000)
    (sample,) = vowel_formants(clip, [SegmentAnnotation("v", "a", 0.0, 0.3)])
    err1, err2 = abs(sample.f1 / 500.0 - 1), abs(sample.f2 / 1500.0 - 1)
    ORDER_VIOLATIONS.clear()
    check_formant_order()
    record(7, "formant recovery", err1 <= 0.03 and err2 <= 0.03 and not ORDER_VIOLATIONS,
           f"F1 {sample.f1:.1f} Hz ({100 * err1:.2f}%), F2 {sample.f2:.1f} Hz ({100 * err2:.2f}%), "
           f"f1>=f2 on {len(ORDER_VIOLATIONS)} of 1000 random frames")


def test_criterion_08_vowel_geometry():
    square = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    unit = shoelace_area([square[i] for i in convex_hull(square)])
    rng = np.random.default_rng(8)
    ok_perm = ok_interior = ok_scale = True
    for _ in range(200):
        f1 = rng.uniform(250, 900, 5)
        f2 = rng.uniform(1000, 2600, 5)
        samples = [FormantSample(v, a, b, 50.0, 50.0) for v, a, b in zip("aeiou", f1, f2)]
        base = vowel_space_area(samples)
        perm = [samples[i] for i in rng.permutation(5)]
        ok_perm &= vowel_space_area(perm).area == base.area
        # a fifth vowel placed strictly inside the hull of the other four leaves the area unchanged
        four = vowel_space_area(samples[:4])
        if not four.degenerate:
            weights = rng.dirichlet(np.ones(len(four.hull)))
            inside = tuple(float(np.dot(weights, [p[i] for p in four.hull])) for i in range(2))
            if inside[0] < inside[1]:
                with_u = vowel_space_area(samples[:4] + [FormantSample("u", *inside, 50.0, 50.0)])
                ok_interior &= abs(with_u.area - four.area) <= 1e-9 * four.area
        c = rng.uniform(0.1, 10.0)
        scaled = vowel_space_area([FormantSample(s.vowel, c * s.f1, c * s.f2, 50.0, 50.0) for s in samples])
        ok_scale &= abs(scaled.area - c * c * base.area) <= 1e-9 * max(c * c * base.area, 1e-300)
    record(8, "vowel-space geometry", unit == 1.0 and ok_perm and ok_interior and ok_scale,
           f"unit square area {unit}, permutation {ok_perm}, interior point {ok_interior}, c^2 scaling {ok_scale}")


def test_criterion_09_pca():
    data = synth_embeddings(9)
    n, dim = data.vectors.shape
    full = fit_pca(data, min(n - 1, dim))
    ortho = float(np.max(np.abs(full.components @ full.components.T - np.eye(full.n_components))))
    rebuilt = reconstruct(full, project(full, data.vectors))
    recon = float(np.linalg.norm(rebuilt - data.vectors) / np.linalg.norm(data.vectors))
    model = fit_pca(data, 4)
    rng = np.random.default_rng(9)
    drift = idem = target_err = 0.0
    for k in range(4):
        for v in data.vectors[:10]:
            target = rng.normal(0, 3)
            once = replace_component(model, v, k, target)
            before, after = project(model, v), project(model, once)
            target_err = max(target_err, abs(after[k] - target))
            drift = max(drift, float(np.max(np.abs(np.delete(after - before, k)))))
            idem = max(idem, float(np.max(np.abs(replace_component(model, once, k, target) - once))))
    again = fit_pca(synth_embeddings(9), 4)
    identical = all(getattr(model, f).tobytes() == getattr(again, f).tobytes()
                    for f in ("mean", "components", "explained_variance"))
    ok = ortho <= 1e-10 and recon <= 1e-8 and drift <= 1e-10 and target_err <= 1e-10 and idem <= 1e-12 and identical
    record(9, "PCA", ok, f"orthonormality {ortho:.1e}, reconstruction {recon:.1e}, other-score drift {drift:.1e}, "
                         f"idempotence {idem:.1e}, bit-identical {identical}")


def test_criterion_10_stats_oracle():
    fixed = [[1.0, 2.0, 3.0], [2.0, 3.0, 4.0], [3.0, 4.0, 5.0]]
    anova = one_way_anova(fixed)
    q13 = tukey_hsd(dict(zip("abc", fixed))).pair("a", "c").q
    rng = np.random.default_rng(2024)
    table = {label: list(rng.normal(0.5 + 0.05 * i, 0.1, 10)) for i, label in enumerate(STIMULUS_TYPES)}
    p_ours = tukey_hsd(table).p_matrix(list(table))
    p_ref = sps.tukey_hsd(*table.values()).pvalue
    p_err = float(np.max(np.abs(p_ours - p_ref)))
    identity = 0.0
    for seed in range(20):
        r = np.random.default_rng(seed)
        a, b = r.normal(0, 1, 8), r.normal(0.4, 1, 11)
        q = tukey_hsd({"a": a, "b": b}).pair("a", "b").q
        f = one_way_anova([a, b]).f_stat
        identity = max(identity, abs(q * q - 2 * f) / max(1.0, 2 * f))
    ok = (anova.f_stat == 3.0 and abs(anova.p_value - 0.125) <= 1e-3 and abs(q13 - 2 / math.sqrt(1 / 3)) <= 1e-6
          and p_err <= 1e-3 and identity <= 1e-9)
    record(10, "stats oracle", ok, f"F = {anova.f_stat!r}, p = {anova.p_value:.6f}, q13 = {q13:.7f}, "
                                   f"Tukey p max |d| vs scipy = {p_err:.1e}, max |q^2-2F| = {identity:.1e}")


def run_pipeline(corpus, out):
    manifest = str(corpus["manifest"])
    steps = [
        ["mix", "--manifest", manifest, "--snr", "-9,-6,-3,0,inf", "--seed", "7", "--out", str(out / "mix")],
        ["curve", "--manifest", manifest, "--seed", "7", "--svg", "--out", str(out / "curve")],
        ["vowels", "--manifest", manifest, "--annotations", str(corpus["annotations"]), "--svg",
         "--out", str(out / "vowels")],
        ["pca", "--embeddings", str(corpus["embeddings"]), "--replace-speaker", "M105", "--expect-dim", "128",
         "--svg", "--out", str(out / "pca")],
        ["stats", "--trials", str(corpus["trials"]), "--svg", "--out", str(out / "stats")],
    ]
    start = time.perf_counter()
    codes = [cli.main(argv) for argv in steps]
    return codes, time.perf_counter() - start


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.mark.slow
def test_criterion_11_end_to_end(tmp_path):
    corpus = write_demo_corpus(tmp_path / "corpus", n_utterances=20, seed=0)
    codes_a, time_a = run_pipeline(corpus, tmp_path / "run_a")
    codes_b, time_b = run_pipeline(corpus, tmp_path / "run_b")
    tree_a, tree_b = tree_bytes(tmp_path / "run_a"), tree_bytes(tmp_path / "run_b")
    identical = tree_a == tree_b
    ok = codes_a == codes_b == [0] * 5 and identical and max(time_a, time_b) <= 120.0
    record(11, "end-to-end determinism", ok,
           f"exit codes {codes_a}, {len(tree_a)} files byte-identical: {identical}, "
           f"runtime {time_a:.1f} s / {time_b:.1f} s per run (limit 120 s)")
