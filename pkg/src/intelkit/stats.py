"""Listening-test statistics: word-correct rates, one-way ANOVA and Tukey HSD.

The F and studentized-range tail probabilities are computed here rather than
borrowed: the F tail through a continued-fraction incomplete beta, and the
studentized range CDF by nested adaptive Gauss-Legendre quadrature.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtr

from .stimulus import parse_snr, snr_label

log = logging.getLogger(__name__)

STIMULUS_TYPES = ("non-expert", "announcer", "vc1", "vc2")
PAIR_COLUMNS = (
    ("non-expert", "vc1"),
    ("non-expert", "vc2"),
    ("non-expert", "announcer"),
    ("announcer", "vc1"),
    ("announcer", "vc2"),
    ("vc1", "vc2"),
)

BETA_TOL = 1e-12
QUAD_TOL = 1e-6
_GL_NODES, _GL_WEIGHTS = leggauss(20)
_MAX_DEPTH = 30


# ------------------------------------------------------------ special functions

def _beta_cf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 10000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < BETA_TOL:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc_reg needs a, b > 0")
    if not 0.0 <= x <= 1.0:
        raise ValueError("betainc_reg needs 0 <= x <= 1")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def f_sf(f: float, df1: float, df2: float) -> float:
    """Upper tail P(F > f) of the F distribution."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return betainc_reg(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))


def _gauss_legendre(func, a: float, b: float):
    half, mid = (b - a) / 2.0, (a + b) / 2.0
    return half * (func(mid + half * _GL_NODES) @ _GL_WEIGHTS)


def adaptive_gauss_legendre(
    func: Callable[[np.ndarray], np.ndarray], a: float, b: float, tol: float = QUAD_TOL
):
    """Integrate ``func`` over ``[a, b]`` by recursive bisection of 20-point Gauss-Legendre panels.

    ``func`` maps node arrays of shape ``(m,)`` to values of shape ``(..., m)``,
    so a batch of integrands can share one refinement; the error test uses the
    worst member of the batch.
    """

    def refine(lo, hi, whole, tol, depth):
        mid = (lo + hi) / 2.0
        left = _gauss_legendre(func, lo, mid)
        right = _gauss_legendre(func, mid, hi)
        if depth >= _MAX_DEPTH or np.max(np.abs(left + right - whole)) <= tol:
            return left + right
        return refine(lo, mid, left, tol / 2, depth + 1) + refine(mid, hi, right, tol / 2, depth + 1)

    return refine(a, b, _gauss_legendre(func, a, b), tol, 0)


def _range_cdf_normal(w: np.ndarray, k: int) -> np.ndarray:
    """P(range of k standard normals < w), vectorized over ``w``."""
    w = np.atleast_1d(np.asarray(w, dtype=np.float64))
    out = np.zeros_like(w)
    pos = w > 0
    if pos.any():
        wp = w[pos][:, None]

        def integrand(z):
            spread = ndtr(z) - ndtr(z - wp)
            return k * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi) * spread ** (k - 1)

        out[pos] = sum(adaptive_gauss_legendre(integrand, lo, hi) for lo, hi in ((-8.5, 0.0), (0.0, 8.5)))
    return np.clip(out, 0.0, 1.0)


def ptukey(q: float, k: int, df: float) -> float:
    """CDF of the studentized range for ``k`` means and ``df`` error degrees of freedom.

    Integrates the normal-range probability against the density of
    ``s = sqrt(chi2_df / df)``.
    """
    if k < 2:
        raise ValueError("studentized range needs k >= 2")
    if not df > 0 or math.isinf(df):
        raise ValueError("df must be positive and finite")
    if q <= 0:
        return 0.0
    if math.isinf(q):
        return 1.0
    log_norm = 0.5 * df * math.log(df) - math.lgamma(0.5 * df) - (0.5 * df - 1.0) * math.log(2.0)

    def integrand(s):
        with np.errstate(divide="ignore"):
            log_density = log_norm + (df - 1.0) * np.log(s) - 0.5 * df * s * s
        return np.exp(log_density) * _range_cdf_normal(q * s, k)

    # the scale density is unimodal near 1 with spread about 1/sqrt(2 df)
    spread = 1.0 / math.sqrt(2.0 * df)
    mode = math.sqrt(max(df - 1.0, 0.0) / df)
    upper = mode + 14.0 * spread + 1.0
    cuts = sorted({0.0, upper} | {c for c in (mode + j * spread for j in (-8, -4, -1, 0, 1, 4, 8)) if 0 < c < upper})
    total = sum(adaptive_gauss_legendre(integrand, lo, hi) for lo, hi in zip(cuts[:-1], cuts[1:]))
    return float(min(1.0, max(0.0, total)))


def tukey_sf(q: float, k: int, df: float) -> float:
    return float(min(1.0, max(0.0, 1.0 - ptukey(q, k, df))))


# ---------------------------------------------------------------- ANOVA / Tukey

@dataclass(frozen=True)
class AnovaResult:
    f_stat: float
    df_between: int
    df_within: int
    p_value: float
    ms_between: float
    ms_within: float
    degenerate: bool = False


@dataclass(frozen=True)
class TukeyPair:
    a: str
    b: str
    mean_diff: float  # mean(a) - mean(b)
    q: float
    p_value: float
    significant: bool


@dataclass(frozen=True)
class TukeyResult:
    pairs: tuple
    alpha: float
    ms_within: float
    df_within: int
    k: int

    def pair(self, a: str, b: str) -> TukeyPair:
        for p in self.pairs:
            if (p.a, p.b) == (a, b):
                return p
            if (p.a, p.b) == (b, a):
                return TukeyPair(a, b, -p.mean_diff, p.q, p.p_value, p.significant)
        raise KeyError(f"no pair ({a}, {b})")

    def p_matrix(self, labels: Sequence[str]) -> np.ndarray:
        out = np.ones((len(labels), len(labels)))
        for i, j in itertools.combinations(range(len(labels)), 2):
            out[i, j] = out[j, i] = self.pair(labels[i], labels[j]).p_value
        return out


def _validate_groups(groups) -> list[np.ndarray]:
    arrays = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if len(arrays) < 2:
        raise ValueError("need at least 2 groups")
    for i, g in enumerate(arrays):
        if g.size < 2:
            raise ValueError(f"group {i} has {g.size} values; at least 2 are needed")
        if not np.all(np.isfinite(g)):
            raise ValueError(f"group {i} contains non-finite values")
    return arrays


def _within_stats(arrays):
    n_total = sum(g.size for g in arrays)
    means = [math.fsum(g) / g.size for g in arrays]
    ss_within = math.fsum(math.fsum((g - m) ** 2) for g, m in zip(arrays, means))
    df_within = n_total - len(arrays)
    return means, n_total, ss_within, df_within


def one_way_anova(groups: Sequence[Sequence[float]]) -> AnovaResult:
    arrays = _validate_groups(groups)
    means, n_total, ss_within, df_within = _within_stats(arrays)
    grand = math.fsum(math.fsum(g) for g in arrays) / n_total
    ss_between = math.fsum(g.size * (m - grand) ** 2 for g, m in zip(arrays, means))
    df_between = len(arrays) - 1
    ms_between = ss_between / df_between
    ms_within = ss_within / df_within
    if ms_within == 0:
        if ms_between == 0:
            raise ValueError("all values are identical; the F statistic is undefined")
        return AnovaResult(math.inf, df_between, df_within, 0.0, ms_between, 0.0, degenerate=True)
    f_stat = ms_between / ms_within
    return AnovaResult(f_stat, df_between, df_within, f_sf(f_stat, df_between, df_within), ms_between, ms_within)


def tukey_hsd(groups: Mapping[str, Sequence[float]], alpha: float = 0.05) -> TukeyResult:
    """All pairwise Tukey-Kramer comparisons between the labelled groups."""
    labels = list(groups)
    arrays = _validate_groups([groups[lab] for lab in labels])
    means, _, ss_within, df_within = _within_stats(arrays)
    ms_within = ss_within / df_within
    if ms_within == 0:
        raise ValueError("within-group variance is zero; Tukey HSD is undefined")
    k = len(labels)
    pairs = []
    for i, j in itertools.combinations(range(k), 2):
        diff = means[i] - means[j]
        se = math.sqrt(ms_within / 2.0 * (1.0 / arrays[i].size + 1.0 / arrays[j].size))
        q = abs(diff) / se
        p = tukey_sf(q, k, df_within)
        pairs.append(TukeyPair(labels[i], labels[j], diff, q, p, p < alpha))
    return TukeyResult(tuple(pairs), alpha, ms_within, df_within, k)


# ---------------------------------------------------------------- trial tables

@dataclass(frozen=True)
class TrialRecord:
    participant: str
    word: str
    snr_db: float
    stimulus_type: str
    correct: bool

    def __post_init__(self):
        if self.stimulus_type not in STIMULUS_TYPES:
            raise ValueError(f"unknown stimulus type {self.stimulus_type!r}; expected one of {STIMULUS_TYPES}")


@dataclass(frozen=True)
class RateCell:
    participant: str
    snr_db: float
    stimulus_type: str
    n_trials: int
    n_correct: int

    @property
    def rate(self) -> float:
        return self.n_correct / self.n_trials


@dataclass(frozen=True)
class RateSummary:
    snr_db: float
    stimulus_type: str
    n_participants: int
    mean: float
    se: float


@dataclass
class RateTable:
    cells: list = field(default_factory=list)
    summary: list = field(default_factory=list)

    def snr_levels(self) -> list[float]:
        return sorted({c.snr_db for c in self.cells})

    def participant_rates(self, snr_db: float) -> dict[str, list[float]]:
        """Per-participant rates at one SNR, keyed by stimulus type in canonical order."""
        out = {}
        for stype in STIMULUS_TYPES:
            cells = sorted((c for c in self.cells if c.snr_db == snr_db and c.stimulus_type == stype),
                           key=lambda c: c.participant)
            if cells:
                out[stype] = [c.rate for c in cells]
        return out


def _type_order(stype: str) -> int:
    return STIMULUS_TYPES.index(stype)


def word_correct_rates(trials: Sequence[TrialRecord]) -> RateTable:
    counts: dict[tuple, list[int]] = {}
    for t in trials:
        cell = counts.setdefault((t.participant, t.snr_db, t.stimulus_type), [0, 0])
        cell[0] += 1
        cell[1] += int(bool(t.correct))
    cells = [
        RateCell(p, snr, stype, n, c)
        for (p, snr, stype), (n, c) in sorted(counts.items(), key=lambda kv: (kv[0][1], _type_order(kv[0][2]), kv[0][0]))
    ]
    summary = []
    for (snr, stype), group in itertools.groupby(cells, key=lambda c: (c.snr_db, c.stimulus_type)):
        rates = [c.rate for c in group]
        mean = math.fsum(rates) / len(rates)
        if len(rates) > 1:
            sd = math.sqrt(math.fsum((r - mean) ** 2 for r in rates) / (len(rates) - 1))
            se = sd / math.sqrt(len(rates))
        else:
            se = math.nan
        summary.append(RateSummary(snr, stype, len(rates), mean, se))
    return RateTable(cells, summary)


@dataclass(frozen=True)
class SnrAnalysis:
    snr_db: float
    anova: AnovaResult | None
    tukey: TukeyResult | None
    note: str = ""


def analyze_by_snr(table: RateTable, alpha: float = 0.05) -> list[SnrAnalysis]:
    """One ANOVA and one Tukey HSD per SNR level over per-participant rates."""
    out = []
    for snr in table.snr_levels():
        groups = table.participant_rates(snr)
        try:
            anova = one_way_anova(list(groups.values()))
            tukey = tukey_hsd(groups, alpha)
        except ValueError as exc:
            log.warning("SNR %s: %s", snr_label(snr), exc)
            out.append(SnrAnalysis(snr, None, None, str(exc)))
            continue
        out.append(SnrAnalysis(snr, anova, tukey))
    return out


# ------------------------------------------------------------------------ files

def _parse_correct(text: str) -> bool:
    text = text.strip()
    if text not in ("0", "1"):
        raise ValueError(f"correct must be 0 or 1, got {text!r}")
    return text == "1"


def read_trials(path) -> list[TrialRecord]:
    """Read ``participant,word,snr_db,stimulus_type,correct`` rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"participant", "word", "snr_db", "stimulus_type", "correct"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(
                    TrialRecord(
                        row["participant"],
                        row["word"],
                        parse_snr(row["snr_db"]),
                        row["stimulus_type"].strip(),
                        _parse_correct(row["correct"]),
                    )
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    if not out:
        raise ValueError(f"{path}: no trials")
    return out


def write_trials(path, trials: Sequence[TrialRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["participant", "word", "snr_db", "stimulus_type", "correct"])
        for t in trials:
            writer.writerow([t.participant, t.word, snr_label(t.snr_db), t.stimulus_type, int(t.correct)])


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.10g}"


def write_rates(path, table: RateTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["snr_db", "stimulus_type", "n_participants", "mean_rate", "se"])
        for s in table.summary:
            writer.writerow([snr_label(s.snr_db), s.stimulus_type, s.n_participants, _fmt(s.mean), _fmt(s.se)])


def write_participant_rates(path, table: RateTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["participant", "snr_db", "stimulus_type", "n_trials", "n_correct", "rate"])
        for c in table.cells:
            writer.writerow([c.participant, snr_label(c.snr_db), c.stimulus_type, c.n_trials, c.n_correct, _fmt(c.rate)])


def write_anova(path, analyses: Sequence[SnrAnalysis]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["snr_db", "f", "df1", "df2", "p"])
        for a in analyses:
            if a.anova is None:
                writer.writerow([snr_label(a.snr_db), "nan", "", "", "nan"])
                continue
            r = a.anova
            writer.writerow([snr_label(a.snr_db), _fmt(r.f_stat), r.df_between, r.df_within, _fmt(r.p_value)])


def pair_column(a: str, b: str) -> str:
    return f"{a}|{b}"


def write_tukey(path, analyses: Sequence[SnrAnalysis]) -> None:
    """Wide layout: one row per SNR, a p-value and a significance column per pair."""
    header = ["snr_db"]
    for a, b in PAIR_COLUMNS:
        header += [f"p:{pair_column(a, b)}", f"significant:{pair_column(a, b)}"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for an in analyses:
            row = [snr_label(an.snr_db)]
            for a, b in PAIR_COLUMNS:
                try:
                    pair = an.tukey.pair(a, b) if an.tukey else None
                except KeyError:
                    pair = None
                row += ["nan", ""] if pair is None else [_fmt(pair.p_value), str(pair.significant).lower()]
            writer.writerow(row)
