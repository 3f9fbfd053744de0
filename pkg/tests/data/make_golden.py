"""Regenerate the stats golden files from scipy (independent of intelkit.stats).

Run from the repository root: ``python3 tests/data/make_golden.py``.
"""

import csv
from collections import defaultdict
from pathlib import Path

from scipy import stats

from intelkit.stats import write_trials
from intelkit.synth import synth_trials

HERE = Path(__file__).parent
SEED = 2024
TYPES = ("non-expert", "announcer", "vc1", "vc2")


def main():
    trials_path = HERE / "stats_trials.csv"
    write_trials(trials_path, synth_trials(SEED))
    counts = defaultdict(lambda: [0, 0])
    with open(trials_path, newline="") as fh:
        for row in csv.DictReader(fh):
            cell = counts[(row["snr_db"], row["stimulus_type"], row["participant"])]
            cell[0] += 1
            cell[1] += int(row["correct"])
    levels = sorted({k[0] for k in counts}, key=float)
    with open(HERE / "stats_anova_golden.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["snr_db", "f", "df1", "df2", "p"])
        for level in levels:
            groups = []
            for stype in TYPES:
                participants = sorted(p for (s, t, p) in counts if s == level and t == stype)
                groups.append([counts[(level, stype, p)][1] / counts[(level, stype, p)][0] for p in participants])
            res = stats.f_oneway(*groups)
            n_total = sum(len(g) for g in groups)
            writer.writerow([level, f"{res.statistic:.10g}", len(groups) - 1, n_total - len(groups), f"{res.pvalue:.10g}"])


if __name__ == "__main__":
    main()
