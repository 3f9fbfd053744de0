import numpy as np
import pytest

from intelkit.audio import AudioClip
from intelkit.synth import synth_utterance


@pytest.fixture(scope="session")
def speech_10k():
    """Speech-like clip synthesised directly at the metric analysis rate."""
    return synth_utterance(3, utt_id="s10k", sample_rate=10000, n_syllables=10)


@pytest.fixture(scope="session")
def speech_16k():
    return synth_utterance(5, utt_id="s16k", sample_rate=16000, n_syllables=8)


def tone(freq, duration, rate, amplitude=1.0):
    t = np.arange(round(duration * rate)) / rate
    return AudioClip(amplitude * np.sin(2 * np.pi * freq * t), rate)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
