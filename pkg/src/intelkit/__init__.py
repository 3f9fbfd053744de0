"""Speech-in-noise intelligibility toolkit: stimulus mixing, eSTOI, vowel space,
speaker-embedding PCA and listening-test statistics."""

__version__ = "0.1.0"
