"""Labelled, reproducible random streams.

Every consumer of randomness gets its own stream derived from one root seed
and a text label, so adding draws in one component never shifts another.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

STREAM_LABELS = ("trace", "trace-val", "trace-eval", "episode", "init", "noise", "replay", "des")


def _label_key(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class SeededStream:
    seed: int
    stream_id: str
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFF, self.seed >> 32, _label_key(self.stream_id)])
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, label: str) -> "SeededStream":
        """A new independent stream named ``<stream_id>/<label>`` under the same seed."""
        return SeededStream(self.seed, f"{self.stream_id}/{label}")

    # thin conveniences over the generator
    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def exponential(self, scale=1.0, size=None):
        return self.generator.exponential(scale, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)


def stream_bundle(seed: int, labels=STREAM_LABELS) -> dict[str, SeededStream]:
    """One stream per label, all derived from ``seed``."""
    return {label: SeededStream(seed, label) for label in labels}
