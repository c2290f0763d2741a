"""Seed splitting: one master seed, one labelled stream per role."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


# stream tags; the label of a stream is [seed, tag, *indices]
STREAM_SAMPLE = 1
STREAM_NOISE = 2
STREAM_CHANNEL = 3
STREAM_LINK = 4
STREAM_SERVER = 5
STREAM_INIT = 6
STREAM_DATA = 7
STREAM_PARTITION = 8


@dataclass(frozen=True)
class Streams:
    """Derives independent generators from a master seed.

    Worker streams (sample, noise, init) are keyed by worker index only and
    persist across rounds. Channel streams are keyed by round and receiver
    (and sender for orthogonal links), so the same round of two schemes
    draws from the same labels.
    """

    seed: int

    def generator(self, tag: int, *indices: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, tag, *indices]))

    def sample(self, worker: int) -> np.random.Generator:
        return self.generator(STREAM_SAMPLE, worker)

    def noise(self, worker: int) -> np.random.Generator:
        return self.generator(STREAM_NOISE, worker)

    def init(self, worker: int) -> np.random.Generator:
        return self.generator(STREAM_INIT, worker)

    def channel(self, round_index: int, receiver: int) -> np.random.Generator:
        return self.generator(STREAM_CHANNEL, round_index, receiver)

    def link(self, round_index: int, sender: int, receiver: int) -> np.random.Generator:
        return self.generator(STREAM_LINK, round_index, sender, receiver)

    def server(self, round_index: int) -> np.random.Generator:
        return self.generator(STREAM_SERVER, round_index)

    def data(self) -> np.random.Generator:
        return self.generator(STREAM_DATA)

    def partition_seed(self) -> int:
        return int(self.generator(STREAM_PARTITION).integers(0, 2**31 - 1))
