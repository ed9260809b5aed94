"""Seeded random streams.

All randomness flows through numpy's counter-based Philox generator. Each
purpose (data generation, splitting, initialization, variational noise,
minibatching, pruning and replay draws, evaluation noise) gets its own stream derived
from the run seed and a stable CRC32 of the purpose name, so any one stream
can be replayed on its own and the draws do not depend on platform or on the
order in which the other streams are consumed.
"""
import zlib
import numpy as np

PURPOSES = ("data", "split", "init", "noise", "outer", "minibatch", "prune", "replay", "eval")


def purpose_key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def make_generator(seed: int, purpose: str) -> np.random.Generator:
    sequence = np.random.SeedSequence([int(seed), purpose_key(purpose)])
    return np.random.Generator(np.random.Philox(sequence))


class RandomStreams:

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, purpose: str) -> np.random.Generator:
        if purpose not in self._streams:
            self._streams[purpose] = make_generator(self.seed, purpose)
        return self._streams[purpose]

    def fresh(self, purpose: str) -> np.random.Generator:
        """A new generator positioned at the start of the purpose stream."""
        return make_generator(self.seed, purpose)

    def normal(self, shape, purpose: str = "noise") -> np.ndarray:
        return self.stream(purpose).standard_normal(shape)
