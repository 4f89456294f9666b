"""Deterministic event kernel: simulated clock, ordered event queue and
named random streams on top of the selected core."""

import hashlib
from dataclasses import dataclass

from . import _engine
from ._core_py import MASK64, EngineStopped, Rng

MS = 1_000_000
SEC = 1_000_000_000


def ms(value):
    """Milliseconds to integer ticks (1 tick = 1 ns)."""
    return round(value * MS)


def sec(value):
    """Seconds to integer ticks."""
    return round(value * SEC)


def derive_seed(seed, label):
    """64-bit stream seed from (run seed, stream label).

    Hash-based so streams are independent and adding a stream never shifts
    another stream's sequence.
    """
    h = hashlib.blake2b(label.encode("utf-8"), digest_size=8,
                        key=(seed & MASK64).to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little")


def sample_exponential(stream, mean):
    """One exponential draw (integer ticks) with the given mean."""
    if mean <= 0:
        raise ValueError("exponential mean must be > 0")
    return stream.exponential(mean)


@dataclass
class RunReport:
    processed: int
    cancelled: int
    clock: int


class Simulator:
    """One simulation run: a core instance plus its named random streams.

    Python-side modules draw from streams created here (always the pure
    Rng, identical under either core); the core keeps its own per-link
    streams for channel backoff and loss.
    """

    def __init__(self, seed, core_module=None):
        self._mod = core_module if core_module is not None else _engine.core
        self.core = self._mod.Core()
        self.seed = seed
        self.compiled = self._mod is not _engine._core_py
        self._streams = {}

    def stream(self, label):
        rng = self._streams.get(label)
        if rng is None:
            rng = Rng(derive_seed(self.seed, label))
            self._streams[label] = rng
        return rng

    def stream_seed(self, label):
        return derive_seed(self.seed, label)

    def now(self):
        return self.core.now()

    def schedule(self, delay, callback):
        return self.core.schedule_py(delay, callback)

    def cancel(self, handle):
        self.core.cancel(handle)

    def run(self, until):
        processed, cancelled, clock = self.core.run(until)
        return RunReport(processed, cancelled, clock)

    def stop(self):
        self.core.stop()


__all__ = ["MS", "SEC", "ms", "sec", "derive_seed", "sample_exponential",
           "RunReport", "Simulator", "Rng", "EngineStopped"]
