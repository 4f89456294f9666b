"""Quantum layer: each link is a paired key source feeding both endpoint
key stores with an identical id sequence.

Raw material accrues once per second with uniform jitter; whole keys clear
a fixed post-processing delay before landing in the store.  Ids alternate
even/odd, which is the parity split the KM layer consumes by direction.
"""

from .kernel import SEC


def encrypt_parity(endpoints, node):
    """Parity a node consumes when encrypting on a link: the lower-id
    endpoint takes even ids, the higher-id endpoint odd ids."""
    a, b = endpoints
    low = a if a < b else b
    if node != a and node != b:
        raise ValueError("node %r not on link %r" % (node, endpoints))
    return 0 if node == low else 1


class QkdSource:
    """Generation process for one link."""

    def __init__(self, sim, link, store, jitter, post_processing,
                 efficiency, tick=SEC, on_batch=None):
        self.sim = sim
        self.link = link
        self.store = store
        self.jitter = jitter
        self.post_processing = post_processing
        self.efficiency = efficiency
        self.tick = tick
        self.on_batch = on_batch
        self.fraction = 0.0
        self.emitted = 0
        label = "qkd/%d-%d" % link.endpoints
        self.rng = sim.stream(label)
        offset = int(sim.stream("qkd-offset/%d-%d" % link.endpoints).uniform()
                     * tick)
        sim.schedule(offset + tick, self._on_tick)

    def _on_tick(self):
        factor = 1.0
        if self.jitter > 0.0:
            factor = 1.0 + self.jitter * (2.0 * self.rng.uniform() - 1.0)
        self.fraction += self.link.key_rate * self.efficiency * factor \
            * (self.tick / SEC)
        whole = int(self.fraction)
        if whole > 0:
            self.fraction -= whole
            self.emitted += whole
            self.sim.schedule(self.post_processing, _Batch(self, whole))
        self.sim.schedule(self.tick, self._on_tick)


class _Batch:
    __slots__ = ("source", "count")

    def __init__(self, source, count):
        self.source = source
        self.count = count

    def __call__(self):
        src = self.source
        src.store.add_batch(self.count)
        if src.on_batch is not None:
            src.on_batch(src.link, self.count)
