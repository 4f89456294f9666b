"""Shared-medium link behaviour on the raw core API, on both cores."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from keynetsim import _core_py
from keynetsim._engine import core as active_core


CORES = [_core_py]
if active_core is not _core_py:
    CORES.append(active_core)


@pytest.fixture(params=CORES, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def core(request):
    return request.param.Core()


class _Collect:
    def __init__(self):
        self.got = []

    def __call__(self, msg):
        self.got.append(msg)


def _drain(core, until=10**15):
    return core.run(until)


def test_single_send_delivers_after_delay(core):
    link = core.add_link(2_000_000, 0.0, 3_000_000_000, 7)
    sink = _Collect()
    core.channel_send(link, sink, "m")
    _drain(core)
    assert sink.got == ["m"]
    assert core.now() == 2_000_000
    assert core.link_counters(link) == (1, 0, 0)


def test_same_tick_collision_backs_off_second_sender(core):
    link = core.add_link(2_000_000, 0.0, 3_000_000_000, 7)
    sink = _Collect()
    core.channel_send(link, sink, "first")
    core.channel_send(link, sink, "second")
    _drain(core)
    assert sink.got[0] == "first"
    assert sorted(sink.got) == ["first", "second"]
    sends, backoffs, drops = core.link_counters(link)
    assert (sends, backoffs, drops) == (2, 1, 0)
    # the retry waited an exponential, so well past the first delivery
    assert core.now() > 4_000_000


def test_sends_on_distinct_ticks_never_backoff(core):
    link = core.add_link(2_000_000, 0.0, 3_000_000_000, 7)
    sink = _Collect()

    def send_at(t):
        core.schedule_py(t - core.now(), lambda: core.channel_send(
            link, sink, t))

    for t in range(0, 100_000, 10_000):
        send_at(t)
    _drain(core)
    assert sink.got == list(range(0, 100_000, 10_000))
    assert core.link_counters(link)[1] == 0


def test_loss_draws_only_when_configured(core):
    # loss 1.0 is excluded by config validation, but the core accepts
    # any probability; every send drops, none deliver
    link = core.add_link(2_000_000, 0.999999, 3_000_000_000, 7)
    sink = _Collect()
    for i in range(20):
        core.schedule_py(i * 10_000 if i else 0,
                         lambda: core.channel_send(link, sink, "x"))
    # schedule_py above runs its own sends; drain everything
    _drain(core)
    sends, backoffs, drops = core.link_counters(link)
    assert sink.got == [] or drops < sends  # nearly all drop
    assert drops >= 19


def test_exactly_once_no_loss_many_senders(core):
    """Same-tick storms with zero loss still deliver every message once."""
    link = core.add_link(2_000_000, 0.0, 3_000_000, 7)
    sink = _Collect()
    n = 50
    for i in range(n):
        core.channel_send(link, sink, i)
    _drain(core)
    assert sorted(sink.got) == list(range(n))
    sends, backoffs, drops = core.link_counters(link)
    assert sends == n
    assert drops == 0
    assert backoffs >= n - 1


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=500_000), min_size=1,
                max_size=40))
def test_exactly_once_property(times):
    """Arbitrary send schedule, no loss: every message delivered exactly
    once, and sends never exceed attempts."""
    core = _core_py.Core()
    link = core.add_link(1_000_000, 0.0, 2_000_000, 3)
    sink = _Collect()
    for i, t in enumerate(times):
        core.schedule_py(t, _Send(core, link, sink, i))
    core.run(10**15)
    assert sorted(sink.got) == list(range(len(times)))
    assert core.link_counters(link)[0] == len(times)


class _Send:
    def __init__(self, core, link, sink, tag):
        self.core = core
        self.link = link
        self.sink = sink
        self.tag = tag

    def __call__(self):
        self.core.channel_send(self.link, self.sink, self.tag)


def test_cores_draw_identical_backoffs():
    """Collision storms resolve with identical timing on both cores."""
    if len(CORES) < 2:
        pytest.skip("compiled core not built")
    ends = []
    counters = []
    for mod in CORES:
        core = mod.Core()
        link = core.add_link(2_000_000, 0.1, 3_000_000_000, 99)
        sink = _Collect()
        for _ in range(30):
            core.channel_send(link, sink, "x")
        core.run(10**15)
        ends.append(core.now())
        counters.append(core.link_counters(link))
    assert ends[0] == ends[1]
    assert counters[0] == counters[1]


# -- duplex modes over the channel facade ----------------------------------

from keynetsim import channel as channel_mod
from keynetsim import topology
from keynetsim.kernel import Simulator


def _mk_channel(full_duplex):
    sim = Simulator(42)
    topo = topology.padua_topology(delay=2_000_000, loss=0.0)
    return sim, channel_mod.Channel(sim, topo, 3_000_000_000, full_duplex)


def test_half_duplex_directions_share_the_medium():
    sim, ch = _mk_channel(False)
    sink = _Collect()
    ch.send_link(1, 2, sink, "fw")
    ch.send_link(2, 1, sink, "rv")
    sim.core.run(10**15)
    assert ch.link_counters()[(1, 2)] == {
        "sends": 2, "backoffs": 1, "drops": 0}
    assert sim.core.now() > 4_000_000  # loser waited out a backoff


def test_full_duplex_directions_are_independent():
    sim, ch = _mk_channel(True)
    sink = _Collect()
    ch.send_link(1, 2, sink, "fw")
    ch.send_link(2, 1, sink, "rv")
    sim.core.run(10**15)
    assert ch.link_counters()[(1, 2)] == {
        "sends": 2, "backoffs": 0, "drops": 0}
    assert sim.core.now() == 2_000_000
    assert sorted(sink.got) == ["fw", "rv"]


def test_full_duplex_same_direction_still_collides():
    sim, ch = _mk_channel(True)
    sink = _Collect()
    ch.send_link(1, 2, sink, "a")
    ch.send_link(1, 2, sink, "b")
    sim.core.run(10**15)
    assert ch.link_counters()[(1, 2)] == {
        "sends": 2, "backoffs": 1, "drops": 0}
