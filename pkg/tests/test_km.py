"""Key stores and the key-management message machine."""

import pytest

from keynetsim import km
from keynetsim.quantum import encrypt_parity
from keynetsim.topology import LinkSpec


def _store(capacity=1000):
    link = LinkSpec(endpoints=(2, 5), key_rate=100.0, delay=2_000_000)
    return km.LinkStore(link, capacity)


# -- parity ----------------------------------------------------------------

def test_encrypt_parity_lower_endpoint_even():
    assert encrypt_parity((2, 5), 2) == 0
    assert encrypt_parity((2, 5), 5) == 1
    with pytest.raises(ValueError):
        encrypt_parity((2, 5), 3)


# -- store mechanics -------------------------------------------------------

def test_add_batch_splits_parities():
    store = _store()
    store.add_batch(5)  # ids 0..4: evens 0,2,4; odds 1,3
    assert store.generated == 5
    assert store.level == 5
    assert store.take(0, cm=False) == 0
    assert store.take(0, cm=False) == 2
    assert store.take(0, cm=False) == 4
    assert store.take(0, cm=False) is None
    assert store.take(1, cm=False) == 1
    assert store.take(1, cm=False) == 3
    assert store.take(1, cm=False) is None


def test_batches_merge_into_contiguous_runs():
    store = _store()
    store.add_batch(2)
    store.add_batch(3)  # contiguous ids 0..4
    got = [store.take(0, cm=False) for _ in range(3)]
    assert got == [0, 2, 4]


def test_ids_never_reused_and_monotone():
    store = _store()
    store.add_batch(10)
    seen = set()
    for parity in (0, 1):
        prev = -1
        while True:
            key = store.take(parity, cm=False)
            if key is None:
                break
            assert key not in seen
            assert key > prev
            prev = key
            seen.add(key)
    assert len(seen) == 10
    assert store.monotone
    assert store.consumed == 10
    assert store.level == 0


def test_capacity_discards_overflow():
    store = _store(capacity=4)
    store.add_batch(10)
    assert store.generated == 10
    assert store.level == 4
    assert store.discarded == 6
    # conservation: generated == consumed + stored + discarded
    assert store.generated == store.consumed + store.level + store.discarded


def test_waiters_fifo_per_parity_and_consume():
    store = _store()
    order = []

    def taker(tag, parity):
        def cb(s):
            key = s.take(parity, cm=False)
            order.append((tag, key))
        return cb

    store.wait(0, taker("a", 0))
    store.wait(0, taker("b", 0))
    store.wait(1, taker("c", 1))
    store.add_batch(2)  # ids 0 (even), 1 (odd)
    # one even key: only the first even waiter runs; odd waiter runs too
    assert ("a", 0) in order and ("c", 1) in order
    assert all(tag != "b" for tag, _ in order)
    store.add_batch(2)  # ids 2 (even), 3 (odd)
    assert ("b", 2) in order


def test_transport_vs_cm_consumption_counters():
    store = _store()
    store.add_batch(10)
    store.take(0, cm=False)
    store.take(0, cm=True)
    store.take(1, cm=True)
    assert store.consumed_transport == 1
    assert store.consumed_cm == 2
    assert store.consumed == 3


def test_counters_dict_shape():
    store = _store()
    store.add_batch(3)
    store.take(0, cm=False)
    counters = store.counters()
    assert counters == {
        "generated": 3, "consumed": 1, "consumed_transport": 1,
        "consumed_cm": 0, "stored": 2, "discarded": 0,
        "relayed_keys": 0,
    }


def test_conservation_under_interleaving():
    store = _store(capacity=7)
    total = 0
    for n in (3, 5, 2, 9, 1):
        store.add_batch(n)
        total += n
        store.take(0, cm=False)
        store.take(1, cm=True)
    assert store.generated == total
    assert store.generated == store.consumed + store.level + store.discarded


# -- message shapes --------------------------------------------------------

def test_message_final_dst_defaults_to_route_end():
    msg = km.KmMessage(km.TRANSPORT, 1, (1, 2, 3), 0, n_keys=3)
    assert msg.final_dst == 3
    assert msg.hop == 0


def test_message_without_route_keeps_explicit_dst():
    msg = km.KmMessage(km.SETUP, 4, None, 0, final_dst=99)
    assert msg.route is None
    assert msg.final_dst == 99


def test_cm_kinds_exclude_transport_and_negotiation():
    assert km.TRANSPORT not in km.CM_KINDS
    assert km.ACK not in km.CM_KINDS
    assert km.NEGOTIATE not in km.CM_KINDS
    for kind in (km.SETUP, km.STATUS, km.VECTOR_REQ, km.VECTOR_REP,
                 km.TABLE, km.GO):
        assert kind in km.CM_KINDS
