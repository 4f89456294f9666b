"""Pure-Python simulation core.

Event heap, seeded random streams, the shared-medium link channel and the
network-encryptor packet fast path live here.  keynetsim._core is the
compiled twin: both implement the same state machines in the same order,
so a run produces identical event sequences and identical random draws on
either core.

All times are integer nanosecond ticks.
"""

from heapq import heappush, heappop
from math import log

MASK64 = (1 << 64) - 1

# Event kinds.  EV_PY carries a Python callable; the rest are internal to
# the fast path and carry only integers.
EV_PY = 0
EV_EMIT = 1
EV_EGRESS = 2
EV_HOP = 3
EV_ROT = 4
EV_RETRY = 5


class EngineStopped(RuntimeError):
    pass


def _splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


class Rng:
    """xoshiro256** stream, state expanded from a 64-bit seed via splitmix64.

    One instance per stochastic source, so adding a consumer never perturbs
    another source's sequence.
    """

    __slots__ = ("s0", "s1", "s2", "s3")

    def __init__(self, seed):
        st = seed & MASK64
        st, self.s0 = _splitmix64(st)
        st, self.s1 = _splitmix64(st)
        st, self.s2 = _splitmix64(st)
        st, self.s3 = _splitmix64(st)

    def next_u64(self):
        s0 = self.s0
        s1 = self.s1
        s2 = self.s2
        s3 = self.s3
        r = (s1 * 5) & MASK64
        r = ((((r << 7) | (r >> 57)) & MASK64) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & MASK64
        self.s0 = s0
        self.s1 = s1
        self.s2 = s2
        self.s3 = s3
        return r

    def uniform(self):
        # in (0, 1]; never 0, so log() below is safe
        return ((self.next_u64() >> 11) + 1) * 2.0 ** -53

    def exponential(self, mean):
        return int(-mean * log(self.uniform()))


class Link:
    """Shared half-duplex medium between two nodes.

    A transmission that starts on the same tick as an earlier one collides
    and backs off; the earlier send wins.  Loss, when configured, is drawn
    from the link's own stream after the collision check.
    """

    __slots__ = ("delay", "loss", "backoff_mean", "rng", "last_start",
                 "sends", "backoffs", "drops")

    def __init__(self, delay, loss, backoff_mean, seed):
        self.delay = delay
        self.loss = loss
        self.backoff_mean = backoff_mean
        self.rng = Rng(seed)
        self.last_start = -1
        self.sends = 0
        self.backoffs = 0
        self.drops = 0


class Session:
    """Constant-bit-rate encryptor session from one node to a fixed peer.

    Packet emissions sit on the grid t0 + j*interval, so a blocked session
    needs no per-packet events: the backlog is reconstructed arithmetically
    when a key arrives.
    """

    __slots__ = (
        "idx", "node", "t0", "t_end", "interval", "enc", "lifetime",
        "threshold", "links", "request_cb",
        "started", "emitting", "pending", "next_j", "egress_j",
        "egress_busy_until", "egress_scheduled",
        "have_active", "active_until", "cache", "request_pending",
        "rx", "consumed", "lat_sum", "e_deliv_sum",
    )

    def __init__(self, idx, node, interval, enc, lifetime, threshold,
                 links, request_cb):
        self.idx = idx
        self.node = node
        self.t0 = 0
        self.t_end = 0
        self.interval = interval
        self.enc = enc
        self.lifetime = lifetime
        self.threshold = threshold
        self.links = links
        self.request_cb = request_cb
        self.started = False
        self.emitting = False
        self.pending = 0
        self.next_j = 0
        self.egress_j = 0
        self.egress_busy_until = 0
        self.egress_scheduled = False
        self.have_active = False
        self.active_until = 0
        self.cache = 0
        self.request_pending = False
        self.rx = 0
        self.consumed = 0
        self.lat_sum = 0
        self.e_deliv_sum = 0


class Core:
    def __init__(self):
        self.clock = 0
        self.next_seq = 0
        self.heap = []
        self.objs = {}
        self.cancelled = set()
        self.links = []
        self.sessions = []
        self.stopped = False
        self.processed = 0
        self.n_cancelled = 0

    # -- engine ------------------------------------------------------------

    def now(self):
        return self.clock

    def _push(self, at, kind, a, b, c):
        seq = self.next_seq
        self.next_seq = seq + 1
        heappush(self.heap, (at, seq, kind, a, b, c))
        return seq

    def schedule_py(self, delay, cb):
        if self.stopped:
            raise EngineStopped("engine is stopped; cannot schedule")
        if delay < 0:
            raise ValueError("negative delay")
        seq = self._push(self.clock + delay, EV_PY, 0, 0, 0)
        self.objs[seq] = cb
        return seq

    def cancel(self, handle):
        self.cancelled.add(handle)

    def stop(self):
        self.stopped = True

    def run(self, until):
        heap = self.heap
        processed = 0
        cancelled = 0
        while heap:
            ev = heap[0]
            t = ev[0]
            if t > until:
                break
            heappop(heap)
            seq = ev[1]
            if seq in self.cancelled:
                self.cancelled.discard(seq)
                self.objs.pop(seq, None)
                cancelled += 1
                continue
            self.clock = t
            processed += 1
            kind = ev[2]
            try:
                if kind == EV_PY:
                    cb = self.objs.pop(seq)
                    cb()
                elif kind == EV_EMIT:
                    self._on_emit(self.sessions[ev[3]], t)
                elif kind == EV_EGRESS:
                    self._on_egress(self.sessions[ev[3]], t)
                elif kind == EV_HOP:
                    self._on_hop(self.sessions[ev[3]], ev[4], ev[5], t)
                elif kind == EV_ROT:
                    self._on_rotate(self.sessions[ev[3]], t)
                else:  # EV_RETRY
                    link_idx, cb, msg = self.objs.pop(seq)
                    self._attempt(link_idx, cb, msg, t)
            except EngineStopped:
                raise
            except Exception as exc:
                raise RuntimeError(
                    "event failed: seq=%d kind=%d at t=%d: %s"
                    % (seq, kind, t, exc)) from exc
        self.processed += processed
        self.n_cancelled += cancelled
        return processed, cancelled, self.clock

    # -- channel -----------------------------------------------------------

    def add_link(self, delay, loss, backoff_mean, seed):
        self.links.append(Link(delay, loss, backoff_mean, seed))
        return len(self.links) - 1

    def channel_send(self, link_idx, cb, msg):
        self._attempt(link_idx, cb, msg, self.clock)

    def _attempt(self, link_idx, cb, msg, t):
        link = self.links[link_idx]
        if link.last_start == t:
            link.backoffs += 1
            retry = t + max(1, link.rng.exponential(link.backoff_mean))
            seq = self._push(retry, EV_RETRY, 0, 0, 0)
            self.objs[seq] = (link_idx, cb, msg)
            return
        link.last_start = t
        link.sends += 1
        if link.loss > 0.0 and link.rng.uniform() < link.loss:
            link.drops += 1
            return
        seq = self._push(t + link.delay, EV_PY, 0, 0, 0)
        self.objs[seq] = _Delivery(cb, msg)

    def link_counters(self, link_idx):
        link = self.links[link_idx]
        return link.sends, link.backoffs, link.drops

    # -- encryptor sessions ------------------------------------------------

    def add_session(self, node, interval, enc, lifetime, threshold, links,
                    request_cb):
        idx = len(self.sessions)
        self.sessions.append(Session(idx, node, interval, enc, lifetime,
                                     threshold, tuple(links), request_cb))
        return idx

    def session_start(self, idx, t0, t_end):
        s = self.sessions[idx]
        s.t0 = t0
        s.t_end = t_end
        s.started = True
        s.emitting = True
        self._push(t0, EV_EMIT, idx, 0, 0)

    def session_install(self, idx, n_keys):
        s = self.sessions[idx]
        s.cache += n_keys
        s.request_pending = False
        now = self.clock
        if not s.have_active and (now <= s.t_end or s.pending > 0):
            self._activate(s, now)
        if s.started and not s.emitting and s.have_active:
            self._resume_emission(s, now)
        if s.pending > 0 and not s.egress_scheduled and s.have_active:
            at = now if s.egress_busy_until < now else s.egress_busy_until
            self._push(at, EV_EGRESS, idx, 0, 0)
            s.egress_scheduled = True

    def session_counters(self, idx):
        s = self.sessions[idx]
        return s.rx, s.consumed, s.cache

    def _activate(self, s, now):
        if s.cache <= 0:
            return
        s.cache -= 1
        s.consumed += 1
        s.have_active = True
        if s.lifetime > 0:
            s.active_until = now + s.lifetime
            self._push(s.active_until, EV_ROT, s.idx, 0, 0)
        if s.cache <= s.threshold and not s.request_pending:
            s.request_pending = True
            s.request_cb(s.idx)

    def _grid_count(self, s, t):
        # emissions with t0 + j*interval <= min(t, t_end)
        horizon = t if t < s.t_end else s.t_end
        if horizon < s.t0:
            return 0
        return (horizon - s.t0) // s.interval + 1

    def _resume_emission(self, s, now):
        target = self._grid_count(s, now)
        if target > s.next_j:
            s.pending += target - s.next_j
            s.next_j = target
        nxt = s.t0 + s.next_j * s.interval
        if nxt <= s.t_end:
            self._push(nxt, EV_EMIT, s.idx, 0, 0)
            s.emitting = True

    def _on_emit(self, s, t):
        s.pending += 1
        s.next_j += 1
        if not s.have_active:
            # grid suspended; install reconstructs the backlog
            s.emitting = False
            return
        if not s.egress_scheduled:
            at = t if s.egress_busy_until < t else s.egress_busy_until
            self._push(at, EV_EGRESS, s.idx, 0, 0)
            s.egress_scheduled = True
        nxt = t + s.interval
        if nxt <= s.t_end:
            self._push(nxt, EV_EMIT, s.idx, 0, 0)
        else:
            s.emitting = False

    def _on_egress(self, s, t):
        s.egress_scheduled = False
        if not s.have_active or s.pending == 0:
            return
        j = s.egress_j
        s.egress_j = j + 1
        s.pending -= 1
        s.egress_busy_until = t + s.enc
        self._push(s.egress_busy_until, EV_HOP, s.idx, j, 0)
        if s.pending > 0:
            self._push(s.egress_busy_until, EV_EGRESS, s.idx, 0, 0)
            s.egress_scheduled = True

    def _on_hop(self, s, j, hop, t):
        if hop == len(s.links):
            s.rx += 1
            e_j = s.t0 + j * s.interval
            s.lat_sum += t - e_j
            s.e_deliv_sum += e_j
            return
        link = self.links[s.links[hop]]
        if link.last_start == t:
            link.backoffs += 1
            retry = t + max(1, link.rng.exponential(link.backoff_mean))
            self._push(retry, EV_HOP, s.idx, j, hop)
            return
        link.last_start = t
        link.sends += 1
        if link.loss > 0.0 and link.rng.uniform() < link.loss:
            link.drops += 1
            return
        self._push(t + link.delay, EV_HOP, s.idx, j, hop + 1)

    def _on_rotate(self, s, t):
        if t < s.active_until:
            # superseded timer (re-activation happened); ignore
            return
        s.have_active = False
        # A fresh key is only worth consuming while traffic can still use
        # it: during the emission window, or while a drain tail remains.
        if t <= s.t_end or s.pending > 0:
            self._activate(s, t)

    def session_finalize(self, idx, end):
        """Return (tx, rx, consumed, lat_sum, censored_sum) at time end.

        Undelivered packets (queued, in the encryptor, or on the wire)
        each contribute their age end - emit_time to censored_sum.
        """
        s = self.sessions[idx]
        if not s.started:
            return 0, s.rx, s.consumed, s.lat_sum, 0
        tx = self._grid_count(s, end)
        emitted_sum = tx * s.t0 + s.interval * (tx * (tx - 1) // 2)
        censored = (tx - s.rx) * end - (emitted_sum - s.e_deliv_sum)
        return tx, s.rx, s.consumed, s.lat_sum, censored


class _Delivery:
    __slots__ = ("cb", "msg")

    def __init__(self, cb, msg):
        self.cb = cb
        self.msg = msg

    def __call__(self):
        self.cb(self.msg)
