# cython: language_level=3
# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled simulation core; twin of keynetsim._core_py.

Same state machines, same order: a run produces identical event sequences
and identical random draws on either core.  See the pure module for the
behavioural commentary; this file only restates what the C layout needs.
"""

from libc.stdlib cimport malloc, realloc, free
from libc.math cimport log

from keynetsim._core_py import EngineStopped, _Delivery

ctypedef unsigned long long u64

cdef enum:
    EV_PY = 0
    EV_EMIT = 1
    EV_EGRESS = 2
    EV_HOP = 3
    EV_ROT = 4
    EV_RETRY = 5

cdef double TWO_NEG53 = 2.0 ** -53
_MASK64 = (1 << 64) - 1


cdef struct Ev:
    long long t
    long long seq
    int kind
    int a
    int b
    int c


cdef struct CLink:
    long long delay
    double loss
    long long backoff_mean
    long long last_start
    long long sends
    long long backoffs
    long long drops
    u64 s0
    u64 s1
    u64 s2
    u64 s3


cdef struct CSess:
    long long t0
    long long t_end
    long long interval
    long long enc
    long long lifetime
    long long threshold
    long long pending
    long long next_j
    long long egress_j
    long long egress_busy_until
    long long active_until
    long long cache
    long long rx
    long long consumed
    long long lat_sum
    long long e_deliv_sum
    long long node
    int n_links
    Py_ssize_t links_off
    bint started
    bint emitting
    bint egress_scheduled
    bint have_active
    bint request_pending


cdef inline u64 _splitmix_step(u64* state) noexcept nogil:
    cdef u64 z
    state[0] = state[0] + <u64>0x9E3779B97F4A7C15
    z = state[0]
    z = (z ^ (z >> 30)) * <u64>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <u64>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline void _seed_link(CLink* link, u64 seed) noexcept nogil:
    cdef u64 st = seed
    link.s0 = _splitmix_step(&st)
    link.s1 = _splitmix_step(&st)
    link.s2 = _splitmix_step(&st)
    link.s3 = _splitmix_step(&st)


cdef inline u64 _link_next(CLink* link) noexcept nogil:
    cdef u64 s0 = link.s0
    cdef u64 s1 = link.s1
    cdef u64 s2 = link.s2
    cdef u64 s3 = link.s3
    cdef u64 r = s1 * 5
    r = ((r << 7) | (r >> 57)) * 9
    cdef u64 t = s1 << 17
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = (s3 << 45) | (s3 >> 19)
    link.s0 = s0
    link.s1 = s1
    link.s2 = s2
    link.s3 = s3
    return r


cdef inline double _link_uniform(CLink* link) noexcept nogil:
    return <double>((_link_next(link) >> 11) + 1) * TWO_NEG53


cdef inline long long _link_exponential(CLink* link) noexcept nogil:
    return <long long>(-(<double>link.backoff_mean)
                       * log(_link_uniform(link)))


cdef class Core:
    cdef public long long clock
    cdef long long next_seq
    cdef Ev* heap
    cdef Py_ssize_t heap_n
    cdef Py_ssize_t heap_cap
    cdef dict objs
    cdef set cancelled
    cdef Py_ssize_t cancelled_n
    cdef CLink* clinks
    cdef Py_ssize_t n_links
    cdef Py_ssize_t links_cap
    cdef CSess* csess
    cdef Py_ssize_t n_sess
    cdef Py_ssize_t sess_cap
    cdef int* sess_links
    cdef Py_ssize_t sl_n
    cdef Py_ssize_t sl_cap
    cdef list request_cbs
    cdef public bint stopped
    cdef public long long processed
    cdef public long long n_cancelled

    def __cinit__(self):
        self.clock = 0
        self.next_seq = 0
        self.heap_cap = 1024
        self.heap = <Ev*>malloc(self.heap_cap * sizeof(Ev))
        if self.heap == NULL:
            raise MemoryError
        self.heap_n = 0
        self.objs = {}
        self.cancelled = set()
        self.cancelled_n = 0
        self.clinks = NULL
        self.n_links = 0
        self.links_cap = 0
        self.csess = NULL
        self.n_sess = 0
        self.sess_cap = 0
        self.sess_links = NULL
        self.sl_n = 0
        self.sl_cap = 0
        self.request_cbs = []
        self.stopped = False
        self.processed = 0
        self.n_cancelled = 0

    def __dealloc__(self):
        free(self.heap)
        free(self.clinks)
        free(self.csess)
        free(self.sess_links)

    # -- engine ------------------------------------------------------------

    def now(self):
        return self.clock

    cdef long long _push(self, long long at, int kind, int a, int b,
                         int c) except -1:
        cdef long long seq = self.next_seq
        cdef Py_ssize_t i, p
        cdef Ev ev
        cdef Ev* heap
        self.next_seq = seq + 1
        if self.heap_n == self.heap_cap:
            self.heap_cap *= 2
            heap = <Ev*>realloc(self.heap, self.heap_cap * sizeof(Ev))
            if heap == NULL:
                raise MemoryError
            self.heap = heap
        heap = self.heap
        ev.t = at
        ev.seq = seq
        ev.kind = kind
        ev.a = a
        ev.b = b
        ev.c = c
        i = self.heap_n
        self.heap_n = i + 1
        while i > 0:
            p = (i - 1) >> 1
            if heap[p].t > at or (heap[p].t == at and heap[p].seq > seq):
                heap[i] = heap[p]
                i = p
            else:
                break
        heap[i] = ev
        return seq

    cdef void _pop_root(self) noexcept:
        cdef Ev* heap = self.heap
        cdef Py_ssize_t n = self.heap_n - 1
        cdef Py_ssize_t i = 0
        cdef Py_ssize_t child
        cdef Ev last = heap[n]
        self.heap_n = n
        while True:
            child = 2 * i + 1
            if child >= n:
                break
            if child + 1 < n and (
                    heap[child + 1].t < heap[child].t
                    or (heap[child + 1].t == heap[child].t
                        and heap[child + 1].seq < heap[child].seq)):
                child += 1
            if (heap[child].t < last.t
                    or (heap[child].t == last.t
                        and heap[child].seq < last.seq)):
                heap[i] = heap[child]
                i = child
            else:
                break
        heap[i] = last

    def schedule_py(self, delay, cb):
        if self.stopped:
            raise EngineStopped("engine is stopped; cannot schedule")
        if delay < 0:
            raise ValueError("negative delay")
        cdef long long seq = self._push(self.clock + delay, EV_PY, 0, 0, 0)
        self.objs[seq] = cb
        return seq

    def cancel(self, handle):
        self.cancelled.add(handle)
        self.cancelled_n = len(self.cancelled)

    def stop(self):
        self.stopped = True

    def run(self, until):
        cdef long long limit = until
        cdef long long processed = 0
        cdef long long cancelled = 0
        cdef long long t, seq
        cdef int kind, a, b, c
        cdef object obj
        while self.heap_n > 0:
            t = self.heap[0].t
            if t > limit:
                break
            seq = self.heap[0].seq
            kind = self.heap[0].kind
            a = self.heap[0].a
            b = self.heap[0].b
            c = self.heap[0].c
            self._pop_root()
            if self.cancelled_n > 0 and seq in self.cancelled:
                self.cancelled.discard(seq)
                self.cancelled_n = len(self.cancelled)
                self.objs.pop(seq, None)
                cancelled += 1
                continue
            self.clock = t
            processed += 1
            try:
                if kind == EV_HOP:
                    self._on_hop(a, b, c, t)
                elif kind == EV_EGRESS:
                    self._on_egress(a, t)
                elif kind == EV_EMIT:
                    self._on_emit(a, t)
                elif kind == EV_ROT:
                    self._on_rotate(a, t)
                elif kind == EV_PY:
                    obj = self.objs.pop(seq)
                    obj()
                else:  # EV_RETRY
                    obj = self.objs.pop(seq)
                    self._attempt(obj[0], obj[1], obj[2], t)
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
        cdef CLink* links
        cdef CLink* link
        if self.n_links == self.links_cap:
            self.links_cap = 8 if self.links_cap == 0 else self.links_cap * 2
            links = <CLink*>realloc(self.clinks,
                                    self.links_cap * sizeof(CLink))
            if links == NULL:
                raise MemoryError
            self.clinks = links
        link = &self.clinks[self.n_links]
        link.delay = delay
        link.loss = loss
        link.backoff_mean = backoff_mean
        link.last_start = -1
        link.sends = 0
        link.backoffs = 0
        link.drops = 0
        _seed_link(link, <u64>(seed & _MASK64))
        self.n_links += 1
        return self.n_links - 1

    def channel_send(self, link_idx, cb, msg):
        self._attempt(link_idx, cb, msg, self.clock)

    cdef int _attempt(self, Py_ssize_t link_idx, object cb, object msg,
                      long long t) except -1:
        cdef CLink* link = &self.clinks[link_idx]
        cdef long long retry, seq
        if link.last_start == t:
            link.backoffs += 1
            retry = _link_exponential(link)
            if retry < 1:
                retry = 1
            seq = self._push(t + retry, EV_RETRY, 0, 0, 0)
            self.objs[seq] = (link_idx, cb, msg)
            return 0
        link.last_start = t
        link.sends += 1
        if link.loss > 0.0 and _link_uniform(link) < link.loss:
            link.drops += 1
            return 0
        seq = self._push(t + link.delay, EV_PY, 0, 0, 0)
        self.objs[seq] = _Delivery(cb, msg)
        return 0

    def link_counters(self, link_idx):
        cdef CLink* link = &self.clinks[<Py_ssize_t>link_idx]
        return link.sends, link.backoffs, link.drops

    # -- encryptor sessions ------------------------------------------------

    def add_session(self, node, interval, enc, lifetime, threshold, links,
                    request_cb):
        cdef CSess* sess
        cdef CSess* s
        cdef int* sl
        cdef Py_ssize_t need, i
        cdef tuple ltup = tuple(links)
        if self.n_sess == self.sess_cap:
            self.sess_cap = 16 if self.sess_cap == 0 else self.sess_cap * 2
            sess = <CSess*>realloc(self.csess,
                                   self.sess_cap * sizeof(CSess))
            if sess == NULL:
                raise MemoryError
            self.csess = sess
        need = self.sl_n + len(ltup)
        if need > self.sl_cap:
            self.sl_cap = 64 if self.sl_cap == 0 else self.sl_cap
            while self.sl_cap < need:
                self.sl_cap *= 2
            sl = <int*>realloc(self.sess_links,
                               self.sl_cap * sizeof(int))
            if sl == NULL:
                raise MemoryError
            self.sess_links = sl
        s = &self.csess[self.n_sess]
        s.t0 = 0
        s.t_end = 0
        s.interval = interval
        s.enc = enc
        s.lifetime = lifetime
        s.threshold = threshold
        s.pending = 0
        s.next_j = 0
        s.egress_j = 0
        s.egress_busy_until = 0
        s.active_until = 0
        s.cache = 0
        s.rx = 0
        s.consumed = 0
        s.lat_sum = 0
        s.e_deliv_sum = 0
        s.node = node
        s.n_links = len(ltup)
        s.links_off = self.sl_n
        s.started = False
        s.emitting = False
        s.egress_scheduled = False
        s.have_active = False
        s.request_pending = False
        for i in range(len(ltup)):
            self.sess_links[self.sl_n + i] = ltup[i]
        self.sl_n = need
        self.request_cbs.append(request_cb)
        self.n_sess += 1
        return self.n_sess - 1

    def session_start(self, idx, t0, t_end):
        cdef CSess* s = &self.csess[<Py_ssize_t>idx]
        s.t0 = t0
        s.t_end = t_end
        s.started = True
        s.emitting = True
        self._push(t0, EV_EMIT, idx, 0, 0)

    def session_install(self, idx, n_keys):
        cdef Py_ssize_t i = idx
        cdef CSess* s = &self.csess[i]
        cdef long long now = self.clock
        cdef long long at
        s.cache += n_keys
        s.request_pending = False
        if not s.have_active and (now <= s.t_end or s.pending > 0):
            self._activate(i, now)
            s = &self.csess[i]
        if s.started and not s.emitting and s.have_active:
            self._resume_emission(i, now)
            s = &self.csess[i]
        if s.pending > 0 and not s.egress_scheduled and s.have_active:
            at = now if s.egress_busy_until < now else s.egress_busy_until
            self._push(at, EV_EGRESS, <int>i, 0, 0)
            s.egress_scheduled = True

    def session_counters(self, idx):
        cdef CSess* s = &self.csess[<Py_ssize_t>idx]
        return s.rx, s.consumed, s.cache

    cdef int _activate(self, Py_ssize_t idx, long long now) except -1:
        # the Python refill callback runs last: it may reenter the core
        # and move the session arrays
        cdef CSess* s = &self.csess[idx]
        cdef bint want_refill
        if s.cache <= 0:
            return 0
        s.cache -= 1
        s.consumed += 1
        s.have_active = True
        if s.lifetime > 0:
            s.active_until = now + s.lifetime
            self._push(s.active_until, EV_ROT, <int>idx, 0, 0)
            s = &self.csess[idx]
        want_refill = s.cache <= s.threshold and not s.request_pending
        if want_refill:
            s.request_pending = True
            (<object>self.request_cbs[idx])(idx)
        return 0

    cdef inline long long _grid_count(self, CSess* s,
                                      long long t) noexcept:
        cdef long long horizon = t if t < s.t_end else s.t_end
        if horizon < s.t0:
            return 0
        return (horizon - s.t0) // s.interval + 1

    cdef int _resume_emission(self, Py_ssize_t idx, long long now) except -1:
        cdef CSess* s = &self.csess[idx]
        cdef long long target = self._grid_count(s, now)
        cdef long long nxt
        if target > s.next_j:
            s.pending += target - s.next_j
            s.next_j = target
        nxt = s.t0 + s.next_j * s.interval
        if nxt <= s.t_end:
            self._push(nxt, EV_EMIT, <int>idx, 0, 0)
            s = &self.csess[idx]
            s.emitting = True
        return 0

    cdef int _on_emit(self, Py_ssize_t idx, long long t) except -1:
        cdef CSess* s = &self.csess[idx]
        cdef long long at, nxt
        s.pending += 1
        s.next_j += 1
        if not s.have_active:
            # grid suspended; install reconstructs the backlog
            s.emitting = False
            return 0
        if not s.egress_scheduled:
            at = t if s.egress_busy_until < t else s.egress_busy_until
            self._push(at, EV_EGRESS, <int>idx, 0, 0)
            s = &self.csess[idx]
            s.egress_scheduled = True
        nxt = t + s.interval
        if nxt <= s.t_end:
            self._push(nxt, EV_EMIT, <int>idx, 0, 0)
        else:
            s.emitting = False
        return 0

    cdef int _on_egress(self, Py_ssize_t idx, long long t) except -1:
        cdef CSess* s = &self.csess[idx]
        cdef long long j
        s.egress_scheduled = False
        if not s.have_active or s.pending == 0:
            return 0
        j = s.egress_j
        s.egress_j = j + 1
        s.pending -= 1
        s.egress_busy_until = t + s.enc
        self._push(s.egress_busy_until, EV_HOP, <int>idx, <int>j, 0)
        s = &self.csess[idx]
        if s.pending > 0:
            self._push(s.egress_busy_until, EV_EGRESS, <int>idx, 0, 0)
            s = &self.csess[idx]
            s.egress_scheduled = True
        return 0

    cdef int _on_hop(self, Py_ssize_t idx, int j, int hop,
                     long long t) except -1:
        cdef CSess* s = &self.csess[idx]
        cdef CLink* link
        cdef long long e_j, retry
        if hop == s.n_links:
            s.rx += 1
            e_j = s.t0 + <long long>j * s.interval
            s.lat_sum += t - e_j
            s.e_deliv_sum += e_j
            return 0
        link = &self.clinks[self.sess_links[s.links_off + hop]]
        if link.last_start == t:
            link.backoffs += 1
            retry = _link_exponential(link)
            if retry < 1:
                retry = 1
            self._push(t + retry, EV_HOP, <int>idx, j, hop)
            return 0
        link.last_start = t
        link.sends += 1
        if link.loss > 0.0 and _link_uniform(link) < link.loss:
            link.drops += 1
            return 0
        self._push(t + link.delay, EV_HOP, <int>idx, j, hop + 1)
        return 0

    cdef int _on_rotate(self, Py_ssize_t idx, long long t) except -1:
        cdef CSess* s = &self.csess[idx]
        if t < s.active_until:
            # superseded timer (re-activation happened); ignore
            return 0
        s.have_active = False
        # a fresh key only matters while traffic can still use it
        if t <= s.t_end or s.pending > 0:
            self._activate(idx, t)
        return 0

    def session_finalize(self, idx, end):
        cdef CSess* s = &self.csess[<Py_ssize_t>idx]
        cdef long long tx, emitted_sum, censored
        if not s.started:
            return 0, s.rx, s.consumed, s.lat_sum, 0
        tx = self._grid_count(s, end)
        emitted_sum = tx * s.t0 + s.interval * (tx * (tx - 1) // 2)
        censored = (tx - s.rx) * end - (emitted_sum - s.e_deliv_sum)
        return tx, s.rx, s.consumed, s.lat_sum, censored
