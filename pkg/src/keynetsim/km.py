"""Key-management layer.

Each link has one shared LinkStore holding the id sequence produced by the
quantum layer; both endpoints see the same pool and consume disjoint
parities (see quantum.encrypt_parity).  NodeKms relays key-transport
messages hop by hop, consuming one relay key per hop from the store of the
outgoing link, serialises outgoing messages through a per-node encryption
stage, and speaks the setup / status / routing-vector protocols with the
controller.  In the CM-via-KMS architecture those control messages ride
the same relay path and are key-charged at a configurable ratio.
"""

from collections import deque

from .quantum import encrypt_parity

TRANSPORT = "transport"
ACK = "ack"
NEGOTIATE = "negotiate"
NEGOTIATE_ACK = "negotiate_ack"
SETUP = "setup"
STATUS = "status"
VECTOR_REQ = "vector_req"
VECTOR_REP = "vector_rep"
TABLE = "table"
GO = "go"

# Control-plane kinds that are key-charged when relayed through the KMS.
CM_KINDS = frozenset({SETUP, STATUS, VECTOR_REQ, VECTOR_REP, TABLE, GO})


class KmMessage:
    __slots__ = ("kind", "origin", "final_dst", "route", "hop",
                 "created_at", "n_keys", "job", "payload", "charged")

    def __init__(self, kind, origin, route, created_at, final_dst=None,
                 n_keys=0, job=None, payload=None):
        self.kind = kind
        self.origin = origin
        if final_dst is None and route is not None:
            final_dst = route[-1]
        self.final_dst = final_dst
        self.route = route
        self.hop = 0
        self.created_at = created_at
        self.n_keys = n_keys
        self.job = job
        self.payload = payload
        self.charged = 0


class TransportJob:
    __slots__ = ("job_id", "src", "dst", "n_keys", "created_at",
                 "on_keys", "on_fail")

    def __init__(self, job_id, src, dst, n_keys, created_at,
                 on_keys, on_fail):
        self.job_id = job_id
        self.src = src
        self.dst = dst
        self.n_keys = n_keys
        self.created_at = created_at
        self.on_keys = on_keys
        self.on_fail = on_fail


class LinkStore:
    """Shared key pool of one link, split by id parity.

    Ids within a parity form contiguous runs, so storage is O(runs) even
    at full capacity.  Waiters are messages blocked on an empty parity;
    they are served FIFO as soon as generation catches up.
    """

    def __init__(self, link, capacity):
        self.link = link
        self.capacity = capacity
        self.next_id = 0
        self.level = 0
        self.runs = (deque(), deque())        # parity -> [first_id, count]
        self.waiters = (deque(), deque())
        self.generated = 0
        self.consumed_transport = 0
        self.consumed_cm = 0
        self.discarded = 0
        self.relayed_keys = 0
        self.cm_seen = [0, 0]                 # per parity, for charge ratio
        self.last_taken = [-1, -1]
        self.monotone = True

    @property
    def consumed(self):
        return self.consumed_transport + self.consumed_cm

    def add_batch(self, count):
        self.generated += count
        first = self.next_id
        self.next_id += count
        accept = min(count, self.capacity - self.level)
        self.discarded += count - accept
        if accept > 0:
            n_even = (accept + 1) // 2 if first % 2 == 0 else accept // 2
            if n_even:
                self._append(0, first if first % 2 == 0 else first + 1,
                             n_even)
            n_odd = accept - n_even
            if n_odd:
                self._append(1, first if first % 2 == 1 else first + 1,
                             n_odd)
            self.level += accept
        for parity in (0, 1):
            queue = self.waiters[parity]
            while queue and self.runs[parity]:
                queue.popleft()(self)

    def _append(self, parity, first, count):
        runs = self.runs[parity]
        if runs and runs[-1][0] + 2 * runs[-1][1] == first:
            runs[-1][1] += count
        else:
            runs.append([first, count])

    def take(self, parity, cm):
        """Pop the oldest key of one parity, or None if empty."""
        runs = self.runs[parity]
        if not runs:
            return None
        head = runs[0]
        key_id = head[0]
        head[0] += 2
        head[1] -= 1
        if head[1] == 0:
            runs.popleft()
        self.level -= 1
        if cm:
            self.consumed_cm += 1
        else:
            self.consumed_transport += 1
        if key_id <= self.last_taken[parity]:
            self.monotone = False
        self.last_taken[parity] = key_id
        return key_id

    def wait(self, parity, callback):
        self.waiters[parity].append(callback)

    def counters(self):
        return {
            "generated": self.generated,
            "consumed": self.consumed,
            "consumed_transport": self.consumed_transport,
            "consumed_cm": self.consumed_cm,
            "stored": self.level,
            "discarded": self.discarded,
            "relayed_keys": self.relayed_keys,
        }


class NodeKms:
    """Key-management endpoint of one node."""

    def __init__(self, sim, node_id, channel, metrics, cfg):
        self.sim = sim
        self.node = node_id
        self.channel = channel
        self.metrics = metrics
        self.cfg = cfg
        self.stores = {}            # neighbour id -> LinkStore
        self.km_peers = None        # node id -> NodeKms, wired by scenario
        self.controller = None      # wired by scenario
        self.gw_route = None        # path to gateway (CM-via-KMS only)
        self.is_gateway = False
        self.km_table = None        # dst -> next hop (proactive only)
        self.enc_busy_until = 0
        self.pending = 0            # resident KM messages, queue metric
        self.ready = False
        self.setup_sent = False
        self.negotiated = set()     # neighbours with a usable link
        self._negotiating = set()
        self._jobs = {}             # job_id -> TransportJob awaiting vector
        self._next_job = 0
        self.counts = {
            "transport_sent": 0, "transport_relayed": 0,
            "transport_delivered": 0, "ack_delivered": 0,
            "vector_req_sent": 0, "table_installed": 0,
            "status_sent": 0, "transport_failed": 0,
        }

    # -- wiring ----------------------------------------------------------

    def attach_store(self, neighbour, store):
        self.stores[neighbour] = store

    def on_keys(self, neighbour):
        """Generation landed on the link towards neighbour."""
        if neighbour in self.negotiated or neighbour in self._negotiating:
            return
        link = self.stores[neighbour].link
        if self.node == min(link.endpoints) \
                and self.stores[neighbour].level >= self.cfg.setup_threshold:
            self._negotiating.add(neighbour)
            msg = KmMessage(NEGOTIATE, self.node, (self.node, neighbour),
                            self.sim.now())
            self.pending += 1
            self._stage(msg)

    # -- application interface -------------------------------------------

    def request_key_transport(self, dst, n_keys, on_keys, on_fail):
        now = self.sim.now()
        job = TransportJob(self._next_job, self.node, dst, n_keys, now,
                           on_keys, on_fail)
        self._next_job += 1
        self.metrics.km_open(self.node, now)
        self.metrics.key_open(self.node, now)
        self.pending += 1
        if self.cfg.proactive:
            route = self._table_route(dst)
            if route is None:
                self._fail(job)
                return
            self._dispatch_transport(job, route)
        else:
            self._jobs[job.job_id] = job
            req = KmMessage(VECTOR_REQ, self.node, None, now,
                            payload=(self.node, dst, job.job_id))
            self.counts["vector_req_sent"] += 1
            self.to_controller(req)

    def _fail(self, job):
        self.pending -= 1
        self.counts["transport_failed"] += 1
        self.metrics.km_fail(self.node, job.created_at)
        self.metrics.key_fail(self.node, job.created_at)
        job.on_fail()

    def _table_route(self, dst):
        # Pushed tables hold the full hop sequence per destination, so a
        # single local lookup stamps the route; relays then follow the
        # stamped route.  With static consistent tables this walks the
        # same hops a per-node lookup at each relay would.
        if self.km_table is None:
            return None
        return self.km_table.get(dst)

    def _dispatch_transport(self, job, route):
        msg = KmMessage(TRANSPORT, self.node, route, job.created_at,
                        n_keys=job.n_keys, job=job)
        self.counts["transport_sent"] += 1
        self._advance(msg)

    # -- controller plumbing ---------------------------------------------

    def to_controller(self, msg):
        """Send a control message up, by star link or by KMS relay."""
        if self.cfg.via_kms:
            msg.final_dst = self.controller.node
            if self.is_gateway:
                self.channel.send_ctrl(self.controller.on_ctrl, msg)
            else:
                msg.route = self.gw_route
                msg.hop = 0
                self.pending += 1
                self._advance(msg)
        else:
            self.channel.send_mgmt(self.node, self.controller.on_mgmt, msg)

    def on_ctrl(self, msg):
        """Gateway only: message arriving from the controller link."""
        if msg.route is None or len(msg.route) == 1:
            self.deliver(msg)
            return
        msg.hop = 0
        self.pending += 1
        self._advance(msg)

    def on_mgmt(self, msg):
        """Star-link delivery in the separately-protected architecture."""
        self.deliver(msg)

    # -- relay ------------------------------------------------------------

    def on_message(self, msg):
        msg.hop += 1
        if msg.hop == len(msg.route) - 1:
            if msg.final_dst != self.node:
                # KM route ends here but the message continues over the
                # controller link (gateway in CM-via-KMS).
                self.channel.send_ctrl(self.controller.on_ctrl, msg)
                return
            self.deliver(msg)
            return
        self.pending += 1
        if msg.kind == TRANSPORT:
            self.counts["transport_relayed"] += 1
        self._advance(msg)

    def _advance(self, msg):
        """Charge the next hop's key if due, then stage for encryption."""
        nxt = msg.route[msg.hop + 1]
        store = self.stores[nxt]
        charge = False
        if msg.kind == TRANSPORT:
            charge = True
        elif msg.kind in CM_KINDS and self.cfg.via_kms:
            parity = encrypt_parity(store.link.endpoints, self.node)
            seen = store.cm_seen[parity]
            store.cm_seen[parity] = seen + 1
            charge = seen % self.cfg.cm_charge_ratio == 0
        if charge:
            parity = encrypt_parity(store.link.endpoints, self.node)
            key_id = store.take(parity, msg.kind != TRANSPORT)
            if key_id is None:
                store.wait(parity, _Blocked(self, msg))
                return
            msg.charged += 1
            if msg.kind == TRANSPORT:
                store.relayed_keys += msg.n_keys
            self.metrics.cm_charged(msg, store)
        self._stage(msg)

    def _resume(self, msg, store):
        parity = encrypt_parity(store.link.endpoints, self.node)
        key_id = store.take(parity, msg.kind != TRANSPORT)
        if key_id is None:
            store.wait(parity, _Blocked(self, msg))
            return
        msg.charged += 1
        if msg.kind == TRANSPORT:
            store.relayed_keys += msg.n_keys
        self.metrics.cm_charged(msg, store)
        self._stage(msg)

    def _stage(self, msg):
        now = self.sim.now()
        start = now if now > self.enc_busy_until else self.enc_busy_until
        self.enc_busy_until = start + self.cfg.enc_tick
        self.sim.schedule(self.enc_busy_until - now, _Send(self, msg))

    def _send(self, msg):
        self.pending -= 1
        nxt = msg.route[msg.hop + 1]
        self.channel.send_link(self.node, nxt,
                               self.km_peers[nxt].on_message, msg)

    # -- delivery ----------------------------------------------------------

    def deliver(self, msg):
        kind = msg.kind
        now = self.sim.now()
        if kind == TRANSPORT:
            self.counts["transport_delivered"] += 1
            self.metrics.km_close(msg.origin, msg.created_at, now)
            ack = KmMessage(ACK, self.node, tuple(reversed(msg.route)), now,
                            job=msg.job)
            self.metrics.km_open(self.node, now)
            self.pending += 1
            self._advance(ack)
        elif kind == ACK:
            self.counts["ack_delivered"] += 1
            self.metrics.km_close(msg.origin, msg.created_at, now)
            job = msg.job
            self.metrics.key_close(self.node, job.created_at, now)
            job.on_keys(job.n_keys)
        elif kind == NEGOTIATE:
            self.negotiated.add(msg.origin)
            reply = KmMessage(NEGOTIATE_ACK, self.node,
                              (self.node, msg.origin), now)
            self.pending += 1
            self._stage(reply)
            self._maybe_setup()
        elif kind == NEGOTIATE_ACK:
            self._negotiating.discard(msg.origin)
            self.negotiated.add(msg.origin)
            self._maybe_setup()
        elif kind == VECTOR_REP:
            src, dst, job_id, route = msg.payload
            job = self._jobs.pop(job_id, None)
            if job is None:
                return
            if route is None:
                self._fail(job)
            else:
                self._dispatch_transport(job, route)
        elif kind == TABLE:
            self.km_table = msg.payload
            self.counts["table_installed"] += 1
        elif kind == GO:
            l2_table, km_table = msg.payload
            if l2_table is not None:
                self.channel.install_node_routes(self.node, l2_table)
            if km_table is not None:
                self.km_table = km_table
                self.counts["table_installed"] += 1
            if not self.ready:
                self.ready = True
                self.metrics.node_ready(self.node, now)
                self.sim.schedule(self.cfg.status_period, self._status_tick)
                if self.on_ready is not None:
                    self.on_ready(now)
        else:
            raise RuntimeError("unexpected KM delivery: %s" % kind)

    on_ready = None

    def _maybe_setup(self):
        if self.setup_sent or not self.negotiated:
            return
        self.setup_sent = True
        msg = KmMessage(SETUP, self.node, None, self.sim.now(),
                        payload=self.node)
        self.to_controller(msg)

    def _status_tick(self):
        levels = {nbr: store.level for nbr, store in self.stores.items()}
        msg = KmMessage(STATUS, self.node, None, self.sim.now(),
                        payload=levels)
        self.counts["status_sent"] += 1
        self.to_controller(msg)
        self.sim.schedule(self.cfg.status_period, self._status_tick)


class _Blocked:
    __slots__ = ("kms", "msg")

    def __init__(self, kms, msg):
        self.kms = kms
        self.msg = msg

    def __call__(self, store):
        self.kms._resume(self.msg, store)


class _Send:
    __slots__ = ("kms", "msg")

    def __init__(self, kms, msg):
        self.kms = kms
        self.msg = msg

    def __call__(self):
        self.kms._send(self.msg)
