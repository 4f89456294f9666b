"""Control and management layer.

The controller collects setup reports, computes static shortest-path
routing from the topology, and broadcasts GO carrying each node's
forwarding tables.  Under the proactive protocol it also pushes key-relay
tables periodically; under the reactive protocol it answers per-transport
routing-vector requests instead.  The two behaviours are mutually
exclusive and enforced.

Reachability is by architecture: a star of dedicated management links in
the separately-protected form, or relay through the KMS via a gateway in
the CM-via-KMS form (where controller egress is serialised like any other
encryption stage).
"""

from collections import deque

from . import km


def bfs_distances(adjacency, source):
    dist = {source: 0}
    queue = deque((source,))
    while queue:
        node = queue.popleft()
        for nbr in adjacency[node]:
            if nbr not in dist:
                dist[nbr] = dist[node] + 1
                queue.append(nbr)
    return dist


def all_distances(adjacency):
    return {node: bfs_distances(adjacency, node) for node in adjacency}


def next_hop(adjacency, dist, src, dst):
    """Lowest-id neighbour one step closer to dst, None if unreachable."""
    if src == dst:
        return None
    target = dist[dst].get(src)
    if target is None:
        return None
    for nbr in adjacency[src]:
        if dist[dst].get(nbr) == target - 1:
            return nbr
    return None


def route(adjacency, dist, src, dst):
    """Full hop sequence src..dst as a tuple, None if unreachable."""
    if dst not in dist or src not in dist[dst]:
        return None
    path = [src]
    node = src
    while node != dst:
        node = next_hop(adjacency, dist, node, dst)
        if node is None:
            return None
        path.append(node)
    return tuple(path)


def build_tables(adjacency):
    """Per-node forwarding state: (l2 next-hop dicts, full-route dicts)."""
    dist = all_distances(adjacency)
    hops = {}
    routes = {}
    for src in adjacency:
        hops[src] = {}
        routes[src] = {}
        for dst in adjacency:
            if dst == src:
                continue
            nxt = next_hop(adjacency, dist, src, dst)
            if nxt is None:
                continue
            hops[src][dst] = nxt
            routes[src][dst] = route(adjacency, dist, src, dst)
    return hops, routes


class Controller:
    def __init__(self, sim, topo, channel, metrics, cfg):
        self.sim = sim
        self.topo = topo
        self.channel = channel
        self.metrics = metrics
        self.cfg = cfg
        self.node = topo.controller_id
        self.km_nodes = topo.km_node_ids()
        self.adjacency = topo.adjacency()
        self.l2_tables, self.km_routes = build_tables(self.adjacency)
        self.kms_by_node = None        # wired by scenario
        self.gateway_kms = None        # wired by scenario (CM-via-KMS)
        self._setups = set()
        self._go_done = False
        self._ctrl_busy_until = 0
        self.go_time = None
        self.statuses_received = {}
        self.vectors_served = 0
        self.tables_pushed = 0
        self.last_levels = {}

    def gateway_route(self, node):
        """Bootstrap path from a node to the gateway, known statically."""
        if node == self.topo.gateway_id:
            return (node,)
        return self.km_routes[node][self.topo.gateway_id]

    # -- uplink ------------------------------------------------------------

    def on_mgmt(self, msg):
        self._handle(msg)

    def on_ctrl(self, msg):
        self._handle(msg)

    def _handle(self, msg):
        kind = msg.kind
        if kind == km.SETUP:
            self._setups.add(msg.payload)
            if not self._go_done and self._setups >= set(self.km_nodes):
                self._broadcast_go()
        elif kind == km.STATUS:
            node = msg.origin
            self.statuses_received[node] = \
                self.statuses_received.get(node, 0) + 1
            self.last_levels[node] = msg.payload
        elif kind == km.VECTOR_REQ:
            if self.cfg.proactive:
                raise RuntimeError(
                    "routing-vector request under the proactive protocol")
            src, dst, job_id = msg.payload
            vector = self.km_routes.get(src, {}).get(dst)
            self.vectors_served += 1
            reply = km.KmMessage(km.VECTOR_REP, self.node, None,
                                 self.sim.now(), final_dst=src,
                                 payload=(src, dst, job_id, vector))
            self.send_to_node(src, reply)
        else:
            raise RuntimeError("unexpected controller delivery: %s" % kind)

    # -- downlink ----------------------------------------------------------

    def send_to_node(self, node, msg):
        msg.final_dst = node
        if self.cfg.via_kms:
            msg.route = tuple(reversed(self.gateway_route(node)))
            msg.hop = 0
            self._ctrl_send(msg)
        else:
            kms = self.kms_by_node[node]
            self.channel.send_mgmt(node, kms.on_mgmt, msg)

    def _ctrl_send(self, msg):
        now = self.sim.now()
        start = now if now > self._ctrl_busy_until else self._ctrl_busy_until
        self._ctrl_busy_until = start + self.cfg.enc_tick
        self.sim.schedule(self._ctrl_busy_until - now,
                          _CtrlSend(self, msg))

    # -- GO and table pushes -----------------------------------------------

    def _broadcast_go(self):
        self._go_done = True
        self.go_time = self.sim.now()
        self.metrics.go_time = self.go_time
        for node in sorted(self.km_nodes):
            km_table = self.km_routes[node] if self.cfg.proactive else None
            payload = (self.l2_tables[node], km_table)
            if km_table is not None:
                self.tables_pushed += 1
            msg = km.KmMessage(km.GO, self.node, None, self.go_time,
                               final_dst=node, payload=payload)
            self.send_to_node(node, msg)
        if self.cfg.proactive:
            self.sim.schedule(self.cfg.update_period, self._push_tables)

    def _push_tables(self):
        for node in sorted(self.km_nodes):
            msg = km.KmMessage(km.TABLE, self.node, None, self.sim.now(),
                               final_dst=node,
                               payload=self.km_routes[node])
            self.tables_pushed += 1
            self.send_to_node(node, msg)
        self.sim.schedule(self.cfg.update_period, self._push_tables)


class _CtrlSend:
    __slots__ = ("controller", "msg")

    def __init__(self, controller, msg):
        self.controller = controller
        self.msg = msg

    def __call__(self):
        ctl = self.controller
        ctl.channel.send_ctrl(ctl.gateway_kms.on_ctrl, self.msg)
