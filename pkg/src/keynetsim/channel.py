"""Classical-channel facade: registers topology links with the core,
holds the layer-2 routing tables installed by the controller, and routes
message sends onto the right link."""

from .kernel import derive_seed


class Channel:
    def __init__(self, sim, topo, backoff_mean, full_duplex=False):
        self.sim = sim
        self.topo = topo
        self.link_idx = {}
        self.mgmt_idx = {}
        self.ctrl_idx = None
        self.tables = {}
        self.dead_letters = 0
        core = sim.core
        # full duplex splits each data link into two independent media,
        # one per direction; the management overlay stays half duplex
        # (its traffic is sparse and its send API is direction-blind)
        for l in topo.links:
            a, b = l.endpoints
            seed = derive_seed(sim.seed, "channel/%d-%d" % (a, b))
            idx = core.add_link(l.delay, l.loss_probability, backoff_mean,
                                seed)
            self.link_idx[(a, b)] = idx
            if full_duplex:
                seed = derive_seed(sim.seed, "channel/%d-%d" % (b, a))
                idx = core.add_link(l.delay, l.loss_probability,
                                    backoff_mean, seed)
            self.link_idx[(b, a)] = idx
        for l in topo.mgmt_links:
            seed = derive_seed(sim.seed, "mgmt/%d-%d" % l.endpoints)
            self.mgmt_idx[l.endpoints] = core.add_link(
                l.delay, l.loss_probability, backoff_mean, seed)
        if topo.ctrl_link is not None:
            seed = derive_seed(sim.seed, "ctrl/%d-%d" % topo.ctrl_link.endpoints)
            self.ctrl_idx = core.add_link(
                topo.ctrl_link.delay, topo.ctrl_link.loss_probability,
                backoff_mean, seed)

    # -- link lookup -------------------------------------------------------

    def km_link(self, a, b):
        idx = self.link_idx.get((a, b))
        if idx is None:
            raise KeyError("no link between %r and %r" % (a, b))
        return idx

    def send_link(self, a, b, cb, msg):
        self.sim.core.channel_send(self.km_link(a, b), cb, msg)

    def send_mgmt(self, node, cb, msg):
        controller = self.topo.controller_id
        key = (node, controller) if node < controller else (controller, node)
        idx = self.mgmt_idx.get(key)
        if idx is None:
            raise KeyError("no management link for node %r" % node)
        self.sim.core.channel_send(idx, cb, msg)

    def send_ctrl(self, cb, msg):
        if self.ctrl_idx is None:
            raise KeyError("no controller link in this architecture")
        self.sim.core.channel_send(self.ctrl_idx, cb, msg)

    # -- layer-2 forwarding state ------------------------------------------

    def install_routes(self, tables):
        """Atomic replacement of every node's next-hop table."""
        known = set(self.topo.node_ids())
        for node, table in tables.items():
            if node not in known:
                raise ValueError("routing table for unknown node %r" % node)
            for dst, nxt in table.items():
                if dst not in known or nxt not in known:
                    raise ValueError(
                        "table at %r references unknown node" % node)
        self.tables = {node: dict(table) for node, table in tables.items()}

    def install_node_routes(self, node, table):
        if node not in set(self.topo.node_ids()):
            raise ValueError("routing table for unknown node %r" % node)
        self.tables[node] = dict(table)

    def resolve_path(self, src, dst, record=True):
        """Walk the installed tables; None if unroutable (counted as a
        dead letter unless record is false, for pre-start probes)."""
        path = [src]
        node = src
        limit = len(self.topo.nodes) + 1
        while node != dst:
            table = self.tables.get(node)
            nxt = None if table is None else table.get(dst)
            if nxt is None or len(path) > limit:
                if record:
                    self.dead_letters += 1
                return None
            path.append(nxt)
            node = nxt
        return path

    def link_counters(self):
        """Per undirected link; both directions of a full-duplex pair
        are merged so reports look the same in either mode."""
        out = {}
        for (a, b), idx in self.link_idx.items():
            if a > b:
                continue
            counts = self.sim.core.link_counters(idx)
            reverse = self.link_idx[(b, a)]
            if reverse != idx:
                counts = tuple(x + y for x, y in
                               zip(counts, self.sim.core.link_counters(
                                   reverse)))
            sends, backoffs, drops = counts
            out[(a, b)] = {"sends": sends, "backoffs": backoffs,
                           "drops": drops}
        return out
