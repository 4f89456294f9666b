"""Network graphs: the reference validation path, generated internet-like
topologies, and controller/gateway attachment for either management
architecture."""

from dataclasses import dataclass, field, replace
from typing import Optional

import networkx as nx

from .kernel import ms

ACCESS = "access"
BACKBONE = "backbone"
CONTROLLER = "controller"
GATEWAY = "gateway"

SEPARATELY_PROTECTED = "separately_protected"
CM_VIA_KMS = "cm_via_kms"


@dataclass(frozen=True)
class NodeSpec:
    id: int
    kind: str


@dataclass(frozen=True)
class LinkSpec:
    endpoints: tuple  # (low id, high id)
    key_rate: float   # keys/second
    delay: int        # ticks
    loss_probability: float = 0.0

    def __post_init__(self):
        a, b = self.endpoints
        if a > b:
            object.__setattr__(self, "endpoints", (b, a))
        if self.delay <= 0:
            raise ValueError("link delay must be positive")
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ValueError("loss probability outside [0, 1]")


@dataclass
class TopologySpec:
    nodes: list
    links: list
    generator_seed: Optional[int] = None
    # set by attach_controller
    arch: Optional[str] = None
    controller_id: Optional[int] = None
    gateway_id: Optional[int] = None
    mgmt_links: list = field(default_factory=list)
    ctrl_link: Optional[LinkSpec] = None

    def node(self, node_id):
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def node_ids(self):
        return [n.id for n in self.nodes]

    def km_node_ids(self):
        """Nodes participating in the key-management graph (no controller)."""
        return [n.id for n in self.nodes if n.kind != CONTROLLER]

    def access_ids(self):
        return [n.id for n in self.nodes if n.kind == ACCESS]

    def link_between(self, a, b):
        key = (a, b) if a < b else (b, a)
        for l in self.links:
            if l.endpoints == key:
                return l
        return None

    def adjacency(self):
        adj = {n.id: [] for n in self.nodes if n.kind != CONTROLLER}
        for l in self.links:
            a, b = l.endpoints
            adj[a].append(b)
            adj[b].append(a)
        for v in adj.values():
            v.sort()
        return adj


def generate_internet_like(n, seed, key_rate=0.0, delay=None, loss=0.0):
    """Connected scale-free graph via preferential attachment (2 new edges
    per node).  The 9/20 highest-degree share become relaying-only backbone
    nodes, ties broken toward the lower id."""
    if n < 3:
        raise ValueError("need at least 3 nodes")
    if delay is None:
        delay = ms(2)
    g = nx.barabasi_albert_graph(n, 2, seed=seed)
    n_backbone = max(1, (9 * n) // 20)
    by_degree = sorted(g.nodes, key=lambda v: (-g.degree[v], v))
    backbone = set(by_degree[:n_backbone])
    nodes = [NodeSpec(v, BACKBONE if v in backbone else ACCESS)
             for v in sorted(g.nodes)]
    links = [LinkSpec((a, b) if a < b else (b, a), key_rate, delay, loss)
             for a, b in sorted(tuple(sorted(e)) for e in g.edges)]
    return TopologySpec(nodes=nodes, links=links, generator_seed=seed)


def padua_topology(delay=None, loss=0.0):
    """Four-node validation path 1-2-3-6: two 58 keys/s links and one
    390 keys/s link."""
    if delay is None:
        delay = ms(2)
    nodes = [NodeSpec(1, ACCESS), NodeSpec(2, BACKBONE),
             NodeSpec(3, BACKBONE), NodeSpec(6, ACCESS)]
    links = [LinkSpec((1, 2), 58.0, delay, loss),
             LinkSpec((2, 3), 58.0, delay, loss),
             LinkSpec((3, 6), 390.0, delay, loss)]
    return TopologySpec(nodes=nodes, links=links)


def attach_controller(topo, arch, gateway_at=None, gateway_key_rate=None,
                      mgmt_delay=None, ctrl_delay=None):
    """Add the controller: a management star for separately-protected CM,
    or a single gateway KMS plus a dedicated controller link for CM-via-KMS.
    Applying twice is rejected."""
    if topo.controller_id is not None:
        raise ValueError("controller already attached")
    if arch not in (SEPARATELY_PROTECTED, CM_VIA_KMS):
        raise ValueError("unknown architecture %r" % arch)
    if mgmt_delay is None:
        mgmt_delay = ms(2)
    if ctrl_delay is None:
        ctrl_delay = ms(2)
    new = replace(topo)
    new.nodes = list(topo.nodes)
    new.links = list(topo.links)
    top_id = max(n.id for n in new.nodes)
    if arch == SEPARATELY_PROTECTED:
        controller = top_id + 1
        new.nodes.append(NodeSpec(controller, CONTROLLER))
        new.mgmt_links = [LinkSpec((n, controller), 0.0, mgmt_delay)
                          for n in sorted(topo.km_node_ids())]
        new.arch = arch
        new.controller_id = controller
        return new
    if gateway_at is None:
        raise ValueError("cm_via_kms needs a gateway attachment node")
    if gateway_at not in topo.node_ids():
        raise ValueError("unknown node %r" % gateway_at)
    if gateway_key_rate is None:
        incident = [l for l in topo.links if gateway_at in l.endpoints]
        if not incident:
            raise ValueError("node %r has no links" % gateway_at)
        gateway_key_rate = incident[0].key_rate
    gateway = top_id + 1
    controller = top_id + 2
    new.nodes.append(NodeSpec(gateway, GATEWAY))
    new.nodes.append(NodeSpec(controller, CONTROLLER))
    new.links.append(LinkSpec((gateway_at, gateway), gateway_key_rate, ms(2)))
    new.ctrl_link = LinkSpec((gateway, controller), 0.0, ctrl_delay)
    new.mgmt_links = []
    new.arch = arch
    new.controller_id = controller
    new.gateway_id = gateway
    return new


def topology_to_dict(topo):
    d = {
        "nodes": [{"id": n.id, "kind": n.kind} for n in topo.nodes],
        "links": [{"endpoints": list(l.endpoints), "key_rate": l.key_rate,
                   "delay_ns": l.delay, "loss_probability": l.loss_probability}
                  for l in topo.links],
    }
    if topo.generator_seed is not None:
        d["generator_seed"] = topo.generator_seed
    return d


def topology_from_dict(d):
    nodes = [NodeSpec(n["id"], n["kind"]) for n in d["nodes"]]
    links = [LinkSpec(tuple(l["endpoints"]), l["key_rate"], l["delay_ns"],
                      l.get("loss_probability", 0.0)) for l in d["links"]]
    return TopologySpec(nodes=nodes, links=links,
                        generator_seed=d.get("generator_seed"))
