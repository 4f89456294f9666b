"""Topology builders: the four-node validation network and the
degree-attached random graphs, plus controller attachment."""

import pytest

from keynetsim import topology


def test_padua_shape():
    topo = topology.padua_topology(delay=2_000_000, loss=0.0)
    eps = sorted(l.endpoints for l in topo.links)
    assert eps == [(1, 2), (2, 3), (3, 6)]
    rates = {l.endpoints: l.key_rate for l in topo.links}
    assert rates[(3, 6)] > rates[(1, 2)]
    assert sorted(topo.km_node_ids()) == [1, 2, 3, 6]


def test_padua_controller_star():
    topo = topology.padua_topology(delay=2_000_000, loss=0.0)
    topo = topology.attach_controller(
        topo, topology.SEPARATELY_PROTECTED, mgmt_delay=2_000_000,
        ctrl_delay=2_000_000)
    assert topo.controller_id == 7
    # star management: one dedicated mgmt link per km node
    ends = sorted(lk.endpoints[0] for lk in topo.mgmt_links)
    assert ends == [1, 2, 3, 6]
    assert all(lk.endpoints[1] == topo.controller_id for lk in topo.mgmt_links)
    # data links unchanged
    assert len(topo.links) == 3


def test_generated_graph_is_connected_and_stable():
    topo = topology.generate_internet_like(20, 42, key_rate=100.0,
                                           delay=2_000_000, loss=0.0)
    adj = topo.adjacency()
    assert len(adj) == 20
    # connectivity via simple reach
    seen = {0}
    frontier = [0]
    while frontier:
        node = frontier.pop()
        for peer in adj[node]:
            if peer not in seen:
                seen.add(peer)
                frontier.append(peer)
    assert len(seen) == 20
    # same seed, same graph
    again = topology.generate_internet_like(20, 42, key_rate=100.0,
                                            delay=2_000_000, loss=0.0)
    assert sorted(l.endpoints for l in topo.links) == \
        sorted(l.endpoints for l in again.links)


def test_backbone_access_split():
    topo = topology.generate_internet_like(20, 42, key_rate=100.0,
                                           delay=2_000_000, loss=0.0)
    access = topo.access_ids()
    assert sorted(access) == list(range(9, 20))
    adj = topo.adjacency()
    # backbone nodes are the highest-degree ones
    degree = {n: len(adj[n]) for n in adj}
    backbone = sorted(n for n in adj if n not in access)
    assert backbone == list(range(9))
    assert min(degree[n] for n in backbone) >= \
        max(degree[n] for n in access) - 1


def test_gateway_attachment():
    topo = topology.generate_internet_like(20, 42, key_rate=100.0,
                                           delay=2_000_000, loss=0.0)
    topo = topology.attach_controller(
        topo, topology.CM_VIA_KMS, gateway_at=19, gateway_key_rate=100.0,
        mgmt_delay=2_000_000, ctrl_delay=2_000_000)
    assert topo.gateway_id == 20
    assert (19, 20) in {l.endpoints for l in topo.links}
    # gateway is a km node but not an access site for traffic
    assert 20 in topo.km_node_ids()
    assert 20 not in topo.access_ids()
    # controller hangs off the gateway on a key-free link
    assert topo.controller_id == 21
