"""Routing tables and the central controller."""

import pytest

from keynetsim import control


ADJ = {
    0: (1, 2),
    1: (0, 3),
    2: (0, 3),
    3: (1, 2, 4),
    4: (3,),
}


def test_bfs_distances():
    dist = control.bfs_distances(ADJ, 0)
    assert dist == {0: 0, 1: 1, 2: 1, 3: 2, 4: 3}


def test_next_hop_prefers_lowest_id():
    hops, routes = control.build_tables(ADJ)
    # 0->3 via 1 or 2, tie broken to 1
    assert hops[0][3] == 1
    assert routes[0][3] == (0, 1, 3)
    assert routes[0][4] == (0, 1, 3, 4)
    assert routes[4][0] == (4, 3, 1, 0)


def test_tables_cover_all_ordered_pairs():
    hops, routes = control.build_tables(ADJ)
    for src in ADJ:
        for dst in ADJ:
            if src == dst:
                continue
            assert dst in hops[src]
            route = routes[src][dst]
            assert route[0] == src and route[-1] == dst
            # consecutive hops are adjacent
            for a, b in zip(route, route[1:]):
                assert b in ADJ[a]


def test_route_is_shortest():
    _, routes = control.build_tables(ADJ)
    dist = control.bfs_distances(ADJ, 0)
    for dst, d in dist.items():
        if dst:
            assert len(routes[0][dst]) == d + 1


def test_disconnected_nodes_absent():
    adj = {0: (1,), 1: (0,), 2: ()}
    hops, routes = control.build_tables(adj)
    assert 2 not in hops[0]
    assert 0 not in hops[2]
