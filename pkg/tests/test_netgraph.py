"""Shortest paths against exhaustive enumeration, and TNTP round-trips."""
import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modal_market.netgraph import (
    INF,
    InvalidNetwork,
    Link,
    LinkCountMismatch,
    MalformedHeader,
    Network,
    NonPositiveTime,
    NoPath,
    UnknownNode,
    UnparsableRow,
    parse_tntp,
    serialize_tntp,
    shortest_time,
    time_matrix,
)
from modal_market.scenario import builtin_5node, sioux_network


def brute_force_shortest(net: Network, origin: int, dest: int) -> float:
    """Depth-first enumeration of simple paths with cost-bound pruning."""
    adj = {}
    for link in net.links:
        adj.setdefault(link.frm, []).append((link.to, link.free_flow_time))
    best = [INF]

    def walk(node, cost, seen):
        if cost >= best[0]:
            return
        if node == dest:
            best[0] = cost
            return
        for succ, w in adj.get(node, []):
            if succ not in seen:
                walk(succ, cost + w, seen | {succ})

    if origin == dest:
        return 0.0
    walk(origin, 0.0, {origin})
    return best[0]


def random_network(rng: random.Random, n_nodes: int) -> Network:
    nodes = list(range(1, n_nodes + 1))
    links = []
    for a, b in itertools.permutations(nodes, 2):
        if rng.random() < 0.45:
            links.append((a, b, rng.uniform(0.5, 20.0)))
    return Network.from_links(links, nodes=nodes)


class TestShortestTime:
    def test_identity_is_zero(self):
        net = sioux_network()
        for n in (1, 12, 24):
            assert shortest_time(net, n, n) == 0.0

    def test_sioux_direct_link_optimal(self):
        # (1,2) is a direct link and enumeration confirms nothing beats it
        net = sioux_network()
        direct = next(l.free_flow_time for l in net.links if (l.frm, l.to) == (1, 2))
        assert shortest_time(net, 1, 2) == direct
        assert brute_force_shortest(net, 1, 2) == direct

    def test_5node_hub_leg_is_20_minutes(self):
        net = builtin_5node().network
        assert shortest_time(net, 3, 2) == 20.0

    def test_unknown_node(self):
        net = builtin_5node().network
        with pytest.raises(UnknownNode):
            shortest_time(net, 99, 1)
        with pytest.raises(UnknownNode):
            shortest_time(net, 1, 99)

    def test_no_path(self):
        # node 5 has only outgoing links in the 5-node system
        net = builtin_5node().network
        with pytest.raises(NoPath):
            shortest_time(net, 1, 5)

    def test_matches_exhaustive_enumeration_on_random_graphs(self):
        rng = random.Random(20240517)
        for _ in range(40):
            net = random_network(rng, rng.randint(3, 8))
            for origin in net.nodes:
                for dest in net.nodes:
                    expected = brute_force_shortest(net, origin, dest)
                    if expected == INF:
                        with pytest.raises(NoPath):
                            shortest_time(net, origin, dest)
                    else:
                        got = shortest_time(net, origin, dest)
                        assert got == pytest.approx(expected, rel=1e-12)

    def test_determinism(self):
        rng = random.Random(7)
        net = random_network(rng, 7)
        first = [shortest_time(net, o, d) for o in net.nodes for d in net.nodes
                 if brute_force_shortest(net, o, d) < INF]
        second = [shortest_time(net, o, d) for o in net.nodes for d in net.nodes
                  if brute_force_shortest(net, o, d) < INF]
        assert first == second


class TestTimeMatrix:
    def test_single_node(self):
        net = builtin_5node().network
        tm = time_matrix(net, [1], [1])
        assert tm.time(1, 1) == 0.0

    def test_5node_symmetry(self):
        net = builtin_5node().network
        tm = time_matrix(net, [1, 2], [1, 2])
        assert tm.time(1, 2) == tm.time(2, 1)

    def test_consistent_with_pairwise_calls(self):
        net = sioux_network()
        origins = [1, 4, 5, 6, 7, 19, 23]
        dests = [13, 24, 22, 21, 20, 5, 9]
        tm = time_matrix(net, origins, dests)
        for o in origins:
            for d in dests:
                assert tm.time(o, d) == shortest_time(net, o, d)

    def test_unreachable_marked_infinite(self):
        net = builtin_5node().network
        tm = time_matrix(net, [1], [5])
        assert tm.time(1, 5) == INF

    def test_triangle_inequality(self):
        net = sioux_network()
        tm = time_matrix(net, net.nodes, net.nodes)
        rng = random.Random(2)
        for _ in range(200):
            a, b, c = rng.choices(net.nodes, k=3)
            assert tm.time(a, c) <= tm.time(a, b) + tm.time(b, c) + 1e-12


class TestNetworkInvariants:
    def test_rejects_self_loop(self):
        with pytest.raises(InvalidNetwork):
            Network.from_links([(1, 1, 2.0)], nodes=[1, 2])

    def test_rejects_duplicate_link(self):
        with pytest.raises(InvalidNetwork):
            Network.from_links([(1, 2, 2.0), (1, 2, 3.0)], nodes=[1, 2])

    def test_rejects_nonpositive_time(self):
        with pytest.raises(InvalidNetwork):
            Network.from_links([(1, 2, 0.0)], nodes=[1, 2])

    def test_rejects_absent_endpoint(self):
        with pytest.raises(InvalidNetwork):
            Network(nodes=(1, 2), links=(Link(1, 3, 1.0),))


class TestParseTntp:
    def test_sioux_fixture_counts(self):
        net = sioux_network()
        assert len(net.nodes) == 24
        assert len(net.links) == 76

    def test_link_count_mismatch(self):
        text = (
            "<NUMBER OF NODES> 3\n<NUMBER OF LINKS> 2\n<END OF METADATA>\n"
            "1 2 0 0 5 0 0 0 0 1 ;\n"
            "2 3 0 0 5 0 0 0 0 1 ;\n"
            "3 1 0 0 5 0 0 0 0 1 ;\n"
        )
        with pytest.raises(LinkCountMismatch):
            parse_tntp(text)

    def test_nonpositive_time_rejected(self):
        text = (
            "<NUMBER OF NODES> 2\n<NUMBER OF LINKS> 1\n<END OF METADATA>\n"
            "1 2 0 0 0 0 0 0 0 1 ;\n"
        )
        with pytest.raises(NonPositiveTime):
            parse_tntp(text)

    def test_missing_metadata(self):
        with pytest.raises(MalformedHeader):
            parse_tntp("<NUMBER OF NODES> 2\n<END OF METADATA>\n")
        with pytest.raises(MalformedHeader):
            parse_tntp("<NUMBER OF NODES> 2\n<NUMBER OF LINKS> 0\n")

    def test_unparsable_row_carries_line_number(self):
        text = (
            "<NUMBER OF NODES> 2\n<NUMBER OF LINKS> 1\n<END OF METADATA>\n"
            "1 2 0 0 bogus 0 0 0 0 1 ;\n"
        )
        with pytest.raises(UnparsableRow) as err:
            parse_tntp(text)
        assert err.value.line_no == 4

    def test_row_without_terminator(self):
        text = (
            "<NUMBER OF NODES> 2\n<NUMBER OF LINKS> 1\n<END OF METADATA>\n"
            "1 2 0 0 5 0 0 0 0 1\n"
        )
        with pytest.raises(UnparsableRow):
            parse_tntp(text)

    def test_node_id_out_of_range(self):
        text = (
            "<NUMBER OF NODES> 2\n<NUMBER OF LINKS> 1\n<END OF METADATA>\n"
            "1 7 0 0 5 0 0 0 0 1 ;\n"
        )
        with pytest.raises(UnparsableRow):
            parse_tntp(text)

    def test_accepts_bytes(self):
        net = parse_tntp(
            b"<NUMBER OF NODES> 2\n<NUMBER OF LINKS> 1\n<END OF METADATA>\n"
            b"1 2 0 0 5 0 0 0 0 1 ;\n"
        )
        assert net.links[0].free_flow_time == 5.0


class TestRoundTrip:
    def test_sioux_round_trip_identity(self):
        net = sioux_network()
        assert parse_tntp(serialize_tntp(net), name=net.name) == net

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_random_round_trip(self, seed):
        rng = random.Random(seed)
        net = random_network(rng, rng.randint(2, 7))
        assert parse_tntp(serialize_tntp(net)) == net

    def test_serializer_requires_contiguous_ids(self):
        net = Network.from_links([(1, 3, 2.0), (3, 1, 2.0)], nodes=[1, 3])
        with pytest.raises(InvalidNetwork):
            serialize_tntp(net)

    def test_parse_determinism(self):
        text = serialize_tntp(sioux_network())
        assert parse_tntp(text) == parse_tntp(text)
