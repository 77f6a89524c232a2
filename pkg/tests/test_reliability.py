import io
import math

import numpy as np
import pytest

from conftest import all_simple_paths, brute_error, brute_latency, make_topology, random_failures, random_topology
from ctrlplace.errors import ConfigurationError
from ctrlplace.reliability import (
    PathMode,
    PathRecord,
    best_control_path,
    gateway_distance,
    path_error_rate,
    reliability_matrix,
    shortest_latency_path,
    write_matrix_csv,
    yen_k_paths,
)
from ctrlplace.topology import FailureAssignment, edge_key, uniform_failures


def failures_for(topo, nodes=None, edges=None, default=0.0):
    nodes = nodes or {}
    edges = {edge_key(*k): p for k, p in (edges or {}).items()}
    return FailureAssignment(
        {v: nodes.get(v, default) for v in topo.node_ids},
        {e.key: edges.get(e.key, default) for e in topo.edges},
        {g: 0.0 for g in topo.gateways},
    )


class TestShortestPath:
    def test_identity(self):
        topo = make_topology([("a", "b", 5.0)])
        p = shortest_latency_path(topo, "a", "a")
        assert p.nodes == ("a",) and p.latency == 0

    def test_forced(self):
        topo = make_topology([("a", "b", 5.0)])
        p = shortest_latency_path(topo, "a", "b")
        assert p.nodes == ("a", "b") and p.latency == 5

    def test_lexicographic_tie(self):
        # a-b-d and a-c-d both have length 2
        topo = make_topology([("a", "c", 1), ("c", "d", 1), ("a", "b", 1), ("b", "d", 1)])
        assert shortest_latency_path(topo, "a", "d").nodes == ("a", "b", "d")

    @pytest.mark.parametrize("seed", range(20))
    def test_brute_force_random(self, seed):
        rng = np.random.default_rng(seed)
        topo = random_topology(rng, 8)
        for s, t in [("0", "7"), ("3", "5"), ("1", "6")]:
            expected = min(brute_latency(topo, p) for p in all_simple_paths(topo, s, t))
            got = shortest_latency_path(topo, s, t)
            assert got.latency == pytest.approx(expected, rel=1e-12)
            assert got.latency == pytest.approx(brute_latency(topo, got.nodes), rel=1e-9)


class TestYen:
    def test_k1(self):
        topo = random_topology(np.random.default_rng(3), 8)
        assert yen_k_paths(topo, "0", "5", 1) == [shortest_latency_path(topo, "0", "5")]

    def test_triangle(self):
        topo = make_topology([("s", "m", 1), ("m", "t", 1), ("s", "t", 3)])
        paths = yen_k_paths(topo, "s", "t", 5)
        assert [p.latency for p in paths] == [2, 3]
        assert [p.nodes for p in paths] == [("s", "m", "t"), ("s", "t")]

    def test_k0(self):
        topo = make_topology([("a", "b", 1)])
        with pytest.raises(ValueError):
            yen_k_paths(topo, "a", "b", 0)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_enumeration(self, seed):
        rng = np.random.default_rng(100 + seed)
        topo = random_topology(rng, 8, integer=bool(seed % 2))
        brute = sorted(
            all_simple_paths(topo, "0", "7"), key=lambda p: (brute_latency(topo, p), [(len(x), x) for x in p])
        )
        got = yen_k_paths(topo, "0", "7", 5)
        assert len(got) == min(5, len(brute))
        assert [p.latency for p in got] == pytest.approx([brute_latency(topo, p) for p in brute[: len(got)]])
        if seed % 2 == 0:
            # continuous weights: no ties, so the exact sequence must agree
            assert [list(p.nodes) for p in got] == brute[: len(got)]
        for p in got:
            assert len(set(p.nodes)) == len(p.nodes)
        lat = [p.latency for p in got]
        assert lat == sorted(lat)

    def test_fewer_paths_than_k(self):
        topo = make_topology([("a", "b", 1), ("b", "c", 1)])
        assert len(yen_k_paths(topo, "a", "c", 4)) == 1


class TestPathErrorRate:
    def test_failure_free(self):
        topo = make_topology([("a", "b", 1), ("b", "c", 1)])
        assert path_error_rate(("a", "b", "c"), uniform_failures(topo)) == 0.0

    def test_certain_edge(self):
        topo = make_topology([("a", "b", 1)])
        f = failures_for(topo, edges={("a", "b"): 1.0})
        assert path_error_rate(("a", "b"), f) == 1.0

    def test_three_components(self):
        topo = make_topology([("a", "b", 1), ("b", "c", 1)])
        f = failures_for(topo, nodes={"b": 0.05}, edges={("a", "b"): 0.02, ("b", "c"): 0.02})
        got = path_error_rate(("a", "b", "c"), f)
        assert got == pytest.approx(1 - 0.98 * 0.98 * 0.95, abs=1e-15)
        assert got == pytest.approx(0.08762, abs=1e-12)
        assert got == pytest.approx(brute_error(["a", "b", "c"], f), rel=1e-12)

    def test_endpoints_only_count_when_asked(self):
        topo = make_topology([("a", "b", 1)])
        f = failures_for(topo, nodes={"a": 0.1, "b": 0.2})
        assert path_error_rate(("a", "b"), f) == 0.0
        assert path_error_rate(("a", "b"), f, count_endpoints=True) == pytest.approx(1 - 0.9 * 0.8)

    def test_monotone_in_every_component(self):
        rng = np.random.default_rng(9)
        topo = random_topology(rng, 7)
        f = random_failures(rng, topo)
        path = shortest_latency_path(topo, "0", "6").nodes
        base = path_error_rate(path, f)
        assert 0 <= base <= 1
        for key in list(f.edge_fail):
            bumped = FailureAssignment(f.node_fail, {**f.edge_fail, key: min(1, f.edge_fail[key] + 0.1)}, f.sat_fail)
            assert path_error_rate(path, bumped) >= base
        for v in list(f.node_fail):
            bumped = FailureAssignment({**f.node_fail, v: min(1, f.node_fail[v] + 0.1)}, f.edge_fail, f.sat_fail)
            assert path_error_rate(path, bumped) >= base


class TestBestControlPath:
    def test_self_path(self):
        topo = make_topology([("a", "b", 1)])
        f = failures_for(topo, nodes={"a": 0.3})
        p = best_control_path(topo, f, "a", "a")
        assert p.nodes == ("a",) and p.error_rate == 0.0

    def test_dominance(self):
        # short route through an unreliable relay vs a long clean one
        topo = make_topology([("k", "x", 1), ("x", "v", 1), ("k", "y", 10), ("y", "z", 10), ("z", "v", 10)])
        f = failures_for(topo, nodes={"x": 0.9})
        assert best_control_path(topo, f, "k", "v").nodes == ("k", "y", "z", "v")
        assert best_control_path(topo, f, "k", "v", PathMode("yen", 1)).nodes == ("k", "x", "v")
        assert best_control_path(topo, f, "k", "v", PathMode("yen", 2)).nodes == ("k", "y", "z", "v")

    def test_certain_failure_everywhere(self):
        topo = make_topology([("a", "b", 1), ("b", "c", 1)])
        f = failures_for(topo, nodes={"b": 1.0})
        p = best_control_path(topo, f, "a", "c")
        assert p.nodes == ("a", "b", "c") and p.error_rate == 1.0

    def test_certain_failure_avoided(self):
        topo = make_topology([("a", "b", 1), ("b", "c", 1), ("a", "d", 5), ("d", "c", 5)])
        f = failures_for(topo, nodes={"b": 1.0, "d": 0.5})
        p = best_control_path(topo, f, "a", "c")
        assert p.nodes == ("a", "d", "c") and p.error_rate == pytest.approx(0.5)

    @pytest.mark.parametrize("seed", range(15))
    def test_exact_matches_enumeration(self, seed):
        rng = np.random.default_rng(200 + seed)
        topo = random_topology(rng, 8)
        f = random_failures(rng, topo)
        for k in ["0", "4"]:
            for v in topo.node_ids:
                if v == k:
                    continue
                expected = min(brute_error(p, f) for p in all_simple_paths(topo, k, v))
                got = best_control_path(topo, f, k, v)
                assert got.error_rate == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_mode_ordering(self, seed):
        rng = np.random.default_rng(300 + seed)
        topo = random_topology(rng, 8)
        f = random_failures(rng, topo)
        for v in topo.node_ids[1:]:
            exact = best_control_path(topo, f, "0", v).error_rate
            shortest = path_error_rate(shortest_latency_path(topo, "0", v), f)
            prev = shortest
            for K in (1, 2, 3, 5):
                yen = best_control_path(topo, f, "0", v, PathMode("yen", K)).error_rate
                assert exact <= yen + 1e-12
                assert yen <= prev + 1e-12
                prev = yen

    def test_mode_parsing(self):
        assert PathMode.parse("exact") == PathMode("exact", 1)
        assert PathMode.parse("yen-k(7)") == PathMode("yen", 7)
        assert PathMode.parse("yen:3").tag == "yen-k(3)"
        with pytest.raises(ValueError):
            PathMode.parse("dijkstra")


class TestReliabilityMatrix:
    def test_failure_free(self):
        topo = random_topology(np.random.default_rng(1), 6)
        m = reliability_matrix(topo, uniform_failures(topo))
        assert np.all(m.rates == 0)

    def test_single_candidate(self):
        topo = random_topology(np.random.default_rng(2), 6).with_candidates(["3"])
        f = random_failures(np.random.default_rng(2), topo)
        m = reliability_matrix(topo, f)
        assert m.rates.shape == (1, 6)
        assert m.rate("3", "3") == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_entries_match_enumeration(self, seed):
        rng = np.random.default_rng(400 + seed)
        topo = random_topology(rng, 8)
        f = random_failures(rng, topo)
        m = reliability_matrix(topo, f)
        for k in topo.node_ids:
            for v in topo.node_ids:
                expected = 0.0 if k == v else min(brute_error(p, f) for p in all_simple_paths(topo, k, v))
                assert m.rate(k, v) == pytest.approx(expected, abs=1e-12)
                rec = m.paths[(k, v)]
                assert rec.nodes[0] == k and rec.nodes[-1] == v
                assert rec.latency == pytest.approx(brute_latency(topo, rec.nodes), rel=1e-9)

    def test_yen_mode_matches_best_control_path(self):
        rng = np.random.default_rng(5)
        topo = random_topology(rng, 7)
        f = random_failures(rng, topo)
        m = reliability_matrix(topo, f, "yen-k(3)")
        assert m.mode == "yen-k(3)"
        for k in topo.node_ids:
            for v in topo.node_ids:
                assert m.rate(k, v) == best_control_path(topo, f, k, v, PathMode("yen", 3)).error_rate

    def test_satellite_hop(self):
        topo = make_topology([("a", "b", 1), ("b", "g", 1)], gateways=["g"])
        f = FailureAssignment({"a": 0, "b": 0.1, "g": 0}, {("a", "b"): 0.0, ("b", "g"): 0.0}, {"g": 0.2})
        plain = reliability_matrix(topo, f)
        hop = reliability_matrix(topo, f, satellite_hop=True)
        assert plain.rate("a", "g") == pytest.approx(0.1)
        assert hop.rate("a", "g") == pytest.approx(1 - 0.9 * 0.8)
        assert hop.rate("a", "b") == plain.rate("a", "b")

    def test_edge_removal_never_helps(self):
        rng = np.random.default_rng(77)
        topo = random_topology(rng, 7, extra=5)
        f = random_failures(rng, topo)
        full = reliability_matrix(topo, f)
        for e in topo.edges:
            rest = [(x.u, x.v, x.length) for x in topo.edges if x is not e]
            try:
                smaller = make_topology(rest)
            except Exception:
                continue  # removal disconnects the graph
            if set(smaller.node_ids) != set(topo.node_ids):
                continue
            sf = FailureAssignment(f.node_fail, {k: p for k, p in f.edge_fail.items() if k != e.key}, {})
            sm = reliability_matrix(smaller, sf)
            assert np.all(sm.rates >= full.rates - 1e-12)
            for v in topo.node_ids:
                assert shortest_latency_path(smaller, "0", v).latency >= shortest_latency_path(topo, "0", v).latency - 1e-9

    def test_csv(self):
        topo = make_topology([("a", "b", 1), ("b", "c", 1)])
        f = failures_for(topo, nodes={"b": 1 / 3})
        buf = io.StringIO()
        write_matrix_csv(reliability_matrix(topo, f), buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "k,v,error_rate,path"
        assert "a,c,0.333333333333,a;b;c" in lines


class TestGatewayDistance:
    def test_member(self):
        topo = make_topology([("a", "b", 2), ("b", "c", 3)], gateways=["b"])
        assert gateway_distance(topo, "b") == 0

    def test_singleton(self):
        topo = make_topology([("a", "b", 2), ("b", "c", 3)], gateways=["c"])
        assert gateway_distance(topo, "a") == shortest_latency_path(topo, "a", "c").latency == 5

    def test_path_graph_three_gateways(self):
        topo = make_topology(
            [("0", "1", 4), ("1", "2", 1), ("2", "3", 7), ("3", "4", 2), ("4", "5", 3)], gateways=["0", "3", "5"]
        )
        for k in topo.node_ids:
            expected = min(shortest_latency_path(topo, k, g).latency for g in ["0", "3", "5"])
            assert gateway_distance(topo, k) == expected
        assert gateway_distance(topo, "1") == 4
        assert gateway_distance(topo, "2") == 5

    def test_empty(self):
        topo = make_topology([("a", "b", 2)])
        with pytest.raises(ConfigurationError):
            gateway_distance(topo, "a")


def test_log_transform_consistency():
    """Minimizing summed -log(1-P) picks the same error rate as minimizing the product form."""
    rng = np.random.default_rng(11)
    for _ in range(10):
        topo = random_topology(rng, 7)
        f = random_failures(rng, topo, 0.5, 0.5)
        for v in topo.node_ids[1:]:
            paths = all_simple_paths(topo, "0", v)
            by_log = min(
                paths,
                key=lambda p: sum(-math.log1p(-f.edge(a, b)) for a, b in zip(p, p[1:]))
                + sum(-math.log1p(-f.node_fail[x]) for x in p[1:-1]),
            )
            by_product = min(brute_error(p, f) for p in paths)
            assert brute_error(by_log, f) == pytest.approx(by_product, abs=1e-12)
            assert best_control_path(topo, f, "0", v).error_rate == pytest.approx(by_product, abs=1e-12)


def test_path_record_latency_consistency():
    topo = random_topology(np.random.default_rng(12), 8)
    for p in yen_k_paths(topo, "0", "7", 4):
        assert isinstance(p, PathRecord)
        assert p.latency == pytest.approx(brute_latency(topo, p.nodes), rel=1e-9)
        for a, b in zip(p.nodes, p.nodes[1:]):
            assert edge_key(a, b) in topo.lengths
