import itertools
import math

import networkx as nx
import numpy as np
import pytest

from ctrlplace.objective import Instance
from ctrlplace.topology import Edge, FailureAssignment, Node, Topology, edge_key


def make_topology(edges, *, candidates=None, gateways=(), coords=None, name="t"):
    """Topology from ``(u, v, length)`` triples; coordinates are dummies unless given."""
    ids = sorted({str(u) for u, _, _ in edges} | {str(v) for _, v, _ in edges}, key=lambda s: (len(s), s))
    coords = coords or {}
    nodes = tuple(Node(n, n, *coords.get(n, (0.0, 0.0))) for n in ids)
    es = tuple(Edge(str(u), str(v), float(w)) for u, v, w in edges)
    cands = frozenset(map(str, candidates)) if candidates is not None else frozenset(ids)
    return Topology(nodes, es, cands, frozenset(map(str, gateways)), name)


def random_topology(rng, n, extra=None, *, integer=False):
    """Connected random graph: a random spanning tree plus ``extra`` chords."""
    if extra is None:
        extra = int(rng.integers(0, n + 1))
    order = rng.permutation(n)
    pairs = set()
    for i in range(1, n):
        j = int(rng.integers(0, i))
        pairs.add(tuple(sorted((int(order[i]), int(order[j])))))
    attempts = 0
    while len(pairs) < n - 1 + extra and attempts < 50 * n:
        attempts += 1
        a, b = sorted(int(x) for x in rng.choice(n, size=2, replace=False))
        pairs.add((a, b))
    edges = []
    for a, b in sorted(pairs):
        w = float(rng.integers(1, 6)) if integer else float(rng.uniform(1.0, 100.0))
        edges.append((a, b, w))
    return make_topology(edges)


def random_failures(rng, topo, hi_node=0.2, hi_edge=0.2, hi_sat=0.05):
    return FailureAssignment(
        {v: float(rng.uniform(0, hi_node)) for v in topo.node_ids},
        {e.key: float(rng.uniform(0, hi_edge)) for e in topo.edges},
        {g: float(rng.uniform(0, hi_sat)) for g in topo.gateways},
    )


def random_instance(rng, n_cand, n_nodes, alpha=None, *, err_hi=None, d_hi=None):
    err_hi = err_hi if err_hi is not None else float(rng.choice([0.05, 0.3, 1.0]))
    d_hi = d_hi if d_hi is not None else float(rng.choice([0.01, 0.1, 1.0, 3.0]))
    alpha = alpha if alpha is not None else float(rng.choice([0.1, 1.0, 10.0]))
    E = rng.uniform(0, err_hi, size=(n_cand, n_nodes))
    d = rng.uniform(0, d_hi, size=n_cand)
    return Instance.build(E, d, alpha)


# --- independent oracles ------------------------------------------------------


def all_simple_paths(topo, s, t):
    g = topo.to_networkx()
    if s == t:
        return [[s]]
    return [list(p) for p in nx.all_simple_paths(g, s, t)]


def brute_latency(topo, nodes):
    return sum(topo.length(a, b) for a, b in zip(nodes, nodes[1:]))


def brute_error(nodes, failures, count_endpoints=False):
    """Survival accumulated in log space, independently of the library's product."""
    logs = [math.log1p(-failures.edge_fail[edge_key(a, b)]) if failures.edge_fail[edge_key(a, b)] < 1 else -math.inf
            for a, b in zip(nodes, nodes[1:])]
    members = nodes if count_endpoints else nodes[1:-1]
    for v in set(members):
        p = failures.node_fail[v]
        logs.append(math.log1p(-p) if p < 1 else -math.inf)
    return -math.expm1(sum(logs)) if logs else 0.0


def brute_wr_assignments(inst, placed_idx):
    """Minimum of sum e[k, v] * y[k, v] over every valid assignment of nodes to placed controllers."""
    best = math.inf
    for choice in itertools.product(placed_idx, repeat=inst.n_nodes):
        best = min(best, sum(inst.error[k, v] for v, k in enumerate(choice)))
    return best


def nonempty_subsets(n):
    for size in range(1, n + 1):
        yield from itertools.combinations(range(n), size)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# --- acceptance report --------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def record(number: int, ok: bool, detail: str) -> str:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
