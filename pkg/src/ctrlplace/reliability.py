"""Control paths: shortest/K-shortest latency paths, error rates, the error matrix."""

from __future__ import annotations

import csv
import heapq
import math
import re
from dataclasses import dataclass
from typing import IO, Iterable, NamedTuple

import numpy as np

from .errors import NoPathError
from .topology import FailureAssignment, Topology, edge_key, node_key


@dataclass(frozen=True)
class PathRecord:
    nodes: tuple[str, ...]
    latency: float
    error_rate: float = float("nan")

    @property
    def edges(self) -> list[tuple[str, str]]:
        return [edge_key(a, b) for a, b in zip(self.nodes, self.nodes[1:])]

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1


def path_latency(topo: Topology, nodes: Iterable[str]) -> float:
    nodes = list(nodes)
    # fsum is correctly rounded, so equal-length paths compare equal exactly
    return math.fsum(topo.length(a, b) for a, b in zip(nodes, nodes[1:]))


def _record(topo: Topology, nodes) -> PathRecord:
    return PathRecord(tuple(nodes), path_latency(topo, nodes))


def _seq_key(nodes) -> tuple:
    return tuple(node_key(n) for n in nodes)


def _latency_dijkstra(topo, src, dst, banned_nodes=frozenset(), banned_edges=frozenset()):
    """Min-latency path, ties broken by lexicographic node sequence. None if unreachable."""
    if src in banned_nodes:
        return None
    heap = [(0.0, _seq_key((src,)), (src,))]
    done = set()
    while heap:
        cost, _, path = heapq.heappop(heap)
        u = path[-1]
        if u in done:
            continue
        done.add(u)
        if u == dst:
            return path
        for v, length in topo.adjacency[u]:
            if v in done or v in banned_nodes or edge_key(u, v) in banned_edges:
                continue
            nxt = path + (v,)
            heapq.heappush(heap, (cost + length, _seq_key(nxt), nxt))
    return None


def shortest_latency_path(topo: Topology, src: str, dst: str) -> PathRecord:
    if src not in topo.adjacency or dst not in topo.adjacency:
        raise NoPathError(f"unknown node in ({src!r}, {dst!r})")
    path = _latency_dijkstra(topo, src, dst)
    if path is None:
        raise NoPathError(f"no path from {src!r} to {dst!r}")
    return _record(topo, path)


def yen_k_paths(topo: Topology, src: str, dst: str, k: int) -> list[PathRecord]:
    """Up to ``k`` loopless paths in nondecreasing latency (Yen, 1971)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    first = shortest_latency_path(topo, src, dst)
    if src == dst:
        return [first]
    accepted = [first]
    seen = {first.nodes}
    candidates: list = []
    while len(accepted) < k:
        prev = accepted[-1].nodes
        for j in range(len(prev) - 1):
            root = prev[: j + 1]
            banned_edges = {edge_key(p.nodes[j], p.nodes[j + 1]) for p in accepted if p.nodes[: j + 1] == root}
            spur = _latency_dijkstra(topo, prev[j], dst, frozenset(root[:-1]), frozenset(banned_edges))
            if spur is None:
                continue
            total = root[:-1] + spur
            if total in seen:
                continue
            seen.add(total)
            rec = _record(topo, total)
            heapq.heappush(candidates, (rec.latency, _seq_key(total), rec))
        if not candidates:
            break
        accepted.append(heapq.heappop(candidates)[2])
    return accepted


def path_error_rate(path: PathRecord | Iterable[str], failures: FailureAssignment, *, count_endpoints: bool = False) -> float:
    """``1 - prod(1 - P_e) * prod(1 - P_v)`` over the path's edges and nodes.

    Only intermediate nodes contribute unless ``count_endpoints`` is set.
    """
    nodes = path.nodes if isinstance(path, PathRecord) else tuple(path)
    survive = 1.0
    for a, b in zip(nodes, nodes[1:]):
        survive *= 1.0 - failures.edge(a, b)
    members = nodes if count_endpoints else nodes[1:-1]
    for v in dict.fromkeys(members):
        survive *= 1.0 - failures.node_fail[v]
    return min(1.0, max(0.0, 1.0 - survive))


class PathMode(NamedTuple):
    """How the control path between a controller and a node is chosen."""

    kind: str = "exact"  # "exact" (most reliable path) or "yen"
    k: int = 1

    @property
    def tag(self) -> str:
        return "exact-reliable" if self.kind == "exact" else f"yen-k({self.k})"

    @classmethod
    def parse(cls, text: "str | PathMode") -> "PathMode":
        if isinstance(text, PathMode):
            return text
        s = str(text).strip().lower()
        if s in ("exact", "exact-reliable"):
            return cls("exact", 1)
        m = re.fullmatch(r"yen(?:-k)?(?:[(:=-]?(\d+)\)?)?", s)
        if m:
            k = int(m.group(1) or 5)
            if k < 1:
                raise ValueError("yen K must be >= 1")
            return cls("yen", k)
        raise ValueError(f"unknown path mode {text!r}; expected 'exact' or 'yen-k(K)'")


def _log_weight(p: float) -> tuple[int, float]:
    # certain failures are counted separately instead of weighting them +inf
    if p >= 1.0:
        return (1, 0.0)
    return (0, -math.log1p(-p))


def _reliable_tree(topo: Topology, failures: FailureAssignment, src: str) -> dict[str, tuple[str, ...]]:
    """Most reliable path from ``src`` to every node.

    Node weights are charged on entering a node, which is node-splitting in
    disguise; the destination's own weight is the same for every path to it,
    so the argmin is the same whether endpoints count or not.
    """
    heap = [((0, 0.0), _seq_key((src,)), (src,))]
    best: dict[str, tuple[str, ...]] = {}
    while heap:
        (cnt, cost), _, path = heapq.heappop(heap)
        u = path[-1]
        if u in best:
            continue
        best[u] = path
        for v, _length in topo.adjacency[u]:
            if v in best:
                continue
            we = _log_weight(failures.edge(u, v))
            wv = _log_weight(failures.node_fail[v])
            nxt = path + (v,)
            heapq.heappush(heap, ((cnt + we[0] + wv[0], cost + we[1] + wv[1]), _seq_key(nxt), nxt))
    return best


def _pick_reliable(paths: list[PathRecord]) -> PathRecord:
    # first minimum wins, so Yen order breaks ties
    return min(paths, key=lambda p: p.error_rate)


def best_control_path(
    topo: Topology,
    failures: FailureAssignment,
    k: str,
    v: str,
    mode: PathMode | str = PathMode(),
    *,
    count_endpoints: bool = False,
) -> PathRecord:
    mode = PathMode.parse(mode)
    if k == v:
        err = failures.node_fail[k] if count_endpoints else 0.0
        return PathRecord((k,), 0.0, err)
    if mode.kind == "exact":
        nodes = _reliable_tree(topo, failures, k)[v]
        rec = _record(topo, nodes)
        return PathRecord(rec.nodes, rec.latency, path_error_rate(rec, failures, count_endpoints=count_endpoints))
    paths = [
        PathRecord(p.nodes, p.latency, path_error_rate(p, failures, count_endpoints=count_endpoints))
        for p in yen_k_paths(topo, k, v, mode.k)
    ]
    return _pick_reliable(paths)


@dataclass(frozen=True)
class ErrorMatrix:
    """``rates[i, j]`` is the error rate of the best control path ``candidates[i] -> nodes[j]``."""

    candidates: tuple[str, ...]
    nodes: tuple[str, ...]
    rates: np.ndarray
    paths: dict[tuple[str, str], PathRecord]
    mode: str = "exact-reliable"

    def rate(self, k: str, v: str) -> float:
        return float(self.rates[self.candidates.index(k), self.nodes.index(v)])

    def entry(self, k: str, v: str) -> tuple[float, PathRecord]:
        return self.rate(k, v), self.paths[(k, v)]


def reliability_matrix(
    topo: Topology,
    failures: FailureAssignment,
    mode: PathMode | str = PathMode(),
    *,
    count_endpoints: bool = False,
    satellite_hop: bool = False,
) -> ErrorMatrix:
    """Best control path and error rate for every (candidate, node) pair.

    With ``satellite_hop`` the satellite-link failure of a gateway node is
    folded into every control path ending at that gateway.
    """
    mode = PathMode.parse(mode)
    cands = topo.sorted_candidates
    nodes = topo.node_ids
    rates = np.empty((len(cands), len(nodes)))
    paths: dict[tuple[str, str], PathRecord] = {}
    for i, k in enumerate(cands):
        tree = _reliable_tree(topo, failures, k) if mode.kind == "exact" else None
        for j, v in enumerate(nodes):
            if k == v:
                rec = best_control_path(topo, failures, k, v, mode, count_endpoints=count_endpoints)
            elif tree is not None:
                base = _record(topo, tree[v])
                rec = PathRecord(base.nodes, base.latency, path_error_rate(base, failures, count_endpoints=count_endpoints))
            else:
                rec = best_control_path(topo, failures, k, v, mode, count_endpoints=count_endpoints)
            err = rec.error_rate
            if satellite_hop and v in topo.gateways:
                err = min(1.0, 1.0 - (1.0 - err) * (1.0 - failures.sat_fail[v]))
                rec = PathRecord(rec.nodes, rec.latency, err)
            rates[i, j] = err
            paths[(k, v)] = rec
    rates.setflags(write=False)
    return ErrorMatrix(cands, nodes, rates, paths, mode.tag)


def _latency_tree(topo: Topology, src: str) -> dict[str, float]:
    dist: dict[str, float] = {}
    heap = [(0.0, _seq_key((src,)), (src,))]
    while heap:
        _, _, path = heapq.heappop(heap)
        u = path[-1]
        if u in dist:
            continue
        dist[u] = path_latency(topo, path)
        cost = dist[u]
        for v, length in topo.adjacency[u]:
            if v not in dist:
                nxt = path + (v,)
                heapq.heappush(heap, (cost + length, _seq_key(nxt), nxt))
    return dist


def gateway_distance(topo: Topology, k: str) -> float:
    """Latency from ``k`` to the nearest deployed gateway."""
    topo.require_gateways()
    dist = _latency_tree(topo, k)
    return min(dist[g] for g in topo.gateways)


def gateway_distances(topo: Topology) -> dict[str, float]:
    return {k: gateway_distance(topo, k) for k in topo.sorted_candidates}


def all_pairs_latency(topo: Topology) -> dict[str, dict[str, float]]:
    return {u: _latency_tree(topo, u) for u in topo.node_ids}


MATRIX_FIELDS = ["k", "v", "error_rate", "path"]


def format_float(x: float, digits: int = 12) -> str:
    return format(float(x), f".{digits}g")


def write_matrix_csv(matrix: ErrorMatrix, fh: IO[str], digits: int = 12) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(MATRIX_FIELDS)
    for i, k in enumerate(matrix.candidates):
        for j, v in enumerate(matrix.nodes):
            rec = matrix.paths.get((k, v))
            w.writerow([k, v, format_float(matrix.rates[i, j], digits), ";".join(rec.nodes) if rec else ""])
