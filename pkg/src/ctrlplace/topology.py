"""Terrestrial network model: Topology Zoo loading, link lengths, failure sampling."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from typing import IO, Iterable, Mapping
from xml.etree.ElementTree import ParseError

import networkx as nx
import numpy as np

from .errors import ConfigurationError, EmptyTopologyError, GraphMLParseError, TopologyError

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0

BUNDLED = {"nsfnet": "Nsfnet", "ans": "Ans", "chinanet": "Chinanet"}


def node_key(node_id: str):
    """Sort key for node ids: numeric ids in numeric order, then the rest."""
    s = str(node_id)
    if s.isdigit():
        return (0, int(s), s)
    return (1, 0, s)


def sort_nodes(ids: Iterable[str]) -> list[str]:
    return sorted(ids, key=node_key)


def edge_key(u: str, v: str) -> tuple[str, str]:
    """Canonical key of the undirected edge ``{u, v}``."""
    return (u, v) if node_key(u) <= node_key(v) else (v, u)


@dataclass(frozen=True)
class Node:
    id: str
    label: str
    lat: float
    lon: float


@dataclass(frozen=True)
class Edge:
    u: str
    v: str
    length: float

    @property
    def key(self) -> tuple[str, str]:
        return edge_key(self.u, self.v)


def _check_coordinate(lat: float, lon: float) -> None:
    if not (math.isfinite(lat) and math.isfinite(lon)) or abs(lat) > 90 or abs(lon) > 180:
        raise ValueError(f"invalid coordinate (lat={lat}, lon={lon})")


def edge_length(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in km between two ``(lat, lon)`` points in degrees."""
    lat1, lon1 = a
    lat2, lon2 = b
    _check_coordinate(lat1, lon1)
    _check_coordinate(lat2, lon2)
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    # clamp: rounding can push h a hair above 1 for antipodal points
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(min(1.0, max(0.0, h))))


@dataclass(frozen=True)
class Topology:
    """Undirected, connected, simple graph with candidate and gateway sets.

    ``gateways`` may be empty right after loading; operations that need
    gateways raise :class:`ConfigurationError` until they are set with
    :meth:`with_gateways`.
    """

    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    candidates: frozenset[str]
    gateways: frozenset[str] = frozenset()
    name: str = ""

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise TopologyError("duplicate node id")
        known = set(ids)
        seen = set()
        for e in self.edges:
            if e.u == e.v:
                raise TopologyError(f"self-loop at node {e.u!r}")
            if e.u not in known or e.v not in known:
                raise TopologyError(f"edge ({e.u!r}, {e.v!r}) references an undeclared node")
            if e.key in seen:
                raise TopologyError(f"parallel edge ({e.u!r}, {e.v!r})")
            seen.add(e.key)
            if not (math.isfinite(e.length) and e.length > 0):
                raise TopologyError(f"edge ({e.u!r}, {e.v!r}) has non-positive length {e.length}")
        if not self.candidates:
            raise TopologyError("candidate set is empty")
        if not self.candidates <= known:
            raise TopologyError(f"candidates not in topology: {sort_nodes(self.candidates - known)}")
        if not self.gateways <= known:
            raise TopologyError(f"gateways not in topology: {sort_nodes(self.gateways - known)}")
        if len(ids) > 1 and not nx.is_connected(self.to_networkx()):
            raise TopologyError("topology is not connected")

    @cached_property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(sort_nodes(n.id for n in self.nodes))

    @cached_property
    def adjacency(self) -> dict[str, list[tuple[str, float]]]:
        adj: dict[str, list[tuple[str, float]]] = {n: [] for n in self.node_ids}
        for e in self.edges:
            adj[e.u].append((e.v, e.length))
            adj[e.v].append((e.u, e.length))
        for nbrs in adj.values():
            nbrs.sort(key=lambda t: node_key(t[0]))
        return adj

    @cached_property
    def lengths(self) -> dict[tuple[str, str], float]:
        return {e.key: e.length for e in self.edges}

    @cached_property
    def node_map(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    @property
    def sorted_candidates(self) -> tuple[str, ...]:
        return tuple(sort_nodes(self.candidates))

    @property
    def sorted_gateways(self) -> tuple[str, ...]:
        return tuple(sort_nodes(self.gateways))

    def length(self, u: str, v: str) -> float:
        return self.lengths[edge_key(u, v)]

    def require_gateways(self) -> None:
        if not self.gateways:
            raise ConfigurationError("gateway set is empty; pass --gateways or --gateway-count")

    def with_gateways(self, gateways: Iterable[str]) -> "Topology":
        return Topology(self.nodes, self.edges, self.candidates, frozenset(map(str, gateways)), self.name)

    def with_candidates(self, candidates: Iterable[str]) -> "Topology":
        return Topology(self.nodes, self.edges, frozenset(map(str, candidates)), self.gateways, self.name)

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        for n in self.nodes:
            g.add_node(n.id, label=n.label, Latitude=n.lat, Longitude=n.lon)
        for e in self.edges:
            g.add_edge(e.u, e.v, length=e.length)
        return g


def _as_float(value) -> float | None:
    try:
        x = float(value)
    except (TypeError, ValueError):
        return None
    return x if math.isfinite(x) else None


def load_graphml(raw: bytes | str | IO[bytes], *, strict: bool = False, name: str = "") -> Topology:
    """Parse a Topology Zoo GraphML document.

    Nodes without ``Latitude``/``Longitude`` are dropped with a warning, or
    rejected when ``strict`` is set. Self-loops are ignored, parallel edges
    collapse to the shortest one, and only the largest connected component
    is kept (ties go to the component holding the smallest node id).
    """
    if isinstance(raw, str):
        raw = raw.encode("utf-8")
    stream = io.BytesIO(raw) if isinstance(raw, (bytes, bytearray)) else raw
    try:
        g = nx.read_graphml(stream, node_type=str)
    except ParseError as exc:
        line, col = getattr(exc, "position", (None, None))
        raise GraphMLParseError(f"malformed GraphML at line {line}, column {col}: {exc}") from exc
    except (nx.NetworkXError, KeyError, ValueError) as exc:
        raise GraphMLParseError(f"invalid GraphML: {exc}") from exc
    if not name:
        name = str(g.graph.get("Network") or g.graph.get("label") or "")

    coords: dict[str, tuple[float, float]] = {}
    labels: dict[str, str] = {}
    missing = []
    for nid, data in g.nodes(data=True):
        lat, lon = _as_float(data.get("Latitude")), _as_float(data.get("Longitude"))
        if lat is None or lon is None or abs(lat) > 90 or abs(lon) > 180:
            missing.append(str(nid))
            continue
        coords[str(nid)] = (lat, lon)
        labels[str(nid)] = str(data.get("label", nid))
    if missing:
        if strict:
            raise TopologyError(f"nodes without usable coordinates: {sort_nodes(missing)}")
        logger.warning("dropping %d node(s) without coordinates: %s", len(missing), sort_nodes(missing))

    best: dict[tuple[str, str], float] = {}
    for u, v in g.edges():
        u, v = str(u), str(v)
        if u == v or u not in coords or v not in coords:
            continue
        key = edge_key(u, v)
        length = edge_length(coords[u], coords[v])
        if key not in best or length < best[key]:
            best[key] = length

    h = nx.Graph()
    h.add_nodes_from(coords)
    h.add_edges_from(best)
    if h.number_of_nodes() == 0:
        raise EmptyTopologyError("topology has fewer than 2 usable nodes")
    components = sorted(nx.connected_components(h), key=lambda c: (-len(c), node_key(min(c, key=node_key))))
    keep = components[0]
    if len(components) > 1:
        logger.warning(
            "graph is disconnected; keeping the largest component (%d of %d nodes)", len(keep), h.number_of_nodes()
        )
    if len(keep) < 2:
        raise EmptyTopologyError("topology has fewer than 2 usable nodes")

    nodes = tuple(Node(n, labels[n], *coords[n]) for n in sort_nodes(keep))
    edges = tuple(
        Edge(u, v, best[(u, v)]) for (u, v) in sorted(best, key=lambda k: (node_key(k[0]), node_key(k[1]))) if u in keep
    )
    return Topology(nodes, edges, frozenset(keep), frozenset(), name)


def read_topology(source: str | os.PathLike, *, strict: bool = False) -> Topology:
    """Load a GraphML file, or a bundled topology by name (``nsfnet``, ``ans``, ``chinanet``)."""
    key = str(source).lower()
    if key in BUNDLED and not os.path.exists(source):
        ref = resources.files("ctrlplace").joinpath(f"data/{BUNDLED[key]}.graphml")
        return load_graphml(ref.read_bytes(), strict=strict, name=BUNDLED[key])
    with open(source, "rb") as fh:
        data = fh.read()
    stem = os.path.splitext(os.path.basename(str(source)))[0]
    return load_graphml(data, strict=strict, name=stem)


def to_graphml(topo: Topology) -> bytes:
    """Serialize in the Zoo schema; :func:`load_graphml` reads it back unchanged."""
    g = nx.Graph(Network=topo.name) if topo.name else nx.Graph()
    for n in sorted(topo.nodes, key=lambda n: node_key(n.id)):
        g.add_node(n.id, label=n.label, Latitude=n.lat, Longitude=n.lon)
    for e in topo.edges:
        g.add_edge(e.u, e.v)
    buf = io.BytesIO()
    nx.write_graphml(g, buf)
    return buf.getvalue()


def parse_node_list(text: str) -> list[str]:
    """Node ids from newline- or comma-separated text; ``#`` starts a comment."""
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        out.extend(tok.strip() for tok in line.split(",") if tok.strip())
    return out


def read_node_list(source: str) -> list[str]:
    """A node-id file path, or an inline comma-separated list."""
    if os.path.isfile(source):
        with open(source, encoding="utf-8") as fh:
            return parse_node_list(fh.read())
    return parse_node_list(source)


@dataclass(frozen=True)
class FailureCase:
    case_id: int
    node_range: tuple[float, float]
    edge_range: tuple[float, float]
    sat_range: tuple[float, float]

    def __post_init__(self):
        for lo, hi in (self.node_range, self.edge_range, self.sat_range):
            if not (0.0 <= lo <= hi <= 1.0):
                raise ConfigurationError(f"invalid failure interval [{lo}, {hi}]")


CASES = {
    1: FailureCase(1, (0.0, 0.05), (0.0, 0.02), (0.0, 0.02)),
    2: FailureCase(2, (0.0, 0.06), (0.0, 0.04), (0.0, 0.03)),
    3: FailureCase(3, (0.0, 0.07), (0.0, 0.06), (0.0, 0.04)),
    4: FailureCase(4, (0.0, 0.08), (0.0, 0.08), (0.0, 0.05)),
}

#: every component perfectly reliable
FAILURE_FREE = FailureCase(0, (0.0, 0.0), (0.0, 0.0), (0.0, 0.0))


def get_case(case: int | FailureCase) -> FailureCase:
    if isinstance(case, FailureCase):
        return case
    if case == 0:
        return FAILURE_FREE
    try:
        return CASES[int(case)]
    except (KeyError, ValueError):
        raise ConfigurationError(f"unknown failure case {case!r}; expected 0 (failure-free) or 1-4") from None


@dataclass(frozen=True)
class FailureAssignment:
    node_fail: Mapping[str, float]
    edge_fail: Mapping[tuple[str, str], float]
    sat_fail: Mapping[str, float] = field(default_factory=dict)

    def edge(self, u: str, v: str) -> float:
        return self.edge_fail[edge_key(u, v)]

    def check(self, topo: Topology, case: FailureCase | None = None) -> None:
        """Raise :class:`TopologyError` unless every component has one in-range entry."""
        if set(self.node_fail) != set(topo.node_ids):
            raise TopologyError("node failure map does not cover the topology nodes")
        if set(self.edge_fail) != {e.key for e in topo.edges}:
            raise TopologyError("edge failure map does not cover the topology edges")
        if set(self.sat_fail) != set(topo.gateways):
            raise TopologyError("satellite failure map does not cover the gateways")
        ranges = [(self.node_fail, (0.0, 1.0)), (self.edge_fail, (0.0, 1.0)), (self.sat_fail, (0.0, 1.0))]
        if case is not None:
            ranges = [(self.node_fail, case.node_range), (self.edge_fail, case.edge_range), (self.sat_fail, case.sat_range)]
        for mapping, (lo, hi) in ranges:
            for k, p in mapping.items():
                if not (lo <= p <= hi):
                    raise TopologyError(f"probability {p} for {k!r} outside [{lo}, {hi}]")


def sample_failures(topo: Topology, case: int | FailureCase, seed) -> FailureAssignment:
    """Independent uniform draws per node, edge and gateway satellite link.

    Draw order is fixed (nodes, then edges, then gateways, each in canonical
    order) so a seed reproduces the assignment exactly.
    """
    case = get_case(case)
    rng = np.random.default_rng(seed)
    nodes = topo.node_ids
    edges = sorted((e.key for e in topo.edges), key=lambda k: (node_key(k[0]), node_key(k[1])))
    gws = topo.sorted_gateways
    pn = rng.uniform(*case.node_range, size=len(nodes))
    pe = rng.uniform(*case.edge_range, size=len(edges))
    ps = rng.uniform(*case.sat_range, size=len(gws))
    return FailureAssignment(
        {n: float(p) for n, p in zip(nodes, pn)},
        {k: float(p) for k, p in zip(edges, pe)},
        {g: float(p) for g, p in zip(gws, ps)},
    )


def uniform_failures(topo: Topology, p_node: float = 0.0, p_edge: float = 0.0, p_sat: float = 0.0) -> FailureAssignment:
    """Same probability for every component of a kind."""
    return FailureAssignment(
        {n: p_node for n in topo.node_ids},
        {e.key: p_edge for e in topo.edges},
        {g: p_sat for g in topo.gateways},
    )


FAILURE_FIELDS = ["kind", "id", "probability"]


def write_failures_csv(failures: FailureAssignment, fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(FAILURE_FIELDS)
    for n in sort_nodes(failures.node_fail):
        w.writerow(["node", n, repr(failures.node_fail[n])])
    for k in sorted(failures.edge_fail, key=lambda k: (node_key(k[0]), node_key(k[1]))):
        w.writerow(["edge", f"{k[0]}|{k[1]}", repr(failures.edge_fail[k])])
    for g in sort_nodes(failures.sat_fail):
        w.writerow(["sat", g, repr(failures.sat_fail[g])])


def read_failures_csv(fh: IO[str]) -> FailureAssignment:
    nodes, edges, sats = {}, {}, {}
    for row in csv.DictReader(fh):
        p = float(row["probability"])
        if row["kind"] == "node":
            nodes[row["id"]] = p
        elif row["kind"] == "edge":
            u, v = row["id"].split("|")
            edges[edge_key(u, v)] = p
        elif row["kind"] == "sat":
            sats[row["id"]] = p
        else:
            raise TopologyError(f"unknown component kind {row['kind']!r}")
    return FailureAssignment(nodes, edges, sats)
