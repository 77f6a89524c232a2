"""Monte Carlo check of the analytic control-path error model."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .objective import Instance, Placement
from .reliability import PathRecord, format_float, path_error_rate
from .topology import FailureAssignment, edge_key

#: samples per independently seeded chunk; results do not depend on ``jobs``
CHUNK = 1 << 16


@dataclass(frozen=True)
class SimReport:
    samples: int
    estimated_error: float
    analytic_error: float
    std_error: float
    label: str = ""

    @property
    def z(self) -> float:
        diff = self.estimated_error - self.analytic_error
        if self.std_error == 0:
            return 0.0 if diff == 0 else math.inf
        return diff / self.std_error

    def within(self, sigmas: float = 3.0) -> bool:
        return abs(self.estimated_error - self.analytic_error) <= sigmas * self.std_error


def _components(nodes: Sequence[str], failures: FailureAssignment, count_endpoints: bool) -> list[tuple]:
    comps = [("e",) + edge_key(a, b) for a, b in zip(nodes, nodes[1:])]
    members = nodes if count_endpoints else nodes[1:-1]
    comps += [("n", v) for v in dict.fromkeys(members)]
    return comps


def _prob(comp: tuple, failures: FailureAssignment) -> float:
    return failures.edge_fail[comp[1:]] if comp[0] == "e" else failures.node_fail[comp[1]]


def _chunks(samples: int) -> list[int]:
    full, rest = divmod(samples, CHUNK)
    return [CHUNK] * full + ([rest] if rest else [])


def _run_chunks(fn, samples: int, seed, jobs: int) -> list:
    sizes = _chunks(samples)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    work = list(zip(sizes, seeds))
    if jobs > 1 and len(work) > 1:
        with ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(lambda a: fn(*a), work))
    return [fn(*a) for a in work]


def simulate_path(
    path: PathRecord | Sequence[str],
    failures: FailureAssignment,
    samples: int,
    seed=None,
    *,
    count_endpoints: bool = False,
    jobs: int = 1,
) -> SimReport:
    """Fraction of sampled network states in which the path is broken."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    nodes = tuple(path.nodes if isinstance(path, PathRecord) else path)
    probs = np.array([_prob(c, failures) for c in _components(nodes, failures, count_endpoints)])

    def chunk(size, ss):
        rng = np.random.default_rng(ss)
        if probs.size == 0:
            return 0
        return int((rng.random((size, probs.size)) < probs).any(axis=1).sum())

    failed = sum(_run_chunks(chunk, samples, seed, jobs))
    p_hat = failed / samples
    return SimReport(
        samples,
        p_hat,
        path_error_rate(nodes, failures, count_endpoints=count_endpoints),
        math.sqrt(p_hat * (1 - p_hat) / samples),
        ";".join(nodes),
    )


@dataclass(frozen=True)
class PlacementSim:
    per_node: dict[str, SimReport]
    aggregate: SimReport


def simulate_placement(
    inst: Instance,
    placement: Placement,
    failures: FailureAssignment,
    samples: int,
    seed=None,
    *,
    count_endpoints: bool = False,
    jobs: int = 1,
) -> PlacementSim:
    """Simulate every node's assigned control path under shared network states.

    Each sample draws one up/down state per component and every node's path
    is judged against that same state. The aggregate is the mean failed
    fraction of nodes, compared with ``W_r / |V|``; its standard error comes
    from the per-sample fractions.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if inst.matrix is None:
        raise ValueError("instance carries no control paths; build it from an ErrorMatrix")
    placement.validate(inst)
    paths = [inst.matrix.paths[(placement.assignment[v], v)].nodes for v in inst.nodes]
    comp_index: dict[tuple, int] = {}
    members = []
    for nodes in paths:
        ids = []
        for c in _components(nodes, failures, count_endpoints):
            ids.append(comp_index.setdefault(c, len(comp_index)))
        members.append(ids)
    probs = np.array([_prob(c, failures) for c in comp_index])
    n_nodes = len(paths)

    def chunk(size, ss):
        rng = np.random.default_rng(ss)
        down = rng.random((size, probs.size)) < probs if probs.size else np.zeros((size, 0), bool)
        fails = np.zeros((size, n_nodes), dtype=bool)
        for j, ids in enumerate(members):
            if ids:
                fails[:, j] = down[:, ids].any(axis=1)
        frac = fails.mean(axis=1)
        return fails.sum(axis=0), float(frac.sum()), float(np.square(frac).sum())

    parts = _run_chunks(chunk, samples, seed, jobs)
    counts = np.sum([p[0] for p in parts], axis=0)
    s1 = math.fsum(p[1] for p in parts)
    s2 = math.fsum(p[2] for p in parts)

    analytic = [path_error_rate(nodes, failures, count_endpoints=count_endpoints) for nodes in paths]
    per_node = {}
    for j, v in enumerate(inst.nodes):
        p_hat = counts[j] / samples
        per_node[v] = SimReport(samples, float(p_hat), analytic[j], math.sqrt(p_hat * (1 - p_hat) / samples), v)
    mean = s1 / samples
    var = max(0.0, s2 / samples - mean * mean) * samples / max(1, samples - 1)
    aggregate = SimReport(samples, mean, math.fsum(analytic) / n_nodes, math.sqrt(var / samples), "aggregate")
    return PlacementSim(per_node, aggregate)


SIM_FIELDS = ["path", "samples", "analytic", "estimate", "std_error"]


def write_sim_csv(reports: Sequence[SimReport], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SIM_FIELDS)
    for r in reports:
        w.writerow([r.label, r.samples, format_float(r.analytic_error), format_float(r.estimated_error), format_float(r.std_error)])
