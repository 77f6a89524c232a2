"""Placement objective: gateway latency term, control-path error term, and their bound."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError, PlacementError
from .reliability import ErrorMatrix, format_float
from .topology import node_key, sort_nodes


def upper_bound(d: Iterable[float], n_nodes: int, alpha: float) -> float:
    """``alpha * sum(d) + n_nodes``: no placement can cost more than this."""
    return alpha * float(np.sum(np.asarray(list(d), dtype=float))) + n_nodes


@dataclass(frozen=True, eq=False)
class Instance:
    """Frozen inputs of one solve.

    ``error[i, j]`` is the control-path error rate from ``candidates[i]`` to
    ``nodes[j]`` and ``d[i]`` the gateway latency of ``candidates[i]``.
    Candidates are kept in canonical id order, so index order is id order.
    """

    candidates: tuple[str, ...]
    nodes: tuple[str, ...]
    error: np.ndarray
    d: np.ndarray
    alpha: float
    w_bar: float
    matrix: ErrorMatrix | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.alpha > 0:
            raise InputError(f"alpha must be > 0, got {self.alpha}")
        if self.error.shape != (len(self.candidates), len(self.nodes)):
            raise InputError("error matrix shape does not match candidates x nodes")
        if self.d.shape != (len(self.candidates),):
            raise InputError("need one gateway distance per candidate")
        if not self.candidates:
            raise InputError("candidate set is empty")
        if list(self.candidates) != sort_nodes(self.candidates):
            raise InputError("candidates must be in canonical order")
        if np.any(self.error < 0) or np.any(self.error > 1):
            raise InputError("error rates must lie in [0, 1]")
        if np.any(self.d < 0):
            raise InputError("gateway distances must be nonnegative")
        self.error.setflags(write=False)
        self.d.setflags(write=False)

    @classmethod
    def build(
        cls,
        error,
        d,
        alpha: float,
        *,
        candidates: Sequence[str] | None = None,
        nodes: Sequence[str] | None = None,
        w_bar: float | None = None,
        matrix: ErrorMatrix | None = None,
    ) -> "Instance":
        """Instance from raw arrays; ids default to ``"0", "1", ...``.

        Rows are reordered into canonical candidate order if needed.
        """
        error = np.array(error, dtype=float, ndmin=2)
        d = np.array(d, dtype=float).reshape(-1)
        cands = [str(c) for c in candidates] if candidates is not None else [str(i) for i in range(error.shape[0])]
        nds = tuple(str(v) for v in nodes) if nodes is not None else tuple(str(j) for j in range(error.shape[1]))
        if len(set(cands)) != len(cands):
            raise InputError("duplicate candidate id")
        order = sorted(range(len(cands)), key=lambda i: node_key(cands[i]))
        error, d = error[order], d[order]
        if w_bar is None:
            w_bar = upper_bound(d, len(nds), alpha)
        return cls(tuple(cands[i] for i in order), nds, error, d, float(alpha), float(w_bar), matrix)

    @classmethod
    def from_matrix(cls, matrix: ErrorMatrix, d: Mapping[str, float], alpha: float) -> "Instance":
        return cls.build(
            matrix.rates, [d[k] for k in matrix.candidates], alpha,
            candidates=matrix.candidates, nodes=matrix.nodes, matrix=matrix,
        )

    def with_alpha(self, alpha: float) -> "Instance":
        return Instance.build(self.error, self.d, alpha, candidates=self.candidates, nodes=self.nodes, matrix=self.matrix)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def indices(self, placed: Iterable[str]) -> tuple[int, ...]:
        pos = {k: i for i, k in enumerate(self.candidates)}
        try:
            return tuple(sorted({pos[str(k)] for k in placed}))
        except KeyError as exc:
            raise PlacementError(f"{exc.args[0]!r} is not a candidate location") from None

    def ids(self, idx: Iterable[int]) -> frozenset[str]:
        return frozenset(self.candidates[i] for i in idx)

    # index-level evaluation; every public evaluator goes through these so a
    # given set always produces bit-identical floats
    def wc_idx(self, idx: tuple[int, ...]) -> float:
        return float(self.d[list(idx)].sum()) if idx else 0.0

    def wr_idx(self, idx: tuple[int, ...]) -> float:
        if not idx:
            return float(self.n_nodes)
        return float(self.error[list(idx)].min(axis=0).sum())

    def w_idx(self, idx: tuple[int, ...]) -> float:
        return self.alpha * self.wc_idx(idx) + self.wr_idx(idx)


def optimal_assignment(inst: Instance, placed: Iterable[str]) -> dict[str, str]:
    """Each node goes to the placed controller with the lowest error rate.

    Ties go to the smallest candidate id.
    """
    idx = inst.indices(placed)
    if not idx:
        raise PlacementError("placement is empty; at least one controller is required")
    sub = inst.error[list(idx)]
    best = sub.argmin(axis=0)
    return {v: inst.candidates[idx[b]] for v, b in zip(inst.nodes, best)}


def eval_wc(inst: Instance, placed: Iterable[str]) -> float:
    return inst.wc_idx(inst.indices(placed))


def eval_wr(inst: Instance, placed: Iterable[str]) -> float:
    """Sum over nodes of the best error rate among placed controllers (``|V|`` when empty)."""
    return inst.wr_idx(inst.indices(placed))


def eval_w(inst: Instance, placed: Iterable[str]) -> float:
    return inst.w_idx(inst.indices(placed))


def w_tilde(inst: Instance, placed: Iterable[str]) -> float:
    return inst.w_bar - eval_w(inst, placed)


@dataclass(frozen=True)
class Placement:
    placed: frozenset[str]
    assignment: Mapping[str, str]

    @classmethod
    def optimal(cls, inst: Instance, placed: Iterable[str]) -> "Placement":
        placed = frozenset(map(str, placed))
        return cls(placed, optimal_assignment(inst, placed))

    def validate(self, inst: Instance) -> None:
        if not self.placed:
            raise PlacementError("no controller placed")
        outside = self.placed - set(inst.candidates)
        if outside:
            raise PlacementError(f"controllers placed outside the candidate set: {sort_nodes(outside)}")
        if set(self.assignment) != set(inst.nodes):
            raise PlacementError("every node must be assigned to exactly one controller")
        stray = {k for k in self.assignment.values() if k not in self.placed}
        if stray:
            raise PlacementError(f"nodes assigned to locations without a controller: {sort_nodes(stray)}")

    def assigned_wr(self, inst: Instance) -> float:
        """Error term under this placement's own assignment."""
        pos = {k: i for i, k in enumerate(inst.candidates)}
        rows = [pos[self.assignment[v]] for v in inst.nodes]
        return float(inst.error[rows, np.arange(inst.n_nodes)].sum())


def save_instance(inst: Instance, directory: str | os.PathLike) -> None:
    """Write ``error.csv``, ``d.csv`` and ``instance.cfg``; floats round-trip exactly."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "error.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "v", "error_rate", "path"])
        for i, k in enumerate(inst.candidates):
            for j, v in enumerate(inst.nodes):
                rec = inst.matrix.paths.get((k, v)) if inst.matrix is not None else None
                w.writerow([k, v, repr(float(inst.error[i, j])), ";".join(rec.nodes) if rec else ""])
    with open(os.path.join(directory, "d.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "d"])
        for k, dk in zip(inst.candidates, inst.d):
            w.writerow([k, repr(float(dk))])
    with open(os.path.join(directory, "instance.cfg"), "w") as fh:
        fh.write(f"alpha = {inst.alpha!r}\n")
        fh.write(f"w_bar = {inst.w_bar!r}\n")
        fh.write(f"nodes = {','.join(inst.nodes)}\n")
        if inst.matrix is not None:
            fh.write(f"mode = {inst.matrix.mode}\n")


def load_instance(directory: str | os.PathLike) -> Instance:
    cfg = {}
    with open(os.path.join(directory, "instance.cfg")) as fh:
        for line in fh:
            if "=" in line:
                key, value = line.split("=", 1)
                cfg[key.strip()] = value.strip()
    nodes = cfg["nodes"].split(",")
    d = {}
    with open(os.path.join(directory, "d.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            d[row["k"]] = float(row["d"])
    cands = sort_nodes(d)
    pos_k = {k: i for i, k in enumerate(cands)}
    pos_v = {v: j for j, v in enumerate(nodes)}
    error = np.full((len(cands), len(nodes)), np.nan)
    with open(os.path.join(directory, "error.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            error[pos_k[row["k"]], pos_v[row["v"]]] = float(row["error_rate"])
    if np.isnan(error).any():
        raise InputError("error.csv does not cover every (candidate, node) pair")
    return Instance.build(
        error, [d[k] for k in cands], float(cfg["alpha"]), candidates=cands, nodes=nodes, w_bar=float(cfg["w_bar"])
    )


def describe(inst: Instance, placed: Iterable[str]) -> str:
    idx = inst.indices(placed)
    return (
        f"placed={';'.join(inst.candidates[i] for i in idx)} "
        f"W={format_float(inst.w_idx(idx))} Wc={format_float(inst.wc_idx(idx))} Wr={format_float(inst.wr_idx(idx))}"
    )
