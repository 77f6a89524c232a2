"""Repeated randomized trials: failure cases, alpha sweeps, exact vs greedy."""

from __future__ import annotations

import csv
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError
from .objective import Instance
from .reliability import PathMode, all_pairs_latency, format_float, gateway_distances, reliability_matrix
from .solvers import EXACT_LIMIT, SolveResult, solve_double_greedy, solve_exact
from .topology import Topology, get_case, read_node_list, read_topology, sample_failures, sort_nodes

SOLVERS = ("exact", "greedy")


def place_gateways_fallback(topo: Topology, count: int) -> list[str]:
    """Greedy k-median on shortest-path latency.

    Repeatedly adds the node that minimizes the total latency from every
    node to its nearest chosen gateway; ties go to the smallest id. This is
    a stand-in when no gateway placement is supplied.
    """
    nodes = topo.node_ids
    if not 1 <= count <= len(nodes):
        raise ConfigurationError(f"gateway count must be in [1, {len(nodes)}], got {count}")
    dist = all_pairs_latency(topo)
    D = np.array([[dist[u][v] for v in nodes] for u in nodes])
    chosen: list[int] = []
    nearest = np.full(len(nodes), np.inf)
    for _ in range(count):
        totals = [math.inf if i in chosen else float(np.minimum(nearest, D[i]).sum()) for i in range(len(nodes))]
        best = min(range(len(nodes)), key=lambda i: (totals[i], i))
        chosen.append(best)
        nearest = np.minimum(nearest, D[best])
    return sort_nodes(nodes[i] for i in chosen)


def derive_seed(*parts: int) -> int:
    """Stable 63-bit seed from integer parts (SeedSequence entropy mixing)."""
    state = np.random.SeedSequence([int(p) for p in parts]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 31 | int(state[1]) >> 1


@dataclass(frozen=True)
class ExperimentConfig:
    topology: str = "nsfnet"
    gateways: tuple[str, ...] | None = None
    gateway_count: int = 5
    candidates: tuple[str, ...] | None = None
    cases: tuple[int, ...] = (1,)
    alphas: tuple[float, ...] = (1.0,)
    mode: str = "exact"
    solvers: tuple[str, ...] = SOLVERS
    repeats: int = 100
    seed: int = 0
    out: str = "results"
    exact_limit: int = EXACT_LIMIT
    greedy_rule: str = "standard"
    count_endpoints: bool = False
    satellite_hop: bool = False
    jobs: int = 1
    timing: bool = False

    def __post_init__(self):
        if self.repeats < 1:
            raise ConfigurationError("repeats must be >= 1")
        if not self.alphas or any(not a > 0 for a in self.alphas):
            raise ConfigurationError("alpha values must be > 0")
        if self.gateways is None and self.gateway_count < 1:
            raise ConfigurationError("gateway count must be >= 1")
        unknown = set(self.solvers) - set(SOLVERS)
        if unknown or not self.solvers:
            raise ConfigurationError(f"solvers must be drawn from {SOLVERS}")
        if self.greedy_rule not in ("standard", "literal"):
            raise ConfigurationError(f"greedy_rule must be 'standard' or 'literal', got {self.greedy_rule!r}")
        for c in self.cases:
            get_case(c)
        try:
            PathMode.parse(self.mode)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None

    @property
    def path_mode(self) -> PathMode:
        return PathMode.parse(self.mode)


def _split(value: str) -> list[str]:
    return [t.strip() for t in value.replace(";", ",").split(",") if t.strip()]


def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off", ""):
        return False
    raise ConfigurationError(f"not a boolean: {value!r}")


_CONVERTERS = {
    "topology": str,
    "gateways": lambda v: tuple(read_node_list(v)),
    "gateway_count": int,
    "candidates": lambda v: tuple(read_node_list(v)),
    "cases": lambda v: tuple(int(x) for x in _split(v)),
    "alphas": lambda v: tuple(float(x) for x in _split(v)),
    "mode": str,
    "solvers": lambda v: tuple(_split(v)),
    "repeats": int,
    "seed": int,
    "out": str,
    "exact_limit": int,
    "greedy_rule": str,
    "count_endpoints": _bool,
    "satellite_hop": _bool,
    "jobs": int,
    "timing": _bool,
}
_ALIASES = {"case": "cases", "alpha": "alphas", "solver": "solvers"}


def parse_config(text: str, base: ExperimentConfig | None = None, **overrides) -> ExperimentConfig:
    """``key = value`` lines (``#`` comments) over ``base``, then ``overrides``."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in _CONVERTERS:
            raise ConfigurationError(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = _CONVERTERS[key](value)
        except ValueError as exc:
            raise ConfigurationError(f"config line {lineno}: {exc}") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    return replace(base or ExperimentConfig(), **values)


def load_config(path: str, **overrides) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    cfg = parse_config(text, **overrides)
    # relative topology/gateway files resolve against the config's directory
    here = os.path.dirname(os.path.abspath(path))
    cand = os.path.join(here, cfg.topology)
    if not os.path.isabs(cfg.topology) and os.path.exists(cand):
        cfg = replace(cfg, topology=cand)
    return cfg


def prepare_topology(cfg: ExperimentConfig) -> Topology:
    """Load the topology and apply candidates and gateways (explicit or fallback)."""
    try:
        topo = read_topology(cfg.topology)
    except FileNotFoundError:
        raise ConfigurationError(f"topology not found: {cfg.topology}") from None
    if cfg.candidates is not None:
        topo = topo.with_candidates(cfg.candidates)
    gws = cfg.gateways if cfg.gateways is not None else place_gateways_fallback(topo, cfg.gateway_count)
    return topo.with_gateways(gws)


@dataclass(frozen=True)
class TrialRow:
    topology: str
    case: int
    alpha: float
    solver: str
    seed: int
    repeat: int
    n_controllers: int
    w: float
    wc: float
    wr: float
    avg_reliability: float
    d_avg: float
    elapsed: float
    w_tilde: float
    evaluations: int
    placed: str


TRIAL_FIELDS = [f.name for f in fields(TrialRow)]


def _row(cfg, topo, case, alpha, seed, repeat, inst: Instance, res: SolveResult) -> TrialRow:
    return TrialRow(
        topology=topo.name,
        case=case,
        alpha=alpha,
        solver=res.solver,
        seed=seed,
        repeat=repeat,
        n_controllers=res.n_controllers,
        w=res.w,
        wc=res.wc,
        wr=res.wr,
        avg_reliability=1.0 - res.wr / inst.n_nodes,
        d_avg=res.wc / res.n_controllers,
        elapsed=res.elapsed,
        w_tilde=res.w_tilde,
        evaluations=res.evaluations,
        placed=";".join(res.placed),
    )


def run_repeat(cfg: ExperimentConfig, topo: Topology, repeat: int) -> list[TrialRow]:
    """One repeat. The trial seed depends only on (master seed, repeat): every
    case scales the same uniform draws to its own intervals, and each draw is
    shared by every alpha and solver."""
    rows = []
    d = gateway_distances(topo)
    seed = derive_seed(cfg.seed, repeat)
    for case in cfg.cases:
        failures = sample_failures(topo, case, seed)
        matrix = reliability_matrix(
            topo, failures, cfg.path_mode, count_endpoints=cfg.count_endpoints, satellite_hop=cfg.satellite_hop
        )
        for alpha in cfg.alphas:
            inst = Instance.from_matrix(matrix, d, alpha)
            for solver in cfg.solvers:
                if solver == "exact":
                    res = solve_exact(inst, limit=cfg.exact_limit)
                else:
                    res = solve_double_greedy(inst, derive_seed(seed, 1), rule=cfg.greedy_rule)
                rows.append(_row(cfg, topo, case, alpha, seed, repeat, inst, res))
    return rows


def _repeat_job(args):
    cfg, topo, repeat = args
    return run_repeat(cfg, topo, repeat)


@dataclass
class TrialSet:
    config: ExperimentConfig
    topology: Topology
    rows: list[TrialRow]
    summary: list[dict] = field(default_factory=list)


SUMMARY_METRICS = ("n_controllers", "w", "wc", "wr", "w_tilde", "avg_reliability", "d_avg", "evaluations", "elapsed")


def summarize(rows: Sequence[TrialRow], *, timing: bool = True) -> list[dict]:
    """Mean and sample standard deviation per (topology, case, alpha, solver)."""
    groups: dict[tuple, list[TrialRow]] = {}
    for r in rows:
        groups.setdefault((r.topology, r.case, r.alpha, r.solver), []).append(r)
    out = []
    for (topo, case, alpha, solver), grp in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][2], kv[0][3])):
        rec = {"topology": topo, "case": case, "alpha": alpha, "solver": solver, "trials": len(grp)}
        for m in SUMMARY_METRICS:
            if m == "elapsed" and not timing:
                rec["mean_elapsed"] = rec["std_elapsed"] = None
                continue
            vals = [float(getattr(r, m)) for r in grp]
            rec[f"mean_{m}"] = math.fsum(vals) / len(vals)
            rec[f"std_{m}"] = statistics.stdev(vals) if len(vals) > 1 else 0.0
        out.append(rec)
    return out


def run_trials(cfg: ExperimentConfig, topo: Topology | None = None) -> TrialSet:
    """All repeats; rows come back in (repeat, case, alpha, solver) order whatever ``jobs`` is."""
    topo = topo or prepare_topology(cfg)
    if "exact" in cfg.solvers and len(topo.candidates) > cfg.exact_limit:
        raise ConfigurationError(
            f"{len(topo.candidates)} candidates exceed exact_limit={cfg.exact_limit}; "
            "raise exact_limit or run the greedy solver only"
        )
    jobs = [(cfg, topo, r) for r in range(cfg.repeats)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            per_repeat = list(pool.map(_repeat_job, jobs))
    else:
        per_repeat = [_repeat_job(j) for j in jobs]
    rows = [r for rs in per_repeat for r in rs]
    return TrialSet(cfg, topo, rows, summarize(rows, timing=cfg.timing))


def alpha_sweep(cfg: ExperimentConfig, topo: Topology | None = None) -> list[dict]:
    """Per-alpha means of controller count, latency and error terms, sorted by alpha."""
    if len(cfg.alphas) < 2:
        raise ConfigurationError("an alpha sweep needs at least two alpha values")
    if "exact" not in cfg.solvers:
        raise ConfigurationError("an alpha sweep needs the exact solver")
    ts = run_trials(replace(cfg, alphas=tuple(sorted(set(cfg.alphas)))), topo)
    table = []
    for rec in ts.summary:
        table.append(
            {
                "topology": rec["topology"],
                "case": rec["case"],
                "solver": rec["solver"],
                "alpha": rec["alpha"],
                "mean_n_controllers": rec["mean_n_controllers"],
                "mean_wc": rec["mean_wc"],
                "mean_wr": rec["mean_wr"],
                "mean_d_avg": rec["mean_d_avg"],
                "mean_avg_reliability": rec["mean_avg_reliability"],
            }
        )
    table.sort(key=lambda r: (r["case"], r["solver"], r["alpha"]))
    return table


def compare_solvers(cfg: ExperimentConfig, topo: Topology | None = None) -> tuple[list[dict], TrialSet]:
    """Exact vs greedy gaps per (case, alpha), computed on the trial means.

    ``objective_gap`` is ``(W_greedy - W_exact) / W_exact``; ``w_tilde_gap``
    is ``(W~_exact - W~_greedy) / W~_exact``; ``reliability_gap`` is the
    exact minus greedy mean average control-path reliability (a fraction).
    """
    ts = run_trials(replace(cfg, solvers=SOLVERS), topo)
    by = {(r["case"], r["alpha"], r["solver"]): r for r in ts.summary}
    table = []
    for case in cfg.cases:
        for alpha in cfg.alphas:
            ex, gr = by[(case, alpha, "exact")], by[(case, alpha, "greedy")]
            we, wg = ex["mean_w"], gr["mean_w"]
            te, tg = ex["mean_w_tilde"], gr["mean_w_tilde"]
            table.append(
                {
                    "topology": ts.topology.name,
                    "case": case,
                    "alpha": alpha,
                    "trials": ex["trials"],
                    "w_exact": we,
                    "w_greedy": wg,
                    "objective_gap": (wg - we) / we if we else 0.0,
                    "w_tilde_gap": (te - tg) / te if te else 0.0,
                    "reliability_exact": ex["mean_avg_reliability"],
                    "reliability_greedy": gr["mean_avg_reliability"],
                    "reliability_gap": ex["mean_avg_reliability"] - gr["mean_avg_reliability"],
                    "n_exact": ex["mean_n_controllers"],
                    "n_greedy": gr["mean_n_controllers"],
                    "evaluations_exact": ex["mean_evaluations"],
                    "evaluations_greedy": gr["mean_evaluations"],
                    "elapsed_exact": ex["mean_elapsed"],
                    "elapsed_greedy": gr["mean_elapsed"],
                }
            )
    return table, ts


# --- output -----------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def write_table(rows: Iterable[dict], fh: IO[str], fieldnames: Sequence[str] | None = None) -> None:
    rows = list(rows)
    if fieldnames is None:
        fieldnames = list(rows[0]) if rows else []
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(fieldnames)
    for r in rows:
        w.writerow([_fmt(r.get(k)) for k in fieldnames])


def trial_dicts(rows: Iterable[TrialRow], *, timing: bool = True) -> list[dict]:
    out = []
    for r in rows:
        rec = {f: getattr(r, f) for f in TRIAL_FIELDS}
        if not timing:
            rec["elapsed"] = None
        out.append(rec)
    return out


def write_dat(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Whitespace-separated columns with a ``#`` header line (gnuplot ``using``)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in rows:
            fh.write(" ".join(_fmt(x) if not isinstance(x, str) else x.replace(" ", "_") for x in row) + "\n")


def write_outputs(ts: TrialSet, out: str) -> list[str]:
    """``trials.csv``, ``summary.csv`` and per-figure ``.dat`` files; returns written paths."""
    os.makedirs(out, exist_ok=True)
    timing = ts.config.timing
    written = []
    p = os.path.join(out, "trials.csv")
    with open(p, "w", newline="", encoding="utf-8") as fh:
        write_table(trial_dicts(ts.rows, timing=timing), fh, TRIAL_FIELDS)
    written.append(p)
    p = os.path.join(out, "summary.csv")
    with open(p, "w", newline="", encoding="utf-8") as fh:
        write_table(ts.summary, fh)
    written.append(p)

    s = ts.summary
    solvers = [x for x in SOLVERS if any(r["solver"] == x for r in s)]
    if len(ts.config.alphas) > 1:
        p = os.path.join(out, "fig_alpha.dat")
        write_dat(
            p,
            ["case", "solver", "alpha", "mean_wc", "mean_wr", "mean_d_avg", "mean_n_controllers"],
            [[r["case"], r["solver"], r["alpha"], r["mean_wc"], r["mean_wr"], r["mean_d_avg"], r["mean_n_controllers"]]
             for r in sorted(s, key=lambda r: (r["case"], r["solver"], r["alpha"]))],
        )
        written.append(p)
    if len(ts.config.cases) > 1:
        p = os.path.join(out, "fig_cases.dat")
        by = {(r["case"], r["alpha"], r["solver"]): r for r in s}
        rows = []
        for alpha in ts.config.alphas:
            for case in ts.config.cases:
                rows.append([case, alpha] + [by[(case, alpha, x)]["mean_avg_reliability"] for x in solvers])
        write_dat(p, ["case", "alpha"] + [f"reliability_{x}" for x in solvers], rows)
        written.append(p)
    if set(solvers) == set(SOLVERS):
        by = {(r["case"], r["alpha"], r["solver"]): r for r in s}
        keys = sorted({(r["case"], r["alpha"]) for r in s})
        p = os.path.join(out, "fig_compare.dat")
        write_dat(
            p,
            ["topology", "case", "alpha", "w_exact", "w_greedy", "n_exact", "n_greedy"],
            [[ts.topology.name, c, a, by[(c, a, "exact")]["mean_w"], by[(c, a, "greedy")]["mean_w"],
              by[(c, a, "exact")]["mean_n_controllers"], by[(c, a, "greedy")]["mean_n_controllers"]] for c, a in keys],
        )
        written.append(p)
        p = os.path.join(out, "fig_reliability.dat")
        write_dat(
            p,
            ["topology", "case", "alpha", "reliability_exact", "reliability_greedy"],
            [[ts.topology.name, c, a, by[(c, a, "exact")]["mean_avg_reliability"],
              by[(c, a, "greedy")]["mean_avg_reliability"]] for c, a in keys],
        )
        written.append(p)
    return written
