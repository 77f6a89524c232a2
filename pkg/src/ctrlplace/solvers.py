"""Exact and randomized double-greedy controller placement."""

from __future__ import annotations

import csv
import itertools
import time
from dataclasses import dataclass, field
from typing import IO, Callable, Iterable

import numpy as np

from .errors import SolverLimitError
from .objective import Instance, Placement
from .reliability import format_float

EXACT_LIMIT = 24


@dataclass(frozen=True)
class SolveResult:
    placement: Placement
    w: float
    wc: float
    wr: float
    w_tilde: float
    elapsed: float
    evaluations: int
    solver: str
    seed: int | None = None

    @property
    def n_controllers(self) -> int:
        return len(self.placement.placed)

    @property
    def placed(self) -> tuple[str, ...]:
        from .topology import sort_nodes

        return tuple(sort_nodes(self.placement.placed))


def _result(inst: Instance, idx: tuple[int, ...], solver: str, started: float, evaluations: int, seed=None) -> SolveResult:
    w = inst.w_idx(idx)
    return SolveResult(
        placement=Placement.optimal(inst, inst.ids(idx)),
        w=w,
        wc=inst.wc_idx(idx),
        wr=inst.wr_idx(idx),
        w_tilde=inst.w_bar - w,
        elapsed=time.perf_counter() - started,
        evaluations=evaluations,
        solver=solver,
        seed=seed,
    )


def _rank(w: float, idx: tuple[int, ...]) -> tuple:
    # candidates are stored in id order, so index tuples compare like id tuples
    return (w, len(idx), idx)


def solve_exhaustive(inst: Instance) -> SolveResult:
    """Evaluate every nonempty subset. Reference oracle for :func:`solve_exact`."""
    started = time.perf_counter()
    n = len(inst.candidates)
    best, count = None, 0
    for size in range(1, n + 1):
        for idx in itertools.combinations(range(n), size):
            count += 1
            key = _rank(inst.w_idx(idx), idx)
            if best is None or key < best:
                best = key
    return _result(inst, best[2], "exhaustive", started, count)


class _BranchAndBound:
    """Depth-first include/exclude search over candidates.

    Supermodularity gives two fixing rules at every search node, with ``O``
    the open set and ``U`` the undecided candidates:

    * a candidate whose marginal cost on ``O`` is already >= 0 never pays off
      in any superset of ``O``, so it is closed;
    * a candidate whose removal from ``O + U`` strictly increases the cost
      helps every subset of ``O + U``, so it is opened.

    Remaining subtrees are cut when ``alpha * d(O) + sum_v min over O + U``
    exceeds the incumbent.
    """

    def __init__(self, inst: Instance):
        self.inst = inst
        self.E = inst.error
        self.ad = inst.alpha * inst.d
        self.best: tuple | None = None
        self.evaluations = 0

    def offer(self, idx: tuple[int, ...]) -> None:
        if not idx:
            return
        self.evaluations += 1
        key = _rank(self.inst.w_idx(idx), idx)
        if self.best is None or key < self.best:
            self.best = key

    def slack(self) -> float:
        w = self.best[0]
        return w + 1e-12 * max(1.0, abs(w))

    def run(self) -> tuple[int, ...]:
        n = len(self.inst.candidates)
        # singletons seed the incumbent
        for i in range(n):
            self.offer((i,))
        order = sorted(range(n), key=lambda i: (self.ad[i] + self.E[i].sum(), i))
        self.search([], np.ones(self.inst.n_nodes), 0.0, order)
        return self.best[2]

    def search(self, opened: list[int], cur: np.ndarray, cost_c: float, undecided: list[int]) -> None:
        E, ad = self.E, self.ad
        while True:
            changed = False
            if opened and undecided:
                saving = np.maximum(cur[None, :] - E[undecided], 0.0).sum(axis=1)
                keep = [j for j, s in zip(undecided, saving) if ad[j] < s]
                if len(keep) != len(undecided):
                    undecided = keep
                    changed = True
            if undecided:
                upper = opened + undecided
                sub = E[upper]
                if len(upper) >= 2:
                    part = np.partition(sub, 1, axis=0)
                    first, second = part[0], part[1]
                else:
                    first, second = sub[0], np.ones(sub.shape[1])
                arg = sub.argmin(axis=0)
                forced = []
                for pos, j in enumerate(upper[len(opened):], start=len(opened)):
                    loss = float((second - first)[arg == pos].sum())
                    if loss > ad[j]:
                        forced.append(j)
                if forced:
                    opened = opened + forced
                    for j in forced:
                        cur = np.minimum(cur, E[j])
                        cost_c += ad[j]
                    undecided = [j for j in undecided if j not in forced]
                    self.offer(tuple(sorted(opened)))
                    changed = True
            if not changed:
                break
        if not undecided:
            self.offer(tuple(sorted(opened)))
            return
        bound = cost_c + float(np.minimum(cur, E[undecided].min(axis=0)).sum())
        if self.best is not None and bound > self.slack():
            return
        j, rest = undecided[0], undecided[1:]
        inc = opened + [j]
        self.offer(tuple(sorted(inc)))
        self.search(inc, np.minimum(cur, E[j]), cost_c + ad[j], rest)
        self.search(opened, cur, cost_c, rest)


def solve_exact(inst: Instance, *, limit: int = EXACT_LIMIT, prune: bool = True) -> SolveResult:
    """Minimum-W placement over all nonempty candidate subsets.

    Ties go to the smaller placement, then the lexicographically smaller one.
    """
    n = len(inst.candidates)
    if n > limit:
        raise SolverLimitError(
            f"{n} candidates exceed the exact-search limit of {limit}; use the greedy solver or raise the limit"
        )
    if not prune:
        res = solve_exhaustive(inst)
        return SolveResult(**{**res.__dict__, "solver": "exact"})
    started = time.perf_counter()
    bb = _BranchAndBound(inst)
    idx = bb.run()
    return _result(inst, idx, "exact", started, bb.evaluations)


@dataclass
class GreedyTrace:
    """Per-step record of a double-greedy run (for invariant checks)."""

    steps: list = field(default_factory=list)


def solve_double_greedy(
    inst: Instance,
    seed=None,
    *,
    rule: str = "standard",
    incremental: bool = True,
    trace: GreedyTrace | None = None,
) -> SolveResult:
    """Randomized double greedy on ``w_bar - W`` over the candidates in id order.

    ``rule="standard"`` adds candidate ``i`` with probability ``a / (a + b)``,
    ``a`` and ``b`` being the clipped gains of adding ``i`` to the lower set
    and of removing it from the upper set (1 when both are 0).
    ``rule="literal"`` uses the clipped *losses* instead (add with
    probability proportional to the loss of adding); kept for comparison,
    it carries no approximation guarantee.

    With ``incremental`` the two sets' values are carried between steps
    (2 fresh evaluations per candidate); otherwise all 4 are recomputed.
    An empty outcome is repaired with the best single controller.
    """
    if rule not in ("standard", "literal"):
        raise ValueError(f"unknown rule {rule!r}")
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    n = len(inst.candidates)
    evals = 0

    def wt(idx):
        nonlocal evals
        evals += 1
        return inst.w_bar - inst.w_idx(idx)

    lower: tuple[int, ...] = ()
    upper: tuple[int, ...] = tuple(range(n))
    f_lower = f_upper = None
    if incremental:
        f_lower, f_upper = wt(lower), wt(upper)
    for i in range(n):
        with_i = tuple(sorted(lower + (i,)))
        without_i = tuple(j for j in upper if j != i)
        if not incremental:
            f_lower, f_upper = wt(lower), wt(upper)
        f_add, f_drop = wt(with_i), wt(without_i)
        if rule == "standard":
            a = max(f_add - f_lower, 0.0)
            b = max(f_drop - f_upper, 0.0)
        else:
            a = max(f_lower - f_add, 0.0)
            b = max(f_upper - f_drop, 0.0)
        p = 1.0 if a + b == 0 else a / (a + b)
        u = rng.random()
        take = u < p
        if trace is not None:
            trace.steps.append({"i": i, "lower": lower, "upper": upper, "a": a, "b": b, "p": p, "take": bool(take)})
        if take:
            lower, f_lower = with_i, f_add
        else:
            upper, f_upper = without_i, f_drop
    assert lower == upper
    chosen = lower
    if not chosen:
        singles = [(inst.w_idx((i,)), i) for i in range(n)]
        evals += n
        chosen = (min(singles)[1],)
    return _result(inst, chosen, "greedy", started, evals, seed)


@dataclass(frozen=True)
class SupermodularityReport:
    checked: int
    violations: int
    worst: float
    worst_case: tuple | None
    exhaustive: bool

    @property
    def ok(self) -> bool:
        return self.violations == 0


def check_supermodularity(
    inst: Instance,
    trials: int = 1000,
    seed=None,
    *,
    tol: float = 1e-9,
    exhaustive_limit: int = 8,
    objective: Callable[[frozenset], float] | None = None,
) -> SupermodularityReport:
    """Check ``W(B+k) - W(B) >= W(A+k) - W(A)`` for nested ``A <= B`` and ``k`` outside ``B``.

    Exhausts every triple when there are at most ``exhaustive_limit``
    candidates, otherwise samples ``trials`` triples. ``objective`` replaces
    ``W`` (a set of candidate ids -> float), e.g. for negative controls.
    Violations are reported, never raised.
    """
    cands = inst.candidates
    n = len(cands)
    if objective is None:
        def objective(s):
            return inst.w_idx(inst.indices(s))

    cache: dict[frozenset, float] = {}

    def f(s: frozenset) -> float:
        if s not in cache:
            cache[s] = objective(s)
        return cache[s]

    def triples() -> Iterable[tuple[frozenset, frozenset, str]]:
        if n <= exhaustive_limit:
            # B as a bitmask, A as a sub-mask of B, k outside B
            for bmask in range(1 << n):
                b_set = frozenset(cands[i] for i in range(n) if bmask >> i & 1)
                outside = [cands[i] for i in range(n) if not bmask >> i & 1]
                sub = bmask
                while True:
                    a_set = frozenset(cands[i] for i in range(n) if sub >> i & 1)
                    for k in outside:
                        yield a_set, b_set, k
                    if sub == 0:
                        break
                    sub = (sub - 1) & bmask
        else:
            rng = np.random.default_rng(seed)
            for _ in range(trials):
                labels = rng.integers(0, 3, size=n)  # 0: A (and B), 1: B only, 2: outside
                outside = [cands[i] for i in range(n) if labels[i] == 2]
                if not outside:
                    continue
                k = outside[rng.integers(len(outside))]
                a_set = frozenset(cands[i] for i in range(n) if labels[i] == 0)
                b_set = frozenset(cands[i] for i in range(n) if labels[i] <= 1)
                yield a_set, b_set, k

    checked = violations = 0
    worst, worst_case = 0.0, None
    for a_set, b_set, k in triples():
        checked += 1
        gap = (f(a_set | {k}) - f(a_set)) - (f(b_set | {k}) - f(b_set))
        if gap > worst:
            worst, worst_case = gap, (a_set, b_set, k)
        if gap > tol:
            violations += 1
    return SupermodularityReport(checked, violations, worst, worst_case, n <= exhaustive_limit)


RESULT_FIELDS = ["solver", "seed", "n_placed", "placed", "w", "wc", "wr", "w_tilde", "elapsed", "evaluations"]


def result_row(res: SolveResult, *, timing: bool = True, digits: int = 12) -> dict:
    return {
        "solver": res.solver,
        "seed": "" if res.seed is None else str(res.seed),
        "n_placed": str(res.n_controllers),
        "placed": ";".join(res.placed),
        "w": format_float(res.w, digits),
        "wc": format_float(res.wc, digits),
        "wr": format_float(res.wr, digits),
        "w_tilde": format_float(res.w_tilde, digits),
        "elapsed": format_float(res.elapsed, 6) if timing else "",
        "evaluations": str(res.evaluations),
    }


def write_results_csv(results: Iterable[SolveResult], fh: IO[str], *, timing: bool = True) -> None:
    w = csv.DictWriter(fh, fieldnames=RESULT_FIELDS, lineterminator="\n")
    w.writeheader()
    for res in results:
        w.writerow(result_row(res, timing=timing))
