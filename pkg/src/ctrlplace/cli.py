"""Command-line front end.

Exit status: 0 on success, 1 on usage errors, 2 on input/data errors.
Structured results are CSV on stdout (and files under ``--out``);
``--pretty`` switches stdout to a short human summary.
"""

from __future__ import annotations

import argparse
import io
import os
import sys
from dataclasses import replace

from . import experiments as ex
from .errors import InputError, PlacementError, SolverLimitError
from .montecarlo import simulate_placement, write_sim_csv
from .objective import Instance
from .reliability import PathMode, gateway_distances, reliability_matrix, write_matrix_csv
from .solvers import EXACT_LIMIT, solve_double_greedy, solve_exact, write_results_csv
from .topology import read_node_list, read_topology, sample_failures, write_failures_csv

OUT_ENV = "CTRLPLACE_OUT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser, *, topology_required: bool = True) -> None:
    p.add_argument("--topology", required=topology_required, help="GraphML file or bundled name (nsfnet, ans, chinanet)")
    p.add_argument("--gateways", help="gateway node ids: a file (one per line) or a comma list")
    p.add_argument("--gateway-count", type=int, help="fallback heuristic gateway count (default 5)")
    p.add_argument("--candidates", help="candidate node ids (file or comma list); default all nodes")
    p.add_argument("--strict", action="store_true", help="reject nodes without coordinates instead of dropping them")


def _model(p: argparse.ArgumentParser) -> None:
    p.add_argument("--case", type=int, default=1, help="failure case 1-4 (0 = failure-free)")
    p.add_argument("--mode", default="exact", help="control path choice: exact or yen-k(K)")
    p.add_argument("--yen-k", type=int, help="K for yen mode (overrides K in --mode)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--count-endpoints", action="store_true", help="charge endpoint node failures too")
    p.add_argument("--satellite-hop", action="store_true", help="fold gateway satellite-link failure into paths")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./results)")
    p.add_argument("--pretty", action="store_true")
    p.add_argument("--timing", action="store_true", help="record wall-clock times (outputs stop being reproducible)")


def _solver_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--exact-limit", type=int, default=EXACT_LIMIT)
    p.add_argument("--greedy-rule", choices=["standard", "literal"], default="standard")


def _experiment_opts(p: argparse.ArgumentParser, *, with_config: bool) -> None:
    if with_config:
        p.add_argument("--config", help="key = value experiment file")
    p.add_argument("--repeats", type=int)
    p.add_argument("--cases", help="comma list of failure cases")
    p.add_argument("--alphas", help="comma list of alpha values")
    p.add_argument("--jobs", type=int, default=1, help="parallel repeats; output does not depend on it")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ctrlplace", description="SDN controller placement for satellite-terrestrial networks")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("inspect", help="load a topology and print its size")
    _common(p)
    p.add_argument("--pretty", action="store_true")

    p = sub.add_parser("solve", help="solve one instance")
    _common(p)
    _model(p)
    _solver_opts(p)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--solver", choices=["exact", "greedy"], default="exact")
    p.add_argument("--export", action="store_true", help="also write failures.csv, matrix.csv under --out")

    p = sub.add_parser("simulate", help="solve, then Monte Carlo the chosen control paths")
    _common(p)
    _model(p)
    _solver_opts(p)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--solver", choices=["exact", "greedy"], default="exact")
    p.add_argument("--samples", type=int, default=100_000)

    for name, help_ in (
        ("experiment", "repeated trials from a config file"),
        ("sweep", "alpha sweep"),
        ("compare", "exact vs greedy gap table"),
    ):
        p = sub.add_parser(name, help=help_)
        _common(p, topology_required=False)
        _model(p)
        _solver_opts(p)
        _experiment_opts(p, with_config=True)
        p.add_argument("--solvers", help="comma list (exact,greedy)")
    return parser


def _out_dir(args) -> str:
    return args.out or os.environ.get(OUT_ENV) or "results"


def _mode(args) -> str:
    mode = PathMode.parse(args.mode)
    if args.yen_k is not None:
        mode = PathMode("yen", args.yen_k)
    return mode.tag


def _topology(args):
    try:
        topo = read_topology(args.topology, strict=args.strict)
    except FileNotFoundError:
        raise InputError(f"topology file not found: {args.topology}") from None
    if args.candidates:
        topo = topo.with_candidates(read_node_list(args.candidates))
    return topo


def _with_gateways(topo, args):
    if args.gateways:
        return topo.with_gateways(read_node_list(args.gateways))
    count = 5 if args.gateway_count is None else args.gateway_count
    return topo.with_gateways(ex.place_gateways_fallback(topo, count))


def cmd_inspect(args, out) -> None:
    topo = _topology(args)
    gws = read_node_list(args.gateways) if args.gateways else []
    if gws:
        topo = topo.with_gateways(gws)
    total = sum(e.length for e in topo.edges)
    if args.pretty:
        out.write(f"{topo.name or args.topology}: {len(topo.nodes)} nodes, {len(topo.edges)} links\n")
        return
    ex.write_table(
        [{"topology": topo.name, "nodes": len(topo.nodes), "links": len(topo.edges),
          "candidates": len(topo.candidates), "gateways": len(topo.gateways), "total_length_km": total}],
        out,
    )


def _solve(args):
    topo = _with_gateways(_topology(args), args)
    seed = 0 if args.seed is None else args.seed
    failures = sample_failures(topo, args.case, seed)
    matrix = reliability_matrix(
        topo, failures, _mode(args), count_endpoints=args.count_endpoints, satellite_hop=args.satellite_hop
    )
    inst = Instance.from_matrix(matrix, gateway_distances(topo), args.alpha)
    if args.solver == "exact":
        res = solve_exact(inst, limit=args.exact_limit)
    else:
        res = solve_double_greedy(inst, ex.derive_seed(seed, 1), rule=args.greedy_rule)
    return topo, failures, matrix, inst, res


def cmd_solve(args, out) -> None:
    topo, failures, matrix, inst, res = _solve(args)
    buf = io.StringIO()
    write_results_csv([res], buf, timing=args.timing)
    if args.pretty:
        out.write(
            f"{topo.name}: {args.solver} placed {res.n_controllers} controller(s) at {', '.join(res.placed)}\n"
            f"W = {res.w:.6g} (Wc = {res.wc:.6g} km, Wr = {res.wr:.6g}); "
            f"avg reliability {1 - res.wr / inst.n_nodes:.4%}\n"
        )
    else:
        out.write(buf.getvalue())
    if args.out or args.export:
        d = _out_dir(args)
        os.makedirs(d, exist_ok=True)
        with open(os.path.join(d, "solve.csv"), "w", newline="") as fh:
            fh.write(buf.getvalue())
        if args.export:
            with open(os.path.join(d, "failures.csv"), "w", newline="") as fh:
                write_failures_csv(failures, fh)
            with open(os.path.join(d, "matrix.csv"), "w", newline="") as fh:
                write_matrix_csv(matrix, fh)


def cmd_simulate(args, out) -> None:
    if args.satellite_hop:
        raise UsageError("simulate does not model satellite links; drop --satellite-hop")
    topo, failures, matrix, inst, res = _solve(args)
    sim = simulate_placement(
        inst, res.placement, failures, args.samples, 0 if args.seed is None else args.seed,
        count_endpoints=args.count_endpoints,
    )
    reports = [sim.per_node[v] for v in inst.nodes] + [sim.aggregate]
    buf = io.StringIO()
    write_sim_csv(reports, buf)
    if args.pretty:
        a = sim.aggregate
        out.write(
            f"{topo.name}: mean control-path failure {a.estimated_error:.6f} +/- {a.std_error:.6f} "
            f"(analytic {a.analytic_error:.6f}, {a.samples} samples)\n"
        )
    else:
        out.write(buf.getvalue())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "simulate.csv"), "w", newline="") as fh:
            fh.write(buf.getvalue())


def _config(args) -> ex.ExperimentConfig:
    overrides = {
        "topology": args.topology,
        "gateways": tuple(read_node_list(args.gateways)) if args.gateways else None,
        "candidates": tuple(read_node_list(args.candidates)) if args.candidates else None,
        "repeats": args.repeats,
        "cases": tuple(int(c) for c in args.cases.split(",")) if args.cases else None,
        "alphas": tuple(float(a) for a in args.alphas.split(",")) if args.alphas else None,
        "solvers": tuple(s.strip() for s in args.solvers.split(",")) if args.solvers else None,
        "jobs": args.jobs if args.jobs != 1 else None,
        "timing": True if args.timing else None,
        "count_endpoints": True if args.count_endpoints else None,
        "satellite_hop": True if args.satellite_hop else None,
        "greedy_rule": args.greedy_rule if args.greedy_rule != "standard" else None,
        "exact_limit": args.exact_limit if args.exact_limit != EXACT_LIMIT else None,
        "out": args.out or os.environ.get(OUT_ENV),
    }
    if args.mode != "exact" or args.yen_k is not None:
        overrides["mode"] = _mode(args)
    if args.case != 1 and not args.cases:
        overrides["cases"] = (args.case,)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.gateway_count is not None:
        overrides["gateway_count"] = args.gateway_count
    if args.config:
        try:
            return ex.load_config(args.config, **overrides)
        except FileNotFoundError:
            raise InputError(f"config file not found: {args.config}") from None
    if not args.topology:
        raise UsageError(f"{args.command}: --topology or --config is required")
    return ex.parse_config("", **overrides)


def _write_csv(path: str, rows, fields=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        ex.write_table(rows, fh, fields)


def cmd_experiment(args, out) -> None:
    cfg = _config(args)
    ts = ex.run_trials(cfg)
    ex.write_outputs(ts, cfg.out)
    if args.pretty:
        for r in ts.summary:
            out.write(
                f"case {r['case']} alpha {r['alpha']:g} {r['solver']}: W {r['mean_w']:.6g}, "
                f"reliability {r['mean_avg_reliability']:.4%}, controllers {r['mean_n_controllers']:.2f}\n"
            )
    else:
        ex.write_table(ts.summary, out)


def cmd_sweep(args, out) -> None:
    cfg = _config(args)
    if args.alphas is None and not args.config:
        cfg = replace(cfg, alphas=(0.1, 1.0, 10.0))
    table = ex.alpha_sweep(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    _write_csv(os.path.join(cfg.out, "sweep.csv"), table)
    ex.write_dat(
        os.path.join(cfg.out, "fig_alpha.dat"),
        ["case", "solver", "alpha", "mean_wc", "mean_wr", "mean_d_avg", "mean_n_controllers"],
        [[r["case"], r["solver"], r["alpha"], r["mean_wc"], r["mean_wr"], r["mean_d_avg"], r["mean_n_controllers"]]
         for r in table],
    )
    if args.pretty:
        for r in table:
            out.write(
                f"alpha {r['alpha']:g} {r['solver']}: controllers {r['mean_n_controllers']:.2f}, "
                f"Wc {r['mean_wc']:.6g}, Wr {r['mean_wr']:.6g}\n"
            )
    else:
        ex.write_table(table, out)


def cmd_compare(args, out) -> None:
    cfg = _config(args)
    table, ts = ex.compare_solvers(cfg)
    ex.write_outputs(ts, cfg.out)
    _write_csv(os.path.join(cfg.out, "compare.csv"), table)
    if args.pretty:
        for r in table:
            out.write(
                f"{r['topology']} case {r['case']} alpha {r['alpha']:g}: objective gap {r['objective_gap']:.2%}, "
                f"reliability gap {100 * r['reliability_gap']:.3f} pp\n"
            )
    else:
        ex.write_table(table, out)


COMMANDS = {
    "inspect": cmd_inspect,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "experiment": cmd_experiment,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
}


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        COMMANDS[args.command](args, stdout)
    except UsageError as exc:
        print(f"error: {exc}", file=stderr)
        return 1
    except (InputError, PlacementError, SolverLimitError, OSError) as exc:
        print(f"error: {exc}", file=stderr)
        return 2
    except ValueError as exc:
        # bad flag values that argparse cannot type-check (e.g. --mode)
        print(f"error: {exc}", file=stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
