"""Command-line front end.

Subcommands:
  run     execute the pipeline, write distances CSV and metrics JSON
  verify  run + compare the distance matrix against the sequential oracle
  gen     write a generated graph to a JSON file
  sweep   run a size sweep and append per-n round-count CSV rows

Exit codes: 0 ok, 1 verification mismatch, 2 configuration error,
3 simulation hard error (bandwidth violation, broken invariant, timeout).
"""
from __future__ import annotations

import argparse
import sys
from fractions import Fraction

from . import oracle
from .errors import ConfigurationError, GraphValidationError, OracleMismatchError, \
    SimulationError
from .graphs import INF, dump_json, generate_graph, load_graph
from .pipeline import PipelineConfig, run_apsp


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigurationError(f"bad fraction {text!r}: {exc}") from exc


def _add_common(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--graph", help="path to a graph file")
    src.add_argument("--gen", help="generator spec, e.g. gnp:16:0.3:8 or path:8")
    p.add_argument("--format", default="json", choices=["json", "dimacs"],
                   help="graph file format (with --graph)")
    p.add_argument("--h", type=int, default=None, help="hop bound (default n^(1/3))")
    p.add_argument("--epsilon", default="1/12", help="stage base, fraction string")
    p.add_argument("--delta", default="1/12", help="selection constant, fraction string")
    p.add_argument("--mode", default="deterministic",
                   choices=["deterministic", "randomized"])
    p.add_argument("--schedule", default="staged", choices=["staged", "plain"])
    p.add_argument("--bandwidth", type=int, default=1,
                   help="messages per channel per round")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metrics", help="write metrics JSON here")
    p.add_argument("--distances", help="write the distance matrix CSV here")


def _load(args) -> "Graph":
    if args.graph:
        return load_graph(args.graph, args.format)
    return generate_graph(args.gen, seed=args.seed)


def _pipeline_config(args) -> PipelineConfig:
    return PipelineConfig(
        h=args.h,
        epsilon=_fraction(args.epsilon),
        delta=_fraction(args.delta),
        mode=args.mode,
        schedule=args.schedule,
        seed=args.seed,
        bandwidth=args.bandwidth,
    )


def _write_distances(matrix, n: int, path: str) -> None:
    with open(path, "w") as fh:
        for x in range(1, n + 1):
            row = (("inf" if matrix[x][t] == INF else str(matrix[x][t]))
                   for t in range(1, n + 1))
            fh.write(",".join(row) + "\n")


def _cmd_run(args, check_oracle: bool) -> int:
    g = _load(args)
    cfg = _pipeline_config(args)
    matrix, metrics = run_apsp(g, cfg)
    if args.distances:
        _write_distances(matrix, g.n, args.distances)
    if args.metrics:
        with open(args.metrics, "w") as fh:
            fh.write(metrics.to_json() + "\n")
    if check_oracle:
        want = oracle.dijkstra_apsp(g)
        for x in g.node_ids():
            for t in g.node_ids():
                if matrix[x][t] != want[x][t]:
                    print(f"mismatch at ({x},{t}): {matrix[x][t]} != {want[x][t]}",
                          file=sys.stderr)
                    return 1
        print(f"verified: n={g.n} h={metrics.summary['h']} "
              f"rounds={metrics.rounds} |Q|={metrics.summary['q_size']}")
    return 0


def _cmd_gen(args) -> int:
    g = generate_graph(args.gen, seed=args.seed)
    dump_json(g, args.out)
    print(f"wrote {args.out}: n={g.n} m={len(g.edges)} directed={g.directed}")
    return 0


def _cmd_sweep(args) -> int:
    ns = [int(x) for x in args.ns.split(",") if x]
    if not ns:
        raise ConfigurationError("--ns needs at least one size")
    rows = ["n,total_rounds,step1_rounds,step2_rounds,step6_rounds,q_size,b_size"]
    for n in ns:
        g = generate_graph(f"gnp:{n}:{args.p}:{args.wmax}", seed=args.seed)
        cfg = PipelineConfig(h=args.h, seed=args.seed)
        _, metrics = run_apsp(g, cfg)
        s = metrics.summary
        rows.append(f"{n},{s['total_rounds']},{s['step1_rounds']},"
                    f"{s['step2_rounds']},{s['step6_rounds']},{s['q_size']},{s['b_size']}")
        print(rows[-1])
    with open(args.out, "w") as fh:
        fh.write("\n".join(rows) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="congest-apsp",
        description="Deterministic CONGEST-model APSP simulator")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="run the pipeline")
    _add_common(p_run)

    p_verify = sub.add_parser("verify", help="run and compare to the oracle")
    _add_common(p_verify)

    p_gen = sub.add_parser("gen", help="generate a graph file")
    p_gen.add_argument("--gen", required=True, help="generator spec")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True, help="output JSON path")

    p_sweep = sub.add_parser("sweep", help="rounds-vs-n scaling sweep")
    p_sweep.add_argument("--ns", required=True, help="comma-separated sizes")
    p_sweep.add_argument("--p", type=float, default=0.3)
    p_sweep.add_argument("--wmax", type=int, default=8)
    p_sweep.add_argument("--h", type=int, default=None)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--out", required=True, help="output CSV path")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.cmd == "run":
            return _cmd_run(args, check_oracle=False)
        if args.cmd == "verify":
            return _cmd_run(args, check_oracle=True)
        if args.cmd == "gen":
            return _cmd_gen(args)
        if args.cmd == "sweep":
            return _cmd_sweep(args)
        raise ConfigurationError(f"unknown command {args.cmd!r}")
    except (ConfigurationError, GraphValidationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OracleMismatchError as exc:
        print(f"verification mismatch: {exc}", file=sys.stderr)
        return 1
    except SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
