"""Command-line entry point.

Exit status: 0 on success, 1 on an operational error, 2 on a usage error.
Data goes to files or standard output; logs go to standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import colocation, documents, model, partitioner, plogp, synth
from .errors import LogiclustersError, ValidationError
from .pipeline import PipelineOptions, run_pipeline
from .prober import ProbeConfig, TcpTransport, measure_matrix, probe, serve
from .prober.timings import RAW_SET_FORMAT, parse_raw, parse_raw_set, serialize_raw

log = logging.getLogger("logiclusters")

WORKDIR_ENV = "LOGICLUSTERS_WORKDIR"


def _tolerance(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value >= 1:
        raise argparse.ArgumentTypeError("tolerance must be >= 1")
    return value


def _ladder(text):
    try:
        return plogp.MessageSizeLadder.parse(text)
    except ValidationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _node_list(text):
    return [n for n in text.split(",") if n]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _add_probe_flags(p):
    p.add_argument("--ladder", type=_ladder, default=plogp.MessageSizeLadder(),
                   help="message sizes: '1,64,1024' or 'pow2:1:1048576' (default)")
    p.add_argument("--rounds", type=_positive_int, default=30)
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--burst", type=_positive_int, default=64, help="burst length")
    p.add_argument("--timeout", type=float, default=10.0, help="per-size timeout, seconds")


def _probe_config(args):
    return ProbeConfig(args.rounds, args.warmup, args.burst, args.timeout)


def _add_symmetry(p):
    group = p.add_mutually_exclusive_group()
    group.add_argument("--symmetric", dest="symmetric", action="store_true", default=True)
    group.add_argument("--asymmetric", dest="symmetric", action="store_false")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="logiclusters", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("probe-serve", help="run a probe echo server")
    p.add_argument("--listen", required=True, help="host:port")

    p = sub.add_parser("probe", help="probe one target and write raw timings")
    p.add_argument("--target", required=True)
    p.add_argument("--source", help="ask this probe server to run the probe")
    p.add_argument("-o", "--output")
    _add_probe_flags(p)

    p = sub.add_parser("measure", help="probe all node pairs into a distance matrix")
    p.add_argument("--nodes", type=_node_list, required=True, help="comma-separated host:port list")
    p.add_argument("-o", "--output")
    _add_probe_flags(p)

    p = sub.add_parser("partition", help="split a distance matrix into subnets")
    p.add_argument("-i", "--input", help="distance matrix file (default stdin)")
    p.add_argument("-o", "--output")
    p.add_argument("--tolerance", type=_tolerance, default=1.20)
    p.add_argument("--trace", help="also write the merge trace here")

    p = sub.add_parser("rendezvous-root", help="collect rank registrations")
    p.add_argument("--listen", required=True)
    p.add_argument("--world-size", type=_positive_int, required=True)
    p.add_argument("--deadline", type=float, default=30.0)
    p.add_argument("-o", "--output")

    p = sub.add_parser("rendezvous-register", help="register this process with a root")
    p.add_argument("--root", required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--hostname", help="override gethostname()")
    p.add_argument("--retries", type=int, default=5)

    p = sub.add_parser("tree", help="build the machine/subnet/world group tree")
    p.add_argument("--registry", required=True)
    p.add_argument("--partition", required=True)
    p.add_argument("-o", "--output")

    p = sub.add_parser("plan", help="plan pLogP measurements for a partition")
    p.add_argument("-i", "--input", "--partition", dest="input", help="partition file")
    p.add_argument("-o", "--output")
    _add_symmetry(p)

    p = sub.add_parser("estimate", help="estimate pLogP parameters from raw timings")
    p.add_argument("-i", "--input", required=True, help="raw timings or raw timings set")
    p.add_argument("-o", "--output")
    p.add_argument("--ladder", type=_ladder)
    p.add_argument("--task", help="task id for a single raw timings file")

    p = sub.add_parser("extrapolate", help="spread task results over all pairs")
    p.add_argument("--plan", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--partition", required=True)
    p.add_argument("-o", "--output")

    p = sub.add_parser("synth", help="generate a synthetic distance matrix")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(synth.PRESETS))
    src.add_argument("-i", "--input", help="scenario file")
    p.add_argument("--seed", type=int)
    p.add_argument("--jitter", type=float, help="jitter fraction, 0..0.05")
    p.add_argument("--equalize", metavar="A,B", help="make group B indistinguishable from A")
    p.add_argument("-o", "--output")
    p.add_argument("--truth", help="also write the planted partition here")

    p = sub.add_parser("pipeline", help="run every stage into a work directory")
    p.add_argument("--workdir", default=os.environ.get(WORKDIR_ENV),
                   help=f"stage output directory (default ${WORKDIR_ENV})")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("-i", "--input", help="distance matrix file")
    src.add_argument("--nodes", type=_node_list, help="probe these host:port servers")
    src.add_argument("--preset", choices=sorted(synth.PRESETS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=_tolerance, default=1.20)
    p.add_argument("--registry", help="registry file")
    p.add_argument("--listen", help="collect the registry live on host:port")
    p.add_argument("--world-size", type=_positive_int)
    p.add_argument("--deadline", type=float, default=30.0)
    p.add_argument("--execute", choices=["tcp", "simulate"],
                   help="run the plan over TCP or on a simulated network")
    _add_symmetry(p)
    _add_probe_flags(p)
    return parser


def _read_input(path):
    if path is None or path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def _write_output(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        documents.write(path, text)


def _read(path):
    return Path(path).read_text(encoding="utf-8")


def _cmd_probe_serve(args):
    serve(args.listen)


def _cmd_probe(args):
    transport = TcpTransport()
    config = _probe_config(args)
    if args.source:
        raw = transport.probe_from(args.source, args.target, args.ladder, config)
    else:
        raw = probe(args.target, args.ladder, config, transport)
    _write_output(args.output, serialize_raw(raw))


def _cmd_measure(args):
    matrix = measure_matrix(args.nodes, args.ladder, _probe_config(args), TcpTransport())
    _write_output(args.output, model.serialize_matrix(matrix))


def _cmd_partition(args):
    matrix = model.parse_matrix(_read_input(args.input))
    config = partitioner.PartitionConfig(args.tolerance)
    edges = model.symmetrize(matrix)
    result = partitioner.partition(edges, matrix.nodes, config)
    _write_output(args.output, model.serialize_partition(result))
    if args.trace:
        documents.write(args.trace, partitioner.serialize_trace(
            partitioner.explain(result, edges, config), config))
    log.info("%d nodes -> %d subnets", len(matrix.nodes), len(result))


def _cmd_rendezvous_root(args):
    registry = colocation.collect(args.world_size, args.listen, args.deadline,
                                  on_ready=lambda addr: log.warning("listening on %s", addr))
    _write_output(args.output, colocation.serialize_registry(registry))


def _cmd_rendezvous_register(args):
    colocation.register(args.rank, args.root, hostname=args.hostname, retries=args.retries)


def _cmd_tree(args):
    registry = colocation.parse_registry(_read(args.registry))
    part = model.parse_partition(_read(args.partition))
    _write_output(args.output, colocation.serialize_tree(colocation.build_group_tree(registry, part)))


def _cmd_plan(args):
    part = model.parse_partition(_read_input(args.input))
    plan = plogp.plan_measurements(part, args.symmetric)
    _write_output(args.output, plogp.serialize_plan(plan))
    log.info("%d tasks (bound %d)", len(plan), plan.upper_bound)


def _cmd_estimate(args):
    text = _read(args.input)
    try:
        kind = json.loads(text).get("format")
    except (ValueError, AttributeError):
        kind = None
    if kind == RAW_SET_FORMAT:
        raws = parse_raw_set(text)
    else:
        raw = parse_raw(text)
        raws = {args.task or f"{raw.src}->{raw.dst}": raw}
    results = {tid: plogp.estimate_params(raw, args.ladder) for tid, raw in raws.items()}
    for tid, params in results.items():
        if not params.ok:
            log.warning("task %s: %s", tid, params.violation)
    _write_output(args.output, plogp.serialize_results(results))


def _cmd_extrapolate(args):
    plan = plogp.parse_plan(_read(args.plan))
    results = plogp.parse_results(_read(args.results))
    part = model.parse_partition(_read(args.partition))
    _write_output(args.output, plogp.serialize_param_map(plogp.extrapolate(plan, results, part)))


def _cmd_synth(args):
    if args.preset:
        spec = synth.PRESETS[args.preset]()
    else:
        spec = synth.parse_spec(_read(args.input))
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.jitter is not None:
        overrides["jitter_fraction"] = args.jitter
    if overrides:
        spec = synth.ScenarioSpec(spec.groups, spec.inter,
                                  overrides.get("jitter_fraction", spec.jitter_fraction),
                                  overrides.get("seed", spec.seed))
    if args.equalize:
        a, _, b = args.equalize.partition(",")
        spec = synth.equalize(spec, a, b)
    matrix, truth = synth.generate(spec)
    _write_output(args.output, model.serialize_matrix(matrix))
    if args.truth:
        documents.write(args.truth, model.serialize_partition(truth))


def _cmd_pipeline(args, parser):
    if not args.workdir:
        parser.error(f"pipeline needs --workdir or ${WORKDIR_ENV}")
    scenario = None
    if args.preset:
        base = synth.PRESETS[args.preset]()
        scenario = synth.ScenarioSpec(base.groups, base.inter, base.jitter_fraction, args.seed)
    opts = PipelineOptions(
        workdir=Path(args.workdir),
        matrix_path=Path(args.input) if args.input else None,
        nodes=args.nodes, scenario=scenario, tolerance=args.tolerance,
        registry_path=Path(args.registry) if args.registry else None,
        listen=args.listen, world_size=args.world_size, deadline=args.deadline,
        symmetric=args.symmetric, execute=args.execute, ladder=args.ladder,
        probe_config=_probe_config(args), seed=args.seed,
        on_listen=lambda addr: log.warning("rendezvous listening on %s", addr))
    for stage, path in run_pipeline(opts).items():
        print(f"{stage}\t{path}")


COMMANDS = {
    "probe-serve": _cmd_probe_serve,
    "probe": _cmd_probe,
    "measure": _cmd_measure,
    "partition": _cmd_partition,
    "rendezvous-root": _cmd_rendezvous_root,
    "rendezvous-register": _cmd_rendezvous_register,
    "tree": _cmd_tree,
    "plan": _cmd_plan,
    "estimate": _cmd_estimate,
    "extrapolate": _cmd_extrapolate,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(stream=sys.stderr,
                        level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "pipeline":
            _cmd_pipeline(args, parser)
        else:
            COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except LogiclustersError as exc:
        log.error("%s", exc)
        return 1
    except OSError as exc:
        log.error("%s", exc)
        return 1
    except KeyboardInterrupt:
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
