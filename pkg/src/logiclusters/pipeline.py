"""Two-phase discovery pipeline writing one artifact per stage.

Work-directory layout (fixed names, so any stage can be inspected or
resumed from)::

    matrix.json      distance matrix (loaded, measured or synthesized)
    truth.json       planted partition, synthetic runs only
    partition.json   subnets
    trace.json       partitioner decisions
    registry.json    rank -> hostname registry (when a source is given)
    tree.json        machine/subnet/world group tree
    plan.json        pLogP measurement plan
    raw.json         raw timings per plan task (when the plan is executed)
    results.json     estimated parameters per task
    params.json      parameters spread over every directed pair block
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import colocation, documents, model, partitioner, plogp, synth
from .errors import LogiclustersError
from .prober import FakeNetwork, ProbeConfig, TcpTransport, execute_plan, measure_matrix
from .prober.fake import LinkModel
from .prober.timings import serialize_raw_set

log = logging.getLogger(__name__)

STAGE_FILES = {
    "matrix": "matrix.json",
    "truth": "truth.json",
    "partition": "partition.json",
    "trace": "trace.json",
    "registry": "registry.json",
    "tree": "tree.json",
    "plan": "plan.json",
    "raw": "raw.json",
    "results": "results.json",
    "params": "params.json",
}


class StageError(LogiclustersError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


@dataclass
class PipelineOptions:
    workdir: Path
    matrix_path: Path | None = None
    nodes: list[str] | None = None
    scenario: synth.ScenarioSpec | None = None
    tolerance: float = 1.20
    registry_path: Path | None = None
    listen: str | None = None
    world_size: int | None = None
    deadline: float = 30.0
    symmetric: bool = True
    execute: str | None = None  # None, "tcp" or "simulate"
    ladder: plogp.MessageSizeLadder = field(default_factory=plogp.MessageSizeLadder)
    probe_config: ProbeConfig = field(default_factory=ProbeConfig)
    seed: int = 0
    on_listen: Callable[[str], None] | None = None


def run_pipeline(opts: PipelineOptions) -> dict[str, Path]:
    """Run every applicable stage; returns stage name -> written file."""
    workdir = Path(opts.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    def emit(stage, text):
        path = workdir / STAGE_FILES[stage]
        documents.write(path, text)
        written[stage] = path
        log.info("wrote %s", path)

    def stage(name, fn):
        try:
            return fn()
        except LogiclustersError as exc:
            raise StageError(name, exc) from exc
        except (OSError, ValueError) as exc:
            raise StageError(name, exc) from exc

    def load_matrix():
        if opts.matrix_path is not None:
            return model.parse_matrix(Path(opts.matrix_path).read_text(encoding="utf-8")), None
        if opts.scenario is not None:
            return synth.generate(opts.scenario)
        if opts.nodes:
            return measure_matrix(opts.nodes, opts.ladder, opts.probe_config, TcpTransport()), None
        raise ValueError("no matrix source: give a matrix file, a scenario or probe nodes")

    matrix, truth = stage("matrix", load_matrix)
    emit("matrix", model.serialize_matrix(matrix))
    if truth is not None:
        emit("truth", model.serialize_partition(truth))

    config = stage("partition", lambda: partitioner.PartitionConfig(opts.tolerance))
    edges = model.symmetrize(matrix)
    part = stage("partition", lambda: partitioner.partition(edges, matrix.nodes, config))
    emit("partition", model.serialize_partition(part))
    emit("trace", partitioner.serialize_trace(partitioner.explain(part, edges, config), config))

    def load_registry():
        if opts.registry_path is not None:
            return colocation.parse_registry(Path(opts.registry_path).read_text(encoding="utf-8"))
        if opts.listen is not None:
            if not opts.world_size:
                raise ValueError("live rendezvous needs a world size")
            return colocation.collect(opts.world_size, opts.listen, opts.deadline, opts.on_listen)
        return None

    registry = stage("registry", load_registry)
    if registry is None:
        log.warning("no registry source given; skipping the group tree")
    else:
        emit("registry", colocation.serialize_registry(registry))
        tree = stage("tree", lambda: colocation.build_group_tree(registry, part))
        emit("tree", colocation.serialize_tree(tree))

    plan = plogp.plan_measurements(part, opts.symmetric)
    emit("plan", plogp.serialize_plan(plan))
    if opts.execute is None:
        return written

    def run_plan():
        if opts.execute == "simulate":
            transport = FakeNetwork.from_matrix(matrix, seed=opts.seed,
                                                default=None, jitter_fraction=0.02)
            _fill_missing_links(transport, matrix)
        elif opts.execute == "tcp":
            transport = TcpTransport()
        else:
            raise ValueError(f"unknown execution mode {opts.execute!r}")
        return execute_plan(plan, opts.ladder, opts.probe_config, transport)

    raws = stage("execute", run_plan)
    emit("raw", serialize_raw_set(raws))
    results = stage("estimate", lambda: {tid: plogp.estimate_params(raw, opts.ladder)
                                         for tid, raw in raws.items()})
    emit("results", plogp.serialize_results(results))
    pmap = stage("extrapolate", lambda: plogp.extrapolate(plan, results, part))
    emit("params", plogp.serialize_param_map(pmap))
    return written


def _fill_missing_links(network: FakeNetwork, matrix: model.DistanceMatrix) -> None:
    # unprobed pairs take the reverse direction, else the slowest measured latency
    if not matrix.entries:
        return
    worst = max(m.latency_us for m in matrix.entries.values())
    for a in matrix.nodes:
        for b in matrix.nodes:
            if a != b and (a, b) not in network.links:
                reverse = network.links.get((b, a))
                network.links[(a, b)] = reverse or LinkModel(worst)
