"""Discover logical homogeneous clusters from partial latency measurements.

The workflow: gather a (possibly partial) distance matrix, split it into
subnets whose internal latencies agree within a tolerance, group the
application's processes by machine, and plan the few pLogP measurements
that then characterise every link.
"""

from .colocation import ProcessInfo, ProcessRegistry, build_group_tree, collect, register
from .errors import LogiclustersError
from .model import DistanceMatrix, Edge, LinkMetric, Partition, Subnet, parse_matrix, symmetrize
from .partitioner import PartitionConfig, explain, partition
from .plogp import (MeasurementPlan, MessageSizeLadder, PLogPParams, estimate_params, extrapolate,
                    plan_measurements)

__version__ = "0.1.0"

__all__ = [
    "DistanceMatrix", "Edge", "LinkMetric", "LogiclustersError", "MeasurementPlan",
    "MessageSizeLadder", "PLogPParams", "Partition", "PartitionConfig", "ProcessInfo",
    "ProcessRegistry", "Subnet", "build_group_tree", "collect", "estimate_params", "explain",
    "extrapolate", "parse_matrix", "partition", "plan_measurements", "register", "symmetrize",
]
