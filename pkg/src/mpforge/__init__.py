"""Synthesis flow from factor graphs to margin-propagation analog netlists.

The pipeline runs in five stages: factor-graph construction (graph_ir),
lowering to an arithmetic DAG (compute_graph), technology mapping onto an
analog cell library (analog_map), SPICE-dialect netlist emission (netlist),
and behavioral validation (sim).  Application harnesses for Bayesian-network
queries, LDPC decoding, and small neural networks live in pipeline, ldpc,
and ann.
"""

__version__ = "0.1.0"

from importlib import resources


def data_path(name: str):
    """Traversable path to a shipped fixture (prey.bn, ldpc_24x32.alist, ...)."""
    return resources.files(__name__) / "data" / name
