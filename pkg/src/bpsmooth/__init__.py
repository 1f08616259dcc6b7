"""Belief propagation for bipartite matching with exact oracles and a
seeded Monte Carlo harness for convergence-time and optimality-gap tails."""

from bpsmooth.instances import (
    BipartiteInstance,
    FlowNetwork,
    IntegerFlow,
    Matching,
    read_instance,
    validate,
    write_instance,
    zero_complete,
)

__all__ = [
    "BipartiteInstance",
    "FlowNetwork",
    "IntegerFlow",
    "Matching",
    "read_instance",
    "validate",
    "write_instance",
    "zero_complete",
]

__version__ = "0.1.0"
