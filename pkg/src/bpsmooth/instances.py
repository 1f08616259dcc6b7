"""Core graph/network data types, validation, and file I/O.

Two problem instances are modeled: weighted bipartite graphs (for matching)
and directed flow networks with node budgets (for min-cost flow). Both are
immutable after construction so they can be shared freely across concurrent
trial workers. Construction is permissive; ``validate`` reports the first
violated invariant instead of raising, so that malformed instances can be
round-tripped through the checker.

Indices are 0-based in memory and 1-based in the text file format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Union


class InstanceError(ValueError):
    """Invalid instance data."""


class FormatError(InstanceError):
    """Malformed instance file; carries the offending 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class BipartiteInstance:
    """Weighted bipartite graph, possibly sparse, with weights in [0, 1].

    ``edges`` holds (left, right, weight) triples. Completeness is a derived
    property: the graph is complete when every (i, j) pair is present.
    """

    n_left: int
    n_right: int
    edges: tuple[tuple[int, int, float], ...]

    @staticmethod
    def from_edges(n_left: int, n_right: int,
                   edges: Iterable[tuple[int, int, float]]) -> "BipartiteInstance":
        canon = tuple((int(i), int(j), float(w)) for i, j, w in edges)
        return BipartiteInstance(n_left, n_right, canon)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def is_complete(self) -> bool:
        return self.m == self.n_left * self.n_right

    @cached_property
    def weight(self) -> dict[tuple[int, int], float]:
        return {(i, j): w for i, j, w in self.edges}

    @cached_property
    def left_adj(self) -> tuple[tuple[int, ...], ...]:
        """For each left node, its right neighbors in increasing order."""
        adj: list[list[int]] = [[] for _ in range(self.n_left)]
        for i, j, _ in self.edges:
            adj[i].append(j)
        return tuple(tuple(sorted(a)) for a in adj)

    @cached_property
    def right_adj(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in range(self.n_right)]
        for i, j, _ in self.edges:
            adj[j].append(i)
        return tuple(tuple(sorted(a)) for a in adj)


@dataclass(frozen=True)
class Matching:
    """A set of pairwise node-disjoint edges and its total weight."""

    pairs: frozenset[tuple[int, int]]
    weight: float

    @staticmethod
    def from_pairs(instance: BipartiteInstance,
                   pairs: Iterable[tuple[int, int]]) -> "Matching":
        pairs = frozenset((int(i), int(j)) for i, j in pairs)
        wmap = instance.weight
        missing = [p for p in pairs if p not in wmap]
        if missing:
            raise InstanceError(f"matching uses non-edges: {sorted(missing)}")
        return Matching(pairs, math.fsum(wmap[p] for p in pairs))


@dataclass(frozen=True)
class FlowNetwork:
    """Directed network with integer node budgets, integer edge capacities,
    and real edge costs in [0, 1]."""

    budgets: tuple[int, ...]
    edges: tuple[tuple[int, int, int, float], ...]  # (tail, head, capacity, cost)

    @property
    def n(self) -> int:
        return len(self.budgets)

    @property
    def m(self) -> int:
        return len(self.edges)

    @staticmethod
    def from_parts(budgets: Iterable[int],
                   edges: Iterable[tuple[int, int, int, float]]) -> "FlowNetwork":
        b = tuple(int(x) for x in budgets)
        e = tuple((int(t), int(h), int(u), float(c)) for t, h, u, c in edges)
        return FlowNetwork(b, e)


@dataclass(frozen=True)
class IntegerFlow:
    """Per-edge non-negative integer flow, aligned with ``FlowNetwork.edges``."""

    values: tuple[int, ...]

    def cost(self, network: FlowNetwork) -> float:
        return math.fsum(f * e[3] for f, e in zip(self.values, network.edges))


Instance = Union[BipartiteInstance, FlowNetwork]

# Budgets/capacities are conceptually unbounded integers; we guard at 2^31 so
# accidental garbage cannot silently overflow downstream integer arithmetic.
_INT_BOUND = 2**31


def validate(obj: Instance, flow: IntegerFlow | None = None) -> str | None:
    """Check all type invariants; return None if they hold, else a
    description of the first violation."""
    if isinstance(obj, BipartiteInstance):
        return _validate_bipartite(obj)
    if isinstance(obj, FlowNetwork):
        err = _validate_network(obj)
        if err is None and flow is not None:
            err = _validate_flow(obj, flow)
        return err
    return f"unsupported instance type {type(obj).__name__}"


def require_valid(obj: Instance) -> None:
    err = validate(obj)
    if err is not None:
        raise InstanceError(err)


def _validate_bipartite(inst: BipartiteInstance) -> str | None:
    if inst.n_left < 0 or inst.n_right < 0:
        return "negative side size"
    seen: set[tuple[int, int]] = set()
    for i, j, w in inst.edges:
        if not (0 <= i < inst.n_left and 0 <= j < inst.n_right):
            return f"index out of range: ({i + 1}, {j + 1})"
        if not (0.0 <= w <= 1.0) or math.isnan(w):
            return "weight out of [0,1]"
        if (i, j) in seen:
            return f"duplicate edge ({i + 1}, {j + 1})"
        seen.add((i, j))
    return None


def _validate_network(net: FlowNetwork) -> str | None:
    if any(abs(b) >= _INT_BOUND for b in net.budgets):
        return "budget exceeds 2^31"
    if sum(net.budgets) != 0:
        return "budgets do not sum to 0"
    seen: set[tuple[int, int]] = set()
    for t, h, u, c in net.edges:
        if not (0 <= t < net.n and 0 <= h < net.n):
            return f"index out of range: ({t + 1}, {h + 1})"
        if t == h:
            return f"self-loop at node {t + 1}"
        if u < 0:
            return "negative capacity"
        if u >= _INT_BOUND:
            return "capacity exceeds 2^31"
        if not (0.0 <= c <= 1.0) or math.isnan(c):
            return "cost out of [0,1]"
        if (t, h) in seen:
            return f"duplicate edge ({t + 1}, {h + 1})"
        seen.add((t, h))
    return None


def _validate_flow(net: FlowNetwork, flow: IntegerFlow) -> str | None:
    if len(flow.values) != net.m:
        return "flow length does not match edge count"
    for f, (t, h, u, _) in zip(flow.values, net.edges):
        if not (0 <= f <= u):
            return f"flow outside [0, capacity] on edge ({t + 1}, {h + 1})"
    excess = [0] * net.n
    for f, (t, h, _, _) in zip(flow.values, net.edges):
        excess[t] += f
        excess[h] -= f
    for v, (e, b) in enumerate(zip(excess, net.budgets)):
        if e != b:
            return f"flow violates budget at node {v + 1}"
    return None


def validate_matching(inst: BipartiteInstance, matching: Matching) -> str | None:
    lefts = [i for i, _ in matching.pairs]
    rights = [j for _, j in matching.pairs]
    if len(set(lefts)) != len(lefts) or len(set(rights)) != len(rights):
        return "node appears in two pairs"
    wmap = inst.weight
    if any(p not in wmap for p in matching.pairs):
        return "matching uses a non-edge"
    total = math.fsum(wmap[p] for p in matching.pairs)
    if abs(total - matching.weight) > 1e-9:
        return "stored weight does not equal sum of member edge weights"
    return None


def zero_complete(inst: BipartiteInstance) -> BipartiteInstance:
    """Complete a square instance by adding every missing edge with weight 0.

    Missing edges of a bipartite matching instance can be interpreted as
    edges of weight 0 without changing the weight of any matching that uses
    only original edges.
    """
    if inst.n_left != inst.n_right:
        raise InstanceError(
            f"rectangular instance ({inst.n_left}x{inst.n_right}) cannot be completed")
    if inst.is_complete:
        return inst
    wmap = inst.weight
    edges = tuple(
        (i, j, wmap.get((i, j), 0.0))
        for i in range(inst.n_left)
        for j in range(inst.n_right)
    )
    return BipartiteInstance(inst.n_left, inst.n_right, edges)


# ---------------------------------------------------------------------------
# Text format
#
#   bip <n_left> <n_right>      |   flow <n> <m>
#   i j w                       |   node v b_v          (one per node)
#   ...                         |   i j u c             (one per edge)
#
# Indices are 1-based; lines starting with '#' are comments. Weights and
# costs are serialized with repr(), the shortest decimal that round-trips
# bit-exactly.
# ---------------------------------------------------------------------------

def write_instance(obj: Instance) -> str:
    if isinstance(obj, BipartiteInstance):
        lines = [f"bip {obj.n_left} {obj.n_right}"]
        lines += [f"{i + 1} {j + 1} {w!r}" for i, j, w in obj.edges]
        return "\n".join(lines) + "\n"
    if isinstance(obj, FlowNetwork):
        lines = [f"flow {obj.n} {obj.m}"]
        lines += [f"node {v + 1} {b}" for v, b in enumerate(obj.budgets)]
        lines += [f"{t + 1} {h + 1} {u} {c!r}" for t, h, u, c in obj.edges]
        return "\n".join(lines) + "\n"
    raise InstanceError(f"unsupported instance type {type(obj).__name__}")


def read_instance(text: str) -> Instance:
    header: tuple[str, list[int]] | None = None
    budgets: dict[int, int] = {}
    bip_edges: list[tuple[int, int, float]] = []
    flow_edges: list[tuple[int, int, int, float]] = []

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if header is None:
            if parts[0] not in ("bip", "flow") or len(parts) != 3:
                raise FormatError("expected header 'bip <n_left> <n_right>' "
                                  "or 'flow <n> <m>'", line_no)
            try:
                dims = [int(parts[1]), int(parts[2])]
            except ValueError:
                raise FormatError("non-integer header dimensions", line_no) from None
            header = (parts[0], dims)
            continue

        kind, dims = header
        if kind == "bip":
            if len(parts) != 3:
                raise FormatError("expected 'i j w'", line_no)
            try:
                i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise FormatError("malformed edge line", line_no) from None
            bip_edges.append((i - 1, j - 1, w))
        else:
            if parts[0] == "node":
                if len(parts) != 3:
                    raise FormatError("expected 'node v b_v'", line_no)
                try:
                    budgets[int(parts[1]) - 1] = int(parts[2])
                except ValueError:
                    raise FormatError("malformed node line", line_no) from None
            else:
                if len(parts) != 4:
                    raise FormatError("expected 'i j u c'", line_no)
                try:
                    t, h = int(parts[0]), int(parts[1])
                    u, c = int(parts[2]), float(parts[3])
                except ValueError:
                    raise FormatError("malformed edge line", line_no) from None
                flow_edges.append((t - 1, h - 1, u, c))

    if header is None:
        raise FormatError("empty instance file")
    kind, dims = header
    if kind == "bip":
        obj: Instance = BipartiteInstance(dims[0], dims[1], tuple(bip_edges))
    else:
        n = dims[0]
        if any(not (0 <= v < n) for v in budgets):
            raise FormatError("node index out of range")
        b = tuple(budgets.get(v, 0) for v in range(n))
        obj = FlowNetwork(b, tuple(flow_edges))
        if obj.m != dims[1]:
            raise FormatError(f"header declares {dims[1]} edges, found {obj.m}")
    err = validate(obj)
    if err is not None:
        raise InstanceError(err)
    return obj


def load_instance(path: str) -> Instance:
    with open(path, "r", encoding="utf-8") as fh:
        return read_instance(fh.read())


def save_instance(obj: Instance, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_instance(obj))
