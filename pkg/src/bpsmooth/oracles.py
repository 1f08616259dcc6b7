"""Ground-truth solvers: optimal/second-best matchings and the gap between
them, the minimum descent rate away from the optimum, exact min-cost flow,
residual networks, and the cheapest genuine residual cycle.

Everything here is desk-scale and correctness-first. Enumeration routines
walk the solution set directly (number of matchings / feasible flows, not
2^m subsets) and act as independent cross-checks for the polynomial solvers.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from bpsmooth.instances import (
    BipartiteInstance,
    FlowNetwork,
    IntegerFlow,
    InstanceError,
    Matching,
)

GAP_TOL = 1e-12


class EnumerationCapError(ValueError):
    """Solution set too large for exhaustive enumeration."""


class FlowInfeasibleError(InstanceError):
    """The network admits no flow meeting all budgets."""


@dataclass(frozen=True)
class GapReport:
    """Best and second-best solution of an instance and their gap.

    ``second_best`` is the best solution differing from ``best`` (as a set /
    vector); ``delta`` is the weight or cost difference, None when the
    instance has a unique feasible solution. ``unique_flag`` records whether
    the optimum is isolated (delta > 0 beyond float tolerance).
    """

    best: object
    second_best: object | None
    delta: float | None
    unique_flag: bool


# ---------------------------------------------------------------------------
# Matchings
# ---------------------------------------------------------------------------

def enumerate_matchings(instance: BipartiteInstance,
                        max_count: int = 2_000_000
                        ) -> list[tuple[frozenset[tuple[int, int]], float]]:
    """Every matching (including the empty one) with its weight, sorted by
    weight descending."""
    adj = instance.left_adj
    wmap = instance.weight
    out: list[tuple[frozenset[tuple[int, int]], float]] = []
    used_right: set[int] = set()
    chosen: list[tuple[int, int]] = []

    def rec(i: int, weight: float) -> None:
        if len(out) > max_count:
            raise EnumerationCapError(
                f"more than {max_count} matchings")
        if i == instance.n_left:
            out.append((frozenset(chosen), weight))
            return
        rec(i + 1, weight)  # leave i unmatched
        for j in adj[i]:
            if j not in used_right:
                used_right.add(j)
                chosen.append((i, j))
                rec(i + 1, weight + wmap[(i, j)])
                chosen.pop()
                used_right.remove(j)

    rec(0, 0.0)
    out.sort(key=lambda t: -t[1])
    return out


@lru_cache(maxsize=32)
def _patterns(n_left: int, n_right: int
              ) -> tuple[np.ndarray, tuple[frozenset[tuple[int, int]], ...]]:
    """0/1 incidence rows of all matchings of the complete n_left x n_right
    graph, columns in row-major edge order."""
    inst = BipartiteInstance.from_edges(
        n_left, n_right,
        ((i, j, 0.0) for i in range(n_left) for j in range(n_right)))
    all_matchings = enumerate_matchings(inst)
    mat = np.zeros((len(all_matchings), n_left * n_right))
    sets = []
    for row, (pairs, _) in enumerate(all_matchings):
        sets.append(pairs)
        for i, j in pairs:
            mat[row, i * n_right + j] = 1.0
    return mat, tuple(sets)


def matching_values_batch(n_left: int, n_right: int,
                          weights: np.ndarray) -> np.ndarray:
    """Weights of every matching for a batch of complete instances: rows of
    ``weights`` are row-major weight vectors; returns (B, n_matchings)."""
    mat, _ = _patterns(n_left, n_right)
    return weights @ mat.T


def matching_sets(n_left: int, n_right: int) -> tuple[frozenset, ...]:
    return _patterns(n_left, n_right)[1]


def mwm(instance: BipartiteInstance) -> Matching:
    """Maximum-weight matching (not necessarily perfect).

    Solved as an assignment problem on the zero-completed weight matrix;
    with non-negative weights the optimal assignment restricted to real
    edges is a maximum-weight matching.
    """
    if instance.n_left == 0 or instance.n_right == 0 or instance.m == 0:
        return Matching(frozenset(), 0.0)
    w = np.zeros((instance.n_left, instance.n_right))
    for i, j, wt in instance.edges:
        w[i, j] = wt
    rows, cols = linear_sum_assignment(w, maximize=True)
    wmap = instance.weight
    pairs = frozenset((int(i), int(j)) for i, j in zip(rows, cols)
                      if (int(i), int(j)) in wmap)
    return Matching(pairs, math.fsum(wmap[p] for p in pairs))


def matching_gap(instance: BipartiteInstance,
                 perfect_only: bool = False) -> GapReport:
    """Gap between the best and second-best matching.

    With ``perfect_only`` the solution set is restricted to perfect
    matchings and the runner-up is found by excluding each optimal edge in
    turn; otherwise all matchings are enumerated.
    """
    if perfect_only:
        return _perfect_matching_gap(instance)
    listed = enumerate_matchings(instance)
    best_set, best_w = listed[0]
    if len(listed) == 1:
        return GapReport(Matching(best_set, best_w), None, None, False)
    second_set, second_w = listed[1]
    delta = best_w - second_w
    return GapReport(Matching(best_set, best_w),
                     Matching(second_set, second_w),
                     delta, delta > GAP_TOL)


def _perfect_matching_gap(instance: BipartiteInstance) -> GapReport:
    if instance.n_left != instance.n_right:
        raise InstanceError("perfect matchings need a square instance")
    n = instance.n_left
    w = np.full((n, n), -np.inf)
    for i, j, wt in instance.edges:
        w[i, j] = wt

    def solve(matrix: np.ndarray) -> tuple[frozenset, float] | None:
        try:
            rows, cols = linear_sum_assignment(matrix, maximize=True)
        except ValueError:  # infeasible cost matrix
            return None
        total = matrix[rows, cols].sum()
        if not np.isfinite(total):
            return None
        return frozenset((int(i), int(j)) for i, j in zip(rows, cols)), float(total)

    best = solve(w)
    if best is None:
        raise InstanceError("instance has no perfect matching")
    best_set, best_w = best
    runner: tuple[frozenset, float] | None = None
    for i, j in best_set:
        excl = w.copy()
        excl[i, j] = -np.inf
        cand = solve(excl)
        if cand is not None and (runner is None or cand[1] > runner[1]):
            runner = cand
    if runner is None:
        return GapReport(Matching(best_set, best_w), None, None, False)
    delta = best_w - runner[1]
    return GapReport(Matching(best_set, best_w),
                     Matching(runner[0], runner[1]), delta, delta > GAP_TOL)


def min_descent_rate(instance: BipartiteInstance) -> float:
    """Smallest rate at which the objective drops per unit of L1 movement
    from the optimal matching's incidence vector to any other matching's:

        min over M != M* of (w(M*) - w(M)) / |M* symdiff M|

    The vertices of the bipartite matching polytope are exactly the
    matchings, so the minimum runs over the enumeration.
    """
    listed = enumerate_matchings(instance)
    if len(listed) < 2:
        raise InstanceError("need at least two matchings")
    best_set, best_w = listed[0]
    rate = math.inf
    for pairs, w in listed[1:]:
        moved = len(best_set ^ pairs)
        rate = min(rate, (best_w - w) / moved)
    return rate


# ---------------------------------------------------------------------------
# Min-cost flow
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResidualArc:
    tail: int
    head: int
    capacity: int
    cost: float
    edge: int        # index into the original edge list
    forward: bool    # False for the reversed copy


@dataclass(frozen=True)
class ResidualNetwork:
    n: int
    arcs: tuple[ResidualArc, ...]


def residual(network: FlowNetwork, flow: IntegerFlow) -> ResidualNetwork:
    """Residual arcs: a forward copy wherever flow is below capacity, and a
    reversed copy with negated cost wherever flow is positive."""
    from bpsmooth.instances import validate
    err = validate(network, flow)
    if err is not None:
        raise InstanceError(err)
    arcs: list[ResidualArc] = []
    for e, ((t, h, u, c), f) in enumerate(zip(network.edges, flow.values)):
        if f < u:
            arcs.append(ResidualArc(t, h, u - f, c, e, True))
        if f > 0:
            arcs.append(ResidualArc(h, t, f, -c, e, False))
    return ResidualNetwork(network.n, tuple(arcs))


def min_cost_flow(network: FlowNetwork) -> IntegerFlow:
    """Exact min-cost flow by successive shortest augmenting paths.

    Budgets are routed from a super-source to a super-sink; with
    non-negative costs every augmentation follows a cheapest residual path
    (label-correcting search, tolerant of tiny negative reduced costs), so
    the final flow is optimal and integral.
    """
    from bpsmooth.instances import validate
    err = validate(network)
    if err is not None:
        raise InstanceError(err)

    n = network.n
    src, dst = n, n + 1
    # arcs as parallel lists: to, cap, cost, paired reverse index
    to: list[int] = []
    cap: list[int] = []
    cost: list[float] = []
    head_of: list[list[int]] = [[] for _ in range(n + 2)]

    def add(a: int, b: int, u: int, c: float) -> None:
        head_of[a].append(len(to))
        to.append(b)
        cap.append(u)
        cost.append(c)
        head_of[b].append(len(to))
        to.append(a)
        cap.append(0)
        cost.append(-c)

    edge_arc: list[int] = []
    for (t, h, u, c) in network.edges:
        edge_arc.append(len(to))
        add(t, h, u, c)
    supply = 0
    for v, b in enumerate(network.budgets):
        if b > 0:
            add(src, v, b, 0.0)
            supply += b
        elif b < 0:
            add(v, dst, -b, 0.0)

    pushed = 0
    while pushed < supply:
        dist = [math.inf] * (n + 2)
        pred = [-1] * (n + 2)
        dist[src] = 0.0
        in_queue = [False] * (n + 2)
        queue = [src]
        in_queue[src] = True
        rounds = 0
        while queue:
            rounds += 1
            if rounds > 4 * (n + 2) * (len(to) + 1):
                raise InstanceError("negative cycle in augmentation graph")
            nxt: list[int] = []
            for v in queue:
                in_queue[v] = False
                dv = dist[v]
                for a in head_of[v]:
                    if cap[a] > 0 and dv + cost[a] < dist[to[a]] - GAP_TOL:
                        dist[to[a]] = dv + cost[a]
                        pred[to[a]] = a
                        if not in_queue[to[a]]:
                            nxt.append(to[a])
                            in_queue[to[a]] = True
            queue = nxt
        if not math.isfinite(dist[dst]):
            raise FlowInfeasibleError("budgets cannot be met")
        bottleneck = supply - pushed
        v = dst
        while v != src:
            a = pred[v]
            bottleneck = min(bottleneck, cap[a])
            v = to[a ^ 1]
        v = dst
        while v != src:
            a = pred[v]
            cap[a] -= bottleneck
            cap[a ^ 1] += bottleneck
            v = to[a ^ 1]
        pushed += bottleneck

    values = tuple(cap[edge_arc[e] ^ 1] for e in range(network.m))
    return IntegerFlow(values)


def cheapest_residual_cycle(network: FlowNetwork,
                            flow: IntegerFlow) -> Optional[float]:
    """Cheapest genuine directed cycle in the residual network of ``flow``.

    A cycle is genuine when it never uses both residual copies of the same
    original edge (such a pair cancels and does not change the flow), so
    traversing the returned cycle with one unit yields a feasible integer
    flow differing from the input. For each residual arc we close the cycle
    with a cheapest path back that avoids the arc's sibling; with an optimal
    input flow the residual has no negative genuine cycle and shortest walks
    are realized by simple paths, so label-correcting search is exact.

    Returns None when the residual has no genuine cycle; raises if a
    negative cycle shows the input flow is not optimal.
    """
    res = residual(network, flow)
    n = res.n
    out_arcs: list[list[int]] = [[] for _ in range(n)]
    for idx, a in enumerate(res.arcs):
        out_arcs[a.tail].append(idx)

    def shortest(src: int, dst: int, banned_edge: int) -> float:
        dist = [math.inf] * n
        dist[src] = 0.0
        for _ in range(n):  # paths have at most n-1 arcs
            changed = False
            for idx, a in enumerate(res.arcs):
                if a.edge == banned_edge:
                    continue
                if dist[a.tail] + a.cost < dist[a.head] - GAP_TOL:
                    dist[a.head] = dist[a.tail] + a.cost
                    changed = True
            if not changed:
                break
        return dist[dst]

    best = math.inf
    for idx, a in enumerate(res.arcs):
        back = shortest(a.head, a.tail, a.edge)
        if math.isfinite(back):
            best = min(best, a.cost + back)
    if not math.isfinite(best):
        return None
    if best < -GAP_TOL:
        raise InstanceError("flow not optimal: negative residual cycle")
    return best


def flow_gap_enumeration(network: FlowNetwork,
                         max_vectors: int = 1_000_000) -> GapReport:
    """Best and second-best feasible integer flow by exhausting all vectors
    with 0 <= f_e <= u_e (the product of (u_e + 1) must stay small)."""
    total = 1
    for _, _, u, _ in network.edges:
        total *= u + 1
        if total > max_vectors:
            raise EnumerationCapError(
                f"more than {max_vectors} candidate vectors")

    ranges = [range(u + 1) for _, _, u, _ in network.edges]
    costs = np.array([c for _, _, _, c in network.edges])
    best: tuple[float, tuple[int, ...]] | None = None
    second: tuple[float, tuple[int, ...]] | None = None
    for values in itertools.product(*ranges):
        excess = [0] * network.n
        for f, (t, h, _, _) in zip(values, network.edges):
            excess[t] += f
            excess[h] -= f
        if any(e != b for e, b in zip(excess, network.budgets)):
            continue
        c = float(np.dot(costs, values))
        if best is None or c < best[0]:
            best, second = (c, values), best
        elif second is None or c < second[0]:
            second = (c, values)
    if best is None:
        raise FlowInfeasibleError("no feasible integer flow")
    if second is None:
        return GapReport(IntegerFlow(best[1]), None, None, False)
    delta = second[0] - best[0]
    return GapReport(IntegerFlow(best[1]), IntegerFlow(second[1]),
                     delta, delta > GAP_TOL)
