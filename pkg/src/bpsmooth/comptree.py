"""Computation trees and maximum-weight T-matchings.

``build_tree`` unrolls a bipartite instance from a root node into the
level-k computation tree: a rooted tree of height k+1 whose root's children
are the root label's neighbors, and where every deeper node is labeled with
its parent label's neighbors except the grandparent label.

A T-matching is a set of tree edges such that no two share an endpoint,
every node at depth <= k is covered exactly once, and nodes at the final
level (depth k+1) may stay uncovered. Covering is required even for nodes
whose label has no further neighbors; this matches the everyone-gets-matched
semantics of the message recursions the tree mirrors (such a node can only
be covered through its parent edge). ``max_t_matching`` computes optima by a
two-state bottom-up dynamic program and doubles as the independent oracle
for BP beliefs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from bpsmooth.instances import BipartiteInstance
from bpsmooth.generators import FamilyError, SmoothedKnn

LEFT, RIGHT = 0, 1

_TIE_TOL = 1e-12


class TreeSizeError(ValueError):
    """Unrolled tree would exceed the configured node cap."""


@dataclass(frozen=True)
class CompTree:
    """Array-backed rooted tree in BFS order (children of any node are
    contiguous and sorted by label)."""

    k: int
    root_side: int
    root_label: int
    side: np.ndarray          # (N,) 0 = left label, 1 = right label
    label: np.ndarray         # (N,) label index within its side
    parent: np.ndarray        # (N,) parent node id, -1 for the root
    parent_weight: np.ndarray  # (N,) weight of the edge to the parent
    depth: np.ndarray         # (N,)
    child_start: np.ndarray   # (N,) slice into the node array
    child_end: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.side)

    @property
    def height(self) -> int:
        return self.k + 1

    def children(self, v: int) -> range:
        return range(int(self.child_start[v]), int(self.child_end[v]))

    def is_final_level(self, v: int) -> bool:
        return int(self.depth[v]) == self.height

    def edge_labels(self, v: int) -> tuple[int, int]:
        """(left label, right label) of the edge between v and its parent."""
        p = int(self.parent[v])
        if self.side[v] == LEFT:
            return int(self.label[v]), int(self.label[p])
        return int(self.label[p]), int(self.label[v])

    def to_dot(self) -> str:
        out = ["digraph comptree {"]
        for v in range(self.n_nodes):
            name = ("u" if self.side[v] == LEFT else "v") + str(int(self.label[v]) + 1)
            out.append(f'  n{v} [label="{name}"];')
            if self.parent[v] >= 0:
                out.append(f"  n{int(self.parent[v])} -> n{v} "
                           f'[label="{self.parent_weight[v]:.4g}"];')
        out.append("}")
        return "\n".join(out)


def build_tree(instance: BipartiteInstance, root_side: int, root_label: int,
               k: int, node_cap: int = 10_000_000) -> CompTree:
    """Unroll ``instance`` from the given root to level k."""
    if k < 0:
        raise ValueError("k must be >= 0")
    n_side = instance.n_left if root_side == LEFT else instance.n_right
    if not (0 <= root_label < n_side):
        raise ValueError("root out of range")
    adj = (instance.left_adj, instance.right_adj)
    wmap = instance.weight

    side = [root_side]
    label = [root_label]
    parent = [-1]
    parent_w = [0.0]
    depth = [0]
    child_start = [0]
    child_end = [0]

    frontier = [0]
    for level in range(1, k + 2):
        next_frontier: list[int] = []
        for v in frontier:
            s, lab = side[v], label[v]
            block = adj[s][lab]
            if parent[v] >= 0:
                avoid = label[parent[v]]
                block = tuple(x for x in block if x != avoid)
            child_start[v] = len(side)
            for nb in block:
                w = wmap[(lab, nb)] if s == LEFT else wmap[(nb, lab)]
                side.append(1 - s)
                label.append(nb)
                parent.append(v)
                parent_w.append(w)
                depth.append(level)
                child_start.append(0)
                child_end.append(0)
                next_frontier.append(len(side) - 1)
            child_end[v] = len(side)
            if len(side) > node_cap:
                raise TreeSizeError(
                    f"computation tree exceeds {node_cap} nodes at level {level}")
        frontier = next_frontier

    return CompTree(
        k=k, root_side=root_side, root_label=root_label,
        side=np.array(side, dtype=np.int8),
        label=np.array(label, dtype=np.int32),
        parent=np.array(parent, dtype=np.int64),
        parent_weight=np.array(parent_w, dtype=np.float64),
        depth=np.array(depth, dtype=np.int32),
        child_start=np.array(child_start, dtype=np.int64),
        child_end=np.array(child_end, dtype=np.int64),
    )


@dataclass(frozen=True)
class TMatching:
    """A T-matching given as the set of matched-to-parent node ids."""

    edges: frozenset[int]
    weight: float
    tie_detected: bool


def _dp_tables(tree: CompTree) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    """Bottom-up tables.

    unmatched[v]: best subtree weight with v not matched to its parent
                  (v must then be matched to a child unless v is final-level).
    matched[v]:   best subtree weight with v matched to its parent (the
                  parent edge's weight is accounted at the parent).
    pick[v]:      the child v matches under unmatched[v], -1 if none.

    A child with unmatched = -inf *must* be matched to v (its subtree cannot
    cover it otherwise), so at most one such child is tolerable and it fixes
    the choice; the -inf cases are branched explicitly rather than pushed
    through arithmetic.
    """
    n = tree.n_nodes
    unmatched = np.zeros(n)
    matched = np.zeros(n)
    pick = np.full(n, -1, dtype=np.int64)
    tie = False

    for v in range(n - 1, -1, -1):
        kids = tree.children(v)
        if not kids:
            unmatched[v] = 0.0 if tree.is_final_level(v) else -np.inf
            continue
        forced = [c for c in kids if not np.isfinite(unmatched[c])]
        base = math.fsum(unmatched[c] for c in kids if np.isfinite(unmatched[c]))
        matched[v] = -np.inf if forced else base
        if len(forced) > 1:
            unmatched[v] = -np.inf
        elif len(forced) == 1:
            c = forced[0]
            unmatched[v] = base + tree.parent_weight[c] + matched[c]
            pick[v] = c
        else:
            gain = (tree.parent_weight[kids.start:kids.stop]
                    + matched[kids.start:kids.stop]
                    - unmatched[kids.start:kids.stop])
            best = int(np.argmax(gain))
            if len(gain) > 1:
                second = np.partition(gain, -2)[-2]
                if (np.isfinite(gain[best]) and np.isfinite(second)
                        and gain[best] - second <= _TIE_TOL):
                    tie = True
            unmatched[v] = base + gain[best]
            pick[v] = kids.start + best

    return unmatched, matched, pick, tie


def _extract(tree: CompTree, unmatched: np.ndarray, pick: np.ndarray,
             root_choice: int) -> frozenset[int]:
    """Recover the edge set: (node, state) with state True when the node is
    matched to its parent."""
    edges: set[int] = set()
    stack: list[tuple[int, bool]] = [(0, False)]
    forced_root = root_choice >= 0
    while stack:
        v, is_matched = stack.pop()
        kids = tree.children(v)
        if is_matched:
            edges.add(v)
            for c in kids:
                stack.append((c, False))
            continue
        if not kids:
            continue
        if v == 0 and forced_root:
            chosen = root_choice
        elif np.isfinite(unmatched[v]):
            chosen = int(pick[v])
        else:  # infeasible branch, nothing to extract
            continue
        for c in kids:
            stack.append((c, c == chosen))
    return frozenset(edges)


def _forced_root_values(tree: CompTree, unmatched: np.ndarray,
                        matched: np.ndarray) -> dict[int, float]:
    """Best weight when the root edge to each child is forced, keyed by the
    child node id; -inf where the constraint is infeasible."""
    ks = range(int(tree.child_start[0]), int(tree.child_end[0]))
    infeasible = [c for c in ks if not np.isfinite(unmatched[c])]
    base = math.fsum(unmatched[c] for c in ks if np.isfinite(unmatched[c]))
    vals: dict[int, float] = {}
    for c in ks:
        blockers = len(infeasible) - (0 if np.isfinite(unmatched[c]) else 1)
        if blockers > 0 or not np.isfinite(matched[c]):
            vals[c] = -np.inf
        else:
            drop = unmatched[c] if np.isfinite(unmatched[c]) else 0.0
            vals[c] = base - drop + float(tree.parent_weight[c] + matched[c])
    return vals


def max_t_matching(tree: CompTree,
                   forced_root_child: int | None = None) -> TMatching:
    """Maximum-weight T-matching, optionally forced to use the root edge to
    the given child node id. An infeasible constraint yields weight -inf and
    an empty edge set."""
    if forced_root_child is not None:
        if tree.parent[forced_root_child] != 0:
            raise ValueError("forced edge must be incident to the root")
    unmatched, matched, pick, tie = _dp_tables(tree)

    if forced_root_child is None:
        weight = float(unmatched[0])
        choice = int(pick[0])
    else:
        choice = forced_root_child
        weight = _forced_root_values(tree, unmatched, matched)[choice]
    if not np.isfinite(weight):
        return TMatching(frozenset(), -np.inf, tie)
    return TMatching(_extract(tree, unmatched, pick, choice), weight, tie)


def root_edge_values(tree: CompTree) -> dict[int, float]:
    """Weight of the best T-matching forced through each root edge, keyed by
    the child's label. One DP pass serves every choice of root edge."""
    unmatched, matched, _, _ = _dp_tables(tree)
    vals = _forced_root_values(tree, unmatched, matched)
    return {int(tree.label[c]): v for c, v in vals.items()}


def _level_slices(tree: CompTree) -> np.ndarray:
    """Start offsets of each depth level (BFS order keeps levels contiguous)."""
    return np.searchsorted(tree.depth, np.arange(tree.height + 2))


def root_edge_values_multi(instance: BipartiteInstance, root_side: int,
                           root_label: int, ks: "list[int]",
                           node_cap: int = 10_000_000
                           ) -> dict[int, dict[int, float]]:
    """``root_edge_values`` for several depths at once.

    The deepest tree is built once; for each requested k the DP reruns on
    the prefix with depth-(k+1) nodes treated as the optional final level.
    Levels are processed with segment reductions, so this path carries the
    per-node cost only once and is the workhorse for belief/tree
    equivalence sweeps. Returns {k: {child label: value}}.
    """
    ks = sorted(set(ks))
    tree = build_tree(instance, root_side, root_label, ks[-1], node_cap)
    lo = _level_slices(tree)
    neg = -np.inf
    out: dict[int, dict[int, float]] = {}

    for k in ks:
        depth_final = k + 1
        um = np.zeros(lo[depth_final + 1] - lo[depth_final])
        mt = np.zeros_like(um)
        for level in range(depth_final - 1, 0, -1):
            a, b = lo[level], lo[level + 1]
            if b == a:
                um = np.zeros(0)
                mt = np.zeros(0)
                continue
            ca, cb = lo[level + 1], lo[level + 2]
            pw = tree.parent_weight[ca:cb]
            starts = (tree.child_start[a:b] - ca).astype(np.int64)
            lens = (tree.child_end[a:b] - tree.child_start[a:b]).astype(np.int64)
            has = lens > 0
            inf_child = ~np.isfinite(um)
            um_fin = np.where(inf_child, 0.0, um)

            # reduceat over sentinel-extended arrays: empty segments (start at
            # or beyond the last real element) read only neutral values and
            # are masked out afterwards via ``has``
            def seg_sum(values: np.ndarray) -> np.ndarray:
                return np.add.reduceat(np.append(values, 0.0), starts)

            def seg_max(values: np.ndarray) -> np.ndarray:
                return np.maximum.reduceat(np.append(values, neg), starts)

            base = np.where(has, seg_sum(um_fin), 0.0)
            n_inf = np.where(has, seg_sum(inf_child.astype(float)), 0.0)
            best_fin = np.where(has, seg_max(np.where(inf_child, neg,
                                                      pw + mt - um_fin)), neg)
            best_inf = np.where(has, seg_max(np.where(inf_child, pw + mt,
                                                      neg)), neg)

            new_mt = np.where(has & (n_inf == 0), base, np.where(has, neg, 0.0))
            new_um = np.where(
                n_inf == 0, base + best_fin,
                np.where(n_inf == 1, base + best_inf, neg))
            new_um = np.where(has, new_um, neg)  # childless internal: must cover, cannot
            um, mt = new_um, new_mt

        # root level: forced value per child
        ca, cb = lo[1], lo[2]
        pw = tree.parent_weight[ca:cb]
        inf_child = ~np.isfinite(um)
        um_fin = np.where(inf_child, 0.0, um)
        base = um_fin.sum()
        total_inf = int(inf_child.sum())
        vals: dict[int, float] = {}
        for idx in range(cb - ca):
            blockers = total_inf - (1 if inf_child[idx] else 0)
            if blockers > 0 or not np.isfinite(mt[idx]):
                vals[int(tree.label[ca + idx])] = neg
            else:
                vals[int(tree.label[ca + idx])] = float(
                    base - um_fin[idx] + pw[idx] + mt[idx])
        out[k] = vals
    return out


def light_edge_audit(tree: CompTree, tmatching: TMatching,
                     family: SmoothedKnn) -> bool:
    """True iff the T-matching contains no edge between different blocks of
    the smoothed family."""
    if not isinstance(family, SmoothedKnn):
        raise FamilyError("light/heavy classification needs a SmoothedKnn family")
    for v in tmatching.edges:
        i, j = tree.edge_labels(v)
        if family.is_light(i, j):
            return False
    return True


def enumerate_t_matchings(tree: CompTree) -> list[tuple[frozenset[int], float]]:
    """All T-matchings by brute force over edge subsets (testing oracle;
    trees with more than ~20 edges are refused)."""
    n_edges = tree.n_nodes - 1
    if n_edges > 20:
        raise TreeSizeError("brute force limited to 20 edges")
    nodes = tree.n_nodes
    out: list[tuple[frozenset[int], float]] = []
    for mask in range(1 << n_edges):
        cover = [0] * nodes
        weight = 0.0
        ok = True
        for e in range(n_edges):
            if mask >> e & 1:
                child = e + 1
                cover[child] += 1
                cover[int(tree.parent[child])] += 1
                weight += float(tree.parent_weight[child])
        for v in range(nodes):
            if cover[v] > 1 or (cover[v] == 0 and not tree.is_final_level(v)):
                ok = False
                break
        if ok:
            out.append((frozenset(e + 1 for e in range(n_edges) if mask >> e & 1),
                        weight))
    return out


def k22_root_gap(w11: float, w12: float, w21: float, w22: float,
                 k: int) -> float:
    """Closed-form weight difference, on the level-4k tree rooted at the
    first left node of a complete 2x2 instance, between the best T-matching
    through the (u1, v1) root edge and the best through (u1, v2). The tree
    is a path, so both sides have a unique alternating T-matching."""
    return (2 * k + 1) * (w11 - w12) + 2 * k * (w22 - w21)
