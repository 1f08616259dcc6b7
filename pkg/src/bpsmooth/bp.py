"""Max-product belief propagation for bipartite maximum-weight matching.

Messages live on edges, one vector per direction. The vector a left node i
sends across edge (i, j) has a distinguished entry at index i and one common
value everywhere else (the update's max does not depend on the receiving
index), so a message is stored as the pair (special, generic). Two engines
share these recursions:

* the reference engine (``init_messages`` / ``step`` / ``beliefs`` / ``run``)
  keeps full vectors, supports arbitrary sparse instances including degree-1
  and isolated nodes, and is the one exposed for traces and tests;

* the batched engine (``run_batch``) runs many same-topology instances in
  lockstep with numpy, for the Monte Carlo harness. It requires a regular
  topology with all degrees >= 2 and is cross-checked against the reference
  engine in the test suite.

Convergence is measured operationally: the decoded assignment must be the
same valid matching for a window of consecutive iterations (and equal a
caller-supplied optimal matching when one is given). The iteration count
``tau`` is the first index of such a window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Iterable, Optional

import numpy as np

from bpsmooth.instances import BipartiteInstance, Matching

TIE_TOL = 1e-12


# ---------------------------------------------------------------------------
# Reference engine
# ---------------------------------------------------------------------------

@dataclass
class MessageState:
    """Messages after iteration ``t``.

    ``fwd[(i, j)]`` is the left-to-right vector, indexed by left labels;
    ``bwd[(i, j)]`` is the right-to-left vector, indexed by right labels.
    In raw mode entries follow the recursions exactly; in normalized mode
    each vector has its maximum entry subtracted after every step.
    """

    t: int
    normalized: bool
    fwd: dict[tuple[int, int], np.ndarray]
    bwd: dict[tuple[int, int], np.ndarray]


@dataclass
class BeliefSet:
    """Per-node belief vectors; absent edges carry -inf."""

    left: np.ndarray   # (n_left, n_right)
    right: np.ndarray  # (n_right, n_left)


@dataclass(frozen=True)
class Assignment:
    choice: tuple[Optional[int], ...]  # per left node; None when isolated
    is_matching: bool
    tie_detected: bool


@dataclass(frozen=True)
class RunResult:
    tau: Optional[int]
    converged: bool
    censored: bool
    final_assignment: tuple[Optional[int], ...]
    is_matching: bool
    matched_oracle: Optional[bool]
    tie_detected: bool


def init_messages(instance: BipartiteInstance, normalized: bool = False) -> MessageState:
    """Iteration-0 messages: weight at the sender's own index, 0 elsewhere."""
    fwd: dict[tuple[int, int], np.ndarray] = {}
    bwd: dict[tuple[int, int], np.ndarray] = {}
    for i, j, w in instance.edges:
        fv = np.zeros(instance.n_left)
        fv[i] = w
        bv = np.zeros(instance.n_right)
        bv[j] = w
        fwd[(i, j)] = fv
        bwd[(i, j)] = bv
    state = MessageState(0, normalized, fwd, bwd)
    if normalized:
        _normalize(state)
    return state


def _normalize(state: MessageState) -> None:
    for vec in state.fwd.values():
        vec -= vec.max()
    for vec in state.bwd.values():
        vec -= vec.max()


def step(state: MessageState, instance: BipartiteInstance) -> MessageState:
    """One synchronous update of both message directions."""
    wmap = instance.weight
    ladj, radj = instance.left_adj, instance.right_adj
    new_fwd: dict[tuple[int, int], np.ndarray] = {}
    new_bwd: dict[tuple[int, int], np.ndarray] = {}

    for i, j, w in instance.edges:
        # left node i -> right node j; sums run over i's other neighbors
        others = [k for k in ladj[i] if k != j]
        incoming = [state.bwd[(i, k)] for k in others]
        ssum = math.fsum(vec[j] for vec in incoming)
        generic = -np.inf
        for q in others:
            generic = max(generic,
                          wmap[(i, q)] + math.fsum(vec[q] for vec in incoming))
        vec = np.full(instance.n_left, generic)
        vec[i] = w + ssum
        new_fwd[(i, j)] = vec

        # right node j -> left node i
        others = [k for k in radj[j] if k != i]
        incoming = [state.fwd[(k, j)] for k in others]
        ssum = math.fsum(vec[i] for vec in incoming)
        generic = -np.inf
        for q in others:
            generic = max(generic,
                          wmap[(q, j)] + math.fsum(vec[q] for vec in incoming))
        vec = np.full(instance.n_right, generic)
        vec[j] = w + ssum
        new_bwd[(i, j)] = vec

    out = MessageState(state.t + 1, state.normalized, new_fwd, new_bwd)
    if state.normalized:
        _normalize(out)
    return out


def beliefs(state: MessageState, instance: BipartiteInstance) -> BeliefSet:
    left = np.full((instance.n_left, instance.n_right), -np.inf)
    right = np.full((instance.n_right, instance.n_left), -np.inf)
    wmap = instance.weight
    for i in range(instance.n_left):
        nbrs = instance.left_adj[i]
        for r in nbrs:
            left[i, r] = wmap[(i, r)] + math.fsum(
                state.bwd[(i, k)][r] for k in nbrs)
    for j in range(instance.n_right):
        nbrs = instance.right_adj[j]
        for r in nbrs:
            right[j, r] = wmap[(r, j)] + math.fsum(
                state.fwd[(k, j)][r] for k in nbrs)
    return BeliefSet(left, right)


def estimate_matching(bel: BeliefSet) -> Assignment:
    """Decode per-left-node argmax beliefs (smallest index wins ties)."""
    choice: list[Optional[int]] = []
    tie = False
    for row in bel.left:
        if not np.isfinite(row).any():
            choice.append(None)
            continue
        best = int(np.argmax(row))
        choice.append(best)
        finite = row[np.isfinite(row)]
        if len(finite) > 1:
            top2 = np.partition(finite, -2)[-2]
            if row[best] - top2 <= TIE_TOL:
                tie = True
    taken = [c for c in choice if c is not None]
    return Assignment(tuple(choice), len(set(taken)) == len(taken), tie)


def oracle_assignment(instance: BipartiteInstance,
                      matching: Matching) -> tuple[Optional[int], ...]:
    out: list[Optional[int]] = [None] * instance.n_left
    for i, j in matching.pairs:
        out[i] = j
    return tuple(out)


def _write_trace(fh: IO[str], t: int, bel: BeliefSet) -> None:
    for i, row in enumerate(bel.left):
        fh.write(f"{t},u{i + 1}," + ",".join(repr(x) for x in row) + "\n")
    for j, row in enumerate(bel.right):
        fh.write(f"{t},v{j + 1}," + ",".join(repr(x) for x in row) + "\n")


def run(instance: BipartiteInstance, t_max: int, window: int = 4,
        oracle_matching: Matching | None = None, mode: str = "normalized",
        trace: IO[str] | None = None) -> RunResult:
    """Iterate BP until the decoded assignment is stable (see module doc).

    Censoring (no stable window by ``t_max``) is a result state, not an
    error. ``mode`` selects raw or per-vector-max normalized messages; both
    decode identically, normalization merely keeps magnitudes bounded.
    """
    if t_max < 1 or window < 1:
        raise ValueError("t_max and window must be >= 1")
    if mode not in ("raw", "normalized"):
        raise ValueError(f"unknown mode {mode!r}")

    oracle = (oracle_assignment(instance, oracle_matching)
              if oracle_matching is not None else None)
    state = init_messages(instance, normalized=(mode == "normalized"))
    streak = 0
    prev: tuple[Optional[int], ...] | None = None
    tie_seen = False
    assign = Assignment((), False, False)

    for t in range(t_max + 1):
        if t > 0:
            state = step(state, instance)
        bel = beliefs(state, instance)
        if trace is not None:
            _write_trace(trace, t, bel)
        assign = estimate_matching(bel)
        tie_seen = tie_seen or assign.tie_detected

        ok = (assign.choice == oracle) if oracle is not None else assign.is_matching
        if ok:
            streak = streak + 1 if (streak > 0 and assign.choice == prev) else 1
        else:
            streak = 0
        prev = assign.choice

        if streak >= window:
            return RunResult(
                tau=t - window + 1, converged=True, censored=False,
                final_assignment=assign.choice, is_matching=assign.is_matching,
                matched_oracle=(True if oracle is not None else None),
                tie_detected=tie_seen)

    return RunResult(
        tau=None, converged=False, censored=True,
        final_assignment=assign.choice, is_matching=assign.is_matching,
        matched_oracle=(assign.choice == oracle if oracle is not None else None),
        tie_detected=tie_seen)


# ---------------------------------------------------------------------------
# Batched engine
# ---------------------------------------------------------------------------

class TopologyError(ValueError):
    """Instance shape unsupported by the batched engine."""


@dataclass(frozen=True)
class Topology:
    """Regular bipartite topology shared by a batch of instances.

    Left-layout arrays are indexed (left node, slot); slot s of node i
    addresses the edge to ``left_nb[i, s]``. ``r_from_l`` and ``l_from_r``
    translate flat positions between the two layouts, ``wcol_*`` map an
    edge-order weight row into each layout.
    """

    n_left: int
    n_right: int
    d_left: int
    d_right: int
    left_nb: np.ndarray   # (n_left, d_left) right ids
    right_nb: np.ndarray  # (n_right, d_right) left ids
    r_from_l: np.ndarray  # flat left position -> flat right position
    l_from_r: np.ndarray
    wcol_left: np.ndarray   # flat left position -> edge-order column
    wcol_right: np.ndarray

    @staticmethod
    def from_edge_order(n_left: int, n_right: int,
                        order: Iterable[tuple[int, int]]) -> "Topology":
        order = tuple(order)
        ladj: list[list[int]] = [[] for _ in range(n_left)]
        radj: list[list[int]] = [[] for _ in range(n_right)]
        col: dict[tuple[int, int], int] = {}
        for c, (i, j) in enumerate(order):
            ladj[i].append(j)
            radj[j].append(i)
            col[(i, j)] = c
        degs_l = {len(a) for a in ladj}
        degs_r = {len(a) for a in radj}
        if len(degs_l) != 1 or len(degs_r) != 1:
            raise TopologyError("batched engine needs a degree-regular topology")
        d_left, d_right = degs_l.pop(), degs_r.pop()
        if d_left < 2 or d_right < 2:
            raise TopologyError("batched engine needs all degrees >= 2")

        left_nb = np.array([sorted(a) for a in ladj], dtype=np.int64)
        right_nb = np.array([sorted(a) for a in radj], dtype=np.int64)
        lslot = {(i, int(j)): s for i in range(n_left)
                 for s, j in enumerate(left_nb[i])}
        rslot = {(int(i), j): s for j in range(n_right)
                 for s, i in enumerate(right_nb[j])}

        r_from_l = np.empty(n_left * d_left, dtype=np.int64)
        wcol_left = np.empty(n_left * d_left, dtype=np.int64)
        for i in range(n_left):
            for s, j in enumerate(left_nb[i]):
                r_from_l[i * d_left + s] = int(j) * d_right + rslot[(i, int(j))]
                wcol_left[i * d_left + s] = col[(i, int(j))]
        l_from_r = np.empty(n_right * d_right, dtype=np.int64)
        wcol_right = np.empty(n_right * d_right, dtype=np.int64)
        for j in range(n_right):
            for s, i in enumerate(right_nb[j]):
                l_from_r[j * d_right + s] = int(i) * d_left + lslot[(int(i), j)]
                wcol_right[j * d_right + s] = col[(int(i), j)]

        return Topology(n_left, n_right, d_left, d_right, left_nb, right_nb,
                        r_from_l, l_from_r, wcol_left, wcol_right)

    @staticmethod
    def from_instance(instance: BipartiteInstance) -> "Topology":
        return Topology.from_edge_order(
            instance.n_left, instance.n_right,
            [(i, j) for i, j, _ in instance.edges])


@dataclass
class BatchResult:
    tau: np.ndarray          # (B,) int64, -1 where censored
    converged: np.ndarray    # (B,) bool
    assignment: np.ndarray   # (B, n_left) right ids at finish or at t_max
    tie_detected: np.ndarray  # (B,) bool
    matched_oracle: np.ndarray | None  # (B,) bool when an oracle was given

    @property
    def censored(self) -> np.ndarray:
        return ~self.converged


def _second_max(h: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-row max, argmax, and runner-up along the last axis."""
    arg1 = np.argmax(h, axis=-1)
    top1 = np.take_along_axis(h, arg1[..., None], axis=-1)[..., 0]
    masked = np.array(h, copy=True)
    np.put_along_axis(masked, arg1[..., None], -np.inf, axis=-1)
    top2 = masked.max(axis=-1)
    return top1, arg1, top2


def _side_update(w: np.ndarray, spec_in: np.ndarray, gen_in: np.ndarray,
                 normalized: bool) -> tuple[np.ndarray, np.ndarray]:
    """New outgoing (special, generic) for one side, from the incoming
    opposite-direction messages laid out on this side."""
    g_total = gen_in.sum(axis=-1, keepdims=True)
    s_exc = g_total - gen_in
    h = w + spec_in - gen_in
    top1, arg1, top2 = _second_max(h)
    max_exc = np.where(
        np.arange(h.shape[-1])[None, None, :] == arg1[..., None],
        top2[..., None], top1[..., None])
    spec_out = w + s_exc
    gen_out = s_exc + max_exc
    if normalized:
        mx = np.maximum(spec_out, gen_out)
        spec_out -= mx
        gen_out -= mx
    return spec_out, gen_out


def run_batch(top: Topology, weights: np.ndarray, t_max: int, window: int = 4,
              oracle: np.ndarray | None = None, mode: str = "normalized",
              ) -> BatchResult:
    """Run BP on a batch of instances sharing ``top``.

    ``weights`` has one row per trial in the topology's edge order;
    ``oracle``, when given, holds the optimal right id per left node, shape
    (n_left,) or (B, n_left), and convergence means equality with it.
    """
    if t_max < 1 or window < 1:
        raise ValueError("t_max and window must be >= 1")
    if mode not in ("raw", "normalized"):
        raise ValueError(f"unknown mode {mode!r}")
    normalized = mode == "normalized"

    B = weights.shape[0]
    nL, dL = top.n_left, top.d_left
    nR, dR = top.n_right, top.d_right
    w_l = weights[:, top.wcol_left].reshape(B, nL, dL)
    w_r = weights[:, top.wcol_right].reshape(B, nR, dR)
    if oracle is not None:
        oracle = np.broadcast_to(np.asarray(oracle, dtype=np.int64),
                                 (B, nL)).copy()

    # iteration-0 messages
    fwd_s, fwd_g = w_l.copy(), np.zeros_like(w_l)
    bwd_s, bwd_g = w_r.copy(), np.zeros_like(w_r)
    if normalized:
        for s, g in ((fwd_s, fwd_g), (bwd_s, bwd_g)):
            mx = np.maximum(s, g)
            s -= mx
            g -= mx

    ids = np.arange(B)
    tau = np.full(B, -1, dtype=np.int64)
    converged = np.zeros(B, dtype=bool)
    tie_out = np.zeros(B, dtype=bool)
    final_assign = np.zeros((B, nL), dtype=np.int64)

    streak = np.zeros(B, dtype=np.int64)
    prev_assign = np.full((B, nL), -1, dtype=np.int64)
    tie_seen = np.zeros(B, dtype=bool)

    def gather_to_left(arr: np.ndarray) -> np.ndarray:
        b = arr.shape[0]
        return arr.reshape(b, -1)[:, top.r_from_l].reshape(b, nL, dL)

    def gather_to_right(arr: np.ndarray) -> np.ndarray:
        b = arr.shape[0]
        return arr.reshape(b, -1)[:, top.l_from_r].reshape(b, nR, dR)

    t = 0
    while True:
        # decode from the current backward messages
        spec_in = gather_to_left(bwd_s)
        gen_in = gather_to_left(bwd_g)
        h = w_l + spec_in - gen_in
        top1, arg1, top2 = _second_max(h)
        assign = np.take_along_axis(top.left_nb[None, :, :],
                                    arg1[..., None], axis=-1)[..., 0]
        tie_seen |= ((top1 - top2) <= TIE_TOL).any(axis=-1)

        if oracle is not None:
            # equality with a fixed target implies the decodes also agree
            ok = (assign == oracle).all(axis=1)
            streak = np.where(ok, streak + 1, 0)
        else:
            srt = np.sort(assign, axis=1)
            valid = (np.diff(srt, axis=1) != 0).all(axis=1)
            same = (assign == prev_assign).all(axis=1)
            streak = np.where(valid,
                              np.where(same & (streak > 0), streak + 1, 1), 0)
        prev_assign = assign

        fresh = streak >= window
        if fresh.any():
            done_ids = ids[fresh]
            tau[done_ids] = t - window + 1
            converged[done_ids] = True
            tie_out[done_ids] = tie_seen[fresh]
            final_assign[done_ids] = assign[fresh]
            keep = ~fresh
            if not keep.all():
                ids = ids[keep]
                streak, prev_assign, tie_seen = (streak[keep],
                                                 prev_assign[keep],
                                                 tie_seen[keep])
                w_l, w_r = w_l[keep], w_r[keep]
                fwd_s, fwd_g = fwd_s[keep], fwd_g[keep]
                bwd_s, bwd_g = bwd_s[keep], bwd_g[keep]
                if oracle is not None:
                    oracle = oracle[keep]
        if len(ids) == 0 or t == t_max:
            break

        t += 1
        new_f = _side_update(w_l, gather_to_left(bwd_s), gather_to_left(bwd_g),
                             normalized)
        new_b = _side_update(w_r, gather_to_right(fwd_s),
                             gather_to_right(fwd_g), normalized)
        fwd_s, fwd_g = new_f
        bwd_s, bwd_g = new_b

    matched = converged.copy() if oracle is not None else None
    if len(ids):
        tie_out[ids] = tie_seen
        final_assign[ids] = prev_assign
        if matched is not None:
            matched[ids] = (prev_assign == oracle).all(axis=1)
    return BatchResult(tau=tau, converged=converged, assignment=final_assign,
                       tie_detected=tie_out, matched_oracle=matched)
