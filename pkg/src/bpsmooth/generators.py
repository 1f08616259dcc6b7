"""Seeded samplers for the probabilistic instance families under study, and
membership tests for the adversarial near-tie events that drive slow BP
convergence on a 2x2 gadget.

Every sampler is a deterministic function of (seed, trial_index): replaying a
trial reproduces its instance bit for bit, and batch generation equals
one-at-a-time generation. Interval endpoint conventions, where a family
specifies half-open intervals, are realized exactly:

* [a, b)  as  a + (b-a)*u          with u in [0, 1)
* (a, b]  as  a + (b-a)*(1-u)      with u in [0, 1)
* [a, b]  as  [a, b)               (the endpoint has probability zero)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np

from bpsmooth import rng
from bpsmooth.instances import BipartiteInstance, FlowNetwork


class FamilyError(ValueError):
    """Invalid family parameters."""


# ---------------------------------------------------------------------------
# Piecewise-constant densities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DensitySpec:
    """Piecewise-constant probability density on [0, 1].

    ``pieces`` holds (a, b, d) triples: density d on [a, b). Pieces must be
    disjoint and integrate to 1 within 1e-12.
    """

    pieces: tuple[tuple[float, float, float], ...]

    def validate(self) -> None:
        if not self.pieces:
            raise FamilyError("density has no pieces")
        prev_end = -1.0
        mass = 0.0
        for a, b, d in sorted(self.pieces):
            if not (0.0 <= a < b <= 1.0):
                raise FamilyError(f"piece [{a}, {b}) outside [0, 1]")
            if a < prev_end:
                raise FamilyError("density pieces overlap")
            if d < 0.0:
                raise FamilyError("negative density")
            prev_end = b
            mass += d * (b - a)
        if abs(mass - 1.0) > 1e-12:
            raise FamilyError(f"density mass {mass} != 1")

    @property
    def max_density(self) -> float:
        return max(d for _, _, d in self.pieces)

    @cached_property
    def _table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        pieces = sorted(p for p in self.pieces if p[2] > 0.0)
        a = np.array([p[0] for p in pieces])
        d = np.array([p[2] for p in pieces])
        mass = d * (np.array([p[1] for p in pieces]) - a)
        cum = np.concatenate(([0.0], np.cumsum(mass)))
        cum[-1] = 1.0
        return cum, a, d, mass

    def inverse_cdf(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms in [0, 1) through the inverse CDF."""
        cum, a, d, _ = self._table
        idx = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, len(a) - 1)
        return a[idx] + (u - cum[idx]) / d[idx]


def uniform_density(a: float = 0.0, b: float = 1.0) -> DensitySpec:
    return DensitySpec(((a, b, 1.0 / (b - a)),))


# ---------------------------------------------------------------------------
# Instance families
# ---------------------------------------------------------------------------

_H = 23.0 / 26.0   # lower edge of the off-diagonal heavy band
_L = 20.0 / 26.0   # center band for the second diagonal weight


@dataclass(frozen=True)
class UniformK22:
    """Complete 2x2 graph, all four weights iid uniform on [0, 1)."""

    def validate(self) -> None:
        pass

    @property
    def tag(self) -> str:
        return "k22_uniform"

    n_left = n_right = 2

    def transform(self, u: np.ndarray) -> np.ndarray:
        return u


@dataclass(frozen=True)
class UniformKnn:
    """Complete n x n graph, weights iid uniform on [0, 1)."""

    n: int

    def validate(self) -> None:
        if self.n < 1:
            raise FamilyError("n must be >= 1")

    @property
    def tag(self) -> str:
        return f"knn_uniform:n={self.n}"

    @property
    def n_left(self) -> int:
        return self.n

    n_right = property(lambda self: self.n)

    def transform(self, u: np.ndarray) -> np.ndarray:
        return u


@dataclass(frozen=True)
class GadgetCopies:
    """Disjoint union of n/4 complete 2x2 blocks (n total nodes, no edges
    between blocks), each weight iid uniform on [0, 1)."""

    n: int

    def validate(self) -> None:
        if self.n < 4 or self.n % 4 != 0:
            raise FamilyError("n must be a positive multiple of 4")

    @property
    def tag(self) -> str:
        return f"gadget_copies:n={self.n}"

    @property
    def copies(self) -> int:
        return self.n // 4

    @property
    def n_left(self) -> int:
        return self.n // 2

    n_right = property(lambda self: self.n // 2)

    def transform(self, u: np.ndarray) -> np.ndarray:
        return u


@dataclass(frozen=True)
class SmoothedKnn:
    """Complete n x n graph split into n/2 four-node blocks.

    Within a block the four weights are drawn from narrow bands near 1
    (width 1/phi, except the last at 4/phi); edges between blocks ("light"
    edges) are uniform on [0, 1/phi]. Requires phi >= 26 and n >= 2 even,
    which separates light (<= 1/26) from heavy (>= 19/26) weights.
    """

    n: int
    phi: float

    def validate(self) -> None:
        if self.n < 2 or self.n % 2 != 0:
            raise FamilyError("n must be even and >= 2")
        if self.phi < 26:
            raise FamilyError("phi must be >= 26")

    @property
    def tag(self) -> str:
        return f"knn_smoothed:n={self.n}:phi={self.phi}"

    @property
    def n_left(self) -> int:
        return self.n

    n_right = property(lambda self: self.n)

    def is_light(self, i: int, j: int) -> bool:
        return i // 2 != j // 2

    @cached_property
    def _affine(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        inv = 1.0 / self.phi
        lo = np.empty(self.n * self.n)
        scale = np.empty(self.n * self.n)
        flip = np.zeros(self.n * self.n, dtype=bool)
        for i in range(self.n):
            for j in range(self.n):
                e = i * self.n + j
                if self.is_light(i, j):
                    lo[e], scale[e] = 0.0, inv              # [0, 1/phi)
                elif i % 2 == 0 and j % 2 == 0:
                    lo[e], scale[e] = 1.0 - inv, inv        # [1-1/phi, 1)
                elif i % 2 == 1 and j % 2 == 1:
                    lo[e], scale[e] = _L - inv, 4.0 * inv   # [20/26-1/phi, 20/26+3/phi)
                else:
                    lo[e], scale[e] = _H, inv               # (23/26, 23/26+1/phi]
                    flip[e] = True
        return lo, scale, flip

    def transform(self, u: np.ndarray) -> np.ndarray:
        lo, scale, flip = self._affine
        return lo + scale * np.where(flip, 1.0 - u, u)


@dataclass(frozen=True)
class NearTieK22:
    """Direct sampler of the uniform-weights near-tie event on a 2x2 graph:
    w11 in [7/8, 1], w12 in (1/2, 5/8], w21 in (5/8, 3/4], and w22 within
    eps below w12 + w21 - w11, so the two perfect matchings nearly tie."""

    eps: float

    def validate(self) -> None:
        if not (0.0 < self.eps <= 0.125):
            raise FamilyError("eps must lie in (0, 1/8]")

    @property
    def tag(self) -> str:
        return f"k22_near_tie:eps={self.eps!r}"

    n_left = n_right = 2

    def transform(self, u: np.ndarray) -> np.ndarray:
        w = np.empty_like(u)
        w[..., 0] = 0.875 + 0.125 * u[..., 0]
        w[..., 1] = 0.5 + 0.125 * (1.0 - u[..., 1])
        w[..., 2] = 0.625 + 0.125 * (1.0 - u[..., 2])
        target = w[..., 1] + w[..., 2] - w[..., 0]
        w[..., 3] = target - self.eps + self.eps * u[..., 3]
        return w


@dataclass(frozen=True)
class NearTieK22Smoothed:
    """Direct sampler of the density-bounded near-tie event on a 2x2 graph
    (bands of width 1/phi around the corners used by NearTieK22)."""

    eps: float
    phi: float

    def validate(self) -> None:
        if self.phi < 26:
            raise FamilyError("phi must be >= 26")
        if not (0.0 < self.eps <= 1.0 / self.phi):
            raise FamilyError("eps must lie in (0, 1/phi]")

    @property
    def tag(self) -> str:
        return f"k22_near_tie_smoothed:eps={self.eps!r}:phi={self.phi!r}"

    n_left = n_right = 2

    def transform(self, u: np.ndarray) -> np.ndarray:
        inv = 1.0 / self.phi
        w = np.empty_like(u)
        w[..., 0] = (1.0 - inv) + inv * u[..., 0]
        w[..., 1] = _H + inv * (1.0 - u[..., 1])
        w[..., 2] = _H + inv * (1.0 - u[..., 2])
        target = w[..., 1] + w[..., 2] - w[..., 0]
        w[..., 3] = target - self.eps + self.eps * u[..., 3]
        return w


@dataclass(frozen=True)
class CustomDensities:
    """Arbitrary sparse bipartite family: one DensitySpec per edge, weights
    drawn independently through each edge's inverse CDF."""

    n_left: int
    n_right: int
    specs: tuple[tuple[tuple[int, int], DensitySpec], ...]
    max_density: float = math.inf  # declared phi bound, checked in validate

    def validate(self) -> None:
        seen = set()
        for (i, j), spec in self.specs:
            if not (0 <= i < self.n_left and 0 <= j < self.n_right):
                raise FamilyError(f"edge ({i}, {j}) out of range")
            if (i, j) in seen:
                raise FamilyError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
            spec.validate()
            if spec.max_density > self.max_density + 1e-12:
                raise FamilyError(
                    f"edge ({i}, {j}) density {spec.max_density} exceeds "
                    f"declared bound {self.max_density}")

    @property
    def tag(self) -> str:
        return f"custom:{self.n_left}x{self.n_right}:m={len(self.specs)}"

    def transform(self, u: np.ndarray) -> np.ndarray:
        w = np.empty_like(u)
        for col, (_, spec) in enumerate(self.specs):
            w[..., col] = spec.inverse_cdf(u[..., col])
        return w


def peaked_k22_family(phi: float) -> CustomDensities:
    """The density-phi construction that maximizes the probability of the
    smoothed near-tie event: the first three weights always land in their
    bands, the fourth spreads density phi/4 over a band of width 4/phi."""
    if phi < 26:
        raise FamilyError("phi must be >= 26")
    inv = 1.0 / phi
    specs = (
        ((0, 0), DensitySpec(((1.0 - inv, 1.0, phi),))),
        ((0, 1), DensitySpec(((_H, _H + inv, phi),))),
        ((1, 0), DensitySpec(((_H, _H + inv, phi),))),
        ((1, 1), DensitySpec(((_L - inv, _L + 3.0 * inv, phi / 4.0),))),
    )
    fam = CustomDensities(2, 2, specs, max_density=phi)
    fam.validate()
    return fam


BipartiteFamily = Union[UniformK22, UniformKnn, GadgetCopies, SmoothedKnn,
                        NearTieK22, NearTieK22Smoothed, CustomDensities]


def edge_order(family: BipartiteFamily) -> tuple[tuple[int, int], ...]:
    """Fixed (left, right) edge order matching sampled weight columns."""
    if isinstance(family, CustomDensities):
        return tuple(e for e, _ in family.specs)
    if isinstance(family, GadgetCopies):
        return tuple((2 * c + p, 2 * c + q)
                     for c in range(family.copies)
                     for p in range(2) for q in range(2))
    return tuple((i, j)
                 for i in range(family.n_left)
                 for j in range(family.n_right))


def draws_per_trial(family: BipartiteFamily) -> int:
    return len(edge_order(family))


def sample_weights_batch(family: BipartiteFamily, seed: int,
                         first_trial: int, n_trials: int) -> np.ndarray:
    """Weight rows for a contiguous range of trials, shape (n_trials, m)."""
    family.validate()
    u = rng.uniforms_batch(seed, family.tag, first_trial, n_trials,
                           draws_per_trial(family))
    return family.transform(u)


def instance_from_weights(family: BipartiteFamily,
                          weights: np.ndarray) -> BipartiteInstance:
    edges = tuple((i, j, float(w))
                  for (i, j), w in zip(edge_order(family), weights))
    return BipartiteInstance(family.n_left, family.n_right, edges)


def sample(family: "Family", seed: int, trial_index: int):
    """Draw one instance; a pure function of (seed, trial_index)."""
    if isinstance(family, TinyFlowFamily):
        return sample_flow(family, seed, trial_index)
    w = sample_weights_batch(family, seed, trial_index, 1)[0]
    return instance_from_weights(family, w)


def sample_custom(specs, seed: int, trial_index: int,
                  n_left: int, n_right: int,
                  max_density: float = math.inf) -> BipartiteInstance:
    """Sample one instance from per-edge piecewise-constant densities."""
    fam = CustomDensities(n_left, n_right, tuple(specs), max_density)
    fam.validate()
    return sample(fam, seed, trial_index)


# ---------------------------------------------------------------------------
# Near-tie event membership
# ---------------------------------------------------------------------------

def _k22_weights(instance: BipartiteInstance) -> tuple[float, float, float, float]:
    if instance.n_left != 2 or instance.n_right != 2 or not instance.is_complete:
        raise FamilyError("event test requires a complete 2x2 instance")
    w = instance.weight
    return w[(0, 0)], w[(0, 1)], w[(1, 0)], w[(1, 1)]


def near_tie_event(instance: BipartiteInstance, eps: float) -> bool:
    """Membership in the uniform-weights near-tie event: the off-diagonal
    perfect matching wins by at most eps while w11 exceeds w12 by >= 1/4."""
    if not (0.0 < eps <= 0.125):
        raise FamilyError("eps must lie in (0, 1/8]")
    w11, w12, w21, w22 = _k22_weights(instance)
    target = w12 + w21 - w11
    return (0.875 <= w11 <= 1.0
            and 0.5 < w12 <= 0.625
            and 0.625 < w21 <= 0.75
            and target - eps <= w22 < target)


def near_tie_event_smoothed(instance: BipartiteInstance, eps: float,
                            phi: float) -> bool:
    """Membership in the density-bounded near-tie event (bands of width
    1/phi; requires phi >= 26 and 0 < eps <= 1/phi)."""
    if phi < 26:
        raise FamilyError("phi must be >= 26")
    if not (0.0 < eps <= 1.0 / phi):
        raise FamilyError("eps must lie in (0, 1/phi]")
    inv = 1.0 / phi
    w11, w12, w21, w22 = _k22_weights(instance)
    target = w12 + w21 - w11
    return (1.0 - inv <= w11 <= 1.0
            and _H < w12 <= _H + inv
            and _H < w21 <= _H + inv
            and target - eps <= w22 < target)


def near_tie_event_batch(weights: np.ndarray, eps: float) -> np.ndarray:
    """Vectorized ``near_tie_event`` over rows (w11, w12, w21, w22)."""
    if not (0.0 < eps <= 0.125):
        raise FamilyError("eps must lie in (0, 1/8]")
    w11, w12, w21, w22 = (weights[:, k] for k in range(4))
    target = w12 + w21 - w11
    return ((w11 >= 0.875) & (w11 <= 1.0)
            & (w12 > 0.5) & (w12 <= 0.625)
            & (w21 > 0.625) & (w21 <= 0.75)
            & (w22 >= target - eps) & (w22 < target))


def near_tie_event_smoothed_batch(weights: np.ndarray, eps: float,
                                  phi: float) -> np.ndarray:
    if phi < 26:
        raise FamilyError("phi must be >= 26")
    if not (0.0 < eps <= 1.0 / phi):
        raise FamilyError("eps must lie in (0, 1/phi]")
    inv = 1.0 / phi
    w11, w12, w21, w22 = (weights[:, k] for k in range(4))
    target = w12 + w21 - w11
    return ((w11 >= 1.0 - inv) & (w11 <= 1.0)
            & (w12 > _H) & (w12 <= _H + inv)
            & (w21 > _H) & (w21 <= _H + inv)
            & (w22 >= target - eps) & (w22 < target))


# ---------------------------------------------------------------------------
# Tiny random flow networks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TinyFlowFamily:
    """Small random directed networks with integer budgets/capacities and
    uniform costs, resampled (deterministically) until feasible."""

    n_nodes: int = 4
    max_cap: int = 2
    max_budget: int = 2
    edge_prob: float = 0.6

    def validate(self) -> None:
        if self.n_nodes < 2:
            raise FamilyError("need at least 2 nodes")
        if self.max_cap < 1 or self.max_budget < 0:
            raise FamilyError("max_cap must be >= 1 and max_budget >= 0")
        if not (0.0 < self.edge_prob <= 1.0):
            raise FamilyError("edge_prob must lie in (0, 1]")

    @property
    def tag(self) -> str:
        return (f"flow_tiny:n={self.n_nodes}:cap={self.max_cap}"
                f":b={self.max_budget}:p={self.edge_prob!r}")

    @property
    def max_edges(self) -> int:
        return self.n_nodes * (self.n_nodes - 1)


def sample_flow(family: TinyFlowFamily, seed: int, trial_index: int,
                max_attempts: int = 1000) -> FlowNetwork:
    family.validate()
    # local import: oracles depends on instances only, no cycle through here
    from bpsmooth.oracles import FlowInfeasibleError, min_cost_flow

    g = rng.generator(seed, family.tag, trial_index)
    n = family.n_nodes
    pairs = [(a, b) for a in range(n) for b in range(n) if a != b]
    for _ in range(max_attempts):
        present = g.random(len(pairs)) < family.edge_prob
        caps = g.integers(1, family.max_cap + 1, size=len(pairs))
        costs = g.random(len(pairs))
        budgets = g.integers(-family.max_budget, family.max_budget + 1,
                             size=n - 1)
        last = -int(budgets.sum())
        if abs(last) > family.max_budget:
            continue
        edges = tuple((a, b, int(u), float(c))
                      for (a, b), keep, u, c in zip(pairs, present, caps, costs)
                      if keep)
        if not edges:
            continue
        net = FlowNetwork(tuple(int(b) for b in budgets) + (last,), edges)
        try:
            min_cost_flow(net)
        except FlowInfeasibleError:
            continue
        return net
    raise FamilyError(f"no feasible network after {max_attempts} attempts")


Family = Union[BipartiteFamily, TinyFlowFamily]
