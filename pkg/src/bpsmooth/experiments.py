"""Seeded Monte Carlo harness: runs the four experiment kinds (convergence
tails, matching-gap tails, flow cycle-gap tails, event frequencies) plus the
deterministic lemma checks, estimates survival curves, and compares the
results against the analytic bounds.

Trials are keyed by (seed, trial_index), so any execution order and any
chunking produce the same records; the CSV output is byte-identical across
replays except for the wall-time column.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from bpsmooth import bp, comptree, rng
from bpsmooth.generators import (
    CustomDensities,
    DensitySpec,
    FamilyError,
    Family,
    GadgetCopies,
    NearTieK22,
    NearTieK22Smoothed,
    SmoothedKnn,
    TinyFlowFamily,
    UniformK22,
    UniformKnn,
    draws_per_trial,
    edge_order,
    instance_from_weights,
    near_tie_event_batch,
    near_tie_event_smoothed_batch,
    peaked_k22_family,
    sample_flow,
    sample_weights_batch,
)
from bpsmooth.instances import BipartiteInstance
from bpsmooth.oracles import (
    EnumerationCapError,
    cheapest_residual_cycle,
    flow_gap_enumeration,
    matching_gap,
    matching_values_batch,
    min_cost_flow,
    mwm,
)

KINDS = ("tau_tail", "delta_tail", "flow_delta_tail", "event_freq",
         "lemma_checks")

CSV_HEADER = "trial,seed,n,m,phi,family,observable_kind,value,censored,wall_ms"

_TAU_CHUNK = 32768
_FLAT_CHUNK = 262144


class ConfigError(ValueError):
    """Bad experiment configuration."""


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    seed: int          # derived stream handle (counter block start)
    n: int             # total node count of the sampled instance
    m: int
    phi: float
    family: str
    observable_kind: str
    value: float
    censored: bool
    wall_ms: float


@dataclass(frozen=True)
class SurvivalCurve:
    t: np.ndarray
    phat: np.ndarray
    se: np.ndarray
    n_trials: int
    censor_rate: float


@dataclass(frozen=True)
class TailFit:
    slope: float
    c_hat: float       # constant of the phat ~ c/t model
    n_points: int
    max_residual: float

    @property
    def power_law_ok(self) -> bool:
        return self.max_residual <= 0.35 and -3.0 < self.slope < 0.0


@dataclass
class ExperimentConfig:
    kind: str
    family: Family
    trials: int
    seed: int
    t_max: int = 10000
    window: int = 4
    mode: str = "normalized"
    eps: float | None = None        # event width for event/lemma kinds
    t_grid: tuple[int, ...] | None = None
    eps_grid: tuple[float, ...] = ()
    k_max: int | None = None        # tree depth cap for lemma checks
    fit_range: tuple[float, float] | None = None
    out: str | None = None

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.t_max < 1 or self.window < 1:
            raise ConfigError("t_max and window must be >= 1")
        if self.t_grid is not None:
            if any(b <= a for a, b in zip(self.t_grid, self.t_grid[1:])):
                raise ConfigError("t_grid must be strictly increasing")
            if self.t_grid and self.t_grid[-1] > self.t_max:
                raise ConfigError("t_grid exceeds t_max")
        if any(b <= a for a, b in zip(self.eps_grid, self.eps_grid[1:])):
            raise ConfigError("eps_grid must be strictly increasing")
        try:
            self.family.validate()
        except FamilyError as exc:
            raise ConfigError(str(exc)) from exc


def default_t_grid(t_max: int, per_decade: int = 10) -> tuple[int, ...]:
    raw = np.logspace(0, math.log10(t_max), num=max(
        2, int(per_decade * math.log10(max(t_max, 2))) + 1))
    return tuple(int(v) for v in np.unique(np.round(raw).astype(int)))


def family_phi(family: Family) -> float:
    if isinstance(family, SmoothedKnn):
        return float(family.phi)
    if isinstance(family, NearTieK22Smoothed):
        return float(family.phi)
    if isinstance(family, CustomDensities):
        return float(max(spec.max_density for _, spec in family.specs))
    return 1.0


def family_nodes(family: Family) -> int:
    if isinstance(family, TinyFlowFamily):
        return family.n_nodes
    return family.n_left + family.n_right


# ---------------------------------------------------------------------------
# Config file parsing (flat key=value lines, '#' comments)
# ---------------------------------------------------------------------------

_FAMILY_NAMES = ("k22_uniform", "knn_uniform", "gadget_copies", "knn_smoothed",
                 "k22_near_tie", "k22_near_tie_smoothed", "k22_peaked",
                 "flow_tiny", "custom")


def parse_config(text: str) -> ExperimentConfig:
    kv: dict[str, str] = {}
    densities: list[tuple[tuple[int, int], DensitySpec]] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("density."):
            try:
                _, si, sj = key.split(".")
                pieces = tuple(
                    tuple(float(x) for x in piece.split(":"))
                    for piece in value.split(";") if piece.strip())
                densities.append(((int(si) - 1, int(sj) - 1),
                                  DensitySpec(pieces)))
            except (ValueError, TypeError):
                raise ConfigError(f"line {line_no}: bad density spec") from None
        else:
            kv[key] = value

    def need(key: str) -> str:
        if key not in kv:
            raise ConfigError(f"missing required key {key!r}")
        return kv[key]

    def geti(key: str, default: int | None = None) -> int | None:
        if key not in kv:
            return default
        try:
            return int(kv[key])
        except ValueError:
            raise ConfigError(f"key {key!r} must be an integer") from None

    def getf(key: str, default: float | None = None) -> float | None:
        if key not in kv:
            return default
        try:
            return float(kv[key])
        except ValueError:
            raise ConfigError(f"key {key!r} must be a number") from None

    kind = need("kind")
    fam_name = need("family")
    if fam_name not in _FAMILY_NAMES:
        raise ConfigError(f"unknown family {fam_name!r}")

    eps = getf("eps")
    phi = getf("phi")
    family: Family
    if fam_name == "k22_uniform":
        family = UniformK22()
    elif fam_name == "knn_uniform":
        family = UniformKnn(geti("n", 2))
    elif fam_name == "gadget_copies":
        family = GadgetCopies(geti("n", 4))
    elif fam_name == "knn_smoothed":
        family = SmoothedKnn(geti("n", 2), phi if phi is not None else 26.0)
    elif fam_name == "k22_near_tie":
        if eps is None:
            raise ConfigError("k22_near_tie needs eps")
        family = NearTieK22(eps)
    elif fam_name == "k22_near_tie_smoothed":
        if eps is None:
            raise ConfigError("k22_near_tie_smoothed needs eps")
        family = NearTieK22Smoothed(eps, phi if phi is not None else 26.0)
    elif fam_name == "k22_peaked":
        family = peaked_k22_family(phi if phi is not None else 26.0)
    elif fam_name == "flow_tiny":
        family = TinyFlowFamily(
            n_nodes=geti("flow_nodes", 4),
            max_cap=geti("flow_max_cap", 2),
            max_budget=geti("flow_max_budget", 2),
            edge_prob=getf("flow_edge_prob", 0.6))
    else:
        if not densities:
            raise ConfigError("custom family needs density.<i>.<j> entries")
        family = CustomDensities(
            geti("n_left", 2), geti("n_right", 2), tuple(sorted(densities)),
            max_density=getf("max_density", math.inf))

    t_grid = None
    if "t_grid" in kv:
        t_grid = tuple(int(s) for s in kv["t_grid"].split(",") if s.strip())
    eps_grid: tuple[float, ...] = ()
    if "eps_grid" in kv:
        eps_grid = tuple(float(s) for s in kv["eps_grid"].split(",") if s.strip())
    fit_range = None
    if "fit_min" in kv or "fit_max" in kv:
        fit_range = (getf("fit_min", 1.0), getf("fit_max", float(geti("t_max", 10000))))

    cfg = ExperimentConfig(
        kind=kind, family=family,
        trials=geti("trials", 1000), seed=geti("seed", 0),
        t_max=geti("t_max", 10000), window=geti("window", 4),
        mode=kv.get("mode", "normalized"), eps=eps,
        t_grid=t_grid, eps_grid=eps_grid, k_max=geti("k_max"),
        fit_range=fit_range, out=kv.get("out"))
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Experiment drivers
# ---------------------------------------------------------------------------

def _oracle_assignments(family: Family, weights: np.ndarray) -> np.ndarray:
    """Optimal right-node per left-node for each weight row."""
    B = weights.shape[0]
    if isinstance(family, (UniformK22, NearTieK22, NearTieK22Smoothed)):
        diag = weights[:, 0] + weights[:, 3]
        off = weights[:, 1] + weights[:, 2]
        out = np.where((diag > off)[:, None],
                       np.array([[0, 1]]), np.array([[1, 0]]))
        return out.astype(np.int64)
    if isinstance(family, GadgetCopies):
        w = weights.reshape(B, family.copies, 4)
        diag = w[:, :, 0] + w[:, :, 3]
        off = w[:, :, 1] + w[:, :, 2]
        pick_diag = diag > off
        out = np.empty((B, family.n_left), dtype=np.int64)
        base = 2 * np.arange(family.copies)
        out[:, 0::2] = np.where(pick_diag, base, base + 1)
        out[:, 1::2] = np.where(pick_diag, base + 1, base)
        return out
    # general complete families: one assignment solve per trial
    from scipy.optimize import linear_sum_assignment
    n = family.n_left
    out = np.empty((B, n), dtype=np.int64)
    mats = weights.reshape(B, n, family.n_right)
    for b in range(B):
        rows, cols = linear_sum_assignment(mats[b], maximize=True)
        out[b, rows] = cols
    return out


def _records_tau(cfg: ExperimentConfig) -> tuple[list[TrialRecord], dict]:
    fam = cfg.family
    top = bp.Topology.from_edge_order(fam.n_left, fam.n_right, edge_order(fam))
    m = draws_per_trial(fam)
    n_nodes = family_nodes(fam)
    phi = family_phi(fam)
    blocks = rng.trial_counter(m, 1)
    records: list[TrialRecord] = []
    tie_count = 0

    for start in range(0, cfg.trials, _TAU_CHUNK):
        count = min(_TAU_CHUNK, cfg.trials - start)
        t0 = time.perf_counter()
        weights = sample_weights_batch(fam, cfg.seed, start, count)
        oracle = _oracle_assignments(fam, weights)
        result = bp.run_batch(top, weights, cfg.t_max, cfg.window,
                              oracle=oracle, mode=cfg.mode)
        per_ms = (time.perf_counter() - t0) * 1000.0 / count
        tie_count += int(result.tie_detected.sum())
        for k in range(count):
            censored = not result.converged[k]
            tau = cfg.t_max if censored else int(result.tau[k])
            records.append(TrialRecord(
                trial=start + k, seed=(start + k) * blocks, n=n_nodes, m=m,
                phi=phi, family=fam.tag, observable_kind="tau",
                value=float(tau), censored=censored, wall_ms=round(per_ms, 3)))

    curve = estimate_survival(records, cfg.t_grid or default_t_grid(cfg.t_max),
                              t_max=cfg.t_max)
    summary = {
        "kind": "tau_tail", "family": fam.tag, "trials": cfg.trials,
        "censor_rate": curve.censor_rate, "tie_runs": tie_count,
        "survival": _curve_dict(curve),
    }
    if cfg.fit_range is not None:
        try:
            fit = fit_tail_exponent(curve, cfg.fit_range)
            summary["fit"] = {"slope": fit.slope, "c_hat": fit.c_hat,
                              "n_points": fit.n_points,
                              "power_law_ok": fit.power_law_ok}
        except ValueError as exc:
            summary["fit"] = {"error": str(exc)}
    return records, summary


def _records_delta(cfg: ExperimentConfig) -> tuple[list[TrialRecord], dict]:
    fam = cfg.family
    if isinstance(fam, TinyFlowFamily):
        raise ConfigError("delta_tail needs a bipartite family")
    m = draws_per_trial(fam)
    n_nodes = family_nodes(fam)
    phi = family_phi(fam)
    blocks = rng.trial_counter(m, 1)
    complete = m == fam.n_left * fam.n_right
    records: list[TrialRecord] = []
    ties = 0

    for start in range(0, cfg.trials, _FLAT_CHUNK):
        count = min(_FLAT_CHUNK, cfg.trials - start)
        t0 = time.perf_counter()
        weights = sample_weights_batch(fam, cfg.seed, start, count)
        if complete:
            values = matching_values_batch(fam.n_left, fam.n_right, weights)
            top2 = np.partition(values, values.shape[1] - 2, axis=1)[:, -2:]
            deltas = top2[:, 1] - top2[:, 0]
        else:
            deltas = np.empty(count)
            for k in range(count):
                inst = instance_from_weights(fam, weights[k])
                rep = matching_gap(inst)
                deltas[k] = rep.delta if rep.delta is not None else 0.0
        ties += int((deltas <= 1e-12).sum())
        per_ms = (time.perf_counter() - t0) * 1000.0 / count
        for k in range(count):
            records.append(TrialRecord(
                trial=start + k, seed=(start + k) * blocks, n=n_nodes, m=m,
                phi=phi, family=fam.tag, observable_kind="delta",
                value=float(deltas[k]), censored=False,
                wall_ms=round(per_ms, 3)))

    summary = {"kind": "delta_tail", "family": fam.tag, "trials": cfg.trials,
               "degenerate_gaps": ties,
               "bounds": _gap_bounds(records, "delta", cfg.eps_grid, phi, m)}
    return records, summary


def _records_flow(cfg: ExperimentConfig) -> tuple[list[TrialRecord], dict]:
    fam = cfg.family
    if not isinstance(fam, TinyFlowFamily):
        raise ConfigError("flow_delta_tail needs the flow_tiny family")
    records: list[TrialRecord] = []
    violations = 0
    unique_cases = 0
    no_cycle = 0
    max_m = 0

    for trial in range(cfg.trials):
        t0 = time.perf_counter()
        net = sample_flow(fam, cfg.seed, trial)
        flow = min_cost_flow(net)
        cycle = cheapest_residual_cycle(net, flow)
        rep = flow_gap_enumeration(net)
        wall = round((time.perf_counter() - t0) * 1000.0, 3)
        max_m = max(max_m, net.m)

        cyc_val = cycle if cycle is not None else math.inf
        if cycle is None:
            no_cycle += 1
        if rep.unique_flag:
            unique_cases += 1
            if cyc_val < rep.delta - 1e-9:
                violations += 1
        common = dict(trial=trial, seed=trial << 16, n=net.n, m=net.m,
                      phi=1.0, family=fam.tag, wall_ms=wall)
        records.append(TrialRecord(observable_kind="cycle_gap",
                                   value=float(cyc_val), censored=False,
                                   **common))
        records.append(TrialRecord(
            observable_kind="flow_gap",
            value=float(rep.delta) if rep.delta is not None else math.inf,
            censored=rep.delta is None, **common))

    summary = {
        "kind": "flow_delta_tail", "family": fam.tag, "trials": cfg.trials,
        "cycle_below_gap_violations": violations,
        "unique_optimum_cases": unique_cases, "no_cycle_cases": no_cycle,
        "bounds": _gap_bounds(records, "cycle_gap", cfg.eps_grid, 1.0, max_m),
    }
    return records, summary


def _records_event(cfg: ExperimentConfig) -> tuple[list[TrialRecord], dict]:
    fam = cfg.family
    if cfg.eps is None:
        raise ConfigError("event_freq needs eps")
    m = draws_per_trial(fam)
    n_nodes = family_nodes(fam)
    phi = family_phi(fam)
    blocks = rng.trial_counter(m, 1)
    smoothed = isinstance(fam, (NearTieK22Smoothed, CustomDensities))
    records: list[TrialRecord] = []
    hits = 0

    for start in range(0, cfg.trials, _FLAT_CHUNK):
        count = min(_FLAT_CHUNK, cfg.trials - start)
        t0 = time.perf_counter()
        weights = sample_weights_batch(fam, cfg.seed, start, count)
        if smoothed:
            flags = near_tie_event_smoothed_batch(weights, cfg.eps, phi)
        else:
            flags = near_tie_event_batch(weights, cfg.eps)
        hits += int(flags.sum())
        per_ms = (time.perf_counter() - t0) * 1000.0 / count
        for k in range(count):
            records.append(TrialRecord(
                trial=start + k, seed=(start + k) * blocks, n=n_nodes, m=m,
                phi=phi, family=fam.tag, observable_kind="event",
                value=float(flags[k]), censored=False,
                wall_ms=round(per_ms, 3)))

    rate = hits / cfg.trials
    summary = {"kind": "event_freq", "family": fam.tag, "trials": cfg.trials,
               "eps": cfg.eps, "hits": hits, "rate": rate,
               "se": binomial_se(rate, cfg.trials)}
    if isinstance(fam, UniformK22):
        expected = cfg.eps / 512.0
        summary["expected_rate"] = expected
        summary["within_4_sigma"] = bool(
            abs(rate - expected) <= 4.0 * binomial_se(expected, cfg.trials)
            + 1e-15)
    elif smoothed:
        lower = cfg.eps * phi / 4.0
        summary["lower_bound_rate"] = lower
        summary["above_lower_bound"] = bool(
            rate >= lower - 4.0 * binomial_se(lower, cfg.trials))
    return records, summary


def _records_lemma(cfg: ExperimentConfig) -> tuple[list[TrialRecord], dict]:
    fam = cfg.family
    records: list[TrialRecord] = []
    m = draws_per_trial(fam) if not isinstance(fam, TinyFlowFamily) else 0
    n_nodes = family_nodes(fam)
    phi = family_phi(fam)
    blocks = rng.trial_counter(max(m, 1), 1)
    checked = 0
    violations = 0

    if isinstance(fam, SmoothedKnn):
        check_name = "light_edge_free"
        k_max = cfg.k_max if cfg.k_max is not None else 4
        for trial in range(cfg.trials):
            t0 = time.perf_counter()
            weights = sample_weights_batch(fam, cfg.seed, trial, 1)[0]
            inst = instance_from_weights(fam, weights)
            bad = 0
            for side in (comptree.LEFT, comptree.RIGHT):
                for root in range(fam.n):
                    for k in range(k_max + 1):
                        tree = comptree.build_tree(inst, side, root, k)
                        tm = comptree.max_t_matching(tree)
                        checked += 1
                        if not comptree.light_edge_audit(tree, tm, fam):
                            bad += 1
            violations += bad
            records.append(TrialRecord(
                trial=trial, seed=trial * blocks, n=n_nodes, m=m, phi=phi,
                family=fam.tag, observable_kind="lemma_violation",
                value=float(bad), censored=False,
                wall_ms=round((time.perf_counter() - t0) * 1000.0, 3)))
    elif isinstance(fam, (NearTieK22, NearTieK22Smoothed, UniformK22,
                          CustomDensities)):
        check_name = "wrong_belief_at_4k"
        if cfg.eps is None and isinstance(fam, (NearTieK22, NearTieK22Smoothed)):
            eps = fam.eps
        elif cfg.eps is not None:
            eps = cfg.eps
        else:
            raise ConfigError("wrong-belief check needs eps")
        smoothed = isinstance(fam, (NearTieK22Smoothed, CustomDensities))
        denom = 52.0 if smoothed else 8.0
        k_admissible = int(math.floor(1.0 / (denom * eps) - 1.0 + 1e-12))
        if cfg.k_max is not None:
            k_admissible = min(k_admissible, cfg.k_max)
        if k_admissible < 1:
            raise ConfigError(
                f"eps={eps} admits no k >= 1 (bound {1 / (denom * eps) - 1:.3f})")
        for trial in range(cfg.trials):
            t0 = time.perf_counter()
            weights = sample_weights_batch(fam, cfg.seed, trial, 1)
            if smoothed:
                in_event = bool(
                    near_tie_event_smoothed_batch(weights, eps, phi)[0])
            else:
                in_event = bool(near_tie_event_batch(weights, eps)[0])
            bad = 0
            if in_event:
                checked += 1
                inst = instance_from_weights(fam, weights[0])
                bad = int(not _wrong_belief_through(inst, k_admissible))
                violations += bad
            records.append(TrialRecord(
                trial=trial, seed=trial * blocks, n=n_nodes, m=m, phi=phi,
                family=fam.tag, observable_kind="lemma_violation",
                value=float(bad), censored=not in_event,
                wall_ms=round((time.perf_counter() - t0) * 1000.0, 3)))
    else:
        raise ConfigError(f"no lemma check defined for family {fam.tag!r}")

    summary = {"kind": "lemma_checks", "family": fam.tag, "check": check_name,
               "trials": cfg.trials, "checked": checked,
               "violations": violations}
    return records, summary


def _wrong_belief_through(inst: BipartiteInstance, k_max: int) -> bool:
    """True iff the first left node's decoded partner is the first right
    node (the suboptimal one inside the near-tie events) at every iteration
    4k, k = 1..k_max."""
    state = bp.init_messages(inst, normalized=False)
    targets = {4 * k for k in range(1, k_max + 1)}
    for t in range(1, 4 * k_max + 1):
        state = bp.step(state, inst)
        if t in targets:
            bel = bp.beliefs(state, inst)
            if int(np.argmax(bel.left[0])) != 0:
                return False
    return True


def run_experiment(cfg: ExperimentConfig) -> tuple[list[TrialRecord], dict]:
    cfg.validate()
    driver = {
        "tau_tail": _records_tau,
        "delta_tail": _records_delta,
        "flow_delta_tail": _records_flow,
        "event_freq": _records_event,
        "lemma_checks": _records_lemma,
    }[cfg.kind]
    records, summary = driver(cfg)
    if cfg.out:
        write_records_csv(cfg.out, records)
    return records, summary


def lemma_checks(cfg: ExperimentConfig) -> dict:
    """Run the deterministic consequence checks and return their report."""
    cfg = ExperimentConfig(**{**cfg.__dict__, "kind": "lemma_checks"})
    _, summary = run_experiment(cfg)
    return summary


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------

def binomial_se(phat: float, n: int) -> float:
    return math.sqrt(max(phat * (1.0 - phat), 0.0) / n) if n else math.inf


def isolation_bound(eps: float, phi: float, m: int) -> float:
    return 2.0 * eps * phi * m


def _gap_bounds(records: Sequence[TrialRecord], kind: str,
                eps_grid: Iterable[float], phi: float, m: int) -> list[dict]:
    values = np.array([r.value for r in records if r.observable_kind == kind])
    out = []
    for eps in eps_grid:
        phat = float((values <= eps).mean()) if len(values) else math.nan
        bound = isolation_bound(eps, phi, m)
        se = binomial_se(phat, len(values))
        out.append({"eps": eps, "phat": phat, "se": se, "bound": bound,
                    "holds": bool(phat <= bound + 3.0 * se)})
    return out


def estimate_survival(records: Sequence[TrialRecord],
                      grid: Iterable[int], t_max: int | None = None,
                      kind: str = "tau") -> SurvivalCurve:
    """Empirical P(tau >= t) on the grid; censored trials count as >= t for
    every t <= t_max (their recorded value), which is conservative for
    lower-bound comparisons."""
    grid = tuple(grid)
    rel = [r for r in records if r.observable_kind == kind]
    if not rel:
        raise ValueError(f"no {kind!r} records")
    if t_max is not None and grid and grid[-1] > t_max:
        raise ValueError("grid exceeds t_max")
    values = np.array([r.value for r in rel])
    cens = np.array([r.censored for r in rel])
    n = len(values)
    t = np.array(grid, dtype=float)
    phat = (values[None, :] >= t[:, None]).mean(axis=1)
    se = np.array([binomial_se(p, n) for p in phat])
    return SurvivalCurve(t=t, phat=phat, se=se, n_trials=n,
                         censor_rate=float(cens.mean()))


def _curve_dict(curve: SurvivalCurve) -> list[dict]:
    return [{"t": float(t), "phat": float(p), "se": float(s)}
            for t, p, s in zip(curve.t, curve.phat, curve.se)]


def fit_tail_exponent(curve: SurvivalCurve,
                      t_range: tuple[float, float],
                      min_points: int = 5,
                      min_survivors: int = 50) -> TailFit:
    """Least-squares slope of log P(tau >= t) against log t over the grid
    points inside ``t_range`` that still have enough surviving trials, plus
    the constant of the 1/t model."""
    lo, hi = t_range
    mask = ((curve.t >= lo) & (curve.t <= hi)
            & (curve.phat * curve.n_trials >= min_survivors))
    if mask.sum() < min_points:
        raise ValueError(
            f"only {int(mask.sum())} usable grid points in [{lo}, {hi}]")
    x = np.log(curve.t[mask])
    y = np.log(curve.phat[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    c_hat = float(np.exp(np.mean(y + x)))
    return TailFit(slope=float(slope), c_hat=c_hat,
                   n_points=int(mask.sum()),
                   max_residual=float(np.abs(resid).max()))


# ---------------------------------------------------------------------------
# CSV records
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return format(x, ".17g")


def write_records_csv(path: str, records: Sequence[TrialRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in records:
            fh.write(
                f"{r.trial},{r.seed},{r.n},{r.m},{_fmt(r.phi)},{r.family},"
                f"{r.observable_kind},{_fmt(r.value)},{int(r.censored)},"
                f"{r.wall_ms}\n")


def read_records_csv(path: str) -> list[TrialRecord]:
    records: list[TrialRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected header {header!r}")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            if len(parts) != 10:
                raise ValueError(f"bad record line: {line!r}")
            records.append(TrialRecord(
                trial=int(parts[0]), seed=int(parts[1]), n=int(parts[2]),
                m=int(parts[3]), phi=float(parts[4]), family=parts[5],
                observable_kind=parts[6], value=float(parts[7]),
                censored=bool(int(parts[8])), wall_ms=float(parts[9])))
    return records


def csv_equal_modulo_wall(path_a: str, path_b: str) -> bool:
    """Byte equality of two record files, ignoring the wall-time column."""
    with open(path_a, "rb") as fa, open(path_b, "rb") as fb:
        for la, lb in zip(fa, fb, strict=True):
            if la.rsplit(b",", 1)[0] != lb.rsplit(b",", 1)[0]:
                return False
    return True
