"""Render experiment records into delimited summaries and matplotlib figures.

The harness itself emits only the per-trial CSV; this module is the report
path that turns a records file into survival/tail summaries (CSV) plus
publication-style PNG figures next to them.
"""

from __future__ import annotations

import math
import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from bpsmooth.experiments import (
    SurvivalCurve,
    TrialRecord,
    binomial_se,
    default_t_grid,
    estimate_survival,
    fit_tail_exponent,
    isolation_bound,
)

_RC = {
    "figure.dpi": 110,
    "font.size": 10,
    "axes.grid": True,
    "grid.linestyle": "--",
    "grid.alpha": 0.35,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path: str) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=200)
    plt.close(fig)


def survival_figure(curve: SurvivalCurve, fit=None, title: str = ""):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.2, 3.8))
        mask = curve.phat > 0
        ax.errorbar(curve.t[mask], curve.phat[mask],
                    yerr=curve.se[mask], fmt="o", ms=3.5, lw=1,
                    capsize=2, label="empirical")
        if fit is not None:
            ts = np.array([curve.t[mask].min(), curve.t[mask].max()])
            ax.plot(ts, fit.c_hat / ts, "-", lw=1.2,
                    label=f"{fit.c_hat:.3g}/t (slope {fit.slope:.2f})")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("iterations t")
        ax.set_ylabel("P(tau >= t)")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
    return fig


def gap_tail_figure(values: np.ndarray, eps_grid: Sequence[float],
                    phi: float, m: int, label: str):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.2, 3.8))
        finite = values[np.isfinite(values)]
        grid = np.array(sorted(eps_grid)) if len(eps_grid) else np.linspace(
            1e-3, max(finite.max(), 1e-3), 30)
        phat = [(finite <= e).mean() for e in grid]
        ax.plot(grid, phat, "o-", ms=3.5, lw=1, label=f"P({label} <= eps)")
        ax.plot(grid, [min(1.0, isolation_bound(e, phi, m)) for e in grid],
                "--", lw=1.2, label=f"2 eps phi m (phi={phi:g}, m={m})")
        ax.set_xlabel("eps")
        ax.set_ylabel("probability")
        ax.legend(frameon=False)
    return fig


def gap_hist_figure(values: np.ndarray, label: str):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.2, 3.8))
        finite = values[np.isfinite(values)]
        ax.hist(finite, bins=60, color="#0C5DA5", alpha=0.85)
        ax.set_xlabel(label)
        ax.set_ylabel("trials")
    return fig


def render_report(records: Sequence[TrialRecord], out_dir: str,
                  fit_range: tuple[float, float] | None = None,
                  eps_grid: Sequence[float] = ()) -> list[str]:
    """Write summary CSVs and figures for whatever observables the records
    contain; returns the created paths."""
    os.makedirs(out_dir, exist_ok=True)
    kinds = {r.observable_kind for r in records}
    written: list[str] = []

    if "tau" in kinds:
        t_max = int(max(r.value for r in records if r.observable_kind == "tau"))
        curve = estimate_survival(records, default_t_grid(t_max), t_max=t_max)
        path = os.path.join(out_dir, "survival.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("t,phat,se\n")
            for t, p, s in zip(curve.t, curve.phat, curve.se):
                fh.write(f"{t:.17g},{p:.17g},{s:.17g}\n")
        written.append(path)
        fit = None
        if fit_range is not None:
            try:
                fit = fit_tail_exponent(curve, fit_range)
            except ValueError:
                fit = None
        fam = records[0].family
        fig_path = os.path.join(out_dir, "survival_loglog.png")
        _save(survival_figure(curve, fit, title=fam), fig_path)
        written.append(fig_path)

    for kind, label in (("delta", "matching gap"),
                        ("flow_gap", "flow gap"),
                        ("cycle_gap", "residual cycle gap")):
        if kind not in kinds:
            continue
        sel = [r for r in records if r.observable_kind == kind]
        values = np.array([r.value for r in sel])
        phi = sel[0].phi
        m = max(r.m for r in sel)
        path = os.path.join(out_dir, f"{kind}_tail.csv")
        grid = list(eps_grid) or [x * values[np.isfinite(values)].max() / 20
                                  for x in range(1, 21)]
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("eps,phat,se,bound\n")
            for e in grid:
                p = float((values <= e).mean())
                fh.write(f"{e:.17g},{p:.17g},"
                         f"{binomial_se(p, len(values)):.17g},"
                         f"{isolation_bound(e, phi, m):.17g}\n")
        written.append(path)
        fig_path = os.path.join(out_dir, f"{kind}_tail.png")
        _save(gap_tail_figure(values, grid, phi, m, kind), fig_path)
        written.append(fig_path)
        hist_path = os.path.join(out_dir, f"{kind}_hist.png")
        _save(gap_hist_figure(values, label), hist_path)
        written.append(hist_path)

    if "event" in kinds:
        sel = [r for r in records if r.observable_kind == "event"]
        hits = sum(int(r.value) for r in sel)
        path = os.path.join(out_dir, "event_freq.csv")
        rate = hits / len(sel)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("trials,hits,rate,se\n")
            fh.write(f"{len(sel)},{hits},{rate:.17g},"
                     f"{binomial_se(rate, len(sel)):.17g}\n")
        written.append(path)

    return written
