"""CSV/JSONL outputs and matplotlib figures for simulation runs."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .gridsim import (ExperimentLog, Summary, cumulative_series, per_host_series,  # noqa: E402
                      per_resource_shares)

SUMMARY_HEADER = ["strategy", "completion_s", "budget_utilised", "start_s", "jobs_done",
                  "total_jobs", "within_deadline", "within_budget"]

STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 11,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
}


def summary_fields(s: Summary) -> list:
    return s.row().split(",") + [_n(s.start), s.jobs_done, s.total_jobs,
                                 int(s.within_deadline), int(s.within_budget)]


def _n(x):
    return int(x) if float(x).is_integer() else round(x, 3)


def write_summary(summaries: Sequence[Summary], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for s in summaries:
            w.writerow(summary_fields(s))


def write_cumulative(log: ExperimentLog, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_seconds", "jobs_completed", "spent"])
        for t, n, spent in cumulative_series(log):
            w.writerow([repr(t), n, repr(spent)])


def write_shares(log: ExperimentLog, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["host", "jobs_completed"])
        for host, n in per_resource_shares(log).items():
            w.writerow([host, n])


def plot_cumulative(log: ExperimentLog, path, title: str | None = None) -> None:
    """Jobs completed over time, one step curve per resource plus the total."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        for host, series in per_host_series(log).items():
            if series:
                t, n = zip(*series)
                ax.step((0,) + t, (0,) + n, where="post", label=host)
        total = cumulative_series(log)
        if total:
            t, n, _ = zip(*total)
            ax.step((0,) + t, (0,) + n, where="post", color="k", lw=1.5, label="all")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("jobs completed")
        ax.set_title(title or f"{log.strategy} strategy")
        ax.legend(loc="upper left", frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_shares(log: ExperimentLog, path) -> None:
    shares = per_resource_shares(log)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 3.2))
        hosts = list(shares)
        ax.barh(hosts, [shares[h] for h in hosts], color="tab:blue")
        ax.set_xlabel("jobs completed")
        ax.set_title(f"{log.strategy} strategy: jobs per resource")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_comparison(logs: Sequence[ExperimentLog], path) -> None:
    """Total completions and spend against time for several strategies."""
    with plt.rc_context(STYLE):
        fig, (ax_n, ax_c) = plt.subplots(1, 2, figsize=(9.6, 3.6))
        for log in logs:
            rows = cumulative_series(log)
            if not rows:
                continue
            t, n, spent = zip(*rows)
            ax_n.step((0,) + t, (0,) + n, where="post", label=log.strategy)
            ax_c.step((0,) + t, (0,) + spent, where="post", label=log.strategy)
        ax_n.set_xlabel("time (s)")
        ax_n.set_ylabel("jobs completed")
        ax_c.set_xlabel("time (s)")
        ax_c.set_ylabel("spent (G$)")
        ax_n.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def write_run(log: ExperimentLog, out_dir, figures: bool = True) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "events.jsonl").write_text(log.to_jsonl())
    write_summary([log.summary], out / "summary.csv")
    write_cumulative(log, out / "cumulative.csv")
    write_shares(log, out / "shares.csv")
    if figures:
        plot_cumulative(log, out / "cumulative.png")
        plot_shares(log, out / "shares.png")
    return out
