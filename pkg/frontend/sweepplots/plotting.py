"""Render trade-off figures from sweep CSV files.

This package only reads CSV values produced elsewhere; it never recomputes
probabilities. Two figure kinds are supported:

- ``tradeoff``: failure probability vs auditor count, one curve per adversary
  rate (gamma for privacy sweeps, beta for interrupt sweeps).
- ``minimal``: minimal auditor count vs gamma, one line per beta, with
  infeasible cells (n_audit = -1) and cells above the display cutoff omitted.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# Zero probabilities are clamped here so they survive a log-scale axis.
DELTA_FLOOR = 1e-300
# Minimal-auditor-count cells above this are omitted from the figure.
MINIMAL_CUTOFF = 10_000

REQUIRED_COLUMNS = {
    "gamma", "beta", "kappa", "n", "n_round", "n_audit", "tau",
    "delta_privacy", "delta_interrupt",
}


class MissingColumns(Exception):
    """The CSV header lacks columns the figure needs."""


@dataclass
class FigureSpec:
    csv: Path
    kind: str  # "tradeoff" | "minimal"
    out: Path
    logy: bool = False
    group_by: str | None = None  # default chosen from the data


def load_rows(path: Path | str) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = set(reader.fieldnames or ())
        missing = REQUIRED_COLUMNS - header
        if missing:
            raise MissingColumns(f"missing columns: {sorted(missing)}")
        rows = []
        for raw in reader:
            row = dict(raw)
            for key in ("gamma", "beta", "kappa", "delta_privacy",
                        "delta_interrupt"):
                row[key] = float(row[key])
            for key in ("n", "n_round", "n_audit", "tau"):
                row[key] = int(row[key])
            rows.append(row)
    return rows


def _tradeoff_columns(rows: list[dict], group_by: str | None):
    """Pick the grouping column and the delta column it varies."""
    if group_by is None:
        group_by = "gamma" if any(r["gamma"] > 0 for r in rows) else "beta"
    value = "delta_privacy" if group_by == "gamma" else "delta_interrupt"
    return group_by, value


def plot_tradeoff(rows: list[dict], spec: FigureSpec) -> Path:
    group_by, value = _tradeoff_columns(rows, spec.group_by)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for g in sorted({r[group_by] for r in rows}):
        series = sorted(
            (r for r in rows if r[group_by] == g), key=lambda r: r["n_audit"]
        )
        xs = [r["n_audit"] for r in series]
        ys = [max(r[value], DELTA_FLOOR) for r in series]
        ax.plot(xs, ys, marker=".", label=f"{group_by}={g:g}")
    if spec.logy:
        ax.set_yscale("log")
    ax.set_xlabel("auditors per round")
    ax.set_ylabel(value.replace("_", " "))
    ax.legend()
    fig.tight_layout()
    fig.savefig(spec.out)
    plt.close(fig)
    return Path(spec.out)


def plot_minimal(rows: list[dict], spec: FigureSpec) -> Path:
    shown = [
        r for r in rows if 0 <= r["n_audit"] <= MINIMAL_CUTOFF
    ]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if not shown:
        ax.annotate(
            "all points infeasible or above cutoff",
            xy=(0.5, 0.5), xycoords="axes fraction", ha="center",
        )
    else:
        for b in sorted({r["beta"] for r in shown}):
            series = sorted(
                (r for r in shown if r["beta"] == b),
                key=lambda r: r["gamma"],
            )
            ax.plot(
                [r["gamma"] for r in series],
                [r["n_audit"] for r in series],
                marker="o", label=f"beta={b:g}",
            )
        ax.legend()
    if spec.logy:
        ax.set_yscale("log")
    ax.set_xlabel("gamma")
    ax.set_ylabel("minimal auditors per round")
    fig.tight_layout()
    fig.savefig(spec.out)
    plt.close(fig)
    return Path(spec.out)


def render(spec: FigureSpec) -> Path:
    rows = load_rows(spec.csv)
    if spec.kind == "tradeoff":
        return plot_tradeoff(rows, spec)
    if spec.kind == "minimal":
        return plot_minimal(rows, spec)
    raise ValueError(f"unknown figure kind {spec.kind!r}")
