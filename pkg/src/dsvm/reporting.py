"""Experiment report container, delimited output, and figure rendering.

Reports are written as CSV with the full provenance (config snapshot and
seed) embedded in '#'-prefixed header lines, so re-running the same command
reproduces the file byte for byte.  Each report also renders to a PNG figure
next to the CSV.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


@dataclass(frozen=True)
class ReportRow:
    """One (method, setting) cell: accuracy and error always sum to 100."""

    method: str
    setting: str
    mean_accuracy: float
    std: float
    rounds: int
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.std < 0:
            raise ValueError("std must be nonnegative")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")

    @property
    def mean_error(self) -> float:
        return 100.0 - self.mean_accuracy


@dataclass(frozen=True)
class ExperimentReport:
    name: str
    rows: tuple[ReportRow, ...]
    provenance: dict

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_to_csv(report: ExperimentReport) -> str:
    lines = [f"# experiment={report.name}"]
    for key in sorted(report.provenance):
        lines.append(f"# {key}={_fmt(report.provenance[key])}")
    extra_keys = sorted({key for row in report.rows for key in row.extras})
    header = ["method", "setting", "mean_accuracy", "std", "mean_error", "rounds"]
    lines.append(",".join(header + extra_keys))
    for row in report.rows:
        cells = [
            row.method,
            row.setting,
            repr(float(row.mean_accuracy)),
            repr(float(row.std)),
            repr(float(row.mean_error)),
            str(row.rounds),
        ]
        for key in extra_keys:
            cells.append(_fmt(row.extras[key]) if key in row.extras else "")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_report_csv(report: ExperimentReport, path) -> None:
    Path(path).write_text(report_to_csv(report), encoding="ascii")


def _grouped_bars(ax, report: ExperimentReport, value_attr: str, ylabel: str):
    settings = sorted({row.setting for row in report.rows})
    methods = sorted({row.method for row in report.rows})
    width = 0.8 / max(len(methods), 1)
    for i, method in enumerate(methods):
        xs, ys, errs = [], [], []
        for j, setting in enumerate(settings):
            for row in report.rows:
                if row.method == method and row.setting == setting:
                    xs.append(j + i * width)
                    ys.append(getattr(row, value_attr))
                    errs.append(row.std)
                    break
        ax.bar(xs, ys, width=width, yerr=errs, capsize=3, label=method)
    ax.set_xticks([j + 0.4 - width / 2 for j in range(len(settings))])
    ax.set_xticklabels(settings)
    ax.set_ylabel(ylabel)
    ax.legend()


def _curves(ax, report: ExperimentReport, x_key: str, xlabel: str):
    methods = sorted({row.method for row in report.rows})
    settings = sorted({row.setting for row in report.rows})
    x_values = sorted({float(row.extras[x_key]) for row in report.rows})
    positions = {v: i for i, v in enumerate(x_values)}
    for method in methods:
        for setting in settings:
            rows = [
                row
                for row in report.rows
                if row.method == method and row.setting == setting
            ]
            if not rows:
                continue
            rows.sort(key=lambda row: float(row.extras[x_key]))
            xs = [positions[float(row.extras[x_key])] for row in rows]
            ys = [row.mean_accuracy for row in rows]
            errs = [row.std for row in rows]
            label = method if len(settings) == 1 else f"{method} ({setting})"
            ax.errorbar(xs, ys, yerr=errs, marker="o", capsize=3, label=label)
    ax.set_xticks(range(len(x_values)))
    ax.set_xticklabels([_fmt(v) for v in x_values])
    ax.set_xlabel(xlabel)
    ax.set_ylabel("accuracy (%)")
    ax.legend()


def render_report_figure(report: ExperimentReport, path) -> None:
    """Render the report's natural figure (curves or grouped bars) to a file."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    if report.name == "noise_curve":
        _curves(ax, report, "sigma", "noise standard deviation")
        ax.set_title("Accuracy under feature noise")
    elif report.name == "lambda3_sweep":
        _curves(ax, report, "lambda3", "mean-regularization weight")
        ax.set_title("Sensitivity to the mean-regularization weight")
    elif report.name.startswith("mnist"):
        _grouped_bars(ax, report, "mean_error", "test error (%)")
        ax.set_title(f"{report.name}: classification error")
    else:
        _grouped_bars(ax, report, "mean_accuracy", "accuracy (%)")
        ax.set_title(f"{report.name}: classification accuracy")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def figure_path_for(csv_path) -> Path:
    return Path(csv_path).with_suffix(".png")
