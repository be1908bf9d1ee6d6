"""Report rendering: plain-text tables, TSV files, and matplotlib figures.

Every report directory gets the delimited data (TSV/JSON) next to the
rendered figure so results stay machine-readable.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import IoError
from .evalstats import CriterionOutcome, SbSExperiment
from .records import DatasetManifest


def write_tsv(path: str | Path, header: Sequence[str], rows: Sequence[Sequence[object]]) -> None:
    lines = ["\t".join(header)]
    lines += ["\t".join(str(cell) for cell in row) for row in rows]
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# --- pipeline funnel ---

def funnel_text(manifest: DatasetManifest) -> str:
    lines = ["stage funnel:"]
    for report in manifest.stage_log:
        lines.append(
            f"  {report.stage_name:<12} {report.input_count:>9} -> {report.output_count:>9}"
        )
    lines.append(f"  final record count: {len(manifest.records)}")
    return "\n".join(lines)


def write_pipeline_report(manifest: DatasetManifest, outdir: str | Path) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = [
        (r.stage_name, r.input_count, r.output_count)
        for r in manifest.stage_log
    ]
    write_tsv(outdir / "stage_log.tsv", ("stage", "input_count", "output_count"), rows)

    if rows:
        names = [r[0] for r in rows]
        outputs = [r[2] for r in rows]
        inputs = [rows[0][1]] + outputs[:-1]
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.bar(range(len(names)), inputs, color="#c9d7e8", label="input")
        ax.bar(range(len(names)), outputs, color="#3b6ea5", label="output")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=30, ha="right")
        ax.set_ylabel("records")
        ax.set_yscale("log")
        ax.set_title("filtering funnel")
        ax.legend()
        fig.tight_layout()
        fig.savefig(outdir / "funnel.png", dpi=150)
        plt.close(fig)


# --- human evaluation ---

def _verdict(outcome: CriterionOutcome) -> str:
    if not outcome.significant:
        return "no significant change"
    return f"{outcome.direction} (significant)"


def eval_table_text(experiment: SbSExperiment, outcomes: Sequence[CriterionOutcome]) -> str:
    lines = [
        f"side-by-side win rates: {experiment.model_a} (A) vs {experiment.model_b} (B)",
        f"  {'criterion':<12} {'wins_a':>6} {'wins_b':>6} {'ties':>5} "
        f"{'win_rate_a':>10} {'p_value':>10}  verdict",
    ]
    for o in outcomes:
        lines.append(
            f"  {o.criterion:<12} {o.wins_a:>6} {o.wins_b:>6} {o.ties:>5} "
            f"{o.win_rate_a:>10.3f} {o.p_value:>10.3g}  {_verdict(o)}"
        )
    return "\n".join(lines)


def write_eval_report(
    experiment: SbSExperiment,
    outcomes: Sequence[CriterionOutcome],
    outdir: str | Path,
) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_tsv(
        outdir / "outcomes.tsv",
        ("criterion", "wins_a", "wins_b", "ties", "win_rate_a", "p_value", "significant", "direction"),
        [
            (o.criterion, o.wins_a, o.wins_b, o.ties, o.win_rate_a, o.p_value, o.significant, o.direction)
            for o in outcomes
        ],
    )
    payload = {
        "experiment_id": experiment.experiment_id,
        "model_a": experiment.model_a,
        "model_b": experiment.model_b,
        "outcomes": [o.to_jsonable() for o in outcomes],
    }
    (outdir / "outcomes.json").write_text(
        json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )

    if outcomes:
        # Green: significant win for A; red: significant loss; gray: neither.
        colors = []
        for o in outcomes:
            if o.significant and o.direction == "a_better":
                colors.append("#3a8f3a")
            elif o.significant and o.direction == "b_better":
                colors.append("#b03a3a")
            else:
                colors.append("#9a9a9a")
        fig, ax = plt.subplots(figsize=(6, 3.5))
        xs = range(len(outcomes))
        ax.bar(xs, [o.win_rate_a for o in outcomes], color=colors)
        ax.axhline(0.5, color="black", linewidth=0.8, linestyle="--")
        ax.set_xticks(list(xs))
        ax.set_xticklabels([o.criterion for o in outcomes], rotation=20, ha="right")
        ax.set_ylim(0, 1)
        ax.set_ylabel(f"win rate of {experiment.model_a}")
        ax.set_title(f"{experiment.model_a} vs {experiment.model_b}")
        fig.tight_layout()
        fig.savefig(outdir / "win_rates.png", dpi=150)
        plt.close(fig)


# --- automated metrics ---

def metrics_table_text(rows: Sequence[tuple[str, float, int]]) -> str:
    lines = [f"  {'metric':<14} {'mean':>10} {'count':>7}"]
    for name, mean, count in rows:
        lines.append(f"  {name:<14} {mean:>10.4g} {count:>7}")
    return "automated metrics:\n" + "\n".join(lines)


def write_metrics_report(rows: Sequence[tuple[str, float, int]], outdir: str | Path) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_tsv(outdir / "metrics.tsv", ("metric", "mean", "count"), rows)
    if rows:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        xs = range(len(rows))
        ax.bar(xs, [r[1] for r in rows], color="#3b6ea5")
        ax.set_xticks(list(xs))
        ax.set_xticklabels([r[0] for r in rows], rotation=20, ha="right")
        ax.set_ylabel("mean score")
        ax.set_title("automated metrics")
        fig.tight_layout()
        fig.savefig(outdir / "metrics.png", dpi=150)
        plt.close(fig)
