"""Rendering of run artifacts: aligned text tables, per-table CSV files and
matplotlib figures written alongside the delimited plot data.

A completed self-training run directory contains trace.json, the bucket
tables and the assignment CSV; ``build_report`` turns those (plus an
optional comparison table) into report.txt, report.json and the four
fig*.csv / fig*.png pairs.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluate import balance_factor

FIGURE_DPI = 120


def write_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        return header, [row for row in reader]


def text_table(header: list[str], rows: list[list], title: str = "") -> str:
    """Fixed-width table with left-aligned first column."""
    cells = [[str(v) for v in row] for row in rows]
    widths = [len(h) for h in header]
    for row in cells:
        for j, v in enumerate(row):
            widths[j] = max(widths[j], len(v))

    def fmt(row: list[str]) -> str:
        parts = [row[0].ljust(widths[0])]
        parts += [row[j].rjust(widths[j]) for j in range(1, len(row))]
        return "  ".join(parts)

    lines = []
    if title:
        lines.append(title)
    lines.append(fmt(header))
    lines.append("  ".join("-" * w for w in widths))
    lines += [fmt(row) for row in cells]
    return "\n".join(lines) + "\n"


def _fmt_float(v: float) -> str:
    return "" if isinstance(v, float) and math.isnan(v) else repr(float(v))


def render_bucket_figure(header: list[str], rows: list[list], path: Path, title: str) -> None:
    """Grouped bars: per-class sample counts in each confidence bucket."""
    class_names = header[3:]
    names = [r[0] for r in rows]
    counts = np.array([[float(v) for v in r[3:]] for r in rows])
    fig, ax = plt.subplots(figsize=(8, 4.5))
    x = np.arange(len(names))
    width = 0.8 / max(len(class_names), 1)
    for j, cls in enumerate(class_names):
        ax.bar(x + j * width, counts[:, j], width, label=cls)
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("samples")
    ax.set_title(title)
    ax.legend(title="class")
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)


def render_counts_figure(rows: list[tuple[int, int, int]], path: Path) -> None:
    """Labelled vs unlabelled pool size across updating steps."""
    steps = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(steps, [r[1] for r in rows], marker="o", label="labelled")
    ax.plot(steps, [r[2] for r in rows], marker="s", label="unlabelled")
    ax.set_xlabel("updating step")
    ax.set_ylabel("samples")
    ax.set_title("Labelled and unlabelled pool sizes")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)


def render_accuracy_figure(rows: list[tuple[int, float, float]], path: Path) -> None:
    steps = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(steps, [r[1] for r in rows], marker="o", label="training pool")
    holdout = [r[2] for r in rows]
    if any(not math.isnan(v) for v in holdout):
        ax.plot(steps, holdout, marker="s", label="held-out split")
    ax.set_xlabel("updating step")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Accuracy per updating step")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)


def _require(run_dir: Path, names: list[str]) -> None:
    missing = [n for n in names if not (run_dir / n).exists()]
    if missing:
        raise FileNotFoundError(f"run directory {run_dir} is missing: {', '.join(missing)}")


def build_report(run_dir: str | Path, compare_dir: str | Path | None = None,
                 out_dir: str | Path | None = None) -> Path:
    """Assemble report.txt / report.json, fig CSVs and figure PNGs.

    ``run_dir`` must be a completed self-training run; ``compare_dir``
    optionally points at a classifier-comparison run whose table is folded
    in.  Returns the report directory (default: <run_dir>/report).
    """
    run_dir = Path(run_dir)
    _require(run_dir, ["trace.json", "buckets_labeled.csv", "buckets_pool.csv",
                       "assignment.csv"])
    trace = json.loads((run_dir / "trace.json").read_text(encoding="utf-8"))
    class_names = trace["class_names"]
    steps = trace["steps"]

    out = Path(out_dir) if out_dir is not None else run_dir / "report"
    out.mkdir(parents=True, exist_ok=True)

    sections: list[str] = []
    report_json: dict = {"class_names": class_names}

    # confidence distributions (labelled seed set / unlabelled pool)
    for key, csv_name, fig_name, title in (
            ("buckets_labeled", "buckets_labeled.csv", "fig1",
             "Confidence distribution, labelled set"),
            ("buckets_pool", "buckets_pool.csv", "fig2",
             "Confidence distribution, unlabelled pool")):
        header, rows = read_csv(run_dir / csv_name)
        body = [r for r in rows if r[0] != "sum"]
        write_csv(out / f"{fig_name}.csv", header, body)
        render_bucket_figure(header, body, out / f"{fig_name}.png", title)
        sections.append(text_table(header, rows, title))
        report_json[key] = {
            "rows": [{"performance": r[0], "range": r[1], "total": int(r[2]),
                      **{c: int(v) for c, v in zip(class_names, r[3:])}} for r in body],
            "total": sum(int(r[2]) for r in body),
        }

    # labelled composition after the first updating step
    seed_counts = np.asarray(trace["seed_class_counts"], dtype=np.int64)
    first = steps[0]
    after_first = seed_counts + np.asarray(first["admitted_per_class"], dtype=np.int64)
    comp_header = ["subset", "total", *class_names]
    comp_rows = [
        ["seed labelled", int(seed_counts.sum()), *[int(v) for v in seed_counts]],
        ["labelled after step 1", int(first["n_labeled"]), *[int(v) for v in after_first]],
        ["unlabelled after step 1", int(first["n_unlabeled"]), *[""] * len(class_names)],
    ]
    sections.append(text_table(comp_header, comp_rows, "Pool composition after first step"))
    report_json["after_first_step"] = {
        "labeled": int(first["n_labeled"]), "unlabeled": int(first["n_unlabeled"]),
        "labeled_per_class": [int(v) for v in after_first]}

    # dynamics
    counts_rows = [(s["step"], s["n_labeled"], s["n_unlabeled"]) for s in steps]
    acc_rows = [(s["step"], s["train_accuracy"],
                 s["holdout_accuracy"] if s["holdout_accuracy"] is not None else math.nan)
                for s in steps]
    write_csv(out / "fig3.csv", ["step", "labeled", "unlabeled"],
              [[a, b, c] for a, b, c in counts_rows])
    write_csv(out / "fig4.csv", ["step", "train_accuracy", "holdout_accuracy"],
              [[s, _fmt_float(t), _fmt_float(h)] for s, t, h in acc_rows])
    render_counts_figure(counts_rows, out / "fig3.png")
    render_accuracy_figure(acc_rows, out / "fig4.png")
    dyn_header = ["step", "labeled", "unlabeled", "admitted", "train_acc", "holdout_acc"]
    dyn_rows = [[s["step"], s["n_labeled"], s["n_unlabeled"],
                 sum(s["admitted_per_class"]), f"{s['train_accuracy']:.4f}",
                 "" if s["holdout_accuracy"] is None or math.isnan(s["holdout_accuracy"])
                 else f"{s['holdout_accuracy']:.4f}"] for s in steps]
    sections.append(text_table(dyn_header, dyn_rows, "Self-training dynamics"))
    report_json["dynamics"] = steps
    report_json["totals"] = {"pool": counts_rows[0][1] + counts_rows[0][2]}

    # final assignment summary
    asg_header, asg_rows = read_csv(run_dir / "assignment.csv")
    labels = [r[1] for r in asg_rows]
    strong = sum(1 for r in asg_rows if r[4] == "strong")
    counts = [labels.count(c) for c in class_names]
    bf = balance_factor(np.array(counts)) if asg_rows else float("nan")
    fin_header = ["measure", "value"]
    fin_rows = [["pool samples", len(asg_rows)],
                ["strong", strong],
                ["weak", len(asg_rows) - strong],
                *[[f"class {c}", n] for c, n in zip(class_names, counts)],
                ["balance factor", f"{bf:.4f}" if asg_rows else ""]]
    sections.append(text_table(fin_header, fin_rows, "Final pool assignment"))
    report_json["assignment"] = {"total": len(asg_rows), "strong": strong,
                                 "class_counts": counts,
                                 "balance_factor": bf if asg_rows else None}

    # classifier comparison, when available
    comparison_path = None
    if compare_dir is not None:
        comparison_path = Path(compare_dir) / "comparison.csv"
        if not comparison_path.exists():
            raise FileNotFoundError(f"comparison run is missing: {comparison_path}")
    elif (run_dir / "comparison.csv").exists():
        comparison_path = run_dir / "comparison.csv"
    if comparison_path is not None:
        cmp_header, cmp_rows = read_csv(comparison_path)
        write_csv(out / "comparison.csv", cmp_header, cmp_rows)
        sections.append(text_table(cmp_header, cmp_rows, "Classifier comparison on the pool"))
        report_json["comparison"] = {
            "rows": [dict(zip(cmp_header, r)) for r in cmp_rows],
            "count_total_per_row": [sum(int(v) for v in r[1:1 + len(class_names)])
                                    for r in cmp_rows]}

    (out / "report.txt").write_text("\n".join(sections), encoding="utf-8")
    (out / "report.json").write_text(json.dumps(report_json, indent=2) + "\n",
                                     encoding="utf-8")
    return out
