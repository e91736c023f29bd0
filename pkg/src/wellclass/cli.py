"""Command-line pipeline: generate data, train, self-train, compare
classifiers and render reports.

Every subcommand resolves its full parameter set, writes it as
resolved.json next to its outputs and derives the run directory name from
a hash of that config, so reruns of the same experiment land in the same
place with bitwise-identical artifacts.  A previous run can be reproduced
with ``--config <resolved.json>``; explicit flags override config values.

Exit codes: 0 success, 1 domain error (single-line message on stderr),
2 usage error.  SELFTRAIN_THREADS caps fit parallelism in ``compare``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .baselines import (BaggedTreesClassifier, GaussianNbClassifier, KnnClassifier,
                        LdaClassifier, LinearSvmClassifier, classify_all)
from .data import (CsvSchema, Dataset, UNLABELED, apply_norm, concat, derive_seed,
                   fit_norm, load_csv, save_csv)
from .evaluate import (MlpClassifier, agreement_count, balance_factor, class_counts,
                       routing_table, run_cv)
from .mlp import MlpConfig, MlpModel, forward_batch, init_model, train
from .report import build_report, text_table, write_csv
from .selftrain import (Assignment, DEFAULT_SCHEME, PolicySchedule, bucketize,
                        default_schedule, emit_dynamics, run_selftrain)
from .synth import blob_config, generate, save_truth_csv


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SELFTRAIN_THREADS", "1")))
    except ValueError:
        return 1


def _config_hash(resolved: dict) -> str:
    canon = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def _make_run_dir(out: str, resolved: dict) -> Path:
    run_dir = Path(out) / f"{resolved['command']}-{_config_hash(resolved)}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "resolved.json").write_text(
        json.dumps(resolved, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return run_dir


def _load_config_file(args) -> dict:
    if getattr(args, "config", None) is None:
        return {}
    cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if cfg.get("command") != args.command:
        raise ValueError(f"--config is for command {cfg.get('command')!r}, "
                         f"not {args.command!r}")
    return cfg


def _pick(args, cfg: dict, key: str, default):
    value = getattr(args, key, None)
    if value is None:
        value = cfg.get(key, default)
    return value


def _require_path(args, cfg: dict, key: str) -> str:
    value = _pick(args, cfg, key, None)
    if value is None:
        raise ValueError(f"--{key} is required (as a flag or via --config)")
    return str(Path(value).resolve())


def _parse_counts(text, n_classes: int) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        counts = tuple(int(v) for v in text)
    else:
        counts = tuple(int(v) for v in str(text).split(","))
    if len(counts) != n_classes:
        raise ValueError(f"expected {n_classes} per-class counts, got {len(counts)}")
    return counts


def _parse_classes(value) -> tuple[str, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(value)
    return tuple(s.strip() for s in str(value).split(","))


def _load_labeled(path: str, classes: tuple[str, ...]) -> Dataset:
    ds = load_csv(path, CsvSchema(class_names=classes))
    labeled = ds.labeled_subset()
    if labeled.n == 0:
        raise ValueError(f"{path}: no labelled rows")
    return labeled


def _load_pool(path: str, classes: tuple[str, ...], d: int) -> Dataset:
    ds = load_csv(path, CsvSchema(class_names=classes))
    if ds.d != d:
        raise ValueError(f"{path}: pool width {ds.d} does not match labelled width {d}")
    # any labels in the pool file are ignored; every row is treated as unlabelled
    return Dataset(ds.features, np.full(ds.n, UNLABELED, dtype=np.int64),
                   classes, ds.feature_names, ds.tag)


def _normalize_pair(labeled: Dataset, pool: Dataset, method: str):
    if method == "none":
        return labeled, pool, None
    params = fit_norm(concat([labeled, pool]) if pool.n else labeled, method)
    return apply_norm(params, labeled), apply_norm(params, pool), params


def _mlp_kwargs(resolved: dict) -> dict:
    return dict(hidden=resolved["hidden"], epochs=resolved["epochs"],
                eta_hidden_scale=resolved["eta_hidden_scale"],
                eta_output_scale=resolved["eta_output_scale"],
                loss_threshold=resolved["loss_threshold"])


def _holdout_split(labeled: Dataset, frac: float, seed: int):
    """Carve a stratified holdout of roughly ``frac`` per class; returns
    (train, holdout-or-None)."""
    if frac <= 0.0:
        return labeled, None
    rng = np.random.default_rng(derive_seed(seed, 9000))
    hold_idx: list[np.ndarray] = []
    for cls in range(labeled.n_classes):
        members = np.flatnonzero(labeled.labels == cls)
        n_hold = int(frac * members.size)
        if n_hold and members.size - n_hold >= 1:
            rng.shuffle(members)
            hold_idx.append(members[:n_hold])
    if not hold_idx:
        return labeled, None
    held = np.sort(np.concatenate(hold_idx))
    keep = np.setdiff1d(np.arange(labeled.n), held)
    return labeled.subset(keep), labeled.subset(held)


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = _load_config_file(args)
    classes = _parse_classes(_pick(args, cfg, "classes", "D,W,I,O"))
    resolved = {
        "command": "gen",
        "seed": int(_pick(args, cfg, "seed", 0)),
        "d": int(_pick(args, cfg, "d", 17)),
        "classes": list(classes),
        "labeled_counts": list(_parse_counts(_pick(args, cfg, "labeled_counts",
                                                   "162,50,107,177"), len(classes))),
        "pool_counts": list(_parse_counts(_pick(args, cfg, "pool_counts",
                                                "1068,14,13,121"), len(classes))),
        "separation": float(_pick(args, cfg, "separation", 6.0)),
        "std": float(_pick(args, cfg, "std", 1.0)),
    }
    run_dir = _make_run_dir(args.out, resolved)
    synth_cfg = blob_config(tuple(resolved["labeled_counts"]), tuple(resolved["pool_counts"]),
                            d=resolved["d"], separation=resolved["separation"],
                            std=resolved["std"], class_names=classes,
                            seed=resolved["seed"])
    labeled, pool, truth = generate(synth_cfg)
    save_csv(labeled, run_dir / "labeled.csv")
    save_csv(pool, run_dir / "pool.csv")
    save_truth_csv(truth, classes, run_dir / "truth.csv")
    (run_dir / "synth_config.json").write_text(synth_cfg.to_json() + "\n", encoding="utf-8")
    print(f"wrote labeled.csv ({labeled.n} rows), pool.csv ({pool.n} rows) to {run_dir}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config_file(args)
    classes = _parse_classes(_pick(args, cfg, "classes", "D,W,I,O"))
    resolved = {
        "command": "train",
        "labeled": _require_path(args, cfg, "labeled"),
        "classes": list(classes),
        "seed": int(_pick(args, cfg, "seed", 0)),
        "epochs": int(_pick(args, cfg, "epochs", 2000)),
        "hidden": int(_pick(args, cfg, "hidden", 50)),
        "eta_hidden_scale": float(_pick(args, cfg, "eta_hidden_scale", 50.0)),
        "eta_output_scale": float(_pick(args, cfg, "eta_output_scale", 35.0)),
        "loss_threshold": float(_pick(args, cfg, "loss_threshold", 0.0)),
        "normalize": str(_pick(args, cfg, "normalize", "minmax")),
        "k": int(_pick(args, cfg, "k", 5)),
        "repeats": int(_pick(args, cfg, "repeats", 0)),
    }
    run_dir = _make_run_dir(args.out, resolved)
    labeled = _load_labeled(resolved["labeled"], classes)
    if resolved["normalize"] != "none":
        params = fit_norm(labeled, resolved["normalize"])
        labeled = apply_norm(params, labeled)
        (run_dir / "norm.json").write_text(params.to_json() + "\n", encoding="utf-8")
    mlp_cfg = MlpConfig(d=labeled.d, n_classes=len(classes), seed=resolved["seed"],
                        **_mlp_kwargs(resolved))
    model, trace = train(init_model(mlp_cfg), labeled)
    model.save(run_dir / "model.json")
    write_csv(run_dir / "trace.csv", ["epoch", "loss"],
              [[i + 1, repr(v)] for i, v in enumerate(trace.losses)])
    if resolved["repeats"] > 0:
        stats = run_cv(MlpClassifier(**_mlp_kwargs(resolved)), labeled,
                       k=resolved["k"], repeats=resolved["repeats"], seed=resolved["seed"])
        write_csv(run_dir / "accuracy_stats.csv",
                  ["algorithm", "mean_accuracy", "max_accuracy", "min_accuracy"],
                  [["nn_supervised", *stats.cells()]])
    print(f"trained {trace.epochs_run} epochs (stop: {trace.stop_reason}), "
          f"final loss {trace.losses[-1]:.6f}; artifacts in {run_dir}")
    return 0


def cmd_selftrain(args) -> int:
    cfg = _load_config_file(args)
    classes = _parse_classes(_pick(args, cfg, "classes", "D,W,I,O"))
    policy_arg = _pick(args, cfg, "policy", None)
    if getattr(args, "policy", None) is not None:
        schedule = PolicySchedule.load(args.policy)
    elif isinstance(policy_arg, list):
        schedule = PolicySchedule.from_json(json.dumps(policy_arg))
    else:
        schedule = default_schedule(classes)
    resolved = {
        "command": "selftrain",
        "labeled": _require_path(args, cfg, "labeled"),
        "pool": _require_path(args, cfg, "pool"),
        "classes": list(classes),
        "seed": int(_pick(args, cfg, "seed", 0)),
        "epochs": int(_pick(args, cfg, "epochs", 2000)),
        "hidden": int(_pick(args, cfg, "hidden", 50)),
        "eta_hidden_scale": float(_pick(args, cfg, "eta_hidden_scale", 50.0)),
        "eta_output_scale": float(_pick(args, cfg, "eta_output_scale", 35.0)),
        "loss_threshold": float(_pick(args, cfg, "loss_threshold", 0.0)),
        "normalize": str(_pick(args, cfg, "normalize", "minmax")),
        "max_steps": int(_pick(args, cfg, "max_steps", 100)),
        "holdout_frac": float(_pick(args, cfg, "holdout_frac", 0.0)),
        "warm_start": bool(_pick(args, cfg, "warm_start", True)),
        "policy": json.loads(schedule.to_json()),
    }
    run_dir = _make_run_dir(args.out, resolved)
    labeled = _load_labeled(resolved["labeled"], classes)
    pool = _load_pool(resolved["pool"], classes, labeled.d)
    labeled, pool, params = _normalize_pair(labeled, pool, resolved["normalize"])
    if params is not None:
        (run_dir / "norm.json").write_text(params.to_json() + "\n", encoding="utf-8")
    seed_set, holdout = _holdout_split(labeled, resolved["holdout_frac"], resolved["seed"])

    buckets: dict[str, object] = {}

    def capture_first_step(step_no: int, model: MlpModel) -> None:
        if step_no != 1:
            return
        lab_probs, _ = forward_batch(model, seed_set.features)
        buckets["labeled"] = bucketize(lab_probs, DEFAULT_SCHEME, classes)
        pool_probs, _ = forward_batch(model, pool.features) if pool.n else (np.zeros((0, len(classes))), None)
        buckets["pool"] = bucketize(pool_probs, DEFAULT_SCHEME, classes)

    mlp_cfg = MlpConfig(d=seed_set.d, n_classes=len(classes), seed=resolved["seed"],
                        **_mlp_kwargs(resolved))
    model, assignment, trace = run_selftrain(
        seed_set, pool, mlp_cfg, schedule=schedule, max_steps=resolved["max_steps"],
        seed=resolved["seed"], holdout=holdout, warm_start=resolved["warm_start"],
        on_step=capture_first_step)

    model.save(run_dir / "model.json")
    assignment.save_csv(run_dir / "assignment.csv")
    for name in ("labeled", "pool"):
        table = buckets[name]
        write_csv(run_dir / f"buckets_{name}.csv", table.header(), table.rows())
    counts_rows, acc_rows = emit_dynamics(trace)
    write_csv(run_dir / "dynamics_counts.csv", ["step", "labeled", "unlabeled"],
              [list(r) for r in counts_rows])
    write_csv(run_dir / "dynamics_accuracy.csv", ["step", "train_accuracy", "holdout_accuracy"],
              [[s, repr(t), "" if math.isnan(h) else repr(h)] for s, t, h in acc_rows])
    steps_json = []
    for s in trace.steps:
        entry = asdict(s)
        entry["admitted_per_class"] = list(entry["admitted_per_class"])
        if math.isnan(entry["holdout_accuracy"]):
            entry["holdout_accuracy"] = None
        steps_json.append(entry)
    (run_dir / "trace.json").write_text(json.dumps({
        "class_names": list(classes),
        "seed_class_counts": [int(v) for v in seed_set.class_counts()],
        "total": seed_set.n + pool.n,
        "steps": steps_json,
    }, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"self-training ran {len(trace)} step(s); "
          f"{int(assignment.strong.sum())}/{assignment.n} pool samples admitted strong; "
          f"artifacts in {run_dir}")
    return 0


# Table row order for the comparison outputs.
_COMPARE_ORDER = ("discriminant_analysis", "knn", "naive_bayes", "ensemble", "svm",
                  "nn_supervised")


def cmd_compare(args) -> int:
    cfg = _load_config_file(args)
    classes = _parse_classes(_pick(args, cfg, "classes", "D,W,I,O"))
    reference = _pick(args, cfg, "reference", None)
    resolved = {
        "command": "compare",
        "labeled": _require_path(args, cfg, "labeled"),
        "pool": _require_path(args, cfg, "pool"),
        "classes": list(classes),
        "seed": int(_pick(args, cfg, "seed", 0)),
        "epochs": int(_pick(args, cfg, "epochs", 2000)),
        "hidden": int(_pick(args, cfg, "hidden", 50)),
        "eta_hidden_scale": float(_pick(args, cfg, "eta_hidden_scale", 50.0)),
        "eta_output_scale": float(_pick(args, cfg, "eta_output_scale", 35.0)),
        "loss_threshold": float(_pick(args, cfg, "loss_threshold", 0.0)),
        "normalize": str(_pick(args, cfg, "normalize", "minmax")),
        "reference": str(Path(reference).resolve()) if reference else None,
        "k": int(_pick(args, cfg, "k", 5)),
        "repeats": int(_pick(args, cfg, "repeats", 0)),
    }
    run_dir = _make_run_dir(args.out, resolved)
    labeled = _load_labeled(resolved["labeled"], classes)
    pool = _load_pool(resolved["pool"], classes, labeled.d)
    labeled, pool, _ = _normalize_pair(labeled, pool, resolved["normalize"])

    def fresh_classifiers() -> dict:
        return {
            "discriminant_analysis": LdaClassifier(),
            "knn": KnnClassifier(k=1),
            "naive_bayes": GaussianNbClassifier(),
            "ensemble": BaggedTreesClassifier(),
            "svm": LinearSvmClassifier(),
            "nn_supervised": MlpClassifier(**_mlp_kwargs(resolved)),
        }

    classifiers = fresh_classifiers()

    def fit_one(item):
        idx, (name, clf) = item
        clf.fit(labeled, derive_seed(resolved["seed"], idx))
        return name

    items = list(enumerate(classifiers.items()))
    n_threads = _threads()
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool_exec:
            list(pool_exec.map(fit_one, items))
    else:
        for item in items:
            fit_one(item)

    ref_labels = None
    if resolved["reference"]:
        ref_labels = Assignment.load_csv(resolved["reference"], classes).labels
        if ref_labels.size != pool.n:
            raise ValueError("reference assignment length does not match pool size")

    cmp_header = ["classifier", *classes, "balance_factor", "agreement"]
    cmp_rows = []
    routing_rows = []
    counts_rows = []
    for name in _COMPARE_ORDER:
        clf = classifiers[name]
        pool_labels, counts = classify_all(clf, pool)
        agreement = "" if ref_labels is None else agreement_count(pool_labels, ref_labels)
        cmp_rows.append([name, *[int(v) for v in counts],
                         repr(balance_factor(counts)) if counts.max() else "", agreement])
        lab_preds = clf.predict_labels(labeled.features)
        counts_rows.append([name, *[int(v) for v in class_counts(lab_preds, len(classes))]])
        routing = routing_table(labeled.labels, lab_preds, classes)
        for row in routing.rows():
            routing_rows.append([name, *row])
    if ref_labels is not None:
        ref_counts = class_counts(ref_labels, len(classes))
        cmp_rows.append(["nn_semi_supervised", *[int(v) for v in ref_counts],
                         repr(balance_factor(ref_counts)) if ref_counts.max() else "",
                         agreement_count(ref_labels, ref_labels)])
    counts_rows.append(["expert_labeled", *[int(v) for v in labeled.class_counts()]])

    write_csv(run_dir / "comparison.csv", cmp_header, cmp_rows)
    write_csv(run_dir / "class_counts_labeled.csv", ["classifier", *classes], counts_rows)
    write_csv(run_dir / "misrouting.csv",
              ["classifier", "class", *classes, "total_misclassified"], routing_rows)

    if resolved["repeats"] > 0:
        stats_rows = []
        for name, clf in fresh_classifiers().items():
            stats = run_cv(clf, labeled, k=resolved["k"], repeats=resolved["repeats"],
                           seed=resolved["seed"])
            stats_rows.append([name, *stats.cells()])
        write_csv(run_dir / "accuracy_stats.csv",
                  ["algorithm", "mean_accuracy", "max_accuracy", "min_accuracy"],
                  stats_rows)

    print(text_table(cmp_header, cmp_rows, "Pool classification by classifier"))
    print(f"artifacts in {run_dir}")
    return 0


def cmd_report(args) -> int:
    cfg = _load_config_file(args)
    resolved = {
        "command": "report",
        "run": _require_path(args, cfg, "run"),
        "compare": (str(Path(_pick(args, cfg, "compare", None)).resolve())
                    if _pick(args, cfg, "compare", None) else None),
    }
    out_dir = Path(args.out) if args.out else None
    report_dir = build_report(resolved["run"], resolved["compare"], out_dir)
    (report_dir / "resolved.json").write_text(
        json.dumps(resolved, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"report written to {report_dir}")
    return 0


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wellclass",
        description="Semi-supervised well-log classification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_config=True):
        p.add_argument("--seed", type=int, default=None, help="master RNG seed")
        p.add_argument("--classes", default=None,
                       help="comma-separated class names (default D,W,I,O)")
        if with_config:
            p.add_argument("--config", default=None,
                           help="resolved.json from a previous run; flags override")

    def add_mlp_flags(p):
        p.add_argument("--epochs", type=int, default=None, help="training epochs per run")
        p.add_argument("--hidden", type=int, default=None, help="hidden layer width")
        p.add_argument("--eta-hidden-scale", dest="eta_hidden_scale", type=float, default=None,
                       help="hidden-layer rate numerator (rate = scale/N)")
        p.add_argument("--eta-output-scale", dest="eta_output_scale", type=float, default=None,
                       help="output-layer rate numerator (rate = scale/N)")
        p.add_argument("--loss-threshold", dest="loss_threshold", type=float, default=None,
                       help="stop when mean epoch loss falls below this (0 = run full budget)")
        p.add_argument("--normalize", choices=("minmax", "zscore", "none"), default=None)

    p = sub.add_parser("gen", help="generate synthetic labelled + pool CSVs")
    add_common(p)
    p.add_argument("--out", required=True, help="parent directory for the run")
    p.add_argument("--d", type=int, default=None, help="feature count")
    p.add_argument("--labeled-counts", dest="labeled_counts", default=None,
                   help="per-class labelled counts, e.g. 162,50,107,177")
    p.add_argument("--pool-counts", dest="pool_counts", default=None,
                   help="per-class pool counts (hidden truth)")
    p.add_argument("--separation", type=float, default=None,
                   help="min pairwise mean distance in pooled-std units")
    p.add_argument("--std", type=float, default=None, help="per-feature class std")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="supervised training on a labelled CSV")
    add_common(p)
    p.add_argument("--labeled", default=None, help="labelled dataset CSV")
    p.add_argument("--out", required=True)
    add_mlp_flags(p)
    p.add_argument("--k", type=int, default=None, help="CV folds")
    p.add_argument("--repeats", type=int, default=None,
                   help="CV repeats (0 = skip cross-validation)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("selftrain", help="bootstrap the classifier on an unlabelled pool")
    add_common(p)
    p.add_argument("--labeled", default=None)
    p.add_argument("--pool", default=None, help="unlabelled pool CSV")
    p.add_argument("--out", required=True)
    add_mlp_flags(p)
    p.add_argument("--policy", default=None,
                   help="selection-policy schedule JSON (default: W/I at 0.7 for step 1, 0.8 after)")
    p.add_argument("--max-steps", dest="max_steps", type=int, default=None)
    p.add_argument("--holdout-frac", dest="holdout_frac", type=float, default=None,
                   help="fraction of labelled data held out for dynamics accuracy")
    p.add_argument("--warm-start", dest="warm_start", action=argparse.BooleanOptionalAction,
                   default=None, help="continue from previous step's weights (default on)")
    p.set_defaults(func=cmd_selftrain)

    p = sub.add_parser("compare", help="fit all classifiers and classify the pool")
    add_common(p)
    p.add_argument("--labeled", default=None)
    p.add_argument("--pool", default=None)
    p.add_argument("--out", required=True)
    add_mlp_flags(p)
    p.add_argument("--reference", default=None,
                   help="assignment.csv from a selftrain run, for the agreement column")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--repeats", type=int, default=None,
                   help="CV repeats for the accuracy table (0 = skip)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="render tables, figure data and figures for a run")
    p.add_argument("--run", default=None, help="completed selftrain run directory")
    p.add_argument("--compare", default=None, help="compare run directory to fold in")
    p.add_argument("--out", default=None, help="report directory (default <run>/report)")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # domain errors: one machine-parsable line, exit 1
        message = str(exc).replace("\n", "; ")
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
