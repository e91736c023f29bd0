"""Confidence-based self-training: bucket posteriors, admit strong samples
as pseudo-labelled training data, retrain, repeat until nothing qualifies.

Admission is per class: a pool sample enters the labelled set when its max
class probability strictly exceeds the threshold of its argmax class under
the policy active at that updating step.  Samples never admitted receive
their final argmax label flagged "weak" so the returned assignment covers
the whole pool.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, derive_seed, oversample_balance
from .mlp import DivergenceError, MlpConfig, MlpModel, accuracy, forward_batch, init_model, train


@dataclass(frozen=True)
class Bucket:
    """One confidence range; bounds may be individually open or closed."""

    name: str
    lower: float
    upper: float
    lower_open: bool = True
    upper_closed: bool = True

    def contains(self, p: np.ndarray) -> np.ndarray:
        lo = p > self.lower if self.lower_open else p >= self.lower
        hi = p <= self.upper if self.upper_closed else p < self.upper
        return lo & hi

    def range_str(self) -> str:
        left = "(" if self.lower_open else "["
        right = "]" if self.upper_closed else ")"
        return f"{left}{self.lower:g},{self.upper:g}{right}"


# Eight confidence grades, best first; the lowest range is closed at both
# ends and every interior boundary belongs to the bucket below it.
DEFAULT_BUCKETS: tuple[Bucket, ...] = (
    Bucket("VVV-good", 0.95, 1.00),
    Bucket("VV-good", 0.90, 0.95),
    Bucket("V-good", 0.80, 0.90),
    Bucket("Good", 0.70, 0.80),
    Bucket("NT-good", 0.60, 0.70),
    Bucket("NT-poor", 0.50, 0.60),
    Bucket("Poor", 0.40, 0.50),
    Bucket("V-poor", 0.00, 0.40, lower_open=False),
)


@dataclass(frozen=True)
class BucketScheme:
    """An ordered set of buckets that must exactly partition [0, 1]."""

    buckets: tuple[Bucket, ...] = DEFAULT_BUCKETS

    def __post_init__(self) -> None:
        by_lower = sorted(self.buckets, key=lambda b: b.lower)
        first, last = by_lower[0], by_lower[-1]
        if first.lower != 0.0 or first.lower_open:
            raise ValueError("scheme must cover 0.0 with a closed lower bound")
        if last.upper != 1.0 or not last.upper_closed:
            raise ValueError("scheme must cover 1.0 with a closed upper bound")
        for bucket in by_lower:
            if bucket.lower >= bucket.upper:
                raise ValueError(f"bucket {bucket.name!r} is empty or inverted")
        for prev, cur in zip(by_lower, by_lower[1:]):
            # exactly one neighbour may own the shared boundary
            if prev.upper != cur.lower or prev.upper_closed != cur.lower_open:
                raise ValueError(
                    f"buckets {prev.name!r} and {cur.name!r} do not tile contiguously")

    def __len__(self) -> int:
        return len(self.buckets)

    def assign(self, p: np.ndarray) -> np.ndarray:
        """Bucket index (into self.buckets order) for each probability."""
        p = np.asarray(p, dtype=np.float64)
        out = np.full(p.shape, -1, dtype=np.int64)
        for i, bucket in enumerate(self.buckets):
            out[bucket.contains(p)] = i
        if np.any(out < 0):
            bad = float(p[out < 0].flat[0])
            raise ValueError(f"probability {bad} falls outside the scheme")
        return out


DEFAULT_SCHEME = BucketScheme()


@dataclass
class BucketTable:
    """Counts of samples per (bucket, argmax class)."""

    scheme: BucketScheme
    counts: np.ndarray  # (n_buckets, C) ints
    class_names: tuple[str, ...]

    @property
    def bucket_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def header(self) -> list[str]:
        return ["performance", "probability_range", "total", *self.class_names]

    def rows(self) -> list[list]:
        out = []
        for i, bucket in enumerate(self.scheme.buckets):
            out.append([bucket.name, bucket.range_str(), int(self.bucket_totals[i]),
                        *[int(v) for v in self.counts[i]]])
        out.append(["sum", "", self.total, *[int(v) for v in self.counts.sum(axis=0)]])
        return out


def bucketize(posteriors: np.ndarray, scheme: BucketScheme = DEFAULT_SCHEME,
              class_names: Sequence[str] | None = None) -> BucketTable:
    """Tally samples into confidence buckets by their max class probability,
    counted under the argmax class (ties to the lowest index)."""
    P = np.asarray(posteriors, dtype=np.float64)
    if P.ndim != 2:
        raise ValueError("posteriors must be a (n, C) array")
    c = P.shape[1]
    names = tuple(class_names) if class_names is not None else tuple(f"c{i}" for i in range(c))
    counts = np.zeros((len(scheme), c), dtype=np.int64)
    if P.shape[0]:
        p_max = P.max(axis=1)
        cls = P.argmax(axis=1)
        idx = scheme.assign(p_max)
        np.add.at(counts, (idx, cls), 1)
    return BucketTable(scheme, counts, names)


@dataclass(frozen=True)
class SelectionPolicy:
    """Per-class admission thresholds and optional per-class caps.

    A sample is admitted when its max probability strictly exceeds the
    threshold of its argmax class; a threshold of 1.0 therefore blocks the
    class entirely.  A cap keeps only the highest-probability admissions
    of that class within one updating step.
    """

    thresholds: tuple[float, ...]
    caps: tuple[int | None, ...] | None = None

    def __post_init__(self) -> None:
        if any(t < 0.0 or t > 1.0 for t in self.thresholds):
            raise ValueError("thresholds must lie in [0, 1]")
        if self.caps is not None and len(self.caps) != len(self.thresholds):
            raise ValueError("caps must have one entry per class")


@dataclass(frozen=True)
class PolicyStage:
    step_from: int
    policy: SelectionPolicy

    def __post_init__(self) -> None:
        if self.step_from < 1:
            raise ValueError("step_from starts at 1")


class PolicySchedule:
    """Maps an updating step to the selection policy active at that step."""

    def __init__(self, stages: Sequence[PolicyStage]):
        if not stages:
            raise ValueError("schedule needs at least one stage")
        self.stages = sorted(stages, key=lambda s: s.step_from)
        if self.stages[0].step_from != 1:
            raise ValueError("first stage must start at step 1")

    def policy_for(self, step: int) -> SelectionPolicy:
        chosen = self.stages[0].policy
        for stage in self.stages:
            if stage.step_from <= step:
                chosen = stage.policy
        return chosen

    def to_json(self) -> str:
        return json.dumps([
            {"step_from": s.step_from,
             "thresholds": list(s.policy.thresholds),
             "caps": list(s.policy.caps) if s.policy.caps is not None else None}
            for s in self.stages
        ])

    @classmethod
    def from_json(cls, text: str) -> "PolicySchedule":
        stages = []
        for obj in json.loads(text):
            caps = obj.get("caps")
            policy = SelectionPolicy(tuple(obj["thresholds"]),
                                     tuple(caps) if caps is not None else None)
            stages.append(PolicyStage(int(obj["step_from"]), policy))
        return cls(stages)

    @classmethod
    def load(cls, path: str | Path) -> "PolicySchedule":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def default_schedule(class_names: Sequence[str]) -> PolicySchedule:
    """Step 1 admits only the scarce W/I classes above 0.7 (when present);
    later steps use a uniform 0.8 threshold for every class."""
    names = list(class_names)
    c = len(names)
    uniform = SelectionPolicy(tuple([0.8] * c))
    if "W" in names and "I" in names:
        first = tuple(0.7 if n in ("W", "I") else 1.0 for n in names)
        return PolicySchedule([
            PolicyStage(1, SelectionPolicy(first)),
            PolicyStage(2, uniform),
        ])
    return PolicySchedule([PolicyStage(1, uniform)])


@dataclass(frozen=True)
class PseudoLabeledSample:
    """A pool sample admitted into the labelled set."""

    pool_index: int
    label: int
    max_prob: float
    step: int = 0


def select(posteriors: np.ndarray, policy: SelectionPolicy,
           seed: int = 0) -> list[PseudoLabeledSample]:
    """Pick pool samples whose argmax probability clears the class threshold.

    With a per-class cap, the highest-probability candidates win (ties go
    to the lower pool index).  The result is sorted by pool index; an empty
    result is meaningful and terminates the self-training loop.  ``seed``
    is reserved for stochastic policies; the built-in rules are
    deterministic.
    """
    P = np.asarray(posteriors, dtype=np.float64)
    if P.shape[0] == 0:
        return []
    if P.shape[1] != len(policy.thresholds):
        raise ValueError("policy width does not match posterior width")
    cls = P.argmax(axis=1)
    p_max = P.max(axis=1)
    thr = np.asarray(policy.thresholds)
    admitted = np.flatnonzero(p_max > thr[cls])
    if policy.caps is not None:
        kept = []
        for c, cap in enumerate(policy.caps):
            members = admitted[cls[admitted] == c]
            if cap is not None and members.size > cap:
                order = np.lexsort((members, -p_max[members]))
                members = members[order[:cap]]
            kept.append(members)
        admitted = np.concatenate(kept) if kept else admitted
    admitted = np.sort(admitted)
    return [PseudoLabeledSample(int(i), int(cls[i]), float(p_max[i])) for i in admitted]


@dataclass
class DynamicsStep:
    """State after one updating step (counts are post-admission)."""

    step: int
    n_labeled: int
    n_unlabeled: int
    admitted_per_class: tuple[int, ...]
    train_accuracy: float
    holdout_accuracy: float  # NaN when no holdout split was supplied


@dataclass
class DynamicsTrace:
    steps: list[DynamicsStep] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def total(self) -> int:
        return self.steps[0].n_labeled + self.steps[0].n_unlabeled if self.steps else 0


@dataclass
class Assignment:
    """Final label for every pool sample.

    ``step[i]`` is the updating step at which sample i was admitted, or 0
    for samples that never cleared a threshold and received their terminal
    argmax label ("weak").
    """

    labels: np.ndarray
    max_prob: np.ndarray
    step: np.ndarray
    strong: np.ndarray
    class_names: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.labels.size

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=len(self.class_names))

    def save_csv(self, path: str | Path) -> None:
        lines = ["pool_index,label,max_prob,step_admitted,strength"]
        for i in range(self.n):
            lines.append(f"{i},{self.class_names[int(self.labels[i])]},"
                         f"{float(self.max_prob[i])!r},{int(self.step[i])},"
                         f"{'strong' if self.strong[i] else 'weak'}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load_csv(cls, path: str | Path, class_names: Sequence[str]) -> "Assignment":
        index_of = {name: i for i, name in enumerate(class_names)}
        rows = Path(path).read_text(encoding="utf-8").strip().splitlines()[1:]
        n = len(rows)
        labels = np.empty(n, dtype=np.int64)
        prob = np.empty(n)
        step = np.empty(n, dtype=np.int64)
        strong = np.empty(n, dtype=bool)
        for row in rows:
            idx_s, name, p, st, strength = row.split(",")
            i = int(idx_s)
            labels[i] = index_of[name]
            prob[i] = float(p)
            step[i] = int(st)
            strong[i] = strength == "strong"
        return cls(labels, prob, step, strong, tuple(class_names))


def run_selftrain(labeled: Dataset, unlabeled: Dataset, config: MlpConfig,
                  schedule: PolicySchedule | None = None, max_steps: int = 100,
                  seed: int = 0, holdout: Dataset | None = None,
                  warm_start: bool = True,
                  on_step=None) -> tuple[MlpModel, Assignment, DynamicsTrace]:
    """Bootstrap the classifier by iteratively admitting strong pool samples.

    Each updating step rebalances the current labelled pool by oversampling,
    trains the network (warm-started from the previous step's weights unless
    ``warm_start`` is off), scores the remaining pool and moves admitted
    samples in with their pseudo-labels.  The loop stops when a step admits
    nothing, the pool empties, or ``max_steps`` is reached; leftover pool
    samples then get their argmax label flagged weak.

    All per-step randomness (rebalancing draws, weight init, epoch
    shuffling) derives from ``seed``; the seed field of ``config`` is
    overridden internally.  ``on_step(step_no, model)``, when given, is
    invoked after each step's training and before selection.
    """
    if labeled.n == 0:
        raise ValueError("self-training needs a non-empty labelled seed set")
    if labeled.d != unlabeled.d:
        raise ValueError("labelled and pool feature widths differ")
    if config.d != labeled.d:
        raise ValueError(f"config d={config.d} does not match dataset width {labeled.d}")
    if schedule is None:
        schedule = default_schedule(labeled.class_names)
    n_classes = labeled.n_classes
    pool_x = unlabeled.features
    m = pool_x.shape[0]

    cur_x = labeled.features
    cur_y = labeled.labels
    out_label = np.full(m, -1, dtype=np.int64)
    out_prob = np.zeros(m)
    out_step = np.zeros(m, dtype=np.int64)
    out_strong = np.zeros(m, dtype=bool)
    remaining = np.arange(m)

    model: MlpModel | None = None
    trace = DynamicsTrace()
    for step_no in range(1, max_steps + 1):
        cur = Dataset(cur_x, cur_y, labeled.class_names, labeled.feature_names, labeled.tag)
        balanced = oversample_balance(cur, seed=derive_seed(seed, step_no, 0))
        step_cfg = replace(config, seed=derive_seed(seed, step_no, 1))
        if model is None or not warm_start:
            model = init_model(step_cfg)
        else:
            model = MlpModel(model.w_hidden, model.w_output, step_cfg)
        try:
            model, _ = train(model, balanced)
        except DivergenceError as exc:
            raise DivergenceError(f"updating step {step_no}: {exc}", epoch=exc.epoch) from exc
        if on_step is not None:
            on_step(step_no, model)

        train_acc = accuracy(model, cur)
        holdout_acc = accuracy(model, holdout) if holdout is not None and holdout.n else math.nan

        picks: list[PseudoLabeledSample] = []
        if remaining.size:
            probs, _ = forward_batch(model, pool_x[remaining])
            policy = schedule.policy_for(step_no)
            picks = [replace(p, step=step_no) for p in select(probs, policy, seed=derive_seed(seed, step_no, 2))]
            for p in picks:
                assert p.max_prob > policy.thresholds[p.label], "admission below threshold"

        admitted_counts = np.zeros(n_classes, dtype=np.int64)
        if picks:
            local = np.array([p.pool_index for p in picks])
            global_idx = remaining[local]
            new_labels = np.array([p.label for p in picks], dtype=np.int64)
            out_label[global_idx] = new_labels
            out_prob[global_idx] = [p.max_prob for p in picks]
            out_step[global_idx] = step_no
            out_strong[global_idx] = True
            admitted_counts = np.bincount(new_labels, minlength=n_classes)
            cur_x = np.vstack([cur_x, pool_x[global_idx]])
            cur_y = np.concatenate([cur_y, new_labels])
            keep = np.ones(remaining.size, dtype=bool)
            keep[local] = False
            remaining = remaining[keep]

        trace.steps.append(DynamicsStep(
            step=step_no,
            n_labeled=cur_y.size,
            n_unlabeled=int(remaining.size),
            admitted_per_class=tuple(int(v) for v in admitted_counts),
            train_accuracy=train_acc,
            holdout_accuracy=holdout_acc,
        ))
        if not picks or remaining.size == 0:
            break

    assert model is not None
    if remaining.size:
        probs, _ = forward_batch(model, pool_x[remaining])
        out_label[remaining] = probs.argmax(axis=1)
        out_prob[remaining] = probs.max(axis=1)
        out_step[remaining] = 0
        out_strong[remaining] = False

    assignment = Assignment(out_label, out_prob, out_step, out_strong, labeled.class_names)
    return model, assignment, trace


def emit_dynamics(trace: DynamicsTrace) -> tuple[list[tuple[int, int, int]],
                                                 list[tuple[int, float, float]]]:
    """Flatten a trace into plot-ready rows: per-step pool counts and
    per-step accuracies, in step order."""
    if not trace.steps:
        raise ValueError("dynamics trace is empty")
    counts = [(s.step, s.n_labeled, s.n_unlabeled) for s in trace.steps]
    accs = [(s.step, s.train_accuracy, s.holdout_accuracy) for s in trace.steps]
    return counts, accs
