"""Seeded synthetic well-log-style data with hidden ground truth.

Each class is a diagonal Gaussian in feature space.  The generator returns
a labelled seed set, an unlabelled pool and the pool's true labels as a
separate array, so the truth can never leak into the pool dataset itself.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DEFAULT_CLASS_NAMES, UNLABELED, Dataset, derive_seed


@dataclass(frozen=True)
class SynthConfig:
    """Per-class Gaussian parameters plus sample counts.

    ``separation`` declares the minimum pairwise distance between class
    means, measured in pooled-std units; construction fails if the supplied
    means do not achieve it.
    """

    means: np.ndarray          # (C, d)
    stds: np.ndarray           # (C, d), all positive
    labeled_counts: tuple[int, ...]
    pool_counts: tuple[int, ...]
    class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES
    seed: int = 0
    separation: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "means", np.asarray(self.means, dtype=np.float64))
        object.__setattr__(self, "stds", np.asarray(self.stds, dtype=np.float64))
        c = len(self.class_names)
        if self.means.ndim != 2 or self.means.shape[0] != c:
            raise ValueError("means must be a (C, d) array")
        if self.stds.shape != self.means.shape:
            raise ValueError("stds must match the shape of means")
        if np.any(self.stds <= 0.0):
            raise ValueError("stds must be strictly positive")
        if len(self.labeled_counts) != c or len(self.pool_counts) != c:
            raise ValueError("per-class counts must have one entry per class")
        if any(n < 0 for n in (*self.labeled_counts, *self.pool_counts)):
            raise ValueError("counts must be non-negative")
        if self.separation < 0:
            raise ValueError("separation must be >= 0")
        # small slack so means placed at exactly the declared separation pass
        if self.separation > 0 and self.achieved_separation() < self.separation * (1.0 - 1e-9):
            raise ValueError(
                f"separation constraint unsatisfiable with given means: "
                f"achieved {self.achieved_separation():.3f} < declared {self.separation:.3f}")

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]

    def pooled_std(self) -> float:
        return float(np.sqrt(np.mean(self.stds ** 2)))

    def achieved_separation(self) -> float:
        """Minimum pairwise mean distance in pooled-std units."""
        c = self.n_classes
        best = np.inf
        for a in range(c):
            for b in range(a + 1, c):
                dist = float(np.linalg.norm(self.means[a] - self.means[b]))
                best = min(best, dist)
        return best / self.pooled_std()

    def to_json(self) -> str:
        return json.dumps({
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "labeled_counts": list(self.labeled_counts),
            "pool_counts": list(self.pool_counts),
            "class_names": list(self.class_names),
            "seed": self.seed,
            "separation": self.separation,
        })

    @classmethod
    def from_json(cls, text: str) -> "SynthConfig":
        obj = json.loads(text)
        return cls(np.array(obj["means"]), np.array(obj["stds"]),
                   tuple(obj["labeled_counts"]), tuple(obj["pool_counts"]),
                   tuple(obj["class_names"]), obj["seed"], obj["separation"])


def blob_config(labeled_counts: tuple[int, ...], pool_counts: tuple[int, ...],
                d: int = 17, separation: float = 6.0, std: float = 1.0,
                class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES,
                seed: int = 0) -> SynthConfig:
    """Place one isotropic Gaussian per class on scaled axis directions.

    Means sit at (separation * std / sqrt(2)) along distinct coordinate
    axes, making every pairwise mean distance exactly ``separation`` pooled
    stds.  Requires d >= number of classes.
    """
    c = len(class_names)
    if d < c:
        raise ValueError(f"need d >= {c} to place {c} axis-aligned class means")
    means = np.zeros((c, d))
    radius = separation * std / np.sqrt(2.0)
    for i in range(c):
        means[i, i] = radius
    stds = np.full((c, d), std)
    return SynthConfig(means, stds, tuple(labeled_counts), tuple(pool_counts),
                       class_names, seed, separation)


def generate(config: SynthConfig) -> tuple[Dataset, Dataset, np.ndarray]:
    """Draw (labelled seed set, unlabelled pool, hidden pool truth).

    The pool dataset carries no labels; its true classes are returned as a
    separate array aligned with pool row order.  Pool rows are shuffled so
    index order carries no class information.
    """
    rng = np.random.default_rng(derive_seed(config.seed, 0))
    lab_feats, lab_labels = [], []
    pool_feats, pool_truth = [], []
    for cls in range(config.n_classes):
        n_lab = config.labeled_counts[cls]
        n_pool = config.pool_counts[cls]
        block = rng.normal(config.means[cls], config.stds[cls], (n_lab + n_pool, config.d))
        lab_feats.append(block[:n_lab])
        lab_labels.append(np.full(n_lab, cls, dtype=np.int64))
        pool_feats.append(block[n_lab:])
        pool_truth.append(np.full(n_pool, cls, dtype=np.int64))
    labeled = Dataset(np.vstack(lab_feats), np.concatenate(lab_labels),
                      config.class_names, tag="synthetic")
    pool_x = np.vstack(pool_feats)
    truth = np.concatenate(pool_truth)
    perm = rng.permutation(pool_x.shape[0])
    pool = Dataset(pool_x[perm], np.full(pool_x.shape[0], UNLABELED, dtype=np.int64),
                   config.class_names, tag="synthetic")
    return labeled, pool, truth[perm]


def save_truth_csv(truth: np.ndarray, class_names: tuple[str, ...], path: str | Path) -> None:
    """Sidecar CSV mapping pool row index to its hidden true label."""
    lines = ["pool_index,label"]
    lines += [f"{i},{class_names[int(t)]}" for i, t in enumerate(truth)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_truth_csv(path: str | Path, class_names: tuple[str, ...]) -> np.ndarray:
    index_of = {name: i for i, name in enumerate(class_names)}
    rows = Path(path).read_text(encoding="utf-8").strip().splitlines()[1:]
    truth = np.empty(len(rows), dtype=np.int64)
    for row in rows:
        idx, name = row.split(",")
        truth[int(idx)] = index_of[name]
    return truth
