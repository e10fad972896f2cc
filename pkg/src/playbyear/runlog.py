"""Per-episode run log and the reward/F1 correlation report.

The CSV schema holds only quantities that are reproducible from (config,
seed), so two runs with the same inputs write byte-identical files. Wall
clock time is kept in memory for progress reporting but never written.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

CSV_COLUMNS = ("episode", "mean_reward", "precision", "recall", "f1", "entropy", "seed")


@dataclass
class RunRow:
    episode: int
    mean_reward: float
    precision: float
    recall: float
    f1: float
    entropy: float
    seed: int
    wall_s: float = 0.0


@dataclass
class RunLog:
    rows: list = field(default_factory=list)

    def append(self, **kwargs) -> None:
        self.rows.append(RunRow(**kwargs))

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def tail_mean(self, name: str, n: int) -> float:
        col = self.column(name)
        return float(col[-n:].mean()) if len(col) else 0.0

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in self.rows:
                writer.writerow(
                    [
                        r.episode,
                        repr(r.mean_reward),
                        repr(r.precision),
                        repr(r.recall),
                        repr(r.f1),
                        repr(r.entropy),
                        r.seed,
                    ]
                )

    @classmethod
    def read_csv(cls, path) -> "RunLog":
        log = cls()
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing runlog columns {sorted(missing)}")
            for row in reader:
                log.append(
                    episode=int(row["episode"]),
                    mean_reward=float(row["mean_reward"]),
                    precision=float(row["precision"]),
                    recall=float(row["recall"]),
                    f1=float(row["f1"]),
                    entropy=float(row["entropy"]),
                    seed=int(row["seed"]),
                )
        return log


def pearson(x, y):
    """Pearson correlation, or None when either side has no variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise ValueError("columns differ in length")
    if len(x) < 2:
        return None
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(np.sum(dx * dx))
    sy = np.sqrt(np.sum(dy * dy))
    if sx == 0.0 or sy == 0.0:
        return None
    return float(np.sum(dx * dy) / (sx * sy))


def correlate(runlog: RunLog):
    """Correlation between per-episode reward and F1 over a run."""
    return pearson(runlog.column("mean_reward"), runlog.column("f1"))
