from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import format_float
from .errors import ContractViolation

CURVE_COLUMNS = ("train_step", "mean_len", "sem_len", "mean_return", "sem_return", "n_runs")


@dataclass
class LearningCurve:
    """Evaluation records indexed by training step.

    A single run stores its per-evaluation means with ``sem = 0`` and
    ``n_runs = 1``; :func:`aggregate` combines runs across seeds.
    """

    train_step: np.ndarray
    mean_len: np.ndarray
    sem_len: np.ndarray
    mean_return: np.ndarray
    sem_return: np.ndarray
    n_runs: int = 1

    def __post_init__(self):
        self.train_step = np.asarray(self.train_step, dtype=np.int64)
        for name in ("mean_len", "sem_len", "mean_return", "sem_return"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(np.diff(self.train_step) <= 0):
            raise ContractViolation("train_step must be strictly increasing")

    @classmethod
    def single_run(cls, steps, lengths, returns) -> "LearningCurve":
        zeros = np.zeros(len(steps))
        return cls(steps, lengths, zeros, returns, zeros.copy(), 1)

    def __len__(self) -> int:
        return len(self.train_step)

    def rows(self):
        for i in range(len(self)):
            yield (int(self.train_step[i]), self.mean_len[i], self.sem_len[i],
                   self.mean_return[i], self.sem_return[i], self.n_runs)

    def area_under_curve(self) -> float:
        """Trapezoidal area of ``mean_len`` over training steps."""
        if len(self) < 2:
            return 0.0
        y, x = self.mean_len, self.train_step.astype(float)
        return float(np.sum((y[1:] + y[:-1]) * np.diff(x)) / 2.0)

    def equals(self, other: "LearningCurve") -> bool:
        return (self.n_runs == other.n_runs
                and np.array_equal(self.train_step, other.train_step)
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("mean_len", "sem_len", "mean_return", "sem_return")))


def _sem(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    if n < 2:
        return np.zeros(x.shape[1:])
    return x.std(axis=0, ddof=1) / math.sqrt(n)


def aggregate(curves: Sequence[LearningCurve]) -> LearningCurve:
    """Pointwise mean and standard error across runs on a shared step grid."""
    if not curves:
        raise ContractViolation("nothing to aggregate")
    if len(curves) == 1:
        c = curves[0]
        return LearningCurve(c.train_step.copy(), c.mean_len.copy(), c.sem_len.copy(),
                             c.mean_return.copy(), c.sem_return.copy(), c.n_runs)
    grid = curves[0].train_step
    for c in curves[1:]:
        if not np.array_equal(c.train_step, grid):
            raise ContractViolation("curves have misaligned step grids")
    lens = np.stack([c.mean_len for c in curves])
    rets = np.stack([c.mean_return for c in curves])
    return LearningCurve(grid.copy(), lens.mean(axis=0), _sem(lens),
                         rets.mean(axis=0), _sem(rets), len(curves))


def write_curve_rows(writer, curve: LearningCurve, prefix: Sequence = ()) -> None:
    for step, ml, sl, mr, sr, n in curve.rows():
        writer.writerow([*prefix, step, format_float(ml), format_float(sl),
                         format_float(mr), format_float(sr), n])


def write_curve_csv(path, curve: LearningCurve, header: str = "") -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        write_curve_rows(w, curve)
