"""QE evaluation metrics: Pearson's r, Spearman's rho, MAE and RMSE."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConstantInput, EmptyInput, InvariantViolation, LengthMismatch

# Pearson/Spearman higher is better; the error metrics lower is better.
DIRECTIONS = {"pearson": "higher", "spearman": "higher", "mae": "lower", "rmse": "lower"}


def _pair(x, y, min_len: int = 1):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise LengthMismatch(f"lengths differ: {x.size} vs {y.size}")
    if x.size < min_len:
        raise EmptyInput(f"need at least {min_len} values, got {x.size}")
    return x, y


def pearson(x, y) -> float:
    x, y = _pair(x, y, 2)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise ConstantInput("correlation is undefined for a constant input")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def rankdata(x) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size, dtype=np.float64)
    xs = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    x, y = _pair(x, y, 2)
    return pearson(rankdata(x), rankdata(y))


def mae(pred, gold) -> float:
    p, g = _pair(pred, gold)
    return float(np.mean(np.abs(p - g)))


def rmse(pred, gold) -> float:
    p, g = _pair(pred, gold)
    d = np.abs(p - g)
    scale = float(d.max()) if d.size else 0.0
    if scale == 0.0 or not math.isfinite(scale):
        return scale
    # scaling keeps tiny errors from underflowing when squared
    d = d / scale
    return scale * math.sqrt(float(np.mean(d * d)))


@dataclass(frozen=True)
class EvalReport:
    pearson: float
    spearman: float
    mae: float
    rmse: float
    n: int

    FIELDS = ("pearson", "spearman", "mae", "rmse", "n")

    def to_text(self) -> str:
        lines = []
        for name in self.FIELDS[:-1]:
            lines.append(f"{name} = {getattr(self, name):.6f}  # {DIRECTIONS[name]} is better")
        lines.append(f"n = {self.n}")
        return "\n".join(lines) + "\n"

    @classmethod
    def tsv_header(cls, *extra) -> str:
        return "\t".join((*extra, *cls.FIELDS))

    def to_tsv_row(self, *extra) -> str:
        vals = [f"{getattr(self, f):.6f}" for f in self.FIELDS[:-1]] + [str(self.n)]
        return "\t".join((*map(str, extra), *vals))


def evaluate(pred, gold) -> EvalReport:
    p, g = _pair(pred, gold, 2)
    report = EvalReport(pearson(p, g), spearman(p, g), mae(p, g), rmse(p, g), int(p.size))
    # power-mean inequality; slack covers the last-ulp rounding of sqrt
    if report.rmse < report.mae * (1.0 - 1e-12):
        raise InvariantViolation(f"rmse {report.rmse} < mae {report.mae}")
    return report
