"""Evaluation metrics and their JSON-lines report record."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class MetricReport:
    name: str
    value: float
    n: int
    stderr: float | None = None
    details: dict = field(default_factory=dict)

    def to_json(self) -> str:
        rec = {"name": self.name, "value": self.value, "n": self.n}
        if self.stderr is not None:
            rec["stderr"] = self.stderr
        if self.details:
            rec["details"] = self.details
        return json.dumps(rec, sort_keys=True)


def hoyer_score(z: np.ndarray) -> float:
    """Mean per-row Hoyer sparsity of std-normalized representations.

    Each dimension is divided by its population std over the batch (stds
    below 1e-9 are treated as 1 to keep constant dimensions neutral), then
    each row r scores (sqrt(D) - ||r||_1 / ||r||_2) / (sqrt(D) - 1), which is
    1 for one-hot rows and 0 for constant-magnitude rows.  Rows with
    ||r||_2 < 1e-12 score 0.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError("hoyer_score expects a (n, D) matrix")
    n, d = z.shape
    if n < 1:
        raise ValueError("hoyer_score needs at least one row")
    if d < 2:
        raise ValueError("hoyer sparsity is undefined for D < 2")
    sd = z.std(axis=0)
    sd = np.where(sd < 1e-9, 1.0, sd)
    zh = z / sd
    l1 = np.abs(zh).sum(axis=1)
    l2 = np.sqrt((zh * zh).sum(axis=1))
    root = np.sqrt(d)
    scores = np.where(l2 < 1e-12, 0.0,
                      (root - l1 / np.maximum(l2, 1e-300)) / (root - 1.0))
    return float(scores.mean())


def energy_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Energy distance between two samples.

    2 E||a - b|| - E||a - a'|| - E||b - b'||, with the within-set means over
    ordered pairs i != j (a set of size 1 contributes 0).
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if len(a) < 1 or len(b) < 1:
        raise ValueError("energy_distance needs nonempty sets")

    def cross_mean(x, y):
        # row-chunked pairwise Euclidean distances, full mean
        total = 0.0
        step = max(1, 2**22 // max(1, y.shape[0]))
        for lo in range(0, x.shape[0], step):
            diff = x[lo:lo + step, None, :] - y[None, :, :]
            total += np.sqrt((diff * diff).sum(axis=2)).sum()
        return total / (x.shape[0] * y.shape[0])

    def within_mean(x):
        m = x.shape[0]
        if m < 2:
            return 0.0
        total = 0.0
        step = max(1, 2**22 // m)
        for lo in range(0, m, step):
            diff = x[lo:lo + step, None, :] - x[None, :, :]
            total += np.sqrt((diff * diff).sum(axis=2)).sum()
        return total / (m * (m - 1))  # diagonal contributes zeros

    return 2.0 * cross_mean(a, b) - within_mean(a) - within_mean(b)


def mc_kl(log_q, log_p, sampler_q, n: int) -> tuple[float, float]:
    """Monte Carlo KL(q || p): mean and standard error of log q - log p over
    n draws from q.  Densities must be finite at every drawn point."""
    if n < 100:
        raise ValueError("mc_kl needs n >= 100 for a usable stderr")
    x = np.asarray(sampler_q(n), dtype=np.float64)
    if x.shape[0] != n:
        raise ValueError(f"sampler returned {x.shape[0]} draws, wanted {n}")
    vals = np.asarray(log_q(x), dtype=np.float64) \
        - np.asarray(log_p(x), dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        raise FloatingPointError(
            f"non-finite log density at sample index {bad[0]}")
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n))


def mode_stats(samples: np.ndarray, means: np.ndarray, std: float,
               band: float = 3.0) -> tuple[float, np.ndarray]:
    """Cluster accounting against known mode centers.

    A sample is *uncertain* when it sits farther than band * std from every
    mean.  Returns (uncertain fraction, per-mode proportions over the
    confident samples; all zeros if nothing is confident).
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    if samples.shape[1] != means.shape[1]:
        raise ValueError("samples and means disagree on dimension")
    if std <= 0 or band <= 0:
        raise ValueError("std and band must be positive")
    diff = samples[:, None, :] - means[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    nearest = dist.argmin(axis=1)
    uncertain = dist.min(axis=1) > band * std
    frac = float(uncertain.mean())
    confident = nearest[~uncertain]
    counts = np.bincount(confident, minlength=len(means)).astype(np.float64)
    props = counts / confident.size if confident.size else counts
    return frac, props
