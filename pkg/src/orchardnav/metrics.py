"""Evaluation metrics: intervention rate, distance before failure, Welch
t-tests (with an in-house incomplete-beta p-value), command histograms,
timing profiles and box statistics.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .flightlog import FlightLog, horizontal_path_length


def intervention_rate(log: FlightLog) -> float:
    """Expert-controlled fraction of policy ticks."""
    if not log.records:
        raise ValueError("empty flight log")
    expert = sum(1 for r in log.records if r.source == "expert")
    return expert / len(log.records)


def first_failure_index(log: FlightLog) -> int | None:
    """Index of the first intervention or collision record, None if clean.

    On evaluation flights the judge flag counts as the intervention the
    paper's pilot would have made.
    """
    for i, r in enumerate(log.records):
        if r.source == "expert" or r.collision or r.would_intervene:
            return i
    return None


def distance_before_failure(log: FlightLog) -> float:
    """Horizontal path length up to the first failure (full length if none)."""
    idx = first_failure_index(log)
    if idx is None:
        return horizontal_path_length(log)
    return horizontal_path_length(log, up_to=idx + 1)


def mean_distance(logs) -> float:
    if not logs:
        raise ValueError("no flight logs")
    return float(np.mean([distance_before_failure(log) for log in logs]))


# ------------------------------------------------------------------ Welch t

@dataclass(frozen=True)
class TTestResult:
    t_score: float
    p_value: float
    dof: float
    alpha: float

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Modified Lentz evaluation of the incomplete-beta continued fraction."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-12:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) to better than 1e-9 absolute error."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_sf_two_sided(t: float, dof: float) -> float:
    """Two-sided p-value for a Student t statistic."""
    if t == 0.0:
        return 1.0
    x = dof / (dof + t * t)
    return regularized_incomplete_beta(dof / 2.0, 0.5, x)


def welch_t_test(sample_a, sample_b, alpha: float = 0.10) -> TTestResult:
    """Welch's unequal-variance t-test with Welch-Satterthwaite dof."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least two values")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0.0 and vb == 0.0 and a.mean() != b.mean():
        raise ValueError("both samples degenerate with unequal means")
    na, nb = len(a), len(b)
    se2 = va / na + vb / nb
    if se2 == 0.0:
        # identical constant samples: no evidence of difference
        return TTestResult(t_score=0.0, p_value=1.0, dof=float(na + nb - 2), alpha=alpha)
    t = float((a.mean() - b.mean()) / math.sqrt(se2))
    dof = se2 * se2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    return TTestResult(t_score=t, p_value=student_t_sf_two_sided(t, dof),
                       dof=float(dof), alpha=alpha)


# ---------------------------------------------------------------- histogram

def command_histogram(actions, bins: int = 20, value_range=(-1.0, 1.0)) -> np.ndarray:
    """Probability density over the command range (sums to 1 after * width)."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    density, _ = np.histogram(np.asarray(actions, dtype=float), bins=bins,
                              range=value_range, density=True)
    return density


# ------------------------------------------------------------------- timing

def timing_profile(act_fn, frames, warmup: int = 5, n: int = 100):
    """Wall-clock per-frame latency of act_fn(frame, prev_frame) after warmup."""
    if n < 30:
        raise ValueError("need at least 30 timed calls")
    seq = list(frames)
    for i in range(warmup):
        act_fn(seq[i % len(seq)], seq[(i - 1) % len(seq)])
    samples = []
    for i in range(n):
        frame = seq[i % len(seq)]
        prev = seq[(i - 1) % len(seq)]
        start = time.perf_counter()
        act_fn(frame, prev)
        samples.append((time.perf_counter() - start) * 1000.0)
    return float(np.mean(samples)), float(np.std(samples)), n


# ---------------------------------------------------------------- box stats

def quantile_type7(values, q: float) -> float:
    """Linear-interpolation quantile (numpy default, R type 7)."""
    return float(np.quantile(np.asarray(values, dtype=float), q,
                             method="linear"))


def box_stats(values) -> dict:
    """Tukey box statistics plus a 95% CI notch around the median."""
    arr = np.sort(np.asarray(values, dtype=float))
    q1 = quantile_type7(arr, 0.25)
    med = quantile_type7(arr, 0.50)
    q3 = quantile_type7(arr, 0.75)
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = arr[(arr >= lo_fence) & (arr <= hi_fence)]
    whisk_lo = float(inside.min()) if len(inside) else q1
    whisk_hi = float(inside.max()) if len(inside) else q3
    notch = 1.57 * iqr / math.sqrt(len(arr)) if len(arr) else 0.0
    return {
        "q1": q1, "median": med, "q3": q3,
        "whisker_low": whisk_lo, "whisker_high": whisk_hi,
        "notch_low": med - notch, "notch_high": med + notch,
        "mean": float(arr.mean()), "n": int(len(arr)),
        "outliers": [float(v) for v in arr[(arr < lo_fence) | (arr > hi_fence)]],
    }
