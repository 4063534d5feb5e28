"""Percentile bootstrap and m-out-of-n subsampling intervals."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import DegenerateModelError, ParameterError

log = logging.getLogger(__name__)

MODES = ("with-replacement", "subsample")

# failures that drop a replicate instead of aborting the interval
_REPLICATE_ERRORS = (ArithmeticError, ValueError, DegenerateModelError)


@dataclass(frozen=True)
class BootstrapSpec:
    """Resampling plan.

    ``subsample`` draws ``round(fraction * n)`` indices without replacement;
    with ``correction`` the centred percentile interval is shrunk by
    ``sqrt(fraction)`` around the full-sample estimate.
    """

    B: int = 100
    mode: str = "with-replacement"
    fraction: float = 0.8
    correction: bool = True
    level: float = 0.95
    seed: int = 0

    def __post_init__(self):
        if self.B < 2:
            raise ParameterError(f"B must be >= 2, got {self.B}")
        if self.mode not in MODES:
            raise ParameterError(f"unknown bootstrap mode {self.mode!r}")
        if not 0.0 < self.fraction <= 1.0:
            raise ParameterError(f"fraction must lie in (0, 1], got {self.fraction}")
        if not 0.0 < self.level < 1.0:
            raise ParameterError(f"level must lie in (0, 1), got {self.level}")


@dataclass(frozen=True)
class BootstrapResult:
    estimate: float
    lo: float
    hi: float
    replicates: NDArray
    dropped: int = 0

    @property
    def width(self) -> float:
        return self.hi - self.lo


def resample_indices(n: int, spec: BootstrapSpec) -> list[NDArray]:
    """Index arrays for every replicate; replicate ``b`` uses its own child seed."""
    if n < 1:
        raise ParameterError("cannot resample an empty sample")
    children = np.random.SeedSequence(spec.seed).spawn(spec.B)
    out = []
    for child in children:
        rng = np.random.default_rng(child)
        if spec.mode == "with-replacement":
            out.append(rng.integers(0, n, size=n))
        else:
            size = max(1, int(round(spec.fraction * n)))
            out.append(np.sort(rng.choice(n, size=size, replace=False)))
    return out


def interval(estimate: float, replicates, spec: BootstrapSpec) -> tuple[float, float]:
    """Percentile interval of ``replicates``, rescaled for subsampling if requested."""
    reps = np.asarray(replicates, dtype=float)
    alpha = 1.0 - spec.level
    q_lo, q_hi = np.quantile(reps, [alpha / 2, 1 - alpha / 2])
    if spec.mode == "subsample" and spec.correction:
        scale = np.sqrt(spec.fraction)
        q_lo = estimate + scale * (q_lo - estimate)
        q_hi = estimate + scale * (q_hi - estimate)
    return float(q_lo), float(q_hi)


def run_replicates(statistic, index_sets, max_drop: float = 0.10):
    """Evaluate ``statistic`` on each index set, dropping failed or non-finite replicates."""
    reps = []
    dropped = 0
    for idx in index_sets:
        try:
            value = np.asarray(statistic(idx), dtype=float)
        except _REPLICATE_ERRORS as exc:
            log.debug("dropping bootstrap replicate: %s", exc)
            dropped += 1
            continue
        if not np.all(np.isfinite(value)):
            dropped += 1
            continue
        reps.append(value)
    if dropped > max_drop * len(index_sets):
        raise DegenerateModelError(
            f"{dropped} of {len(index_sets)} bootstrap replicates failed (limit {max_drop:.0%})"
        )
    return np.array(reps), dropped


def bootstrap_ci(statistic, n: int, spec: BootstrapSpec = BootstrapSpec()) -> BootstrapResult:
    """Confidence interval for ``statistic(indices)`` over a sample of size ``n``.

    ``statistic`` receives an integer index array (a multiset for
    with-replacement resampling, a sorted subset for subsampling) and must
    recompute everything that depends on the sample, ranks included.
    """
    estimate = float(statistic(np.arange(n)))
    reps, dropped = run_replicates(statistic, resample_indices(n, spec))
    lo, hi = interval(estimate, reps, spec)
    return BootstrapResult(estimate, lo, hi, reps, dropped)


def bootstrap_ci_multi(statistic, n: int, spec: BootstrapSpec = BootstrapSpec()):
    """Vector-valued variant of :func:`bootstrap_ci`; one interval per component."""
    estimate = np.asarray(statistic(np.arange(n)), dtype=float)
    reps, dropped = run_replicates(statistic, resample_indices(n, spec))
    out = []
    for k in range(estimate.size):
        lo, hi = interval(float(estimate[k]), reps[:, k], spec)
        out.append(BootstrapResult(float(estimate[k]), lo, hi, reps[:, k], dropped))
    return out
