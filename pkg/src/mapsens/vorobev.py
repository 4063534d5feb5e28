"""Vorob'ev median-deviation indices by double-loop Monte Carlo."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import DegenerateModelError, ParameterError
from .model import LevelGrid, MapModel
from .resample import BootstrapSpec, interval, resample_indices, run_replicates
from .sampling import inverse_cdf
from .setgrid import SetSample, coverage_from_levels, quantile_levels


@dataclass
class VorobevEstimate:
    name: str
    estimate: float
    n_outer: int
    n_inner: int
    vmd: float                    # median deviation of the outer sample
    conditional_deviation: float  # mean deviation to the conditional medians
    n_evaluations: int
    ci: tuple | None = None
    replicates: NDArray | None = None


def _median_levels(levels: NDArray, nc: int) -> NDArray:
    return quantile_levels(coverage_from_levels(levels, nc), 0.5)


def _inner_inputs(model: MapModel, i: int, u_i: float, n_inner: int, rng) -> NDArray:
    U = model.space.sample(n_inner, rng)
    U[:, i] = u_i
    return U


def conditional_median(model: MapModel, levels: LevelGrid, i: int, u_i: float, n_inner: int,
                       seed=None) -> SetSample:
    """Empirical Vorob'ev median of the output sets with input ``i`` frozen at ``u_i``."""
    if n_inner < 1:
        raise ParameterError("n_inner must be >= 1")
    lo, hi = model.space.bounds[i]
    if not lo <= u_i <= hi:
        raise ParameterError(f"u_i={u_i} outside [{lo}, {hi}]")
    rng = np.random.default_rng(seed)
    sets = model.evaluate_sets(_inner_inputs(model, i, u_i, n_inner, rng), levels)
    return SetSample((*model.grid.shape, levels.nc), levels=_median_levels(sets, levels.nc))


def _ratio(outer, cond_dev, nc, idx):
    sub = outer[idx]
    median = _median_levels(sub, nc)
    flat = sub.reshape(len(idx), -1).astype(np.int64)
    total = np.abs(flat - median.reshape(1, -1)).sum()
    if total == 0:
        raise DegenerateModelError("output sets show no deviation from their median")
    return 1.0 - cond_dev[idx].sum() / total


def vorobev_index(model: MapModel, levels: LevelGrid, i, n_outer: int = 32, n_inner: int = 32,
                  seed=0, bootstrap: BootstrapSpec | None = None) -> VorobevEstimate:
    """Double-loop estimate of the Vorob'ev index of input ``i``.

    For each of ``n_outer`` draws of input ``i`` an inner sample of the other
    inputs gives the conditional median; the first inner set doubles as the
    outer set, so exactly ``n_outer * n_inner`` evaluations are made.  The
    unconditional median is the plug-in median of the outer sets.
    """
    if isinstance(i, str):
        i = model.space.index(i)
    if n_outer < 2 or n_inner < 2:
        raise ParameterError("n_outer and n_inner must be >= 2")
    nc = levels.nc
    root = _entropy(seed)
    outer_rng = np.random.default_rng(np.random.SeedSequence([root, i]))
    u_outer = np.atleast_1d(inverse_cdf(model.space.dists[i], outer_rng.random(n_outer)))
    outer = np.empty((n_outer, *model.grid.shape), dtype=np.int32)
    cond_dev = np.empty(n_outer, dtype=np.int64)
    for j in range(n_outer):
        rng = np.random.default_rng(np.random.SeedSequence([root, i, j + 1]))
        sets = model.evaluate_sets(_inner_inputs(model, i, u_outer[j], n_inner, rng), levels)
        median = _median_levels(sets, nc)
        outer[j] = sets[0]
        cond_dev[j] = np.abs(sets[0].astype(np.int64) - median).sum()
    m = outer[0].size * nc
    all_idx = np.arange(n_outer)
    estimate = _ratio(outer, cond_dev, nc, all_idx)
    median = _median_levels(outer, nc)
    vmd = np.abs(outer.reshape(n_outer, -1).astype(np.int64) - median.reshape(1, -1)).sum() / (m * n_outer)
    result = VorobevEstimate(
        name=model.space.names[i],
        estimate=float(estimate),
        n_outer=n_outer,
        n_inner=n_inner,
        vmd=float(vmd),
        conditional_deviation=float(cond_dev.sum() / (m * n_outer)),
        n_evaluations=n_outer * n_inner,
    )
    if bootstrap is not None:
        statistic = lambda idx: _ratio(outer, cond_dev, nc, idx)  # noqa: E731
        result.replicates, _ = run_replicates(statistic, resample_indices(n_outer, bootstrap))
        result.ci = interval(result.estimate, result.replicates, bootstrap)
    return result


def _entropy(seed) -> int:
    if seed is None:
        return int(np.random.SeedSequence().entropy)
    return int(seed)
