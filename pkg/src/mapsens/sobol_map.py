"""Pointwise first-order Sobol' maps and their variance-weighted aggregate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import DegenerateModelError
from .model import DomainGrid, MapModel
from .resample import BootstrapSpec, interval, resample_indices
from .sampling import PickFreezeDesign

# relative variance floor below which a cell is treated as constant
DEGENERATE_RTOL = 1e-12


@dataclass
class SobolMapResult:
    names: list
    grid: DomainGrid
    indices: NDArray          # (p, n1, n2)
    numerators: NDArray       # (p, n1, n2) partial variances
    variance: NDArray         # (n1, n2)
    degenerate: NDArray       # (n1, n2) bool
    n: int
    n_evaluations: int
    ci: dict = field(default_factory=dict)           # name -> (lo, hi) of the generalized index
    replicates: NDArray | None = None                # (B, p) generalized-index replicates

    @property
    def weights(self) -> NDArray:
        var = np.where(self.degenerate, 0.0, self.variance)
        return var / var.sum()

    @property
    def generalized(self) -> NDArray:
        return np.array([generalized_index(self, i) for i in range(len(self.names))])


def generalized_index(result: SobolMapResult, i) -> float:
    """Variance-weighted average of the index map of input ``i`` (index or name)."""
    if isinstance(i, str):
        i = result.names.index(i)
    var = np.where(result.degenerate, 0.0, result.variance)
    total = var.sum()
    if not total > 0:
        raise DegenerateModelError("all cells have zero output variance")
    return float((var * result.indices[i]).sum() / total)


def _maps(num, s1, s2, n, scale):
    var = (s2 - s1 * s1 / n) / (n - 1)
    degenerate = var <= DEGENERATE_RTOL * scale
    safe = np.where(degenerate, 1.0, var)
    idx = np.where(degenerate[None], 0.0, (num / n) / safe[None])
    return idx, np.where(degenerate, 0.0, np.maximum(var, 0.0)), degenerate


def sobol_maps(model: MapModel, design: PickFreezeDesign, bootstrap: BootstrapSpec | None = None,
               chunk: int = 256) -> SobolMapResult:
    """First-order index maps from a pick-and-freeze design.

    Per cell, the partial variance of input ``i`` is the mean of
    ``f(U') * (f(U~i) - f(U))`` and the total variance is the unbiased sample
    variance of ``f(U)``.  With ``bootstrap`` set, row indices are resampled
    and the generalized indices get percentile intervals.
    """
    n, p = design.n, design.p
    if n < 2:
        raise DegenerateModelError("need at least two design rows")
    cells = model.grid.n1 * model.grid.n2
    weights = None
    if bootstrap is not None:
        weights = np.stack([np.bincount(idx, minlength=n) for idx in resample_indices(n, bootstrap)])
        weights = weights.astype(float)
        B = weights.shape[0]
        w_s1 = np.zeros((B, cells))
        w_s2 = np.zeros((B, cells))
        w_num = np.zeros((B, p, cells))
        w_n = weights.sum(axis=1)

    s1 = np.zeros(cells)
    s2 = np.zeros(cells)
    num = np.zeros((p, cells))
    for start in range(0, n, chunk):
        rows = slice(start, min(start + chunk, n))
        y = model.evaluate_batch(design.U[rows]).reshape(-1, cells)
        y_prime = model.evaluate_batch(design.Uprime[rows]).reshape(-1, cells)
        s1 += y.sum(axis=0)
        s2 += (y * y).sum(axis=0)
        if weights is not None:
            w = weights[:, rows]
            w_s1 += w @ y
            w_s2 += w @ (y * y)
        for i in range(p):
            sub = design.U[rows].copy()
            sub[:, i] = design.Uprime[rows, i]
            y_sub = model.evaluate_batch(sub).reshape(-1, cells)
            term = y_prime * (y_sub - y)
            num[i] += term.sum(axis=0)
            if weights is not None:
                w_num[:, i] += weights[:, rows] @ term

    scale = float(np.max(s2 / n))
    if not scale > 0:
        raise DegenerateModelError("model output is identically zero")
    idx, var, degenerate = _maps(num, s1, s2, n, scale)
    if degenerate.all():
        raise DegenerateModelError("zero output variance at every cell")
    shape = (p, *model.grid.shape)
    result = SobolMapResult(
        names=model.space.names,
        grid=model.grid,
        indices=idx.reshape(shape),
        numerators=(num / n).reshape(shape),
        variance=var.reshape(model.grid.shape),
        degenerate=degenerate.reshape(model.grid.shape),
        n=n,
        n_evaluations=n * (p + 2),
    )
    if weights is not None:
        reps = []
        for b in range(weights.shape[0]):
            b_idx, b_var, b_deg = _maps(w_num[b], w_s1[b], w_s2[b], w_n[b], scale)
            total = b_var.sum()
            if not total > 0:
                continue
            reps.append((b_idx * b_var[None]).sum(axis=1) / total)
        result.replicates = np.array(reps)
        gen = result.generalized
        for i, name in enumerate(result.names):
            result.ci[name] = interval(gen[i], result.replicates[:, i], bootstrap)
    return result
