"""Universal indices for set outputs with a rank-based (nearest-successor) estimator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.special import ndtr, ndtri

from .errors import DegenerateModelError, ParameterError
from .resample import BootstrapSpec, bootstrap_ci
from .setgrid import CoverageField, SetSample, level_stack, symdiff_to_sets, vorobev_quantile

FAMILIES = ("centered-balls", "centered-squares", "slides", "vorobev-quantiles")


@dataclass(frozen=True)
class TestSetLaw:
    """Law of the test-set parameter: ``uniform(lo, hi)`` or ``normal(mean, sd)`` truncated to [0, 1]."""

    __test__ = False

    kind: str = "uniform"
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if self.kind == "uniform":
            if not self.a < self.b:
                raise ParameterError(f"uniform law needs lo < hi, got ({self.a}, {self.b})")
        elif self.kind == "normal":
            if not self.b > 0:
                raise ParameterError(f"normal law needs sd > 0, got {self.b}")
        else:
            raise ParameterError(f"unknown test-set law {self.kind!r}")

    def sample(self, n: int, seed=None) -> NDArray:
        u = np.random.default_rng(seed).random(n)
        if self.kind == "uniform":
            return self.a + u * (self.b - self.a)
        lo, hi = ndtr((0.0 - self.a) / self.b), ndtr((1.0 - self.a) / self.b)
        return np.clip(self.a + self.b * ndtri(lo + u * (hi - lo)), 0.0, 1.0)


DEFAULT_LAWS = {
    "centered-balls": TestSetLaw("uniform", 0.0, 0.5),
    "centered-squares": TestSetLaw("uniform", 0.0, 0.5),
    "slides": TestSetLaw("uniform", 0.0, 1.0),
    "vorobev-quantiles": TestSetLaw("normal", 0.5, 0.15),
}


def _unit_centers(shape):
    axes = [(np.arange(s) + 0.5) / s for s in shape]
    return np.meshgrid(*axes, indexing="ij")


@dataclass(frozen=True)
class TestSetFamily:
    """Parameterised test sets ``a -> gamma_a`` on the lattice rescaled to the unit cube."""

    __test__ = False

    kind: str
    shape: tuple
    law: TestSetLaw
    axis: int = 3
    coverage: CoverageField | None = None

    def test_set(self, a: float) -> SetSample:
        if self.kind == "vorobev-quantiles":
            return vorobev_quantile(self.coverage, a)
        x = _unit_centers(self.shape)
        if self.kind == "centered-balls":
            mask = sum((xi - 0.5) ** 2 for xi in x) <= a * a
        elif self.kind == "centered-squares":
            mask = np.maximum.reduce([np.abs(xi - 0.5) for xi in x]) <= a
        else:
            mask = x[self.axis - 1] <= a
        if self.kind == "slides" and self.axis == 3:
            return SetSample(self.shape, levels=mask.sum(axis=2))
        return SetSample.from_mask(mask)


def make_family(kind: str, shape, law: TestSetLaw | None = None, coverage: CoverageField | None = None,
                axis: int = 3) -> TestSetFamily:
    """Build one of the four test-set families.

    ``shape`` is the ``(n1, n2, nc)`` lattice; ``law`` defaults per family
    (uniform on [0, 1/2] for balls and squares, uniform on [0, 1] for slides,
    normal(1/2, 0.15) truncated to [0, 1] for quantiles).
    """
    if kind not in FAMILIES:
        raise ParameterError(f"unknown test-set family {kind!r} (expected one of {', '.join(FAMILIES)})")
    if kind == "vorobev-quantiles" and coverage is None:
        raise ParameterError("the vorobev-quantiles family needs a coverage field")
    if axis not in (1, 2, 3):
        raise ParameterError(f"slide axis must be 1, 2 or 3, got {axis}")
    shape = tuple(int(s) for s in shape)
    if coverage is not None and tuple(coverage.shape) != shape:
        raise ParameterError(f"coverage shape {coverage.shape} != lattice {shape}")
    return TestSetFamily(kind, shape, law or DEFAULT_LAWS[kind], axis, coverage)


@dataclass
class UniversalEstimate:
    name: str
    estimate: float
    family: str
    n_a: int
    n: int
    numerator: float
    denominator: float
    ci: tuple | None = None
    replicates: NDArray | None = None


def rank_successor(u) -> NDArray:
    """Index of the next larger sample value; the largest wraps to the smallest.

    Ties are ordered by sample index.
    """
    order = np.argsort(np.asarray(u), kind="stable")
    succ = np.empty_like(order)
    succ[order] = np.roll(order, -1)
    return succ


def universal_from_distances(D, u) -> tuple[float, float]:
    """Numerator and denominator of the rank-based estimator.

    ``D[j, l]`` is the symmetric-difference volume between output set ``j``
    and test set ``l``; ``u`` holds the values of the studied input.
    """
    D = np.asarray(D, dtype=float)
    succ = rank_successor(u)
    mean_sq = (D.mean(axis=0) ** 2).mean()
    num = (D * D[succ]).mean(axis=0).mean() - mean_sq
    den = (D * D).mean(axis=0).mean() - mean_sq
    return float(num), float(den)


def test_set_distances(levels: NDArray, nc: int, family: TestSetFamily, params) -> NDArray:
    """``(n, N_a)`` matrix of volumes between hypograph outputs and ``gamma_a`` per parameter."""
    return symdiff_to_sets(levels, nc, [family.test_set(a) for a in params])


def _ratio(D, u):
    num, den = universal_from_distances(D, u)
    if not den > 0:
        raise DegenerateModelError("output set is invariant under every test transformation")
    return num / den


def universal_index(i: int, inputs, sets, family: TestSetFamily, n_a: int = 100, seed_q=0,
                    bootstrap: BootstrapSpec | None = None, name: str | None = None,
                    distances: NDArray | None = None) -> UniversalEstimate:
    """Universal index of input column ``i`` for output sets ``sets``.

    ``sets`` is a list of hypograph :class:`SetSample` or an ``(n, n1, n2)``
    level array.  Test-set parameters are drawn from the family law with
    ``seed_q``; pass ``distances`` to reuse a precomputed matrix across inputs.
    Bootstrap replicates re-rank the subsample before estimating.
    """
    inputs = np.asarray(inputs, dtype=float)
    u = inputs[:, i] if inputs.ndim == 2 else inputs
    n = u.shape[0]
    if n < 3:
        raise ParameterError("need at least three samples")
    if distances is None:
        levels = sets if isinstance(sets, np.ndarray) else level_stack(sets)
        if levels.shape[0] != n:
            raise ParameterError(f"{levels.shape[0]} sets for {n} input rows")
        params = family.law.sample(n_a, seed_q)
        distances = test_set_distances(levels, family.shape[2], family, params)
    num, den = universal_from_distances(distances, u)
    if not den > 0:
        raise DegenerateModelError("output set is invariant under every test transformation")
    result = UniversalEstimate(
        name=name or f"u{i + 1}", estimate=num / den, family=family.kind,
        n_a=distances.shape[1], n=n, numerator=num, denominator=den,
    )
    if bootstrap is not None:
        boot = bootstrap_ci(lambda idx: _ratio(distances[idx], u[idx]), n, bootstrap)
        result.ci = (boot.lo, boot.hi)
        result.replicates = boot.replicates
    return result
