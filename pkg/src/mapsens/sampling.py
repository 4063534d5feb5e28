"""Input distributions, space-filling designs and pick-and-freeze matrices.

Truncated normal and truncated skew-normal laws share one inversion routine:
the density is integrated once on a panel table with Gauss-Legendre rules and
the CDF is inverted by safeguarded Newton iterations inside the panel that
brackets the target probability.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray
from scipy.special import ndtr

from .errors import DomainError, ParameterError

KINDS = ("uniform", "truncated-normal", "truncated-skew-normal")

_N_PANELS = 512
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


@dataclass(frozen=True)
class DistributionSpec:
    """One-dimensional input law with compact support ``[lo, hi]``.

    ``mu``/``sigma`` parameterise the truncated normal, ``xi``/``omega``/
    ``alpha`` (location, scale, shape) the truncated skew-normal.
    """

    kind: str
    lo: float
    hi: float
    mu: float | None = None
    sigma: float | None = None
    xi: float | None = None
    omega: float | None = None
    alpha: float | None = None

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ParameterError("; ".join(problems))

    def problems(self) -> list[str]:
        """List parameter problems without raising."""
        return distribution_problems(
            self.kind, self.lo, self.hi, mu=self.mu, sigma=self.sigma,
            xi=self.xi, omega=self.omega, alpha=self.alpha,
        )

    @classmethod
    def uniform(cls, lo, hi):
        return cls("uniform", float(lo), float(hi))

    @classmethod
    def truncated_normal(cls, mu, sigma, lo, hi):
        return cls("truncated-normal", float(lo), float(hi), mu=float(mu), sigma=float(sigma))

    @classmethod
    def truncated_skew_normal(cls, xi, omega, alpha, lo, hi):
        return cls("truncated-skew-normal", float(lo), float(hi),
                   xi=float(xi), omega=float(omega), alpha=float(alpha))


def distribution_problems(kind, lo, hi, **params) -> list[str]:
    """Return a list of human-readable problems with a distribution definition."""
    out = []
    if kind not in KINDS:
        return [f"unknown distribution kind {kind!r} (expected one of {', '.join(KINDS)})"]
    try:
        lo_f, hi_f = float(lo), float(hi)
    except (TypeError, ValueError):
        return [f"bounds must be numbers, got ({lo!r}, {hi!r})"]
    if not (np.isfinite(lo_f) and np.isfinite(hi_f)):
        out.append("bounds must be finite")
    elif not lo_f < hi_f:
        out.append(f"lower bound {lo_f} must be < upper bound {hi_f}")
    required = {
        "uniform": (),
        "truncated-normal": ("mu", "sigma"),
        "truncated-skew-normal": ("xi", "omega", "alpha"),
    }[kind]
    for name in required:
        value = params.get(name)
        if value is None:
            out.append(f"{kind} requires parameter '{name}'")
            continue
        try:
            value = float(value)
        except (TypeError, ValueError):
            out.append(f"parameter '{name}' must be a number, got {value!r}")
            continue
        if not np.isfinite(value):
            out.append(f"parameter '{name}' must be finite")
        elif name in ("sigma", "omega") and not value > 0:
            out.append(f"parameter '{name}' must be > 0, got {value:g}")
    return out


def _density(dist: DistributionSpec, x):
    """Unnormalised density on the support."""
    if dist.kind == "truncated-normal":
        z = (x - dist.mu) / dist.sigma
        return np.exp(-0.5 * z * z)
    z = (x - dist.xi) / dist.omega
    return np.exp(-0.5 * z * z) * ndtr(dist.alpha * z)


class _QuadratureCDF:
    """Tabulated CDF of a density on ``[lo, hi]``."""

    def __init__(self, dist: DistributionSpec, n_panels: int = _N_PANELS):
        self.dist = dist
        self.lo, self.hi = dist.lo, dist.hi
        self.edges = np.linspace(self.lo, self.hi, n_panels + 1)
        self.width = (self.hi - self.lo) / n_panels
        half = 0.5 * self.width
        mids = 0.5 * (self.edges[:-1] + self.edges[1:])
        nodes = mids[:, None] + half * _GL_NODES[None, :]
        masses = half * (_density(dist, nodes) @ _GL_WEIGHTS)
        self.cum = np.concatenate([[0.0], np.cumsum(masses)])
        self.total = self.cum[-1]
        if not self.total > 0:
            raise ParameterError(f"distribution {dist} has no mass on its bounds")

    def _partial(self, left, x):
        half = 0.5 * (x - left)
        nodes = (left + half)[:, None] + half[:, None] * _GL_NODES[None, :]
        return half * (_density(self.dist, nodes) @ _GL_WEIGHTS)

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)
        flat = x.ravel()
        panel = np.clip(((flat - self.lo) // self.width).astype(np.int64), 0, len(self.cum) - 2)
        left = self.edges[panel]
        val = (self.cum[panel] + self._partial(left, flat)) / self.total
        return np.clip(val, 0.0, 1.0).reshape(x.shape)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        flat = u.ravel()
        target = flat * self.total
        panel = np.searchsorted(self.cum, target, side="right") - 1
        panel = np.clip(panel, 0, len(self.cum) - 2)
        a = self.edges[panel].copy()
        b = self.edges[panel + 1].copy()
        base = self.cum[panel]
        span = self.cum[panel + 1] - base
        frac = np.where(span > 0, (target - base) / np.where(span > 0, span, 1.0), 0.5)
        x = a + np.clip(frac, 0.0, 1.0) * (b - a)
        left = self.edges[panel]
        tol = 1e-13 * (self.hi - self.lo)
        active = np.arange(flat.size)
        for _ in range(60):
            xa, aa, ba = x[active], a[active], b[active]
            g = base[active] + self._partial(left[active], xa) - target[active]
            aa = np.where(g <= 0, xa, aa)
            ba = np.where(g > 0, xa, ba)
            dens = _density(self.dist, xa)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(dens > 0, g / dens, np.inf)
            x_new = xa - step
            outside = ~((x_new >= aa) & (x_new <= ba))
            x_new = np.where(outside, 0.5 * (aa + ba), x_new)
            moving = (np.abs(x_new - xa) > tol) & (ba - aa > tol)
            x[active], a[active], b[active] = x_new, aa, ba
            active = active[moving]
            if active.size == 0:
                break
        x = np.where(flat <= 0.0, self.lo, np.where(flat >= 1.0, self.hi, x))
        return np.clip(x, self.lo, self.hi).reshape(u.shape)


@lru_cache(maxsize=64)
def _table(dist: DistributionSpec) -> _QuadratureCDF:
    return _QuadratureCDF(dist)


def _check_probs(u):
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ParameterError("probabilities must be finite")
    if np.any((u < 0) | (u > 1)):
        raise ParameterError("probabilities must lie in [0, 1]")
    return u


def inverse_cdf(dist: DistributionSpec, u):
    """Quantile function of ``dist``; vectorised over ``u``.

    Returns a float for scalar input, an array otherwise.
    """
    u = _check_probs(u)
    if dist.kind == "uniform":
        out = np.clip(dist.lo + u * (dist.hi - dist.lo), dist.lo, dist.hi)
    else:
        out = _table(dist).ppf(u)
    return float(out) if out.ndim == 0 else out


def cdf(dist: DistributionSpec, x):
    """Cumulative distribution function of ``dist``."""
    x = np.asarray(x, dtype=float)
    if dist.kind == "uniform":
        out = np.clip((x - dist.lo) / (dist.hi - dist.lo), 0.0, 1.0)
    else:
        out = _table(dist).cdf(x)
    return float(out) if out.ndim == 0 else out


def mean(dist: DistributionSpec) -> float:
    """Expectation of ``dist`` by Gauss-Legendre quadrature of its quantile function."""
    if dist.kind == "uniform":
        return 0.5 * (dist.lo + dist.hi)
    t, w = np.polynomial.legendre.leggauss(200)
    return float(0.5 * inverse_cdf(dist, 0.5 * (t + 1)) @ w)


def sample(dist: DistributionSpec, n: int, seed=None) -> NDArray:
    """Draw ``n`` i.i.d. values by inverse-CDF sampling."""
    if n < 1:
        raise ParameterError(f"sample size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    return inverse_cdf(dist, rng.random(n))


def first_primes(k: int) -> list[int]:
    primes: list[int] = []
    cand = 2
    while len(primes) < k:
        if all(cand % p for p in primes if p * p <= cand):
            primes.append(cand)
        cand += 1
    return primes


def radical_inverse(index, base: int) -> NDArray:
    """Van der Corput radical inverse of non-negative integer indices."""
    idx = np.array(index, dtype=np.int64, copy=True)
    out = np.zeros(idx.shape, dtype=float)
    f = 1.0 / base
    while np.any(idx > 0):
        out += f * (idx % base)
        idx //= base
        f /= base
    return out


def halton(dim: int, n: int, skip: int = 0) -> NDArray:
    """Unscrambled Halton points; row ``k`` is the point of index ``skip + k + 1``."""
    if dim < 1 or n < 0 or skip < 0:
        raise ParameterError("halton requires dim >= 1, n >= 0, skip >= 0")
    idx = np.arange(skip + 1, skip + n + 1, dtype=np.int64)
    return np.column_stack([radical_inverse(idx, b) for b in first_primes(dim)])


@dataclass(frozen=True)
class InputSpace:
    """Ordered independent inputs, each a ``(name, DistributionSpec)`` pair."""

    dims: tuple

    def __post_init__(self):
        dims = tuple((str(name), dist) for name, dist in self.dims)
        object.__setattr__(self, "dims", dims)
        if not dims:
            raise ParameterError("input space needs at least one input")
        names = [name for name, _ in dims]
        if len(set(names)) != len(names):
            raise ParameterError(f"input names must be unique: {names}")

    @property
    def p(self) -> int:
        return len(self.dims)

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.dims]

    @property
    def dists(self) -> list[DistributionSpec]:
        return [dist for _, dist in self.dims]

    @property
    def bounds(self) -> NDArray:
        return np.array([[d.lo, d.hi] for d in self.dists])

    def index(self, name: str) -> int:
        return self.names.index(name)

    def from_unit(self, unit) -> NDArray:
        """Map points of the unit hypercube through each input's quantile function."""
        unit = np.atleast_2d(np.asarray(unit, dtype=float))
        return np.column_stack(
            [np.asarray(inverse_cdf(d, unit[:, j])).reshape(-1) for j, d in enumerate(self.dists)]
        )

    def normalize(self, values) -> NDArray:
        """Affine map of each column onto [0, 1] using the input bounds."""
        b = self.bounds
        return (np.asarray(values, dtype=float) - b[:, 0]) / (b[:, 1] - b[:, 0])

    def probability_transform(self, values) -> NDArray:
        """Map each column through its own CDF, giving uniform [0, 1] marginals."""
        values = np.asarray(values, dtype=float)
        out = np.empty_like(values)
        for j, dist in enumerate(self.dists):
            out[..., j] = cdf(dist, values[..., j])
        return out

    def check(self, u) -> NDArray:
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.p:
            raise DomainError(f"expected {self.p} input values, got {u.shape[-1]}")
        b = self.bounds
        if not np.all(np.isfinite(u)) or np.any((u < b[:, 0]) | (u > b[:, 1])):
            raise DomainError(f"input point outside bounds {b.tolist()}")
        return u

    def sample(self, n: int, seed=None) -> NDArray:
        """Plain Monte Carlo design of ``n`` rows."""
        rng = np.random.default_rng(seed)
        return self.from_unit(rng.random((n, self.p)))


def lhs(space: InputSpace, n: int, seed=None) -> NDArray:
    """Latin hypercube design: one point per equiprobable stratum and column."""
    if n < 1:
        raise ParameterError(f"design size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    unit = np.empty((n, space.p))
    for j in range(space.p):
        unit[:, j] = (rng.permutation(n) + rng.random(n)) / n
    return space.from_unit(unit)


@dataclass(frozen=True)
class PickFreezeDesign:
    """Two independent input matrices; ``substituted(i)`` takes column ``i`` from ``Uprime``."""

    U: NDArray
    Uprime: NDArray

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def p(self) -> int:
        return self.U.shape[1]

    @property
    def n_evaluations(self) -> int:
        return self.n * (self.p + 2)

    def substituted(self, i: int) -> NDArray:
        out = self.U.copy()
        out[:, i] = self.Uprime[:, i]
        return out

    def swapped(self) -> "PickFreezeDesign":
        return PickFreezeDesign(self.Uprime, self.U)

    def take(self, rows) -> "PickFreezeDesign":
        return PickFreezeDesign(self.U[rows], self.Uprime[rows])


def pick_freeze(space: InputSpace, n: int, seed=None, generator: str = "mc",
                skip: int = 0) -> PickFreezeDesign:
    """Build the matrices of a first-order pick-and-freeze design.

    With ``generator="halton"`` the first ``p`` Halton coordinates feed ``U``
    and the next ``p`` feed ``Uprime``; ``seed`` is then unused.
    """
    if n < 1:
        raise ParameterError(f"design size must be >= 1, got {n}")
    p = space.p
    if generator == "mc":
        unit = np.random.default_rng(seed).random((n, 2 * p))
    elif generator == "halton":
        unit = halton(2 * p, n, skip)
    else:
        raise ParameterError(f"unknown generator {generator!r}")
    return PickFreezeDesign(space.from_unit(unit[:, :p]), space.from_unit(unit[:, p:]))
