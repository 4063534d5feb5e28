"""HSIC indices for set-valued outputs.

Input kernels act on inputs rescaled to [0, 1] by their bounds and are used
in ANOVA form ``K = 1 + k`` where ``k`` has zero-mean sections.  The output
kernel is ``exp(-vol(A delta B) / (2 sigma2))`` with volumes as fractions of
the lattice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from .errors import DegenerateModelError, ParameterError
from .resample import BootstrapSpec, interval, resample_indices, run_replicates
from .setgrid import SetSample, level_stack, pairwise_symdiff, symdiff_volume

KERNELS = ("sobolev1", "gaussian", "laplace", "matern32", "matern52")
_SQRT3, _SQRT5 = np.sqrt(3.0), np.sqrt(5.0)


@dataclass(frozen=True)
class InputKernelSpec:
    """Input kernel choice; ``bandwidth`` is sigma for gaussian and h otherwise."""

    kind: str = "sobolev1"
    bandwidth: float = 0.2
    anova: bool = True
    quad_order: int = 64

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ParameterError(f"unknown input kernel {self.kind!r} (expected one of {', '.join(KERNELS)})")
        if not self.bandwidth > 0:
            raise ParameterError(f"kernel bandwidth must be > 0, got {self.bandwidth}")
        if self.quad_order < 2:
            raise ParameterError("quadrature order must be >= 2")


def base_kernel(kind: str, bandwidth: float = 0.2):
    """Elementwise kernel ``k(x, y)`` on arrays."""
    h = float(bandwidth)
    if kind == "sobolev1":
        def k(x, y):
            d = np.abs(x - y)
            return 1.0 + (x - 0.5) * (y - 0.5) + 0.5 * (d * d - d + 1.0 / 6.0)
    elif kind == "gaussian":
        def k(x, y):
            return np.exp(-0.5 * ((x - y) / h) ** 2)
    elif kind == "laplace":
        def k(x, y):
            return np.exp(-np.abs(x - y) / h)
    elif kind == "matern32":
        def k(x, y):
            r = _SQRT3 * np.abs(x - y) / h
            return (1.0 + r) * np.exp(-r)
    elif kind == "matern52":
        def k(x, y):
            r = np.abs(x - y) / h
            return (1.0 + _SQRT5 * r + 5.0 / 3.0 * r * r) * np.exp(-_SQRT5 * r)
    else:
        raise ParameterError(f"unknown input kernel {kind!r}")
    return k


class AnovaKernel:
    """``K(x, y) = 1 + k(x, y) - m(x) - m(y) + mu`` with quadrature means.

    ``m(x)`` integrates ``k(x, .)`` over [0, 1] with two Gauss-Legendre rules
    of order ``order``, split at ``x`` where stationary kernels have a kink;
    ``mu`` integrates ``m``.
    """

    def __init__(self, k, order: int = 64):
        self.k = k
        t, w = np.polynomial.legendre.leggauss(order)
        self._t, self._w = 0.5 * (t + 1.0), 0.5 * w
        self.mu = float(self.mean_section(self._t) @ self._w)

    def mean_section(self, x) -> NDArray:
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 1)
        left = flat * self._t
        right = flat + (1.0 - flat) * self._t
        out = flat[:, 0] * (self.k(flat, left) @ self._w) + (1.0 - flat[:, 0]) * (self.k(flat, right) @ self._w)
        return out.reshape(x.shape)

    def __call__(self, x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return 1.0 + self.k(x, y) - self.mean_section(x) - self.mean_section(y) + self.mu

    def gram(self, x) -> NDArray:
        x = np.asarray(x, dtype=float)
        m = self.mean_section(x)
        return 1.0 + self.k(x[:, None], x[None, :]) - m[:, None] - m[None, :] + self.mu


def anova_transform(k, order: int = 64) -> AnovaKernel:
    """ANOVA version of a bounded kernel on [0, 1]^2."""
    return AnovaKernel(k, order)


def kernel_function(spec: InputKernelSpec):
    """Callable ``K(x, y)`` for ``spec``; Sobolev is used as is, others are ANOVA-transformed if requested."""
    k = base_kernel(spec.kind, spec.bandwidth)
    if spec.kind == "sobolev1" or not spec.anova:
        return k
    return anova_transform(k, spec.quad_order)


def _check_unit(x):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any((x < -1e-12) | (x > 1 + 1e-12)):
        raise ParameterError("kernel inputs must lie in [0, 1] after rescaling")
    return np.clip(x, 0.0, 1.0)


def input_kernel(spec: InputKernelSpec, x, y):
    """Evaluate the input kernel at rescaled points ``x, y`` in [0, 1]."""
    out = kernel_function(spec)(_check_unit(x), _check_unit(y))
    return float(out) if np.ndim(out) == 0 else out


def input_gram(spec: InputKernelSpec, x) -> NDArray:
    x = _check_unit(x)
    K = kernel_function(spec)
    if isinstance(K, AnovaKernel):
        return K.gram(x)
    return K(x[:, None], x[None, :])


def set_kernel(a: SetSample, b: SetSample, sigma2: float) -> float:
    if not sigma2 > 0:
        raise ParameterError(f"sigma2 must be > 0, got {sigma2}")
    return float(np.exp(-symdiff_volume(a, b) / (2.0 * sigma2)))


def _levels(sets):
    return sets if isinstance(sets, np.ndarray) else level_stack(sets)


def _pairwise(sets, nc=None):
    if isinstance(sets, np.ndarray):
        if nc is None:
            raise ParameterError("nc is required when sets are given as a level array")
        return pairwise_symdiff(sets, nc)
    sets = list(sets)
    if all(s.is_hypograph for s in sets):
        return pairwise_symdiff(level_stack(sets), sets[0].shape[2])
    n = len(sets)
    out = np.zeros((n, n))
    for j in range(n):
        for l in range(j + 1, n):
            out[j, l] = out[l, j] = symdiff_volume(sets[j], sets[l])
    return out


def median_from_distances(dist: NDArray) -> float:
    """Lower median of the off-diagonal upper-triangle entries."""
    n = dist.shape[0]
    if n < 2:
        raise ParameterError("median bandwidth needs at least two sets")
    vals = np.sort(dist[np.triu_indices(n, 1)])
    if not vals[-1] > 0:
        raise DegenerateModelError("all output sets are identical")
    sigma2 = float(vals[int(np.ceil(vals.size / 2)) - 1])
    if not sigma2 > 0:
        raise DegenerateModelError("median pairwise symmetric difference is zero")
    return sigma2


def median_bandwidth(sets, nc=None) -> float:
    """``sigma2`` as the lower median of pairwise symmetric-difference volumes."""
    return median_from_distances(_pairwise(sets, nc))


def _ustat(M: NDArray, weights: NDArray | None = None) -> float:
    """Mean of ``M`` over ordered pairs of distinct sample points.

    ``weights`` are bootstrap multiplicities; copies of the same original
    point are never paired, so resampled ties do not enter the diagonal.
    """
    n = M.shape[0]
    if weights is None:
        return float((M.sum() - np.trace(M)) / (n * (n - 1)))
    w = weights.astype(float)
    w2 = w * w
    return float((w @ M @ w - w2 @ np.diag(M)) / (w.sum() ** 2 - w2.sum()))


def _rescale(inputs, bounds):
    inputs = np.asarray(inputs, dtype=float)
    if bounds is None:
        return inputs
    b = np.asarray(bounds, dtype=float)
    return (inputs - b[:, 0]) / (b[:, 1] - b[:, 0])


def _specs(kernels, p):
    if isinstance(kernels, InputKernelSpec):
        return [kernels] * p
    kernels = list(kernels)
    if len(kernels) != p:
        raise ParameterError(f"{len(kernels)} kernel specs for {p} inputs")
    return kernels


def hsic_from_grams(A: NDArray, L: NDArray) -> float:
    """U-statistic of ``A * L`` over pairs, with ``A`` the centred input Gram (``K - 1``)."""
    return _ustat(A * L)


def hsic_set(i: int, inputs, sets, kernel: InputKernelSpec, sigma2: float, bounds=None, nc=None) -> float:
    """HSIC between input column ``i`` and the output sets.

    ``bounds`` (``(p, 2)``) rescales the inputs to [0, 1]; without it the
    inputs are assumed already rescaled.
    """
    x = _rescale(inputs, bounds)
    n = x.shape[0]
    if n < 2:
        raise ParameterError("need at least two samples")
    L = np.exp(-_pairwise(sets, nc) / (2.0 * sigma2))
    return hsic_from_grams(input_gram(kernel, x[:, i]) - 1.0, L)


def hsic_total(inputs, sets, kernels, sigma2: float, bounds=None, nc=None) -> float:
    """HSIC between the whole input vector (product kernel) and the output sets."""
    x = _rescale(inputs, bounds)
    specs = _specs(kernels, x.shape[1])
    K = np.ones((x.shape[0], x.shape[0]))
    for j, spec in enumerate(specs):
        K *= input_gram(spec, x[:, j])
    L = np.exp(-_pairwise(sets, nc) / (2.0 * sigma2))
    return hsic_from_grams(K - 1.0, L)


@dataclass
class HsicEstimate:
    name: str
    hsic: float
    total: float
    index: float
    sigma2: float
    n: int
    kernel: str
    ci: tuple | None = None
    replicates: NDArray | None = None
    pvalues: dict = field(default_factory=dict)


class HsicAnalysis:
    """Gram matrices of one sample, shared by indices, intervals and tests."""

    def __init__(self, inputs, sets, kernels=InputKernelSpec(), sigma2=None, bounds=None, nc=None,
                 names=None):
        x = _rescale(inputs, bounds)
        self.n, self.p = x.shape
        if self.n < 2:
            raise ParameterError("need at least two samples")
        self.names = list(names) if names is not None else [f"u{j + 1}" for j in range(self.p)]
        self.specs = _specs(kernels, self.p)
        dist = _pairwise(sets, nc)
        self.sigma2 = median_from_distances(dist) if sigma2 is None else float(sigma2)
        if not self.sigma2 > 0:
            raise ParameterError(f"sigma2 must be > 0, got {self.sigma2}")
        self.L = np.exp(-dist / (2.0 * self.sigma2))
        self.A = [input_gram(spec, x[:, j]) - 1.0 for j, spec in enumerate(self.specs)]
        K = np.ones((self.n, self.n))
        for a in self.A:
            K *= a + 1.0
        self.A_total = K - 1.0

    def hsic(self, i: int, weights=None) -> float:
        return _ustat(self.A[i] * self.L, weights)

    def total(self, weights=None) -> float:
        return _ustat(self.A_total * self.L, weights)

    def indices(self, weights=None) -> NDArray:
        total = self.total(weights)
        if not total > 0:
            raise DegenerateModelError("total HSIC is not positive")
        return np.array([self.hsic(i, weights) for i in range(self.p)]) / total

    def estimate(self, i: int, bootstrap: BootstrapSpec | None = None) -> HsicEstimate:
        total = self.total()
        if not total > 0:
            raise DegenerateModelError("total HSIC is not positive")
        h = self.hsic(i)
        out = HsicEstimate(self.names[i], h, total, h / total, self.sigma2, self.n, self.specs[i].kind)
        if bootstrap is not None:
            counts = [np.bincount(idx, minlength=self.n) for idx in resample_indices(self.n, bootstrap)]
            reps, _ = run_replicates(lambda w: self.hsic(i, w) / self.total(w), counts)
            out.replicates = reps
            out.ci = interval(out.index, reps, bootstrap)
        return out

    def _null(self, i: int, B: int, seed):
        rng = np.random.default_rng(seed)
        M = self.A[i]
        out = np.empty(B)
        for b in range(B):
            perm = rng.permutation(self.n)
            out[b] = _ustat(M[np.ix_(perm, perm)] * self.L)
        return out

    def pvalue(self, i: int, method: str = "gamma", B: int = 200, seed=0) -> float:
        """Independence test p-value for input ``i``.

        ``permutation`` returns ``(1 + #{H_b >= H}) / (1 + B)``.  ``gamma``
        fits a gamma law by moments to the permutation null of ``n`` times the
        V-statistic (which differs from the U-statistic by a permutation-invariant
        shift) and returns its upper tail at the observed value.
        """
        if method not in ("gamma", "permutation"):
            raise ParameterError(f"unknown p-value method {method!r}")
        if self.n < 10:
            raise ParameterError("independence test needs n >= 10")
        if method == "gamma" and B < 20:
            raise ParameterError("gamma fit needs at least 20 permutations")
        if B < 1:
            raise ParameterError("need at least one permutation")
        observed = self.hsic(i)
        null = self._null(i, B, seed)
        if method == "permutation":
            return float((1 + np.count_nonzero(null >= observed)) / (1 + B))
        return float(self._gamma_tail(i, null)(observed))

    def _gamma_tail(self, i: int, null: NDArray):
        """Upper-tail function of the moment-fitted gamma law, on the U-statistic scale."""
        n = self.n
        shift = np.trace(self.A[i]) / n
        v_null = (n - 1) * null + shift  # n * V-statistic
        mean, var = v_null.mean(), v_null.var(ddof=1)
        if not (mean > 0 and var > 0):
            raise DegenerateModelError("permutation null has no spread")
        shape, scale = mean * mean / var, var / mean
        return lambda h: stats.gamma.sf((n - 1) * np.asarray(h) + shift, shape, scale=scale)

    def pvalue_spread(self, i: int, bootstrap: BootstrapSpec, B: int = 200, seed=0) -> float:
        """Standard deviation of the gamma p-value over bootstrap replicates of the statistic.

        The null law is fitted once on the full sample; only the observed
        statistic is resampled.
        """
        if self.n < 10 or B < 20:
            raise ParameterError("p-value spread needs n >= 10 and at least 20 permutations")
        tail = self._gamma_tail(i, self._null(i, B, seed))
        counts = [np.bincount(idx, minlength=self.n) for idx in resample_indices(self.n, bootstrap)]
        reps, _ = run_replicates(lambda w: float(tail(self.hsic(i, w))), counts)
        return float(np.std(reps, ddof=1))


def s_hsic(i: int, inputs, sets, kernels=InputKernelSpec(), sigma2=None, bounds=None, nc=None,
           bootstrap: BootstrapSpec | None = None, names=None) -> HsicEstimate:
    """Normalised HSIC index of input ``i`` with an optional bootstrap interval."""
    return HsicAnalysis(inputs, sets, kernels, sigma2, bounds, nc, names).estimate(i, bootstrap)


def independence_pvalue(i: int, inputs, sets, kernel: InputKernelSpec, sigma2=None, method: str = "gamma",
                        B_perm: int = 200, seed=0, bounds=None, nc=None) -> float:
    """P-value of the HSIC independence test between input ``i`` and the output sets."""
    inputs = np.asarray(inputs, dtype=float)
    return HsicAnalysis(inputs, sets, kernel, sigma2, bounds, nc).pvalue(i, method, B_perm, seed)
