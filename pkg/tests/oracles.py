"""Independent reference computations used by the tests.

Each oracle is written from the formula alone, with loops and scipy
quadrature, and shares no code with the package.
"""

import math

import numpy as np
from scipy import integrate, stats


def truncated_density(kind, lo, hi, **p):
    """Normalised density of a truncated normal or skew-normal, by adaptive quadrature."""
    if kind == "truncated-normal":
        raw = lambda x: stats.norm.pdf(x, p["mu"], p["sigma"])  # noqa: E731
    else:
        raw = lambda x: stats.skewnorm.pdf(x, p["alpha"], p["xi"], p["omega"])  # noqa: E731
    z, _ = integrate.quad(raw, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=200)
    return lambda x: raw(x) / z


def quadrature_cdf(kind, lo, hi, **p):
    pdf = truncated_density(kind, lo, hi, **p)
    return lambda x: integrate.quad(pdf, lo, x, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


def bisection_ppf(cdf, lo, hi, u, tol=1e-12):
    a, b = lo, hi
    while b - a > tol:
        mid = 0.5 * (a + b)
        if cdf(mid) < u:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def quadrature_mean(kind, lo, hi, **p):
    pdf = truncated_density(kind, lo, hi, **p)
    return integrate.quad(lambda x: x * pdf(x), lo, hi, epsabs=1e-12, limit=200)[0]


def rejection_skew_normal(xi, omega, alpha, lo, hi, n, seed):
    """Truncated skew-normal draws by rejecting untruncated scipy draws outside [lo, hi]."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        x = stats.skewnorm.rvs(alpha, xi, omega, size=4 * n, random_state=rng)
        out.extend(x[(x >= lo) & (x <= hi)].tolist())
    return np.array(out[:n])


def radical_inverse(k, base):
    out, f = 0.0, 1.0 / base
    while k > 0:
        out += f * (k % base)
        k //= base
        f /= base
    return out


def mask_from_levels(levels, nc):
    """Explicit 3-D boolean membership, cell by cell."""
    n1, n2 = levels.shape
    mask = np.zeros((n1, n2, nc), dtype=bool)
    for i in range(n1):
        for j in range(n2):
            for k in range(nc):
                mask[i, j, k] = k < levels[i, j]
    return mask


def xor_volume(mask_a, mask_b):
    count = 0
    for a, b in zip(mask_a.ravel(), mask_b.ravel()):
        if a != b:
            count += 1
    return count / mask_a.size


def universal_transcription(d, u):
    """Direct transcription of the rank-based numerator and denominator.

    ``d[j][l]`` is the volume for sample ``j`` and test set ``l``; ``u[j]`` the
    input values.  ``N(j)`` is the sample that follows ``j`` in ascending
    order of ``u``, the largest wrapping to the smallest.
    """
    n, n_a = len(d), len(d[0])
    order = sorted(range(n), key=lambda j: (u[j], j))
    nxt = {}
    for pos, j in enumerate(order):
        nxt[j] = order[(pos + 1) % n]
    num = 0.0
    sq_mean = 0.0
    den = 0.0
    for l in range(n_a):
        cross = 0.0
        first = 0.0
        second = 0.0
        for j in range(n):
            cross += d[j][l] * d[nxt[j]][l]
            first += d[j][l]
            second += d[j][l] ** 2
        num += cross / n
        den += second / n
        sq_mean += (first / n) ** 2
    return num / n_a - sq_mean / n_a, den / n_a - sq_mean / n_a


def sobolev1(x, y):
    return 1 + (x - 0.5) * (y - 0.5) + 0.5 * ((x - y) ** 2 - abs(x - y) + 1 / 6)


def hsic_transcription(u, vol, kernel, sigma2):
    """Pairwise sum over j < l of (K(u_j, u_l) - 1) * exp(-vol_jl / (2 sigma2)), times 2 / (n(n-1))."""
    n = len(u)
    total = 0.0
    for j in range(n):
        for l in range(j + 1, n):
            total += (kernel(u[j], u[l]) - 1) * math.exp(-vol[j][l] / (2 * sigma2))
    return 2 * total / (n * (n - 1))


def anova_quad_kernel(base):
    """ANOVA transform with adaptive scipy quadrature instead of fixed Gauss-Legendre."""
    opts = dict(epsabs=1e-12, epsrel=1e-12, limit=200)

    def m(x):
        return integrate.quad(lambda z: base(x, z), 0, 1, points=[x], **opts)[0]

    mu = integrate.quad(m, 0, 1, **opts)[0]
    return lambda x, y: 1 + base(x, y) - m(x) - m(y) + mu


def zero_mean_defect(K, y):
    """``int_0^1 (K(x, y) - 1) dx`` by adaptive quadrature."""
    return integrate.quad(lambda x: K(x, y) - 1, 0, 1, points=[y], epsabs=1e-12, limit=200)[0]


def ball_mask(shape, a):
    n1, n2, nc = shape
    mask = np.zeros(shape, dtype=bool)
    for i in range(n1):
        for j in range(n2):
            for k in range(nc):
                c = ((i + 0.5) / n1, (j + 0.5) / n2, (k + 0.5) / nc)
                mask[i, j, k] = sum((v - 0.5) ** 2 for v in c) <= a * a
    return mask
