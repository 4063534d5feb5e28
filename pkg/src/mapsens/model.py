"""Map-valued models, their hypograph lift, and synthetic benchmarks."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .errors import DomainError, ParameterError
from .sampling import InputSpace, inverse_cdf
from .setgrid import SetSample


@dataclass(frozen=True)
class DomainGrid:
    """Cell-centred regular lattice on a rectangle."""

    x1_bounds: tuple = (0.0, 1.0)
    x2_bounds: tuple = (0.0, 1.0)
    n1: int = 64
    n2: int = 64

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ParameterError(f"grid sizes must be >= 1, got {self.n1}x{self.n2}")
        for b in (self.x1_bounds, self.x2_bounds):
            if not float(b[0]) < float(b[1]):
                raise ParameterError(f"grid bounds must be ordered, got {b}")

    @property
    def shape(self):
        return (self.n1, self.n2)

    def unit_centers(self):
        """Cell centres rescaled to [0, 1]^2, as two ``(n1, n2)`` arrays."""
        c1 = (np.arange(self.n1) + 0.5) / self.n1
        c2 = (np.arange(self.n2) + 0.5) / self.n2
        return np.meshgrid(c1, c2, indexing="ij")

    def centers(self):
        u1, u2 = self.unit_centers()
        (a1, b1), (a2, b2) = self.x1_bounds, self.x2_bounds
        return a1 + u1 * (b1 - a1), a2 + u2 * (b2 - a2)


@dataclass(frozen=True)
class LevelGrid:
    """Cell-centred lattice of ``nc`` output levels on ``[c_min, c_max]``."""

    c_min: float
    c_max: float
    nc: int

    def __post_init__(self):
        if self.nc < 1:
            raise ParameterError(f"number of levels must be >= 1, got {self.nc}")
        if not (np.isfinite(self.c_min) and np.isfinite(self.c_max) and self.c_min < self.c_max):
            raise ParameterError(f"level bounds must satisfy c_min < c_max, got {self.c_min}, {self.c_max}")

    @property
    def values(self) -> NDArray:
        step = (self.c_max - self.c_min) / self.nc
        return self.c_min + (np.arange(self.nc) + 0.5) * step


@dataclass(frozen=True)
class MapField:
    grid: DomainGrid
    values: NDArray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ParameterError(f"field shape {self.values.shape} != grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("field values must be finite")


def hypograph_levels(values, levels: LevelGrid) -> NDArray:
    """Number of level values ``c <= value`` for every entry of ``values``."""
    return np.searchsorted(levels.values, np.asarray(values), side="right").astype(np.int32)


def lift_hypograph(field: MapField, levels: LevelGrid) -> SetSample:
    """Set ``{(x, c) : c <= field(x)}`` on the lattice ``grid x levels``."""
    return SetSample((*field.grid.shape, levels.nc), levels=hypograph_levels(field.values, levels))


class MapModel:
    """Deterministic map ``u -> field`` on a fixed grid.

    Subclasses implement ``_fields`` on an ``(n, p)`` array of checked inputs.
    """

    kind = "abstract"

    def __init__(self, space: InputSpace, grid: DomainGrid):
        self.space = space
        self.grid = grid

    def _fields(self, U: NDArray) -> NDArray:
        raise NotImplementedError

    def evaluate_batch(self, U) -> NDArray:
        """Fields for each row of ``U`` as an ``(n, n1, n2)`` array."""
        U = self.space.check(np.atleast_2d(np.asarray(U, dtype=float)))
        out = self._fields(U)
        return np.asarray(out, dtype=float).reshape(U.shape[0], *self.grid.shape)

    def evaluate(self, u) -> MapField:
        u = np.asarray(u, dtype=float)
        if u.ndim != 1:
            raise DomainError("evaluate expects a single input vector")
        return MapField(self.grid, self.evaluate_batch(u[None, :])[0])

    def evaluate_sets(self, U, levels: LevelGrid) -> NDArray:
        """Hypograph levels ``(n, n1, n2)`` of the fields at each row of ``U``."""
        return hypograph_levels(self.evaluate_batch(U), levels)


# Named spatial basis maps, evaluated on unit-rescaled cell centres.
def _basis(spec, x1, x2):
    if callable(spec):
        return np.broadcast_to(spec(x1, x2), x1.shape).astype(float)
    if isinstance(spec, (int, float)):
        return np.full(x1.shape, float(spec))
    if isinstance(spec, str):
        spec = {"name": spec}
    name = spec["name"]
    scale = float(spec.get("scale", 1.0))
    if name == "const":
        out = np.ones_like(x1)
    elif name == "zero":
        out = np.zeros_like(x1)
    elif name in ("sin1", "sin2", "cos1", "cos2"):
        x = x1 if name.endswith("1") else x2
        freq = float(spec.get("freq", 1.0))
        fn = np.sin if name.startswith("sin") else np.cos
        out = fn(2 * np.pi * freq * x)
    elif name in ("x1", "x2"):
        out = (x1 if name == "x1" else x2).copy()
    elif name == "bump":
        c1, c2 = spec.get("center", (0.5, 0.5))
        w = float(spec.get("width", 0.2))
        out = np.exp(-((x1 - c1) ** 2 + (x2 - c2) ** 2) / (2 * w * w))
    else:
        raise ParameterError(f"unknown basis map {name!r}")
    return scale * out


def _link(name):
    links = {
        "identity": lambda v: v,
        "square": np.square,
        "cube": lambda v: v ** 3,
        "exp": np.exp,
        "sin": np.sin,
    }
    if callable(name):
        return name
    try:
        return links[name]
    except KeyError:
        raise ParameterError(f"unknown link function {name!r}") from None


@dataclass
class SeparableTerm:
    """One additive term ``basis(x) * link(u_input)``."""

    input: int
    basis: object = "const"
    link: object = "identity"


class SeparableModel(MapModel):
    """Additive model ``m(x) + sum_t a_t(x) g_t(u_{i_t})``; pointwise indices are known."""

    kind = "synthetic-separable"

    def __init__(self, space, grid, terms, mean="zero"):
        super().__init__(space, grid)
        self.terms = [t if isinstance(t, SeparableTerm) else SeparableTerm(**t) for t in terms]
        for t in self.terms:
            if not 0 <= t.input < space.p:
                raise ParameterError(f"term input index {t.input} out of range for p={space.p}")
        x1, x2 = grid.unit_centers()
        self._mean = _basis(mean, x1, x2)
        self._maps = np.stack([_basis(t.basis, x1, x2) for t in self.terms]) if self.terms else \
            np.zeros((0, *grid.shape))
        self._links = [_link(t.link) for t in self.terms]

    def _fields(self, U):
        out = np.broadcast_to(self._mean, (U.shape[0], *self.grid.shape)).copy()
        for a, g, t in zip(self._maps, self._links, self.terms):
            out += g(U[:, t.input])[:, None, None] * a[None]
        return out

    def main_effect_variances(self, order: int = 400) -> NDArray:
        """``(p, n1, n2)`` variances of each input's main effect, by quadrature."""
        t, w = np.polynomial.legendre.leggauss(order)
        probs, w = 0.5 * (t + 1), 0.5 * w
        var = np.zeros((self.space.p, *self.grid.shape))
        for i, dist in enumerate(self.space.dists):
            idx = [k for k, term in enumerate(self.terms) if term.input == i]
            if not idx:
                continue
            vals = np.asarray(inverse_cdf(dist, probs))
            g = np.stack([self._links[k](vals) for k in idx])
            g = g - (g @ w)[:, None]
            cov = (g * w) @ g.T
            a = self._maps[idx]
            var[i] = np.einsum("kab,kl,lab->ab", a, cov, a)
        return var

    def analytic_indices(self) -> NDArray:
        """Exact first-order pointwise Sobol' indices ``(p, n1, n2)``."""
        var = self.main_effect_variances()
        total = var.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(total > 0, var / np.where(total > 0, total, 1.0), 0.0)


class PlumeModel(MapModel):
    """Anisotropic Gaussian plume whose heading, width and strength follow designated inputs.

    Roles are given by input name.  ``angle`` and ``spread`` are
    ``{"input": name, "range": [lo, hi]}`` tables (or plain numbers for a
    fixed value); ``amplitude`` is a list of ``{"input": name, "coef": c}``
    giving the factor ``1 + c * t`` with ``t`` the input rescaled to [0, 1].
    Inputs not named in any role have no effect.
    """

    kind = "synthetic-plume"

    def __init__(self, space, grid, source=(0.15, 0.5), angle=0.0, spread=0.12,
                 distance=0.45, along=0.25, base=1.0, amplitude=(), background=0.0):
        super().__init__(space, grid)
        self.source = tuple(float(s) for s in source)
        self.angle = self._role(angle, "angle")
        self.spread = self._role(spread, "spread")
        self.distance = float(distance)
        self.along = float(along)
        self.base = float(base)
        self.background = float(background)
        self.amplitude = []
        for item in amplitude:
            idx = self._input_index(item["input"], "amplitude")
            coef = float(item.get("coef", 1.0))
            if coef <= -1:
                raise ParameterError("amplitude coefficients must be > -1")
            self.amplitude.append((idx, coef))
        if self.along <= 0 or self.distance < 0:
            raise ParameterError("plume needs along > 0 and distance >= 0")
        if self._role_range(self.spread)[0] <= 0:
            raise ParameterError("plume spread must be > 0")

    def _input_index(self, name, role):
        if name not in self.space.names:
            raise ParameterError(f"plume role '{role}' refers to unknown input {name!r}")
        return self.space.index(name)

    def _role(self, spec, role):
        if isinstance(spec, (int, float)):
            return (None, float(spec), float(spec))
        idx = self._input_index(spec["input"], role)
        lo, hi = (float(v) for v in spec["range"])
        return (idx, lo, hi)

    @staticmethod
    def _role_range(role):
        return min(role[1], role[2]), max(role[1], role[2])

    def _role_value(self, role, T):
        idx, lo, hi = role
        if idx is None:
            return np.full(T.shape[0], lo)
        return lo + T[:, idx] * (hi - lo)

    @property
    def active_inputs(self) -> set:
        out = {r[0] for r in (self.angle, self.spread) if r[0] is not None}
        return out | {idx for idx, _ in self.amplitude}

    def _fields(self, U):
        T = self.space.normalize(U)
        x1, x2 = self.grid.unit_centers()
        phi = self._role_value(self.angle, T)[:, None, None]
        width = self._role_value(self.spread, T)[:, None, None]
        amp = np.full(U.shape[0], self.base)
        for idx, coef in self.amplitude:
            amp = amp * (1.0 + coef * T[:, idx])
        r1 = x1[None] - self.source[0]
        r2 = x2[None] - self.source[1]
        along = r1 * np.cos(phi) + r2 * np.sin(phi)
        cross = -r1 * np.sin(phi) + r2 * np.cos(phi)
        q = ((along - self.distance) / self.along) ** 2 + (cross / width) ** 2
        return self.background + amp[:, None, None] * np.exp(-0.5 * q)


class TableModel(MapModel):
    """Precomputed ``(u, field)`` records.

    Stored inputs are returned exactly; other inputs fall back to the nearest
    record in bounds-normalised coordinates unless ``strict`` is set.
    """

    kind = "external-table"

    def __init__(self, space, grid, inputs, fields, strict=False):
        super().__init__(space, grid)
        self.inputs = np.asarray(inputs, dtype=float).reshape(-1, space.p)
        self.fields = np.asarray(fields, dtype=float).reshape(-1, *grid.shape)
        if self.inputs.shape[0] != self.fields.shape[0] or self.inputs.shape[0] == 0:
            raise ParameterError("table needs the same positive number of inputs and fields")
        self.strict = strict
        self._norm = space.normalize(self.inputs)

    def _fields(self, U):
        out = np.empty((U.shape[0], *self.grid.shape))
        norm = self.space.normalize(U)
        for r, (u, z) in enumerate(zip(U, norm)):
            hit = np.flatnonzero(np.all(self.inputs == u, axis=1))
            if hit.size:
                out[r] = self.fields[hit[0]]
            elif self.strict:
                raise DomainError(f"no stored record for input {u.tolist()}")
            else:
                out[r] = self.fields[np.argmin(((self._norm - z) ** 2).sum(axis=1))]
        return out


def read_table(path, space: InputSpace, grid_bounds=((0.0, 1.0), (0.0, 1.0)), strict=False) -> TableModel:
    """Load an ``external-table`` file.

    Layout: a header line ``nx1 nx2``; then for each record one line holding
    the ``p`` input values followed by ``nx1 * nx2`` field values in row-major
    order (spread over any number of lines).
    """
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or len(lines[0]) != 2:
        raise ParameterError(f"{path}: header must be 'nx1 nx2'")
    n1, n2 = (int(t) for t in lines[0])
    size = n1 * n2
    inputs, fields = [], []
    pos = 1
    while pos < len(lines):
        u = [float(t) for t in lines[pos]]
        if len(u) != space.p:
            raise ParameterError(f"{path}: record at line {pos + 1} has {len(u)} inputs, expected {space.p}")
        pos += 1
        vals: list[float] = []
        while len(vals) < size and pos < len(lines):
            vals.extend(float(t) for t in lines[pos])
            pos += 1
        if len(vals) != size:
            raise ParameterError(f"{path}: record {len(inputs) + 1} has {len(vals)} values, expected {size}")
        inputs.append(u)
        fields.append(vals)
    grid = DomainGrid(tuple(grid_bounds[0]), tuple(grid_bounds[1]), n1, n2)
    return TableModel(space, grid, inputs, np.array(fields).reshape(-1, n1, n2), strict=strict)


def write_table(path, model_inputs, fields):
    """Write records in the ``external-table`` layout."""
    fields = np.asarray(fields, dtype=float)
    n1, n2 = fields.shape[1:]
    with open(path, "w") as fh:
        fh.write(f"{n1} {n2}\n")
        for u, f in zip(np.atleast_2d(model_inputs), fields):
            fh.write(" ".join(repr(float(v)) for v in u) + "\n")
            for row in f:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


class CallableModel(MapModel):
    """Wrap ``func(U, x1, x2) -> (n, n1, n2)`` with unit-rescaled centres ``x1, x2``."""

    kind = "callable"

    def __init__(self, space, grid, func):
        super().__init__(space, grid)
        self.func = func

    def _fields(self, U):
        x1, x2 = self.grid.unit_centers()
        return self.func(U, x1, x2)


class FrozenModel(MapModel):
    """Restrict a model to its non-frozen inputs; frozen ones are held at fixed values."""

    def __init__(self, model: MapModel, fixed: dict):
        keep = [(n, d) for n, d in model.space.dims if n not in fixed]
        unknown = set(fixed) - set(model.space.names)
        if unknown:
            raise ParameterError(f"cannot freeze unknown inputs {sorted(unknown)}")
        super().__init__(InputSpace(tuple(keep)), model.grid)
        self.inner = model
        self.fixed = dict(fixed)
        self.kind = model.kind
        self._free = [model.space.index(n) for n, _ in keep]
        self._full = np.array([self.fixed.get(n, 0.0) for n in model.space.names], dtype=float)

    def _fields(self, U):
        full = np.tile(self._full, (U.shape[0], 1))
        full[:, self._free] = U
        return self.inner.evaluate_batch(full)


class CountingModel(MapModel):
    """Pass-through wrapper counting evaluated input rows."""

    def __init__(self, model: MapModel):
        super().__init__(model.space, model.grid)
        self.inner = model
        self.kind = model.kind
        self.count = 0

    def _fields(self, U):
        self.count += U.shape[0]
        return self.inner.evaluate_batch(U)


def make_synthetic(kind: str, space: InputSpace, grid: DomainGrid, params: dict | None = None) -> MapModel:
    """Build a synthetic benchmark model.

    ``synthetic-separable`` takes ``terms`` (list of dicts with ``input`` given
    by name or index, ``basis`` and ``link``) and an optional ``mean`` basis.
    ``synthetic-plume`` takes the keyword arguments of :class:`PlumeModel`.
    """
    params = dict(params or {})
    if kind == "synthetic-separable":
        terms = []
        for t in params.pop("terms", []):
            t = dict(t)
            if isinstance(t.get("input"), str):
                if t["input"] not in space.names:
                    raise ParameterError(f"separable term refers to unknown input {t['input']!r}")
                t["input"] = space.index(t["input"])
            terms.append(SeparableTerm(**t))
        return SeparableModel(space, grid, terms, **params)
    if kind == "synthetic-plume":
        return PlumeModel(space, grid, **params)
    raise ParameterError(f"unknown synthetic model kind {kind!r}")


def auto_levels(model: MapModel, nc: int, n_pilot: int = 64, seed=0, widen: float = 0.05) -> LevelGrid:
    """Level range from the extreme field values of a Monte Carlo pilot sample, widened by ``widen`` of the range."""
    fields = model.evaluate_batch(model.space.sample(n_pilot, seed))
    lo, hi = float(fields.min()), float(fields.max())
    span = hi - lo
    if span <= 0:
        span = max(abs(lo), 1.0)
    return LevelGrid(lo - widen * span, hi + widen * span, nc)
