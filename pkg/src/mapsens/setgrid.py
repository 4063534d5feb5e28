"""Random sets on a regular 3-D lattice.

Sets coming from maps are hypographs: each 2-D cell holds a level ``l`` and
the cell column contains the lattice points ``k < l``.  Arbitrary sets (balls,
cubes) use a packed bit mask.  Every volume is a fraction of the lattice size,
i.e. of the rescaled unit cube.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.distance import pdist, squareform

from .errors import GridMismatchError, ParameterError


class SetSample:
    """Immutable subset of an ``(n1, n2, nc)`` lattice."""

    __slots__ = ("shape", "_levels", "_packed")

    def __init__(self, shape, levels=None, packed=None):
        self.shape = tuple(int(s) for s in shape)
        if len(self.shape) != 3 or min(self.shape) < 1:
            raise ParameterError(f"lattice shape must be three positive sizes, got {shape}")
        if (levels is None) == (packed is None):
            raise ParameterError("give exactly one of levels or packed")
        if levels is not None:
            levels = np.asarray(levels)
            if levels.shape != self.shape[:2]:
                raise ParameterError(f"levels shape {levels.shape} != {self.shape[:2]}")
            if levels.size and (levels.min() < 0 or levels.max() > self.shape[2]):
                raise ParameterError(f"levels must lie in [0, {self.shape[2]}]")
            levels = levels.astype(np.int32)
            levels.setflags(write=False)
        else:
            packed = np.asarray(packed, dtype=np.uint8)
            packed.setflags(write=False)
        self._levels = levels
        self._packed = packed

    @classmethod
    def from_levels(cls, levels, nc: int) -> "SetSample":
        levels = np.asarray(levels)
        return cls((*levels.shape, nc), levels=levels)

    @classmethod
    def from_mask(cls, mask) -> "SetSample":
        mask = np.asarray(mask, dtype=bool)
        return cls(mask.shape, packed=np.packbits(mask.ravel()))

    @classmethod
    def empty(cls, shape) -> "SetSample":
        return cls(shape, levels=np.zeros(shape[:2], dtype=np.int32))

    @classmethod
    def full(cls, shape) -> "SetSample":
        return cls(shape, levels=np.full(shape[:2], shape[2], dtype=np.int32))

    @property
    def m(self) -> int:
        return self.shape[0] * self.shape[1] * self.shape[2]

    @property
    def is_hypograph(self) -> bool:
        return self._levels is not None

    @property
    def levels(self) -> NDArray:
        if self._levels is None:
            raise ParameterError("set is stored as a mask; call to_hypograph() first")
        return self._levels

    def mask(self) -> NDArray:
        if self._levels is not None:
            return np.arange(self.shape[2]) < self._levels[..., None]
        bits = np.unpackbits(self._packed, count=self.m)
        return bits.reshape(self.shape).astype(bool)

    def packed(self) -> NDArray:
        if self._packed is not None:
            return self._packed
        return np.packbits(self.mask().ravel())

    def count(self) -> int:
        if self._levels is not None:
            return int(self._levels.sum(dtype=np.int64))
        return int(np.bitwise_count(self._packed).sum(dtype=np.int64))

    def to_hypograph(self) -> "SetSample":
        """Return the level form; raises if some column is not a prefix."""
        if self._levels is not None:
            return self
        mask = self.mask()
        levels = mask.sum(axis=2)
        if not np.array_equal(mask, np.arange(self.shape[2]) < levels[..., None]):
            raise ParameterError("set is not column-monotone (not a hypograph)")
        return SetSample(self.shape, levels=levels)

    def as_mask_form(self) -> "SetSample":
        return self if self._packed is not None else SetSample(self.shape, packed=self.packed())

    def __eq__(self, other):
        if not isinstance(other, SetSample) or self.shape != other.shape:
            return NotImplemented
        if self.is_hypograph and other.is_hypograph:
            return bool(np.array_equal(self._levels, other._levels))
        return bool(np.array_equal(self.packed(), other.packed()))

    __hash__ = None

    def __repr__(self):
        form = "hypograph" if self.is_hypograph else "mask"
        return f"SetSample(shape={self.shape}, form={form}, volume={volume(self):.6g})"

    def rle(self) -> str:
        """Run-length text dump of the flattened mask (``shape`` line, then ``value:length`` runs)."""
        flat = self.mask().ravel().astype(np.int8)
        change = np.flatnonzero(np.diff(flat)) + 1
        starts = np.concatenate([[0], change])
        lengths = np.diff(np.concatenate([starts, [flat.size]]))
        runs = " ".join(f"{flat[s]}:{n}" for s, n in zip(starts, lengths))
        return f"{self.shape[0]} {self.shape[1]} {self.shape[2]}\n{runs}\n"

    @classmethod
    def from_rle(cls, text: str) -> "SetSample":
        head, _, body = text.strip().partition("\n")
        shape = tuple(int(t) for t in head.split())
        pieces = [tok.split(":") for tok in body.split()]
        flat = np.concatenate([np.full(int(n), int(v), dtype=bool) for v, n in pieces])
        return cls.from_mask(flat.reshape(shape))


def _same_grid(a: SetSample, b: SetSample):
    if a.shape != b.shape:
        raise GridMismatchError(f"grid mismatch: {a.shape} vs {b.shape}")


def volume(s: SetSample) -> float:
    """Fraction of lattice points inside ``s``."""
    return s.count() / s.m


def symdiff_count(a: SetSample, b: SetSample) -> int:
    _same_grid(a, b)
    if a.is_hypograph and b.is_hypograph:
        return int(np.abs(a.levels.astype(np.int64) - b.levels).sum())
    return int(np.bitwise_count(np.bitwise_xor(a.packed(), b.packed())).sum(dtype=np.int64))


def symdiff_volume(a: SetSample, b: SetSample) -> float:
    """Volume of the symmetric difference of two sets on the same lattice."""
    return symdiff_count(a, b) / a.m


def intersection_volume(a: SetSample, b: SetSample) -> float:
    _same_grid(a, b)
    if a.is_hypograph and b.is_hypograph:
        return float(np.minimum(a.levels, b.levels).sum(dtype=np.int64)) / a.m
    return int(np.bitwise_count(np.bitwise_and(a.packed(), b.packed())).sum(dtype=np.int64)) / a.m


@dataclass(frozen=True)
class CoverageField:
    """Membership counts per lattice point out of ``n`` samples."""

    counts: NDArray
    n: int

    @property
    def shape(self):
        return self.counts.shape

    @property
    def values(self) -> NDArray:
        return self.counts / self.n


def level_stack(samples) -> NDArray:
    """Stack the levels of hypograph samples into an ``(n, n1, n2)`` integer array."""
    return np.stack([s.levels for s in samples])


def coverage_from_levels(levels: NDArray, nc: int) -> CoverageField:
    """Coverage of hypograph samples given as an ``(n, n1, n2)`` level array."""
    levels = np.asarray(levels)
    n = levels.shape[0]
    n_cells = int(np.prod(levels.shape[1:]))
    flat = levels.reshape(n, n_cells).astype(np.int64)
    keys = (np.arange(n_cells, dtype=np.int64) * (nc + 1))[None, :] + flat
    hist = np.bincount(keys.ravel(), minlength=n_cells * (nc + 1))
    hist = hist.reshape(levels.shape[1:] + (nc + 1,))
    # counts[..., k] = #{samples with level > k}
    above = np.cumsum(hist[..., ::-1], axis=-1)[..., ::-1]
    return CoverageField(above[..., 1:].copy(), n)


def coverage(samples) -> CoverageField:
    """Per-point membership frequency over a non-empty list of samples."""
    samples = list(samples)
    if not samples:
        raise ParameterError("coverage needs at least one sample")
    shape = samples[0].shape
    for s in samples[1:]:
        _same_grid(samples[0], s)
    if all(s.is_hypograph for s in samples):
        return coverage_from_levels(level_stack(samples), shape[2])
    counts = np.zeros(shape, dtype=np.int64)
    for s in samples:
        counts += s.mask()
    return CoverageField(counts, len(samples))


def quantile_levels(cov: CoverageField, a: float) -> NDArray:
    """Levels of the ``a``-quantile when the coverage is non-increasing along the level axis."""
    return (cov.counts / cov.n >= a).sum(axis=-1)


def vorobev_quantile(cov: CoverageField, a: float) -> SetSample:
    """Threshold set ``{x : coverage(x) >= a}``; ``a = 0.5`` gives the Vorob'ev median.

    The result is returned in hypograph form whenever every column is a prefix.
    """
    if not 0.0 <= a <= 1.0:
        raise ParameterError(f"quantile level must lie in [0, 1], got {a}")
    mask = cov.counts / cov.n >= a
    levels = mask.sum(axis=-1)
    if np.array_equal(mask, np.arange(mask.shape[-1]) < levels[..., None]):
        return SetSample(mask.shape, levels=levels)
    return SetSample.from_mask(mask)


def pairwise_symdiff(levels: NDArray, nc: int) -> NDArray:
    """Square matrix of symmetric-difference volumes between hypograph samples."""
    flat = np.asarray(levels, dtype=np.float64).reshape(levels.shape[0], -1)
    m = flat.shape[1] * nc
    # sums of integer |differences| stay exact in float64
    return squareform(pdist(flat, "cityblock")) / m


def symdiff_to_set(levels: NDArray, nc: int, test: SetSample) -> NDArray:
    """Symmetric-difference volumes between each hypograph sample and one test set."""
    return symdiff_to_sets(levels, nc, [test])[:, 0]


def symdiff_to_sets(levels: NDArray, nc: int, tests) -> NDArray:
    """``(n, len(tests))`` symmetric-difference volumes between hypograph samples and test sets."""
    levels = np.asarray(levels)
    n = levels.shape[0]
    flat = levels.reshape(n, -1).astype(np.int32)
    m = flat.shape[1] * nc
    own = flat.sum(axis=1, dtype=np.int64)
    k = np.arange(nc)
    out = np.empty((n, len(tests)))
    for col, test in enumerate(tests):
        if test.is_hypograph:
            t = test.levels.reshape(1, -1)
            out[:, col] = np.abs(flat - t).sum(axis=1, dtype=np.int64) / m
            continue
        mask = test.mask().reshape(-1, nc)
        size = mask.sum(axis=1).astype(np.int32)
        start = np.where(size > 0, mask.argmax(axis=1), 0).astype(np.int32)
        if np.array_equal(mask, (k >= start[:, None]) & (k < (start + size)[:, None])):
            # every column meets the test set in one interval [start, start + size)
            inside = (np.clip(flat, start, start + size) - start).sum(axis=1, dtype=np.int64)
        else:
            # prefix[c, t] = #{k < t : (c, k) in test}
            prefix = np.zeros((mask.shape[0], nc + 1), dtype=np.int64)
            np.cumsum(mask, axis=1, out=prefix[:, 1:])
            inside = prefix[np.arange(mask.shape[0])[None, :], flat].sum(axis=1)
        out[:, col] = (own + int(size.sum()) - 2 * inside) / m
    return out
