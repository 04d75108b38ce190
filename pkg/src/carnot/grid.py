"""Rectangular lattices in exponential coordinates and fields sampled on them."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, InputError
from . import expr as fx


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Box ``prod [lows[i], highs[i]]`` with ``counts[i]`` nodes per axis (row-major order)."""

    lows: tuple
    highs: tuple
    counts: tuple

    def __post_init__(self):
        lows = tuple(float(v) for v in self.lows)
        highs = tuple(float(v) for v in self.highs)
        counts = tuple(int(c) for c in self.counts)
        if not (len(lows) == len(highs) == len(counts)) or not lows:
            raise InputError("lows, highs and counts must have the same non-zero length")
        if any(c < 3 for c in counts):
            raise InputError("each axis needs at least 3 nodes")
        if any(not (b > a) for a, b in zip(lows, highs)):
            raise InputError("each interval must satisfy low < high")
        object.__setattr__(self, "lows", lows)
        object.__setattr__(self, "highs", highs)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def box(cls, intervals, nodes):
        """``box([(a1, b1), ...], 21)`` or with per-axis node counts."""
        intervals = [tuple(iv) for iv in intervals]
        if np.isscalar(nodes):
            nodes = [int(nodes)] * len(intervals)
        if len(nodes) != len(intervals):
            raise InputError("node counts do not match the number of intervals")
        return cls(tuple(a for a, _ in intervals), tuple(b for _, b in intervals), tuple(nodes))

    def __eq__(self, other):
        return isinstance(other, GridDomain) and (self.lows, self.highs, self.counts) == (
            other.lows, other.highs, other.counts)

    def __hash__(self):
        return hash((self.lows, self.highs, self.counts))

    @property
    def ndim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @cached_property
    def axes(self):
        return [np.linspace(a, b, c) for a, b, c in zip(self.lows, self.highs, self.counts)]

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(b - a) / (c - 1) for a, b, c in zip(self.lows, self.highs, self.counts)])

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(size, ndim)``, row-major (last axis fastest)."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        pts.setflags(write=False)
        return pts

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.counts, dtype=bool)
        for ax in range(self.ndim):
            sl = [slice(None)] * self.ndim
            sl[ax] = 0
            mask[tuple(sl)] = True
            sl[ax] = -1
            mask[tuple(sl)] = True
        mask.setflags(write=False)
        return mask

    @property
    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask

    def multi_index(self, node) -> tuple:
        if np.isscalar(node):
            node = int(node)
            if not 0 <= node < self.size:
                raise InputError(f"node {node} out of range")
            return tuple(int(i) for i in np.unravel_index(node, self.counts))
        idx = tuple(int(i) for i in node)
        if len(idx) != self.ndim or any(not 0 <= i < c for i, c in zip(idx, self.counts)):
            raise InputError(f"node {idx} out of range")
        return idx

    def flat_index(self, node) -> int:
        return int(np.ravel_multi_index(self.multi_index(node), self.counts))

    def node_coordinates(self, node) -> np.ndarray:
        idx = self.multi_index(node)
        return np.array([ax[i] for ax, i in zip(self.axes, idx)])

    def nearest_node(self, x) -> int:
        x = np.asarray(x, dtype=float)
        idx = [int(np.argmin(np.abs(ax - xi))) for ax, xi in zip(self.axes, x)]
        return self.flat_index(idx)

    def to_dict(self) -> dict:
        return {"intervals": [[a, b] for a, b in zip(self.lows, self.highs)], "nodes": list(self.counts)}


@dataclass(frozen=True, eq=False)
class GridField:
    """One finite sample per node of a :class:`GridDomain`."""

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(self.domain.counts)
        if not np.all(np.isfinite(v)):
            raise InputError("field samples must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    @property
    def boundary_mask(self) -> np.ndarray:
        return self.domain.boundary_mask

    def with_values(self, values) -> "GridField":
        return GridField(self.domain, values)

    def __neg__(self):
        return self.with_values(-self.values)

    def __add__(self, other):
        if isinstance(other, GridField):
            _same_grid(self, other)
            return self.with_values(self.values + other.values)
        return self.with_values(self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridField):
            _same_grid(self, other)
            return self.with_values(self.values - other.values)
        return self.with_values(self.values - other)

    def to_csv(self, extra=None) -> str:
        """CSV text: coordinates (layer order), value, then any ``extra`` named columns."""
        extra = extra or {}
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(self.domain.ndim)] + ["value"] + list(extra))
        cols = [np.asarray(c).ravel() for c in extra.values()]
        for k, (pt, val) in enumerate(zip(self.domain.points, self.flat)):
            w.writerow([repr(float(c)) for c in pt] + [repr(float(val))] + [_cell(c[k]) for c in cols])
        return buf.getvalue()


def _cell(v):
    if isinstance(v, (np.integer, int)):
        return str(int(v))
    if isinstance(v, (np.bool_, bool)):
        return str(bool(v)).lower()
    return repr(float(v))


def _same_grid(a: GridField, b: GridField):
    if a.domain != b.domain:
        raise InputError("fields live on different grids")


def sample(e, G, dom: GridDomain) -> GridField:
    """Evaluate an expression (or its text) at every node of ``dom``."""
    if isinstance(e, str):
        e = fx.parse(e)
    n = G.n if G is not None else dom.ndim
    if dom.ndim != n:
        raise InputError(f"domain has {dom.ndim} axes but the group dimension is {n}")
    if fx.max_coordinate(e) > n:
        raise InputError(f"expression uses x{fx.max_coordinate(e)} but the dimension is {n}")
    try:
        vals = fx.evaluate(e, dom.points)
    except DomainError:
        # locate the first offending node for the message
        for k, pt in enumerate(dom.points):
            try:
                fx.evaluate(e, pt)
            except DomainError as exc:
                raise DomainError(f"{exc} at node {k} {pt.tolist()}") from None
        raise
    vals = np.broadcast_to(vals, (dom.size,))
    if not np.all(np.isfinite(vals)):
        k = int(np.argmin(np.isfinite(vals)))
        raise DomainError(f"non-finite value at node {k} {dom.points[k].tolist()}")
    return GridField(dom, vals)
