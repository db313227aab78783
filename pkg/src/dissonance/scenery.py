"""Magnified measures, sceneries and the Lévy–Prokhorov metric on dyadic grids.

A ``DiscretizedMeasure`` of resolution ``m`` lives on ``[-1, 1]^d`` split
into ``2^m`` cells per axis (side ``h = 2^(1 - m)``).  Distances are taken in
the max metric between cell centres, so every pairwise distance is a whole
number of cells and the Lévy–Prokhorov distance only has to be searched over
``k * h``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_array
from scipy.sparse.csgraph import maximum_flow
from scipy.spatial import cKDTree

from .errors import EmptyWindow, InsufficientScales, ResolutionMismatch
from .ifs import PointCloud

DEFAULT_RESOLUTION = 8
DEFAULT_STEP = 0.25
MIN_WINDOW_POINTS = 100
MAX_SCENERY_DIM = 3
FLOW_UNITS = 2**30


@dataclass(eq=False)
class DiscretizedMeasure:
    """Cell masses on the ``2^m``-per-axis grid of ``[-1, 1]^d``."""

    masses: np.ndarray
    n_points: int | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        M = np.asarray(self.masses, dtype=float)
        side = M.shape[0]
        if M.ndim < 1 or any(s != side for s in M.shape) or side & (side - 1):
            raise ValueError("masses must be a cube array with a power-of-two side")
        if M.ndim > MAX_SCENERY_DIM:
            raise ValueError(f"scenery objects are limited to d <= {MAX_SCENERY_DIM}")
        if np.any(M < 0) or not np.all(np.isfinite(M)):
            raise ValueError("masses must be finite and nonnegative")
        total = math.fsum(M.ravel())
        if total <= 0:
            raise EmptyWindow("measure has no mass")
        self.masses = M / total

    @property
    def d(self) -> int:
        return self.masses.ndim

    @property
    def m(self) -> int:
        return self.masses.shape[0].bit_length() - 1

    @property
    def cell(self) -> float:
        return 2.0 / self.masses.shape[0]

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer indices of occupied cells and their masses."""
        idx = np.argwhere(self.masses > 0)
        return idx, self.masses[tuple(idx.T)]

    def centers(self, idx: np.ndarray) -> np.ndarray:
        return -1.0 + (idx + 0.5) * self.cell

    def coarsen(self, level: int) -> np.ndarray:
        """Masses on the ``2^level`` grid."""
        if not 0 <= level <= self.m:
            raise ValueError("level out of range")
        f = 2 ** (self.m - level)
        M = self.masses
        for ax in range(self.d):
            shape = M.shape[:ax] + (M.shape[ax] // f, f) + M.shape[ax + 1:]
            M = M.reshape(shape).sum(axis=ax + 1)
        return M

    def rows(self):
        """``(i_1, ..., i_d, mass)`` for occupied cells, for CSV output."""
        idx, w = self.support()
        for i, mass in zip(idx, w):
            yield (*map(int, i), repr(float(mass)))


def discretize(points: np.ndarray, weights: np.ndarray, m: int = DEFAULT_RESOLUTION, **kw) -> DiscretizedMeasure:
    """Bin points of ``[-1, 1]^d`` into the ``2^m`` grid (right faces closed)."""
    points = np.atleast_2d(points)
    d = points.shape[1]
    if d > MAX_SCENERY_DIM:
        raise ValueError(f"scenery objects are limited to d <= {MAX_SCENERY_DIM}")
    n = 2**m
    idx = np.clip(np.floor((points + 1.0) * (n / 2.0)).astype(np.int64), 0, n - 1)
    flat = np.ravel_multi_index(idx.T, (n,) * d)
    M = np.bincount(flat, weights=weights, minlength=n**d).reshape((n,) * d)
    return DiscretizedMeasure(M, n_points=len(points), **kw)


def magnify(cloud: PointCloud, x, t: float, m: int = DEFAULT_RESOLUTION,
            min_points: int = MIN_WINDOW_POINTS) -> DiscretizedMeasure:
    """Restrict to the max-metric ball ``B(x, 2^-t)``, blow up to ``[-1, 1]^d``, renormalize."""
    x = np.asarray(x, dtype=float).reshape(cloud.d)
    radius = 2.0**-t
    Y = (cloud.points - x) / radius
    inside = np.all(np.abs(Y) <= 1.0, axis=1)
    inside &= cloud.weights > 0
    count = int(np.count_nonzero(inside))
    if count < min_points:
        raise EmptyWindow(f"B(x, 2^-{t:g}) holds {count} points; at least {min_points} needed")
    return discretize(Y[inside], cloud.weights[inside], m,
                      provenance={"x": x.tolist(), "t": float(t), "points": count})


def _overlap_matrix(n: int, t: float) -> np.ndarray:
    """``M[j, i]``: share of source cell ``i`` landing in target cell ``j`` after scaling by ``2^t``.

    Source mass is spread uniformly over its cell; anything scaled out of
    ``[-1, 1]`` is dropped.
    """
    h = 2.0 / n
    s = 2.0**t
    lo = (-1.0 + h * np.arange(n)) * s
    hi = lo + h * s
    tlo = -1.0 + h * np.arange(n)
    thi = tlo + h
    inter = np.minimum(hi[None, :], thi[:, None]) - np.maximum(lo[None, :], tlo[:, None])
    return np.clip(inter, 0.0, None) / (h * s)


def semiflow(dm: DiscretizedMeasure, t: float) -> DiscretizedMeasure:
    """``S_t``: magnify the discretized measure about 0 by ``2^t``."""
    if t < 0:
        raise ValueError("the semiflow runs forward only")
    n = dm.masses.shape[0]
    centre = dm.masses[(slice(n // 2 - 1, n // 2 + 1),) * dm.d]
    if not np.any(centre > 0):
        raise EmptyWindow("no mass in the cells around 0")
    if t == 0:
        return DiscretizedMeasure(dm.masses.copy(), dm.n_points, {**dm.provenance, "semiflow": 0.0})
    A = _overlap_matrix(n, t)
    M = dm.masses
    for ax in range(dm.d):
        M = np.moveaxis(np.tensordot(A, M, axes=([1], [ax])), 0, ax)
    M[M < 1e-300] = 0.0
    if not np.any(M > 0):
        raise EmptyWindow("window around 0 carries no mass")
    return DiscretizedMeasure(M, None, {**dm.provenance, "semiflow": float(t)})


@dataclass(eq=False)
class SceneryDistribution:
    members: list[DiscretizedMeasure]
    weights: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.members)


def scenery_distribution(cloud: PointCloud, x, T: float, dt: float = DEFAULT_STEP,
                         m: int = DEFAULT_RESOLUTION) -> SceneryDistribution:
    """Equal-weight collection of ``magnify(cloud, x, k dt)`` for ``k = 0..floor(T/dt)``.

    When a window runs out of points the scenery is truncated there and the
    truncation is recorded in the provenance.
    """
    if dt <= 0 or T < 0:
        raise ValueError("need dt > 0 and T >= 0")
    steps = int(math.floor(T / dt + 1e-9))
    members = []
    prov = {"x": np.asarray(x, dtype=float).ravel().tolist(), "T": float(T), "dt": float(dt), "m": m}
    for k in range(steps + 1):
        try:
            members.append(magnify(cloud, x, k * dt, m))
        except EmptyWindow as exc:
            if not members:
                raise
            prov["truncated_at"] = k * dt
            prov["warning"] = str(exc)
            warnings.warn(f"scenery truncated at t={k * dt:g}: {exc}", stacklevel=2)
            break
    w = np.full(len(members), 1.0 / len(members))
    return SceneryDistribution(members, w, prov)


def _greedy_flow_1d(ia, wa, ib, wb, k: int) -> float:
    """Largest mass movable from ``a`` to ``b`` along moves of at most ``k`` cells (d = 1).

    Windows have equal width, so serving each ``b`` cell from the leftmost
    usable ``a`` cell (earliest deadline) is optimal.
    """
    wa = wa.copy()
    moved = 0.0
    lo = 0
    for y, need in zip(ib, wb):
        while lo < len(ia) and (ia[lo] < y - k or wa[lo] <= 0):
            lo += 1
        j = lo
        while need > 0 and j < len(ia) and ia[j] <= y + k:
            take = min(need, wa[j])
            if take > 0:
                wa[j] -= take
                need -= take
                moved += take
            j += 1
    return moved


def _integer_masses(w: np.ndarray, units: int) -> np.ndarray:
    """Round masses to integers summing exactly to ``units`` (largest remainder)."""
    raw = w * units
    out = np.floor(raw).astype(np.int64)
    short = units - int(out.sum())
    if short > 0:
        out[np.argsort(raw - out)[::-1][:short]] += 1
    return out


def _network_flow(ia, wa, ib, wb, k: int) -> float:
    """Max flow through the bipartite graph of cell pairs within ``k`` cells (max metric)."""
    ca = _integer_masses(wa, FLOW_UNITS)
    cb = _integer_masses(wb, FLOW_UNITS)
    na, nb = len(ia), len(ib)
    pairs = cKDTree(ia).query_ball_tree(cKDTree(ib), r=k + 0.5, p=np.inf)
    ea = np.repeat(np.arange(na), [len(p) for p in pairs])
    eb = np.fromiter(itertools.chain.from_iterable(pairs), dtype=np.int64, count=len(ea))
    # nodes: 0 source, 1..na cells of a, na+1..na+nb cells of b, last sink
    sink = na + nb + 1
    src = np.concatenate([np.zeros(na, dtype=np.int64), ea + 1, na + 1 + np.arange(nb)])
    dst = np.concatenate([np.arange(na) + 1, eb + na + 1, np.full(nb, sink)])
    cap = np.concatenate([ca, np.full(len(ea), FLOW_UNITS), cb]).astype(np.int32)
    G = csr_array((cap, (src, dst)), shape=(sink + 1, sink + 1))
    flow = maximum_flow(G, 0, sink).flow_value
    return flow / FLOW_UNITS


def levy_prokhorov(a: DiscretizedMeasure, b: DiscretizedMeasure) -> float:
    """Exact Lévy–Prokhorov distance between two measures on the same grid.

    By Strassen's theorem ``a(A) <= b(A^eps) + eps`` for all ``A`` iff some
    coupling leaves at most ``eps`` of mass further apart than ``eps``.  With
    ``F(k)`` the largest mass that can move at most ``k`` cells, the distance
    is ``min_k max(k h, 1 - F(k))``; ``F`` is nondecreasing so a binary search
    over ``k`` finds the crossing.  For ``d >= 2`` masses are rounded to
    multiples of ``2^-30`` for the integer max-flow solver.
    """
    if a.masses.shape != b.masses.shape:
        raise ResolutionMismatch(f"grids differ: {a.masses.shape} vs {b.masses.shape}")
    ia, wa = a.support()
    ib, wb = b.support()
    h = a.cell
    if a.d == 1:
        ia, ib = ia[:, 0], ib[:, 0]
        flow = lambda k: _greedy_flow_1d(ia, wa, ib, wb, k)  # noqa: E731
    else:
        flow = lambda k: _network_flow(ia, wa, ib, wb, k)  # noqa: E731

    cache: dict[int, float] = {}

    def gap(k: int) -> float:
        if k not in cache:
            g = 1.0 - flow(k)
            # summation round-off must not masquerade as unmatched mass
            cache[k] = g if g > 1e-12 else 0.0
        return cache[k]

    # smallest k whose move budget already covers the unmatched mass
    # at the grid diameter every pair is linked, so gap(hi) == 0
    lo, hi = 0, a.masses.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if gap(mid) <= mid * h:
            hi = mid
        else:
            lo = mid + 1
    best = hi * h
    if hi > 0:
        best = min(best, gap(hi - 1))
    return float(min(best, 1.0))


def box_dim_grid(dm: DiscretizedMeasure, min_levels: int = 3) -> float:
    """Box dimension of the occupied cells across coarsenings of the grid."""
    counts = np.array([np.count_nonzero(dm.coarsen(j)) for j in range(dm.m + 1)])
    if counts[-1] == 1:
        return 0.0
    cap = dm.n_points / 10 if dm.n_points else np.inf
    levels = np.flatnonzero((counts >= 2) & (counts <= max(cap, 2)))
    if levels.size < min_levels:
        raise InsufficientScales(f"only {levels.size} usable grid levels")
    slope = np.polyfit(levels * math.log(2.0), np.log(counts[levels]), 1)[0]
    return float(slope)


def scenery_dim(sd: SceneryDistribution, min_levels: int = 3) -> float:
    """Weighted mean of the members' grid box dimensions."""
    dims = np.array([box_dim_grid(dm, min_levels) for dm in sd.members])
    return float(np.dot(sd.weights, dims))


def pairwise_lp(sd: SceneryDistribution) -> np.ndarray:
    return np.array([levy_prokhorov(a, b) for a, b in itertools.combinations(sd.members, 2)])
