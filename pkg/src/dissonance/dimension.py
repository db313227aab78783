"""Dimension estimators for weighted point clouds.

Each estimator follows the scikit-learn protocol: hyperparameters go to
``__init__``, ``fit(X, sample_weight=...)`` stores results in trailing
underscore attributes, and ``get_params``/``set_params``/``clone`` work.
The ``box_dim``, ``correlation_dim`` and ``local_dim`` functions wrap the
estimators for :class:`~dissonance.ifs.PointCloud` inputs.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import EmptyBall, InsufficientScales
from .ifs import PointCloud

BRUTE_FORCE_MAX = 10_000


@dataclass(frozen=True)
class DimensionEstimate:
    value: float
    stderr: float
    method: str
    fit_range: tuple[float, float]
    n: int
    r2: float
    seed: int | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["fit_range"] = list(self.fit_range)
        return out

    def csv_row(self) -> str:
        return ",".join([self.method, repr(self.value), repr(self.stderr), repr(self.fit_range[0]),
                         repr(self.fit_range[1]), str(self.n), repr(self.r2),
                         "" if self.seed is None else str(self.seed)])


CSV_HEADER = "method,value,stderr,rmin,rmax,n,R2,seed"


def _validate(X, sample_weight):
    X = check_array(X, dtype=np.float64, ensure_2d=False)
    if X.ndim == 1:
        X = X[:, None]
    if sample_weight is None:
        w = np.full(len(X), 1.0 / len(X))
    else:
        w = np.asarray(sample_weight, dtype=float)
        if w.shape != (len(X),) or np.any(w < 0):
            raise ValueError("sample_weight must be nonnegative with one entry per row")
        w = w / w.sum()
    keep = w > 0
    return X[keep], w[keep]


def _loglog_fit(log_x: np.ndarray, log_y: np.ndarray):
    res = stats.linregress(log_x, log_y)
    r2 = float(res.rvalue**2) if np.isfinite(res.rvalue) else 1.0
    return float(res.slope), float(res.stderr), r2


def _count_boxes(X: np.ndarray, origin: np.ndarray, side: float) -> int:
    idx = np.floor((X - origin) / side).astype(np.int64)
    if idx.shape[1] == 1:
        return int(np.unique(idx[:, 0]).size)
    span = idx.max(axis=0) + 1
    if np.prod(span.astype(float)) < 2**62:
        key = np.ravel_multi_index(idx.T, span)
        return int(np.unique(key).size)
    return int(np.unique(idx, axis=0).shape[0])


def _morton_keys(X: np.ndarray, origin: np.ndarray, extent: float, bits: int) -> np.ndarray:
    """Interleaved-bit keys of grid cells at side ``extent * 2**-bits``."""
    d = X.shape[1]
    cells = np.floor((X - origin) / extent * 2.0**bits).astype(np.uint64)
    cells = np.minimum(cells, np.uint64(2**bits - 1))
    key = np.zeros(len(X), dtype=np.uint64)
    for b in range(bits - 1, -1, -1):
        for k in range(d):
            key = (key << np.uint64(1)) | ((cells[:, k] >> np.uint64(b)) & np.uint64(1))
    return key


def _dyadic_counts(X: np.ndarray, origin: np.ndarray, extent: float, octaves: int) -> np.ndarray:
    """Occupied-box counts at sides ``extent * 2**-k`` for ``k = 0..octaves``.

    One sort of Morton keys; the count at level ``k`` is the number of
    distinct key prefixes of length ``d * k``.  The top cell at each level is
    closed on the right so the point at ``origin + extent`` is not split off.
    """
    d = X.shape[1]
    bits = min(octaves, 63 // d)
    key = np.sort(_morton_keys(X, origin, extent, bits))
    counts = []
    for k in range(bits + 1):
        prefix = key >> np.uint64(d * (bits - k))
        counts.append(int(np.count_nonzero(np.diff(prefix)) + 1))
    return np.array(counts)


def grid_shifts(d: int, k: int) -> np.ndarray:
    """``k`` deterministic offsets in ``[0, 1)^d`` (Kronecker sequence, first one zero)."""
    # generalized golden ratio: the real root of x**(d+1) = x + 1
    phi = 2.0
    for _ in range(64):
        phi = (1.0 + phi) ** (1.0 / (d + 1))
    alpha = phi ** -np.arange(1, d + 1)
    return (np.arange(k)[:, None] * alpha[None, :]) % 1.0


class BoxCountingDimension(BaseEstimator):
    """Slope of ``log N(r)`` against ``log(1/r)`` for occupied grid boxes.

    Boxes live on grids anchored near the cloud's bounding-box corner and
    ``scales`` are box sides relative to the largest bounding-box edge, so
    estimates are invariant under translation and scaling of the cloud.
    With ``n_shifts > 1`` the counts from several offset grids are pooled
    into one regression, which damps the oscillation seen when the set's
    own scaling ratio is not a power of two.  Scales where
    ``N(r) < min_count`` or ``N(r) > max_fraction * n`` are excluded.
    """

    def __init__(self, scales=None, min_count: int = 10, max_fraction: float = 0.1,
                 max_octaves: int = 48, n_shifts: int = 1):
        self.scales = scales
        self.min_count = min_count
        self.max_fraction = max_fraction
        self.max_octaves = max_octaves
        self.n_shifts = n_shifts

    def fit(self, X, y=None, sample_weight=None):
        X, _ = _validate(X, sample_weight)
        n, d = X.shape
        corner = X.min(axis=0)
        extent = float(np.max(X.max(axis=0) - corner))
        self.n_samples_fit_ = n
        self.extent_ = extent
        if extent == 0.0:
            self.dimension_, self.stderr_, self.r2_ = 0.0, 0.0, 1.0
            self.fit_range_ = (0.0, 1.0)
            self.scales_ = np.array([1.0])
            self.counts_ = np.array([1])
            return self
        sides, counts = [], []
        for shift in grid_shifts(d, max(1, int(self.n_shifts))):
            # a shifted grid of doubled extent still covers the cloud
            span = extent if not shift.any() else 2.0 * extent
            origin = corner - shift * extent
            if self.scales is None:
                c = _dyadic_counts(X, origin, span, self.max_octaves)
                s = extent * 2.0 ** -np.arange(len(c)) * (span / extent)
                c, s = c[1:] if span > extent else c, s[1:] if span > extent else s
            else:
                s = np.sort(np.asarray(self.scales, dtype=float))[::-1] * extent
                c = np.array([_count_boxes(X, origin, side) for side in s])
            sides.append(s)
            counts.append(c)
        sides = np.concatenate(sides)
        counts = np.concatenate(counts)
        self.scales_ = sides
        self.counts_ = counts
        use = (counts >= self.min_count) & (counts <= self.max_fraction * n)
        if np.unique(sides[use]).size < 3:
            raise InsufficientScales(f"only {np.unique(sides[use]).size} usable scales")
        slope, stderr, r2 = _loglog_fit(-np.log(sides[use]), np.log(counts[use]))
        self.dimension_, self.stderr_, self.r2_ = slope, stderr, r2
        self.fit_range_ = (float(sides[use].min()), float(sides[use].max()))
        return self

    def estimate(self, seed=None) -> DimensionEstimate:
        check_is_fitted(self, "dimension_")
        return DimensionEstimate(self.dimension_, self.stderr_, "BoxCounting", self.fit_range_,
                                 self.n_samples_fit_, self.r2_, seed)


def correlation_sum(X: np.ndarray, w: np.ndarray, radii: np.ndarray, method: str = "auto",
                    floor: float = 0.0) -> np.ndarray:
    """``C(r) = sum_{i != j} w_i w_j [|x_i - x_j|_inf <= r]`` for each radius.

    ``brute`` and ``sorted`` are exact; ``tree`` subsamples query points and
    may stop early once ``C(r) < floor`` (remaining entries are NaN).
    """
    radii = np.asarray(radii, dtype=float)
    if method == "auto":
        method = "sorted" if X.shape[1] == 1 else "tree"
    self_mass = float(w @ w)
    if method == "brute":
        if len(X) > BRUTE_FORCE_MAX:
            raise ValueError(f"brute-force path limited to {BRUTE_FORCE_MAX} points")
        D = np.max(np.abs(X[:, None, :] - X[None, :, :]), axis=2)
        W = np.outer(w, w)
        return np.array([W[D <= r].sum() for r in radii]) - self_mass
    if method == "sorted":
        if X.shape[1] != 1:
            raise ValueError("sorted path is one-dimensional")
        order = np.argsort(X[:, 0], kind="stable")
        x = X[order, 0]
        cw = np.concatenate([[0.0], np.cumsum(w[order])])
        ws = w[order]
        out = []
        for r in radii:
            hi = np.searchsorted(x, x + r, side="right")
            lo = np.searchsorted(x, x - r, side="left")
            out.append(ws @ (cw[hi] - cw[lo]))
        return np.array(out) - self_mass
    if method == "tree":
        return _tree_correlation(X, w, radii, floor)
    raise ValueError(f"unknown method {method!r}")


def _tree_correlation(X, w, radii, floor: float = 0.0, target_pairs: float = 2e6,
                      min_queries: int = 2000):
    """Correlation sums from a deterministic subset of query points per radius.

    The subset size is chosen so that roughly ``target_pairs`` neighbour
    pairs are inspected, which keeps the cost near ``O(n log n)`` per radius
    while the estimate of ``C(r)`` stays unbiased.  All points are used once
    ``C(r)`` becomes small.  Radii below the first one with ``C(r) < floor``
    are skipped and reported as NaN.
    """
    n = len(X)
    tree = cKDTree(X)
    uniform = bool(np.all(w == w[0]))
    order = np.argsort(-radii, kind="stable")
    out = np.full(len(radii), np.nan)
    c_prev = 1.0
    for k in order:
        r = radii[k]
        m = int(min(n, max(min_queries, target_pairs / max(n * c_prev, 1.0))))
        q = np.unique(np.linspace(0, n - 1, m).round().astype(np.int64))
        if uniform:
            counts = tree.query_ball_point(X[q], r, p=np.inf, return_length=True)
            # each query point's own pair is removed below via self_mass
            est = (counts.sum() / len(q)) * w[0] - w[0]
        else:
            nbrs = tree.query_ball_point(X[q], r, p=np.inf)
            mass = np.array([w[idx].sum() for idx in nbrs])
            wq = w[q] / w[q].sum()
            est = float(wq @ (mass - w[q]))
        out[k] = est
        if est < floor:
            break
        c_prev = max(est, 1.0 / n**2)
    return out


class CorrelationDimension(BaseEstimator):
    """Slope of ``log C(r)`` against ``log r`` over an automatically chosen range.

    Radii are dyadic fractions of the bounding-box edge.  The fit keeps radii
    with ``C(r) <= max_correlation`` (away from saturation) and with at least
    ``min_neighbors`` expected neighbours per point, ``C(r) >= min_neighbors / n``.
    """

    def __init__(self, radii=None, min_neighbors: float = 10.0, max_correlation: float = 0.1,
                 method: str = "auto", max_octaves: int = 48):
        self.radii = radii
        self.min_neighbors = min_neighbors
        self.max_correlation = max_correlation
        self.method = method
        self.max_octaves = max_octaves

    def fit(self, X, y=None, sample_weight=None):
        X, w = _validate(X, sample_weight)
        n = len(X)
        extent = float(np.max(X.max(axis=0) - X.min(axis=0)))
        self.n_samples_fit_ = n
        if extent == 0.0:
            self.dimension_, self.stderr_, self.r2_ = 0.0, 0.0, 1.0
            self.fit_range_ = (0.0, 1.0)
            self.radii_ = np.array([1.0])
            self.correlation_ = np.array([0.0])
            return self
        if self.radii is None:
            radii = extent * 2.0 ** -np.arange(1, self.max_octaves + 1)
        else:
            radii = np.sort(np.asarray(self.radii, dtype=float))[::-1]
        floor = self.min_neighbors / n
        C = correlation_sum(X, w, radii, self.method, floor=floor)
        self.radii_ = radii
        self.correlation_ = C
        with np.errstate(invalid="ignore"):
            use = (C <= self.max_correlation) & (C >= floor) & (C > 0)
        if np.count_nonzero(use) < 3:
            raise InsufficientScales(f"only {np.count_nonzero(use)} usable radii")
        slope, stderr, r2 = _loglog_fit(np.log(radii[use]), np.log(C[use]))
        self.dimension_, self.stderr_, self.r2_ = slope, stderr, r2
        self.fit_range_ = (float(radii[use].min()), float(radii[use].max()))
        return self

    def estimate(self, seed=None) -> DimensionEstimate:
        check_is_fitted(self, "dimension_")
        return DimensionEstimate(self.dimension_, self.stderr_, "Correlation", self.fit_range_,
                                 self.n_samples_fit_, self.r2_, seed)


class LocalDimension(BaseEstimator):
    """Regression slope of ``log mu(B(x, r))`` against ``log r`` at query points.

    ``fit`` stores the weighted cloud; ``predict`` returns one local
    dimension per query row.
    """

    def __init__(self, radii=None):
        self.radii = radii

    def fit(self, X, y=None, sample_weight=None):
        X, w = _validate(X, sample_weight)
        self.points_ = X
        self.weights_ = w
        self.tree_ = cKDTree(X)
        self.lower_ = X.min(axis=0)
        self.upper_ = X.max(axis=0)
        return self

    def ball_masses(self, x, radii) -> np.ndarray:
        check_is_fitted(self, "tree_")
        x = np.asarray(x, dtype=float).reshape(-1)
        out = []
        for r in radii:
            idx = self.tree_.query_ball_point(x, r, p=np.inf)
            out.append(self.weights_[idx].sum() if idx else 0.0)
        return np.array(out)

    def _radii(self):
        if self.radii is not None:
            return np.asarray(self.radii, dtype=float)
        extent = float(np.max(self.upper_ - self.lower_))
        return extent * 2.0 ** -np.arange(2, 13)

    def local_estimate(self, x) -> DimensionEstimate:
        x = np.asarray(x, dtype=float).reshape(-1)
        if np.any(x < self.lower_ - 1e-12) or np.any(x > self.upper_ + 1e-12):
            raise EmptyBall("query point lies outside the cloud's bounding box")
        radii = self._radii()
        if np.any(np.diff(radii) >= 0):
            raise ValueError("radii must be strictly decreasing")
        mass = self.ball_masses(x, radii)
        if mass[-1] <= 0:
            raise EmptyBall("smallest ball carries no mass")
        slope, stderr, r2 = _loglog_fit(np.log(radii), np.log(mass))
        return DimensionEstimate(slope, stderr, "Local", (float(radii.min()), float(radii.max())),
                                 len(self.points_), r2)

    def predict(self, X):
        X = check_array(X, dtype=np.float64, ensure_2d=False)
        if X.ndim == 1:
            X = X[:, None] if self.points_.shape[1] == 1 else X[None, :]
        return np.array([self.local_estimate(x).value for x in X])


def box_dim(cloud: PointCloud, scales=None, **kwargs) -> DimensionEstimate:
    est = BoxCountingDimension(scales=scales, **kwargs).fit(cloud.points, sample_weight=cloud.weights)
    return est.estimate(cloud.seed)


def correlation_dim(cloud: PointCloud, radii=None, **kwargs) -> DimensionEstimate:
    est = CorrelationDimension(radii=radii, **kwargs).fit(cloud.points, sample_weight=cloud.weights)
    return est.estimate(cloud.seed)


def local_dim(cloud: PointCloud, x, radii) -> DimensionEstimate:
    est = LocalDimension(radii=radii).fit(cloud.points, sample_weight=cloud.weights)
    return est.local_estimate(x)


def energy(cloud: PointCloud, s: float, cutoff: float, block: int = 2048) -> float:
    """Truncated ``s``-energy ``sum_{i != j} w_i w_j max(|x_i - x_j|, cutoff)^-s``.

    Euclidean distances, exact double sum in blocks (quadratic cost).
    """
    if s < 0 or cutoff <= 0:
        raise ValueError("need s >= 0 and cutoff > 0")
    X, w = cloud.points, cloud.weights
    total = 0.0
    for start in range(0, len(X), block):
        xb = X[start:start + block]
        D = np.sqrt(np.sum((xb[:, None, :] - X[None, :, :]) ** 2, axis=2))
        K = np.maximum(D, cutoff) ** -s
        idx = np.arange(start, start + len(xb))
        K[np.arange(len(xb)), idx] = 0.0
        total += float(w[start:start + block] @ K @ w)
    return total


ESTIMATORS = {
    "box": box_dim,
    "correlation": correlation_dim,
}


def estimate(cloud: PointCloud, method: str = "box", **kwargs) -> DimensionEstimate:
    try:
        fn = ESTIMATORS[method]
    except KeyError:
        raise ValueError(f"unknown estimator {method!r}") from None
    return fn(cloud, **kwargs)


