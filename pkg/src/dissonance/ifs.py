"""Conformal iterated function systems, their measures and attractors."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .conformal_maps import ConformalMap, Similarity, domain_sample
from .errors import BudgetExceeded, InvalidIFS
from .lie import rotation_2d

log = logging.getLogger(__name__)

DEFAULT_BURN_IN = 64
DEFAULT_CHAINS = 4096
MAX_COVER_BOXES = 10**8
MAX_DEPTH = 20
SUPPORT_TOL = 1e-8


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox counter-based generator; ``stream`` selects an independent key."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


class IFS:
    """Finite family of contractive conformal maps with probability weights."""

    def __init__(self, maps: Sequence[ConformalMap], probs: Sequence[float] | None = None,
                 validate: bool = True):
        self.maps = tuple(maps)
        if len(self.maps) < 2:
            raise InvalidIFS("an IFS needs at least two maps")
        dims = {f.d for f in self.maps}
        if len(dims) != 1:
            raise InvalidIFS("maps act on different dimensions")
        self.d = dims.pop()
        if probs is None:
            probs = np.full(len(self.maps), 1.0 / len(self.maps))
        self.probs = np.asarray(probs, dtype=float)
        self.probs.setflags(write=False)
        if self.probs.shape != (len(self.maps),):
            raise InvalidIFS("one probability per map required")
        if np.any(self.probs <= 0) or np.any(self.probs >= 1):
            raise InvalidIFS("probabilities must lie in (0, 1)")
        if abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise InvalidIFS(f"probabilities sum to {math.fsum(self.probs)!r}, not 1")
        if validate:
            self.validate()

    def validate(self) -> None:
        sample = domain_sample(self.d, 10_000)
        for i, f in enumerate(self.maps):
            if not f.orientation_preserving:
                raise InvalidIFS(f"map {i} reverses orientation; use its second iterate")
            if not np.all(np.abs(f.apply(sample)) <= 1.0 + 1e-12):
                raise InvalidIFS(f"map {i} does not send the cube into itself")
            if not float(np.max(f.local_scale(sample))) < 1.0:
                raise InvalidIFS(f"map {i} is not contractive")

    def __len__(self):
        return len(self.maps)

    def contraction_bounds(self) -> np.ndarray:
        return np.array([f.contraction_bound() for f in self.maps])

    def to_dict(self) -> dict:
        return {"maps": [f.to_dict() for f in self.maps], "probs": self.probs.tolist()}

    def __repr__(self):
        return f"IFS({list(self.maps)!r}, probs={self.probs.tolist()!r})"


@dataclass(eq=False)
class PointCloud:
    """Weighted sample standing in for a measure on R^d."""

    points: np.ndarray
    weights: np.ndarray | None = None
    seed: int | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or len(pts) == 0:
            raise ValueError("points must be a nonempty (n, d) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("all coordinates must be finite")
        if self.weights is None:
            w = np.full(len(pts), 1.0 / len(pts))
        else:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (len(pts),) or np.any(w < 0):
                raise ValueError("weights must be nonnegative, one per point")
            if abs(math.fsum(w) - 1.0) > 1e-12:
                raise ValueError("weights must sum to 1 within 1e-12")
        self.points = pts
        self.weights = w

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def scaled(self, factor: float) -> PointCloud:
        return PointCloud(self.points * factor, self.weights, self.seed, dict(self.provenance))

    def __len__(self):
        return self.n


@dataclass(eq=False)
class BoxCover:
    """Dyadic boxes of side ``2**-depth`` (integer corner indices) covering an attractor."""

    depth: int
    boxes: np.ndarray

    def __len__(self):
        return len(self.boxes)

    def contains(self, points) -> np.ndarray:
        idx = box_index(np.asarray(points, dtype=float), self.depth)
        keys = set(map(tuple, self.boxes.tolist()))
        return np.array([tuple(r) in keys for r in idx.tolist()])


def box_index(points: np.ndarray, depth: int) -> np.ndarray:
    """Index of the dyadic box holding each point; the cube's right faces are closed."""
    n = 2**depth
    idx = np.floor(points * n).astype(np.int64)
    inside = np.all(np.abs(points) <= 1.0, axis=1)
    idx[inside] = np.clip(idx[inside], -n, n - 1)
    return idx


def chaos_game(ifs: IFS, n: int, seed: int = 0, burn_in: int = DEFAULT_BURN_IN,
               chains: int = DEFAULT_CHAINS, workers: int = 1) -> PointCloud:
    """Sample the self-conformal measure by running parallel Markov chains.

    Each chain starts at the cube center, discards ``burn_in`` steps, then
    records one point per step.  All map choices come from one generator, so
    the output depends on ``(seed, n, burn_in, chains)`` but not on
    ``workers``.
    """
    if not isinstance(ifs, IFS):
        raise InvalidIFS("chaos_game needs a validated IFS")
    if n < 1:
        raise ValueError("n must be positive")
    chains = max(1, min(chains, n))
    workers = max(1, min(workers, chains))
    steps = -(-n // chains)
    shard = np.array_split(np.arange(chains), workers)
    cum = np.cumsum(ifs.probs)
    cum[-1] = 1.0
    dtype = np.uint8 if len(ifs) < 256 else np.int64
    choices = np.searchsorted(cum, make_rng(seed).random((burn_in + steps, chains)), side="right").astype(dtype)

    def run(k: int) -> np.ndarray:
        cols = shard[k]
        m = len(cols)
        x = np.zeros((m, ifs.d))
        out = np.empty((steps, m, ifs.d))
        for step in range(burn_in + steps):
            choice = choices[step, cols]
            nxt = np.empty_like(x)
            for i, f in enumerate(ifs.maps):
                sel = choice == i
                if sel.any():
                    nxt[sel] = f.apply(x[sel], check_domain=False)
            x = nxt
            if step >= burn_in:
                out[step - burn_in] = x
        return out

    if workers == 1:
        parts = [run(0)]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, range(workers)))
    pts = np.concatenate(parts, axis=1).reshape(-1, ifs.d)[:n]
    prov = {"op": "chaos_game", "n": n, "seed": seed, "burn_in": burn_in, "chains": chains}
    return PointCloud(pts, None, seed, prov)


def _boxes_hit(centers: np.ndarray, radii: np.ndarray, depth: int) -> np.ndarray:
    """Unique dyadic boxes meeting the closed balls' bounding cubes."""
    n = 2**depth
    lo = np.floor((centers - radii[:, None]) * n).astype(np.int64)
    hi = np.floor((centers + radii[:, None]) * n).astype(np.int64)
    lo = np.clip(lo, -n, n - 1)
    hi = np.clip(hi, -n, n - 1)
    span = int(np.max(hi - lo)) + 1 if len(lo) else 1
    d = centers.shape[1]
    out = []
    for off in np.ndindex(*([span] * d)):
        cand = lo + np.array(off)
        ok = np.all(cand <= hi, axis=1)
        out.append(cand[ok])
    return np.unique(np.concatenate(out), axis=0)


def _in_set(rows: np.ndarray, ref: np.ndarray) -> np.ndarray:
    if len(ref) == 0:
        return np.zeros(len(rows), dtype=bool)
    both = np.ascontiguousarray(np.vstack([ref, rows]))
    void = both.view(np.dtype((np.void, both.dtype.itemsize * both.shape[1]))).ravel()
    return np.isin(void[len(ref):], void[:len(ref)])


def _refine(ifs: IFS, depth: int, budget: int, contraction: np.ndarray, tag: bool = False):
    """Enclosing balls of word images of the cube, refined level by level.

    Yields ``(level, centers, radii)`` once every ball has diameter
    ``<= 2**-level``.
    """
    d = ifs.d
    centers = np.zeros((1, d))
    radii = np.array([math.sqrt(d)])
    for level in range(depth + 1):
        target = 0.5 * 2.0**-level
        while np.any(radii > target):
            big = radii > target
            if (np.count_nonzero(big) * len(ifs) + np.count_nonzero(~big)) > budget:
                raise BudgetExceeded("cover refinement would exceed the box budget")
            new_c = [centers[~big]]
            new_r = [radii[~big]]
            for f, c in zip(ifs.maps, contraction):
                new_c.append(f.apply(centers[big], check_domain=False))
                new_r.append(radii[big] * c)
            centers = np.concatenate(new_c)
            radii = np.concatenate(new_r)
        yield level, centers, radii


def refine_cover(ifs: IFS, depth: int, budget: int = MAX_COVER_BOXES) -> BoxCover:
    """Dyadic boxes at scale ``2**-depth`` meeting the attractor's word images.

    Covers are nested: a box is kept only if its parent survives at the
    previous depth, so ``refine_cover(k + 1)`` refines ``refine_cover(k)``.
    """
    if depth < 0 or depth > MAX_DEPTH:
        raise ValueError(f"depth must lie in [0, {MAX_DEPTH}]")
    # small safety factor on sampled Lipschitz bounds
    contraction = ifs.contraction_bounds() * (1.0 + 1e-9)
    cover = np.array(list(np.ndindex(*([2] * ifs.d)))) - 1
    for level, centers, radii in _refine(ifs, depth, budget, contraction):
        if level == 0:
            continue
        hit = _boxes_hit(centers, radii, level)
        if len(hit) > budget:
            raise BudgetExceeded("cover would exceed the box budget")
        cover = hit[_in_set(np.floor_divide(hit, 2), cover)]
    return BoxCover(depth, cover)


def check_strong_separation(ifs: IFS, depth: int = 12, budget: int = 10**7) -> dict:
    """Three-valued separation verdict from dyadic covers of the images f_i(K)."""
    contraction = ifs.contraction_bounds() * (1.0 + 1e-9)
    *_, (level, centers, radii) = _refine(ifs, depth, budget, contraction)
    side = 2.0**-depth
    groups = []
    for f, c in zip(ifs.maps, contraction):
        groups.append(_boxes_hit(f.apply(centers, check_domain=False), radii * c, depth))
    min_gap = math.inf
    overlapping = False
    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            A, B = groups[i], groups[j]
            if _in_set(A, B).any():
                overlapping = True
                continue
            tree = cKDTree(B.astype(float))
            k = min(len(B), 2 ** ifs.d + 1)
            _, nn = tree.query(A.astype(float), k=k)
            nn = nn.reshape(len(A), -1)
            diff = np.abs(A[:, None, :] - B[nn]) - 1
            gap = side * np.sqrt(np.sum(np.maximum(diff, 0) ** 2, axis=2))
            min_gap = min(min_gap, float(gap.min()))
    if overlapping:
        return {"verdict": "Overlapping", "gap": 0.0, "depth": depth}
    if min_gap > 0:
        return {"verdict": "Separated", "gap": min_gap, "depth": depth}
    return {"verdict": "Inconclusive", "gap": 0.0, "depth": depth}


def _weighted_center(cloud: PointCloud):
    w = cloud.weights
    mean = w @ cloud.points
    X = cloud.points - mean
    return X, w, mean


def support_geometry(cloud: PointCloud, tol: float = SUPPORT_TOL) -> dict:
    """Least-squares hyperplane, line and sphere fits with RMS residuals.

    A residual below ``tol`` flags the cloud as supported on that surface.
    """
    d = cloud.d
    if cloud.n < d + 2:
        raise ValueError("support_geometry needs at least d + 2 points")
    X, w, mean = _weighted_center(cloud)
    cov = (X * w[:, None]).T @ X
    evals, evecs = np.linalg.eigh(cov)
    evals = np.clip(evals, 0.0, None)
    scale = max(evals[-1], 1e-300)
    # directions thinner than the support tolerance do not count towards the rank
    rank = int(np.sum(evals > tol * tol * max(1.0, scale))) if evals[-1] > 0 else 0
    report: dict = {"d": d, "affine_rank": rank, "degenerate": rank < d - 1}
    report["hyperplane_residual"] = float(math.sqrt(evals[0]))
    report["hyperplane_normal"] = evecs[:, 0].tolist()
    if d >= 2:
        report["line_residual"] = float(math.sqrt(evals[: d - 1].sum()))
        report["line_direction"] = evecs[:, -1].tolist()
    if d >= 2:
        # algebraic fit |x|^2 = 2 c.x + k, solved with weights
        A = np.column_stack([2 * X, np.ones(cloud.n)])
        b = np.sum(X * X, axis=1)
        sw = np.sqrt(w)
        sol, *_ = np.linalg.lstsq(A * sw[:, None], b * sw, rcond=None)
        c, k = sol[:d], sol[d]
        R2 = k + c @ c
        if R2 > 0:
            R = math.sqrt(R2)
            dist = np.linalg.norm(X - c, axis=1) - R
            report["sphere_residual"] = float(math.sqrt(w @ (dist * dist)))
            report["sphere_center"] = (c + mean).tolist()
            report["sphere_radius"] = R
        else:
            report["sphere_residual"] = math.inf
    for key in ("hyperplane", "line", "sphere"):
        res = report.get(f"{key}_residual")
        if res is not None:
            report[f"on_{key}"] = bool(res < tol)
    return report


def parallel_lines(a: PointCloud, b: PointCloud, tol: float = SUPPORT_TOL) -> bool:
    """True when two planar clouds are supported on parallel lines."""
    if a.d != 2 or b.d != 2:
        raise ValueError("parallel_lines is planar")
    ra, rb = support_geometry(a, tol), support_geometry(b, tol)
    if not (ra["on_line"] and rb["on_line"]):
        return False
    u, v = np.array(ra["line_direction"]), np.array(rb["line_direction"])
    return abs(u[0] * v[1] - u[1] * v[0]) < max(tol, 1e-6)


def moran_dimension(ratios: Sequence[float], tol: float = 1e-13) -> float:
    """Unique ``s >= 0`` with ``sum(r_i ** s) == 1``, by bisection."""
    r = np.asarray(ratios, dtype=float)
    if r.size == 0 or np.any(r <= 0) or np.any(r >= 1):
        raise ValueError("ratios must lie in (0, 1)")
    if r.size == 1:
        return 0.0
    lo, hi = 0.0, math.log(r.size) / -math.log(r.max())
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if np.sum(r**mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def self_similar_ifs(ratios, translations, angles=None, probs=None, validate: bool = True) -> IFS:
    """Similarity IFS from ratios, translations and (planar) rotation angles."""
    translations = np.atleast_2d(np.asarray(translations, dtype=float))
    if translations.shape[0] == 1 and len(ratios) > 1:
        translations = translations.T
    d = translations.shape[1]
    maps = []
    for k, (r, a) in enumerate(zip(ratios, translations)):
        O = None
        if angles is not None:
            if d != 2:
                raise ValueError("angles are planar")
            O = rotation_2d(angles[k])
        maps.append(Similarity(r, O, a, d=d))
    return IFS(maps, probs, validate=validate)


def middle_thirds() -> IFS:
    return self_similar_ifs([1 / 3, 1 / 3], [[0.0], [2 / 3]])


def cantor(ratio: float) -> IFS:
    """Two-map Cantor IFS ``{r x, r x + 1 - r}`` on [0, 1]."""
    return self_similar_ifs([ratio, ratio], [[0.0], [1.0 - ratio]])


def four_corner(ratio: float) -> IFS:
    t = 1.0 - ratio
    return self_similar_ifs([ratio] * 4, [[0, 0], [t, 0], [0, t], [t, t]])
