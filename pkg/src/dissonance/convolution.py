"""Convolutions, sumsets and projections of point clouds, and the dissonance runner."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .conditions import check_log_ratio, check_theorem_conditions
from .dimension import DimensionEstimate, estimate
from .errors import BadBasis, DimensionMismatch
from .ifs import IFS, PointCloud, chaos_game, make_rng, parallel_lines
from .lie import ORTHO_TOL

log = logging.getLogger(__name__)

DISSONANT_TOL = 0.08
RESONANT_GAP = 0.15
SUMSET_MAX_POINTS = 10**8


def _draw(cloud: PointCloud, m: int, rng: np.random.Generator) -> np.ndarray:
    if cloud.uniform:
        idx = rng.integers(0, cloud.n, size=m)
    else:
        idx = rng.choice(cloud.n, size=m, p=cloud.weights)
    return cloud.points[idx]


def convolve(a: PointCloud, b: PointCloud, m: int, seed: int = 0) -> PointCloud:
    """``m`` samples of ``x + y`` with ``x ~ a`` and ``y ~ b`` independent."""
    if a.d != b.d:
        raise DimensionMismatch(f"cannot convolve d={a.d} with d={b.d}")
    rng = make_rng(seed, stream=1)
    pts = _draw(a, m, rng) + _draw(b, m, rng)
    return PointCloud(pts, seed=seed, provenance={"op": "convolve", "m": m, "seed": seed})


def sumset(a: PointCloud, b: PointCloud) -> PointCloud:
    """Every ``x_i + y_j`` with weight ``w_i v_j``; exact but quadratic."""
    if a.d != b.d:
        raise DimensionMismatch(f"cannot add d={a.d} to d={b.d}")
    if a.n * b.n > SUMSET_MAX_POINTS:
        raise ValueError(f"sumset of {a.n} x {b.n} points is too large; use convolve")
    pts = (a.points[:, None, :] + b.points[None, :, :]).reshape(-1, a.d)
    w = np.outer(a.weights, b.weights).ravel()
    return PointCloud(pts, w / math.fsum(w), provenance={"op": "sumset"})


@dataclass(frozen=True, eq=False)
class ProjectionParams:
    """Scales ``2**t_i`` and rotations ``O_i`` of ``x -> sum 2**t_i O_i x_i``."""

    t: np.ndarray
    O: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).ravel()
        O = np.asarray(self.O, dtype=float)
        if O.ndim != 3 or O.shape[0] != t.size or O.shape[1] != O.shape[2]:
            raise ValueError("need one square rotation per scale")
        if not np.all(np.isfinite(t)):
            raise ValueError("scales must be finite")
        d = O.shape[1]
        err = np.linalg.norm(np.swapaxes(O, 1, 2) @ O - np.eye(d), axis=(1, 2))
        if np.any(err >= ORTHO_TOL) or np.any(np.linalg.det(O) <= 0):
            raise ValueError("rotations must be orthogonal with determinant +1")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "O", O)

    @property
    def n(self) -> int:
        return self.t.size

    @property
    def d(self) -> int:
        return self.O.shape[1]

    def to_dict(self) -> dict:
        return {"t": self.t.tolist(), "O": self.O.tolist()}


def haar_rotations(d: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed rotations: QR of Gaussian matrices, signs fixed, det +1."""
    G = rng.standard_normal((size, d, d))
    Q, R = np.linalg.qr(G)
    Q = Q * np.sign(np.diagonal(R, axis1=1, axis2=2))[:, None, :]
    flip = np.linalg.det(Q) < 0
    Q[flip, :, 0] *= -1
    return Q


def random_lambda(d: int, n: int, t_interval: tuple[float, float] = (-1.0, 1.0), seed: int = 0) -> ProjectionParams:
    """``t_i`` uniform on ``t_interval`` and ``O_i`` Haar on SO(d)."""
    lo, hi = map(float, t_interval)
    if not hi > lo:
        raise ValueError("t_interval must be nondegenerate")
    rng = make_rng(seed, stream=2)
    t = rng.uniform(lo, hi, size=n)
    return ProjectionParams(t, haar_rotations(d, n, rng))


def project_lambda(clouds: Sequence[PointCloud], params: ProjectionParams, m: int, seed: int = 0) -> PointCloud:
    """``m`` samples of ``sum 2**t_i O_i x_i`` with ``x_i`` drawn from cloud ``i``."""
    if len(clouds) != params.n:
        raise DimensionMismatch(f"{len(clouds)} clouds for {params.n} projection factors")
    if any(c.d != params.d for c in clouds):
        raise DimensionMismatch("clouds and rotations differ in dimension")
    rng = make_rng(seed, stream=3)
    out = np.zeros((m, params.d))
    for c, t, O in zip(clouds, params.t, params.O):
        out += 2.0**t * (_draw(c, m, rng) @ O.T)
    return PointCloud(out, seed=seed, provenance={"op": "project_lambda", "m": m, "seed": seed})


def _check_basis(basis, d: int) -> np.ndarray:
    B = np.atleast_2d(np.asarray(basis, dtype=float))
    k = B.shape[0]
    if B.shape[1] != d:
        raise BadBasis(f"basis vectors have length {B.shape[1]}, expected {d}")
    if not 0 < k < d:
        raise BadBasis(f"need 0 < k < d, got k={k}, d={d}")
    if np.linalg.norm(B @ B.T - np.eye(k)) >= ORTHO_TOL:
        raise BadBasis("basis is not orthonormal within 1e-10")
    return B


def orthogonal_project(cloud: PointCloud, basis) -> PointCloud:
    """Coordinates of each point in the orthonormal ``basis`` (rows)."""
    B = _check_basis(basis, cloud.d)
    return PointCloud(cloud.points @ B.T, cloud.weights, cloud.seed,
                      {**cloud.provenance, "op": "orthogonal_project", "k": B.shape[0]})


def random_basis(d: int, k: int, seed: int = 0) -> np.ndarray:
    """First ``k`` rows of a Haar rotation: a uniformly random k-plane."""
    return haar_rotations(d, 1, make_rng(seed, stream=4))[0][:k]


class OrthogonalProjector(TransformerMixin, BaseEstimator):
    """Projection onto a fixed or Haar-random k-plane."""

    def __init__(self, k: int = 1, basis=None, seed: int = 0):
        self.k = k
        self.basis = basis
        self.seed = seed

    def fit(self, X, y=None):
        X = check_array(X)
        d = X.shape[1]
        basis = self.basis if self.basis is not None else random_basis(d, self.k, self.seed)
        self.basis_ = _check_basis(basis, d)
        self.n_features_in_ = d
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(f"fitted on d={self.n_features_in_}, got d={X.shape[1]}")
        return X @ self.basis_.T


@dataclass
class DissonanceConfig:
    n: int = 10**6
    m: int | None = None
    seed: int = 0
    estimator: str = "box"
    estimator_params: dict = field(default_factory=dict)
    dissonant_tol: float = DISSONANT_TOL
    resonant_gap: float = RESONANT_GAP
    theorem: str | None = None

    @classmethod
    def from_dict(cls, cfg: dict | None) -> DissonanceConfig:
        return cls(**(cfg or {}))


@dataclass
class DissonanceReport:
    dim_mu: DimensionEstimate
    dim_nu: DimensionEstimate
    dim_conv: DimensionEstimate
    predicted: float
    gap: float
    verdict: str
    thresholds: dict
    conditions: dict | None = None
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("dim_mu", "dim_nu", "dim_conv"):
            out[key] = getattr(self, key).to_dict()
        return out

    def csv_row(self) -> str:
        return ",".join(str(v) for v in (
            self.verdict, self.predicted, self.dim_conv.value, self.gap,
            self.dim_mu.value, self.dim_nu.value, self.dim_conv.stderr,
            int(bool(self.flags.get("discrepancy")))))


DISSONANCE_CSV_HEADER = "verdict,predicted,dim_conv,gap,dim_mu,dim_nu,stderr_conv,discrepancy"


def classify(gap: float, dissonant_tol: float = DISSONANT_TOL, resonant_gap: float = RESONANT_GAP) -> str:
    if abs(gap) <= dissonant_tol:
        return "Dissonant"
    if gap >= resonant_gap:
        return "Resonant"
    return "Inconclusive"


def dissonance_experiment(phi: IFS, psi: IFS, config: DissonanceConfig | dict | None = None) -> DissonanceReport:
    """Sample both measures, estimate the three dimensions and classify the gap."""
    cfg = config if isinstance(config, DissonanceConfig) else DissonanceConfig.from_dict(config)
    if phi.d != psi.d:
        raise DimensionMismatch(f"systems live in d={phi.d} and d={psi.d}")
    d = phi.d
    m = cfg.m or cfg.n
    mu = chaos_game(phi, cfg.n, seed=cfg.seed)
    nu = chaos_game(psi, cfg.n, seed=cfg.seed + 1)
    conv = convolve(mu, nu, m, seed=cfg.seed + 2)

    est = dict(cfg.estimator_params)
    dim_mu = estimate(mu, cfg.estimator, **est)
    dim_nu = estimate(nu, cfg.estimator, **est)
    dim_conv = estimate(conv, cfg.estimator, **est)
    predicted = min(float(d), dim_mu.value + dim_nu.value)
    gap = predicted - dim_conv.value
    verdict = classify(gap, cfg.dissonant_tol, cfg.resonant_gap)

    flags: dict = {"upper_bound_exceeded": bool(-gap > cfg.dissonant_tol)}
    if d == 2:
        flags["supported_on_parallel_lines"] = bool(parallel_lines(mu, nu))
    conditions = None
    if d == 1:
        flags["log_ratio_condition"] = check_log_ratio(phi, psi).to_dict()
    if cfg.theorem is not None:
        report = check_theorem_conditions(phi, psi if cfg.theorem in ("T6", "T7") else None, cfg.theorem)
        conditions = report.to_dict()
        if verdict == "Resonant" and report.status == "Holds":
            flags["discrepancy"] = True
            log.warning("resonance measured although every %s hypothesis holds (gap %.3f)",
                        cfg.theorem, gap)
    return DissonanceReport(dim_mu, dim_nu, dim_conv, predicted, gap, verdict,
                            {"dissonant_tol": cfg.dissonant_tol, "resonant_gap": cfg.resonant_gap},
                            conditions, flags)
