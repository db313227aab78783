"""Linear algebra on SO(d), so(d) and CO(d), plus the density checker.

Elements of CO(d) are stored as ``(t, O)`` with scale ``exp(t)``.  The
density checker certifies that a finite generating set is dense in CO(d) by
building the Lie algebra of the closed subgroup it generates: logarithms of
words whose rotation angle passes the bounded irrationality test, closed
under the adjoint action of the generators and under brackets.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, logm

from .errors import LogBranchUndefined
from .rational import (DEFAULT_MAX_DENOMINATOR, DEFAULT_TOL,
                       rational_approximation)

ORTHO_TOL = 1e-10
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True, eq=False)
class ConformalLinear:
    """``exp(t) * O``.  ``reversing`` marks a reflection-containing ``O``."""

    t: float
    O: np.ndarray
    reversing: bool = False

    def __post_init__(self):
        O = np.array(self.O, dtype=float)
        if O.ndim != 2 or O.shape[0] != O.shape[1]:
            raise ValueError("O must be a square matrix")
        if not math.isfinite(self.t):
            raise ValueError("log-scale must be finite")
        if np.linalg.norm(O.T @ O - np.eye(len(O))) >= ORTHO_TOL:
            raise ValueError("O is not orthogonal within 1e-10")
        if (np.linalg.det(O) < 0) != self.reversing:
            raise ValueError("orientation flag does not match det(O)")
        O.setflags(write=False)
        object.__setattr__(self, "O", O)
        object.__setattr__(self, "t", float(self.t))

    @property
    def d(self) -> int:
        return self.O.shape[0]

    @property
    def scale(self) -> float:
        return math.exp(self.t)

    def matrix(self) -> np.ndarray:
        return self.scale * self.O

    def __matmul__(self, other: ConformalLinear) -> ConformalLinear:
        return ConformalLinear(self.t + other.t, _reorthonormalize(self.O @ other.O),
                               self.reversing != other.reversing)

    def inverse(self) -> ConformalLinear:
        return ConformalLinear(-self.t, self.O.T.copy(), self.reversing)

    def angle(self) -> float:
        """Rotation angle in (-pi, pi]; planar orientation-preserving only."""
        if self.d != 2 or self.reversing:
            raise ValueError("angle is defined for SO(2) elements only")
        return math.atan2(self.O[1, 0], self.O[0, 0])

    def allclose(self, other: ConformalLinear, atol: float = 1e-9) -> bool:
        return (abs(self.t - other.t) <= atol and self.reversing == other.reversing
                and np.allclose(self.O, other.O, atol=atol, rtol=0))

    def __repr__(self):
        return f"ConformalLinear(t={self.t!r}, O={self.O.tolist()!r}, reversing={self.reversing})"


def identity(d: int) -> ConformalLinear:
    return ConformalLinear(0.0, np.eye(d))


def _reorthonormalize(O: np.ndarray) -> np.ndarray:
    # one polar-decomposition step keeps long products on the group
    u, _, vt = np.linalg.svd(O)
    return u @ vt


def is_skew(A: np.ndarray, tol: float = 1e-10) -> bool:
    A = np.asarray(A, dtype=float)
    return A.ndim == 2 and A.shape[0] == A.shape[1] and np.linalg.norm(A + A.T) < tol


def rotation_2d(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def axis_angle(axis, angle: float) -> np.ndarray:
    """Rotation of R^3 by ``angle`` about ``axis`` (right-hand rule)."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return so_exp(angle * K)


def so_exp(A: np.ndarray) -> np.ndarray:
    """Matrix exponential of a skew-symmetric matrix (Pade scaling and squaring)."""
    A = np.asarray(A, dtype=float)
    if not is_skew(A, 1e-10 * max(1.0, np.linalg.norm(A))):
        raise ValueError("so_exp expects a skew-symmetric matrix")
    A = 0.5 * (A - A.T)
    if A.shape == (2, 2):
        return rotation_2d(A[1, 0])
    return _reorthonormalize(expm(A))


def so_log(O: np.ndarray, branch_tol: float = 1e-9) -> np.ndarray:
    """Principal logarithm of a rotation; raises if -1 is an eigenvalue."""
    O = np.asarray(O, dtype=float)
    d = O.shape[0]
    if np.linalg.norm(O.T @ O - np.eye(d)) > 1e-8 or np.linalg.det(O) <= 0:
        raise ValueError("so_log expects a rotation matrix")
    if d == 2:
        theta = math.atan2(O[1, 0], O[0, 0])
        if math.pi - abs(theta) < branch_tol:
            raise LogBranchUndefined("rotation by pi has no principal logarithm")
        return np.array([[0.0, -theta], [theta, 0.0]])
    if np.min(np.abs(np.linalg.eigvals(O) + 1.0)) < branch_tol:
        raise LogBranchUndefined("-1 is an eigenvalue; principal branch undefined")
    L = np.real(logm(O))
    return 0.5 * (L - L.T)


def rotation_angles(O: np.ndarray) -> np.ndarray:
    """Nonnegative rotation angles of ``O``, one per invariant 2-plane."""
    ev = np.linalg.eigvals(np.asarray(O, dtype=float))
    ang = np.abs(np.angle(ev))
    ang = np.sort(ang[ang > 1e-12])[::-1]
    # eigenvalues come in conjugate pairs
    return ang[::2]


def wedge_to_skew(v, w) -> np.ndarray:
    """Skew map ``x -> <v,x> w - <w,x> v``."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    return np.outer(w, v) - np.outer(v, w)


def skew_to_vector(A: np.ndarray) -> np.ndarray:
    """Coordinates of ``A`` in the basis ``e_j wedge e_i`` (i < j)."""
    i, j = np.triu_indices(A.shape[0], k=1)
    return np.asarray(A)[j, i]


def vector_to_skew(v: np.ndarray, d: int) -> np.ndarray:
    A = np.zeros((d, d))
    i, j = np.triu_indices(d, k=1)
    A[j, i] = v
    A[i, j] = -v
    return A


def span_rank(elements, tol: float = 1e-8, atol: float = 1e-12) -> int:
    """Numerical rank of ``(skew, real)`` pairs flattened into so(d) x R.

    Singular values count when above ``tol`` times the largest; a set whose
    largest singular value is below ``atol`` is round-off and has rank 0.
    """
    rows = [np.append(skew_to_vector(np.asarray(A, dtype=float)), float(r)) for A, r in elements]
    if not rows:
        raise ValueError("span_rank needs at least one element")
    s = np.linalg.svd(np.vstack(rows), compute_uv=False)
    if s[0] <= atol:
        return 0
    return int(np.sum(s > tol * s[0]))


def _bracket(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B - B @ A


class _Subalgebra:
    """Orthonormal basis of a subspace of so(d), grown one vector at a time."""

    def __init__(self, d: int, tol: float = 1e-8):
        self.d = d
        self.tol = tol
        self.basis: list[np.ndarray] = []

    @property
    def full(self) -> bool:
        return len(self.basis) == self.d * (self.d - 1) // 2

    def add(self, A: np.ndarray) -> bool:
        v = skew_to_vector(A)
        n = np.linalg.norm(v)
        if n == 0:
            return False
        v = v / n
        for b in self.basis:
            v = v - (b @ v) * b
        r = np.linalg.norm(v)
        if r <= self.tol:
            return False
        self.basis.append(v / r)
        return True

    def matrices(self) -> list[np.ndarray]:
        return [vector_to_skew(b, self.d) for b in self.basis]

    def close(self, rotations: list[np.ndarray]) -> None:
        """Close under Ad of the given rotations and under brackets."""
        changed = True
        while changed and not self.full:
            changed = False
            mats = self.matrices()
            for A in mats:
                for O in rotations:
                    changed |= self.add(O @ A @ O.T)
            mats = self.matrices()
            for A, B in itertools.combinations(mats, 2):
                changed |= self.add(_bracket(A, B))


@dataclass
class _Word:
    letters: tuple[int, ...]
    t: float
    O: np.ndarray
    exponents: np.ndarray


def enumerate_words(generators: list[ConformalLinear], max_len: int, budget: int):
    """Reduced words over generators and their inverses, shortest first.

    Letter ``2k`` is generator ``k`` and ``2k+1`` its inverse.
    """
    letters = []
    for k, g in enumerate(generators):
        letters.append((2 * k, g.t, g.O))
        letters.append((2 * k + 1, -g.t, g.O.T))
    m = len(generators)
    frontier = [_Word((), 0.0, np.eye(generators[0].d), np.zeros(m, dtype=int))]
    count = 0
    for _ in range(max_len):
        nxt = []
        for w in frontier:
            for code, t, O in letters:
                if w.letters and (w.letters[-1] ^ 1) == code:
                    continue
                e = w.exponents.copy()
                e[code // 2] += -1 if code & 1 else 1
                word = _Word(w.letters + (code,), w.t + t, w.O @ O, e)
                yield word
                count += 1
                if count >= budget:
                    return
                nxt.append(word)
        frontier = nxt


def _angle_certificates(O: np.ndarray, max_den: int, tol: float):
    angles = rotation_angles(O)
    if len(angles) == 0:
        return None
    certs = [rational_approximation(a / TWO_PI, max_den, tol) for a in angles]
    if not all(c.irrational for c in certs):
        return None
    for a, b in itertools.combinations(angles, 2):
        if not rational_approximation(a / b, max_den, tol).irrational:
            return None
    return certs


@dataclass
class GenerationVerdict:
    verdict: str
    evidence: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "evidence": self.evidence}


def _scale_density(ts: list[float], max_den: int, tol: float):
    """Two scale logs with a certified irrational ratio, or a rational witness set."""
    nonzero = [(i, t) for i, t in enumerate(ts) if abs(t) > 1e-12]
    for (i, a), (j, b) in itertools.combinations(nonzero, 2):
        cert = rational_approximation(a / b, max_den, tol)
        if cert.irrational:
            return True, {"pair": [i, j], "ratio": cert.to_dict()}
    return False, {"nonzero_scales": len(nonzero)}


def _common_fixed_vector(rotations: list[np.ndarray], tol: float = 1e-10):
    d = rotations[0].shape[0]
    M = np.vstack([O - np.eye(d) for O in rotations])
    _, s, vt = np.linalg.svd(M)
    if s[-1] < tol:
        return vt[-1]
    return None


def check_generates_CO(generators: list[ConformalLinear], word_len: int = 6,
                       max_denominator: int = DEFAULT_MAX_DENOMINATOR, tol: float = DEFAULT_TOL,
                       budget: int = 10**6, seed: int | None = None) -> GenerationVerdict:
    """Decide whether the generators and their inverses are dense in CO(d).

    ``seed`` only orders the near-identity search; Dense and ProperSubgroup
    verdicts do not depend on it.
    """
    if not generators:
        raise ValueError("need at least one generator")
    d = generators[0].d
    if d < 2:
        raise ValueError("d >= 2 required")
    if any(g.reversing for g in generators):
        raise ValueError("generators must be orientation-preserving")
    bounds = {"max_denominator": max_denominator, "tol": tol, "word_len": word_len}
    if d == 2:
        return _check_planar(generators, word_len, max_denominator, tol, bounds)

    rotations = [g.O for g in generators]
    full_rank = d * (d - 1) // 2
    ts = [g.t for g in generators]
    scale_dense, scale_ev = _scale_density(ts, max_denominator, tol)

    algebra = _Subalgebra(d)
    zero_scale = _Subalgebra(d)
    scale_unit = max(1.0, max(abs(t) for t in ts))
    near_identity = None
    certified_words = []
    for w in enumerate_words(generators, word_len, min(budget, 20000)):
        if algebra.full and zero_scale.full:
            break
        certs = _angle_certificates(w.O, max_denominator, tol)
        if certs is None:
            continue
        try:
            L = so_log(w.O)
        except LogBranchUndefined:
            continue
        if algebra.add(L):
            certified_words.append(list(w.letters))
        if abs(w.t) <= 1e-12 * scale_unit:
            zero_scale.add(L)
    algebra.close(rotations)
    zero_scale.close(rotations)

    evidence = {
        "so_rank": len(algebra.basis),
        "zero_scale_so_rank": len(zero_scale.basis),
        "required_so_rank": full_rank,
        "certified_words": certified_words[:8],
        "scale_density": scale_ev,
        "bounds": bounds,
    }

    scalar_witness = None
    if zero_scale.full:
        k = max(range(len(ts)), key=lambda i: abs(ts[i]))
        if abs(ts[k]) > 1e-6:
            scalar_witness = {"route": "dense-zero-scale-subgroup", "generator": k, "log_scale": ts[k]}
    if scalar_witness is None:
        near_identity = _near_identity_search(generators, budget, seed)
        if near_identity is not None:
            scalar_witness = {"route": "near-identity-word", **near_identity}
    evidence["scalar_witness"] = scalar_witness

    if algebra.full and scale_dense and scalar_witness is not None:
        evidence["algebra_rank"] = full_rank + 1
        return GenerationVerdict("Dense", evidence)

    obstruction = _obstruction(generators, max_denominator, tol)
    if obstruction is not None:
        evidence["obstruction"] = obstruction
        return GenerationVerdict("ProperSubgroup", evidence)
    return GenerationVerdict("Inconclusive", evidence)


def _obstruction(generators, max_den, tol):
    rotations = [g.O for g in generators]
    v = _common_fixed_vector(rotations)
    if v is not None:
        return {"kind": "common-invariant-subspace", "fixed_vector": v.tolist()}
    if all(np.allclose(A @ B, B @ A, atol=1e-12) for A, B in itertools.combinations(rotations, 2)):
        return {"kind": "commuting-rotations"}
    ts = [g.t for g in generators]
    nonzero = [t for t in ts if abs(t) > 1e-12]
    if not nonzero:
        return {"kind": "no-scaling"}
    base = nonzero[0]
    ratios = [rational_approximation(t / base, 1000, tol) for t in nonzero]
    if all(not r.irrational for r in ratios):
        return {"kind": "discrete-scale-group",
                "ratios": [[r.witness.numerator, r.witness.denominator] for r in ratios]}
    return None


def _near_identity_search(generators, budget, seed, rot_tol=1e-6, scale_tol=1e-6):
    """Breadth-first search over reduced words, one vectorized level at a time.

    Levels are visited in full; ``seed`` permutes letters within a level so
    the reported witness may change but not whether one exists within budget.
    """
    rng = np.random.default_rng(seed)
    d = generators[0].d
    m = len(generators)
    lt, lO = [], []
    for g in generators:
        lt += [g.t, -g.t]
        lO += [g.O, g.O.T]
    perm = rng.permutation(2 * m)
    lt = np.array(lt)[perm]
    lO = np.array(lO)[perm]
    inverse_of = np.empty(2 * m, dtype=int)
    inverse_of[np.argsort(perm)] = np.argsort(perm)[np.arange(2 * m) ^ 1]
    last = np.arange(2 * m)
    t = lt.copy()
    O = lO.copy()
    expo = np.zeros((2 * m, m), dtype=np.int64)
    expo[np.arange(2 * m), perm // 2] = np.where(perm % 2 == 0, 1, -1)
    seen = 0
    eye = np.eye(d)
    while len(t) and seen < budget:
        dist = np.linalg.norm(O - eye, axis=(1, 2))
        hit = np.flatnonzero((dist <= rot_tol) & (np.abs(t) > scale_tol))
        if hit.size:
            i = hit[0]
            return {"exponents": expo[i].tolist(), "rotation_distance": float(dist[i]),
                    "log_scale": float(t[i])}
        seen += len(t)
        if seen + len(t) * (2 * m - 1) > budget:
            break
        parent, letter = np.nonzero(inverse_of[last][:, None] != np.arange(2 * m)[None, :])
        t = t[parent] + lt[letter]
        O = np.matmul(O[parent], lO[letter])
        expo = expo[parent].copy()
        np.add.at(expo, (np.arange(len(letter)), perm[letter] // 2), np.where(perm[letter] % 2 == 0, 1, -1))
        last = letter
    return None


def _check_planar(generators, word_len, max_den, tol, bounds) -> GenerationVerdict:
    # SO(2) is abelian: an element is determined by (angle / 2pi mod 1, t)
    turns = [g.angle() / TWO_PI for g in generators]
    ts = [g.t for g in generators]
    m = len(generators)
    rot_certs = [rational_approximation(a, max_den, tol) for a in turns]
    rotation_dense = any(c.irrational for c in rot_certs)

    pure_scales = []
    k = max(1, word_len // 2)
    for n in sorted(itertools.product(range(-k, k + 1), repeat=m), key=lambda v: sum(map(abs, v))):
        if not any(n):
            continue
        turn = sum(ni * a for ni, a in zip(n, turns))
        s = sum(ni * t for ni, t in zip(n, ts))
        if abs(turn - round(turn)) < tol and abs(s) > 1e-12:
            pure_scales.append((list(n), s))
        if len(pure_scales) > 64:
            break
    scale_dense = False
    scale_ev: dict = {"pure_scale_elements": [p for p in pure_scales[:8]]}
    for (na, a), (nb, b) in itertools.combinations(pure_scales, 2):
        cert = rational_approximation(a / b, max_den, tol)
        if cert.irrational:
            scale_dense = True
            scale_ev["pair"] = [na, nb]
            scale_ev["ratio"] = cert.to_dict()
            break

    evidence = {
        "so_rank": 1 if rotation_dense else 0,
        "required_so_rank": 1,
        "rotation_certificates": [c.to_dict() for c in rot_certs],
        "scale_density": scale_ev,
        "bounds": bounds,
    }
    if rotation_dense and scale_dense:
        evidence["algebra_rank"] = 2
        evidence["scalar_witness"] = {"route": "matched-rotation", "exponents": scale_ev["pair"]}
        return GenerationVerdict("Dense", evidence)

    if all(not c.irrational and c.witness.denominator <= 1000 for c in rot_certs):
        evidence["obstruction"] = {"kind": "finite-rotation-group",
                                   "turns": [[c.witness.numerator, c.witness.denominator] for c in rot_certs]}
        return GenerationVerdict("ProperSubgroup", evidence)
    nonzero = [t for t in ts if abs(t) > 1e-12]
    if not nonzero or all(not rational_approximation(t / nonzero[0], 1000, tol).irrational for t in nonzero):
        evidence["obstruction"] = {"kind": "discrete-scale-group"}
        return GenerationVerdict("ProperSubgroup", evidence)
    if all(abs(t) > 1e-12 for t in ts):
        slopes = [a / t for a, t in zip(turns, ts)]
        if np.ptp(slopes) < tol:
            evidence["obstruction"] = {"kind": "one-parameter-spiral", "slope": slopes[0]}
            return GenerationVerdict("ProperSubgroup", evidence)
    return GenerationVerdict("Inconclusive", evidence)


def check_generates_SO(rotations: list[np.ndarray], word_len: int = 6,
                       max_denominator: int = DEFAULT_MAX_DENOMINATOR, tol: float = DEFAULT_TOL,
                       budget: int = 20000) -> GenerationVerdict:
    """Decide whether rotations and their inverses are dense in SO(d)."""
    if not len(rotations):
        raise ValueError("need at least one rotation")
    rotations = [np.asarray(O, dtype=float) for O in rotations]
    d = rotations[0].shape[0]
    if d < 2:
        raise ValueError("d >= 2 required")
    if any(np.linalg.det(O) < 0 for O in rotations):
        raise ValueError("rotations must have determinant +1")
    bounds = {"max_denominator": max_denominator, "tol": tol, "word_len": word_len}
    if d == 2:
        turns = [math.atan2(O[1, 0], O[0, 0]) / TWO_PI for O in rotations]
        certs = [rational_approximation(a, max_denominator, tol) for a in turns]
        evidence = {"so_rank": int(any(c.irrational for c in certs)), "required_so_rank": 1,
                    "rotation_certificates": [c.to_dict() for c in certs], "bounds": bounds}
        if evidence["so_rank"]:
            return GenerationVerdict("Dense", evidence)
        if all(c.witness.denominator <= 1000 for c in certs):
            evidence["obstruction"] = {"kind": "finite-rotation-group",
                                       "turns": [[c.witness.numerator, c.witness.denominator] for c in certs]}
            return GenerationVerdict("ProperSubgroup", evidence)
        return GenerationVerdict("Inconclusive", evidence)

    gens = [ConformalLinear(0.0, O) for O in rotations]
    algebra = _Subalgebra(d)
    certified_words = []
    for w in enumerate_words(gens, word_len, budget):
        if algebra.full:
            break
        if _angle_certificates(w.O, max_denominator, tol) is None:
            continue
        try:
            L = so_log(w.O)
        except LogBranchUndefined:
            continue
        if algebra.add(L):
            certified_words.append(list(w.letters))
    algebra.close(rotations)
    evidence = {"so_rank": len(algebra.basis), "required_so_rank": d * (d - 1) // 2,
                "certified_words": certified_words[:8], "bounds": bounds}
    if algebra.full:
        return GenerationVerdict("Dense", evidence)
    v = _common_fixed_vector(rotations)
    if v is not None:
        evidence["obstruction"] = {"kind": "common-invariant-subspace", "fixed_vector": v.tolist()}
        return GenerationVerdict("ProperSubgroup", evidence)
    if all(np.allclose(A @ B, B @ A, atol=1e-12) for A, B in itertools.combinations(rotations, 2)):
        evidence["obstruction"] = {"kind": "commuting-rotations"}
        return GenerationVerdict("ProperSubgroup", evidence)
    return GenerationVerdict("Inconclusive", evidence)
