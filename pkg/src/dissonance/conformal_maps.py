"""Contractive conformal maps of the cube (-1, 1)^d.

Three concrete variants are provided:

* :class:`Similarity`  ``x -> r O x + a``
* :class:`PlanarAnalytic`  a complex rational function of ``z = x + iy``
  (Mobius coefficients and polynomials are special cases)
* :class:`MoebiusWord`  an ordered word of similarities and
  :class:`Inversion` factors, applied left to right

All maps accept a single point of shape ``(d,)`` or a batch of shape
``(n, d)``.  Domain checks use the closed cube ``[-1, 1]^d`` so that fixed
points on the boundary (``x/3 + 2/3`` fixes 1) stay admissible.
"""

from __future__ import annotations

import math
from functools import cached_property

import numpy as np
from scipy.stats import qmc

from .errors import DomainMismatch, NoConvergence, PointOutsideDomain, PoleHit
from .lie import ConformalLinear, rotation_2d

DOMAIN_TOL = 1e-12
POLE_TOL = 1e-12
FIXED_POINT_TOL = 1e-12
FIXED_POINT_MAX_ITER = 10_000


def domain_sample(d: int, n: int = 10_000, boundary_per_axis: int = 9) -> np.ndarray:
    """Boundary grid of the closed cube plus a Sobol interior sample."""
    g = np.linspace(-1.0, 1.0, boundary_per_axis)
    if d == 1:
        boundary = np.array([[-1.0], [1.0]])
    else:
        mesh = np.stack(np.meshgrid(*([g] * d), indexing="ij"), axis=-1).reshape(-1, d)
        boundary = mesh[np.any(np.abs(mesh) == 1.0, axis=1)]
    m = max(1, int(math.ceil(math.log2(max(n - len(boundary), 2)))))
    interior = 2.0 * qmc.Sobol(d, scramble=False).random_base2(m) - 1.0
    return np.vstack([boundary, interior])


def _as_batch(x, d: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != d:
        raise ValueError(f"expected points of dimension {d}, got shape {x.shape}")
    return xb, single


def _check_domain(xb: np.ndarray) -> None:
    if not np.all(np.isfinite(xb)) or np.any(np.abs(xb) > 1.0 + DOMAIN_TOL):
        raise PointOutsideDomain("point outside the closed cube [-1, 1]^d")


class ConformalMap:
    """Base class; subclasses implement ``_apply`` and ``_jacobian`` on batches."""

    d: int

    def _apply(self, xb: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _jacobian(self, xb: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check_poles(self, xb: np.ndarray) -> None:
        pass

    def apply(self, x, check_domain: bool = True) -> np.ndarray:
        xb, single = _as_batch(x, self.d)
        if check_domain:
            _check_domain(xb)
        self._check_poles(xb)
        y = self._apply(xb)
        return y[0] if single else y

    __call__ = apply

    def jacobian(self, x, check_domain: bool = True) -> np.ndarray:
        xb, single = _as_batch(x, self.d)
        if check_domain:
            _check_domain(xb)
        self._check_poles(xb)
        J = self._jacobian(xb)
        return J[0] if single else J

    def derivative(self, x) -> ConformalLinear:
        """``(log lambda_f(x), O_f(x))`` at a single point."""
        J = self.jacobian(np.asarray(x, dtype=float).reshape(self.d))
        lam = np.linalg.norm(J, 2)
        O = J / lam
        return ConformalLinear(math.log(lam), O, bool(np.linalg.det(O) < 0))

    def local_scale(self, x) -> np.ndarray:
        """``lambda_f`` at a batch of points."""
        J = self.jacobian(x)
        return np.linalg.norm(J, ord=2, axis=(-2, -1))

    @property
    def orientation_preserving(self) -> bool:
        return bool(np.linalg.det(self.jacobian(np.zeros(self.d), check_domain=False)) > 0)

    def fixed_point(self) -> np.ndarray:
        x = np.zeros(self.d)
        for _ in range(FIXED_POINT_MAX_ITER):
            y = self.apply(x, check_domain=False)
            if np.linalg.norm(y - x) < FIXED_POINT_TOL:
                # one more step so the returned point satisfies the bound itself
                z = self.apply(y, check_domain=False)
                if np.linalg.norm(z - y) < FIXED_POINT_TOL:
                    return y
            x = y
            if not np.all(np.isfinite(x)):
                break
        raise NoConvergence("fixed-point iteration did not converge; map may not be contractive")

    def lambda_O(self) -> ConformalLinear:
        return self.derivative(self.fixed_point())

    def contraction_bound(self, n: int = 10_000) -> float:
        return float(np.max(self.local_scale(domain_sample(self.d, n))))

    def image_in_domain(self, n: int = 2_000, margin: float = 0.0) -> bool:
        y = self.apply(domain_sample(self.d, n))
        return bool(np.all(np.abs(y) <= 1.0 - margin + DOMAIN_TOL))

    def is_affine(self, tol: float = 1e-9) -> bool:
        J = self.jacobian(domain_sample(self.d, 1_000))
        ref = J[0]
        return bool(np.max(np.linalg.norm(J - ref, axis=(1, 2))) <= tol * max(1.0, np.linalg.norm(ref)))

    def conformality_defect(self, x) -> np.ndarray:
        """``||J^T J - lambda^2 I||_F / lambda^2`` at a batch of points."""
        J = self.jacobian(x)
        JtJ = np.swapaxes(J, -1, -2) @ J
        lam2 = np.linalg.norm(J, ord=2, axis=(-2, -1)) ** 2
        return np.linalg.norm(JtJ - lam2[..., None, None] * np.eye(self.d), axis=(-2, -1)) / lam2

    def to_dict(self) -> dict:
        raise NotImplementedError


class Similarity(ConformalMap):
    """``x -> r O x + a`` with ``0 < r`` and ``O`` orthogonal."""

    def __init__(self, r: float, O=None, a=None, d: int | None = None):
        if a is not None:
            a = np.atleast_1d(np.asarray(a, dtype=float))
            d = a.shape[0] if d is None else d
        if O is not None:
            O = np.atleast_2d(np.asarray(O, dtype=float))
            d = O.shape[0] if d is None else d
        if d is None:
            raise ValueError("cannot infer dimension")
        self.d = d
        self.r = float(r)
        self.O = np.eye(d) if O is None else O
        self.a = np.zeros(d) if a is None else a
        if not self.r > 0:
            raise ValueError("similarity ratio must be positive")
        if self.O.shape != (d, d) or self.a.shape != (d,):
            raise ValueError("shape mismatch between O, a and d")
        if np.linalg.norm(self.O.T @ self.O - np.eye(d)) > 1e-10:
            raise ValueError("O must be orthogonal within 1e-10")
        self.O.setflags(write=False)
        self.a.setflags(write=False)

    def _apply(self, xb):
        return self.r * xb @ self.O.T + self.a

    def _jacobian(self, xb):
        return np.broadcast_to(self.r * self.O, (len(xb), self.d, self.d)).copy()

    def derivative(self, x=None) -> ConformalLinear:
        return ConformalLinear(math.log(self.r), self.O, bool(np.linalg.det(self.O) < 0))

    def is_affine(self, tol: float = 1e-9) -> bool:
        return True

    def contraction_bound(self, n: int = 10_000) -> float:
        return self.r

    def fixed_point(self) -> np.ndarray:
        return np.linalg.solve(np.eye(self.d) - self.r * self.O, self.a)

    def to_dict(self) -> dict:
        return {"kind": "similarity", "r": self.r, "matrix": self.O.tolist(), "a": self.a.tolist()}

    def __repr__(self):
        return f"Similarity(r={self.r!r}, O={self.O.tolist()!r}, a={self.a.tolist()!r})"


class Inversion(ConformalMap):
    """Sphere inversion ``y -> c + rho^2 (y - c) / |y - c|^2`` (orientation reversing)."""

    def __init__(self, center, radius: float = 1.0):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.center.setflags(write=False)
        self.radius = float(radius)
        self.d = self.center.shape[0]
        if self.d < 2:
            raise ValueError("inversions need d >= 2")
        if not self.radius > 0:
            raise ValueError("inversion radius must be positive")

    def _check_poles(self, xb):
        if np.any(np.linalg.norm(xb - self.center, axis=1) < POLE_TOL):
            raise PoleHit("point coincides with the inversion center")

    def _apply(self, xb):
        v = xb - self.center
        return self.center + self.radius**2 * v / np.sum(v * v, axis=1, keepdims=True)

    def _jacobian(self, xb):
        v = xb - self.center
        n2 = np.sum(v * v, axis=1)
        u = v / np.sqrt(n2)[:, None]
        refl = np.eye(self.d) - 2.0 * u[:, :, None] * u[:, None, :]
        return (self.radius**2 / n2)[:, None, None] * refl

    def is_affine(self, tol: float = 1e-9) -> bool:
        return False

    def to_dict(self) -> dict:
        return {"kind": "inversion", "center": self.center.tolist(), "radius": self.radius}

    def __repr__(self):
        return f"Inversion(center={self.center.tolist()!r}, radius={self.radius!r})"


class MoebiusWord(ConformalMap):
    """Composition of factors applied in list order: ``factors[-1] o ... o factors[0]``."""

    def __init__(self, factors):
        factors = list(factors)
        if not factors:
            raise ValueError("empty Moebius word")
        flat = []
        for f in factors:
            if isinstance(f, MoebiusWord):
                flat.extend(f.factors)
            elif isinstance(f, (Similarity, Inversion)):
                flat.append(f)
            else:
                raise TypeError(f"unsupported Moebius factor {type(f).__name__}")
        d = {f.d for f in flat}
        if len(d) != 1:
            raise ValueError("factors have different dimensions")
        self.d = d.pop()
        self.factors = tuple(flat)

    def _check_poles(self, xb):
        y = xb
        for f in self.factors:
            f._check_poles(y)
            y = f._apply(y)

    def _apply(self, xb):
        y = xb
        for f in self.factors:
            y = f._apply(y)
        return y

    def _jacobian(self, xb):
        y = xb
        J = np.broadcast_to(np.eye(self.d), (len(xb), self.d, self.d)).copy()
        for f in self.factors:
            J = f._jacobian(y) @ J
            y = f._apply(y)
        return J

    def is_affine(self, tol: float = 1e-9) -> bool:
        if all(isinstance(f, Similarity) for f in self.factors):
            return True
        return super().is_affine(tol)

    def to_dict(self) -> dict:
        return {"kind": "word", "factors": [f.to_dict() for f in self.factors]}

    def __repr__(self):
        return f"MoebiusWord({list(self.factors)!r})"


class PlanarAnalytic(ConformalMap):
    """Complex rational map ``z -> P(z) / Q(z)`` on the square, ``z = x + i y``.

    Coefficients are listed highest degree first.
    """

    d = 2

    def __init__(self, numerator, denominator=(1.0,)):
        self.numerator = np.atleast_1d(np.asarray(numerator, dtype=complex))
        self.denominator = np.atleast_1d(np.asarray(denominator, dtype=complex))
        if not np.any(self.denominator):
            raise ValueError("zero denominator")
        self.numerator.setflags(write=False)
        self.denominator.setflags(write=False)

    @classmethod
    def from_moebius(cls, a, b, c, e) -> PlanarAnalytic:
        """``z -> (a z + b) / (c z + e)``."""
        if abs(a * e - b * c) == 0:
            raise ValueError("degenerate Mobius coefficients: ad - bc = 0")
        if c == 0:
            return cls([a / e, b / e])
        return cls([a, b], [c, e])

    @classmethod
    def polynomial(cls, coeffs) -> PlanarAnalytic:
        return cls(coeffs)

    @classmethod
    def affine(cls, scale: complex, shift: complex = 0) -> PlanarAnalytic:
        return cls([scale, shift])

    @cached_property
    def _dnum(self):
        return np.polyder(self.numerator) if len(self.numerator) > 1 else np.zeros(1, dtype=complex)

    @cached_property
    def _dden(self):
        return np.polyder(self.denominator) if len(self.denominator) > 1 else np.zeros(1, dtype=complex)

    @cached_property
    def poles(self) -> np.ndarray:
        den = np.trim_zeros(self.denominator, "f")
        return np.roots(den) if len(den) > 1 else np.zeros(0, dtype=complex)

    def _check_poles(self, xb):
        if len(self.poles):
            z = xb[:, 0] + 1j * xb[:, 1]
            if np.min(np.abs(z[:, None] - self.poles[None, :])) < POLE_TOL:
                raise PoleHit("point coincides with a pole")

    def complex_value(self, z):
        return np.polyval(self.numerator, z) / np.polyval(self.denominator, z)

    def complex_derivative(self, z):
        n, dn = np.polyval(self.numerator, z), np.polyval(self._dnum, z)
        q, dq = np.polyval(self.denominator, z), np.polyval(self._dden, z)
        return (dn * q - n * dq) / (q * q)

    def _apply(self, xb):
        w = self.complex_value(xb[:, 0] + 1j * xb[:, 1])
        return np.column_stack([w.real, w.imag])

    def _jacobian(self, xb):
        fp = self.complex_derivative(xb[:, 0] + 1j * xb[:, 1])
        J = np.empty((len(xb), 2, 2))
        J[:, 0, 0] = fp.real
        J[:, 0, 1] = -fp.imag
        J[:, 1, 0] = fp.imag
        J[:, 1, 1] = fp.real
        return J

    def is_affine(self, tol: float = 1e-9) -> bool:
        num = np.trim_zeros(self.numerator, "f")
        den = np.trim_zeros(self.denominator, "f")
        if len(den) == 1 and len(num) <= 2:
            return True
        return super().is_affine(tol)

    def to_dict(self) -> dict:
        def enc(c):
            return [[float(v.real), float(v.imag)] for v in c]
        return {"kind": "analytic", "numerator": enc(self.numerator), "denominator": enc(self.denominator)}

    def __repr__(self):
        return f"PlanarAnalytic({self.numerator.tolist()!r}, {self.denominator.tolist()!r})"


class Composite(ConformalMap):
    """``outer o inner`` for maps without a closed-form composition."""

    def __init__(self, outer: ConformalMap, inner: ConformalMap):
        if outer.d != inner.d:
            raise ValueError("dimension mismatch")
        self.outer, self.inner, self.d = outer, inner, outer.d

    def _check_poles(self, xb):
        self.inner._check_poles(xb)
        self.outer._check_poles(self.inner._apply(xb))

    def _apply(self, xb):
        return self.outer._apply(self.inner._apply(xb))

    def _jacobian(self, xb):
        return self.outer._jacobian(self.inner._apply(xb)) @ self.inner._jacobian(xb)

    def to_dict(self) -> dict:
        return {"kind": "compose", "outer": self.outer.to_dict(), "inner": self.inner.to_dict()}

    def __repr__(self):
        return f"Composite({self.outer!r}, {self.inner!r})"


def compose(f: ConformalMap, g: ConformalMap, check: bool = True) -> ConformalMap:
    """``f o g``.  Raises :class:`DomainMismatch` if ``g`` leaves the cube."""
    if f.d != g.d:
        raise DomainMismatch("maps act on different dimensions")
    if check and not g.image_in_domain():
        raise DomainMismatch("image of the inner map leaves the domain of the outer map")
    if isinstance(f, Similarity) and isinstance(g, Similarity):
        return Similarity(f.r * g.r, f.O @ g.O, f.r * f.O @ g.a + f.a)
    moebius_like = (Similarity, Inversion, MoebiusWord)
    if isinstance(f, moebius_like) and isinstance(g, moebius_like) and f.d >= 2:
        return MoebiusWord([g, f])
    if isinstance(f, PlanarAnalytic) and isinstance(g, (PlanarAnalytic, Similarity)):
        return _compose_planar(f, _as_planar(g))
    if isinstance(f, Similarity) and isinstance(g, PlanarAnalytic):
        return _compose_planar(_as_planar(f), g)
    return Composite(f, g)


def _as_planar(m: ConformalMap) -> PlanarAnalytic:
    if isinstance(m, PlanarAnalytic):
        return m
    if isinstance(m, Similarity) and m.d == 2 and np.linalg.det(m.O) > 0:
        rot = m.r * complex(m.O[0, 0], m.O[1, 0])
        return PlanarAnalytic.affine(rot, complex(m.a[0], m.a[1]))
    raise TypeError("only orientation-preserving planar similarities embed in analytic maps")


def _compose_planar(f: PlanarAnalytic, g: PlanarAnalytic) -> PlanarAnalytic:
    # P(N/D)/Q(N/D) = sum p_k N^k D^(m-k) / sum q_k N^k D^(m-k), m = max degree
    P, Q = f.numerator, f.denominator
    N, D = g.numerator, g.denominator
    m = max(len(P), len(Q)) - 1

    def homog(coeffs):
        out = np.zeros(1, dtype=complex)
        deg = len(coeffs) - 1
        for i, c in enumerate(coeffs):
            k = deg - i
            term = c * np.polymul(_polypow(N, k), _polypow(D, m - k))
            out = np.polyadd(out, term)
        return out

    return PlanarAnalytic(homog(P), homog(Q))


def _polypow(p, k):
    out = np.ones(1, dtype=complex)
    for _ in range(k):
        out = np.polymul(out, p)
    return out


def finite_difference_jacobian(f: ConformalMap, x, h: float = 1e-6) -> np.ndarray:
    """Central differences; independent of the analytic Jacobians above."""
    xb, single = _as_batch(x, f.d)
    J = np.empty((len(xb), f.d, f.d))
    for k in range(f.d):
        e = np.zeros(f.d)
        e[k] = h
        J[:, :, k] = (f.apply(xb + e, check_domain=False) - f.apply(xb - e, check_domain=False)) / (2 * h)
    return J[0] if single else J


def similarity_2d(r: float, angle: float, a) -> Similarity:
    return Similarity(r, rotation_2d(angle), a)
