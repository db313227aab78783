"""Hypothesis checkers for the algebraic dissonance theorems.

Each theorem id maps to a list of conditions evaluated on the fixed-point
data ``(log lambda(f), O(f))`` of the maps.  Every condition is three-valued
(Holds / Fails / Inconclusive) and the overall status is their conjunction.

    T3  density of {lambda(f) O(f)} in CO(d)
    C4  d >= 3: SO(d) density, irrational scale ratio, matched rotations
    C5  d == 2: SO(2) density, irrational ratio of matched scale differences
    T6  d >= 3: two systems, rotation products, then as C4 over the union
    T7  d == 2: two systems, rotation products, then as C5 over the union
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .ifs import IFS
from .lie import ConformalLinear, check_generates_CO, check_generates_SO
from .rational import DEFAULT_MAX_DENOMINATOR, DEFAULT_TOL, rational_approximation

HOLDS, FAILS, INCONCLUSIVE = "Holds", "Fails", "Inconclusive"
THEOREMS = ("T3", "C4", "C5", "T6", "T7")
ROTATION_MATCH_TOL = 1e-10

_FROM_VERDICT = {"Dense": HOLDS, "ProperSubgroup": FAILS, "Inconclusive": INCONCLUSIVE}


@dataclass
class Condition:
    name: str
    status: str
    evidence: dict = field(default_factory=dict)
    verdict: str | None = None

    def to_dict(self) -> dict:
        out = {"name": self.name, "status": self.status, "evidence": self.evidence}
        if self.verdict is not None:
            out["verdict"] = self.verdict
        return out


@dataclass
class ConditionsReport:
    theorem: str
    d: int
    conditions: list[Condition]
    notes: list[str] = field(default_factory=list)
    nonlinearity: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        statuses = [c.status for c in self.conditions]
        if FAILS in statuses:
            return FAILS
        if INCONCLUSIVE in statuses:
            return INCONCLUSIVE
        return HOLDS

    def __getitem__(self, key) -> Condition:
        if isinstance(key, int):
            return self.conditions[key - 1]
        for c in self.conditions:
            if c.name == key:
                return c
        raise KeyError(key)

    def to_dict(self) -> dict:
        return {"theorem": self.theorem, "d": self.d, "status": self.status,
                "conditions": [c.to_dict() for c in self.conditions],
                "notes": list(self.notes), "nonlinearity": self.nonlinearity}


def fixed_point_data(ifs: IFS) -> list[ConformalLinear]:
    """``(log lambda(f), O(f))`` for every map, derivative taken at the fixed point."""
    data = [f.lambda_O() for f in ifs.maps]
    if any(g.reversing for g in data):
        raise ValueError("orientation-reversing map; the conditions need orientation-preserving maps")
    return data


def nonlinearity_proxy(*systems: IFS) -> dict:
    """Advisory check of total non-linearity.

    All-affine systems fail with the identity as witness.  A non-affine map
    only shows that the identity conjugation is not a witness, so that case
    stays Inconclusive.
    """
    affine = [[bool(f.is_affine()) for f in ifs.maps] for ifs in systems]
    status = FAILS if all(all(a) for a in affine) else INCONCLUSIVE
    return {"status": status, "affine_maps": affine}


def _from_verdict(name: str, verdict) -> Condition:
    return Condition(name, _FROM_VERDICT[verdict.verdict], verdict.evidence, verdict.verdict)


def _irrational_scale_ratio(data, max_den, tol) -> Condition:
    ts = [g.t for g in data]
    rational = []
    for (i, a), (j, b) in itertools.combinations(enumerate(ts), 2):
        if a == 0 or b == 0:
            continue
        cert = rational_approximation(a / b, max_den, tol)
        if cert.irrational:
            return Condition("irrational-scale-ratio", HOLDS, {"pair": [i, j], "certificate": cert.to_dict()})
        rational.append({"pair": [i, j], "certificate": cert.to_dict()})
    return Condition("irrational-scale-ratio", FAILS, {"rational_pairs": rational})


def _matched_pairs(data):
    out = []
    for i, j in itertools.combinations(range(len(data)), 2):
        if np.linalg.norm(data[i].O - data[j].O) <= ROTATION_MATCH_TOL:
            out.append((i, j, data[i].t - data[j].t))
    return out


def _matched_rotation(data) -> Condition:
    for i, j, diff in _matched_pairs(data):
        if abs(diff) > 1e-12:
            return Condition("matched-rotation-distinct-scale", HOLDS, {"pair": [i, j], "log_scale_difference": diff})
    return Condition("matched-rotation-distinct-scale", FAILS, {"matched_pairs": [[i, j] for i, j, _ in _matched_pairs(data)]})


def _matched_difference_ratio(data, max_den, tol) -> Condition:
    diffs = [(i, j, t) for i, j, t in _matched_pairs(data) if abs(t) > 1e-12]
    rational = []
    for (i1, j1, a), (i2, j2, b) in itertools.combinations(diffs, 2):
        cert = rational_approximation(a / b, max_den, tol)
        if cert.irrational:
            return Condition("irrational-matched-difference-ratio", HOLDS,
                             {"pairs": [[i1, j1], [i2, j2]], "certificate": cert.to_dict()})
        rational.append({"pairs": [[i1, j1], [i2, j2]], "certificate": cert.to_dict()})
    return Condition("irrational-matched-difference-ratio", FAILS,
                     {"matched_differences": [[i, j, t] for i, j, t in diffs], "rational_pairs": rational})


def _rotation_products(a, b) -> list[np.ndarray]:
    """``O(Phi) O(Psi)^{-1}`` with ``O(.)`` closed under inverses."""
    left = [g.O for g in a] + [g.O.T for g in a]
    right = [g.O for g in b] + [g.O.T for g in b]
    return [A @ B.T for A in left for B in right]


def check_theorem_conditions(phi: IFS, psi: IFS | None = None, which: str = "T3", word_len: int = 6,
                             max_denominator: int = DEFAULT_MAX_DENOMINATOR, tol: float = DEFAULT_TOL,
                             seed: int | None = None) -> ConditionsReport:
    """Evaluate the hypotheses of theorem ``which`` for ``phi`` (and ``psi``)."""
    if which not in THEOREMS:
        raise ValueError(f"unknown theorem id {which!r}; expected one of {THEOREMS}")
    two = which in ("T6", "T7")
    if two and psi is None:
        raise ValueError(f"{which} needs two systems")
    d = phi.d
    if psi is not None and psi.d != d:
        raise ValueError("systems live in different dimensions")
    if which in ("C4", "T6") and d < 3:
        raise ValueError(f"{which} needs d >= 3")
    if which in ("C5", "T7") and d != 2:
        raise ValueError(f"{which} needs d == 2")

    a = fixed_point_data(phi)
    b = fixed_point_data(psi) if two else []
    union = a + b
    notes: list[str] = []
    conds: list[Condition] = []

    if which == "T3":
        conds.append(_from_verdict("dense-in-CO", check_generates_CO(
            a, word_len, max_denominator, tol, seed=seed)))
    elif which in ("C4", "C5"):
        conds.append(_from_verdict("dense-in-SO", check_generates_SO(
            [g.O for g in a], word_len, max_denominator, tol)))
    else:
        conds.append(_from_verdict("dense-rotation-products", check_generates_SO(
            _rotation_products(a, b), word_len, max_denominator, tol, budget=5000)))
        notes.append("condition 1 asks the rotation products to generate CO(d) although they lie in "
                     "SO(d); density in SO(d) was tested")

    if which in ("C4", "T6"):
        conds.append(_irrational_scale_ratio(union, max_denominator, tol))
        conds.append(_matched_rotation(union))
    elif which in ("C5", "T7"):
        conds.append(_matched_difference_ratio(union, max_denominator, tol))

    systems = (phi, psi) if two else (phi,)
    return ConditionsReport(which, d, conds, notes, nonlinearity_proxy(*systems))


def check_log_ratio(phi: IFS, psi: IFS | None = None, max_denominator: int = DEFAULT_MAX_DENOMINATOR,
                    tol: float = DEFAULT_TOL) -> Condition:
    """Some ``log lambda(f) / log lambda(g)`` over both systems is irrational (any d)."""
    data = [f.lambda_O() for f in phi.maps]
    if psi is not None:
        data += [f.lambda_O() for f in psi.maps]
    return _irrational_scale_ratio(data, max_denominator, tol)
