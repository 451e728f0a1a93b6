"""Algebraic stability of the example family, and reconciliation with flows.

The family is a direct sum of flux line bundles ``L_{d_1} + ... + L_{d_r}``
with a constant Higgs matrix ``M``.  A constant entry ``M_ij`` is a
holomorphic map ``L_j -> L_i`` only when ``d_i = d_j``, so M must be block
diagonal over the groups of equal flux.  Inside a group of common degree
``d`` every phi-invariant subbundle has slope ``d``; subbundles that are not
constant subspaces have strictly lower degree and cannot destabilize.
Slopes are exact fractions throughout.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Optional

import numpy as np
import sympy

from .bundle import VERDICTS, ExampleSpec
from .errors import UnsupportedExample, ValidationError
from .flow import classify

SEMISTABLE = ("stable", "strictly_semistable", "polystable")


@dataclass(frozen=True)
class SubbundleDescriptor:
    """A phi-invariant subbundle: a coordinate block or an eigenline.

    ``selector`` is a tuple of coordinate indices for ``coordinate_block``
    and the (complex) spanning vector for ``eigenline``.
    """

    kind: str
    selector: tuple
    degree: int
    rank: int

    @property
    def slope(self):
        return Fraction(self.degree, self.rank)

    def support(self):
        """Coordinate indices spanning the subbundle, or None if not coordinate."""
        if self.kind == "coordinate_block":
            return tuple(self.selector)
        nz = tuple(i for i, x in enumerate(self.selector) if x != 0)
        return nz if len(nz) == 1 else None

    def to_dict(self):
        if self.kind == "coordinate_block":
            sel = [int(i) for i in self.selector]
        else:
            sel = [[float(complex(x).real), float(complex(x).imag)] for x in self.selector]
        return {"kind": self.kind, "selector": sel, "degree": int(self.degree),
                "rank": int(self.rank), "slope": str(self.slope)}


@dataclass(frozen=True)
class Verdict:
    verdict_class: str
    slope_ambient: Fraction
    destabilizer: Optional[SubbundleDescriptor] = None
    slope_witness: Optional[Fraction] = None

    def __post_init__(self):
        if self.verdict_class not in VERDICTS:
            raise ValidationError(f"unknown verdict class {self.verdict_class!r}")
        if self.verdict_class == "unstable" and not (
                self.slope_witness is not None and self.slope_witness > self.slope_ambient):
            raise ValidationError("unstable verdict needs a witness of larger slope")
        if self.verdict_class == "strictly_semistable" and self.slope_witness != self.slope_ambient:
            raise ValidationError("strictly semistable verdict needs an equal-slope witness")

    @property
    def semistable(self):
        return self.verdict_class in SEMISTABLE

    def to_dict(self):
        return {
            "class": self.verdict_class,
            "slope_ambient": str(self.slope_ambient),
            "slope_witness": None if self.slope_witness is None else str(self.slope_witness),
            "destabilizer": None if self.destabilizer is None else self.destabilizer.to_dict(),
        }


def _exact(m):
    def conv(z):
        z = complex(z)
        return sympy.Rational(Fraction(z.real)) + sympy.I * sympy.Rational(Fraction(z.imag))
    return sympy.Matrix([[conv(z) for z in row] for row in np.asarray(m)])


def _groups(example):
    """Index groups of equal flux, in order of first appearance."""
    out = {}
    for i, d in enumerate(example.flux):
        out.setdefault(int(d), []).append(i)
    return [(d, tuple(idx)) for d, idx in out.items()]


def _check_family(example):
    if not isinstance(example, ExampleSpec):
        raise UnsupportedExample("stability analysis needs an ExampleSpec")
    m = example.higgs_matrix
    for i in range(example.rank):
        for j in range(example.rank):
            if m[i, j] != 0 and example.flux[i] != example.flux[j]:
                raise UnsupportedExample(
                    f"{example.name}: M[{i},{j}] couples blocks of different flux; not holomorphic")
    return _exact(m)


def _normalize(vec):
    """Scale so the first nonzero entry is 1."""
    for x in vec:
        if x != 0:
            return [sympy.nsimplify(sympy.simplify(y / x)) for y in vec]
    raise ValueError("zero vector")


def invariant_subbundles(example):
    """phi-invariant coordinate blocks and eigenlines, with exact degrees.

    Coordinate blocks are index sets S with ``M[i, j] = 0`` for ``i not in S,
    j in S``.  Lines inside a group of equal flux with more than one member
    are reported as eigenlines (a basis of each eigenspace), so a coordinate
    axis there appears once.
    """
    mx = _check_family(example)
    r = example.rank
    groups = _groups(example)
    in_big_group = {i for _, idx in groups if len(idx) > 1 for i in idx}
    out = []
    for size in range(1, r):
        for sel in combinations(range(r), size):
            if size == 1 and sel[0] in in_big_group:
                continue
            rest = [i for i in range(r) if i not in sel]
            if all(mx[i, j] == 0 for i in rest for j in sel):
                out.append(SubbundleDescriptor("coordinate_block", sel,
                                               sum(example.flux[i] for i in sel), size))
    for d, idx in groups:
        if len(idx) < 2:
            continue
        sub = mx.extract(list(idx), list(idx))
        for _, _, vecs in sub.eigenvects():
            for v in vecs:
                full = [sympy.Integer(0)] * r
                for k, i in enumerate(idx):
                    full[i] = v[k]
                vec = tuple(complex(sympy.N(x, 30)) for x in _normalize(full))
                out.append(SubbundleDescriptor("eigenline", vec, d, 1))
    return out


def _witness_key(desc):
    return (-desc.slope, desc.rank)


def verdict(example):
    """Stability class of an example from exact slope comparisons."""
    mx = _check_family(example)
    mu = Fraction(sum(example.flux), example.rank)
    if example.rank == 1:
        return Verdict("polystable", mu)
    cands = invariant_subbundles(example)
    if not cands:
        return Verdict("stable", mu)
    best = sorted(cands, key=_witness_key)[0]
    if best.slope > mu:
        return Verdict("unstable", mu, best, best.slope)
    if best.slope < mu:
        return Verdict("stable", mu, None, best.slope)
    # equal slope: polystable iff every group has flux mu and M splits into eigenlines there
    groups = _groups(example)
    split = all(Fraction(d) == mu for d, _ in groups) and all(
        mx.extract(list(idx), list(idx)).is_diagonalizable() for _, idx in groups)
    if split:
        return Verdict("polystable", mu, None, best.slope)
    return Verdict("strictly_semistable", mu, best, best.slope)


@dataclass
class ReconcileReport:
    example: str
    verdict: Verdict
    classification: str
    status: str
    evidence: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.status == "PASS"

    def to_dict(self):
        return {"example": self.example, "verdict": self.verdict.to_dict(),
                "classification": self.classification, "status": self.status,
                "evidence": self.evidence}


def reconcile(example, trace, config=None):
    """PASS when the algebraic verdict and the flow outcome agree.

    Semistable verdicts must pair with ``approx_hym_reached`` and unstable
    ones with ``diverging``.
    """
    if trace.label != example.name:
        raise ValidationError(f"trace {trace.label!r} does not belong to example {example.name!r}")
    v = verdict(example)
    cls = classify(trace, config)
    ok = (cls == "approx_hym_reached") if v.semistable else (cls == "diverging")
    dev = trace.column("dev_sup")
    lval = trace.column("L")
    evidence = {
        "algebraic": v.to_dict(),
        "flow": {"classification": cls, "status": trace.status, "steps": len(trace.rows) - 1,
                 "t_final": float(trace.rows[-1][0]), "dev_sup_initial": float(dev[0]),
                 "dev_sup_min": float(np.min(dev)), "dev_sup_final": float(dev[-1]),
                 "L_final": float(lval[-1]), "L_drop": float(lval[0] - np.min(lval))},
    }
    return ReconcileReport(example=example.name, verdict=v, classification=cls,
                           status="PASS" if ok else "FAIL", evidence=evidence)
