"""Bundle data: flux backgrounds, Higgs fields, Hermitian metrics, catalog."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _linalg as la
from .errors import ConditioningError, ContractViolation, DimensionError, ValidationError
from .surface import LatticeSurface

HERMITICITY_TOL = 1e-12
DEFAULT_EIG_FLOOR = 1e-10
DEFAULT_HOL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class BackgroundBundle:
    """Split holomorphic background realized by U(1) flux per block.

    ``links_x[ix, iy]`` maps the fibre at ``s`` to the fibre at ``s + e_x``;
    ``phases`` holds the Hermitian plaquette phase matrix attached to the
    plaquette whose lower-left corner is ``s``.
    """

    surface: LatticeSurface
    rank: int
    flux: tuple
    links_x: np.ndarray
    links_y: np.ndarray
    phases: np.ndarray

    def links(self, axis):
        return self.links_x if axis == 0 else self.links_y


@dataclass(frozen=True, eq=False)
class HiggsField:
    phi: np.ndarray
    holomorphy_residual: float = 0.0


@dataclass(frozen=True, eq=False)
class MetricField:
    h: np.ndarray
    min_eigenvalue: float

    @classmethod
    def from_array(cls, h, eig_floor=DEFAULT_EIG_FLOOR):
        """Symmetrize ``h`` and check positivity above ``eig_floor``."""
        h = la.herm(np.asarray(h, dtype=complex))
        w = np.linalg.eigvalsh(h)
        lo = float(np.min(w))
        if lo < eig_floor:
            raise ConditioningError(f"metric eigenvalue {lo:.3e} below floor {eig_floor:.1e}")
        h.setflags(write=False)
        return cls(h=h, min_eigenvalue=lo)

    @property
    def rank(self):
        return self.h.shape[-1]

    def check(self):
        defect = np.max(np.abs(self.h - la.dag(self.h)))
        if defect > HERMITICITY_TOL:
            raise ContractViolation(f"metric not Hermitian: defect {defect:.2e}")


@dataclass(frozen=True)
class ExampleSpec:
    name: str
    rank: int
    flux: tuple
    higgs: tuple
    expected_verdict: str
    expected_destabilizer: Optional[tuple] = None
    notes: str = field(default="", compare=False)

    def __post_init__(self):
        m = np.asarray(self.higgs, dtype=complex)
        if m.shape != (self.rank, self.rank):
            raise ValidationError(f"{self.name}: Higgs matrix {m.shape} does not match rank {self.rank}")
        if len(self.flux) != self.rank or any(int(d) != d for d in self.flux):
            raise ValidationError(f"{self.name}: flux must be {self.rank} integers")
        if self.expected_verdict not in VERDICTS:
            raise ValidationError(f"{self.name}: unknown verdict {self.expected_verdict!r}")

    @property
    def higgs_matrix(self):
        return np.asarray(self.higgs, dtype=complex)

    def to_dict(self):
        m = self.higgs_matrix
        return {
            "name": self.name,
            "rank": self.rank,
            "flux": [int(d) for d in self.flux],
            "higgs_real": m.real.tolist(),
            "higgs_imag": m.imag.tolist(),
            "expected_verdict": self.expected_verdict,
            "expected_destabilizer": None if self.expected_destabilizer is None
            else [int(i) for i in self.expected_destabilizer],
        }

    @classmethod
    def from_dict(cls, d):
        re = np.asarray(d["higgs_real"], dtype=float)
        im = np.asarray(d.get("higgs_imag", np.zeros_like(re)), dtype=float)
        higgs = _as_tuple(re + 1j * im)
        dest = d.get("expected_destabilizer")
        return cls(name=d["name"], rank=int(d["rank"]), flux=tuple(int(x) for x in d["flux"]),
                   higgs=higgs, expected_verdict=d["expected_verdict"],
                   expected_destabilizer=None if dest is None else tuple(int(i) for i in dest))


VERDICTS = ("stable", "strictly_semistable", "polystable", "unstable")


def _as_tuple(m):
    return tuple(tuple(complex(x) for x in row) for row in np.asarray(m))


def build_background(surface, rank, flux):
    """Constant-curvature flux links, one U(1) block per diagonal entry.

    Each block carries plaquette phase ``2*pi*d_i/N**2`` everywhere; the
    boundary links close the twist so the phases sum to ``2*pi*d_i``.
    """
    if isinstance(rank, bool) or not isinstance(rank, (int, np.integer)) or rank <= 0:
        raise ValidationError(f"rank must be a positive integer, got {rank!r}")
    flux = tuple(flux)
    if len(flux) != rank:
        raise ValidationError(f"flux has {len(flux)} entries for rank {rank}")
    for d in flux:
        if isinstance(d, bool) or not float(d).is_integer():
            raise ValidationError(f"flux entries must be integers, got {d!r}")
    flux = tuple(int(d) for d in flux)
    n = surface.sites_per_side
    if any(2 * abs(d) >= n * n for d in flux):
        raise ValidationError("flux too large for the lattice (need N**2 > 2|d|)")

    ix, iy = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    d = np.asarray(flux, dtype=float)
    # y-links wind along x; the last column of x-links closes the twist
    ang_y = 2 * np.pi * ix[..., None] * d / n ** 2
    ang_x = np.where((ix == n - 1)[..., None], -2 * np.pi * iy[..., None] * d / n, 0.0)
    links_x = _diag(np.exp(1j * ang_x))
    links_y = _diag(np.exp(1j * ang_y))
    theta = np.broadcast_to(2 * np.pi * d / n ** 2, (n, n, rank))
    phases = _diag(theta.astype(complex))
    for a in (links_x, links_y, phases):
        a.setflags(write=False)
    return BackgroundBundle(surface=surface, rank=rank, flux=flux,
                            links_x=links_x, links_y=links_y, phases=phases)


def _diag(v):
    out = np.zeros(v.shape + (v.shape[-1],), dtype=complex)
    idx = np.arange(v.shape[-1])
    out[..., idx, idx] = v
    return out


def plaquette_holonomy(bundle):
    """Transport once around each plaquette, counter-clockwise from s."""
    s = bundle.surface
    ux, uy = bundle.links_x, bundle.links_y
    return la.dag(uy) @ la.dag(s.shift(ux, 1)) @ s.shift(uy, 0) @ ux


def plaquette_phases(bundle):
    """Hermitian principal log ``-i log P`` of every plaquette holonomy."""
    p = plaquette_holonomy(bundle)
    w, v = np.linalg.eig(p)
    ang = np.angle(w)
    return la.herm((v * ang[..., None, :]) @ np.linalg.inv(v))


def constant_higgs(bundle, m):
    """Site field equal to ``m`` everywhere (the dz-coefficient of phi)."""
    m = np.asarray(m, dtype=complex)
    if m.shape != (bundle.rank, bundle.rank):
        raise DimensionError(f"Higgs matrix {m.shape} does not match rank {bundle.rank}")
    phi = np.broadcast_to(m, bundle.surface.shape + m.shape).copy()
    return HiggsField(phi=phi, holomorphy_residual=verify_higgs(bundle, phi)["holomorphy_residual"])


def _covariant_backward(bundle, field, axis):
    """(field(s) - U(s-mu) field(s-mu) U(s-mu)^dag) / a for an End-valued field."""
    s = bundle.surface
    u_prev = s.shift(bundle.links(axis), axis, -1)
    f_prev = s.shift(field, axis, -1)
    return (field - u_prev @ f_prev @ la.dag(u_prev)) / s.spacing


def dbar(bundle, field):
    """Covariant d-bar coefficient ``(D_x + i D_y)/2`` with backward differences."""
    return 0.5 * (_covariant_backward(bundle, field, 0) + 1j * _covariant_backward(bundle, field, 1))


def verify_higgs(bundle, phi):
    """Holomorphy residual and integrability of a Higgs site field."""
    phi = phi.phi if isinstance(phi, HiggsField) else np.asarray(phi, dtype=complex)
    bundle.surface.check_field(phi, trailing=2)
    if phi.shape[-2:] != (bundle.rank, bundle.rank):
        raise DimensionError(f"phi has fibre shape {phi.shape[-2:]}, rank is {bundle.rank}")
    res = float(np.max(np.abs(dbar(bundle, phi))))
    # phi ^ phi lands in (2,0)-forms, zero on a curve; the coefficient is [phi, phi]
    comm = phi @ phi - phi @ phi
    return {"holomorphy_residual": res, "integrability_ok": bool(np.all(comm == 0))}


def identity_metric(surface, rank):
    h = np.broadcast_to(np.eye(rank, dtype=complex), surface.shape + (rank, rank))
    return MetricField.from_array(h)


def constant_metric(surface, m):
    m = np.asarray(m, dtype=complex)
    return MetricField.from_array(np.broadcast_to(m, surface.shape + m.shape))


def random_metric(surface, rank, rng, amplitude=0.3, modes=1, diagonal=False):
    """Smooth random metric ``exp(S)`` with S a low-mode Hermitian field.

    Only Fourier modes with |k| <= ``modes`` are populated, so finite
    difference checks see a smooth field rather than lattice-scale noise.
    """
    x, y = surface.coordinates()
    two_pi_l = 2 * np.pi / surface.side_length
    s = np.zeros(surface.shape + (rank, rank), dtype=complex)
    for kx in range(-modes, modes + 1):
        for ky in range(-modes, modes + 1):
            c = rng.normal(size=(rank, rank)) + 1j * rng.normal(size=(rank, rank))
            if diagonal:
                c = np.diag(np.diag(c))
            wave = np.exp(1j * two_pi_l * (kx * x + ky * y))
            s += wave[..., None, None] * c
    s = la.herm(s)
    s *= amplitude / max(np.max(np.abs(s)), 1e-300)
    return MetricField.from_array(la.expm_herm(s))


def catalog(line_degree=0):
    """Exactly analyzable examples with their stability verdicts."""
    d = int(line_degree)
    return [
        ExampleSpec(f"flat-line-{d}", 1, (d,), ((0j,),), "polystable",
                    notes="line bundles are stable"),
        ExampleSpec("nilpotent", 2, (0, 0), ((0j, 1 + 0j), (0j, 0j)), "strictly_semistable",
                    expected_destabilizer=(0,),
                    notes="kernel line span(e1) is the only invariant line"),
        ExampleSpec("split-unstable", 2, (1, -1), ((0j, 0j), (0j, 0j)), "unstable",
                    expected_destabilizer=(0,),
                    notes="block 1 has slope 1 > 0"),
        ExampleSpec("diag-polystable", 2, (0, 0), ((1 + 0j, 0j), (0j, -1 + 0j)), "polystable",
                    notes="sum of two invariant degree-0 lines"),
    ]


def get_example(name):
    if name.startswith("flat-line-"):
        try:
            d = int(name[len("flat-line-"):])
        except ValueError:
            raise ValidationError(f"bad line degree in {name!r}") from None
        return catalog(d)[0]
    for ex in catalog():
        if ex.name == name:
            return ex
    raise ValidationError(f"unknown catalog example {name!r}")


def realize(example, surface):
    """Background bundle and Higgs field for an ExampleSpec on ``surface``."""
    bundle = build_background(surface, example.rank, example.flux)
    return bundle, constant_higgs(bundle, example.higgs_matrix)
