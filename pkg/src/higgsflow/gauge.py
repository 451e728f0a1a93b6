"""Chern connection, Hitchin-Simpson curvature, degree and deviation norms.

The mean curvature of a metric ``h`` splits into three h-self-adjoint
pieces, each the exact gradient (under the pairing
``sum_s a**2 tr(eta K)`` with ``eta = h^{-1} dh``) of a lattice potential:

* flux:  ``sum_s tr(Theta(s) log h(s))`` with Theta the background
  plaquette phase matrix,
* metric: ``1/4 sum_{s,mu} tr(log R_mu(s))**2`` with
  ``R_mu(s) = h(s)^{-1} U_mu(s)^dag h(s+mu) U_mu(s)``,
* Higgs: ``2 a**2 sum_s tr(h^{-1} M^dag h M)``.

Because every piece is a gradient, the heat flow is a true gradient flow
on the lattice and the functional built from it is path independent.
The metric and Higgs pieces commute with the adjoint construction, which
is what the reduction checks in :mod:`higgsflow.lie` rely on.
"""

from dataclasses import dataclass
from math import factorial, pi

import numpy as np

from . import _linalg as la
from .bundle import BackgroundBundle, HiggsField, MetricField, dbar
from .errors import ConditioningError, ContractViolation, DimensionError
from .surface import integrate, lambda_contract

SELF_ADJOINT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ConnectionField:
    """Chern connection of h relative to the background links.

    ``x`` and ``y`` are the covariant logarithmic derivatives
    ``h^{-1} d_mu h`` along the two lattice directions; ``dz`` is the
    (1,0) coefficient ``(x - i y) / 2``.
    """

    x: np.ndarray
    y: np.ndarray

    @property
    def dz(self):
        return 0.5 * (self.x - 1j * self.y)


@dataclass(frozen=True, eq=False)
class CurvatureField:
    plaquette: np.ndarray
    higgs_commutator: np.ndarray
    contracted: np.ndarray
    mixed_residual: float = 0.0


def _metric_array(h, rank=None):
    arr = h.h if isinstance(h, MetricField) else np.asarray(h, dtype=complex)
    if rank is not None and arr.shape[-2:] != (rank, rank):
        raise DimensionError(f"metric fibre shape {arr.shape[-2:]} does not match rank {rank}")
    return arr


def _higgs_array(phi, bundle):
    if phi is None:
        return None
    arr = phi.phi if isinstance(phi, HiggsField) else np.asarray(phi, dtype=complex)
    if arr.shape[-2:] != (bundle.rank, bundle.rank):
        raise DimensionError(f"Higgs fibre shape {arr.shape[-2:]} does not match rank {bundle.rank}")
    return arr


def _spectral(h, floor=0.0):
    w, v = la.eigh_pd(h, floor)
    rt = np.sqrt(w)
    return w, v, (la.from_eig(rt, v), la.from_eig(1.0 / rt, v))


def _log_ratios(bundle, h, floor=0.0, roots=None):
    s = bundle.surface
    if roots is None:
        roots = _spectral(h, floor)[2]
    out = []
    for axis in (0, 1):
        u = bundle.links(axis)
        x = la.dag(u) @ s.shift(h, axis) @ u
        out.append(la.log_ratio(h, x, roots=roots))
    return out


def chern_connection(bundle, h, eig_floor=0.0):
    h = _metric_array(h, bundle.rank)
    bundle.surface.check_field(h, trailing=2)
    lx, ly = _log_ratios(bundle, h, eig_floor)
    a = bundle.surface.spacing
    return ConnectionField(x=lx / a, y=ly / a)


def higgs_adjoint(phi, h):
    """Metric adjoint ``h^{-1} phi^dag h`` (the dz-bar coefficient)."""
    phi = phi.phi if isinstance(phi, HiggsField) else np.asarray(phi, dtype=complex)
    h = _metric_array(h)
    try:
        return np.linalg.solve(h, la.dag(phi) @ h)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("singular metric in higgs_adjoint") from exc


def _divided_log(w):
    """Matrix of (log w_i - log w_j) / (w_i - w_j), with 1/w on the diagonal."""
    wi = w[..., :, None]
    wj = w[..., None, :]
    t = (wi - wj) / wj
    small = np.abs(t) < 1e-6
    safe = np.where(small, 1.0, t)
    exact = np.log1p(safe) / (safe * wj)
    series = (1.0 - t / 2 + t * t / 3) / wj
    return np.where(small, series, exact)


def flux_term(bundle, h, spectral=None):
    """h-self-adjoint gradient of ``sum_s tr(Theta log h)`` divided by a**2."""
    w, v = la.eigh_pd(h, floor=0.0) if spectral is None else spectral[:2]
    if not np.any(bundle.phases):
        return np.zeros_like(h)
    b = lambda_contract(bundle.surface, bundle.phases)
    bt = la.dag(v) @ b @ v
    mt = bt * _divided_log(w) * w[..., None, :]
    return v @ mt @ la.dag(v)


def metric_term(bundle, h, logs=None):
    """Gradient of the link energy ``1/4 sum tr(log R)**2`` divided by a**2."""
    s = bundle.surface
    if logs is None:
        logs = _log_ratios(bundle, h)
    acc = np.zeros_like(h)
    for axis, lg in zip((0, 1), logs):
        u_prev = s.shift(bundle.links(axis), axis, -1)
        acc += u_prev @ s.shift(lg, axis, -1) @ la.dag(u_prev) - lg
    return acc / (2 * s.cell_area)


def hs_curvature(bundle, h, phi=None, check=True, diagnostics=True, spectral=None):
    """Hitchin-Simpson curvature of ``(bundle, phi)`` under the metric ``h``.

    ``plaquette`` is the (1,1) phase matrix of the Chern connection per
    plaquette (background flux plus metric contribution), so that
    ``lambda_contract`` of it is the connection part of the mean curvature.
    ``higgs_commutator`` is ``[M, M_bar]``; its two-form ``[phi, phi_bar]``
    contracts to ``2 [M, M_bar]``.  ``mixed_residual`` reports the sup
    norm of the covariant d-bar of phi, which vanishes for holomorphic
    Higgs fields and so never enters the contraction.
    """
    harr = _metric_array(h, bundle.rank)
    bundle.surface.check_field(harr, trailing=2)
    a2 = bundle.surface.cell_area
    if spectral is None:
        spectral = _spectral(harr)
    logs = _log_ratios(bundle, harr, roots=spectral[2])
    k_conn = flux_term(bundle, harr, spectral) + metric_term(bundle, harr, logs)
    phiarr = _higgs_array(phi, bundle)
    mixed = 0.0
    if phiarr is None:
        comm = np.zeros_like(harr)
    else:
        w, v = spectral[:2]
        hinv = la.from_eig(1.0 / w, v)
        pbar = hinv @ la.dag(phiarr) @ harr
        comm = phiarr @ pbar - pbar @ phiarr
        if diagnostics:
            mixed = float(np.max(np.abs(dbar(bundle, phiarr))))
    contracted = k_conn + 2.0 * comm
    if check:
        defect = float(np.max(la.hsa_defect(harr, contracted)))
        if defect > SELF_ADJOINT_TOL:
            raise ContractViolation(f"mean curvature not h-self-adjoint: defect {defect:.2e}")
    return CurvatureField(plaquette=a2 * k_conn, higgs_commutator=comm,
                          contracted=contracted, mixed_residual=mixed)


def mean_curvature(bundle, h, phi=None):
    return hs_curvature(bundle, h, phi).contracted


def degree(bundle, h):
    """First Chern number from the plaquette phase matrices of h."""
    plaq = hs_curvature(bundle, h, None, check=False).plaquette
    return float(np.sum(np.sum(la.trace(plaq).real, axis=0), axis=0) / (2 * pi))


def slope(bundle, h):
    return degree(bundle, h) / bundle.rank


def background_degree(bundle):
    """Degree read off the link holonomies alone (metric independent)."""
    return float(np.sum(la.trace(bundle.phases).real) / (2 * pi))


def hym_constant(slope_value, vol, n=1):
    """Einstein constant ``c = 2 n pi mu / (n! vol)``."""
    if vol <= 0 or n < 1:
        raise ValueError("need vol > 0 and n >= 1")
    return 2 * n * pi * slope_value / (factorial(n) * vol)


def _deviation_density(k, c, h):
    k = np.asarray(k)
    harr = _metric_array(h)
    defect = float(np.max(la.hsa_defect(harr, k)))
    if defect > SELF_ADJOINT_TOL:
        raise ContractViolation(f"deviation of a non-self-adjoint field (defect {defect:.2e})")
    # evaluate tr(psi**2) in an h-orthonormal frame
    hs, his = la.sqrt_pair(harr)
    psi = la.herm(hs @ (k - c * np.eye(k.shape[-1])) @ his)
    return np.maximum(la.trace(psi @ psi).real, 0.0)


def deviation_norm_sup(k, c, h):
    return float(np.sqrt(np.max(_deviation_density(k, c, h))))


def deviation_norm_l2(k, c, h, surface):
    return float(np.sqrt(integrate(surface, _deviation_density(k, c, h))))


def frame_change(bundle, phi, h, q):
    """Apply a constant unitary change of frame to all data.

    New frame vectors are ``q`` applied to old ones, so links, phases,
    Higgs field and metric all transform by ``X -> q^dag X q``.
    """
    q = np.asarray(q, dtype=complex)
    qd = la.dag(q)
    conj = lambda a: qd @ a @ q  # noqa: E731
    nb = BackgroundBundle(surface=bundle.surface, rank=bundle.rank, flux=bundle.flux,
                          links_x=conj(bundle.links_x), links_y=conj(bundle.links_y),
                          phases=la.herm(conj(bundle.phases)))
    nphi = None if phi is None else conj(_higgs_array(phi, bundle))
    nh = MetricField.from_array(conj(_metric_array(h, bundle.rank)))
    return nb, nphi, nh
