"""Reductive-group layer for GL(m) and SL(m).

The Lie algebra is realised inside ``gl(m)`` with a Hilbert-Schmidt
orthonormal basis, so coordinates are plain inner products.  The
invariant pairing is ``kappa(X, Y) = -tr(XY)``; with the Cartan
involution ``iota(X) = -X^dag`` this makes ``kappa(psi, iota(psi)) =
tr(psi psi^dag)`` nonnegative.

Endomorphism-bundle quantities use row-major ``vec`` of m x m matrices,
so the elementary matrices ``E_ij`` map to the standard basis of C^{m^2}.
"""

from dataclasses import dataclass
from math import sqrt

import numpy as np

from . import _linalg as la
from .bundle import BackgroundBundle, HiggsField, MetricField
from .errors import ConditioningError, ContractViolation, DimensionError, ValidationError
from .gauge import _higgs_array, _metric_array, deviation_norm_sup, hs_curvature

MEMBERSHIP_TOL = 1e-10
GS_TOL = 1e-12
KINDS = ("GL", "SL")


@dataclass(frozen=True, eq=False)
class ReductiveGroupData:
    """Structure data of GL(m) or SL(m) in a Hilbert-Schmidt orthonormal basis.

    Attributes
    ----------
    kind : str
        ``"GL"`` or ``"SL"``.
    m : int
        Size of the defining representation.
    basis : ndarray, shape (dim, m, m)
        Orthonormal basis of the Lie algebra.
    pairing : ndarray, shape (dim, dim)
        ``kappa(b_i, b_j)``.
    ad_matrices : ndarray, shape (dim, dim, dim)
        ``ad(b_i)`` written in the basis.
    ad_image_orthobasis : ndarray, shape (k, dim, dim)
        Orthonormal basis of ``span{ad(X)}``.
    center_basis : ndarray, shape (z, m, m)
        Basis of the center; empty for SL.
    """

    kind: str
    m: int
    basis: np.ndarray
    pairing: np.ndarray
    ad_matrices: np.ndarray
    ad_image_orthobasis: np.ndarray
    center_basis: np.ndarray

    @property
    def algebra_dim(self):
        return self.basis.shape[0]

    @property
    def label(self):
        return f"{self.kind}({self.m})"

    @property
    def vec_basis(self):
        """Columns are row-major vec of the basis matrices, shape (m*m, dim)."""
        return self.basis.reshape(self.algebra_dim, -1).T

    def coordinates(self, x):
        """Basis coefficients of ``x`` and the residual of the expansion."""
        x = np.asarray(x, dtype=complex)
        if x.shape[-2:] != (self.m, self.m):
            raise DimensionError(f"{self.label} elements are {self.m}x{self.m}, got {x.shape[-2:]}")
        coef = np.einsum("kab,...ab->...k", self.basis.conj(), x)
        resid = x - np.einsum("...k,kab->...ab", coef, self.basis)
        return coef, float(np.max(np.abs(resid), initial=0.0))

    def check_member(self, x, what="element"):
        _, resid = self.coordinates(x)
        if resid > MEMBERSHIP_TOL * max(1.0, float(np.max(np.abs(x), initial=0.0))):
            raise ValidationError(f"{what} is not in {self.label} (residual {resid:.2e})")

    def kappa(self, x, y):
        """Invariant pairing ``-tr(XY)``, site-wise for fields."""
        return -la.trace(np.asarray(x) @ np.asarray(y))

    def ad(self, x):
        """Matrix of ``ad(x)`` in the basis."""
        coef, _ = self.coordinates(x)
        return np.einsum("...i,ijk->...jk", coef, self.ad_matrices)


def _sl_basis(m):
    mats = []
    for i in range(m):
        for j in range(m):
            if i != j:
                e = np.zeros((m, m), dtype=complex)
                e[i, j] = 1.0
                mats.append(e)
    for k in range(1, m):
        d = np.zeros(m)
        d[:k] = 1.0
        d[k] = -k
        mats.append(np.diag(d / sqrt(k * (k + 1))).astype(complex))
    return np.array(mats).reshape(-1, m, m)


def _gl_basis(m):
    return np.eye(m * m, dtype=complex).reshape(m * m, m, m)


def gram_schmidt(vectors, tol=GS_TOL):
    """Orthonormal basis of the span of ``vectors`` (rows), two-pass.

    Vectors whose remainder falls below ``tol`` times their original norm
    are treated as dependent and dropped.
    """
    out = []
    for v in np.asarray(vectors, dtype=complex):
        norm0 = np.linalg.norm(v)
        if norm0 == 0:
            continue
        w = v.copy()
        for _ in range(2):
            for q in out:
                w = w - np.vdot(q, w) * q
        nw = np.linalg.norm(w)
        if nw > tol * norm0:
            out.append(w / nw)
    return np.array(out)


def make_group(kind, m):
    """Build :class:`ReductiveGroupData` for ``GL(m)`` or ``SL(m)``."""
    kind = str(kind).upper()
    if kind not in KINDS:
        raise ValidationError(f"group kind must be one of {KINDS}, got {kind!r}")
    if isinstance(m, bool) or not isinstance(m, (int, np.integer)) or m < 1:
        raise ValidationError(f"m must be a positive integer, got {m!r}")
    if kind == "SL" and m < 2:
        raise ValidationError("SL(m) needs m >= 2")
    m = int(m)
    basis = _gl_basis(m) if kind == "GL" else _sl_basis(m)
    dim = basis.shape[0]
    pairing = -np.einsum("iab,jba->ij", basis, basis)
    comm = (np.einsum("iab,jbc->ijac", basis, basis)
            - np.einsum("jab,ibc->ijac", basis, basis))
    # ad(b_i)[k, j] = <b_k, [b_i, b_j]>
    ad = np.einsum("kac,ijac->ikj", basis.conj(), comm)
    q = gram_schmidt(ad.reshape(dim, -1))
    ortho = q.reshape(-1, dim, dim) if len(q) else np.zeros((0, dim, dim), dtype=complex)
    center = (np.eye(m, dtype=complex)[None] / sqrt(m)) if kind == "GL" else np.zeros((0, m, m), dtype=complex)
    for a in (basis, pairing, ad, ortho, center):
        a.setflags(write=False)
    return ReductiveGroupData(kind=kind, m=m, basis=basis, pairing=pairing, ad_matrices=ad,
                              ad_image_orthobasis=ortho, center_basis=center)


def parse_group(label):
    """``"SL(2)"`` -> make_group("SL", 2)."""
    text = str(label).replace(" ", "").upper()
    if len(text) < 5 or text[2] != "(" or not text.endswith(")") or not text[3:-1].isdigit():
        raise ValidationError(f"group must look like 'GL(m)' or 'SL(m)', got {label!r}")
    return make_group(text[:2], int(text[3:-1]))


def cartan_involution(group, x):
    """``iota(X) = -X^dag``, after checking that X lies in the algebra."""
    x = np.asarray(x, dtype=complex)
    group.check_member(x)
    return -la.dag(x)


@dataclass(frozen=True, eq=False)
class AlgebraForm:
    """Algebra-valued one-form ``coefficient * dz`` or ``coefficient * dzbar``."""

    coefficient: np.ndarray
    form_type: str = "dz"

    def __post_init__(self):
        if self.form_type not in ("dz", "dzbar"):
            raise ValidationError(f"form_type must be 'dz' or 'dzbar', got {self.form_type!r}")


def iota_on_forms(group, form):
    """Extend iota to forms: ``s (x) eta -> -iota(s) (x) conj(eta)``.

    ``-iota(s) conj(eta) = (s eta)^dag``, so the coefficient is the site-wise
    conjugate transpose and dz is exchanged with dzbar.
    """
    coef = np.asarray(form.coefficient, dtype=complex)
    flipped = "dzbar" if form.form_type == "dz" else "dz"
    return AlgebraForm(coefficient=-cartan_involution(group, coef), form_type=flipped)


def section_norm(group, psi):
    """``max_s sqrt(kappa(psi, iota(psi)))`` over the lattice."""
    psi = np.asarray(psi, dtype=complex)
    val = group.kappa(psi, cartan_involution(group, psi))
    if np.max(np.abs(val.imag), initial=0.0) > 1e-12 * max(1.0, float(np.max(np.abs(val), initial=0.0))):
        raise ContractViolation("kappa(psi, iota psi) is not real")
    val = val.real
    lo = float(np.min(val, initial=0.0))
    if lo < -1e-12:
        raise ContractViolation(f"kappa(psi, iota psi) = {lo:.3e} < 0")
    return float(np.sqrt(np.max(np.maximum(val, 0.0), initial=0.0)))


def killing_norm(group, psi):
    """Sup norm of the semisimple part with the Killing form ``2m tr``."""
    psi = np.asarray(psi, dtype=complex)
    tr = la.trace(psi)[..., None, None] / group.m
    traceless = psi - tr * np.eye(group.m)
    return sqrt(2 * group.m) * float(np.sqrt(np.max(la.trace(traceless @ la.dag(traceless)).real,
                                                    initial=0.0)))


def ad_perp_projection(group, mat):
    """``r(M) = M - Pi_ad(M)``, the Hilbert-Schmidt complement of span{ad X}."""
    mat = np.asarray(mat, dtype=complex)
    dim = group.algebra_dim
    if mat.shape[-2:] != (dim, dim):
        raise ValidationError(f"expected trailing shape ({dim}, {dim}), got {mat.shape[-2:]}")
    q = group.ad_image_orthobasis
    coef = np.einsum("kab,...ab->...k", q.conj(), mat)
    return mat - np.einsum("...k,kab->...ab", coef, q)


def induced_endo_metric(h):
    """Metric ``<A, B> = tr(h A h^{-1} B^dag)`` on End(E) in the elementary basis."""
    harr = _metric_array(h)
    try:
        big = la.kron_conj(harr)
        return MetricField.from_array(big, eig_floor=0.0)
    except (np.linalg.LinAlgError, ConditioningError) as exc:
        w = np.linalg.eigvalsh(la.herm(harr))
        lo = np.min(w[..., 0])
        cond = float(np.max(w[..., -1]) / lo) if lo > 0 else float("inf")
        raise ConditioningError(
            f"induced End(E) metric is not numerically positive (cond(h)**2 = {cond ** 2:.1e})") from exc


def adjoint_bundle(bundle, phi=None):
    """End(E) with links ``Ad(U)`` and Higgs field ``ad(phi)``."""
    m = bundle.rank
    flux = tuple(int(di - dj) for di in bundle.flux for dj in bundle.flux)
    links_x = la.kron_conj(bundle.links_x)
    links_y = la.kron_conj(bundle.links_y)
    phases = la.herm(la.kron_ad(bundle.phases))
    big = BackgroundBundle(surface=bundle.surface, rank=m * m, flux=flux,
                           links_x=links_x, links_y=links_y, phases=phases)
    if phi is None:
        return big, None
    return big, HiggsField(phi=la.kron_ad(_higgs_array(phi, bundle)))


def endo_mean_curvature(bundle, h, phi=None):
    """Mean curvature of End(E) under the induced metric (m^2 x m^2 per site)."""
    big, bphi = adjoint_bundle(bundle, phi)
    return hs_curvature(big, induced_endo_metric(h).h, bphi).contracted


def commutator_identity_error(bundle, h, phi=None):
    """Relative gap between the End(E) curvature and ``A -> [K_h, A]``.

    Both operators are applied to every elementary matrix, i.e. compared
    column by column in the elementary basis.
    """
    k_end = endo_mean_curvature(bundle, h, phi)
    k = hs_curvature(bundle, _metric_array(h, bundle.rank), phi).contracted
    ref = la.kron_ad(k)
    scale = max(float(np.max(np.abs(ref))), 1.0)
    return float(np.max(np.abs(k_end - ref))) / scale


def _restrict(group, op):
    """Write an operator on C^{m^2} = gl(m) in the group's algebra basis."""
    if group.kind == "GL":
        return op
    b = group.vec_basis
    return la.dag(b) @ op @ b


def reduction_residual(bundle, h, phi=None, group=None):
    """Sup over sites of ``|r(K_End)|_HS``: how far End(E) curvature is from ad(g)."""
    group = group or make_group("GL", bundle.rank)
    if group.m != bundle.rank:
        raise DimensionError(f"group {group.label} does not act on rank {bundle.rank}")
    k_end = _restrict(group, endo_mean_curvature(bundle, h, phi))
    resid = ad_perp_projection(group, k_end)
    return float(np.sqrt(np.max(la.trace(resid @ la.dag(resid)).real)))


def adjoint_deviation(bundle, h, phi=None):
    """Sup deviation of End(E), whose Einstein constant is 0."""
    big_h = induced_endo_metric(h).h
    big, bphi = adjoint_bundle(bundle, phi)
    return deviation_norm_sup(hs_curvature(big, big_h, bphi).contracted, 0.0, big_h)


def principal_field(bundle, h, phi=None):
    """Mean curvature in an h-orthonormal frame, an algebra-valued field."""
    harr = _metric_array(h, bundle.rank)
    k = hs_curvature(bundle, harr, phi).contracted
    hs, his = la.sqrt_pair(harr)
    return la.herm(hs @ k @ his)


@dataclass(frozen=True)
class Certificate:
    ok: bool
    margin: float
    norm: float
    killing_norm: float


def principal_ahym_certificate(group, k_field, tau, xi):
    """Check ``|K - tau| < xi`` with tau in the center of the algebra."""
    tau = np.asarray(tau, dtype=complex)
    if tau.shape != (group.m, group.m):
        raise DimensionError(f"tau must be {group.m}x{group.m}")
    z = group.center_basis
    proj = np.einsum("k,kab->ab", np.einsum("kab,ab->k", z.conj(), tau), z)
    if np.max(np.abs(tau - proj)) > MEMBERSHIP_TOL:
        raise ValidationError(f"tau is not central in {group.label}")
    if not xi > 0:
        raise ValidationError("xi must be positive")
    diff = np.asarray(k_field, dtype=complex) - tau
    norm = section_norm(group, diff)
    return Certificate(ok=bool(norm < xi), margin=float(xi - norm), norm=norm,
                       killing_norm=killing_norm(group, diff))
