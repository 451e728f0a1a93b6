"""Batched matrix helpers acting on the trailing two axes."""

import numpy as np

from .errors import ConditioningError


def dag(a):
    return np.conj(np.swapaxes(a, -1, -2))


def herm(a):
    return 0.5 * (a + dag(a))


def trace(a):
    return np.trace(a, axis1=-2, axis2=-1)


def eye_like(a):
    return np.broadcast_to(np.eye(a.shape[-1], dtype=complex), a.shape)


def eigh(a):
    """Ascending eigen-decomposition of a stack of Hermitian matrices.

    Ranks 1 and 2 use closed forms; LAPACK's per-matrix overhead dominates
    otherwise for the small fibres used here.
    """
    a = np.asarray(a)
    m = a.shape[-1]
    if m == 1:
        w = a[..., 0, :].real.astype(float)
        return w, np.ones(a.shape, dtype=complex)
    if m == 2:
        return _eigh2(a)
    return np.linalg.eigh(herm(a))


def _eigh2(a):
    p = a[..., 0, 0].real
    q = a[..., 1, 1].real
    b = 0.5 * (a[..., 0, 1] + np.conj(a[..., 1, 0]))
    r = np.abs(b)
    mean = 0.5 * (p + q)
    half = 0.5 * (p - q)
    rho = np.hypot(half, r)
    theta = 0.5 * np.arctan2(r, half)
    c, s = np.cos(theta), np.sin(theta)
    phase = np.where(r > 0, np.conj(b) / np.where(r > 0, r, 1.0), 1.0)
    v = np.empty(a.shape, dtype=complex)
    v[..., 0, 0] = -s
    v[..., 1, 0] = c * phase
    v[..., 0, 1] = c
    v[..., 1, 1] = s * phase
    w = np.stack([mean - rho, mean + rho], axis=-1)
    return w, v


def eigh_pd(h, floor=0.0):
    """Eigen-decomposition of a stack of Hermitian positive matrices."""
    w, v = eigh(h)
    if floor is not None and np.min(w) <= floor:
        raise ConditioningError(
            f"metric eigenvalue {np.min(w):.3e} at or below floor {floor:.1e}")
    return w, v


def from_eig(w, v):
    return (v * w[..., None, :]) @ dag(v)


def sqrt_pair(h, floor=0.0):
    """Return (h^{1/2}, h^{-1/2}) for Hermitian positive h."""
    w, v = eigh_pd(h, floor)
    s = np.sqrt(w)
    return from_eig(s, v), from_eig(1.0 / s, v)


def logm_pd(h, floor=0.0):
    w, v = eigh_pd(h, floor)
    return from_eig(np.log(w), v)


def expm_herm(s):
    w, v = eigh(s)
    return from_eig(np.exp(w), v)


def log_ratio(h, x, floor=0.0, roots=None):
    """log(h^{-1} x) for Hermitian positive h and x.

    The result is h-self-adjoint; it is computed through the Hermitian
    matrix h^{-1/2} x h^{-1/2} so no general eigensolver is needed.
    ``roots`` may carry a precomputed ``(h^{1/2}, h^{-1/2})``.
    """
    hs, his = sqrt_pair(h, floor) if roots is None else roots
    w, v = eigh_pd(his @ x @ his, floor=None)
    if np.min(w) <= 0.0:
        raise ConditioningError("relative metric is not positive")
    return his @ from_eig(np.log(w), v) @ hs


def hsa_defect(h, k):
    """Relative size of the anti-Hermitian part of h @ k, site by site."""
    hk = h @ k
    num = np.linalg.norm(hk - dag(hk), axis=(-2, -1))
    return num / (1.0 + np.linalg.norm(hk, axis=(-2, -1)))


def kron_ad(x):
    """Matrix of A -> [x, A] on row-major vec(A)."""
    eye = np.eye(x.shape[-1])
    return _batched_kron(x, eye) - _batched_kron(eye, np.swapaxes(x, -1, -2))


def kron_conj(g):
    """Matrix of A -> g A g^{-1} on row-major vec(A)."""
    ginv_t = np.swapaxes(np.linalg.inv(g), -1, -2)
    return _batched_kron(g, ginv_t)


def _batched_kron(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    shape = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    a = np.broadcast_to(a, shape + a.shape[-2:])
    b = np.broadcast_to(b, shape + b.shape[-2:])
    out = a[..., :, None, :, None] * b[..., None, :, None, :]
    return out.reshape(shape + (a.shape[-2] * b.shape[-2], a.shape[-1] * b.shape[-1]))
