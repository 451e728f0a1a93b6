"""Discretized square flat torus."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ValidationError


@dataclass(frozen=True)
class LatticeSurface:
    """Square flat torus with ``sites_per_side`` sites along each cycle.

    The Kähler form is the Euclidean area form, so each site carries the
    cell area ``spacing**2``.
    """

    sites_per_side: int
    side_length: float = 1.0
    complex_dim: int = 1

    def __post_init__(self):
        n = self.sites_per_side
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 4:
            raise ValidationError(f"sites_per_side must be an integer N >= 4, got {n!r}")
        if not np.isfinite(self.side_length) or self.side_length <= 0:
            raise ValidationError(f"side_length must be positive, got {self.side_length!r}")
        if self.complex_dim != 1:
            raise ValidationError("only complex dimension 1 is supported")

    @property
    def area(self):
        return float(self.side_length) ** 2

    @property
    def spacing(self):
        return float(self.side_length) / self.sites_per_side

    @property
    def cell_area(self):
        return self.spacing ** 2

    @property
    def shape(self):
        return (self.sites_per_side, self.sites_per_side)

    def shift(self, field, axis, step=1):
        """Value at ``s + step * e_axis`` stored at ``s`` (periodic)."""
        return np.roll(field, -step, axis=axis)

    def coordinates(self):
        """Site coordinates (x, y), each of shape (N, N)."""
        t = np.arange(self.sites_per_side) * self.spacing
        return np.meshgrid(t, t, indexing="ij")

    def check_field(self, field, trailing=0):
        field = np.asarray(field)
        if field.ndim < 2 or field.shape[:2] != self.shape:
            raise DimensionError(
                f"field of shape {field.shape} does not live on a {self.shape} lattice")
        if trailing and field.ndim != 2 + trailing:
            raise DimensionError(f"expected {trailing} trailing axes, got shape {field.shape}")
        return field


def integrate(surface, f):
    """Riemann sum ``a**2 * sum_s f(s)`` over the torus.

    Trailing axes, if any, are kept, so a matrix field integrates to a
    matrix.
    """
    f = surface.check_field(f)
    # fixed reduction order keeps repeated runs bit-identical
    total = np.sum(np.sum(f, axis=0), axis=0)
    out = surface.cell_area * total
    return out.item() if np.ndim(out) == 0 else out


def lambda_contract(surface, two_form):
    """Contract a plaquette-phase two-form against the Kähler form.

    ``two_form`` holds, per plaquette, the phase matrix whose exponential
    is the plaquette holonomy; contraction divides by the cell area so a
    constant phase ``theta`` becomes the constant field ``theta / a**2``.
    """
    two_form = surface.check_field(two_form)
    return two_form / surface.cell_area
