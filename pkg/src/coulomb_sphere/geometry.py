"""Stereographic map between momentum space and the unit sphere S^3.

A bound-state energy E < 0 fixes the momentum scale ``pE = sqrt(-2E)``.
Momenta ``p`` are sent to unit four-vectors

    pi_vec = 2 pE p / (p^2 + pE^2),   pi4 = (p^2 - pE^2) / (p^2 + pE^2)

so that p = 0 lands on the south pole (pi4 = -1) and |p| -> infinity on the
north pole.  Everything here is in natural units (hbar = M = 1, energies in
units of M alpha^2 / hbar^2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, PointAtInfinityError

#: eV per natural energy unit (M alpha^2 / hbar^2).
EV_PER_UNIT = 27.21

_NORM_TOL = 1e-12
_POLE_TOL = 1e-14


@dataclass(frozen=True)
class EnergyContext:
    """Shared physical parameters of a bound state.

    Only ``E`` and ``alpha`` are stored; ``pE`` and ``mu`` are derived so the
    relations ``pE**2 == -2E`` and ``mu * pE**2 == 1`` cannot drift.
    """

    E: float
    alpha: float = 1.0
    energy_unit_eV: float = EV_PER_UNIT

    def __post_init__(self):
        if not math.isfinite(self.E) or self.E >= 0:
            raise InvalidInputError(f"bound regime needs finite E < 0, got {self.E!r}")
        if not math.isfinite(self.alpha) or self.alpha <= 0:
            raise InvalidInputError(f"alpha must be positive, got {self.alpha!r}")

    @classmethod
    def from_pE(cls, pE, alpha=1.0):
        return cls(E=-0.5 * pE * pE, alpha=alpha)

    @property
    def pE(self):
        return math.sqrt(-2.0 * self.E)

    @property
    def mu(self):
        """Pseudomass of the particle on the sphere, 1/pE^2."""
        return -0.5 / self.E


@dataclass(frozen=True)
class SpherePoint4:
    """A point ``(pi_vec, pi4)`` on the unit sphere S^3."""

    pi_vec: np.ndarray = field(repr=True)
    pi4: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.pi_vec, dtype=float).reshape(3)
        if not (np.all(np.isfinite(v)) and math.isfinite(self.pi4)):
            raise InvalidInputError("sphere point components must be finite")
        norm2 = float(v @ v) + self.pi4 * self.pi4
        if abs(norm2 - 1.0) > _NORM_TOL:
            raise InvalidInputError(f"not on S^3: |pi|^2 = {norm2!r}")
        v.setflags(write=False)
        object.__setattr__(self, "pi_vec", v)
        object.__setattr__(self, "pi4", float(self.pi4))

    @classmethod
    def from_array(cls, x, normalize=False):
        """Build from a length-4 array ``(pi_1, pi_2, pi_3, pi_4)``.

        With ``normalize=True`` the vector is rescaled to unit length first
        (a zero vector is rejected); otherwise it must already be unit.
        """
        x = np.asarray(x, dtype=float).reshape(4)
        if normalize:
            norm = float(np.linalg.norm(x))
            if not math.isfinite(norm) or norm == 0.0:
                raise InvalidInputError("cannot normalize a zero or non-finite vector")
            x = x / norm
        return cls(x[:3], float(x[3]))

    def as_array(self):
        return np.append(self.pi_vec, self.pi4)

    def dot(self, other):
        return float(self.pi_vec @ other.pi_vec) + self.pi4 * other.pi4


def as_momentum(p):
    """Validate and return a finite 3-vector of momentum components."""
    arr = np.asarray(p, dtype=float)
    if arr.shape != (3,):
        raise InvalidInputError(f"momentum must have 3 components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("momentum components must be finite")
    return arr


def project_array(p, pE):
    """Vectorised projection of an ``(..., 3)`` momentum array to ``(..., 4)``."""
    p = np.asarray(p, dtype=float)
    p2 = np.sum(p * p, axis=-1)
    denom = p2 + pE * pE
    out = np.empty(p.shape[:-1] + (4,))
    out[..., :3] = (2.0 * pE) * p / denom[..., None]
    out[..., 3] = (p2 - pE * pE) / denom
    return out


def project(p, ctx: EnergyContext) -> SpherePoint4:
    """Stereographic image of momentum ``p`` on S^3."""
    p = as_momentum(p)
    x = project_array(p, ctx.pE)
    # renormalise away the last ulp so the invariant check in SpherePoint4 holds
    x /= math.sqrt(float(x @ x))
    return SpherePoint4(x[:3], float(x[3]))


def unproject(pi: SpherePoint4, ctx: EnergyContext) -> np.ndarray:
    """Inverse projection ``p = pE pi_vec / (1 - pi4)``.

    Raises
    ------
    PointAtInfinityError
        If ``pi`` is the north pole (within 1e-14).
    """
    gap = 1.0 - pi.pi4
    if gap <= _POLE_TOL:
        raise PointAtInfinityError("north pole maps to infinite momentum")
    # 1 - pi4 loses digits near the north pole; |pi_vec|^2 / (1 + pi4) does not
    if pi.pi4 > 0:
        s2 = float(pi.pi_vec @ pi.pi_vec)
        gap = s2 / (1.0 + pi.pi4) if s2 > 0 else gap
    return ctx.pE * pi.pi_vec / gap


def cos_invariant_angle(p_b, p_a, pE):
    """Cosine of the S^3 angle between the images of two momenta (unclamped)."""
    p_b = np.asarray(p_b, dtype=float)
    p_a = np.asarray(p_a, dtype=float)
    pb2 = np.sum(p_b * p_b, axis=-1)
    pa2 = np.sum(p_a * p_a, axis=-1)
    e2 = pE * pE
    num = (pb2 - e2) * (pa2 - e2) + 4.0 * e2 * np.sum(p_b * p_a, axis=-1)
    return num / ((pb2 + e2) * (pa2 + e2))


def invariant_angle(p_b, p_a, ctx: EnergyContext) -> float:
    """Angle in [0, pi] between the S^3 images of ``p_b`` and ``p_a``.

    Uses ``2 atan2(|b - a|, |b + a|)``, which stays accurate where arccos
    of the cosine loses half the digits (nearly coincident or antipodal).
    """
    b = project(as_momentum(p_b), ctx).as_array()
    a = project(as_momentum(p_a), ctx).as_array()
    return float(2.0 * math.atan2(np.linalg.norm(b - a), np.linalg.norm(b + a)))


def measure_density(p, ctx: EnergyContext) -> float:
    """Jacobian dOmega_3 / d^3p = 8 pE^3 / (p^2 + pE^2)^3."""
    p = as_momentum(p)
    pE = ctx.pE
    return 8.0 * pE**3 / (float(p @ p) + pE * pE) ** 3


def metric_factor(p, ctx: EnergyContext) -> float:
    """Conformal factor 4 / (p^2 + pE^2)^2 of the momentum-space metric."""
    p = as_momentum(p)
    return 4.0 / (float(p @ p) + ctx.pE**2) ** 2


def total_measure(ctx: EnergyContext, n_nodes=64) -> float:
    """Integrate ``measure_density`` over all of R^3.

    The radial integral is compactified with ``|p| = pE tan(u)``,
    u in [0, pi/2), which turns the algebraic tail into a smooth integrand
    that Gauss-Legendre handles to machine precision.
    """
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    u = 0.25 * np.pi * (x + 1.0)
    w = 0.25 * np.pi * w
    pE = ctx.pE
    r = pE * np.tan(u)
    dr_du = pE / np.cos(u) ** 2
    dens = 8.0 * pE**3 / (r * r + pE * pE) ** 3
    return float(np.sum(w * 4.0 * np.pi * r * r * dens * dr_du))
