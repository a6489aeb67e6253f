"""Time-sliced transfer operator on S^3 and spectrum extraction.

A short-pseudotime kernel for a particle of pseudomass ``mu = 1/pE^2`` on the
unit S^3 is taken as a flat Gaussian in the opening angle,

    K_eps(t) ∝ exp(-mu t^2 / (2 eps)),

normalised to unit integral over S^3.  Rotation-invariant kernels are
diagonal in the character basis, so each slice is reduced to per-mode
coefficients ``k_n = ∫ K(t) P_n(cos t) dOmega`` and N slices compose as
``k_n**N``.  The decay rate ``-ln k_n / eps`` extrapolated to eps -> 0 gives
the free-particle eigenvalue ``pE^2 (n^2 - 1) / 2``.

Two per-slice factors can be switched on:

* the curvature measure factor, ``exp(-eps pE^2 / 2)``, which moves the rate
  to ``pE^2 n^2 / 2``;
* a hypothetical extra ``c R`` Hamiltonian term, ``exp(-eps 3c pE^2 / 2)``,
  which adds ``3c`` to ``n^2``.

A level is bound where the rate equals ``alpha^2 / 2``; the rates scale with
``pE^2``, which fixes the energy in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import ConvergenceError, InvalidInputError, ResolutionError
from .geometry import EnergyContext
from .harmonics import TWO_PI_SQ, legendre4


def scalar_curvature(D=4, radius=1.0):
    """Scalar curvature (D-1)(D-2)/r^2 of a round sphere in D dimensions."""
    return (D - 1) * (D - 2) / radius**2


#: scalar curvature of the unit S^3
R_UNIT_S3 = scalar_curvature(4, 1.0)

_MAX_NODE_MASS = 0.25
_SINGULAR_RATE = 1e-9


@dataclass(frozen=True)
class SliceConfig:
    epsilon: float
    num_slices: int = 1
    grid_points: int = 512
    with_measure_factor: bool = True
    c: float = 0.0
    n_modes: int = 8

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidInputError(f"epsilon must be positive, got {self.epsilon!r}")
        if int(self.num_slices) != self.num_slices or self.num_slices < 1:
            raise InvalidInputError("num_slices must be a positive integer")
        if self.n_modes < 1:
            raise InvalidInputError("n_modes must be >= 1")
        if self.grid_points < 4 * self.n_modes:
            raise ResolutionError(
                f"grid_points={self.grid_points} < 4 * n_modes={4 * self.n_modes}")

    @property
    def total_pseudotime(self):
        return self.epsilon * self.num_slices


@dataclass(frozen=True)
class ModeCoefficients:
    """Per-slice character coefficients, raised to ``slices``.

    Stored as ``sign`` and ``log|k_n|`` of a single slice plus an integer
    slice count, so composition is exact integer arithmetic and the values
    never overflow until they are materialised.
    """

    log_abs: np.ndarray
    sign: np.ndarray
    slices: int = 1

    @classmethod
    def from_values(cls, k):
        k = np.asarray(k, dtype=float)
        with np.errstate(divide="ignore"):
            return cls(np.log(np.abs(k)), np.sign(k), 1)

    @property
    def n_modes(self):
        return len(self.log_abs)

    def log_values(self):
        return self.slices * self.log_abs

    def values(self):
        sign = self.sign if self.slices % 2 else np.abs(self.sign)
        return sign * np.exp(self.log_values())


@lru_cache(maxsize=16)
def theta_grid(grid_points):
    """Gauss-Legendre nodes and weights on [0, pi] for the opening angle."""
    x, w = np.polynomial.legendre.leggauss(grid_points)
    t = 0.5 * np.pi * (x + 1.0)
    return t, 0.5 * np.pi * w


def slice_factor(cfg: SliceConfig, ctx: EnergyContext):
    """Product of the per-slice measure and c-term factors (n-independent)."""
    pE2 = ctx.pE**2
    log_f = 0.0
    if cfg.with_measure_factor:
        # R/(12 mu) with R = 6 on the unit S^3
        log_f -= cfg.epsilon * R_UNIT_S3 / 12.0 * pE2
    log_f -= cfg.epsilon * cfg.c * R_UNIT_S3 / 4.0 * pE2
    return math.exp(log_f)


@lru_cache(maxsize=64)
def _gaussian_norm(width2, grid_points):
    t, w = theta_grid(grid_points)
    mass = 4.0 * np.pi * np.sum(w * np.exp(-0.5 * t * t / width2) * np.sin(t) ** 2)
    if not mass > 0:
        raise ResolutionError(f"kernel width {math.sqrt(width2):.2e} rad is below the "
                              f"resolution of a {grid_points}-point grid")
    return 1.0 / mass


def short_time_kernel(theta, cfg: SliceConfig, ctx: EnergyContext):
    """One-slice kernel at opening angle(s) ``theta``.

    Without the extra factors it integrates to 1 over S^3 (normalisation
    computed on the same Gauss-Legendre grid used for projection).
    """
    theta = np.asarray(theta, dtype=float)
    if np.any((theta < 0) | (theta > np.pi)):
        raise InvalidInputError("theta must lie in [0, pi]")
    width2 = cfg.epsilon / ctx.mu
    norm = _gaussian_norm(width2, cfg.grid_points)
    out = norm * np.exp(-0.5 * theta * theta / width2) * slice_factor(cfg, ctx)
    return out if out.ndim else float(out)


def kernel_to_modes(samples, cfg: SliceConfig) -> ModeCoefficients:
    """Project kernel samples on :func:`theta_grid` onto the character basis.

    ``k_n = 4 pi ∫ K(t) sin(n t)/(n sin t) sin^2 t dt``, i.e. the character
    overlap ``(2/pi) ∫ K chi_n sin^2 t dt`` divided by ``n / (2 pi^2)``.
    That calibration makes a kernel ``sum_n a_n n^2/(2pi^2) P_n`` project to
    exactly ``a_n``.

    Raises
    ------
    ResolutionError
        If a single grid node carries more than a quarter of the kernel's
        mass, i.e. the grid does not resolve the kernel.
    """
    t, w = theta_grid(cfg.grid_points)
    samples = np.asarray(samples, dtype=float)
    if samples.shape != t.shape:
        raise InvalidInputError(f"expected {t.shape[0]} samples, got {samples.shape}")
    mass = w * samples * np.sin(t) ** 2
    total = np.sum(np.abs(mass))
    if total > 0 and np.max(np.abs(mass)) > _MAX_NODE_MASS * total:
        raise ResolutionError(
            f"kernel under-resolved: one of {cfg.grid_points} nodes carries "
            f"{np.max(np.abs(mass)) / total:.0%} of its mass")
    cos_t = np.cos(t)
    k = np.array([4.0 * np.pi * np.sum(mass * legendre4(n, cos_t))
                  for n in range(1, cfg.n_modes + 1)])
    return ModeCoefficients.from_values(k)


def modes_to_kernel(modes: ModeCoefficients, theta):
    """Rebuild ``K(t) = sum_n k_n n^2/(2pi^2) P_n(cos t)`` from coefficients."""
    k = modes.values()
    x = np.cos(np.asarray(theta, dtype=float))
    return sum(k[n - 1] * n * n / TWO_PI_SQ * legendre4(n, x) for n in range(1, len(k) + 1))


def compose_slices(modes: ModeCoefficients, num_slices) -> ModeCoefficients:
    """N-fold convolution on S^3: ``k_n -> k_n**N`` (exact in log space)."""
    if int(num_slices) != num_slices or num_slices < 1:
        raise InvalidInputError("num_slices must be a positive integer")
    return replace(modes, slices=modes.slices * int(num_slices))


def slice_modes(cfg: SliceConfig, ctx: EnergyContext) -> ModeCoefficients:
    """Single-slice mode coefficients of :func:`short_time_kernel`."""
    t, _ = theta_grid(cfg.grid_points)
    return kernel_to_modes(short_time_kernel(t, cfg, ctx), cfg)


# --------------------------------------------------------------------------
# spectrum extraction

@dataclass(frozen=True)
class ExtractedLevel:
    n: int
    rate: float
    energy: float | None

    @property
    def singular(self):
        return self.energy is None


@dataclass
class SlicedSpectrum:
    epsilons: list
    rates: np.ndarray          # (len(epsilons), n_modes), reduced by pE^2
    extrapolated: np.ndarray   # (n_modes,)
    levels: list = field(default_factory=list)
    with_measure_factor: bool = True
    c: float = 0.0

    def level(self, n):
        return self.levels[n - 1]


def extract_spectrum(epsilons=(0.04, 0.02, 0.01), ctx: EnergyContext | None = None,
                     S=1.0, with_measure_factor=True, c=0.0, n_modes=4,
                     grid_points=512) -> SlicedSpectrum:
    """Bound-state energies from a sweep of slice widths.

    ``epsilons`` are in units of 1/pE^2.  For each one the slice kernel is
    composed ``S/eps`` times, the per-mode rate ``-ln k_n / S`` is recorded,
    and the two finest rates are Richardson-extrapolated (first-order
    error).  With reduced rate ``rho_n = rate / pE^2`` the bound-state
    condition ``rate = alpha^2 / 2`` gives ``E_n = -alpha^2 / (4 rho_n)``;
    a vanishing rate means no bound state at that n.

    Raises
    ------
    ConvergenceError
        If the rate differences across the sweep do not shrink.
    """
    ctx = ctx or EnergyContext(-0.5)
    eps_list = sorted((float(e) for e in epsilons), reverse=True)
    if len(eps_list) < 3:
        raise InvalidInputError("need at least three epsilon values")
    pE2 = ctx.pE**2
    rates = []
    for e in eps_list:
        eps = e / pE2
        n_slices = S * pE2 / e
        if abs(n_slices - round(n_slices)) > 1e-9 * n_slices:
            raise InvalidInputError(f"S = {S} is not a multiple of epsilon = {e}")
        cfg = SliceConfig(eps, int(round(n_slices)), grid_points, with_measure_factor, c, n_modes)
        composed = compose_slices(slice_modes(cfg, ctx), cfg.num_slices)
        rates.append(-composed.log_values() / cfg.total_pseudotime / pE2)
    rates = np.array(rates)

    # first-order convergence: rate differences scale with the epsilon gaps,
    # so the slopes d(rate)/d(eps) must keep one sign and must not grow
    slopes = np.diff(rates, axis=0) / np.diff(eps_list)[:, None]
    for n in range(n_modes):
        d = slopes[:, n]
        big = np.abs(d) > 1e-9
        if np.any(big) and (np.any(np.sign(d[big]) != np.sign(d[big][0]))
                            or np.any(np.abs(d[1:]) > 1.5 * np.abs(d[:-1]) + 1e-9)):
            raise ConvergenceError(f"non-monotone epsilon convergence for n = {n + 1}",
                                   {"epsilons": eps_list, "rates": rates[:, n].tolist()})

    e1, e2 = eps_list[-2], eps_list[-1]
    extrap = (e1 * rates[-1] - e2 * rates[-2]) / (e1 - e2)
    levels = []
    for n, rho in enumerate(extrap, start=1):
        if rho <= _SINGULAR_RATE:
            levels.append(ExtractedLevel(n, float(rho), None))
        else:
            levels.append(ExtractedLevel(n, float(rho), -ctx.alpha**2 / (4.0 * rho)))
    return SlicedSpectrum(eps_list, rates, extrap, levels, with_measure_factor, c)


# --------------------------------------------------------------------------
# discrimination report

@dataclass
class DiscriminationRow:
    variant: str
    c: float
    with_measure_factor: bool
    n: int
    extracted: float | None
    analytic: float | None
    physical: float
    deviation_percent: float | None
    note: str = ""


def discrimination_report(c_values=(0.0, 1 / 24, 1 / 12, 1 / 8), n_max=3, alpha=1.0,
                          epsilons=(0.04, 0.02, 0.01), grid_points=512):
    """Sliced spectra for each ``c`` (measure factor on) plus measure factor off.

    Deviations are relative to the physical levels ``-alpha^2/(2 n^2)``.
    """
    from .spectral import _c_label  # shared label formatting

    rows = []
    runs = [(c, True) for c in c_values] + [(0.0, False)]
    for c, on in runs:
        res = extract_spectrum(epsilons, EnergyContext(-0.5, alpha), with_measure_factor=on,
                               c=c, n_modes=n_max, grid_points=grid_points)
        name = f"c={_c_label(c)}" if on else "no-measure-factor"
        for lev in res.levels:
            n = lev.n
            physical = -alpha**2 / (2.0 * n * n)
            if on:
                analytic = -alpha**2 / (2.0 * (n * n + 3.0 * c))
            else:
                analytic = None if n == 1 else -alpha**2 / (2.0 * (n * n - 1))
            if lev.singular:
                rows.append(DiscriminationRow(name, c, on, n, None, analytic, physical, None,
                                              f"no n={n} bound state"))
            else:
                dev = 100.0 * abs(lev.energy - physical) / abs(physical)
                rows.append(DiscriminationRow(name, c, on, n, lev.energy, analytic,
                                              physical, dev))
    return rows
