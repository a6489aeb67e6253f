"""Spectral sums on S^3: pseudotime kernel, fixed-energy amplitude, poles.

The pseudotime kernel between two sphere points at opening angle ``t`` is

    K_S(t) = (2 pi)^{3/2} pE^3 sum_n n^2/(2 pi^2) P_n(cos t) exp[(-pE^2 n^2 + alpha^2) S / 2]

and integrating it over S gives the fixed-energy amplitude

    G_E(t) = -(2 pi)^{3/2} pE^3 sum_n n^2/(2 pi^2) P_n(cos t) * 2 / (2 E (n^2 + 3c) + alpha^2)

whose poles are the bound-state energies ``-alpha^2 / (2 (n^2 + 3c))``.
The curvature coefficient ``c`` is 0 for the physical Hamiltonian.

The amplitude series is only conditionally convergent (terms ~ sin(n t)/n),
so it is evaluated by peeling off the two leading large-n pieces and summing
them in closed form with the sawtooth identities

    sum_n sin(n t)/n   = (pi - t)/2
    sum_n sin(n t)/n^3 = t (pi - t) (2 pi - t)/12,      0 < t < pi,

leaving an absolutely convergent remainder that decays like n^-5.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import erfc

from .errors import (CoincidentPointError, InvalidInputError, PoleProximityError,
                     ResolutionError)
from .geometry import EV_PER_UNIT, EnergyContext
from .harmonics import TWO_PI_SQ, legendre4

PREFACTOR_CONST = (2.0 * math.pi) ** 1.5
POLE_TOL = 1e-12
MAX_TERMS = 10_000_000
_CHUNK = 1 << 18
_GRID_PHASE = 0.5 * (math.sqrt(5.0) - 1.0)

#: the curvature coefficients proposed for an extra R-term
CANDIDATE_C = (Fraction(1, 24), Fraction(1, 12), Fraction(1, 8))


@dataclass(frozen=True)
class RTermVariant:
    """Extra curvature term: the constant ``3c`` is added to every n^2."""

    c: float = 0.0
    label: str = ""

    def __post_init__(self):
        if not math.isfinite(self.c):
            raise InvalidInputError("c must be finite")
        object.__setattr__(self, "c", float(self.c))
        if not self.label:
            object.__setattr__(self, "label", _c_label(self.c))

    @property
    def shift(self):
        return 3.0 * self.c


def _c_label(c):
    frac = Fraction(c).limit_denominator(1000)
    if abs(float(frac) - c) < 1e-12:
        return str(frac)
    return repr(c)


def parse_c(text) -> float:
    """Parse a curvature coefficient given as a fraction ('1/12') or decimal."""
    try:
        return float(Fraction(str(text).strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise InvalidInputError(f"cannot parse c value {text!r}") from exc


@dataclass(frozen=True)
class SpectrumEntry:
    n: int
    energy: float
    singular: bool = False

    @property
    def energy_eV(self):
        return None if self.singular else self.energy * EV_PER_UNIT


@dataclass(frozen=True)
class SeriesResult:
    """Value of a truncated series with a bound on the neglected part."""

    value: float
    terms_used: int
    tail_bound: float
    accelerated: bool = False


# --------------------------------------------------------------------------
# pseudotime kernel

def _gauss_tail(a, N):
    """Upper bound on sum_{n>N} n^2 exp(-a n^2), valid once N+1 >= 1/sqrt(a)."""
    M = N + 1.0
    f = M * M * math.exp(-a * M * M)
    integral = (M * math.exp(-a * M * M) / (2.0 * a)
                + math.sqrt(math.pi) / (4.0 * a**1.5) * erfc(M * math.sqrt(a)))
    return f + integral


def pseudotime_amplitude(pi_b, pi_a, S, ctx: EnergyContext, tol=1e-14) -> SeriesResult:
    """Pseudotime kernel between two sphere points after pseudotime ``S``.

    The sum is cut at the first N past the peak of n^2 exp(-pE^2 n^2 S/2)
    whose analytic tail bound (times prefactor) falls below ``tol``.
    """
    if not S > 0:
        raise InvalidInputError(f"pseudotime must be positive, got {S!r}")
    cos_t = float(np.clip(pi_b.dot(pi_a), -1.0, 1.0))
    return pseudotime_amplitude_cos(cos_t, S, ctx, tol)


def pseudotime_amplitude_cos(cos_t, S, ctx: EnergyContext, tol=1e-14) -> SeriesResult:
    """Same as :func:`pseudotime_amplitude`, keyed by the cosine of the angle.

    ``cos_t`` may be an array; ``value`` is then an array and the tail bound
    applies to every entry.
    """
    if not S > 0:
        raise InvalidInputError(f"pseudotime must be positive, got {S!r}")
    pE2 = ctx.pE**2
    a = 0.5 * pE2 * S
    pref = PREFACTOR_CONST * ctx.pE**3 / TWO_PI_SQ * math.exp(0.5 * ctx.alpha**2 * S)
    N = max(1, math.ceil(1.0 / math.sqrt(a)))
    while pref * _gauss_tail(a, N) >= tol:
        N *= 2
        if N > MAX_TERMS:
            raise ResolutionError("pseudotime too small for series evaluation")
    # shrink back to the first N meeting the bound
    lo, hi = max(1, N // 2), N
    while lo < hi:
        mid = (lo + hi) // 2
        if mid + 1 >= 1.0 / math.sqrt(a) and pref * _gauss_tail(a, mid) < tol:
            hi = mid
        else:
            lo = mid + 1
    N = hi
    x = np.asarray(cos_t, dtype=float)
    n = np.arange(1, N + 1)
    weights = n * n * np.exp(-a * n * n)
    total = np.zeros_like(x, dtype=float)
    for k, w in zip(n, weights):
        total = total + w * legendre4(int(k), x)
    return SeriesResult(value=pref * total if total.ndim else float(pref * total),
                        terms_used=N, tail_bound=pref * _gauss_tail(a, N))


# --------------------------------------------------------------------------
# fixed-energy amplitude

def pole_energy(n, c=0.0, alpha=1.0):
    """Energy of the n-th pole with curvature coefficient ``c``."""
    return -alpha * alpha / (2.0 * (n * n + 3.0 * c))


def _nearest_pole(E, c, alpha):
    x = -alpha * alpha / (2.0 * E) - 3.0 * c
    n = max(1, int(round(math.sqrt(max(x, 1.0)))))
    best = min((k for k in (n - 1, n, n + 1) if k >= 1),
               key=lambda k: abs(E - pole_energy(k, c, alpha)))
    return best


def _check_args(E, theta, c, alpha, check_poles=True):
    if not (math.isfinite(E) and E < 0):
        raise InvalidInputError(f"fixed-energy amplitude needs E < 0, got {E!r}")
    if not 0.0 <= theta <= math.pi:
        raise InvalidInputError(f"angle must lie in [0, pi], got {theta!r}")
    if theta == 0.0:
        raise CoincidentPointError("fixed-energy amplitude diverges at zero angle")
    if check_poles:
        k = _nearest_pole(E, c, alpha)
        if abs(E - pole_energy(k, c, alpha)) < POLE_TOL:
            raise PoleProximityError(f"E = {E!r} is on the pole n = {k}", n=k)


def _chunked_sum(fn, n_lo, n_hi):
    """sum_{n=n_lo}^{n_hi} fn(n) in fixed-size chunks (fixed reduction order)."""
    total = 0.0
    for start in range(n_lo, n_hi + 1, _CHUNK):
        n = np.arange(start, min(start + _CHUNK, n_hi + 1), dtype=float)
        total += float(np.sum(fn(n)))
    return total


def _sin_ratio(n, theta, sin_t):
    return np.sin(n * theta) / (n * sin_t)


def _legendre4_near_pi(n, theta):
    """P_n(cos t) for an array of orders n when t is within ~1e-8 of pi."""
    d = math.pi - theta
    sign = np.where(np.asarray(n) % 2 == 1, 1.0, -1.0)
    return sign * np.sinc(n * d / math.pi) / np.sinc(d / math.pi)


def fixed_energy_amplitude(theta, E, alpha=1.0, c=0.0, tol=1e-12,
                           _check_poles=True) -> SeriesResult:
    """Fixed-energy amplitude at opening angle ``theta`` in (0, pi].

    The n-th summand ``(1/2pi^2) P_n * 2 n^2 / D_n`` with
    ``D_n = 2 E n^2 + beta``, ``beta = alpha^2 + 6 E c`` is split as

        2 n^2 / D_n = 1/E - beta/(2 E^2 n^2) + beta^2/(2 E^2 n^2 D_n)

    The first two pieces are summed exactly; the remainder is summed until
    the tail bound (relative to the overall prefactor) drops below ``tol``.

    Raises
    ------
    PoleProximityError
        If E is within 1e-12 of a pole; ``.n`` names the pole.
    CoincidentPointError
        If ``theta == 0``.
    """
    _check_args(E, theta, c, alpha, _check_poles)
    pE = math.sqrt(-2.0 * E)
    pref = -PREFACTOR_CONST * pE**3 / TWO_PI_SQ
    beta = alpha * alpha + 6.0 * E * c
    sin_t = math.sin(theta)
    absE = -E

    # (pi - t)/sin t -> 1 as t -> pi
    ratio = (math.pi - theta) / sin_t if sin_t > 1e-8 else 1.0 + (math.pi - theta) ** 2 / 6.0
    s1 = 0.5 * ratio
    s3 = theta * (2.0 * math.pi - theta) * ratio / 12.0
    if sin_t > 1e-8:
        p_n = lambda n: _sin_ratio(n, theta, sin_t)
    else:
        p_n = lambda n: _legendre4_near_pi(n, theta)
    closed = s1 / E - beta / (2.0 * E * E) * s3

    # remainder: beta^2 P_n / (2 E^2 n^2 D_n); for n^2 >= |beta|/|E|,
    # |D_n| >= |E| n^2 and |P_n| <= min(1, 1/(n sin t)).
    coeff = beta * beta / (2.0 * E * E)
    n_safe = math.ceil(math.sqrt(abs(beta) / absE)) + 1

    def tail(N):
        N = max(N, n_safe)
        bound = 1.0 / (3.0 * N**3)
        if sin_t > 0:
            bound = min(bound, 1.0 / (4.0 * N**4 * sin_t))
        return abs(pref) * abs(coeff) / absE * bound

    N = n_safe
    while tail(N) >= tol and N < MAX_TERMS:
        N *= 2
    lo, hi = n_safe, max(N, n_safe)
    while lo < hi:
        mid = (lo + hi) // 2
        if tail(mid) < tol:
            hi = mid
        else:
            lo = mid + 1
    N = hi
    remainder = _chunked_sum(lambda n: coeff * p_n(n) / (n * n * (2.0 * E * n * n + beta)), 1, N)
    return SeriesResult(value=pref * (closed + remainder), terms_used=N,
                        tail_bound=tail(N), accelerated=True)


def fixed_energy_amplitude_cesaro(theta, E, alpha=1.0, c=0.0, n_terms=100_000) -> SeriesResult:
    """Direct (Cesaro-averaged) summation of the fixed-energy series.

    Used as an independent cross-check on :func:`fixed_energy_amplitude`.
    The bound combines the Abel estimate for the sawtooth part,
    ``ln(N+1) / (N sin(t/2) sin t |E|)``, with the exact Cesaro weight
    defect of the absolutely convergent remainder.
    """
    _check_args(E, theta, c, alpha)
    if theta >= math.pi:
        raise InvalidInputError("Cesaro cross-check needs theta < pi")
    pE = math.sqrt(-2.0 * E)
    pref = -PREFACTOR_CONST * pE**3 / TWO_PI_SQ
    beta = alpha * alpha + 6.0 * E * c
    sin_t = math.sin(theta)
    N = int(n_terms)
    n_safe = math.ceil(math.sqrt(abs(beta) / -E)) + 1
    if N < n_safe:
        raise ResolutionError(f"need at least {n_safe} Cesaro terms")

    n = np.arange(1, N + 1, dtype=float)
    p_n = _sin_ratio(n, theta, sin_t)
    a_n = p_n * 2.0 * n * n / (2.0 * E * n * n + beta)
    cesaro_w = (N - n + 1.0) / N
    value = float(np.sum(cesaro_w * a_n))

    rest = a_n - p_n / E
    weight_defect = float(np.sum((n - 1.0) / N * np.abs(rest)))
    rest_tail = abs(beta) / (E * E) * min(1.0 / (2.0 * N**2), 1.0 / (3.0 * N**3 * sin_t))
    saw = math.log(N + 1.0) / (N * math.sin(0.5 * theta) * sin_t * -E)
    bound = abs(pref) * (saw + weight_defect + rest_tail)
    return SeriesResult(value=pref * value, terms_used=N, tail_bound=bound, accelerated=False)


def fixed_energy_amplitude_between(pi_b, pi_a, E, alpha=1.0, c=0.0, tol=1e-12) -> SeriesResult:
    """Fixed-energy amplitude between two sphere points (angle form wrapper)."""
    b = pi_b.as_array() if hasattr(pi_b, "as_array") else np.asarray(pi_b, float)
    a = pi_a.as_array() if hasattr(pi_a, "as_array") else np.asarray(pi_a, float)
    cos_t = float(np.clip(a @ b, -1.0, 1.0))
    # arccos loses digits near cos = 1; use the chord instead
    theta = 2.0 * math.asin(min(1.0, 0.5 * float(np.linalg.norm(b - a))))
    if cos_t < 0:
        theta = math.pi - 2.0 * math.asin(min(1.0, 0.5 * float(np.linalg.norm(b + a))))
    return fixed_energy_amplitude(theta, E, alpha=alpha, c=c, tol=tol)


# --------------------------------------------------------------------------
# spectrum and poles

def spectrum(n_max, variant: RTermVariant = RTermVariant(), alpha=1.0):
    """Bound-state energies ``-alpha^2 / (2 (n^2 + 3c))`` for n = 1..n_max."""
    if n_max < 1:
        raise InvalidInputError("n_max must be >= 1")
    out = []
    for n in range(1, n_max + 1):
        denom = n * n + variant.shift
        if denom <= 0:
            raise InvalidInputError(f"c = {variant.c} leaves no bound state at n = {n}")
        out.append(SpectrumEntry(n, -alpha * alpha / (2.0 * denom)))
    return out


def no_measure_factor_spectrum(n_max, alpha=1.0):
    """Energies ``-alpha^2/(2 (n^2 - 1))`` obtained without the curvature factor.

    The n = 1 entry is flagged singular: its rate vanishes and no bound
    state exists there.
    """
    if n_max < 2:
        raise InvalidInputError("n_max must be >= 2")
    out = [SpectrumEntry(1, float("-inf"), singular=True)]
    for n in range(2, n_max + 1):
        out.append(SpectrumEntry(n, -alpha * alpha / (2.0 * (n * n - 1))))
    return out


@dataclass(frozen=True)
class LocatedPole:
    n: int
    energy: float
    theta: float


def find_poles(E_range=None, variant: RTermVariant = RTermVariant(), alpha=1.0,
               n_expect=6, probe_angles=(0.5 * math.pi, 2.0), points_per_level=100,
               xtol=1e-13):
    """Locate poles of the fixed-energy amplitude inside ``E_range``.

    The scan runs on a grid uniform in ``nu = sqrt(-alpha^2/(2E) - 3c)``, in
    which consecutive poles sit one unit apart.  A sign change of 1/G between
    neighbouring grid points is refined by bisection; brackets where |G|
    stays bounded (sign change through a zero of G) are discarded.  Every
    probe angle is scanned and the results merged, so a pole whose residue
    vanishes at one angle (P_n(cos t) = 0) is still found at another.

    Returns a list of :class:`LocatedPole` sorted by energy.
    """
    c = variant.c
    if E_range is None:
        lo_nu, hi_nu = 0.5, n_expect + 0.5
        E_range = (_energy_of_nu(lo_nu, c, alpha), _energy_of_nu(hi_nu, c, alpha))
    e_lo, e_hi = sorted(E_range)
    if not e_hi < 0:
        raise InvalidInputError("scan range must lie below zero")
    nu_lo, nu_hi = _nu_of_energy(e_lo, c, alpha), _nu_of_energy(e_hi, c, alpha)
    n_grid = max(8, int(math.ceil((nu_hi - nu_lo) * points_per_level)))
    step = (nu_hi - nu_lo) / n_grid
    # irrational offset keeps grid points off the (integer) pole positions
    nus = nu_lo + (np.arange(n_grid) + _GRID_PHASE) * step

    # resolution guard: adjacent poles must not share a grid cell
    poles_in = [k for k in range(1, int(nu_hi) + 2) if nus[0] < k < nus[-1]]
    cells = [int((k - nus[0]) // step) for k in poles_in]
    for k1, k2, c1, c2 in zip(poles_in, poles_in[1:], cells, cells[1:]):
        if c1 == c2:
            raise ResolutionError(f"scan too coarse to separate poles n = {k1} and n = {k2}")

    found = {}
    for theta in probe_angles:
        energies = [_energy_of_nu(v, c, alpha) for v in nus]
        inv = np.array([_inverse_amplitude(E, theta, alpha, c) for E in energies])
        scale = float(np.median(np.abs(inv[np.isfinite(inv)])))
        for i in range(n_grid - 1):
            if not (np.isfinite(inv[i]) and np.isfinite(inv[i + 1])):
                continue
            if inv[i] == 0.0:
                root = energies[i]
            elif inv[i] * inv[i + 1] < 0:
                root = _bisect(lambda E: _inverse_amplitude(E, theta, alpha, c),
                               energies[i], energies[i + 1], inv[i], xtol)
            else:
                continue
            if abs(_inverse_amplitude(root, theta, alpha, c)) > 1e-6 * scale:
                continue  # zero of G, not a pole
            k = _nearest_pole(root, c, alpha)
            if k not in found:
                found[k] = LocatedPole(k, float(root), float(theta))
    return sorted(found.values(), key=lambda p: p.energy)


def _nu_of_energy(E, c, alpha):
    return math.sqrt(max(-alpha * alpha / (2.0 * E) - 3.0 * c, 0.0))


def _energy_of_nu(nu, c, alpha):
    return -alpha * alpha / (2.0 * (nu * nu + 3.0 * c))


def _inverse_amplitude(E, theta, alpha, c):
    with np.errstate(divide="ignore", invalid="ignore"):
        g = fixed_energy_amplitude(theta, E, alpha, c, tol=1e-13, _check_poles=False).value
    if not math.isfinite(g):
        return 0.0  # landed exactly on a pole
    return 1.0 / g if g != 0 else math.inf


def _bisect(f, a, b, fa, xtol):
    for _ in range(200):
        m = 0.5 * (a + b)
        if abs(b - a) <= xtol or m in (a, b):
            break
        fm = f(m)
        if fm == 0.0:
            return m
        if (fm < 0) == (fa < 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


# --------------------------------------------------------------------------
# reports

@dataclass
class SpacingRow:
    label: str
    c: float
    n: int
    energy: float
    spacing: float | None
    deviation: float
    excluded: bool


@dataclass
class SpacingReport:
    rows: list = field(default_factory=list)
    exclusion_threshold: float = 1e-3

    def variant_rows(self, label):
        return [r for r in self.rows if r.label == label]

    def excluded_variants(self):
        return sorted({r.label for r in self.rows if r.excluded})


def level_spacing_report(variants, n_max, alpha=1.0, exclusion_threshold=1e-3):
    """Energies, spacings and relative deviations from the c = 0 spectrum.

    A variant is flagged ``excluded`` when any of its levels deviates from
    the physical spectrum by more than ``exclusion_threshold`` (relative);
    measured hydrogen levels agree with -1/(2n^2) far better than that.
    """
    variants = list(variants)
    if not variants:
        raise InvalidInputError("at least one variant is required")
    ref = spectrum(n_max, RTermVariant(0.0), alpha)
    report = SpacingReport(exclusion_threshold=exclusion_threshold)
    for v in variants:
        levels = spectrum(n_max, v, alpha)
        devs = [abs(e.energy - r.energy) / abs(r.energy) for e, r in zip(levels, ref)]
        excluded = max(devs) > exclusion_threshold
        for i, (e, d) in enumerate(zip(levels, devs)):
            spacing = levels[i + 1].energy - e.energy if i + 1 < len(levels) else None
            report.rows.append(SpacingRow(v.label, v.c, e.n, e.energy, spacing, d, excluded))
    return report
