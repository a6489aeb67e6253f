"""Hyperspherical harmonics on S^3 from SU(2) representation matrices.

A point ``pi`` of S^3 is identified with the SU(2) matrix

    u = pi4 * 1 + i (pi1 sigma1 + pi2 sigma2 + pi3 sigma3)

and the harmonics of principal number ``n = 2j + 1`` are Clebsch-Gordan
contractions of the spin-j matrix elements ``D^j_{m1 m2}(u)``.  All spin
labels (j, m) are carried as *doubled* integers so label arithmetic is exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import InvalidInputError, ResolutionError

MAX_TWO_J = 64
TWO_PI_SQ = 2.0 * math.pi**2

_LOGFACT = np.array([math.lgamma(k + 1.0) for k in range(4 * MAX_TWO_J + 8)])


def twice(x) -> int:
    """Doubled integer for an integer or half-integer label (int, float, Fraction)."""
    t = Fraction(x) * 2
    if t.denominator != 1:
        raise InvalidInputError(f"{x!r} is not a half-integer")
    return int(t)


def _lf(k):
    if k < 0:
        raise ValueError("negative factorial argument")
    return _LOGFACT[k]


@dataclass(frozen=True)
class QuantumNumbers:
    """Hydrogen labels ``(n, l, m)`` with n >= 1, 0 <= l < n, |m| <= l."""

    n: int
    l: int
    m: int

    def __post_init__(self):
        n, l, m = self.n, self.l, self.m
        if not all(isinstance(v, (int, np.integer)) for v in (n, l, m)):
            raise InvalidInputError("quantum numbers must be integers")
        if n < 1 or not 0 <= l <= n - 1 or abs(m) > l:
            raise InvalidInputError(f"invalid quantum numbers (n, l, m) = {(n, l, m)}")

    @property
    def two_j(self):
        return self.n - 1


def quantum_numbers(n_max):
    """All valid ``QuantumNumbers`` with n <= n_max, in (n, l, m) order."""
    return [QuantumNumbers(n, l, m)
            for n in range(1, n_max + 1)
            for l in range(n)
            for m in range(-l, l + 1)]


@dataclass(frozen=True)
class SpinLabel:
    """Matrix-element label (j, m1, m2), stored doubled."""

    two_j: int
    two_m1: int
    two_m2: int

    def __post_init__(self):
        tj, a, b = self.two_j, self.two_m1, self.two_m2
        if tj < 0 or (tj - a) % 2 or (tj - b) % 2 or abs(a) > tj or abs(b) > tj:
            raise InvalidInputError(f"invalid spin label 2j={tj}, 2m1={a}, 2m2={b}")


# --------------------------------------------------------------------------
# SU(2)

def su2_from_array(points):
    """SU(2) entries ``(a, b, c, d)`` of ``u = [[a, b], [c, d]]`` for ``(..., 4)`` points."""
    points = np.asarray(points, dtype=float)
    p1, p2, p3, p4 = (points[..., k] for k in range(4))
    a = p4 + 1j * p3
    b = p2 + 1j * p1
    c = -p2 + 1j * p1
    d = p4 - 1j * p3
    return a, b, c, d


def su2_from_sphere(pi) -> np.ndarray:
    """2x2 unitary, unit-determinant matrix ``pi4 + i pi.sigma``."""
    a, b, c, d = su2_from_array(pi.as_array())
    return np.array([[a, b], [c, d]], dtype=complex)


# --------------------------------------------------------------------------
# Clebsch-Gordan

def clebsch_gordan(two_j1, two_m1, two_j2, two_m2, two_L, two_M) -> float:
    """Condon-Shortley coefficient ``(j1 m1; j2 m2 | L M)``, all labels doubled.

    Uses the Racah single-sum formula evaluated with log-factorials.
    Returns 0 for labels that are well formed but not coupled (M != m1 + m2,
    triangle violated, |m| > j).
    """
    labels = (two_j1, two_m1, two_j2, two_m2, two_L, two_M)
    if any(int(v) != v for v in labels):
        raise InvalidInputError("labels must be given as doubled integers")
    tj1, tm1, tj2, tm2, tL, tM = (int(v) for v in labels)
    if min(tj1, tj2, tL) < 0:
        raise InvalidInputError("negative angular momentum")
    if (tj1 - tm1) % 2 or (tj2 - tm2) % 2 or (tL - tM) % 2 or (tj1 + tj2 + tL) % 2:
        raise InvalidInputError(f"label parity mismatch in {labels}")
    if tM != tm1 + tm2 or abs(tm1) > tj1 or abs(tm2) > tj2 or abs(tM) > tL:
        return 0.0
    if tL < abs(tj1 - tj2) or tL > tj1 + tj2:
        return 0.0
    return _cg(tj1, tm1, tj2, tm2, tL, tM)


@lru_cache(maxsize=None)
def _cg(tj1, tm1, tj2, tm2, tL, tM):
    # integer combinations appearing in the Racah formula
    a = (tj1 + tj2 - tL) // 2
    b = (tj1 - tm1) // 2
    c = (tj2 + tm2) // 2
    d = (tL - tj2 + tm1) // 2
    e = (tL - tj1 - tm2) // 2
    log_pref = 0.5 * (
        math.log(tL + 1)
        + _lf((tL + tj1 - tj2) // 2) + _lf((tL - tj1 + tj2) // 2) + _lf(a)
        - _lf((tj1 + tj2 + tL) // 2 + 1)
        + _lf((tL + tM) // 2) + _lf((tL - tM) // 2)
        + _lf(b) + _lf((tj1 + tm1) // 2)
        + _lf((tj2 - tm2) // 2) + _lf(c)
    )
    kmin = max(0, -d, -e)
    kmax = min(a, b, c)
    total = 0.0
    for k in range(kmin, kmax + 1):
        log_den = _lf(k) + _lf(a - k) + _lf(b - k) + _lf(c - k) + _lf(d + k) + _lf(e + k)
        total += (-1.0) ** k * math.exp(log_pref - log_den)
    return total


@lru_cache(maxsize=None)
def cg_block(two_j, l, m):
    """``(2j+1, 2j+1)`` array of ``(j m1; j m2 | l m)`` indexed by (m1, m2) ascending."""
    dim = two_j + 1
    out = np.zeros((dim, dim))
    for i in range(dim):
        tm1 = -two_j + 2 * i
        tm2 = 2 * m - tm1
        if abs(tm2) <= two_j:
            out[i, (tm2 + two_j) // 2] = clebsch_gordan(two_j, tm1, two_j, tm2, 2 * l, 2 * m)
    out.setflags(write=False)
    return out


# --------------------------------------------------------------------------
# Wigner D

@lru_cache(maxsize=None)
def _d_terms(two_j):
    """Per-(m1, m2) list of (k, exponents, log-coefficient) for the polynomial sum."""
    terms = []
    for i in range(two_j + 1):
        jp = i                 # j + m1
        jm1 = two_j - i        # j - m1
        for k2 in range(two_j + 1):
            jp2 = k2           # j + m2
            jm2 = two_j - k2   # j - m2
            base = 0.5 * (_lf(jp) + _lf(jm1) + _lf(jp2) + _lf(jm2))
            # exponents of a, c, b, d: k, j+m2-k, j+m1-k, k-m1-m2
            lo = max(0, jp + jp2 - two_j)
            hi = min(jp2, jp)
            for k in range(lo, hi + 1):
                ec, eb, ed = jp2 - k, jp - k, k - (jp + jp2 - two_j)
                coef = base - (_lf(k) + _lf(ec) + _lf(eb) + _lf(ed))
                terms.append((i, k2, k, ec, eb, ed, math.exp(coef)))
    return tuple(terms)


def wigner_D_matrix(two_j, a, b, c, d):
    """Spin-j representation matrices of ``u = [[a, b], [c, d]]``.

    ``a``..``d`` may be arrays of a common shape ``S``; the result has shape
    ``S + (2j+1, 2j+1)`` with rows and columns ordered m = -j, ..., j.
    ``D(u v) = D(u) D(v)`` holds for this ordering.
    """
    if not 0 <= two_j <= MAX_TWO_J:
        raise InvalidInputError(f"2j = {two_j} outside [0, {MAX_TWO_J}]")
    a, b, c, d = np.broadcast_arrays(*(np.asarray(z, dtype=complex) for z in (a, b, c, d)))
    dim = two_j + 1
    out = np.zeros(a.shape + (dim, dim), dtype=complex)

    def powers(z):
        pw = [np.ones_like(z)]
        for _ in range(two_j):
            pw.append(pw[-1] * z)
        return pw

    pa, pb, pc, pd = powers(a), powers(b), powers(c), powers(d)
    for i, k2, k, ec, eb, ed, coef in _d_terms(two_j):
        out[..., i, k2] += coef * pa[k] * pc[ec] * pb[eb] * pd[ed]
    return out


def wigner_D(label: SpinLabel, u) -> complex:
    """Single matrix element ``D^j_{m1 m2}(u)``."""
    u = np.asarray(u, dtype=complex)
    D = wigner_D_matrix(label.two_j, u[0, 0], u[0, 1], u[1, 0], u[1, 1])
    return complex(D[(label.two_m1 + label.two_j) // 2, (label.two_m2 + label.two_j) // 2])


# --------------------------------------------------------------------------
# harmonics

def harmonics_block(n, points):
    """All ``Y_{n l m}`` at ``(N, 4)`` points as an ``(N, n^2)`` complex array.

    Columns run over (l, m) in lexicographic order, l = 0..n-1, m = -l..l.
    """
    if n < 1 or n - 1 > MAX_TWO_J:
        raise InvalidInputError(f"n = {n} out of range")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    two_j = n - 1
    D = wigner_D_matrix(two_j, *su2_from_array(pts))
    cgs = np.stack([cg_block(two_j, l, m) for l in range(n) for m in range(-l, l + 1)])
    return math.sqrt(n / TWO_PI_SQ) * np.einsum("pab,kab->pk", D, cgs)


def hyperspherical_Y(q: QuantumNumbers, pi) -> complex:
    """Orthonormal harmonic ``Y_{nlm}`` at a sphere point."""
    two_j = q.two_j
    D = wigner_D_matrix(two_j, *su2_from_array(pi.as_array()))
    return complex(math.sqrt(q.n / TWO_PI_SQ) * np.sum(cg_block(two_j, q.l, q.m) * D))


def hyperspherical_Y_array(q: QuantumNumbers, points):
    """``Y_{nlm}`` at an ``(N, 4)`` array of sphere points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    D = wigner_D_matrix(q.two_j, *su2_from_array(pts))
    return math.sqrt(q.n / TWO_PI_SQ) * np.einsum("pab,ab->p", D, cg_block(q.two_j, q.l, q.m))


_SMALL_SIN = 1e-6
_RECURRENCE_MAX_N = 64


def legendre4(n, cos_theta):
    """Four-dimensional Legendre analog ``sin(n t) / (n sin t)``, t = arccos(x).

    Works elementwise on arrays.  Where ``|sin t| < 1e-6`` the quotient is
    replaced by the Chebyshev form ``U_{n-1}(x) / n`` (n <= 64) or by a
    ratio of sinc functions, both of which are finite at t = 0.
    """
    if int(n) != n or n < 1:
        raise InvalidInputError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    x = np.clip(np.asarray(cos_theta, dtype=float), -1.0, 1.0)
    # P_n(-x) = (-1)^(n-1) P_n(x): evaluating at |x| keeps t in [0, pi/2],
    # away from the cancellation in sin(n t) near t = pi
    parity = np.where(x < 0, (-1.0) ** (n - 1), 1.0)
    ax = np.abs(x)
    t = np.arccos(ax)
    s = np.sin(t)
    out = np.empty_like(t)
    regular = s >= _SMALL_SIN
    with np.errstate(invalid="ignore", divide="ignore"):
        out[regular] = np.sin(n * t[regular]) / (n * s[regular])
    near = ~regular
    if np.any(near):
        if n <= _RECURRENCE_MAX_N:
            xn = ax[near]
            u_prev, u = np.ones_like(xn), 2.0 * xn
            if n == 1:
                u = u_prev
            for _ in range(n - 2):
                u_prev, u = u, 2.0 * xn * u - u_prev
            out[near] = u / n
        else:
            tn = t[near]
            out[near] = np.sinc(n * tn / np.pi) / np.sinc(tn / np.pi)
    out = parity * out
    return out if out.ndim else float(out)


def addition_theorem_residual(n, pi_b, pi_a) -> float:
    """``|sum_{lm} conj(Y(pi_b)) Y(pi_a) - n^2/(2 pi^2) P_n(cos t)|``."""
    yb = harmonics_block(n, pi_b.as_array())[0]
    ya = harmonics_block(n, pi_a.as_array())[0]
    lhs = np.vdot(yb, ya)
    rhs = n * n / TWO_PI_SQ * legendre4(n, np.clip(pi_b.dot(pi_a), -1.0, 1.0))
    return float(abs(lhs - rhs))


# --------------------------------------------------------------------------
# quadrature on S^3

MIN_RESOLUTION = 4


@dataclass(frozen=True)
class QuadratureResult:
    value: complex
    error: float


@lru_cache(maxsize=8)
def s3_grid(resolution):
    """Nodes ``(N, 4)`` and weights ``(N,)`` of the product rule on S^3.

    Hyperspherical coordinates (chi, beta, gamma) with
    ``pi4 = cos chi`` and ``pi_vec = sin chi (sin beta cos gamma,
    sin beta sin gamma, cos beta)``; Gauss-Legendre in chi and cos beta,
    uniform trapezoid in gamma.
    """
    if resolution < MIN_RESOLUTION:
        raise ResolutionError(f"resolution {resolution} below minimum {MIN_RESOLUTION}")
    xc, wc = np.polynomial.legendre.leggauss(resolution)
    chi = 0.5 * np.pi * (xc + 1.0)
    wchi = 0.5 * np.pi * wc * np.sin(chi) ** 2
    cb, wb = np.polynomial.legendre.leggauss(resolution)
    sb = np.sqrt(1.0 - cb * cb)
    gamma = 2.0 * np.pi * np.arange(resolution) / resolution
    wg = np.full(resolution, 2.0 * np.pi / resolution)

    CHI, B, G = np.meshgrid(np.arange(resolution), np.arange(resolution),
                            np.arange(resolution), indexing="ij")
    schi = np.sin(chi)[CHI]
    pts = np.stack([
        schi * sb[B] * np.cos(gamma)[G],
        schi * sb[B] * np.sin(gamma)[G],
        schi * cb[B],
        np.cos(chi)[CHI],
    ], axis=-1).reshape(-1, 4)
    w = (wchi[CHI] * wb[B] * wg[G]).reshape(-1)
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


def s3_quadrature(f, resolution=64) -> QuadratureResult:
    """Integrate ``f`` over S^3 with respect to the round measure (total 2 pi^2).

    ``f`` receives an ``(N, 4)`` array of points and returns ``N`` values.
    The error estimate is the change from the half-resolution rule.
    """
    pts, w = s3_grid(resolution)
    value = np.sum(w * np.asarray(f(pts)))
    coarse = max(resolution // 2, 2)
    if coarse >= MIN_RESOLUTION:
        cpts, cw = s3_grid(coarse)
        err = float(abs(value - np.sum(cw * np.asarray(f(cpts)))))
    else:
        err = float("inf")
    if np.iscomplexobj(value) and value.imag == 0:
        value = value.real
    return QuadratureResult(value=value.item() if hasattr(value, "item") else value, error=err)
