"""Classical side: momentum-space eikonal, its geodesics, and Kepler orbits.

The reparametrisation-invariant action of a momentum-space curve is

    A[p] = 2 alpha ∫ |dp| / (p^2 + pE^2),

a length under the conformal metric 4 |dp|^2 / (p^2 + pE^2)^2 (scaled by
alpha/2).  That metric is 1/pE^2 times the round metric of S^3 pulled back
by the stereographic map, so minimal actions equal ``(alpha/pE) * angle``.

For a piecewise-linear path the integral over each straight segment
p0 -> p1 has the closed form

    ∫ |dp| / (p^2 + pE^2) = (L / Delta) atan2(Delta, p0.p1 + pE^2),
    Delta^2 = |p0 x p1|^2 + pE^2 L^2,   L = |p1 - p0|,

which is what :func:`eikonal_action` sums.  Splitting a segment therefore
leaves the action unchanged up to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import CollisionError, ConvergenceError, InvalidInputError
from .geometry import EnergyContext, as_momentum, cos_invariant_angle, invariant_angle


class MomentumPath:
    """Piecewise-linear curve in momentum space; zero-length segments dropped."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 1:
            raise InvalidInputError("a path needs an (N, 3) array of momenta")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("path momenta must be finite")
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.any(np.diff(pts, axis=0) != 0.0, axis=1)
        self.points = pts[keep]
        self.points.setflags(write=False)

    def __len__(self):
        return len(self.points)

    def refined(self, factor):
        """Same curve with every segment split into ``factor`` equal pieces."""
        p = self.points
        if len(p) < 2:
            return MomentumPath(p)
        s = np.arange(factor) / factor
        pieces = p[:-1, None, :] + s[None, :, None] * (p[1:] - p[:-1])[:, None, :]
        return MomentumPath(np.vstack([pieces.reshape(-1, 3), p[-1:]]))


def _segment_integrals(p0, p1, pE):
    """∫ |dp| / (p^2 + pE^2) over straight segments, vectorised."""
    d = p1 - p0
    L = np.linalg.norm(d, axis=-1)
    cross = np.cross(p0, p1)
    delta = np.sqrt(np.sum(cross * cross, axis=-1) + pE * pE * L * L)
    w = np.sum(p0 * p1, axis=-1) + pE * pE
    with np.errstate(invalid="ignore", divide="ignore"):
        out = L / delta * np.arctan2(delta, w)
    return np.where(L > 0, out, 0.0)


def _segment_integrals_grad(p0, p1, pE):
    """Values and gradients (w.r.t. p0 and p1) of :func:`_segment_integrals`."""
    e2 = pE * pE
    d = p1 - p0
    L = np.linalg.norm(d, axis=-1)
    cross = np.cross(p0, p1)
    delta2 = np.sum(cross * cross, axis=-1) + e2 * L * L
    delta = np.sqrt(delta2)
    w = np.sum(p0 * p1, axis=-1) + e2
    th = np.arctan2(delta, w)
    F = L * th / delta

    p0sq = np.sum(p0 * p0, axis=-1)[:, None]
    p1sq = np.sum(p1 * p1, axis=-1)[:, None]
    dot = np.sum(p0 * p1, axis=-1)[:, None]
    u = d / L[:, None]
    # d(Delta) and d(w), d(L) w.r.t. p0 / p1
    dD0 = (p1sq * p0 - dot * p1 - e2 * d) / delta[:, None]
    dD1 = (p0sq * p1 - dot * p0 + e2 * d) / delta[:, None]
    rad = (delta2 + w * w)[:, None]
    dth0 = (w[:, None] * dD0 - delta[:, None] * p1) / rad
    dth1 = (w[:, None] * dD1 - delta[:, None] * p0) / rad
    a = (th / delta)[:, None]
    b = (L / delta)[:, None]
    c = (L * th / delta2)[:, None]
    g0 = -a * u + b * dth0 - c * dD0
    g1 = a * u + b * dth1 - c * dD1
    return F, g0, g1


def eikonal_action(path: MomentumPath, ctx: EnergyContext) -> float:
    """Action ``2 alpha ∫ |dp|/(p^2 + pE^2)`` of a piecewise-linear path."""
    p = path.points
    if len(p) < 2:
        return 0.0
    return float(2.0 * ctx.alpha * np.sum(_segment_integrals(p[:-1], p[1:], ctx.pE)))


def eikonal_action_midpoint(path: MomentumPath, ctx: EnergyContext) -> float:
    """Midpoint-rule discretisation ``sum 2 alpha |dp_i| / (pbar_i^2 + pE^2)``."""
    p = path.points
    if len(p) < 2:
        return 0.0
    d = np.linalg.norm(np.diff(p, axis=0), axis=1)
    mid = 0.5 * (p[1:] + p[:-1])
    return float(2.0 * ctx.alpha * np.sum(d / (np.sum(mid * mid, axis=1) + ctx.pE**2)))


def geodesic_action(p_a, p_b, ctx: EnergyContext) -> float:
    """Closed-form minimal action ``(alpha / pE) * angle``."""
    return ctx.alpha / ctx.pE * invariant_angle(p_b, p_a, ctx)


# --------------------------------------------------------------------------
# minimisation

@dataclass
class MinimizationResult:
    action: float
    path: MomentumPath
    initial_action: float
    iterations: int
    grad_norm: float
    restarts: int = 0


def _action_and_grad(interior, p_a, p_b, pE, alpha):
    pts = np.vstack([p_a, interior, p_b])
    F, g0, g1 = _segment_integrals_grad(pts[:-1], pts[1:], pE)
    grad = g1[:-1] + g0[1:]
    return 2.0 * alpha * float(np.sum(F)), 2.0 * alpha * grad


def _tangents(pts):
    """Unit tangents at interior points (central differences)."""
    t = pts[2:] - pts[:-2]
    return t / np.linalg.norm(t, axis=1, keepdims=True)


def _normal_part(v, tangents):
    return v - np.sum(v * tangents, axis=1, keepdims=True) * tangents


def _metric_laplacian_solve(pts, rhs, pE, alpha):
    """Solve with the tridiagonal second variation of the path length.

    Segment i contributes stiffness ``rho_i / l_i`` with metric weight
    ``rho = 2 alpha / (p^2 + pE^2)`` at the segment midpoint; this is the
    Hessian of the action for normal displacements up to curvature terms.
    """
    seg = np.diff(pts, axis=0)
    ell = np.linalg.norm(seg, axis=1)
    mid = 0.5 * (pts[1:] + pts[:-1])
    rho = 2.0 * alpha / (np.sum(mid * mid, axis=1) + pE * pE)
    k = rho / ell
    m = len(pts) - 2
    ab = np.zeros((3, m))
    ab[1] = k[:-1] + k[1:]
    ab[0, 1:] = -k[1:-1]
    ab[2, :-1] = -k[1:-1]
    return solve_banded((1, 1), ab, rhs)


def _reparametrize(pts, pE):
    """Redistribute points to equal metric arc length along the polyline."""
    seg = _segment_integrals(pts[:-1], pts[1:], pE)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    target = np.linspace(0.0, cum[-1], len(pts))
    idx = np.clip(np.searchsorted(cum, target[1:-1], side="right") - 1, 0, len(seg) - 1)
    frac = (target[1:-1] - cum[idx]) / seg[idx]
    out = pts.copy()
    out[1:-1] = pts[idx] + frac[:, None] * (pts[idx + 1] - pts[idx])
    return out


def minimize_eikonal(p_a, p_b, ctx: EnergyContext, n_points=129, tol=1e-9,
                     max_iter=2000, seed=0) -> MinimizationResult:
    """Minimise the action over paths with fixed endpoints.

    Starts from the straight segment with ``n_points`` points and runs
    gradient descent with Armijo backtracking on the interior points.
    Moving a point along the path barely changes the action, so the
    gradient is restricted to directions normal to the path, preconditioned
    by the path's metric Laplacian, and the points are redistributed to
    equal metric spacing whenever that spacing drifts.  Converged when the
    max-norm of the normal gradient drops below ``tol``.  If the first
    attempt stalls, one restart from a randomly perturbed straight line
    (``seed``) is tried.

    Raises
    ------
    InvalidInputError
        If the endpoints coincide or are antipodal on S^3 (no unique geodesic).
    ConvergenceError
        If neither attempt converges; ``diagnostics['grad_norm']`` holds the
        final gradient norm.
    """
    p_a, p_b = as_momentum(p_a), as_momentum(p_b)
    if np.array_equal(p_a, p_b):
        raise InvalidInputError("endpoints coincide")
    if invariant_angle(p_a, p_b, ctx) > math.pi - 1e-6:
        raise InvalidInputError("antipodal endpoints: geodesic is not unique")
    if n_points < 3:
        raise InvalidInputError("need at least 3 points")

    s = np.linspace(0.0, 1.0, n_points)[:, None]
    straight = p_a + s * (p_b - p_a)
    initial = eikonal_action(MomentumPath(straight), ctx)

    rng = np.random.default_rng(seed)
    last = None
    for attempt in range(2):
        pts = straight.copy()
        if attempt:
            scale = 0.05 * np.linalg.norm(p_b - p_a)
            pts[1:-1] += scale * np.sin(np.pi * s[1:-1]) * rng.standard_normal((n_points - 2, 3))
        pts = _reparametrize(pts, ctx.pE)
        pts, gnorm, ok, it = _descend(pts, ctx, tol, max_iter)
        if ok:
            path = MomentumPath(pts)
            return MinimizationResult(eikonal_action(path, ctx), path, initial, it, gnorm, attempt)
        last = (gnorm, it)
    raise ConvergenceError("eikonal minimisation did not converge",
                           {"grad_norm": last[0], "iterations": last[1]})


def _descend(pts, ctx, tol, max_iter):
    pE, alpha = ctx.pE, ctx.alpha
    p_a, p_b = pts[0], pts[-1]
    f, g = _action_and_grad(pts[1:-1], p_a, p_b, pE, alpha)
    gn = _normal_part(g, _tangents(pts))
    stalled = 0
    for it in range(1, max_iter + 1):
        gnorm = float(np.max(np.abs(gn)))
        if gnorm < tol:
            return pts, gnorm, True, it
        direction = _normal_part(_metric_laplacian_solve(pts, gn, pE, alpha), _tangents(pts))
        slope = float(np.sum(g * direction))
        step = 1.0
        while step >= 1e-12:
            trial = pts.copy()
            trial[1:-1] -= step * direction
            f_new, g_new = _action_and_grad(trial[1:-1], p_a, p_b, pE, alpha)
            if np.isfinite(f_new) and f_new <= f - 1e-4 * step * max(slope, 0.0):
                break
            step *= 0.5
        else:
            stalled += 1
            if stalled > 3:
                return pts, gnorm, False, it
            pts = _reparametrize(pts, pE)
            f, g = _action_and_grad(pts[1:-1], p_a, p_b, pE, alpha)
            gn = _normal_part(g, _tangents(pts))
            continue
        stalled = 0
        pts, f, g = trial, f_new, g_new
        seg = _segment_integrals(pts[:-1], pts[1:], pE)
        if seg.max() > 1.2 * seg.min():
            pts = _reparametrize(pts, pE)
            f, g = _action_and_grad(pts[1:-1], p_a, p_b, pE, alpha)
        gn = _normal_part(g, _tangents(pts))
    return pts, float(np.max(np.abs(gn))), False, max_iter


# --------------------------------------------------------------------------
# Kepler orbits

@dataclass(frozen=True)
class KeplerState:
    position: np.ndarray
    momentum: np.ndarray
    time: float


class KeplerTrajectory:
    """Sampled bound orbit; indexing yields :class:`KeplerState` records."""

    def __init__(self, times, positions, momenta, E, L, alpha):
        self.times = times
        self.positions = positions
        self.momenta = momenta
        self.E = E
        self.L = L
        self.alpha = alpha

    def __len__(self):
        return len(self.times)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return KeplerTrajectory(self.times[i], self.positions[i], self.momenta[i],
                                    self.E, self.L, self.alpha)
        return KeplerState(self.positions[i], self.momenta[i], float(self.times[i]))

    def energies(self):
        r = np.linalg.norm(self.positions, axis=1)
        return 0.5 * np.sum(self.momenta**2, axis=1) - self.alpha / r


def kepler_period(E, alpha=1.0):
    a = alpha / (-2.0 * E)
    return 2.0 * math.pi * a**1.5 / math.sqrt(alpha)


# fourth-order triple-jump composition of the leapfrog step
_CBRT2 = 2.0 ** (1.0 / 3.0)
_YOSHIDA = (1.0 / (2.0 - _CBRT2), -_CBRT2 / (2.0 - _CBRT2), 1.0 / (2.0 - _CBRT2))


def simulate_kepler(E, L, duration, dt, ctx: EnergyContext | None = None,
                    method="yoshida4", collision_radius=1e-8, sample_every=1):
    """Integrate a planar bound orbit of energy ``E`` and angular momentum ``L``.

    Starts at pericentre on the +x axis moving in +y.  ``method`` is
    ``"leapfrog"`` (kick-drift-kick) or ``"yoshida4"`` (three leapfrog
    substeps composed to fourth order; still symplectic).  Positions and
    momenta are returned as 3-vectors with zero z component.
    """
    alpha = ctx.alpha if ctx is not None else 1.0
    if not E < 0:
        raise InvalidInputError("bound orbits need E < 0")
    L_max = alpha / math.sqrt(-2.0 * E)
    if not 0.0 < L <= L_max * (1.0 + 1e-12):
        raise InvalidInputError(f"need 0 < L <= {L_max}, got {L}")
    if not (duration > 0 and dt > 0):
        raise InvalidInputError("duration and dt must be positive")
    if method == "leapfrog":
        subs = (1.0,)
    elif method == "yoshida4":
        subs = _YOSHIDA
    else:
        raise InvalidInputError(f"unknown method {method!r}")

    disc = max(alpha * alpha + 2.0 * E * L * L, 0.0)
    r_peri = (alpha - math.sqrt(disc)) / (-2.0 * E)
    x = np.array([r_peri, 0.0])
    p = np.array([0.0, L / r_peri])

    def accel(x):
        r = math.hypot(x[0], x[1])
        if r < collision_radius:
            raise CollisionError("orbit hit the collision radius", {"r": r})
        return -alpha * x / r**3

    n_steps = int(round(duration / dt))
    n_out = n_steps // sample_every + 1
    times = np.empty(n_out)
    xs = np.zeros((n_out, 3))
    ps = np.zeros((n_out, 3))
    times[0], xs[0, :2], ps[0, :2] = 0.0, x, p
    a = accel(x)
    j = 1
    for step in range(1, n_steps + 1):
        for w in subs:
            h = w * dt
            p = p + 0.5 * h * a
            x = x + h * p
            a = accel(x)
            p = p + 0.5 * h * a
        if step % sample_every == 0:
            times[j], xs[j, :2], ps[j, :2] = step * dt, x, p
            j += 1
    return KeplerTrajectory(times[:j], xs[:j], ps[:j], E, L, alpha)


def fit_circle(points2d):
    """Algebraic least-squares circle; returns (center, radius, max residual)."""
    pts = np.asarray(points2d, dtype=float)
    A = np.column_stack([2.0 * pts, np.ones(len(pts))])
    b = np.sum(pts * pts, axis=1)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    center = sol[:2]
    radius = math.sqrt(sol[2] + center @ center)
    resid = np.abs(np.linalg.norm(pts - center, axis=1) - radius)
    return center, radius, float(np.max(resid))


def hodograph_angle(momenta, ctx: EnergyContext):
    """Accumulated S^3 angle swept by consecutive momentum samples."""
    p = np.asarray(momenta, dtype=float)
    cos_t = np.clip(cos_invariant_angle(p[1:], p[:-1], ctx.pE), -1.0, 1.0)
    return float(np.sum(np.arccos(cos_t)))


@dataclass(frozen=True)
class EikonalComparison:
    force_form: float      # -∫ x . dp
    metric_form: float     # 2 alpha ∫ |dp| / (p^2 + pE^2)

    @property
    def difference(self):
        return self.force_form - self.metric_form

    @property
    def relative_difference(self):
        return abs(self.difference) / max(abs(self.metric_form), 1e-300)


def eikonal_along_orbit(traj: KeplerTrajectory, ctx: EnergyContext) -> EikonalComparison:
    """Both discretisations of the orbit's eikonal.

    ``-sum dp_i . xbar_i`` (trapezoidal positions) and the exact-segment
    metric action of the sampled momentum trace.
    """
    p, x = traj.momenta, traj.positions
    if len(p) < 2:
        return EikonalComparison(0.0, 0.0)
    dp = np.diff(p, axis=0)
    xbar = 0.5 * (x[1:] + x[:-1])
    force = -float(np.sum(dp * xbar))
    metric = eikonal_action(MomentumPath(p), ctx)
    return EikonalComparison(force, metric)


def energy_radius(p, ctx: EnergyContext):
    """Radius fixed by energy conservation, ``r = 2 alpha / (p^2 + pE^2)``."""
    p = np.asarray(p, dtype=float)
    return 2.0 * ctx.alpha / (np.sum(p * p, axis=-1) + ctx.pE**2)
