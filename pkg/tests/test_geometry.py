import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coulomb_sphere.errors import InvalidInputError, PointAtInfinityError
from coulomb_sphere.geometry import (EV_PER_UNIT, EnergyContext, SpherePoint4, invariant_angle,
                                     measure_density, metric_factor, project, total_measure,
                                     unproject)

CTX = EnergyContext(-0.5)
finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
momentum = st.tuples(finite, finite, finite).map(np.array)
energy = st.floats(-5.0, -0.01)


def test_energy_context_derived_fields():
    ctx = EnergyContext(-0.32, alpha=2.0)
    assert ctx.pE == pytest.approx(0.8, abs=1e-15)
    assert ctx.mu * ctx.pE**2 == pytest.approx(1.0, abs=1e-15)
    assert ctx.energy_unit_eV == EV_PER_UNIT
    assert EnergyContext.from_pE(0.8).E == pytest.approx(-0.32, abs=1e-15)


@pytest.mark.parametrize("E,alpha", [(0.0, 1.0), (0.1, 1.0), (-1.0, 0.0), (math.nan, 1.0)])
def test_energy_context_rejects_bad_input(E, alpha):
    with pytest.raises(InvalidInputError):
        EnergyContext(E, alpha)


def test_sphere_point_rejects_off_sphere():
    with pytest.raises(InvalidInputError):
        SpherePoint4((0.0, 0.0, 0.0), 0.5)
    pt = SpherePoint4.from_array([0.0, 0.0, 3.0, 4.0], normalize=True)
    assert pt.pi4 == pytest.approx(0.8)


def test_project_special_points():
    south = project(np.zeros(3), CTX)
    assert south.pi4 == -1.0 and np.all(south.pi_vec == 0.0)
    eq = project(np.array([0.0, CTX.pE, 0.0]), CTX)
    assert eq.pi4 == pytest.approx(0.0, abs=1e-15)
    assert np.linalg.norm(eq.pi_vec) == pytest.approx(1.0, abs=1e-15)
    far = project(np.array([1e6 * CTX.pE, 0.0, 0.0]), CTX)
    assert abs(far.pi4 - 1.0) < 1e-11


def test_project_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        project(np.array([np.inf, 0.0, 0.0]), CTX)


@given(momentum, energy)
def test_project_unit_norm(p, E):
    x = project(p, EnergyContext(E)).as_array()
    assert abs(x @ x - 1.0) < 1e-12


def test_unproject_south_pole_and_infinity():
    assert np.all(unproject(SpherePoint4((0.0, 0.0, 0.0), -1.0), CTX) == 0.0)
    with pytest.raises(PointAtInfinityError):
        unproject(SpherePoint4((0.0, 0.0, 0.0), 1.0), CTX)


def test_round_trip_random_log_uniform():
    rng = np.random.default_rng(7)
    for E in (-0.5, -2.0, -0.02):
        ctx = EnergyContext(E)
        worst = 0.0
        for _ in range(1000):
            d = rng.standard_normal(3)
            p = d / np.linalg.norm(d) * ctx.pE * 10 ** rng.uniform(-3, 3)
            back = unproject(project(p, ctx), ctx)
            worst = max(worst, np.linalg.norm(back - p) / np.linalg.norm(p))
        assert worst < 1e-11


@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_project_unproject_on_sphere(v):
    v = np.array(v)
    if np.linalg.norm(v) < 1e-3:
        return
    pt = SpherePoint4.from_array(v, normalize=True)
    if pt.pi4 > 0.999:
        return
    again = project(unproject(pt, CTX), CTX).as_array()
    assert np.max(np.abs(again - pt.as_array())) < 1e-12


def test_invariant_angle_examples():
    p = np.array([0.3, -0.2, 0.9])
    assert invariant_angle(p, p, CTX) == pytest.approx(0.0, abs=1e-7)
    pa = np.zeros(3)
    pb = np.array([0.0, 0.0, CTX.pE])
    assert invariant_angle(pb, pa, CTX) == pytest.approx(math.pi / 2, abs=1e-15)
    a = np.array([CTX.pE, 0.0, 0.0])
    assert invariant_angle(-a, a, CTX) == pytest.approx(math.pi, abs=1e-7)


@settings(max_examples=200)
@given(momentum, momentum, energy)
def test_invariant_angle_matches_sphere_dot_and_is_symmetric(pb, pa, E):
    ctx = EnergyContext(E)
    direct = math.acos(max(-1.0, min(1.0, project(pb, ctx).dot(project(pa, ctx)))))
    t = invariant_angle(pb, pa, ctx)
    assert abs(math.cos(t) - math.cos(direct)) < 1e-12
    # arccos has condition number 1/sin(t), so angles are compared where that is modest
    if math.sin(direct) > 1e-3:
        assert abs(t - direct) < 1e-12
    assert invariant_angle(pa, pb, ctx) == t


def test_measure_density_values():
    assert measure_density(np.zeros(3), CTX) == pytest.approx(8.0 / CTX.pE**3)
    assert measure_density(np.array([CTX.pE, 0, 0]), CTX) == pytest.approx(1.0 / CTX.pE**3)


@pytest.mark.parametrize("E", [-0.5, -0.125, -3.0])
def test_measure_total_surface(E):
    total = total_measure(EnergyContext(E))
    assert abs(total - 2 * math.pi**2) / (2 * math.pi**2) < 1e-6


@given(momentum, energy)
def test_metric_and_measure_identity(p, E):
    ctx = EnergyContext(E)
    lhs = metric_factor(p, ctx) ** 1.5 * ctx.pE**3
    assert lhs == pytest.approx(measure_density(p, ctx), rel=1e-12)


def test_metric_factor_values():
    assert metric_factor(np.zeros(3), CTX) == pytest.approx(4.0 / CTX.pE**4)
    assert metric_factor(np.array([0, CTX.pE, 0]), CTX) == pytest.approx(1.0 / CTX.pE**4)


def test_metric_factor_is_pullback_of_round_metric():
    rng = np.random.default_rng(3)
    for E in (-0.5, -1.7):
        ctx = EnergyContext(E)
        for _ in range(20):
            p = rng.standard_normal(3) * ctx.pE
            d = rng.standard_normal(3)
            dp = 1e-4 * ctx.pE * d / np.linalg.norm(d)
            chord = project(p + dp, ctx).as_array() - project(p, ctx).as_array()
            # midpoint evaluation makes the comparison second-order accurate
            lhs = metric_factor(p + 0.5 * dp, ctx) * (dp @ dp) * ctx.pE**2
            assert abs(lhs - chord @ chord) / lhs < 1e-6
