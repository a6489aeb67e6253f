import math

import numpy as np
import pytest

from coulomb_sphere.errors import ConvergenceError, InvalidInputError, ResolutionError
from coulomb_sphere.geometry import EnergyContext
from coulomb_sphere.harmonics import s3_grid
from coulomb_sphere.sliced import (ModeCoefficients, R_UNIT_S3, SliceConfig, compose_slices,
                                   discrimination_report, extract_spectrum, kernel_to_modes,
                                   modes_to_kernel, scalar_curvature, short_time_kernel,
                                   slice_factor, slice_modes, theta_grid)
from coulomb_sphere.spectral import PREFACTOR_CONST, pseudotime_amplitude_cos

TWO_PI_SQ = 2 * math.pi**2
CTX = EnergyContext(-0.5)


def test_scalar_curvature():
    assert scalar_curvature(4, 1.0) == 6 == R_UNIT_S3
    assert scalar_curvature(4, 2.0) == 1.5
    assert scalar_curvature(3, 1.0) == 2


def test_slice_config_invariants():
    cfg = SliceConfig(0.01, num_slices=100, n_modes=4, grid_points=64)
    assert cfg.total_pseudotime == pytest.approx(1.0)
    with pytest.raises(InvalidInputError):
        SliceConfig(0.0)
    with pytest.raises(InvalidInputError):
        SliceConfig(-0.1)
    with pytest.raises(ResolutionError):
        SliceConfig(0.01, grid_points=31, n_modes=8)


def test_short_time_kernel_normalised():
    cfg = SliceConfig(0.02, with_measure_factor=False, n_modes=4)
    t, w = theta_grid(cfg.grid_points)
    total = 4 * math.pi * np.sum(w * short_time_kernel(t, cfg, CTX) * np.sin(t) ** 2)
    assert abs(total - 1) < 1e-10
    with pytest.raises(InvalidInputError):
        short_time_kernel(-0.1, cfg, CTX)


def test_identity_limit_without_measure_factor():
    cfg = SliceConfig(1e-5, with_measure_factor=False, n_modes=6, grid_points=2048)
    k = slice_modes(cfg, CTX).values()
    assert np.max(np.abs(k - 1)) < 1e-3


def test_character_orthogonality():
    t, w = theta_grid(512)
    chi = np.array([np.sin(n * t) / np.sin(t) for n in range(1, 17)])
    gram = 2 / math.pi * (chi * w * np.sin(t) ** 2) @ chi.T
    assert np.max(np.abs(gram - np.eye(16))) < 1e-10


def test_projection_of_exact_spectral_kernel():
    # pseudotime kernel at pE = 1 with the prefactor and exp(alpha^2 S/2) divided out
    eps = 0.1
    cfg = SliceConfig(eps, n_modes=8, grid_points=512)
    t, _ = theta_grid(cfg.grid_points)
    K = pseudotime_amplitude_cos(np.cos(t), eps, CTX).value
    K = K / (PREFACTOR_CONST * CTX.pE**3 * math.exp(0.5 * CTX.alpha**2 * eps))
    k = kernel_to_modes(K, cfg).values()
    n = np.arange(1, 9)
    assert np.max(np.abs(k / np.exp(-n * n * eps / 2) - 1)) < 1e-8


def test_constant_kernel_projects_to_first_mode():
    cfg = SliceConfig(0.1, n_modes=8)
    t, _ = theta_grid(cfg.grid_points)
    k = kernel_to_modes(np.full_like(t, 1 / TWO_PI_SQ), cfg).values()
    assert abs(k[0] - 1) < 1e-10
    assert np.max(np.abs(k[1:])) < 1e-10


def test_kernel_to_modes_detects_aliasing():
    cfg = SliceConfig(1e-7, n_modes=4, grid_points=16)
    with pytest.raises(ResolutionError):
        slice_modes(cfg, CTX)
    with pytest.raises(InvalidInputError):
        kernel_to_modes(np.ones(10), cfg)


def test_modes_round_trip():
    cfg = SliceConfig(0.1, n_modes=32, grid_points=512)
    t, _ = theta_grid(cfg.grid_points)
    K = short_time_kernel(t, cfg, CTX)
    back = modes_to_kernel(kernel_to_modes(K, cfg), t)
    assert np.max(np.abs(back - K)) / np.max(K) < 1e-8


def test_compose_slices_algebra():
    a = 0.03
    n = np.arange(1, 7)
    modes = ModeCoefficients.from_values(np.exp(-n * n * a))
    assert np.array_equal(compose_slices(modes, 1).values(), modes.values())
    assert np.allclose(compose_slices(modes, 40).values(), np.exp(-n * n * a * 40), rtol=1e-13)
    left = compose_slices(modes, 6)
    right = compose_slices(compose_slices(modes, 2), 3)
    assert np.array_equal(left.log_values(), right.log_values())
    with pytest.raises(InvalidInputError):
        compose_slices(modes, 0)


def test_compose_slices_handles_underflow_and_sign():
    modes = ModeCoefficients.from_values([0.5, -0.25, 1e-300])
    lv = compose_slices(modes, 1000).log_values()
    assert np.all(np.isfinite(lv)) and lv[2] < -600_000
    assert compose_slices(modes, 3).values()[1] == pytest.approx(-(0.25**3))
    assert compose_slices(modes, 2).values()[1] == pytest.approx(0.25**2)


def test_compose_matches_direct_convolution_on_sphere():
    # oracle: (K * K)(t) = ∫ K(angle(x, y)) K(angle(y, north)) dOmega(y), by S^3 quadrature
    cfg = SliceConfig(0.3, n_modes=24, grid_points=512, with_measure_factor=False)
    modes = slice_modes(cfg, CTX)
    pts, w = s3_grid(64)
    north_angle = np.arccos(np.clip(pts[:, 3], -1, 1))
    k_north = short_time_kernel(north_angle, cfg, CTX)
    for t in (0.0, 0.4, 1.1, 2.5):
        x = np.array([math.sin(t), 0.0, 0.0, math.cos(t)])
        k_x = short_time_kernel(np.arccos(np.clip(pts @ x, -1, 1)), cfg, CTX)
        direct = np.sum(w * k_x * k_north)
        via_modes = modes_to_kernel(compose_slices(modes, 2), t)
        assert abs(direct - via_modes) / abs(direct) < 1e-8


def test_measure_factor_and_c_term_are_common_factors():
    base = SliceConfig(0.02, with_measure_factor=False, n_modes=6)
    on = SliceConfig(0.02, with_measure_factor=True, n_modes=6)
    k_off, k_on = slice_modes(base, CTX).values(), slice_modes(on, CTX).values()
    ratio = k_on / k_off
    assert np.max(np.abs(ratio / math.exp(-0.02 * CTX.pE**2 / 2) - 1)) < 1e-12
    for c in (1 / 24, 1 / 12, 1 / 8):
        with_c = slice_modes(SliceConfig(0.02, n_modes=6, c=c), CTX).values()
        r = with_c / k_on
        assert np.max(np.abs(r / r[0] - 1)) < 1e-12
        assert r[0] == pytest.approx(math.exp(-3 * c * 0.02 * CTX.pE**2 / 2), rel=1e-12)
    assert slice_factor(on, CTX) == pytest.approx(math.exp(-0.01))


def test_epsilon_convergence_is_first_order():
    res = extract_spectrum((0.04, 0.02, 0.01, 0.005), n_modes=4)
    d = np.abs(np.diff(res.rates, axis=0))
    for n in range(1, 4):  # n = 1 is exact at every epsilon
        assert d[0, n] / d[1, n] >= 1.8 and d[1, n] / d[2, n] >= 1.8


def test_extraction_examples():
    on = extract_spectrum(n_modes=3)
    assert abs(on.level(1).energy + 0.5) < 5e-3
    assert abs(on.level(2).energy + 0.125) < 5e-3
    assert abs(extract_spectrum(c=1 / 12, n_modes=1).level(1).energy + 0.4) < 5e-3
    off = extract_spectrum(with_measure_factor=False, n_modes=3)
    assert off.level(1).singular
    assert abs(off.level(2).energy + 1 / 6) < 5e-3
    assert abs(off.level(3).energy + 1 / 16) < 5e-3


def test_extraction_scales_with_energy_and_coupling():
    res = extract_spectrum(ctx=EnergyContext(-2.0, alpha=2.0), n_modes=2)
    assert res.level(1).energy == pytest.approx(-2.0, abs=2e-2)
    assert res.level(2).energy == pytest.approx(-0.5, abs=5e-3)


def test_extraction_input_checks():
    with pytest.raises(InvalidInputError):
        extract_spectrum((0.02, 0.01))
    with pytest.raises(InvalidInputError):
        extract_spectrum((0.3, 0.2, 0.1), S=1.0)
    with pytest.raises(ConvergenceError) as info:
        extract_spectrum((1.0, 0.5, 0.1), n_modes=4)
    assert "rates" in info.value.diagnostics


def test_discrimination_report():
    rows = discrimination_report()
    by = {(r.variant, r.n): r for r in rows}
    for n in (1, 2, 3):
        assert by[("c=0", n)].deviation_percent < 1.0
    assert round(by[("c=1/8", 1)].deviation_percent, 1) == 27.3
    off1 = by[("no-measure-factor", 1)]
    assert off1.extracted is None and off1.note == "no n=1 bound state"
    assert by[("no-measure-factor", 2)].extracted == pytest.approx(-1 / 6, abs=5e-3)
