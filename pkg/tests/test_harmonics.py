import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sympy import Rational
from sympy.physics.quantum.cg import CG

from coulomb_sphere.errors import InvalidInputError, ResolutionError
from coulomb_sphere.geometry import SpherePoint4
from coulomb_sphere.harmonics import (QuantumNumbers, SpinLabel, addition_theorem_residual,
                                      clebsch_gordan, harmonics_block, hyperspherical_Y,
                                      legendre4, quantum_numbers, s3_grid, s3_quadrature,
                                      su2_from_array, su2_from_sphere, wigner_D,
                                      wigner_D_matrix)

TWO_PI_SQ = 2 * math.pi**2
RNG = np.random.default_rng(11)


def random_points(count, rng=RNG):
    x = rng.standard_normal((count, 4))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def random_su2(rng=RNG):
    x = random_points(1, rng)[0]
    return su2_from_sphere(SpherePoint4.from_array(x))


def as_abcd(u):
    return u[0, 0], u[0, 1], u[1, 0], u[1, 1]


sphere_vec = st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(
    lambda v: np.linalg.norm(v) > 1e-2)


# --- quantum numbers ---------------------------------------------------------

def test_quantum_number_ranges():
    assert len(quantum_numbers(4)) == 1 + 4 + 9 + 16
    for bad in [(0, 0, 0), (2, 2, 0), (3, 1, 2), (2, -1, 0)]:
        with pytest.raises(InvalidInputError):
            QuantumNumbers(*bad)
    assert QuantumNumbers(3, 2, -1).two_j == 2


def test_spin_label_parity():
    SpinLabel(1, 1, -1)
    with pytest.raises(InvalidInputError):
        SpinLabel(1, 0, 1)
    with pytest.raises(InvalidInputError):
        SpinLabel(2, 4, 0)


# --- SU(2) ----------------------------------------------------------------------

def test_su2_examples():
    assert np.allclose(su2_from_sphere(SpherePoint4((0, 0, 0), 1.0)), np.eye(2), atol=0)
    u = su2_from_sphere(SpherePoint4((0, 0, 1.0), 0.0))
    assert np.allclose(u, np.diag([1j, -1j]), atol=0)


def test_su2_unitary_unit_determinant():
    pts = random_points(1000)
    a, b, c, d = su2_from_array(pts)
    det = a * d - b * c
    assert np.max(np.abs(det - 1)) < 1e-12
    u = np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2)
    uu = np.einsum("nij,nkj->nik", u, u.conj())
    assert np.max(np.abs(uu - np.eye(2))) < 1e-12


# --- Clebsch-Gordan ---------------------------------------------------------------

def test_cg_examples():
    assert clebsch_gordan(0, 0, 0, 0, 0, 0) == 1.0
    assert clebsch_gordan(1, 1, 1, 1, 2, 2) == pytest.approx(1.0, abs=1e-15)
    assert clebsch_gordan(1, 1, 1, -1, 0, 0) == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    # selection rules give exact zeros
    assert clebsch_gordan(1, 1, 1, 1, 0, 0) == 0.0
    assert clebsch_gordan(2, 0, 2, 0, 6, 0) == 0.0


def test_cg_rejects_parity_mismatch():
    with pytest.raises(InvalidInputError):
        clebsch_gordan(1, 0, 1, 1, 2, 1)


def test_cg_against_sympy():
    worst = 0.0
    for tj in range(0, 7):
        for tL in range(0, 2 * tj + 1, 2):
            for tm1 in range(-tj, tj + 1, 2):
                for tm2 in range(-tj, tj + 1, 2):
                    tM = tm1 + tm2
                    if abs(tM) > tL:
                        continue
                    h = lambda x: Rational(x, 2)
                    ref = float(CG(h(tj), h(tm1), h(tj), h(tm2), h(tL), h(tM)).doit())
                    worst = max(worst, abs(clebsch_gordan(tj, tm1, tj, tm2, tL, tM) - ref))
    assert worst < 1e-13


def test_cg_orthogonality():
    for tj in range(0, 9):
        ms = range(-tj, tj + 1, 2)
        labels = [(tL, tM) for tL in range(0, 2 * tj + 1, 2) for tM in range(-tL, tL + 1, 2)]
        C = np.array([[clebsch_gordan(tj, a, tj, b, tL, tM) for a in ms for b in ms]
                      for tL, tM in labels])
        assert np.max(np.abs(C @ C.T - np.eye(len(labels)))) < 1e-10


# --- Wigner D -------------------------------------------------------------------

def test_wigner_D_trivial_cases():
    u = random_su2()
    assert wigner_D(SpinLabel(0, 0, 0), u) == pytest.approx(1.0)
    for tj in range(0, 6):
        D = wigner_D_matrix(tj, *as_abcd(np.eye(2, dtype=complex)))
        assert np.allclose(D, np.eye(tj + 1), atol=1e-15)


def test_wigner_D_rejects_large_j():
    with pytest.raises(InvalidInputError):
        wigner_D_matrix(66, *as_abcd(np.eye(2, dtype=complex)))


def test_wigner_D_spin_half_is_defining_rep():
    u = random_su2()
    D = wigner_D_matrix(1, *as_abcd(u))
    # rows/cols ordered m = -1/2, +1/2; the defining rep up to that ordering
    assert np.allclose(D, u[::-1, ::-1], atol=1e-15) or np.allclose(D, u, atol=1e-15)


def test_wigner_D_representation_property():
    worst = 0.0
    for _ in range(50):
        u, v = random_su2(), random_su2()
        for tj in range(0, 6):
            Du, Dv = wigner_D_matrix(tj, *as_abcd(u)), wigner_D_matrix(tj, *as_abcd(v))
            Duv = wigner_D_matrix(tj, *as_abcd(u @ v))
            worst = max(worst, np.max(np.abs(Duv - Du @ Dv)))
    assert worst < 1e-10


def test_wigner_D_unitary():
    u = random_su2()
    for tj in range(0, 21):
        D = wigner_D_matrix(tj, *as_abcd(u))
        assert np.max(np.abs(np.sum(np.abs(D) ** 2, axis=1) - 1)) < 1e-10
        assert np.max(np.abs(D @ D.conj().T - np.eye(tj + 1))) < 1e-10


def test_wigner_D_scalar_matches_matrix():
    u = random_su2()
    D = wigner_D_matrix(2, *as_abcd(u))
    for i, tm1 in enumerate(range(-2, 3, 2)):
        for k, tm2 in enumerate(range(-2, 3, 2)):
            assert wigner_D(SpinLabel(2, tm1, tm2), u) == pytest.approx(D[i, k], abs=1e-15)


# --- hyperspherical harmonics ----------------------------------------------------

def test_ground_state_harmonic_is_constant():
    q = QuantumNumbers(1, 0, 0)
    for x in random_points(5):
        assert hyperspherical_Y(q, SpherePoint4.from_array(x)) == pytest.approx(
            1 / math.sqrt(TWO_PI_SQ), abs=1e-15)


def test_block_matches_single_harmonics():
    pts = random_points(4)
    block = harmonics_block(3, pts)
    cols = [(l, m) for l in range(3) for m in range(-l, l + 1)]
    for i, x in enumerate(pts):
        for k, (l, m) in enumerate(cols):
            y = hyperspherical_Y(QuantumNumbers(3, l, m), SpherePoint4.from_array(x))
            assert y == pytest.approx(block[i, k], abs=1e-14)


def test_normalisation_up_to_n5():
    pts, w = s3_grid(64)
    for n in range(1, 6):
        Y = harmonics_block(n, pts)
        norms = np.sum(w[:, None] * np.abs(Y) ** 2, axis=0)
        assert np.max(np.abs(norms - 1)) < 1e-8


def test_gram_matrix_n4():
    pts, w = s3_grid(64)
    Y = np.hstack([harmonics_block(n, pts) for n in range(1, 5)])
    gram = (Y.conj().T * w) @ Y
    assert np.max(np.abs(gram - np.eye(30))) < 1e-8


def test_addition_theorem_random_pairs():
    pts = random_points(200)
    worst = 0.0
    for i in range(100):
        b, a = SpherePoint4.from_array(pts[2 * i]), SpherePoint4.from_array(pts[2 * i + 1])
        for n in range(1, 7):
            worst = max(worst, addition_theorem_residual(n, b, a))
    assert worst < 1e-10


def test_addition_theorem_coincident_and_n1():
    x = SpherePoint4.from_array(random_points(1)[0])
    for n in range(1, 7):
        total = np.sum(np.abs(harmonics_block(n, x.as_array()[None, :])) ** 2)
        assert total == pytest.approx(n * n / TWO_PI_SQ, rel=1e-13)
    y = SpherePoint4.from_array(random_points(1)[0])
    assert addition_theorem_residual(1, x, y) < 1e-16


@settings(max_examples=30, deadline=None)
@given(sphere_vec, sphere_vec, st.integers(1, 6))
def test_addition_theorem_property(vb, va, n):
    b = SpherePoint4.from_array(vb, normalize=True)
    a = SpherePoint4.from_array(va, normalize=True)
    assert addition_theorem_residual(n, b, a) < 1e-10


# --- legendre4 ---------------------------------------------------------------------

def test_legendre4_limits():
    for n in range(1, 40):
        assert legendre4(n, 1.0) == pytest.approx(1.0, abs=1e-15)
        assert legendre4(n, -1.0) == pytest.approx((-1.0) ** (n - 1), abs=1e-15)
    assert legendre4(3, -1.0) == pytest.approx(1.0)


def test_legendre4_n2_is_cos():
    x = np.linspace(-1, 1, 1001)
    assert np.max(np.abs(legendre4(2, x) - x)) < 1e-14


def test_legendre4_near_endpoints_against_mpmath():
    mpmath.mp.dps = 40
    for n in (1, 2, 5, 17, 64, 100):
        for t in (1e-5, 1e-6, 1e-7, 3e-8):
            for x in (math.cos(t), -math.cos(t)):
                theta = mpmath.acos(mpmath.mpf(x))
                ref = float(mpmath.sin(n * theta) / (n * mpmath.sin(theta)))
                assert legendre4(n, x) == pytest.approx(ref, rel=1e-12, abs=1e-14)


def test_legendre4_bounded():
    x = np.linspace(-1, 1, 10_000)
    for n in range(1, 65):
        assert np.max(np.abs(legendre4(n, x))) <= 1.0 + 1e-14


def test_legendre4_rejects_bad_n():
    with pytest.raises(InvalidInputError):
        legendre4(0, 0.3)


# --- quadrature ------------------------------------------------------------------

def test_quadrature_examples():
    assert s3_quadrature(lambda p: np.ones(len(p))).value == pytest.approx(TWO_PI_SQ, rel=1e-14)
    assert abs(s3_quadrature(lambda p: p[:, 3]).value) < 1e-13
    q = QuantumNumbers(2, 1, 0)
    from coulomb_sphere.harmonics import hyperspherical_Y_array
    res = s3_quadrature(lambda p: np.abs(hyperspherical_Y_array(q, p)) ** 2)
    assert res.value == pytest.approx(1.0, abs=1e-12)
    assert res.error < 1e-10


def test_quadrature_error_estimate_is_honest():
    f = lambda p: np.exp(3 * p[:, 0])
    ref = s3_quadrature(f, resolution=64).value
    coarse = s3_quadrature(f, resolution=8)
    assert abs(coarse.value - ref) <= coarse.error


def test_quadrature_rejects_low_resolution():
    with pytest.raises(ResolutionError):
        s3_quadrature(lambda p: np.ones(len(p)), resolution=2)
