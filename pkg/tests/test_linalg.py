import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from compdl.linalg import (Dft2Plan, chordal_distance, dft2_adjoint, dft2_forward, dft2_matrix,
                           frobenius_norm)
from oracles import naive_dft2


def test_impulse_is_flat():
    out = dft2_forward(np.array([1, 0, 0, 0]), Dft2Plan(2, 2))
    np.testing.assert_allclose(out, np.full(4, 0.5), atol=1e-15)


def test_constant_concentrates_at_dc():
    plan = Dft2Plan(2, 2)
    out = dft2_forward(np.ones(4), plan)
    np.testing.assert_allclose(out, [2, 0, 0, 0], atol=1e-15)
    np.testing.assert_allclose(dft2_adjoint(out, plan), np.ones(4), atol=1e-15)


@pytest.mark.parametrize("m,n", [(3, 4), (2, 3), (1, 5), (4, 1), (7, 7)])
def test_forward_matches_naive_matrix(rng, m, n):
    x = rng.normal(size=m * n) + 1j * rng.normal(size=m * n)
    f = naive_dft2(m, n)
    plan = Dft2Plan(m, n)
    np.testing.assert_allclose(dft2_forward(x, plan), f.conj().T @ x, atol=1e-10)
    np.testing.assert_allclose(dft2_adjoint(x, plan), f @ x, atol=1e-10)


def test_dft2_matrix_matches_naive():
    np.testing.assert_allclose(dft2_matrix(3, 4), naive_dft2(3, 4), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 32), st.integers(1, 32), st.integers(0, 2**32 - 1))
def test_round_trip(m, n, seed):
    r = np.random.default_rng(seed)
    x = r.normal(size=m * n) + 1j * r.normal(size=m * n)
    plan = Dft2Plan(m, n)
    back = dft2_adjoint(dft2_forward(x, plan), plan)
    assert np.linalg.norm(back - x) <= 1e-12 * np.linalg.norm(x)


@pytest.mark.parametrize("m,n", [(32, 32), (28, 28), (1, 1024), (16, 64)])
def test_round_trip_largest_sizes(rng, m, n):
    x = rng.normal(size=m * n) + 1j * rng.normal(size=m * n)
    plan = Dft2Plan(m, n)
    assert np.max(np.abs(dft2_adjoint(dft2_forward(x, plan), plan) - x)) < 1e-12


def test_real_result_for_conjugate_symmetric_spectrum(rng):
    m, n = 4, 6
    plan = Dft2Plan(m, n)
    spectrum = dft2_forward(rng.normal(size=m * n), plan)
    back = dft2_adjoint(spectrum, plan)
    assert np.max(np.abs(back.imag)) < 1e-10


def test_dimension_mismatch_reports_sizes():
    with pytest.raises(ValueError, match="6"):
        dft2_forward(np.ones(5), Dft2Plan(2, 3))
    with pytest.raises(ValueError):
        dft2_adjoint(np.ones(7), Dft2Plan(2, 3))
    with pytest.raises(ValueError):
        Dft2Plan(0, 3)


def test_frobenius_examples(rng):
    assert frobenius_norm(np.eye(4)) == pytest.approx(2.0)
    assert frobenius_norm(np.zeros((3, 3))) == 0.0
    a = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
    u = naive_dft2(3, 4)
    assert frobenius_norm(u.conj().T @ a @ u) == pytest.approx(frobenius_norm(a), abs=1e-10)


def test_chordal_examples(rng):
    a = rng.normal(size=(3, 8))
    assert chordal_distance(a, a) == 0.0
    assert chordal_distance(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])) == pytest.approx(np.sqrt(2) / 2)
    with pytest.raises(ValueError):
        chordal_distance(np.ones((2, 3)), np.ones((3, 2)))


def _unit_rows(r, s, d):
    a = r.normal(size=(s, d))
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def test_chordal_bound_and_symmetry(rng):
    for _ in range(100):
        s = int(rng.integers(1, 6))
        d = int(rng.integers(s, 12))
        a, b = _unit_rows(rng, s, d), _unit_rows(rng, s, d)
        dist = chordal_distance(a, b)
        gap = frobenius_norm(a - b)
        assert dist <= s * gap + 1e-12
        # the tighter sqrt(s) constant also holds for unit-norm rows
        assert dist <= np.sqrt(s) * gap + 1e-12
        assert dist == pytest.approx(chordal_distance(b, a), abs=1e-12)


def test_chordal_zero_iff_same_gram(rng):
    a = np.linalg.qr(rng.normal(size=(6, 3)))[0].T
    q = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    assert chordal_distance(a, q @ a) < 1e-10  # same row space, different basis
    b = np.linalg.qr(rng.normal(size=(6, 3)))[0].T
    assert chordal_distance(a, b) > 1e-3
