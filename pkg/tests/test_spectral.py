import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from bundle_spectra.bundle import flat_bundle_from_representation, landau_line_bundle, trivial_bundle
from bundle_spectra.errors import ValidationError
from bundle_spectra.geometry import ball, build_circle, build_flat_torus
from bundle_spectra.spectral import (SymmetricOperator, eigs, neumann_ball_operator, rayleigh, rough_laplacian,
                                     spectrum_to_csv)

from oracles import circle_bloch, cycle_spectrum, landau_lambda1, path3_spectrum, rotation, torus_two_angle_lambda1


def test_path3_eigenvalues():
    K = np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
    res = eigs(SymmetricOperator(K, np.ones(3)), 3)
    np.testing.assert_allclose(res.eigenvalues, path3_spectrum(), atol=1e-12)
    V = res.eigenvectors
    np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-12)


def test_trivial_circle_is_scaled_cycle():
    m = build_circle(1.0, 400)
    res = eigs(rough_laplacian(trivial_bundle(m, 2)), 12)
    expect = cycle_spectrum(400, 2)[:12] * 400**2
    np.testing.assert_allclose(res.eigenvalues, expect, rtol=1e-9, atol=1e-8)
    assert res.residuals.max() <= 1e-8


@pytest.mark.parametrize("phi", [0.1, 0.7, 1.9, 3.0])
def test_twisted_circle_matches_bloch(phi):
    m = build_circle(1.0, 400)
    b = flat_bundle_from_representation(m, [rotation(phi)])
    res = eigs(rough_laplacian(b), 10)
    # absolute error of a dense eigensolve scales with the operator norm (~6.4e5)
    np.testing.assert_allclose(res.eigenvalues, circle_bloch(phi, 1.0, 400)[:10], rtol=1e-9, atol=1e-8)
    assert res.eigenvalues[0] == pytest.approx(phi**2, rel=1e-4)


def test_sparse_path_agrees_with_dense():
    m = build_circle(1.0, 400)
    op = rough_laplacian(flat_bundle_from_representation(m, [rotation(0.7)]))
    dense = eigs(op, 8)
    sparse = eigs(op, 8, dense_limit=0)
    np.testing.assert_allclose(sparse.eigenvalues, dense.eigenvalues, rtol=1e-9)


def test_flat_torus_two_angles():
    m = build_flat_torus(1.0, 1.0, 64, 64)
    b = flat_bundle_from_representation(m, [rotation(0.3), rotation(0.7)])
    lam = eigs(rough_laplacian(b), 2).eigenvalues
    assert lam[0] == pytest.approx(torus_two_angle_lambda1(0.3, 0.7), rel=1e-3)


def test_landau_lowest_level():
    m = build_flat_torus(1.0, 1.0, 64, 64)
    lam = eigs(rough_laplacian(landau_line_bundle(m, 1)), 4).eigenvalues
    # lowest level is 2-fold as a real rank-2 bundle
    assert lam[0] == pytest.approx(landau_lambda1(1), rel=5e-3)
    assert lam[1] == pytest.approx(lam[0], rel=1e-8)


def test_neumann_ball_is_path():
    m = build_circle(1.0, 400)
    b = flat_bundle_from_representation(m, [rotation(1.1)])
    B = ball(m, 17, 0.05)
    res = eigs(neumann_ball_operator(b, B), 6)
    k = np.arange(3)
    path = 4 * 400**2 * np.sin(k * np.pi / (2 * B.members.size)) ** 2
    np.testing.assert_allclose(res.eigenvalues, np.repeat(path, 2), rtol=1e-9, atol=1e-7)
    with pytest.raises(ValidationError):
        neumann_ball_operator(b, ball(m, 0, 0.002))


def test_eig_count_guard():
    with pytest.raises(ValidationError):
        eigs(SymmetricOperator(np.eye(2), np.ones(2)), 3)


def test_csv_layout():
    res = eigs(SymmetricOperator(np.diag([2.0, 1.0]), np.ones(2)), 2)
    lines = spectrum_to_csv(res).splitlines()
    assert lines[0] == "index,eigenvalue,residual"
    assert lines[1].startswith("1,1.0,")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-3.1, 3.1))
def test_rayleigh_bounded_below(seed, phi):
    m = build_circle(1.0, 40)
    op = rough_laplacian(flat_bundle_from_representation(m, [rotation(phi)]))
    x = np.random.default_rng(seed).normal(size=op.dim)
    lam = eigs(op, 1).eigenvalues[0]
    assert rayleigh(op, x) >= lam - 1e-9 * max(1.0, lam)
    assert op.quadratic(x) >= -1e-9


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_random_spd_generalised(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(12, 12))
    K = A @ A.T
    mass = rng.uniform(0.5, 2.0, 12)
    res = eigs(SymmetricOperator(sp.csr_matrix(K), mass), 12)
    ref = np.linalg.eigvalsh(K / np.sqrt(np.outer(mass, mass)))
    np.testing.assert_allclose(res.eigenvalues, ref, rtol=1e-8, atol=1e-8)
