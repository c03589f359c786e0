"""Acceptance suite: one group of tests per numbered criterion.

Closed-form envelopes are computed at import time, before any pipeline runs.
The terminal summary (see conftest) prints one PASS/FAIL line per criterion.
"""

import math

import numpy as np
import pytest
import scipy.sparse as sp

from bundle_spectra.bundle import (curvature_report, flat_bundle_from_representation, landau_line_bundle,
                                   sphere_tangent_bundle)
from bundle_spectra.frames import build_frames
from bundle_spectra.geometry import build_circle, build_flat_torus, build_sphere
from bundle_spectra.harness import compare_prepared, prepare
from bundle_spectra.holonomy import check_holonomy_bounds
from bundle_spectra.netdisc import epsilon_net
from bundle_spectra.spectral import eigs, rough_laplacian
from bundle_spectra.twisted import (EdgeFunction, assemble_from_pairs, build_connection, build_potential,
                                    discretizing_matrix, edge_inner, smoothing_matrix)

from conftest import CIRCLE_PHIS, LANDAU_EPS, LANDAU_L, _slim
from oracles import (circle_bloch, circle_comparison_envelope, circle_continuum_lambda1, cycle_spectrum,
                     landau_lambda1, rotation, torus_two_angle_lambda1, twisted_cycle_spectrum)

ENV_LO, ENV_HI, ENV_TABLE = circle_comparison_envelope(CIRCLE_PHIS, N=400, L=1.0, M=20, K=10)
SWEEP_PHIS = tuple(np.round(np.arange(0.1, 3.01, 0.1), 10))


def _random_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


def _random_graph(rng, size):
    edges = {(int(rng.integers(0, i)), i) for i in range(1, size)}
    for _ in range(int(rng.integers(0, 2 * size))):
        a, b = sorted(rng.choice(size, 2, replace=False).tolist())
        edges.add((a, b))
    return sorted(edges)


def _ordered(edges):
    return np.array([p for a, b in edges for p in ((a, b), (b, a))])


# ---------------------------------------------------------------------------
# 1. quadratic-form identity


@pytest.mark.criterion(1)
def test_quadratic_form_identity():
    rng = np.random.default_rng(20240601)
    worst = 0.0
    for t in range(10):
        size = int(rng.integers(3, 51))
        n = int(rng.integers(1, 5))
        pairs = _ordered(_random_graph(rng, size))
        A = np.array([_random_orthogonal(rng, n) for _ in pairs])
        if t % 2 == 0:
            # magnetic case: reverse matrix is the transpose
            A[1::2] = np.transpose(A[0::2], (0, 2, 1))
        K = assemble_from_pairs(size, n, pairs, A).dense()
        for _ in range(100):
            f = rng.normal(size=(size, n))
            g = rng.normal(size=(size, n))
            Df = f[pairs[:, 1]] - np.einsum("kab,kb->ka", A, f[pairs[:, 0]])
            Dg = g[pairs[:, 1]] - np.einsum("kab,kb->ka", A, g[pairs[:, 0]])
            lhs = f.ravel() @ K @ g.ravel()
            rhs = edge_inner(EdgeFunction(pairs, Df), EdgeFunction(pairs, Dg))
            worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(f) * np.linalg.norm(g)))
    print(f"max relative form defect {worst:.2e}")
    assert worst <= 1e-10


# ---------------------------------------------------------------------------
# 2, 3. cycles


def _cycle_pairs(N):
    return np.array([(i, (i + s) % N) for i in range(N) for s in (1, -1)])


@pytest.mark.criterion(2)
@pytest.mark.parametrize("N,n", [(5, 1), (12, 2), (31, 3), (50, 4)])
def test_identity_connection_on_cycle(N, n):
    pairs = _cycle_pairs(N)
    A = np.broadcast_to(np.eye(n), (pairs.shape[0], n, n))
    lam = np.linalg.eigvalsh(assemble_from_pairs(N, n, pairs, A).dense())
    np.testing.assert_allclose(lam, cycle_spectrum(N, n), atol=1e-9)


@pytest.mark.criterion(3)
@pytest.mark.parametrize("N,theta", [(7, 0.3), (20, 0.05), (33, 1.1), (50, -0.7)])
def test_uniform_rotation_on_cycle(N, theta):
    pairs = _cycle_pairs(N)
    A = np.array([rotation(theta) if (j - i) % N == 1 else rotation(-theta) for i, j in pairs])
    lam = np.linalg.eigvalsh(assemble_from_pairs(N, 2, pairs, A).dense())
    np.testing.assert_allclose(lam, twisted_cycle_spectrum(N, theta), atol=1e-9)


# ---------------------------------------------------------------------------
# 4. flat specialization


def _check_flat(bundle, disc, frames):
    h = build_connection(bundle, disc, frames, "harmonic")
    r = build_connection(bundle, disc, frames, "rank_one")
    for conn in (h, r):
        V = build_potential(disc, frames, conn.mode)
        assert np.abs(V.diag).max() <= 1e-10
        AtA = np.einsum("kji,kjl->kil", conn.A, conn.A)
        assert np.abs(AtA - np.eye(conn.n)).max() <= 1e-10
        index = disc.pair_index
        rev = np.array([index[(int(j), int(i))] for i, j in disc.pairs])
        assert np.abs(np.transpose(conn.A, (0, 2, 1)) - conn.A[rev]).max() <= 1e-10
    assert np.abs(h.A - r.A).max() <= 1e-10


@pytest.mark.criterion(4)
def test_flat_circle_specialization():
    m = build_circle(1.0, 400)
    d = epsilon_net(m, 0.05)
    b = flat_bundle_from_representation(m, [rotation(0.7)])
    _check_flat(b, d, build_frames(b, d))


@pytest.mark.criterion(4)
@pytest.mark.slow
def test_flat_torus_specialization(flat_torus_prep):
    p = flat_torus_prep
    _check_flat(p.bundle, p.disc, p.frames)


# ---------------------------------------------------------------------------
# 5. oracle fidelity


@pytest.mark.criterion(5)
@pytest.mark.parametrize("phi", CIRCLE_PHIS)
def test_circle_lowest_eigenvalue(circle_mesh, phi):
    b = flat_bundle_from_representation(circle_mesh, [rotation(phi)])
    lam = eigs(rough_laplacian(b), 1).eigenvalues[0]
    assert lam == pytest.approx(circle_continuum_lambda1(phi), rel=0.01)


@pytest.mark.criterion(5)
@pytest.mark.parametrize("phi,psi", [(0.3, 0.7), (1.0, 2.0), (3.0, 0.5)])
def test_torus_lowest_eigenvalue(phi, psi):
    m = build_flat_torus(1.0, 1.0, 64, 64)
    b = flat_bundle_from_representation(m, [rotation(phi), rotation(psi)])
    lam = eigs(rough_laplacian(b), 1).eigenvalues[0]
    assert lam == pytest.approx(torus_two_angle_lambda1(phi, psi), rel=0.02)


@pytest.mark.criterion(5)
@pytest.mark.parametrize("q", [1, 2, 3, 4, 5])
def test_landau_lowest_eigenvalue(q):
    m = build_flat_torus(1.0, 1.0, 64, 64)
    lam = eigs(rough_laplacian(landau_line_bundle(m, q)), 1).eigenvalues[0]
    assert lam == pytest.approx(landau_lambda1(q), rel=0.05)


# ---------------------------------------------------------------------------
# 6. two-sided comparison


@pytest.mark.criterion(6)
def test_circle_ratios_inside_closed_form_envelope(circle_reports):
    print(f"closed-form envelope [{ENV_LO:.4f}, {ENV_HI:.4f}]")
    for phi, rep in circle_reports.items():
        rows = [r for r in rep.rows if r.branch != "kernel"]
        got = np.array([r.ratio_raw for r in rows])
        assert got.size == 10
        np.testing.assert_allclose(got, ENV_TABLE[phi], rtol=1e-6)
        assert np.all(got >= ENV_LO * (1 - 1e-6)) and np.all(got <= ENV_HI * (1 + 1e-6))


@pytest.fixture(scope="module")
def landau_family(landau_mesh, landau_prep, landau_reports):
    """Seed and refinement variants of Landau q = 1, both modes, without constants."""
    out = {(0, 88): landau_reports}
    for seed in (1, 2, 3, 4):
        b = landau_line_bundle(landau_mesh, 1)
        p = prepare(landau_mesh, b, LANDAU_EPS, seed=seed, enforce_hypotheses=False)
        out[(seed, 88)] = {m: compare_prepared(p, m, constants=False) for m in ("harmonic", "rank_one")}
        del p
    for N in (99, 110):
        mesh = build_flat_torus(LANDAU_L, LANDAU_L, N, N)
        b = landau_line_bundle(mesh, 1)
        p = prepare(mesh, b, LANDAU_EPS, seed=0, enforce_hypotheses=False)
        out[(0, N)] = {m: compare_prepared(p, m, constants=False) for m in ("harmonic", "rank_one")}
        del p
    for key in out:
        out[key] = {m: _slim(r) for m, r in out[key].items()}
    return out


@pytest.mark.criterion(6)
@pytest.mark.slow
@pytest.mark.parametrize("mode", ["harmonic", "rank_one"])
def test_landau_envelope_stability(landau_family, mode):
    c = []
    cp = []
    for key, reps in sorted(landau_family.items()):
        rep = reps[mode]
        ratios = [r.ratio_raw for r in rep.rows if r.ratio_raw is not None]
        assert len(ratios) == len(rep.rows)
        assert min(ratios) > 0
        c.append(rep.c_hat)
        cp.append(rep.c_prime_hat)
        print(f"{mode} seed={key[0]} N={key[1]}: c_hat={rep.c_hat:.4f} c'_hat={rep.c_prime_hat:.4f}")
    assert max(c) / min(c) <= 2.0
    assert max(cp) / min(cp) <= 2.0


# ---------------------------------------------------------------------------
# 7. holonomy bounds


@pytest.fixture(scope="module")
def holonomy_sweep(circle_mesh):
    d = epsilon_net(circle_mesh, 0.05)
    out = {}
    for phi in SWEEP_PHIS:
        b = flat_bundle_from_representation(circle_mesh, [rotation(phi)])
        out[phi] = check_holonomy_bounds(d, b)
    return out


@pytest.mark.criterion(7)
def test_holonomy_upper_bound(holonomy_sweep):
    for phi, rep in holonomy_sweep.items():
        assert rep.alpha == pytest.approx(2 * math.sin(phi / 2), abs=1e-10)
        assert rep.lambda1_XA / rep.alpha_prime**2 <= rep.nu_X / 2 * (1 + 1e-6)


@pytest.mark.criterion(7)
def test_holonomy_lower_ratio_interval(holonomy_sweep):
    lower = []
    for phi, rep in holonomy_sweep.items():
        assert rep.alpha > 1e-6
        assert rep.lambda1_XA > 0
        assert rep.lambda1_XA == pytest.approx(4 - 2 * math.cos(phi / 20) - 2 * math.cos(phi / 10), rel=1e-8)
        expect = circle_bloch(phi, 1.0, 400)[0] * 0.25 / (4 * math.sin(phi / 2) ** 2)
        assert rep.ratios["lower"] == pytest.approx(expect, rel=0.02)
        lower.append(rep.ratios["lower"])
    lo, hi = min(lower), max(lower)
    print(f"lambda1_E d^2 / alpha^2 in [{lo:.4f}, {hi:.4f}]")
    # continuum values (phi^2/4) / (4 sin^2(phi/2)) span [0.2502, 0.5658] on this grid
    assert 0.24 <= lo and hi <= 0.58
    lam = [rep.lambda1_XA for rep in holonomy_sweep.values()]
    assert np.all(np.diff(lam) > 0)


# ---------------------------------------------------------------------------
# 8. frame certification


@pytest.mark.criterion(8)
@pytest.mark.slow
@pytest.mark.parametrize("q", [1, 2, 3, 4, 5])
def test_landau_frames(landau_mesh, landau_prep, q):
    if q == 1:
        bundle, frames = landau_prep.bundle, landau_prep.frames
    else:
        bundle = landau_line_bundle(landau_mesh, q)
        frames = build_frames(bundle, landau_prep.disc)
    alpha = 1 / (2 * (2 + 1))
    k1 = curvature_report(bundle).k1_hat
    bound = k1 * 9 * LANDAU_EPS * math.sqrt(2) * 1.25
    gram = max(f.gram_dev for f in frames)
    par = [f.nabla_sup[f.mu:].max() for f in frames if f.mu < f.n]
    print(f"q={q}: gram_dev_max={gram:.3e} mu={sorted({f.mu for f in frames})} "
          f"parallel sup={max(par, default=0.0):.3f} bound={bound:.3f}")
    assert gram <= alpha
    assert max(par, default=0.0) <= bound


@pytest.mark.criterion(8)
def test_flat_frames_full_rank(circle_preps):
    for p in circle_preps.values():
        assert all(f.mu == f.n for f in p.frames)


@pytest.mark.criterion(8)
@pytest.mark.slow
def test_flat_torus_frames_full_rank(flat_torus_prep):
    assert all(f.mu == f.n for f in flat_torus_prep.frames)


# ---------------------------------------------------------------------------
# 9. smoothing and discretising inequalities


def _check_constants(prep, rep, rng):
    c = rep.constants
    for name in ("c0", "c1", "c2", "Lam", "c0_prime", "c1_prime", "c2_prime", "Lam_prime", "c3", "c3_prime"):
        v = getattr(c, name)
        assert math.isfinite(v) and v > 0, name
    bundle, disc, frames = prep.bundle, prep.disc, prep.frames
    op = rough_laplacian(bundle)
    K = sp.csr_matrix(op.stiffness)
    m = op.mass
    S = smoothing_matrix(disc, frames)
    D = discretizing_matrix(disc, frames)
    from bundle_spectra.twisted import assemble_twisted
    L = assemble_twisted(disc, rep.conn, rep.potential).dense()
    wL, QL = np.linalg.eigh(L)
    tol = 1e-8

    def msq(s):
        return float(s @ (m * s))

    for _ in range(20):
        f = rng.normal(size=L.shape[0])
        Sf = S @ f
        assert msq(Sf) <= c.c0 * (f @ f) * (1 + tol)
        assert float(Sf @ (K @ Sf)) <= c.c1 * float(f @ L @ f) * (1 + tol)
        s = rng.normal(size=K.shape[0])
        Ds = D @ s
        assert float(Ds @ Ds) <= c.c0_prime * msq(s) * (1 + tol)
        assert float(Ds @ L @ Ds) <= c.c1_prime * float(s @ (K @ s)) * (1 + tol)

    # below the net threshold: ||Sf||^2 >= c2 |f|^2
    low = QL[:, wL <= c.Lam]
    assert low.shape[1] >= 1
    for _ in range(20):
        f = low @ rng.normal(size=low.shape[1])
        # mix in a high mode while staying inside the energy cone
        g = QL[:, -1] * rng.uniform(0.0, 0.05) * np.linalg.norm(f)
        if float((f + g) @ L @ (f + g)) <= c.Lam * float((f + g) @ (f + g)):
            f = f + g
        assert msq(S @ f) >= c.c2 * (f @ f) * (1 - tol)

    # below the mesh threshold: |Ds|^2 >= c2' ||s||^2
    V = prep.rough.eigenvectors
    lam = prep.rough.eigenvalues
    low = V[:, lam <= c.Lam_prime]
    assert low.shape[1] >= 1
    for _ in range(20):
        s = low @ rng.normal(size=low.shape[1])
        Ds = D @ s
        assert float(Ds @ Ds) >= c.c2_prime * msq(s) * (1 - tol)
    return c


@pytest.mark.criterion(9)
def test_circle_constants(circle_preps, circle_reports, circle_mesh):
    rng = np.random.default_rng(9)
    for phi, rep in circle_reports.items():
        c = _check_constants(circle_preps[phi], rep, rng)
        assert c.exact_cone
        # every rough eigenvalue up to n|X| sits below the cap from localized test sections
        n_x = 2 * circle_preps[phi].disc.size
        lam = eigs(rough_laplacian(circle_preps[phi].bundle), n_x).eigenvalues
        assert lam[-1] <= c.c3
        assert rep.constants.lower_envelope <= rep.c_prime_hat
        assert rep.c_hat <= rep.constants.upper_envelope
        print(f"phi={phi}: envelope [{c.lower_envelope:.3f}, {c.upper_envelope:.1f}] "
              f"ratios [{rep.c_prime_hat:.3f}, {rep.c_hat:.3f}]")


@pytest.mark.criterion(9)
@pytest.mark.slow
def test_flat_torus_constants(flat_torus_prep, flat_torus_report):
    c = _check_constants(flat_torus_prep, flat_torus_report, np.random.default_rng(10))
    print(f"flat torus: {c.to_json()}")
    assert c.lower_envelope <= flat_torus_report.c_prime_hat
    assert flat_torus_report.c_hat <= c.upper_envelope


@pytest.mark.criterion(9)
@pytest.mark.slow
@pytest.mark.parametrize("mode", ["harmonic", "rank_one"])
def test_landau_constants(landau_prep, landau_reports, mode):
    rep = landau_reports[mode]
    c = _check_constants(landau_prep, rep, np.random.default_rng(11))
    print(f"landau {mode}: {c.to_json()} occupancy={rep.branch_occupancy}")
    assert c.lower_envelope <= rep.c_prime_hat
    assert rep.c_hat <= c.upper_envelope


# ---------------------------------------------------------------------------
# 10. uniform caps


def _check_cap(rep):
    caps = rep.caps
    assert caps["lambda_top_XAV"] == pytest.approx(rep.net_eigenvalues[-1])
    assert caps["lambda_top_XAV"] <= caps["cap"], caps


@pytest.mark.criterion(10)
def test_caps_circle(circle_reports):
    for rep in circle_reports.values():
        _check_cap(rep)


@pytest.mark.criterion(10)
@pytest.mark.slow
def test_caps_torus_and_landau(flat_torus_report, landau_family):
    _check_cap(flat_torus_report)
    for key, reps in sorted(landau_family.items()):
        for mode, rep in reps.items():
            print(f"seed={key[0]} N={key[1]} {mode}: lambda_top={rep.caps['lambda_top_XAV']:.3f} "
                  f"cap={rep.caps['cap']:.3f}")
            _check_cap(rep)


# ---------------------------------------------------------------------------
# sphere tangent bundle (non-blocking)


@pytest.mark.stretch
def test_sphere_tangent_spectrum():
    m = build_sphere(1.0, 4)
    lam = eigs(rough_laplacian(sphere_tangent_bundle(m)), 30, dense_limit=0).eigenvalues
    expect = np.concatenate([np.full(2 * (2 * l + 1), l * (l + 1) - 1.0) for l in (1, 2, 3)])
    rel = np.abs(lam - expect) / expect
    print(f"sphere: max relative deviation {rel.max():.3f}")
    if rel.max() > 0.10:
        pytest.xfail(f"sphere tangent spectrum off by {rel.max():.1%} (> 10%)")
