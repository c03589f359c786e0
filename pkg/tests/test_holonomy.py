import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from bundle_spectra.bundle import flat_bundle_from_representation, landau_line_bundle, trivial_bundle
from bundle_spectra.errors import ValidationError
from bundle_spectra.geometry import build_circle, build_flat_torus
from bundle_spectra.holonomy import (LoopHolonomy, check_holonomy_bounds, commutant_dimension, estimate_alpha,
                                     fundamental_loops, is_irreducible, tree_gauge)
from bundle_spectra.netdisc import epsilon_net

from oracles import alpha_brute_force, rotation


def _loops(*mats):
    return [LoopHolonomy((0,), np.asarray(H, float), 1.0) for H in mats]


@pytest.fixture(scope="module")
def circle():
    m = build_circle(1.0, 400)
    return m, epsilon_net(m, 0.05)


def test_single_rotation_closed_form():
    for t in (0.1, 0.7, 2.0, math.pi):
        est = estimate_alpha(_loops(rotation(t)), 2)
        assert est.alpha_hat == pytest.approx(2 * math.sin(t / 2), abs=1e-12)


def test_rotation_and_reflection_against_sampling():
    mats = [rotation(0.9), np.diag([1.0, -1.0])]
    est = estimate_alpha(_loops(*mats), 2)
    ref = alpha_brute_force(mats, 1_000_000)
    assert est.alpha_hat <= ref + 1e-12
    assert est.alpha_hat == pytest.approx(ref, abs=1e-4)


@pytest.mark.parametrize("n", [3, 4])
def test_higher_rank_against_sampling(n):
    rng = np.random.default_rng(n)
    mats = [np.linalg.qr(rng.normal(size=(n, n)))[0] for _ in range(2)]
    est = estimate_alpha(_loops(*mats), n)
    ref = alpha_brute_force(mats, 1_000_000)
    assert est.alpha_hat <= ref + 1e-9
    assert est.alpha_hat >= ref - 0.02


def test_line_bundle_and_rank_limit():
    assert estimate_alpha(_loops([[-1.0]]), 1).alpha_hat == pytest.approx(2.0)
    assert estimate_alpha([], 2).alpha_hat == 0.0
    with pytest.raises(ValidationError):
        estimate_alpha(_loops(np.eye(5)), 5)


def test_circle_loops_and_alpha(circle):
    m, d = circle
    for phi in (0.3, 0.7, 2.5):
        b = flat_bundle_from_representation(m, [rotation(phi)])
        g = tree_gauge(d, b)
        loops = fundamental_loops(d, g)
        # 40 net edges minus 19 tree edges
        assert len(loops) == 21
        assert estimate_alpha(loops, 2).alpha_hat == pytest.approx(2 * math.sin(phi / 2), abs=1e-10)


def test_tree_edges_carry_identity(circle):
    m, d = circle
    b = flat_bundle_from_representation(m, [rotation(1.3)])
    g = tree_gauge(d, b)
    for j in range(d.size):
        if j != g.root:
            assert np.abs(g.conn.get(int(g.parent[j]), j) - np.eye(2)).max() < 1e-12
    assert g.path_to_root(g.root) == [g.root]


def test_root_change_invariance(circle):
    m, d = circle
    b = flat_bundle_from_representation(m, [rotation(0.7)])
    a0 = estimate_alpha(fundamental_loops(d, tree_gauge(d, b, 0)), 2).alpha_hat
    a7 = estimate_alpha(fundamental_loops(d, tree_gauge(d, b, 7)), 2).alpha_hat
    assert a0 == pytest.approx(a7, abs=1e-12)


def test_trivial_bundle_report(circle):
    m, d = circle
    with pytest.warns(UserWarning, match="reducible"):
        rep = check_holonomy_bounds(d, trivial_bundle(m, 2))
    assert rep.alpha == 0.0
    assert rep.ratios["flag"] == "alpha vanishes"
    assert rep.ratios["lower"] is None
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        check_holonomy_bounds(d, trivial_bundle(m, 2), declared=True)


def test_circle_report_ratios(circle):
    m, d = circle
    rep = check_holonomy_bounds(d, flat_bundle_from_representation(m, [rotation(0.7)]))
    assert rep.irreducible
    assert rep.n_loops == 21
    a2 = (2 * math.sin(0.35)) ** 2
    assert rep.lambda1_XA == pytest.approx(4 - 2 * math.cos(0.7 / 20) - 2 * math.cos(0.07), rel=1e-8)
    assert rep.ratios["upper_XA"] == pytest.approx(rep.lambda1_XA / a2, rel=1e-10)
    assert rep.ratios["upper_XA"] <= rep.ratios["upper_bound_XA"]
    assert set(rep.to_json()) >= {"alpha", "alpha_prime", "ratios", "irreducible", "n_loops"}


def test_curved_bundle_rejected():
    t = build_flat_torus(1.0, 1.0, 16, 16)
    d = epsilon_net(t, 0.25, enforce_hypotheses=False)
    with pytest.raises(ValidationError, match="flat"):
        tree_gauge(d, landau_line_bundle(t, 1))
    with pytest.raises(ValidationError):
        tree_gauge(d, trivial_bundle(t, 2), root=99)


def test_irreducibility_heuristic():
    assert is_irreducible([rotation(0.7)], 2)
    assert not is_irreducible([np.eye(2)], 2)
    assert not is_irreducible([np.diag([1.0, -1.0])], 2)
    assert is_irreducible([rotation(0.7), np.diag([1.0, -1.0])], 2)
    r1 = Rotation.from_rotvec([0.3, 0.0, 0.0]).as_matrix()
    r2 = Rotation.from_rotvec([0.0, 0.5, 0.0]).as_matrix()
    assert is_irreducible([r1, r2], 3)
    assert not is_irreducible([r1], 3)
    assert commutant_dimension([rotation(0.7)]) == 2
    assert commutant_dimension([np.eye(3)]) == 9
    # left multiplication by unit quaternions: commutant is the quaternions
    qi = np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], float)
    qj = np.array([[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]], float)
    assert commutant_dimension([qi, qj]) == 4
    assert is_irreducible([qi, qj], 4)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-math.pi, math.pi), min_size=1, max_size=4))
def test_alpha_commuting_rotations(angles):
    # rotations share every unit vector as a witness direction
    est = estimate_alpha(_loops(*[rotation(t) for t in angles]), 2)
    assert est.alpha_hat == pytest.approx(max(2 * abs(math.sin(t / 2)) for t in angles), abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_alpha_bounds(seed):
    rng = np.random.default_rng(seed)
    mats = [np.linalg.qr(rng.normal(size=(2, 2)))[0] for _ in range(3)]
    est = estimate_alpha(_loops(*mats), 2)
    v = est.witness
    assert 0.0 <= est.alpha_hat <= 2.0
    assert est.alpha_hat == pytest.approx(max(np.linalg.norm(H @ v - v) for H in mats), abs=1e-12)
    # no sampled direction beats the estimate
    t = np.linspace(0, np.pi, 721)
    V = np.stack([np.cos(t), np.sin(t)], axis=1)
    worst = np.max([np.linalg.norm(V @ (H - np.eye(2)).T, axis=1) for H in mats], axis=0)
    assert est.alpha_hat <= worst.min() + 1e-12
