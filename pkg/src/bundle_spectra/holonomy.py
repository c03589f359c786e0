"""Tree gauges, fundamental-loop holonomies and the holonomy constant alpha.

For a flat bundle, frames transported from a root along a BFS spanning
tree of the net graph make every tree edge carry the identity; each
non-tree edge then carries the holonomy of its fundamental loop.  The
constant ``alpha = min_{|v|=1} max_c |H_c v - v|`` is estimated over those
loops and compared against the lowest eigenvalues of both operators.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize
from scipy.stats import norm, qmc

from .bundle import Bundle
from .errors import ValidationError
from .geometry import diameter as mesh_diameter
from .netdisc import Discretization
from .spectral import SpectrumResult, eigs, rough_laplacian
from .twisted import ConnectionMatrices, assemble_twisted

SPHERE_SAMPLES = 100_000


@dataclass(frozen=True, eq=False)
class TreeGauge:
    """BFS spanning tree of the net graph with transported root frames.

    ``T[i]`` maps the fibre at the root to the fibre at ``X[i]`` along the
    tree path; ``conn`` holds the induced edge matrices.
    """

    root: int
    parent: np.ndarray
    layers: tuple[np.ndarray, ...]
    T: np.ndarray
    conn: ConnectionMatrices

    def is_tree_edge(self, i: int, j: int) -> bool:
        return self.parent[j] == i or self.parent[i] == j

    def path_to_root(self, i: int) -> list[int]:
        path = [int(i)]
        while path[-1] != self.root:
            path.append(int(self.parent[path[-1]]))
        return path


@dataclass(frozen=True)
class LoopHolonomy:
    loop: tuple[int, ...]
    H: np.ndarray
    length: float


@dataclass(frozen=True)
class AlphaEstimate:
    alpha_hat: float
    alpha_prime_hat: float
    witness: np.ndarray
    defects: np.ndarray


def net_transport(bundle: Bundle, disc: Discretization, i: int, j: int) -> np.ndarray:
    """Transport from ``X[i]`` to neighbouring ``X[j]`` along the radial tree of ``X[i]``."""
    tree = disc.tree(i)
    path = tree.path_to(int(disc.X[j]))
    T = np.eye(bundle.rank)
    U = bundle.directed_transports
    for x in path[1:]:
        T = U[tree.pred_edge[x]] @ T
    return T


def tree_gauge(disc: Discretization, bundle: Bundle, root: int = 0) -> TreeGauge:
    """Gauge in which every BFS tree edge carries the identity.

    Args:
        disc: Net.
        bundle: A flat bundle.
        root: Net index of the root.
    """
    if not bundle.is_flat:
        raise ValidationError("tree gauge needs a flat bundle")
    if not 0 <= root < disc.size:
        raise ValidationError("root must be a net index")
    n = bundle.rank
    parent = np.full(disc.size, -1, dtype=np.int64)
    level = np.full(disc.size, -1, dtype=np.int64)
    level[root] = 0
    layers = [np.array([root])]
    while True:
        nxt = {}
        for i in layers[-1]:
            for j in disc.neighbors[i]:
                if level[j] < 0:
                    cand = nxt.get(int(j))
                    if cand is None or disc.X[i] < disc.X[cand]:
                        nxt[int(j)] = int(i)
        if not nxt:
            break
        ids = np.array(sorted(nxt, key=lambda j: disc.X[j]))
        for j in ids:
            parent[j] = nxt[int(j)]
            level[j] = len(layers)
        layers.append(ids)
    if np.any(level < 0):
        raise ValidationError("net graph is disconnected")
    T = np.zeros((disc.size, n, n))
    T[root] = np.eye(n)
    for layer in layers[1:]:
        for j in layer:
            T[j] = net_transport(bundle, disc, int(parent[j]), int(j)) @ T[parent[j]]
    A = np.empty((disc.pairs.shape[0], n, n))
    for k, (i, j) in enumerate(disc.pairs):
        A[k] = T[j].T @ net_transport(bundle, disc, int(i), int(j)) @ T[i]
    return TreeGauge(root, parent, tuple(layers), T, ConnectionMatrices(disc, A, "tree"))


def fundamental_loops(disc: Discretization, gauge: TreeGauge, max_length: float | None = None) -> list[LoopHolonomy]:
    """Loop ``root -> p -> q -> root`` for every non-tree edge ``{p, q}``.

    ``max_length`` defaults to seven mesh diameters.
    """
    if max_length is None:
        max_length = 7.0 * mesh_diameter(disc.mesh)
    loops = []
    for k, (i, j) in enumerate(disc.pairs):
        if i >= j or gauge.is_tree_edge(int(i), int(j)):
            continue
        up = gauge.path_to_root(int(i))[::-1]
        down = gauge.path_to_root(int(j))
        loop = tuple(up + down)
        length = sum(float(disc.dist[a, disc.X[b]]) for a, b in zip(loop[:-1], loop[1:]))
        if length <= max_length:
            loops.append(LoopHolonomy(loop, gauge.conn.A[k].copy(), length))
    return loops


def _golden(f, a: float, b: float, tol: float = 1e-9) -> float:
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def estimate_alpha(loops: Sequence[LoopHolonomy], n: int) -> AlphaEstimate:
    """``min_{|v|=1} max_c sqrt(v^T (2I - H_c - H_c^T) v)`` over the given loops.

    ``n = 2`` uses a 1 degree scan refined by golden section; ``n = 3, 4``
    use 1e5 Halton directions refined by Nelder-Mead.
    """
    if n > 4:
        raise ValidationError("alpha estimation is limited to rank n <= 4")
    if not loops:
        return AlphaEstimate(0.0, 0.0, np.eye(n)[0], np.zeros((0, n, n)))
    H = np.array([lp.H for lp in loops])
    M = 2.0 * np.eye(n)[None] - H - np.transpose(H, (0, 2, 1))

    def worst(V: np.ndarray) -> np.ndarray:
        return np.einsum("va,cab,vb->vc", V, M, V).max(axis=1)

    if n == 1:
        v = np.ones(1)
    elif n == 2:
        theta = np.deg2rad(np.arange(0.0, 180.0, 1.0))
        vals = worst(np.stack([np.cos(theta), np.sin(theta)], axis=1))
        t0 = theta[int(np.argmin(vals))]
        step = np.deg2rad(1.0)

        def f(t: float) -> float:
            return float(worst(np.array([[math.cos(t), math.sin(t)]]))[0])

        t = _golden(f, t0 - step, t0 + step)
        if f(t) > vals.min():
            t = t0
        v = np.array([math.cos(t), math.sin(t)])
    else:
        pts = qmc.Halton(d=n, scramble=False).random(SPHERE_SAMPLES + 1)[1:]
        V = norm.ppf(pts)
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        vals = np.concatenate([worst(V[s:s + 10_000]) for s in range(0, V.shape[0], 10_000)])
        best = V[np.argsort(vals)[:5]]

        def f(x: np.ndarray) -> float:
            x = x / np.linalg.norm(x)
            return float(worst(x[None])[0])

        cands = [minimize(f, b0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14}).x for b0 in best]
        cands = [c / np.linalg.norm(c) for c in cands] + [best[0]]
        v = min(cands, key=f)
    value = float(worst(v[None])[0])
    alpha = math.sqrt(max(value, 0.0))
    return AlphaEstimate(alpha, alpha, v, M)


def commutant_dimension(mats: Sequence[np.ndarray], tol: float = 1e-8) -> int:
    """Dimension of ``{C : C H = H C for all H}``."""
    mats = list(mats)
    if not mats:
        return 0
    n = mats[0].shape[0]
    eye = np.eye(n)
    rows = [np.kron(eye, Hm) - np.kron(Hm.T, eye) for Hm in mats]
    s = sla.svdvals(np.vstack(rows))
    return int(np.count_nonzero(s <= tol * max(1.0, s.max()))) + max(0, n * n - s.size)


def is_irreducible(mats: Sequence[np.ndarray], n: int, tol: float = 1e-8) -> bool:
    """Commutant heuristic for real irreducibility.

    An irreducible real representation has a division algebra (R, C or H) as
    commutant, so its dimension is 1, 2 or 4, divides ``n``, and every
    element has a single conjugate pair of eigenvalues.
    """
    mats = [np.asarray(m) for m in mats] or [np.eye(n)]
    eye = np.eye(n)
    rows = np.vstack([np.kron(eye, Hm) - np.kron(Hm.T, eye) for Hm in mats])
    _, s, Vt = np.linalg.svd(rows)
    s_full = np.concatenate([s, np.zeros(n * n - s.size)])
    null = Vt[s_full <= tol * max(1.0, s.max())]
    dim = null.shape[0]
    if dim not in (1, 2, 4) or dim > n or n % dim:
        return False
    rng = np.random.default_rng(0)
    for _ in range(5):
        C = (rng.normal(size=dim) @ null).reshape(n, n, order="F")
        ev = np.linalg.eigvals(C)
        z = ev[0]
        if not np.all(np.minimum(np.abs(ev - z), np.abs(ev - np.conj(z))) <= 1e-6 * max(1.0, np.abs(ev).max())):
            return False
    return True


@dataclass(frozen=True)
class HolonomyReport:
    alpha: float
    alpha_prime: float
    diameter: float
    lambda1_E: float
    lambda1_XA: float
    nu_X: int
    irreducible: bool
    n_loops: int
    ratios: dict

    def to_json(self) -> dict[str, Any]:
        return {
            "alpha": self.alpha,
            "alpha_prime": self.alpha_prime,
            "diameter": self.diameter,
            "lambda1_E": self.lambda1_E,
            "lambda1_XA": self.lambda1_XA,
            "nu_X": self.nu_X,
            "irreducible": self.irreducible,
            "n_loops": self.n_loops,
            "ratios": self.ratios,
        }


def check_holonomy_bounds(disc: Discretization, bundle: Bundle, spectrum: SpectrumResult | None = None,
                          root: int = 0, declared: bool = False, max_length: float | None = None) -> HolonomyReport:
    """Compare ``alpha`` with the lowest eigenvalues of the mesh and net operators.

    Ratios: ``lower = lambda1_E d^2 / alpha^2``, ``upper_XA = lambda1_XA /
    alpha'^2`` (bounded by ``nu_X / 2``) and ``upper_E = lambda1_E /
    alpha'^2``.  They are ``None`` when ``alpha`` vanishes.
    """
    gauge = tree_gauge(disc, bundle, root)
    diam = mesh_diameter(disc.mesh)
    loops = fundamental_loops(disc, gauge, 7.0 * diam if max_length is None else max_length)
    est = estimate_alpha(loops, bundle.rank)
    if spectrum is None:
        spectrum = eigs(rough_laplacian(bundle), 1)
    lam_E = float(spectrum.eigenvalues[0])
    L = assemble_twisted(disc, gauge.conn)
    lam_X = float(eigs(L, 1).eigenvalues[0])
    irreducible = is_irreducible([lp.H for lp in loops], bundle.rank)
    if not irreducible and not declared:
        warnings.warn("holonomy is reducible; the irreducibility hypothesis does not hold", stacklevel=2)
    a2 = est.alpha_hat**2
    if a2 > 1e-12:
        ratios = {
            "lower": lam_E * diam**2 / a2,
            "upper_XA": lam_X / a2,
            "upper_E": lam_E / a2,
            "upper_bound_XA": disc.nu_X / 2.0,
        }
    else:
        ratios = {"lower": None, "upper_XA": None, "upper_E": None, "upper_bound_XA": disc.nu_X / 2.0,
                  "flag": "alpha vanishes"}
    return HolonomyReport(est.alpha_hat, est.alpha_prime_hat, diam, lam_E, lam_X, disc.nu_X, irreducible,
                          len(loops), ratios)
