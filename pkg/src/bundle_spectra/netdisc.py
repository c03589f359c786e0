"""Maximal epsilon-separated nets of a fine mesh and their neighbour graphs."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import ValidationError
from .geometry import DIST_RTOL, FineMesh, PathTree, below, shortest_path_tree

# epsilon must span at least this many mesh steps
MIN_RESOLUTION = 4.0
# radius (in units of epsilon) out to which distance rows are stored
ROW_RADIUS = 10.0


@dataclass(frozen=True, eq=False)
class Discretization:
    """An epsilon-net ``X`` with the ``0 < d < 3 eps`` neighbour rule.

    Attributes:
        mesh: Underlying fine mesh.
        epsilon: Separation scale.
        X: Net vertices in admission order.
        neighbors: ``neighbors[i]`` are net indices adjacent to ``X[i]``.
        dist: ``(|X|, N)`` distances from each net vertex, ``inf`` beyond
            ``10 eps`` (plus slack).
        seed: Scan-order seed, ``None`` for ascending ids.
        hypotheses_ok: Whether ``eps <= r0 / 20`` held.
    """

    mesh: FineMesh
    epsilon: float
    X: np.ndarray
    neighbors: tuple[np.ndarray, ...]
    dist: np.ndarray
    seed: int | None = None
    hypotheses_ok: bool = True
    _trees: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return int(self.X.size)

    @cached_property
    def degree(self) -> np.ndarray:
        return np.array([nb.size for nb in self.neighbors], dtype=np.int64)

    @property
    def nu_X(self) -> int:
        return int(self.degree.max())

    @cached_property
    def index_of(self) -> dict[int, int]:
        return {int(p): i for i, p in enumerate(self.X)}

    @cached_property
    def pairs(self) -> np.ndarray:
        """Ordered neighbour pairs ``(i, j)`` of net indices, row-major."""
        rows = [np.stack([np.full(nb.size, i), nb], axis=1) for i, nb in enumerate(self.neighbors)]
        return np.concatenate(rows).astype(np.int64) if rows else np.zeros((0, 2), np.int64)

    @cached_property
    def pair_index(self) -> dict[tuple[int, int], int]:
        return {(int(i), int(j)): k for k, (i, j) in enumerate(self.pairs)}

    def members(self, i: int, radius_factor: float) -> np.ndarray:
        """Sorted vertices of ``B(X[i], radius_factor * eps)``."""
        if radius_factor > ROW_RADIUS:
            raise ValidationError("stored distance rows only reach 10 eps")
        return np.flatnonzero(below(self.dist[i], radius_factor * self.epsilon))

    def tree(self, i: int) -> PathTree:
        """Radial shortest-path tree of ``B(X[i], 10 eps)``, cached."""
        t = self._trees.get(i)
        if t is None:
            t = shortest_path_tree(self.mesh, int(self.X[i]), self.dist[i], within=self.members(i, ROW_RADIUS))
            self._trees[i] = t
        return t

    def graph_matrix(self) -> sp.csr_matrix:
        p = self.pairs
        return sp.csr_matrix((np.ones(p.shape[0]), (p[:, 0], p[:, 1])), shape=(self.size, self.size))


def _check_hypotheses(mesh: FineMesh, epsilon: float) -> bool:
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    if epsilon < MIN_RESOLUTION * mesh.h * (1 - DIST_RTOL):
        raise ValidationError(
            f"fine mesh under-resolves eps: eps = {epsilon:g} < {MIN_RESOLUTION:g} h = {MIN_RESOLUTION * mesh.h:g}"
        )
    return epsilon <= mesh.r0 / 20.0 * (1 + DIST_RTOL)


def epsilon_net(mesh: FineMesh, epsilon: float, seed: int | None = None,
                enforce_hypotheses: bool = True) -> Discretization:
    """Greedy maximal epsilon-separated net.

    Vertices are scanned in ascending id order (or a seeded permutation) and
    admitted when every admitted vertex lies at distance ``>= eps``.

    Args:
        mesh: Fine mesh.
        epsilon: Separation scale.
        seed: Optional permutation seed for the scan order.
        enforce_hypotheses: Reject ``eps > r0 / 20`` when true; otherwise
            record the violation in ``hypotheses_ok``.
    """
    ok = _check_hypotheses(mesh, epsilon)
    if not ok and enforce_hypotheses:
        raise ValidationError(
            f"eps = {epsilon:g} violates the hypothesis r0 >= 20*eps (r0 = {mesh.r0:g}, r0/20 = {mesh.r0 / 20:g})"
        )
    N = mesh.n_vertices
    order = np.arange(N) if seed is None else np.random.default_rng(seed).permutation(N)
    blocked = np.zeros(N, bool)
    X = []
    for v in order:
        if blocked[v]:
            continue
        X.append(int(v))
        d = dijkstra(mesh.graph, directed=False, indices=int(v), limit=epsilon * 1.01)
        blocked |= below(d, epsilon)
    X = np.array(X, dtype=np.int64)
    limit = ROW_RADIUS * epsilon * 1.01 + mesh.h
    dist = dijkstra(mesh.graph, directed=False, indices=X, limit=limit)
    dX = dist[:, X]
    adj = (dX > 0) & below(dX, 3 * epsilon)
    if not np.array_equal(adj, adj.T):
        raise ValidationError("neighbour relation is not symmetric")
    neighbors = tuple(np.flatnonzero(row) for row in adj)
    return Discretization(mesh, float(epsilon), X, neighbors, dist, seed, ok)


def remove_point(disc: Discretization, i: int) -> Discretization:
    """Copy of ``disc`` with net index ``i`` deleted (for negative tests)."""
    keep = np.array([k for k in range(disc.size) if k != i])
    remap = {int(old): new for new, old in enumerate(keep)}
    nbrs = tuple(np.array([remap[int(q)] for q in disc.neighbors[k] if int(q) in remap], dtype=np.int64) for k in keep)
    return Discretization(disc.mesh, disc.epsilon, disc.X[keep], nbrs, disc.dist[keep], disc.seed, disc.hypotheses_ok)


@dataclass(frozen=True)
class NetReport:
    min_distance: float
    covering_radius: float
    nu_X: int
    connected: bool
    failures: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.failures


def validate(disc: Discretization) -> NetReport:
    """Check separation, covering, the edge rule and connectivity."""
    mesh, eps, h = disc.mesh, disc.epsilon, disc.mesh.h
    failures = []
    dX = dijkstra(mesh.graph, directed=False, indices=disc.X)
    sep = dX[:, disc.X]
    np.fill_diagonal(sep, np.inf)
    min_d = float(sep.min()) if disc.size > 1 else float("inf")
    if min_d < eps - h:
        failures.append(f"separation: min distance {min_d:g} < eps - h")
    cover = float(dX.min(axis=0).max())
    if cover > eps + h:
        failures.append(f"covering: radius {cover:g} > eps + h")
    elif not below(cover, eps):
        # a vertex at distance >= eps from X could still be admitted
        failures.append(f"covering: net is not maximal (a vertex lies {cover:g} >= eps from X)")
    np.fill_diagonal(sep, 0.0)
    expected = (sep > 0) & below(sep, 3 * eps)
    actual = np.zeros_like(expected)
    for i, nb in enumerate(disc.neighbors):
        actual[i, nb] = True
    if not np.array_equal(expected, actual):
        failures.append("edge rule: neighbour sets differ from 0 < d < 3 eps")
    if not np.array_equal(actual, actual.T):
        failures.append("edge rule: neighbour relation not symmetric")
    ncomp, _ = connected_components(sp.csr_matrix(actual), directed=False)
    connected = ncomp == 1
    if not connected:
        failures.append("connectivity: net graph is disconnected")
    if not disc.hypotheses_ok:
        failures.append("hypothesis: eps > r0/20")
    nu = int(actual.sum(axis=1).max()) if disc.size else 0
    return NetReport(min_d, cover, nu, connected, tuple(failures))


def disc_to_json(disc: Discretization) -> dict[str, Any]:
    return {
        "epsilon": disc.epsilon,
        "seed": disc.seed,
        "mesh": {"manifold_tag": disc.mesh.manifold_tag, "params": dict(disc.mesh.params)},
        "X": [int(p) for p in disc.X],
        "neighbors": {str(int(disc.X[i])): [int(disc.X[j]) for j in nb] for i, nb in enumerate(disc.neighbors)},
    }


def disc_from_json(obj: dict[str, Any], mesh: FineMesh, enforce_hypotheses: bool = True) -> Discretization:
    """Recompute the net from its parameters and check it matches the file."""
    try:
        disc = epsilon_net(mesh, float(obj["epsilon"]), obj.get("seed"), enforce_hypotheses)
        if [int(p) for p in obj["X"]] != [int(p) for p in disc.X]:
            raise ValidationError("net in JSON does not match a fresh greedy construction")
    except KeyError as exc:
        raise ValidationError(f"discretization JSON lacks {exc}") from None
    return disc
