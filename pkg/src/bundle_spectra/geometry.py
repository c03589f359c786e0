"""Fine reference meshes of the model manifolds and their metric utilities.

A :class:`FineMesh` is a weighted graph standing in for a compact
Riemannian manifold: vertex positions (chart coordinates on the flat
manifolds, an embedding in R^3 on the sphere), edge lengths, vertex
measures approximating the volume form, and per-edge stiffness weights for
the rough Laplacian.  Distances are graph shortest-path distances.

Three builders are provided: a circle, a flat torus and an icosphere.  The
torus carries diagonal "metric" edges in addition to its axis stencil so
that graph distances follow the octile metric; the diagonals have zero
stiffness weight and therefore do not enter any Laplacian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import ValidationError

# Relative slack used whenever a computed distance is compared against a
# threshold: accumulated edge sums such as 5 * 0.01 do not land exactly on
# 0.05, and strict comparisons must not depend on that rounding.
DIST_RTOL = 1e-9

MIN_GRID_VERTICES = 16
MIN_SPHERE_SUBDIVISIONS = 3
DIAMETER_EXACT_LIMIT = 5000
DIAMETER_SAMPLES = 64


@dataclass(frozen=True, eq=False)
class FineMesh:
    """Immutable weighted graph approximating a closed manifold.

    Attributes:
        manifold_tag: ``"circle"``, ``"torus"`` or ``"sphere"``.
        params: Builder parameters, enough to rebuild the mesh.
        positions: ``(N, d)`` chart coordinates or embedding.
        edges: ``(E, 2)`` vertex pairs with ``u < v``.
        lengths: ``(E,)`` positive edge lengths.
        measure: ``(N,)`` positive vertex measures.
        weights: ``(E,)`` stiffness weights; zero marks a metric-only edge.
        r0: Conservative injectivity radius.
        faces: ``(F, k)`` counter-clockwise vertex cycles (may be empty).
        face_area: ``(F,)`` face areas.
        period: Chart periods for flat manifolds, ``None`` on the sphere.
    """

    manifold_tag: str
    params: dict
    positions: np.ndarray
    edges: np.ndarray
    lengths: np.ndarray
    measure: np.ndarray
    weights: np.ndarray
    r0: float
    faces: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    face_area: np.ndarray = field(default_factory=lambda: np.zeros(0))
    period: np.ndarray | None = None

    def __post_init__(self) -> None:
        if np.any(self.lengths <= 0):
            raise ValidationError("every edge length must be positive")
        if np.any(self.measure <= 0):
            raise ValidationError("every vertex measure must be positive")
        if np.any(self.edges[:, 0] >= self.edges[:, 1]):
            raise ValidationError("edges must be stored with u < v")
        ncomp, _ = connected_components(self.graph, directed=False)
        if ncomp != 1:
            raise ValidationError("mesh graph is disconnected")

    @property
    def n_vertices(self) -> int:
        return int(self.positions.shape[0])

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @cached_property
    def h(self) -> float:
        """Mesh scale: the longest stiffness (stencil) edge."""
        stencil = self.weights > 0
        return float(self.lengths[stencil].max())

    @cached_property
    def volume(self) -> float:
        return float(self.measure.sum())

    @cached_property
    def graph(self) -> sp.csr_matrix:
        n = self.n_vertices
        u, v = self.edges[:, 0], self.edges[:, 1]
        g = sp.coo_matrix(
            (np.concatenate([self.lengths, self.lengths]), (np.concatenate([u, v]), np.concatenate([v, u]))),
            shape=(n, n),
        )
        return g.tocsr()

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        return {(int(u), int(v)): i for i, (u, v) in enumerate(self.edges)}

    @cached_property
    def directed(self) -> "DirectedEdges":
        e = self.n_edges
        u, v = self.edges[:, 0], self.edges[:, 1]
        return DirectedEdges(
            src=np.concatenate([u, v]),
            dst=np.concatenate([v, u]),
            length=np.concatenate([self.lengths, self.lengths]),
            edge=np.concatenate([np.arange(e), np.arange(e)]),
            reversed=np.concatenate([np.zeros(e, bool), np.ones(e, bool)]),
        )

    @cached_property
    def edge_wraps(self) -> np.ndarray:
        """Integer seam crossings of each stored edge ``u -> v`` per chart axis.

        For an edge with minimal-image displacement ``dx`` the unwrapped
        target ``x_u + dx`` equals ``x_v + k * period``; ``k`` is returned.
        Zero on the sphere.
        """
        if self.period is None:
            return np.zeros((self.n_edges, 1), dtype=np.int64)
        pu = self.positions[self.edges[:, 0]]
        pv = self.positions[self.edges[:, 1]]
        disp = self.displacement_between(pu, pv)
        k = np.rint((pu + disp - pv) / self.period).astype(np.int64)
        return k

    def displacement_between(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Minimal-image chart displacement ``b - a`` on flat manifolds."""
        d = np.asarray(b, float) - np.asarray(a, float)
        if self.period is None:
            return d
        return d - self.period * np.rint(d / self.period)

    def flat_distance(self, a: int, b: Sequence[int] | np.ndarray) -> np.ndarray:
        """Closed-form intrinsic distance on the circle and the flat torus."""
        if self.period is None:
            raise ValidationError("closed-form distance only exists on flat meshes")
        d = self.displacement_between(self.positions[a], self.positions[np.asarray(b)])
        return np.linalg.norm(np.atleast_2d(d), axis=-1)


@dataclass(frozen=True)
class DirectedEdges:
    """Both orientations of every mesh edge, stored flat for vectorised use."""

    src: np.ndarray
    dst: np.ndarray
    length: np.ndarray
    edge: np.ndarray
    reversed: np.ndarray


@dataclass(frozen=True, eq=False)
class Ball:
    """Open geodesic ball ``{x : d(center, x) < radius}`` on a fine mesh."""

    center: int
    radius: float
    members: np.ndarray
    boundary: np.ndarray
    volume: float
    dist: np.ndarray  # distances of the members, aligned with ``members``

    def __contains__(self, x: int) -> bool:
        i = np.searchsorted(self.members, x)
        return bool(i < self.members.size and self.members[i] == x)


# ---------------------------------------------------------------------------
# builders


def _uniform_grid_weights(measure: np.ndarray, edges: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    return (measure[edges[:, 0]] + measure[edges[:, 1]]) / (2.0 * lengths**2)


def _normalise_edges(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    e = np.stack([np.minimum(u, v), np.maximum(u, v)], axis=1)
    return e


def build_circle(L: float, N: int) -> FineMesh:
    """Cycle graph of ``N`` equally spaced vertices on a circle of length ``L``."""
    if not L > 0:
        raise ValidationError("circle length L must be positive")
    if int(N) != N or N < MIN_GRID_VERTICES:
        raise ValidationError(f"circle needs N >= {MIN_GRID_VERTICES} vertices, got {N}")
    N = int(N)
    h = L / N
    pos = (np.arange(N) * h).reshape(-1, 1)
    i = np.arange(N)
    edges = _normalise_edges(i, (i + 1) % N)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges = edges[order]
    lengths = np.full(N, h)
    measure = np.full(N, h)
    return FineMesh(
        manifold_tag="circle",
        params={"L": float(L), "N": N},
        positions=pos,
        edges=edges,
        lengths=lengths,
        measure=measure,
        weights=_uniform_grid_weights(measure, edges, lengths),
        r0=math.pi * L / 2.0,
        faces=np.zeros((0, 2), dtype=np.int64),
        face_area=np.zeros(0),
        period=np.array([float(L)]),
    )


def build_flat_torus(L1: float, L2: float, N1: int, N2: int) -> FineMesh:
    """``N1 x N2`` periodic grid on the flat torus ``[0,L1) x [0,L2)``.

    Vertex ``(i, j)`` has id ``i + N1 * j``.  Axis edges form the stiffness
    stencil; both diagonals of each cell are added as metric-only edges.
    """
    if not (L1 > 0 and L2 > 0):
        raise ValidationError("torus side lengths must be positive")
    for n in (N1, N2):
        if int(n) != n or n < MIN_GRID_VERTICES:
            raise ValidationError(f"torus needs N1, N2 >= {MIN_GRID_VERTICES}, got {N1}x{N2}")
    N1, N2 = int(N1), int(N2)
    h1, h2 = L1 / N1, L2 / N2
    if max(h1, h2) / min(h1, h2) > 4.0:
        raise ValidationError("torus cell aspect ratio exceeds 4; geodesic distances would be distorted")
    ii, jj = np.meshgrid(np.arange(N1), np.arange(N2), indexing="xy")
    ii, jj = ii.ravel(), jj.ravel()
    vid = ii + N1 * jj
    order = np.argsort(vid)
    ii, jj = ii[order], jj[order]
    pos = np.stack([ii * h1, jj * h2], axis=1)

    def idx(a, b):
        return (a % N1) + N1 * (b % N2)

    base = idx(ii, jj)
    blocks = [
        (base, idx(ii + 1, jj), h1, True),
        (base, idx(ii, jj + 1), h2, True),
        (base, idx(ii + 1, jj + 1), math.hypot(h1, h2), False),
        (base, idx(ii + 1, jj - 1), math.hypot(h1, h2), False),
    ]
    edges_l, len_l, stencil_l = [], [], []
    for u, v, ell, st in blocks:
        edges_l.append(_normalise_edges(u, v))
        len_l.append(np.full(u.size, ell))
        stencil_l.append(np.full(u.size, st))
    edges = np.concatenate(edges_l)
    lengths = np.concatenate(len_l)
    stencil = np.concatenate(stencil_l)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges, lengths, stencil = edges[order], lengths[order], stencil[order]
    measure = np.full(N1 * N2, h1 * h2)
    weights = np.where(stencil, _uniform_grid_weights(measure, edges, lengths), 0.0)
    faces = np.stack([base, idx(ii + 1, jj), idx(ii + 1, jj + 1), idx(ii, jj + 1)], axis=1)
    return FineMesh(
        manifold_tag="torus",
        params={"L1": float(L1), "L2": float(L2), "N1": N1, "N2": N2},
        positions=pos,
        edges=edges,
        lengths=lengths,
        measure=measure,
        weights=weights,
        r0=min(L1, L2) / 2.0,
        faces=faces,
        face_area=np.full(faces.shape[0], h1 * h2),
        period=np.array([float(L1), float(L2)]),
    )


def _icosahedron() -> tuple[np.ndarray, list[tuple[int, int, int]]]:
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    return verts, faces


def build_sphere(r: float, subdivisions: int) -> FineMesh:
    """Icosphere with ``10 * 4**s + 2`` vertices projected to radius ``r``.

    Edge lengths are great-circle arcs, vertex measures are one third of the
    incident flat triangle areas and stiffness weights are the cotangent
    weights ``(cot a + cot b) / 2``.  Each pair of corners opposite a
    triangle edge is also joined by a metric-only edge.
    """
    if not r > 0:
        raise ValidationError("sphere radius must be positive")
    if int(subdivisions) != subdivisions or subdivisions < MIN_SPHERE_SUBDIVISIONS:
        raise ValidationError(f"sphere needs subdivisions >= {MIN_SPHERE_SUBDIVISIONS}")
    verts, faces = _icosahedron()
    vlist = [v for v in verts]
    for _ in range(int(subdivisions)):
        cache: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = vlist[a] + vlist[b]
                vlist.append(m / np.linalg.norm(m))
                cache[key] = len(vlist) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    unit = np.array(vlist)
    F = np.array(faces, dtype=np.int64)
    # orient every face outward
    nrm = np.cross(unit[F[:, 1]] - unit[F[:, 0]], unit[F[:, 2]] - unit[F[:, 0]])
    flip = np.einsum("ij,ij->i", nrm, unit[F].mean(axis=1)) < 0
    F[flip] = F[flip][:, [0, 2, 1]]
    pos = unit * r

    p0, p1, p2 = pos[F[:, 0]], pos[F[:, 1]], pos[F[:, 2]]
    area = 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)
    nv = pos.shape[0]
    measure = np.zeros(nv)
    for c in range(3):
        np.add.at(measure, F[:, c], area / 3.0)

    # cotangent of the corner opposite each face edge
    def cot(a, b, c):
        u, v = b - a, c - a
        return np.einsum("ij,ij->i", u, v) / np.linalg.norm(np.cross(u, v), axis=1)

    corners = [(p0, p1, p2), (p1, p2, p0), (p2, p0, p1)]
    opp_edges = [(F[:, 1], F[:, 2]), (F[:, 2], F[:, 0]), (F[:, 0], F[:, 1])]
    eu, ev, ew = [], [], []
    for (a, b, c), (x, y) in zip(corners, opp_edges):
        eu.append(np.minimum(x, y))
        ev.append(np.maximum(x, y))
        ew.append(0.5 * cot(a, b, c))
    eu, ev, ew = np.concatenate(eu), np.concatenate(ev), np.concatenate(ew)
    key = eu * nv + ev
    uniq, inv = np.unique(key, return_inverse=True)
    weights = np.bincount(inv, weights=ew)
    # metric-only shortcut joining the two corners opposite each edge;
    # removes most of the zig-zag overestimate of triangle-edge paths
    o1 = np.concatenate([F[:, 0], F[:, 1], F[:, 2]])
    eu_sorted = np.argsort(inv, kind="stable")
    pairs = o1[eu_sorted].reshape(-1, 2)
    ou, ov = np.minimum(pairs[:, 0], pairs[:, 1]), np.maximum(pairs[:, 0], pairs[:, 1])
    okey = np.setdiff1d(ou * nv + ov, uniq)
    all_key = np.concatenate([uniq, okey])
    weights = np.concatenate([weights, np.zeros(okey.size)])
    order = np.argsort(all_key)
    all_key, weights = all_key[order], weights[order]
    edges = np.stack([all_key // nv, all_key % nv], axis=1)
    cosang = np.clip(np.einsum("ij,ij->i", unit[edges[:, 0]], unit[edges[:, 1]]), -1.0, 1.0)
    lengths = r * np.arccos(cosang)
    return FineMesh(
        manifold_tag="sphere",
        params={"r": float(r), "subdivisions": int(subdivisions)},
        positions=pos,
        edges=edges,
        lengths=lengths,
        measure=measure,
        weights=weights,
        r0=math.pi * r / 2.0,
        faces=F,
        face_area=area,
        period=None,
    )


def build_mesh(manifold_tag: str, params: dict) -> FineMesh:
    """Dispatch to a builder by tag; ``params`` uses the builder's argument names."""
    try:
        if manifold_tag == "circle":
            return build_circle(params["L"], params["N"])
        if manifold_tag == "torus":
            return build_flat_torus(params["L1"], params["L2"], params["N1"], params["N2"])
        if manifold_tag == "sphere":
            return build_sphere(params["r"], params["subdivisions"])
    except KeyError as exc:
        raise ValidationError(f"missing mesh parameter {exc}") from None
    raise ValidationError(f"unknown manifold {manifold_tag!r}")


# ---------------------------------------------------------------------------
# distances, balls, trees


def geodesic_distance(mesh: FineMesh, source: int, limit: float = np.inf) -> np.ndarray:
    """Shortest-path distances from ``source``; ``inf`` beyond ``limit``."""
    if not 0 <= source < mesh.n_vertices:
        raise ValidationError(f"vertex {source} is not in the mesh")
    return dijkstra(mesh.graph, directed=False, indices=int(source), limit=limit)


def distances_from(mesh: FineMesh, sources: Sequence[int] | np.ndarray, limit: float = np.inf,
                   chunk: int = 256) -> np.ndarray:
    """Distance rows for several sources, computed in chunks."""
    sources = np.asarray(sources, dtype=np.int64)
    out = np.empty((sources.size, mesh.n_vertices))
    for s in range(0, sources.size, chunk):
        idx = sources[s:s + chunk]
        out[s:s + idx.size] = dijkstra(mesh.graph, directed=False, indices=idx, limit=limit)
    return out


def below(d: np.ndarray | float, radius: float) -> np.ndarray:
    """Strict ``d < radius`` with relative rounding slack."""
    return np.asarray(d) < radius * (1.0 - DIST_RTOL)


def ball(mesh: FineMesh, center: int, radius: float, dist: np.ndarray | None = None) -> Ball:
    """Members are exactly the vertices at distance below ``radius``."""
    if not radius > 0:
        raise ValidationError("ball radius must be positive")
    if dist is None:
        dist = geodesic_distance(mesh, center, limit=radius * 1.01 + mesh.h)
    members = np.flatnonzero(below(dist, radius))
    md = dist[members]
    boundary = members[md > radius - mesh.h]
    return Ball(
        center=int(center),
        radius=float(radius),
        members=members,
        boundary=boundary,
        volume=float(mesh.measure[members].sum()),
        dist=md,
    )


def _line_offset(mesh: FineMesh, source: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance of vertices ``a`` from the straight chord ``source -> b``."""
    if mesh.period is None:
        ps = mesh.positions[source]
        pb = mesh.positions[b]
        n = np.cross(np.broadcast_to(ps, pb.shape), pb)
        nn = np.linalg.norm(n, axis=1)
        nn[nn == 0] = 1.0
        return np.abs(np.einsum("ij,ij->i", mesh.positions[a], n)) / nn
    if mesh.positions.shape[1] == 1:
        return np.zeros(a.size)
    ps = mesh.positions[source]
    da = mesh.displacement_between(ps, mesh.positions[a])
    db = mesh.displacement_between(ps, mesh.positions[b])
    cross = np.abs(da[:, 0] * db[:, 1] - da[:, 1] * db[:, 0])
    nb = np.linalg.norm(db, axis=1)
    nb[nb == 0] = 1.0
    return cross / nb


@dataclass(frozen=True, eq=False)
class PathTree:
    """Shortest-path tree rooted at ``root``.

    ``pred[x]`` is the parent of ``x`` (``-1`` at the root and at vertices
    outside the tree); ``pred_edge[x]`` indexes :attr:`FineMesh.directed`
    and names the oriented edge ``pred[x] -> x``.
    """

    root: int
    dist: np.ndarray
    pred: np.ndarray
    pred_edge: np.ndarray

    def path_to(self, target: int) -> list[int]:
        if target != self.root and self.pred[target] < 0:
            raise ValidationError(f"vertex {target} is not reached by the tree")
        path = [int(target)]
        while path[-1] != self.root:
            path.append(int(self.pred[path[-1]]))
        return path[::-1]

    @cached_property
    def depth_order(self) -> list[np.ndarray]:
        """Tree vertices grouped by hop depth, root first."""
        inside = (self.pred >= 0)
        depth = np.full(self.pred.size, -1, dtype=np.int64)
        depth[self.root] = 0
        cur = np.flatnonzero(inside)
        hops = np.zeros(cur.size, dtype=np.int64)
        walk = cur.copy()
        while True:
            active = walk != self.root
            if not active.any():
                break
            walk[active] = self.pred[walk[active]]
            hops[active] += 1
        depth[cur] = hops
        levels = []
        for d in range(int(depth.max()) + 1):
            levels.append(np.flatnonzero(depth == d))
        return levels


def shortest_path_tree(mesh: FineMesh, root: int, dist: np.ndarray | None = None,
                       within: np.ndarray | None = None) -> PathTree:
    """Deterministic shortest-path tree ("radial geodesics") from ``root``.

    Among the tight predecessors of a vertex ``x`` the one closest to the
    straight chord ``root -> x`` wins, so tree paths hug radial lines;
    remaining ties go to the smaller vertex id.

    Args:
        mesh: The fine mesh.
        root: Tree root.
        dist: Distances from ``root`` (computed when omitted).
        within: Optional sorted vertex subset to which the tree is limited.
    """
    if dist is None:
        dist = geodesic_distance(mesh, root)
    de = mesh.directed
    a, b = de.src, de.dst
    ok = np.isfinite(dist[a]) & np.isfinite(dist[b]) & (b != root)
    if within is not None:
        mask = np.zeros(mesh.n_vertices, bool)
        mask[within] = True
        ok &= mask[a] & mask[b]
    cand = np.flatnonzero(ok)
    slack = dist[a[cand]] + de.length[cand] - dist[b[cand]]
    tight = cand[np.abs(slack) <= 1e-12 + 1e-9 * dist[b[cand]]]
    score = _line_offset(mesh, root, a[tight], b[tight])
    score = np.round(score / mesh.h, 9)
    order = np.lexsort((a[tight], score, b[tight]))
    chosen = tight[order]
    _, first = np.unique(b[chosen], return_index=True)
    chosen = chosen[first]
    pred = np.full(mesh.n_vertices, -1, dtype=np.int64)
    pred_edge = np.full(mesh.n_vertices, -1, dtype=np.int64)
    pred[b[chosen]] = a[chosen]
    pred_edge[b[chosen]] = chosen
    return PathTree(root=int(root), dist=dist, pred=pred, pred_edge=pred_edge)


def midpoint_on_tree(tree: PathTree, target: int) -> int:
    """Vertex on the tree path ``root -> target`` nearest to half its length."""
    path = np.array(tree.path_to(target))
    half = tree.dist[target] / 2.0
    gap = np.abs(tree.dist[path] - half)
    best = gap.min()
    ties = path[gap <= best + 1e-12 * max(1.0, half)]
    return int(ties.min())


def geodesic_midpoint(mesh: FineMesh, p: int, q: int) -> int:
    """Midpoint vertex of the deterministic shortest path from ``p`` to ``q``."""
    if p == q:
        raise ValidationError("midpoint needs two distinct vertices")
    tree = shortest_path_tree(mesh, p)
    return midpoint_on_tree(tree, q)


def diameter(mesh: FineMesh) -> float:
    """Largest graph distance.

    Circle and torus grids are vertex-transitive, so one source is exact.
    Other meshes use every source up to 5000 vertices, beyond that 64
    farthest-point samples (a lower estimate).
    """
    if mesh.period is not None:
        return float(geodesic_distance(mesh, 0).max())
    if mesh.n_vertices <= DIAMETER_EXACT_LIMIT:
        best = 0.0
        for s in range(0, mesh.n_vertices, 256):
            idx = np.arange(s, min(s + 256, mesh.n_vertices))
            best = max(best, float(dijkstra(mesh.graph, directed=False, indices=idx).max()))
        return best
    src = 0
    best = 0.0
    mind = np.full(mesh.n_vertices, np.inf)
    for _ in range(DIAMETER_SAMPLES):
        d = geodesic_distance(mesh, src)
        best = max(best, float(d.max()))
        mind = np.minimum(mind, d)
        src = int(np.argmax(mind))
    return best


# ---------------------------------------------------------------------------
# serialisation


def mesh_to_json(mesh: FineMesh) -> dict[str, Any]:
    return {
        "manifold_tag": mesh.manifold_tag,
        "params": dict(mesh.params),
        "vertices": [
            {"id": i, "pos": [float(c) for c in mesh.positions[i]], "measure": float(mesh.measure[i])}
            for i in range(mesh.n_vertices)
        ],
        "edges": [
            {"u": int(u), "v": int(v), "len": float(ell)}
            for (u, v), ell in zip(mesh.edges, mesh.lengths)
        ],
    }


def mesh_from_json(obj: dict[str, Any]) -> FineMesh:
    """Rebuild a built-in mesh from its tag and parameters and cross-check it."""
    try:
        mesh = build_mesh(obj["manifold_tag"], obj["params"])
    except KeyError as exc:
        raise ValidationError(f"mesh JSON lacks {exc}") from None
    if "vertices" in obj and len(obj["vertices"]) != mesh.n_vertices:
        raise ValidationError("mesh JSON vertex list does not match its parameters")
    if "edges" in obj and len(obj["edges"]) != mesh.n_edges:
        raise ValidationError("mesh JSON edge list does not match its parameters")
    return mesh
