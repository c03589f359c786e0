"""Metric vector bundles over fine meshes, stored as edge transports.

A connection compatible with the Euclidean fibre metric is represented by
one orthogonal matrix per oriented mesh edge: ``U(u, v)`` carries the fibre
at ``u`` to the fibre at ``v``.  Sections are ``(N, n)`` arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import ValidationError
from .geometry import FineMesh

CLASS_HINTS = ("flat", "rank_one_complex", "harmonic_curvature", "generic")
ORTHO_TOL = 1e-12
FLAT_FACE_TOL = 1e-10


def rotation(theta: float | np.ndarray) -> np.ndarray:
    """Planar rotation(s) by ``theta``; vectorised over a leading axis."""
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


J_STANDARD = rotation(math.pi / 2)


@dataclass(frozen=True, eq=False)
class Bundle:
    """Real rank-``n`` bundle with orthogonal transports on mesh edges.

    ``transports[e]`` is ``U(u, v)`` for the stored orientation
    ``mesh.edges[e] = (u, v)``; the reverse transport is its transpose.
    """

    mesh: FineMesh
    rank: int
    transports: np.ndarray
    class_hint: str = "generic"
    J: np.ndarray | None = None
    curvature_harmonic: bool = False

    def __post_init__(self) -> None:
        n = self.rank
        if n < 1:
            raise ValidationError("bundle rank must be positive")
        if self.transports.shape != (self.mesh.n_edges, n, n):
            raise ValidationError("transport array does not match the mesh edges and rank")
        if self.class_hint not in CLASS_HINTS:
            raise ValidationError(f"unknown class hint {self.class_hint!r}")
        U = self.transports
        dev = np.abs(np.einsum("eji,ejk->eik", U, U) - np.eye(n)).max(initial=0.0)
        if dev > ORTHO_TOL:
            raise ValidationError(f"transports are not orthogonal (deviation {dev:.2e})")
        if self.class_hint == "rank_one_complex":
            if n != 2 or self.J is None:
                raise ValidationError("rank_one_complex bundles need n = 2 and a complex structure J")
            if np.abs(self.J @ self.J + np.eye(2)).max() > ORTHO_TOL:
                raise ValidationError("J must square to -I")
            comm = np.abs(np.einsum("ij,ejk->eik", self.J, U) - np.einsum("eij,jk->eik", U, self.J)).max()
            if comm > ORTHO_TOL:
                raise ValidationError("J does not commute with the transports")
        if self.class_hint == "flat" and self.mesh.faces.shape[0] > 0:
            hol = face_holonomies(self)
            if np.abs(hol - np.eye(n)).max() > FLAT_FACE_TOL:
                raise ValidationError("bundle marked flat has a non-trivial face holonomy")

    @property
    def n(self) -> int:
        return self.rank

    def transport(self, u: int, v: int) -> np.ndarray:
        """``U(u, v)`` for an edge in either orientation."""
        if u < v:
            e = self.mesh.edge_index.get((u, v))
            if e is None:
                raise ValidationError(f"vertices {u} and {v} are not adjacent")
            return self.transports[e]
        e = self.mesh.edge_index.get((v, u))
        if e is None:
            raise ValidationError(f"vertices {u} and {v} are not adjacent")
        return self.transports[e].T

    @cached_property
    def directed_transports(self) -> np.ndarray:
        """Transports aligned with ``mesh.directed`` (forward then reversed)."""
        return np.concatenate([self.transports, np.transpose(self.transports, (0, 2, 1))])

    @property
    def is_flat(self) -> bool:
        return self.class_hint == "flat"


def transport_along_path(bundle: Bundle, path: Sequence[int]) -> np.ndarray:
    """Ordered product ``U(v_{k-1}, v_k) ... U(v_0, v_1)``."""
    T = np.eye(bundle.rank)
    for a, b in zip(path[:-1], path[1:]):
        T = bundle.transport(int(a), int(b)) @ T
    return T


def gauge_transform(bundle: Bundle, g: np.ndarray) -> Bundle:
    """Conjugate fibres by per-vertex orthogonal ``g``: ``U -> g(v) U g(u)^T``."""
    u, v = bundle.mesh.edges[:, 0], bundle.mesh.edges[:, 1]
    U = np.einsum("eij,ejk,elk->eil", g[v], bundle.transports, g[u])
    J = bundle.J
    if J is not None:
        # a global J survives only a gauge commuting with it
        ok = np.abs(np.einsum("ij,vjk->vik", J, g) - np.einsum("vij,jk->vik", g, J)).max() <= 1e-12
        if not ok:
            raise ValidationError("gauge field must commute with the complex structure J")
    return Bundle(bundle.mesh, bundle.rank, U, bundle.class_hint, J, bundle.curvature_harmonic)


# ---------------------------------------------------------------------------
# builders


def trivial_bundle(mesh: FineMesh, n: int) -> Bundle:
    U = np.broadcast_to(np.eye(n), (mesh.n_edges, n, n)).copy()
    return Bundle(mesh, n, U, "flat")


def _check_orthogonal(G: np.ndarray) -> None:
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValidationError("holonomy generators must be square matrices")
    if np.abs(G.T @ G - np.eye(G.shape[0])).max() > ORTHO_TOL:
        raise ValidationError("holonomy generator is not orthogonal")


def flat_bundle_from_representation(mesh: FineMesh, generators: Sequence[np.ndarray],
                                    rank: int | None = None) -> Bundle:
    """Flat bundle whose holonomy around chart generator ``i`` is ``G_i``.

    The generator is placed on every edge crossing the ``i``-th seam, raised
    to the signed crossing count, so contractible loops are trivial.
    """
    gens = [np.asarray(G, float) for G in generators]
    if not gens:
        if rank is None:
            raise ValidationError("rank is required when no generators are given")
        return trivial_bundle(mesh, rank)
    n = gens[0].shape[0]
    for G in gens:
        _check_orthogonal(G)
        if G.shape[0] != n:
            raise ValidationError("all generators must share one rank")
    if mesh.manifold_tag == "sphere":
        if any(np.abs(G - np.eye(n)).max() > ORTHO_TOL for G in gens):
            raise ValidationError("the sphere is simply connected; only the trivial representation is flat")
        return trivial_bundle(mesh, n)
    dim = 1 if mesh.manifold_tag == "circle" else 2
    if len(gens) != dim:
        raise ValidationError(f"{mesh.manifold_tag} needs {dim} generator(s), got {len(gens)}")
    if dim == 2 and np.abs(gens[0] @ gens[1] - gens[1] @ gens[0]).max() > ORTHO_TOL:
        raise ValidationError("flat structure requires commuting holonomy")
    wraps = mesh.edge_wraps
    U = np.broadcast_to(np.eye(n), (mesh.n_edges, n, n)).copy()
    for axis, G in enumerate(gens):
        for k in np.unique(wraps[:, axis]):
            if k == 0:
                continue
            sel = wraps[:, axis] == k
            Gk = np.linalg.matrix_power(G, int(k)) if k > 0 else np.linalg.matrix_power(G.T, int(-k))
            U[sel] = np.einsum("ij,ejk->eik", Gk, U[sel])
    return Bundle(mesh, n, U, "flat")


def landau_line_bundle(mesh: FineMesh, q: int) -> Bundle:
    """Constant-curvature complex line bundle on a flat torus, Landau gauge.

    The continuum potential is ``A = B x dy`` with ``B = 2 pi q / (L1 L2)``;
    each edge carries the rotation by its line integral, and edges crossing
    the ``x`` seam pick up the transition phase ``-k B L1 y`` that makes the
    bundle well defined.  Every cell then has holonomy ``rotation(B h1 h2)``.
    """
    if mesh.manifold_tag != "torus":
        raise ValidationError("landau bundle requires a flat torus mesh")
    if int(q) != q:
        raise ValidationError("flux quanta q must be an integer")
    q = int(q)
    L1, L2 = mesh.period
    B = 2.0 * math.pi * q / (L1 * L2)
    u, v = mesh.edges[:, 0], mesh.edges[:, 1]
    pu, pv = mesh.positions[u], mesh.positions[v]
    disp = mesh.displacement_between(pu, pv)
    kx = mesh.edge_wraps[:, 0]
    theta = B * disp[:, 1] * (pu[:, 0] + disp[:, 0] / 2.0) - kx * B * L1 * (pu[:, 1] + disp[:, 1])
    U = rotation(theta)
    if q == 0:
        return Bundle(mesh, 2, U, "flat")
    return Bundle(mesh, 2, U, "rank_one_complex", J_STANDARD.copy(), curvature_harmonic=True)


def _tangent_frames(unit: np.ndarray) -> np.ndarray:
    """Per-vertex orthonormal tangent frames ``(N, 3, 2)`` on the unit sphere."""
    ref = np.where(np.abs(unit[:, 2:3]) < 0.9, np.array([[0.0, 0.0, 1.0]]), np.array([[1.0, 0.0, 0.0]]))
    t1 = np.cross(ref, unit)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(unit, t1)
    return np.stack([t1, t2], axis=2)


def sphere_tangent_bundle(mesh: FineMesh) -> Bundle:
    """Tangent bundle of the sphere with discrete Levi-Civita transport.

    Along each edge the tangent plane at ``u`` is rotated onto the tangent
    plane at ``v`` about the axis ``n_u x n_v`` (the minimal rotation) and
    expressed in fixed per-vertex tangent frames.
    """
    if mesh.manifold_tag != "sphere":
        raise ValidationError("tangent bundle builder requires a sphere mesh")
    unit = mesh.positions / np.linalg.norm(mesh.positions, axis=1, keepdims=True)
    Fr = _tangent_frames(unit)
    u, v = mesh.edges[:, 0], mesh.edges[:, 1]
    nu, nv = unit[u], unit[v]
    axis = np.cross(nu, nv)
    s = np.linalg.norm(axis, axis=1)
    c = np.einsum("ij,ij->i", nu, nv)
    k = axis / s[:, None]
    K = np.zeros((u.size, 3, 3))
    K[:, 0, 1], K[:, 0, 2] = -k[:, 2], k[:, 1]
    K[:, 1, 0], K[:, 1, 2] = k[:, 2], -k[:, 0]
    K[:, 2, 0], K[:, 2, 1] = -k[:, 1], k[:, 0]
    R = np.eye(3) + s[:, None, None] * K + (1.0 - c)[:, None, None] * np.einsum("eij,ejk->eik", K, K)
    U = np.einsum("eji,ejk,ekl->eil", Fr[v], R, Fr[u])
    # project to the nearest rotation to remove rounding drift
    W, _, Vt = np.linalg.svd(U)
    U = W @ Vt
    return Bundle(mesh, 2, U, "harmonic_curvature", None, curvature_harmonic=True)


# ---------------------------------------------------------------------------
# curvature


def face_holonomies(bundle: Bundle) -> np.ndarray:
    """Holonomy around each face cycle, based at the first face vertex."""
    F = bundle.mesh.faces
    n = bundle.rank
    if F.shape[0] == 0:
        return np.zeros((0, n, n))
    idx = bundle.mesh.edge_index
    H = np.broadcast_to(np.eye(n), (F.shape[0], n, n)).copy()
    k = F.shape[1]
    for c in range(k):
        a, b = F[:, c], F[:, (c + 1) % k]
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        e = np.array([idx[(int(x), int(y))] for x, y in zip(lo, hi)])
        U = bundle.transports[e]
        U = np.where((a < b)[:, None, None], U, np.transpose(U, (0, 2, 1)))
        H = np.einsum("fij,fjk->fik", U, H)
    return H


@dataclass(frozen=True)
class CurvatureReport:
    """Discrete curvature of a bundle.

    ``face_curvature[f]`` is the skew log of the face holonomy divided by
    the face area.  Norms use ``|F|_F / sqrt(2)``, which equals ``|theta|``
    for a planar rotation generator ``theta J``.
    """

    face_curvature: np.ndarray
    face_norm: np.ndarray
    k1_hat: float
    k2_hat: float
    convention: str = "frobenius/sqrt2 per unit area"


def _skew_log(H: np.ndarray) -> np.ndarray:
    n = H.shape[-1]
    if n == 1:
        return np.zeros_like(H)
    if n == 2:
        theta = np.arctan2(H[:, 1, 0] - H[:, 0, 1], H[:, 0, 0] + H[:, 1, 1])
        return theta[:, None, None] * J_STANDARD[None]
    out = np.empty_like(H)
    for i, h in enumerate(H):
        L = np.real(sla.logm(h))
        out[i] = 0.5 * (L - L.T)
    return out


def curvature_report(bundle: Bundle) -> CurvatureReport:
    mesh = bundle.mesh
    n = bundle.rank
    H = face_holonomies(bundle)
    if H.shape[0] == 0:
        z = np.zeros((0, n, n))
        return CurvatureReport(z, np.zeros(0), 0.0, 0.0)
    if n == 1:
        if np.any(H[:, 0, 0] < 0):
            raise ValidationError("mesh too coarse for log: face holonomy is a reflection")
    else:
        ang = np.abs(np.angle(np.linalg.eigvals(H))).max(axis=1)
        if np.any(ang >= math.pi / 2):
            raise ValidationError("mesh too coarse for log: face holonomy angle >= pi/2")
    F = _skew_log(H) / mesh.face_area[:, None, None]
    norms = np.linalg.norm(F, axis=(1, 2)) / math.sqrt(2.0)
    # first-order divergence proxy: spread of the curvature among the faces
    # around each vertex, per unit length
    nv = mesh.n_vertices
    flat = F.reshape(F.shape[0], -1)
    total = np.zeros((nv, flat.shape[1]))
    count = np.zeros(nv)
    for c in range(mesh.faces.shape[1]):
        np.add.at(total, mesh.faces[:, c], flat)
        np.add.at(count, mesh.faces[:, c], 1.0)
    mean = total / count[:, None]
    dev = np.zeros(nv)
    for c in range(mesh.faces.shape[1]):
        vtx = mesh.faces[:, c]
        d = np.linalg.norm(flat - mean[vtx], axis=1) / math.sqrt(2.0)
        np.maximum.at(dev, vtx, d)
    return CurvatureReport(F, norms, float(norms.max()), float(dev.max() / mesh.h))


# ---------------------------------------------------------------------------
# serialisation


def bundle_to_json(bundle: Bundle) -> dict[str, Any]:
    n = bundle.rank
    eye = np.eye(n)
    out: dict[str, Any] = {
        "rank": n,
        "class_hint": bundle.class_hint,
        "curvature_harmonic": bool(bundle.curvature_harmonic),
        "mesh": {"manifold_tag": bundle.mesh.manifold_tag, "params": dict(bundle.mesh.params)},
        "transports": [
            {"u": int(u), "v": int(v), "matrix": U.tolist()}
            for (u, v), U in zip(bundle.mesh.edges, bundle.transports)
            if np.abs(U - eye).max() > 0.0
        ],
    }
    if bundle.J is not None:
        out["J"] = bundle.J.tolist()
    return out


def bundle_from_json(obj: dict[str, Any], mesh: FineMesh) -> Bundle:
    try:
        n = int(obj["rank"])
        U = np.broadcast_to(np.eye(n), (mesh.n_edges, n, n)).copy()
        for t in obj["transports"]:
            u, v = int(t["u"]), int(t["v"])
            M = np.asarray(t["matrix"], float)
            if u < v:
                e = mesh.edge_index.get((u, v))
            else:
                e, M = mesh.edge_index.get((v, u)), M.T
            if e is None:
                raise ValidationError(f"transport on non-edge ({u}, {v})")
            U[e] = M
        J = np.asarray(obj["J"], float) if obj.get("J") is not None else None
        return Bundle(mesh, n, U, obj["class_hint"], J, bool(obj.get("curvature_harmonic", False)))
    except KeyError as exc:
        raise ValidationError(f"bundle JSON lacks {exc}") from None
