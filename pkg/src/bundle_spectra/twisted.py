"""Twisted graph Laplacians on an epsilon-net and the transfer operators.

Frames at neighbouring net vertices are compared through the change of
basis ``e^p(x) = e^q(x) a(p, q)(x)``.  From these the edge matrices
``A(p, q)`` and the potential ``V`` are formed, then the operator

    (Delta_A f)(p) = 1/2 sum_{q in N(p)} (I + A(p,q)^T A(p,q)) f(p)
                     - (A(q,p) + A(p,q)^T) f(q)

is assembled in the unweighted inner product on ``F(X)``.  The smoothing
map ``S: F(X) -> sections`` and the discretising map ``D: sections -> F(X)``
connect it with the rough Laplacian of the fine mesh.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .bundle import Bundle
from .errors import NumericalError, ValidationError
from .frames import Frame
from .geometry import below, midpoint_on_tree
from .netdisc import Discretization
from .spectral import DENSE_LIMIT, SymmetricOperator

GRAM_COND_MAX = 1e3
MODES = ("harmonic", "rank_one")


@dataclass(frozen=True, eq=False)
class ConnectionMatrices:
    """``A[k]`` is ``A(p, q)`` for the ordered pair ``disc.pairs[k]``."""

    disc: Discretization
    A: np.ndarray
    mode: str

    def get(self, i: int, j: int) -> np.ndarray:
        return self.A[self.disc.pair_index[(i, j)]]

    @property
    def n(self) -> int:
        return int(self.A.shape[1])


@dataclass(frozen=True)
class Potential:
    """Diagonal potential, ``diag[i]`` acting on coefficients at ``X[i]``.

    Values are dimensionless: eigenvalue entries are stored as ``eps^2 lambda``.
    """

    diag: np.ndarray
    mode: str

    def matrix(self) -> sp.csr_matrix:
        return sp.diags(self.diag.ravel()).tocsr()


@dataclass(frozen=True)
class EdgeFunction:
    """Values on ordered neighbour pairs, aligned with ``disc.pairs``."""

    pairs: np.ndarray
    values: np.ndarray


# ---------------------------------------------------------------------------
# change of basis and connection matrices


def _solve_frames(Ep: np.ndarray, Eq: np.ndarray) -> np.ndarray:
    """Batched least-squares ``a`` with ``Eq a = Ep`` via the Gram matrix of ``Eq``."""
    EqT = np.swapaxes(Eq, 1, 2)
    G = EqT @ Eq
    w = np.linalg.eigvalsh(G)
    cond = w[:, -1] / np.maximum(w[:, 0], 1e-300)
    if np.any(cond > GRAM_COND_MAX):
        raise NumericalError(f"frame Gram matrix is degenerate (condition number {cond.max():.3g})")
    return np.linalg.solve(G, EqT @ Ep)


def change_of_basis(frame_p: Frame, frame_q: Frame, x: int | Sequence[int], epsilon: float) -> np.ndarray:
    """``a(p, q)(x)`` with ``e_j^p(x) = sum_i a_ij e_i^q(x)``.

    Requires ``x`` in ``B(p, 8 eps)`` and ``B(q, 8 eps)``.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=np.int64))
    kp, kq = frame_p.local(xs), frame_q.local(xs)
    lim = 8.0 * epsilon * (1 - 1e-9)
    if np.any(frame_p.dist[kp] >= lim) or np.any(frame_q.dist[kq] >= lim):
        raise ValidationError("change of basis is only defined on B(p, 8 eps) and B(q, 8 eps)")
    a = _solve_frames(frame_p.sections[kp], frame_q.sections[kq])
    return a[0] if np.ndim(x) == 0 else a


def resolve_mode(bundle: Bundle, mode: str) -> str:
    """Pick or check the construction variant for a bundle class.

    ``harmonic`` needs harmonic curvature (flat bundles qualify) and
    ``rank_one`` needs complex rank one (flat bundles qualify).
    """
    harmonic_ok = bundle.is_flat or bundle.curvature_harmonic
    rank_one_ok = bundle.class_hint in ("flat", "rank_one_complex")
    if mode == "auto":
        if bundle.class_hint == "rank_one_complex":
            return "rank_one"
        if harmonic_ok:
            return "harmonic"
        raise ValidationError(f"no construction applies to a {bundle.class_hint!r} bundle")
    if mode == "harmonic" and harmonic_ok:
        return mode
    if mode == "rank_one" and rank_one_ok:
        return mode
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}")
    raise ValidationError(f"mode {mode!r} does not match bundle class {bundle.class_hint!r}")


def pair_ball(disc: Discretization, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Members and distances of ``B(mid(p, q), 5 eps)`` for an unordered pair."""
    lo, hi = (i, j) if i < j else (j, i)
    m = midpoint_on_tree(disc.tree(lo), int(disc.X[hi]))
    d = dijkstra(disc.mesh.graph, directed=False, indices=m, limit=5.0 * disc.epsilon * 1.01)
    mem = np.flatnonzero(below(d, 5.0 * disc.epsilon))
    return mem, d[mem]


def _pair_balls(disc: Discretization, frames: Sequence[Frame], chunk: int = 256) -> dict[tuple[int, int], np.ndarray]:
    """Checked ``B_pq`` members for every unordered neighbour pair, batched by midpoint."""
    keys = [(int(i), int(j)) for i, j in disc.pairs if i < j]
    mids = np.array([midpoint_on_tree(disc.tree(i), int(disc.X[j])) for i, j in keys], dtype=np.int64)
    uniq, inv = np.unique(mids, return_inverse=True)
    rows: dict[int, np.ndarray] = {}
    r = 5.0 * disc.epsilon
    for s in range(0, uniq.size, chunk):
        block = uniq[s:s + chunk]
        d = dijkstra(disc.mesh.graph, directed=False, indices=block, limit=r * 1.01)
        for m, row in zip(block, d):
            rows[int(m)] = np.flatnonzero(below(row, r))
    out = {}
    for key, u in zip(keys, inv):
        members = rows[int(uniq[u])]
        _check_pair_ball(disc, key[0], key[1], members, frames)
        out[key] = members
    return out


def _check_pair_ball(disc: Discretization, i: int, j: int, members: np.ndarray,
                     frames: Sequence[Frame]) -> None:
    inside = np.zeros(disc.mesh.n_vertices, bool)
    inside[members] = True
    for k in (i, j):
        if not inside[disc.members(k, 3.0)].all():
            raise NumericalError("midpoint ball B_pq does not contain B(p, 3 eps) and B(q, 3 eps)")
        f = frames[k]
        if np.any(f.dist[f.local(members)] >= 8.0 * disc.epsilon * (1 - 1e-9)):
            raise NumericalError("midpoint ball B_pq leaves B(p, 8 eps)")


def connection_matrix(bundle: Bundle, disc: Discretization, frames: Sequence[Frame], i: int, j: int,
                      mode: str) -> np.ndarray:
    """``A(p, q)`` for net indices ``i, j`` (``X[j]`` must neighbour ``X[i]``)."""
    mode = resolve_mode(bundle, mode)
    if j not in set(disc.neighbors[i].tolist()):
        raise ValidationError(f"net vertices {i} and {j} are not neighbours")
    fp, fq = frames[i], frames[j]
    if mode == "harmonic":
        return change_of_basis(fp, fq, int(disc.X[j]), disc.epsilon)
    members, _ = pair_ball(disc, i, j)
    _check_pair_ball(disc, i, j, members, frames)
    a = _solve_frames(fp.at(members), fq.at(members))
    w = bundle.mesh.measure[members]
    return np.einsum("x,xij->ij", w, a) / w.sum()


def build_connection(bundle: Bundle, disc: Discretization, frames: Sequence[Frame],
                     mode: str = "auto") -> ConnectionMatrices:
    """``A(p, q)`` for every ordered neighbour pair."""
    mode = resolve_mode(bundle, mode)
    pairs = disc.pairs
    n = bundle.rank
    A = np.empty((pairs.shape[0], n, n))
    eps = disc.epsilon
    if mode == "harmonic":
        for k, (i, j) in enumerate(pairs):
            A[k] = change_of_basis(frames[i], frames[j], int(disc.X[j]), eps)
        return ConnectionMatrices(disc, A, mode)
    w_all = bundle.mesh.measure
    cache = _pair_balls(disc, frames)
    for k, (i, j) in enumerate(pairs):
        members = cache[(min(i, j), max(i, j))]
        a = _solve_frames(frames[i].at(members), frames[j].at(members))
        w = w_all[members]
        A[k] = np.tensordot(w, a, axes=1) / w.sum()
    return ConnectionMatrices(disc, A, mode)


def build_potential(disc: Discretization, frames: Sequence[Frame], mode: str) -> Potential:
    """Potential ``V`` in the chosen variant, eigenvalues rescaled by ``eps^2``.

    Harmonic: ``eps^2 lambda_i(p)`` on the first ``mu(p)`` slots, ``1`` on the
    rest.  Rank one: ``eps^2 (lambda_1(p) + sum_{q in N(p)} lambda_1(q))`` on
    every slot.  Ball eigenvalues are clipped at zero (negative values are
    rounding).
    """
    eps2 = disc.epsilon**2
    n = frames[0].n
    lam = np.array([np.clip(f.eigenvalues[:n], 0.0, None) for f in frames])
    if mode == "harmonic":
        diag = np.ones((disc.size, n))
        for i, f in enumerate(frames):
            diag[i, : f.mu] = eps2 * lam[i, : f.mu]
        return Potential(diag, mode)
    if mode == "rank_one":
        l1 = lam[:, 0]
        s = np.array([l1[i] + l1[nb].sum() for i, nb in enumerate(disc.neighbors)])
        return Potential(np.repeat((eps2 * s)[:, None], n, axis=1), mode)
    raise ValidationError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# assembly


def assemble_twisted(disc: Discretization, conn: ConnectionMatrices, V: Potential | None = None,
                     dense_limit: int = DENSE_LIMIT) -> SymmetricOperator:
    """``Delta_A + V`` on ``F(X)`` with the unweighted inner product."""
    n = conn.n
    return assemble_from_pairs(disc.size, n, disc.pairs, conn.A,
                               None if V is None else V.diag, dense_limit)


def assemble_from_pairs(size: int, n: int, pairs: np.ndarray, A: np.ndarray, vdiag: np.ndarray | None = None,
                        dense_limit: int = DENSE_LIMIT) -> SymmetricOperator:
    """Assembly on an arbitrary symmetric neighbour relation.

    ``pairs`` must contain both orientations of every edge; ``A[k]`` is the
    matrix of ``pairs[k]``.
    """
    index = {(int(i), int(j)): k for k, (i, j) in enumerate(pairs)}
    try:
        rev = np.array([index[(int(j), int(i))] for i, j in pairs], dtype=np.int64)
    except KeyError:
        raise ValidationError("neighbour relation is not symmetric") from None
    i, j = pairs[:, 0], pairs[:, 1]
    AtA = np.einsum("kji,kjl->kil", A, A)
    diag_blocks = 0.5 * (np.eye(n)[None] + AtA)
    off = -0.5 * (A[rev] + np.transpose(A, (0, 2, 1)))  # block (i, j)
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    rows = [(i[:, None] * n + ii).ravel(), (i[:, None] * n + ii).ravel()]
    cols = [(i[:, None] * n + jj).ravel(), (j[:, None] * n + jj).ravel()]
    data = [diag_blocks.reshape(-1, n * n).ravel(), off.reshape(-1, n * n).ravel()]
    if vdiag is not None:
        rows.append(np.arange(size * n))
        cols.append(np.arange(size * n))
        data.append(np.asarray(vdiag, float).ravel())
    K = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(size * n, size * n))
    asym = abs(K - K.T).max() if K.nnz else 0.0
    if asym > 1e-10:
        raise NumericalError(f"twisted operator assembly is asymmetric ({asym:.2e})")
    stiff = K.toarray() if size * n <= dense_limit else K
    return SymmetricOperator(stiff, np.ones(size * n), n)


def da_matrix(disc: Discretization, conn: ConnectionMatrices) -> sp.csr_matrix:
    """Sparse ``D_A``: rows indexed by ``(pair, component)``."""
    return _da_from_pairs(disc.size, conn.n, disc.pairs, conn.A)


def _da_from_pairs(size: int, n: int, pairs: np.ndarray, A: np.ndarray) -> sp.csr_matrix:
    P = pairs.shape[0]
    i, j = pairs[:, 0], pairs[:, 1]
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    k = np.arange(P)
    rows = np.concatenate([(k[:, None] * n + np.arange(n)).ravel(), (k[:, None] * n + ii).ravel()])
    cols = np.concatenate([(j[:, None] * n + np.arange(n)).ravel(), (i[:, None] * n + jj).ravel()])
    data = np.concatenate([np.ones(P * n), -A.reshape(-1, n * n).ravel()])
    return sp.csr_matrix((data, (rows, cols)), shape=(P * n, size * n))


def apply_DA(disc: Discretization, conn: ConnectionMatrices, f: np.ndarray) -> EdgeFunction:
    """``(D_A f)(p, q) = f(q) - A(p, q) f(p)`` on ordered neighbour pairs."""
    f = np.asarray(f, float).reshape(disc.size, conn.n)
    i, j = disc.pairs[:, 0], disc.pairs[:, 1]
    vals = f[j] - np.einsum("kab,kb->ka", conn.A, f[i])
    return EdgeFunction(disc.pairs, vals)


def edge_inner(F: EdgeFunction, G: EdgeFunction) -> float:
    """``(F, G) = 1/2 sum_p sum_q F(p,q) . G(p,q)``."""
    return 0.5 * float(np.sum(F.values * G.values))


# ---------------------------------------------------------------------------
# smoothing and discretising


def partition_of_unity(disc: Discretization) -> sp.csr_matrix:
    """Tent partition ``psi`` (``|X| x N``) subordinate to ``{B(p, 2 eps)}``."""
    raw = np.clip(1.0 - disc.dist / (2.0 * disc.epsilon), 0.0, None)
    raw[~np.isfinite(disc.dist)] = 0.0
    total = raw.sum(axis=0)
    if np.any(total <= 0):
        raise NumericalError("tent partition leaves a mesh vertex uncovered")
    return sp.csr_matrix(raw / total[None, :])


def smoothing_matrix(disc: Discretization, frames: Sequence[Frame], psi: sp.csr_matrix | None = None) -> sp.csr_matrix:
    """``S``: ``(Sf)(x) = sum_p psi_p(x) sum_i f_i(p) e_i^p(x)``, shape ``(nN, n|X|)``."""
    psi = partition_of_unity(disc) if psi is None else psi
    n = frames[0].n
    rows, cols, data = [], [], []
    aa, ii = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    aa, ii = aa.ravel(), ii.ravel()
    for p, f in enumerate(frames):
        row = psi.getrow(p)
        xs, w = row.indices, row.data
        E = f.at(xs)  # (m, n, n) [x, a, i]
        rows.append((xs[:, None] * n + aa).ravel())
        cols.append(np.broadcast_to(p * n + ii, (xs.size, n * n)).ravel())
        data.append((w[:, None, None] * E).reshape(xs.size, -1).ravel())
    N = disc.mesh.n_vertices
    return sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(N * n, disc.size * n))


def discretizing_matrix(disc: Discretization, frames: Sequence[Frame]) -> sp.csr_matrix:
    """``D``: average over ``B(p, 3 eps)`` of the frame-``p`` coordinates, shape ``(n|X|, nN)``."""
    n = frames[0].n
    measure = disc.mesh.measure
    rows, cols, data = [], [], []
    ia, aa = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ia, aa = ia.ravel(), aa.ravel()
    for p, f in enumerate(frames):
        xs = disc.members(p, 3.0)
        E = f.at(xs)
        G = np.einsum("xai,xaj->xij", E, E)
        w = np.linalg.eigvalsh(G)
        if np.any(w[:, -1] > GRAM_COND_MAX * w[:, 0]):
            raise NumericalError(f"frame at {f.p} is degenerate inside B(p, 3 eps)")
        C = np.linalg.solve(G, np.transpose(E, (0, 2, 1)))  # (m, n_i, n_a)
        wx = measure[xs] / measure[xs].sum()
        rows.append(np.broadcast_to(p * n + ia, (xs.size, n * n)).ravel())
        cols.append((xs[:, None] * n + aa).ravel())
        data.append((wx[:, None, None] * C).reshape(xs.size, -1).ravel())
    N = disc.mesh.n_vertices
    return sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(disc.size * n, N * n))


def smooth(disc: Discretization, frames: Sequence[Frame], psi: sp.csr_matrix | None, f: np.ndarray) -> np.ndarray:
    """Section ``Sf`` as an ``(N, n)`` array."""
    S = smoothing_matrix(disc, frames, psi)
    return (S @ np.asarray(f, float).ravel()).reshape(disc.mesh.n_vertices, -1)


def discretize_section(disc: Discretization, frames: Sequence[Frame], s: np.ndarray) -> np.ndarray:
    """Graph function ``Ds`` as an ``(|X|, n)`` array."""
    D = discretizing_matrix(disc, frames)
    return (D @ np.asarray(s, float).ravel()).reshape(disc.size, -1)


# ---------------------------------------------------------------------------
# serialisation


def twisted_to_json(conn: ConnectionMatrices, V: Potential) -> dict[str, Any]:
    X = conn.disc.X
    return {
        "mode": conn.mode,
        "A": {f"{int(X[i])},{int(X[j])}": conn.A[k].tolist() for k, (i, j) in enumerate(conn.disc.pairs)},
        "V": {str(int(X[i])): V.diag[i].tolist() for i in range(conn.disc.size)},
    }
