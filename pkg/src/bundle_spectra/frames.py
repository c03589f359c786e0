"""Local extension frames built from Neumann eigensections on net balls.

Around every net vertex ``p`` the rough Laplacian is restricted to
``B(p, 10 eps)``.  Eigensections whose eigenvalue sits below ``delta`` fill
the first ``mu(p)`` frame slots; the remaining slots are an orthonormal
completion at ``p`` carried outward by parallel transport along the radial
shortest-path tree.  A frame is accepted only if its Gram matrix stays
within ``alpha`` of the identity on ``B(p, 8 eps)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Sequence

import numpy as np

from .bundle import Bundle
from .errors import FrameError, ValidationError
from .netdisc import Discretization
from .spectral import SpectrumResult, eigs, restricted_operator

BALL_FACTOR = 10.0
GRAM_FACTOR = 8.0
GRADIENT_FACTOR = 9.0
CLUSTER_RTOL = 1e-8


@dataclass(frozen=True)
class FrameConfig:
    """Frame parameters; ``None`` selects the defaults below.

    Attributes:
        alpha: Gram tolerance, default ``1 / (2 (n + 1))``.
        delta: Eigenvalue threshold, default ``0.05 (pi / (10 eps))**2``.
    """

    alpha: float | None = None
    delta: float | None = None

    def resolve(self, n: int, epsilon: float) -> "FrameConfig":
        alpha = 1.0 / (2.0 * (n + 1)) if self.alpha is None else float(self.alpha)
        delta = 0.05 * (math.pi / (BALL_FACTOR * epsilon)) ** 2 if self.delta is None else float(self.delta)
        cfg = FrameConfig(alpha, delta)
        cfg.validate(n)
        return cfg

    def validate(self, n: int) -> None:
        if self.alpha is not None and not 0 < self.alpha < 1.0 / (n + 1):
            raise ValidationError(f"alpha must lie in (0, 1/(n+1)) = (0, {1.0 / (n + 1):.4g})")
        if self.delta is not None and not self.delta > 0:
            raise ValidationError("delta must be positive")


@dataclass(frozen=True, eq=False)
class Frame:
    """Frame ``{e_i^p}`` over ``B(p, 10 eps)``.

    ``sections[k, :, i]`` is ``e_i^p`` at mesh vertex ``members[k]``.
    """

    p: int
    index: int
    mu: int
    eigenvalues: np.ndarray
    members: np.ndarray
    dist: np.ndarray
    sections: np.ndarray
    volume: float
    gram_dev: float
    nabla_sup: np.ndarray | None = None

    @property
    def n(self) -> int:
        return int(self.sections.shape[1])

    @property
    def delta_prime(self) -> float:
        return (self.n + 1) * self.gram_dev

    def local(self, xs: np.ndarray | Sequence[int]) -> np.ndarray:
        """Positions of mesh vertices ``xs`` inside :attr:`members`."""
        xs = np.asarray(xs, dtype=np.int64)
        k = np.searchsorted(self.members, xs)
        k = np.minimum(k, self.members.size - 1)
        if np.any(self.members[k] != xs):
            raise ValidationError(f"vertex outside the frame ball of {self.p}")
        return k

    def at(self, xs: np.ndarray | Sequence[int]) -> np.ndarray:
        """Frame matrices ``E(x)`` (columns ``e_i``) at mesh vertices ``xs``."""
        return self.sections[self.local(xs)]

    def within(self, factor: float, epsilon: float) -> np.ndarray:
        """Local indices of members at distance below ``factor * eps``."""
        return np.flatnonzero(self.dist < factor * epsilon * (1 - 1e-9))


def compute_mu(spectrum: SpectrumResult | np.ndarray, delta: float, n: int | None = None) -> int:
    """Number of the first ``n`` ball eigenvalues that are ``<= delta``."""
    lam = spectrum.eigenvalues if isinstance(spectrum, SpectrumResult) else np.asarray(spectrum)
    n = lam.size if n is None else n
    if lam.size < n:
        raise ValidationError("ball spectrum shorter than the bundle rank")
    return int(np.count_nonzero(lam[:n] <= delta))


def _clusters(lam: np.ndarray) -> list[list[int]]:
    groups = [[0]]
    for i in range(1, lam.size):
        scale = max(1.0, abs(lam[i]))
        if abs(lam[i] - lam[groups[-1][-1]]) <= CLUSTER_RTOL * scale:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def _canonicalise(sig: np.ndarray, centre: int, lam: np.ndarray) -> np.ndarray:
    """Fix rotations inside degenerate eigenspaces by the values at the centre.

    ``sig`` has shape ``(m, n, k)``.  For each cluster the centre values are
    brought to lower-trapezoidal form with a positive diagonal.
    """
    out = sig.copy()
    for group in _clusters(lam):
        if len(group) < 2:
            continue
        Vc = sig[centre][:, group]  # n x c
        if np.linalg.matrix_rank(Vc, tol=1e-6 * max(1.0, np.abs(Vc).max())) < len(group):
            continue
        Q, R = np.linalg.qr(Vc.T)
        s = np.sign(np.diag(R))
        s[s == 0] = 1.0
        Q = Q * s[None, :]
        out[:, :, group] = np.einsum("xac,cd->xad", sig[:, :, group], Q)
    return out


def _align_with_J(s1: np.ndarray, centre: int, J: np.ndarray) -> np.ndarray:
    """Rotate ``s1`` inside ``span{s1, J s1}`` so its centre value is ``(+, 0)``."""
    v = s1[centre]
    Jv = J @ v
    theta = math.atan2(-v[1], Jv[1])
    c, s = math.cos(theta), math.sin(theta)
    out = c * s1 + s * s1 @ J.T
    if out[centre, 0] < 0:
        out = -out
    return out


def _completion(S: np.ndarray, n: int) -> np.ndarray:
    """Orthonormal basis of the complement of ``span(S)`` from coordinate vectors."""
    basis = []
    if S.shape[1]:
        Qs, _ = np.linalg.qr(S)
        basis = [Qs[:, j] for j in range(Qs.shape[1])]
    comp = []
    for k in range(n):
        if len(comp) == n - S.shape[1]:
            break
        w = np.zeros(n)
        w[k] = 1.0
        for _ in range(2):
            for b in basis + comp:
                w = w - (b @ w) * b
        nw = np.linalg.norm(w)
        if nw > 1e-6:
            comp.append(w / nw)
    return np.array(comp).T.reshape(n, n - S.shape[1])


def radial_transports(bundle: Bundle, disc: Discretization, i: int) -> np.ndarray:
    """Parallel transports ``tau_{x,p}`` from ``p = X[i]`` to every ball member."""
    tree = disc.tree(i)
    members = disc.members(i, BALL_FACTOR)
    n = bundle.rank
    T = np.zeros((bundle.mesh.n_vertices, n, n))
    T[tree.root] = np.eye(n)
    U = bundle.directed_transports
    for level in tree.depth_order[1:]:
        T[level] = np.einsum("xij,xjk->xik", U[tree.pred_edge[level]], T[tree.pred[level]])
    return T[members]


def build_frame(bundle: Bundle, disc: Discretization, i: int, config: FrameConfig | None = None) -> Frame:
    """Frame at net index ``i``.

    Raises:
        FrameError: The Gram deviation on ``B(p, 8 eps)`` exceeds ``alpha``.
    """
    n, eps = bundle.rank, disc.epsilon
    cfg = (config or FrameConfig()).resolve(n, eps)
    p = int(disc.X[i])
    members = disc.members(i, BALL_FACTOR)
    if members.size < n + 2:
        raise ValidationError(f"ball around {p} has too few vertices")
    op = restricted_operator(bundle, members)
    spec = eigs(op, min(n + 1, op.dim))
    lam = spec.eigenvalues
    volume = float(bundle.mesh.measure[members].sum())
    m = members.size
    centre = int(np.searchsorted(members, p))
    sig = spec.eigenvectors.reshape(m, n, -1) * math.sqrt(volume)
    sig = _canonicalise(sig, centre, lam)
    mu = compute_mu(lam, cfg.delta, n)
    if bundle.class_hint == "rank_one_complex" and mu == n:
        s1 = _align_with_J(sig[:, :, 0], centre, bundle.J)
        sig = sig.copy()
        sig[:, :, 0] = s1
        sig[:, :, 1] = s1 @ bundle.J.T
    E = np.empty((m, n, n))
    E[:, :, :mu] = sig[:, :, :mu]
    if mu < n:
        comp = _completion(sig[centre][:, :mu], n)
        T = radial_transports(bundle, disc, i)
        E[:, :, mu:] = np.einsum("xij,jk->xik", T, comp)
    dist = disc.dist[i, members]
    inner = dist < GRAM_FACTOR * eps * (1 - 1e-9)
    G = np.einsum("xai,xaj->xij", E[inner], E[inner])
    gram_dev = float(np.abs(G - np.eye(n)).max())
    frame = Frame(p, i, mu, lam, members, dist, E, volume, gram_dev)
    if gram_dev > cfg.alpha:
        raise FrameError(
            f"frame not almost-orthonormal at p={p}: gram deviation {gram_dev:.3g} > alpha = {cfg.alpha:.3g}"
            " (delta too large for this geometry)"
        )
    return replace(frame, nabla_sup=_nabla_sup(bundle, frame, eps))


def _nabla_sup(bundle: Bundle, frame: Frame, eps: float) -> np.ndarray:
    mesh = bundle.mesh
    inner = frame.members[frame.within(GRADIENT_FACTOR, eps)]
    mask = np.zeros(mesh.n_vertices, bool)
    mask[inner] = True
    u, v = mesh.edges[:, 0], mesh.edges[:, 1]
    sel = np.flatnonzero(mask[u] & mask[v])
    if sel.size == 0:
        return np.zeros(frame.n)
    Eu, Ev = frame.at(u[sel]), frame.at(v[sel])
    diff = Ev - np.einsum("eab,ebi->eai", bundle.transports[sel], Eu)
    return (np.linalg.norm(diff, axis=1) / mesh.lengths[sel, None]).max(axis=0)


def certify_gram(frame: Frame, bundle: Bundle, epsilon: float) -> tuple[float, np.ndarray]:
    """Gram deviation on ``B(p, 8 eps)`` and per-slot ``|nabla e_i|`` sup on ``B(p, 9 eps)``."""
    inner = frame.within(GRAM_FACTOR, epsilon)
    E = frame.sections[inner]
    G = np.einsum("xai,xaj->xij", E, E)
    return float(np.abs(G - np.eye(frame.n)).max()), _nabla_sup(bundle, frame, epsilon)


def build_frames(bundle: Bundle, disc: Discretization, config: FrameConfig | None = None) -> tuple[Frame, ...]:
    """Frames for every net vertex, in net order."""
    return tuple(build_frame(bundle, disc, i, config) for i in range(disc.size))


def fit_power_law(lam: np.ndarray, sup: np.ndarray) -> tuple[float, float]:
    """Least-squares fit ``sup ~ c * lam**(s/2)``; returns ``(c, s)``."""
    lam, sup = np.asarray(lam, float), np.asarray(sup, float)
    ok = (lam > 0) & (sup > 0)
    if ok.sum() < 2:
        return float("nan"), float("nan")
    A = np.stack([np.ones(ok.sum()), 0.5 * np.log(lam[ok])], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(sup[ok]), rcond=None)
    return float(math.exp(coef[0])), float(coef[1])


def frames_to_json(frames: Sequence[Frame]) -> list[dict[str, Any]]:
    return [
        {"p": f.p, "mu": f.mu, "lambda_i": [float(x) for x in f.eigenvalues], "gram_dev": f.gram_dev}
        for f in frames
    ]
