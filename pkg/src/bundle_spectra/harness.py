"""End-to-end comparison of mesh and net spectra, transfer constants, sweeps."""

from __future__ import annotations

import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar

from .bundle import (Bundle, flat_bundle_from_representation, landau_line_bundle, rotation,
                     sphere_tangent_bundle, trivial_bundle)
from .errors import NumericalError, ValidationError
from .frames import Frame, FrameConfig, build_frames
from .geometry import FineMesh, below, build_mesh
from .netdisc import Discretization, epsilon_net
from .spectral import (DENSE_LIMIT, SpectrumResult, SymmetricOperator, _assemble, eigs,
                       rough_laplacian)
from .twisted import (ConnectionMatrices, Potential, assemble_twisted, build_connection,
                      build_potential, discretizing_matrix, resolve_mode, smoothing_matrix)

SCHEMA = 1
KERNEL_TOL = 1e-9
CSV_COLUMNS = ("k", "lambda_E", "lambda_XAV", "ratio_raw", "ratio_rescaled", "branch")
SWEEP_PARAMS = ("epsilon", "holonomy", "flux", "seed", "N")
MANIFOLDS = ("circle", "torus", "sphere")
BUNDLES = ("trivial", "flat", "landau", "tangent")


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class CompareConfig:
    """Everything needed to rebuild one comparison run.

    ``holonomy`` lists one rotation angle per fundamental generator (rank 2)
    or a sign angle in ``{0, pi}`` (rank 1).  ``flux`` is the number of flux
    quanta of a Landau bundle.  ``N`` means vertices per side on the circle
    and torus and subdivisions on the sphere.
    """

    manifold: str = "circle"
    L: float = 1.0
    L2: float | None = None
    N: int = 400
    N2: int | None = None
    radius: float = 1.0
    bundle: str = "flat"
    rank: int = 2
    holonomy: tuple[float, ...] = (0.0,)
    flux: int = 0
    epsilon: float = 0.05
    mode: str = "auto"
    K: int | None = None
    seed: int | None = None
    alpha: float | None = None
    delta: float | None = None
    enforce_hypotheses: bool = True
    constants: bool = True

    def __post_init__(self) -> None:
        if self.manifold not in MANIFOLDS:
            raise ValidationError(f"unknown manifold {self.manifold!r}")
        if self.bundle not in BUNDLES:
            raise ValidationError(f"unknown bundle kind {self.bundle!r}")
        object.__setattr__(self, "holonomy", tuple(float(x) for x in self.holonomy))

    @property
    def frame_config(self) -> FrameConfig:
        return FrameConfig(self.alpha, self.delta)

    def mesh_params(self) -> tuple[str, dict]:
        if self.manifold == "circle":
            return "circle", {"L": float(self.L), "N": int(self.N)}
        if self.manifold == "torus":
            L2 = self.L if self.L2 is None else self.L2
            N2 = self.N if self.N2 is None else self.N2
            return "torus", {"L1": float(self.L), "L2": float(L2), "N1": int(self.N), "N2": int(N2)}
        return "sphere", {"r": float(self.radius), "subdivisions": int(self.N)}

    def build_mesh(self) -> FineMesh:
        return build_mesh(*self.mesh_params())

    def build_bundle(self, mesh: FineMesh) -> Bundle:
        return make_bundle(mesh, self.bundle, self.rank, self.holonomy, self.flux)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["holonomy"] = list(self.holonomy)
        return {"schema": SCHEMA, **d}

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "CompareConfig":
        obj = dict(obj)
        schema = obj.pop("schema", SCHEMA)
        if schema != SCHEMA:
            raise ValidationError(f"unsupported config schema {schema!r}")
        names = set(cls.__dataclass_fields__)
        unknown = set(obj) - names
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        if "holonomy" in obj:
            h = obj["holonomy"]
            obj["holonomy"] = tuple(h) if isinstance(h, (list, tuple)) else (h,)
        return cls(**obj)


def make_bundle(mesh: FineMesh, kind: str, rank: int = 2, holonomy: Sequence[float] = (), flux: int = 0) -> Bundle:
    """Bundle of one of the built-in kinds on ``mesh``."""
    if kind == "trivial":
        return trivial_bundle(mesh, rank)
    if kind == "landau":
        return landau_line_bundle(mesh, flux)
    if kind == "tangent":
        return sphere_tangent_bundle(mesh)
    if kind != "flat":
        raise ValidationError(f"unknown bundle kind {kind!r}")
    ngen = {"circle": 1, "torus": 2, "sphere": 0}[mesh.manifold_tag]
    angles = list(holonomy) + [0.0] * max(0, ngen - len(holonomy))
    if len(angles) > ngen:
        raise ValidationError(f"{mesh.manifold_tag} takes {ngen} holonomy angle(s), got {len(angles)}")
    if rank == 2:
        gens = [rotation(a) for a in angles]
    elif rank == 1:
        gens = []
        for a in angles:
            c = math.cos(a)
            if abs(abs(c) - 1.0) > 1e-12:
                raise ValidationError("a real line bundle only admits holonomy angles 0 or pi")
            gens.append(np.array([[round(c)]], float))
    else:
        if any(abs(a) > 0 for a in angles):
            raise ValidationError("angle holonomy is defined for rank 1 and 2 only")
        gens = []
    return flat_bundle_from_representation(mesh, gens, rank=rank)


# ---------------------------------------------------------------------------
# spectra helpers


def net_spectrum(op: SymmetricOperator) -> np.ndarray:
    """Full ascending spectrum of a (dense-sized) net operator."""
    if op.dim > DENSE_LIMIT:
        raise ValidationError(f"net operator of dimension {op.dim} is too large for a full spectrum")
    K = op.dense() / op.mass[:, None]
    return sla.eigvalsh(0.5 * (K + K.T))


def _gen_min(A: np.ndarray, B: np.ndarray | None = None) -> float:
    if B is None:
        return float(sla.eigvalsh(A, subset_by_index=[0, 0])[0])
    return float(sla.eigvalsh(A, B, subset_by_index=[0, 0])[0])


def _gen_max(A: np.ndarray, B: np.ndarray | None = None) -> float:
    m = A.shape[0]
    if B is None:
        return float(sla.eigvalsh(A, subset_by_index=[m - 1, m - 1])[0])
    return float(sla.eigvalsh(A, B, subset_by_index=[m - 1, m - 1])[0])


def _sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def _threshold(Q: np.ndarray, G: np.ndarray, tau: float, B: np.ndarray | None, scale: float) -> float:
    """``max_{s >= 0} lambda_min(Q + s (G - tau B), B)``.

    Any ``Lam`` below this value certifies the implication
    ``f^T Q f <= Lam |f|_B^2  =>  f^T G f >= tau |f|_B^2``.  The objective is
    concave in ``s``.
    """
    Bm = np.eye(Q.shape[0]) if B is None else B

    def value(s: float) -> float:
        return _gen_min(_sym(Q + s * (G - tau * Bm)), B)

    hi = 10.0 * (scale + 1.0) / max(tau, 1e-300)
    res = minimize_scalar(lambda t: -value(hi * t * t), bounds=(0.0, 1.0), method="bounded",
                          options={"xatol": 1e-10})
    best = max(-float(res.fun), value(0.0))
    return best


# ---------------------------------------------------------------------------
# transfer constants


@dataclass(frozen=True)
class TransferConstants:
    """Measured constants of the smoothing (S) and discretising (D) maps.

    Raw values carry the units of the mesh operator; multiply ``c1`` by
    ``eps^2`` and divide ``c1_prime`` by ``eps^2`` for dimensionless forms.

    Attributes:
        c0: ``|Sf|^2 <= c0 |f|^2``.
        c1: ``|grad Sf|^2 <= c1 (|D_A f|^2 + (Vf, f))``.
        c2: ``|Sf|^2 >= c2 |f|^2`` whenever ``(|D_A f|^2 + (Vf,f)) <= Lam |f|^2``.
        Lam: Certified threshold for ``c2``.
        c0_prime: ``|Ds|^2 <= c0' |s|^2``.
        c1_prime: ``|D_A Ds|^2 + (V Ds, Ds) <= c1' |grad s|^2``.
        c2_prime: ``|Ds|^2 >= c2' |s|^2`` whenever ``|grad s|^2 <= Lam' |s|^2``.
        Lam_prime: Certified threshold for ``c2_prime``.
        c3: Upper bound for ``lambda_{n|X|}(E)`` from localized test sections.
        c3_prime: ``lambda_max`` of the net operator.
        exact_cone: False when ``c2_prime`` was certified only on the span of
            the computed rough eigensections.
        kernel_leak: Largest energy leaked across a kernel by S or D.
    """

    c0: float
    c1: float
    c2: float
    Lam: float
    c0_prime: float
    c1_prime: float
    c2_prime: float
    Lam_prime: float
    c3: float
    c3_prime: float
    exact_cone: bool
    kernel_leak: float

    @property
    def upper_envelope(self) -> float:
        """Bound on ``lambda_k(E) / lambda_k(X,A,V)`` implied by the constants."""
        return max(self.c1 / self.c2, self.c3 / self.Lam)

    @property
    def lower_envelope(self) -> float:
        """Lower bound on ``lambda_k(E) / lambda_k(X,A,V)`` implied by the constants."""
        return 1.0 / max(self.c1_prime / self.c2_prime, self.c3_prime / self.Lam_prime)

    def to_json(self) -> dict[str, Any]:
        d = asdict(self)
        d["upper_envelope"] = self.upper_envelope
        d["lower_envelope"] = self.lower_envelope
        return d


def dirichlet_test_sections(bundle: Bundle, disc: Discretization, frames: Sequence[Frame]) -> sp.csr_matrix:
    """Columns ``phi_p e_j^p``, with ``phi_p`` the first Dirichlet mode on ``B(p, eps/2)``."""
    mesh, n = bundle.mesh, bundle.rank
    sel = mesh.weights > 0
    K1 = _assemble(1, mesh.n_vertices, mesh.edges[sel, 0], mesh.edges[sel, 1], mesh.weights[sel],
                   np.ones((int(sel.sum()), 1, 1))).tocsr()
    rows, cols, data = [], [], []
    for i, f in enumerate(frames):
        xs = np.flatnonzero(below(disc.dist[i], 0.5 * disc.epsilon))
        Kb = K1[xs][:, xs].toarray()
        w, Y = sla.eigh(Kb, np.diag(mesh.measure[xs]), subset_by_index=[0, 0])
        phi = np.abs(Y[:, 0])
        E = f.at(xs)  # (m, n, n)
        for j in range(n):
            rows.append((xs[:, None] * n + np.arange(n)).ravel())
            cols.append(np.full(xs.size * n, i * n + j))
            data.append((phi[:, None] * E[:, :, j]).ravel())
    return sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(mesh.n_vertices * n, disc.size * n))


def _pinv_apply(K: sp.spmatrix, Y: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """``K^+ Y`` for a symmetric PSD sparse ``K`` with known kernel basis."""
    if kernel.shape[1] == 0:
        return spla.splu(sp.csc_matrix(K)).solve(Y)
    Qk, _ = np.linalg.qr(kernel)

    def proj(x: np.ndarray) -> np.ndarray:
        return x - Qk @ (Qk.T @ x)

    op = spla.LinearOperator(K.shape, matvec=lambda x: K @ x + Qk @ (Qk.T @ x), dtype=float)
    out = np.empty_like(Y)
    for c in range(Y.shape[1]):
        x, info = spla.cg(op, proj(Y[:, c]), rtol=1e-12, maxiter=20 * K.shape[0])
        if info != 0:
            raise NumericalError("conjugate gradients failed while applying the pseudo-inverse")
        out[:, c] = proj(x)
    return out


def transfer_constants(bundle: Bundle, disc: Discretization, frames: Sequence[Frame], net_op: SymmetricOperator,
                       rough: SpectrumResult, dense_limit: int = DENSE_LIMIT) -> TransferConstants:
    """Measure the smoothing and discretising constants for one configuration."""
    mesh, n = bundle.mesh, bundle.rank
    E_op = rough_laplacian(bundle)
    K = sp.csr_matrix(E_op.stiffness)
    m = E_op.mass
    S = smoothing_matrix(disc, frames)
    D = discretizing_matrix(disc, frames)
    L = _sym(net_op.dense())
    r = L.shape[0]
    wL, QL = sla.eigh(L)
    lscale = max(1.0, float(wL[-1]))
    ker = wL <= KERNEL_TOL * lscale

    # smoothing side
    G = _sym((S.T @ sp.diags(m) @ S).toarray())
    SKS = _sym((S.T @ K @ S).toarray())
    c0 = _gen_max(G)
    Wr = QL[:, ~ker] / np.sqrt(wL[~ker])[None, :]
    c1 = _gen_max(_sym(Wr.T @ SKS @ Wr)) if Wr.shape[1] else 0.0
    leak = 0.0
    if ker.any():
        Z = QL[:, ker]
        leak = float(np.abs(Z.T @ SKS @ Z).max())
        if leak > 1e-8 * max(1.0, c1):
            c1 = math.inf
    bottom = wL <= wL[0] + 1e-8 * lscale
    Bq = QL[:, bottom]
    c2 = 0.5 * _gen_min(_sym(Bq.T @ G @ Bq))
    if not c2 > 0:
        raise NumericalError("smoothing map annihilates the bottom net eigenspace")
    Lam = _threshold(L, G, c2, None, lscale)

    # discretising side
    Dm = D @ sp.diags(1.0 / m) @ D.T
    c0p = _gen_max(_sym(Dm.toarray()))
    Lh = (QL * np.sqrt(np.clip(wL, 0.0, None))[None, :]) @ QL.T
    Y = np.asarray(D.T @ Lh)
    escale = max(1.0, float(E_op.norm_estimate()))
    rk = rough.eigenvalues <= KERNEL_TOL * escale
    kernel_vecs = rough.eigenvectors[:, rk]
    if kernel_vecs.shape[1]:
        DZ = D @ kernel_vecs
        kl = float(np.abs(DZ.T @ L @ DZ).max())
        leak = max(leak, kl)
    dense = K.shape[0] <= dense_limit
    if dense:
        wK, UK = sla.eigh(_sym(K.toarray()))
        # stiffness eigenvalues carry the mass scale, so compare against their own top
        kk = wK <= KERNEL_TOL * max(float(wK[-1]), 1e-300)
        P = UK[:, ~kk].T @ Y
        c1p = _gen_max(_sym((P / wK[~kk][:, None]).T @ P))
        if kk.any():
            kl = float(np.abs(UK[:, kk].T @ np.asarray(D.T @ L @ D) @ UK[:, kk]).max()) if r else 0.0
            leak = max(leak, kl)
            if kl > 1e-8 * max(1.0, c1p):
                c1p = math.inf
    else:
        Xs = _pinv_apply(K, Y, kernel_vecs)
        c1p = _gen_max(_sym(Y.T @ Xs))
        if kernel_vecs.shape[1] and leak > 1e-8 * max(1.0, c1p):
            c1p = math.inf
    GD = (D.T @ D)
    if dense:
        Kd = _sym(K.toarray())
        Md = np.diag(m)
        Gd = _sym(GD.toarray())
        wb, Vb = sla.eigh(Kd, Md, subset_by_index=[0, min(n + 8, Kd.shape[0]) - 1])
        bsel = wb <= wb[0] + 1e-8 * escale
        c2p = 0.5 * _gen_min(_sym(Vb[:, bsel].T @ Gd @ Vb[:, bsel]))
        if not c2p > 0:
            raise NumericalError("discretising map annihilates the bottom rough eigenspace")
        Lamp = _threshold(Kd, Gd, c2p, Md, escale)
    else:
        V = rough.eigenvectors
        lam = rough.eigenvalues
        Gr = _sym(np.asarray(V.T @ (GD @ V)))
        bsel = lam <= lam[0] + 1e-8 * escale
        c2p = 0.5 * _gen_min(_sym(Gr[np.ix_(bsel, bsel)]))
        if not c2p > 0:
            raise NumericalError("discretising map annihilates the bottom rough eigenspace")
        Lamp = min(_threshold(np.diag(lam), Gr, c2p, None, escale), float(lam[-1]))

    # uniform caps
    T = dirichlet_test_sections(bundle, disc, frames)
    TK = _sym((T.T @ K @ T).toarray())
    TM = _sym((T.T @ sp.diags(m) @ T).toarray())
    c3 = _gen_max(TK, TM)
    c3p = float(wL[-1])
    return TransferConstants(c0, c1, c2, Lam, c0p, c1p, c2p, Lamp, c3, c3p, dense, leak)


# ---------------------------------------------------------------------------
# comparison


@dataclass(frozen=True)
class CompareRow:
    k: int
    lambda_E: float
    lambda_XAV: float
    ratio_raw: float | None
    ratio_rescaled: float | None
    branch: str


@dataclass(frozen=True, eq=False)
class Prepared:
    """Mode-independent stages of a comparison: net, frames and mesh spectrum."""

    mesh: FineMesh
    bundle: Bundle
    disc: Discretization
    frames: tuple[Frame, ...]
    rough: SpectrumResult
    frame_config: FrameConfig
    K: int


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    rows: tuple[CompareRow, ...]
    c_hat: float | None
    c_prime_hat: float | None
    config: dict
    net_eigenvalues: np.ndarray
    constants: TransferConstants | None
    frame_summary: dict
    caps: dict
    hypotheses_ok: bool
    conn: ConnectionMatrices | None = field(default=None, repr=False)
    potential: Potential | None = field(default=None, repr=False)

    @property
    def branch_occupancy(self) -> dict[str, int]:
        out = {"small": 0, "large": 0, "kernel": 0, "unclassified": 0}
        for row in self.rows:
            out[row.branch] = out.get(row.branch, 0) + 1
        return out

    def to_csv(self, prefix: Sequence[tuple[str, Any]] = ()) -> str:
        buf = io.StringIO()
        head = [name for name, _ in prefix] + list(CSV_COLUMNS)
        if not prefix:
            buf.write(",".join(head) + "\n")
        for row in self.rows:
            vals = [_fmt(v) for _, v in prefix] + [
                str(row.k), _fmt(row.lambda_E), _fmt(row.lambda_XAV), _fmt(row.ratio_raw),
                _fmt(row.ratio_rescaled), row.branch,
            ]
            buf.write(",".join(vals) + "\n")
        return buf.getvalue()

    def to_json(self) -> dict[str, Any]:
        return {
            "config": self.config,
            "rows": [asdict(r) for r in self.rows],
            "c_hat": self.c_hat,
            "c_prime_hat": self.c_prime_hat,
            "branch_occupancy": self.branch_occupancy,
            "constants": None if self.constants is None else _clean(self.constants.to_json()),
            "frames": self.frame_summary,
            "caps": _clean(self.caps),
            "hypotheses_ok": self.hypotheses_ok,
            "lambda_top_XAV": float(self.net_eigenvalues[-1]),
        }


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _clean(d: dict) -> dict:
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


def prepare(mesh: FineMesh, bundle: Bundle, epsilon: float, K: int | None = None, seed: int | None = None,
            frame_config: FrameConfig | None = None, enforce_hypotheses: bool = True) -> Prepared:
    """Net, frames and the first ``K`` rough eigenpairs (default ``min(20, n|X|)``)."""
    if bundle.mesh is not mesh:
        raise ValidationError("bundle lives on a different mesh")
    disc = epsilon_net(mesh, epsilon, seed, enforce_hypotheses)
    n = bundle.rank
    kmax = n * disc.size
    K = min(20, kmax) if K is None else int(K)
    if not 1 <= K <= kmax:
        raise ValidationError(f"K = {K} outside 1..n|X| = {kmax}")
    cfg = (frame_config or FrameConfig()).resolve(n, epsilon)
    frames = build_frames(bundle, disc, cfg)
    rough = eigs(rough_laplacian(bundle), K)
    return Prepared(mesh, bundle, disc, frames, rough, cfg, K)


def compare_prepared(prep: Prepared, mode: str = "auto", constants: bool = True) -> ComparisonReport:
    """Connection, potential, net spectrum and the per-k table for one mode."""
    bundle, disc, frames = prep.bundle, prep.disc, prep.frames
    mode = resolve_mode(bundle, mode)
    eps = disc.epsilon
    conn = build_connection(bundle, disc, frames, mode)
    V = build_potential(disc, frames, mode)
    op = assemble_twisted(disc, conn, V)
    lam_net = net_spectrum(op)
    const = transfer_constants(bundle, disc, frames, op, prep.rough) if constants else None
    lam_E = prep.rough.eigenvalues
    rows = []
    ratios = []
    for k in range(prep.K):
        le, lx = float(lam_E[k]), float(lam_net[k])
        ek, xk = le <= KERNEL_TOL, lx <= KERNEL_TOL
        if ek and xk:
            rows.append(CompareRow(k + 1, le, lx, None, None, "kernel"))
            continue
        if xk or ek:
            # one-sided kernel: no finite positive ratio exists
            rows.append(CompareRow(k + 1, le, lx, None, None, "kernel_XAV" if xk else "kernel_E"))
            continue
        ratio = le / lx
        ratios.append(ratio)
        if const is None:
            branch = "unclassified"
        else:
            branch = "small" if lx <= const.Lam else "large"
        rows.append(CompareRow(k + 1, le, lx, ratio, eps**2 * ratio, branch))
    nu = disc.nu_X
    norm_bound = max(1.0, float(np.linalg.norm(conn.A, ord=2, axis=(1, 2)).max() ** 2))
    vmax = float(V.diag.max())
    delta = prep.frame_config.delta
    caps = {
        "frame_norm_bound": norm_bound,
        "nu_X": nu,
        "lambda_top_XAV": float(lam_net[-1]),
        "cap": 2.0 * norm_bound * nu + max(delta * eps**2, 1.0),
        "cap_with_V": 2.0 * norm_bound * nu + max(delta * eps**2, 1.0, vmax),
        "V_max": vmax,
    }
    mus = np.array([f.mu for f in frames])
    frame_summary = {
        "mu_min": int(mus.min()),
        "mu_max": int(mus.max()),
        "gram_dev_max": float(max(f.gram_dev for f in frames)),
        "alpha": prep.frame_config.alpha,
        "delta": delta,
    }
    config = {
        "epsilon": eps,
        "delta": delta,
        "alpha": prep.frame_config.alpha,
        "mode": mode,
        "seed": disc.seed,
        "K": prep.K,
        "n": bundle.rank,
        "net_size": disc.size,
        "manifold": prep.mesh.manifold_tag,
        "mesh_params": dict(prep.mesh.params),
        "bundle_class": bundle.class_hint,
    }
    return ComparisonReport(
        tuple(rows), max(ratios) if ratios else None, min(ratios) if ratios else None, config, lam_net, const,
        frame_summary, caps, disc.hypotheses_ok, conn, V,
    )


def run_compare(mesh: FineMesh, bundle: Bundle, epsilon: float, mode: str = "auto", K: int | None = None, *,
                seed: int | None = None, frame_config: FrameConfig | None = None,
                enforce_hypotheses: bool = True, constants: bool = True) -> ComparisonReport:
    """Full pipeline: net, frames, ``A`` and ``V``, both spectra, and the table.

    Args:
        mesh: Fine mesh.
        bundle: Bundle on ``mesh``.
        epsilon: Net scale.
        mode: ``harmonic``, ``rank_one`` or ``auto``.
        K: Number of eigenvalues compared, default ``min(20, n|X|)``.
        seed: Net scan-order seed.
        frame_config: Frame thresholds.
        enforce_hypotheses: Reject ``eps > r0/20``.
        constants: Measure transfer constants and classify branches.
    """
    prep = prepare(mesh, bundle, epsilon, K, seed, frame_config, enforce_hypotheses)
    return compare_prepared(prep, mode, constants)


def run_config(config: CompareConfig) -> ComparisonReport:
    mesh = config.build_mesh()
    bundle = config.build_bundle(mesh)
    report = run_compare(mesh, bundle, config.epsilon, config.mode, config.K, seed=config.seed,
                         frame_config=config.frame_config, enforce_hypotheses=config.enforce_hypotheses,
                         constants=config.constants)
    return replace(report, conn=None, potential=None)


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepSpec:
    base: CompareConfig
    param: str
    values: tuple
    out: str | None = None

    def __post_init__(self) -> None:
        if self.param not in SWEEP_PARAMS:
            raise ValidationError(f"unknown sweep parameter {self.param!r}; choose from {SWEEP_PARAMS}")
        if len(self.values) == 0:
            raise ValidationError("sweep needs at least one value")
        object.__setattr__(self, "values", tuple(self.values))

    def config_for(self, value: Any) -> CompareConfig:
        b = self.base
        if self.param == "epsilon":
            return replace(b, epsilon=float(value))
        if self.param == "holonomy":
            return replace(b, holonomy=(float(value),) + tuple(b.holonomy[1:]))
        if self.param == "flux":
            return replace(b, flux=int(value))
        if self.param == "seed":
            return replace(b, seed=int(value))
        return replace(b, N=int(value))


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    reports: tuple[ComparisonReport, ...]
    csv: str

    @property
    def aggregate(self) -> dict[str, Any]:
        c = [r.c_hat for r in self.reports if r.c_hat is not None]
        cp = [r.c_prime_hat for r in self.reports if r.c_prime_hat is not None]
        return {
            "max_c_hat": max(c) if c else None,
            "min_c_prime_hat": min(cp) if cp else None,
            "c_hat_spread": max(c) / min(c) if c else None,
            "c_prime_hat_spread": max(cp) / min(cp) if cp else None,
        }


def worker_count(jobs: int) -> int:
    env = os.environ.get("BUNDLE_SPECTRA_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ValidationError("BUNDLE_SPECTRA_THREADS must be an integer") from None
    return max(1, min(cap, jobs))


def _run_point(args: tuple[CompareConfig, str, Any]) -> ComparisonReport:
    config, param, value = args
    try:
        return run_config(config)
    except (ValidationError, NumericalError) as exc:
        raise type(exc)(f"sweep point {param}={value} failed: {exc}") from None


def sweep(spec: SweepSpec, workers: int | None = None) -> SweepResult:
    """Run one comparison per value and concatenate the row blocks in value order."""
    jobs = [(spec.config_for(v), spec.param, v) for v in spec.values]
    workers = worker_count(len(jobs)) if workers is None else max(1, workers)
    if workers == 1:
        reports = [_run_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_point, jobs))
    head = "param,value," + ",".join(CSV_COLUMNS) + "\n"
    body = "".join(r.to_csv(prefix=(("param", spec.param), ("value", v))) for r, v in zip(reports, spec.values))
    result = SweepResult(spec, tuple(reports), head + body)
    if spec.out:
        with open(spec.out, "w", encoding="utf-8") as fh:
            fh.write(result.csv)
    return result


PLOT_TEMPLATE = '''"""Plot eigenvalue ratios from {csv_name}."""
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else {csv_path!r}
rows = list(csv.DictReader(open(path)))
groups = {{}}
for r in rows:
    if not r["ratio_rescaled"]:
        continue
    key = r.get("value", "")
    groups.setdefault(key, []).append((int(r["k"]), float(r["ratio_rescaled"])))
fig, ax = plt.subplots()
for key, pts in groups.items():
    ks, ys = zip(*pts)
    ax.plot(ks, ys, marker="o", label=str(key) if key else None)
ax.set_xlabel("k")
ax.set_ylabel("eps^2 lambda_k(E) / lambda_k(X,A,V)")
if any(groups):
    ax.legend(title=rows[0].get("param", ""))
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=120)
'''


def write_plot_script(csv_path: str, script_path: str) -> str:
    """Write a standalone matplotlib script that plots the ratio columns."""
    text = PLOT_TEMPLATE.format(csv_name=os.path.basename(csv_path), csv_path=csv_path)
    with open(script_path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return script_path
