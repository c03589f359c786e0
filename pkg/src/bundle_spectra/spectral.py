"""Symmetric generalised eigenproblems ``K v = lambda M v`` with diagonal mass.

The rough Laplacian of a bundle is assembled from its edge transports;
Neumann ball problems restrict the same quadratic form and mass to the
vertices of a ball.  Small problems go to a dense solver, large ones to
shift-invert Lanczos followed by a Rayleigh-Ritz cleanup.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bundle import Bundle
from .errors import NumericalError, ValidationError
from .geometry import Ball

DENSE_LIMIT = 6000
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SymmetricOperator:
    """Stiffness matrix ``K`` and diagonal mass ``M``.

    The operator is ``A = M^{-1} K``, self-adjoint in the mass inner product.
    ``support`` lists the mesh vertices of a restricted (ball) operator.
    """

    stiffness: sp.spmatrix | np.ndarray
    mass: np.ndarray
    rank: int = 1
    support: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return int(self.mass.size)

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.stiffness)

    def apply(self, x: np.ndarray) -> np.ndarray:
        y = self.stiffness @ x
        return y / self.mass if y.ndim == 1 else y / self.mass[:, None]

    def quadratic(self, x: np.ndarray, y: np.ndarray | None = None) -> float:
        y = x if y is None else y
        return float(y @ (self.stiffness @ x))

    def mass_inner(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(np.sum(self.mass * x * y))

    def dense(self) -> np.ndarray:
        K = self.stiffness.toarray() if self.is_sparse else np.asarray(self.stiffness)
        return K

    def norm_estimate(self) -> float:
        """Gershgorin bound on the spectral radius of ``M^{-1/2} K M^{-1/2}``."""
        if self.is_sparse:
            rows = np.asarray(abs(self.stiffness).sum(axis=1)).ravel()
        else:
            rows = np.abs(self.stiffness).sum(axis=1)
        return float(np.max(rows / self.mass)) if self.dim else 0.0


@dataclass(frozen=True)
class SpectrumResult:
    """Ascending eigenvalues, mass-orthonormal eigenvectors (columns), residuals."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray

    def __len__(self) -> int:
        return int(self.eigenvalues.size)

    def to_rows(self) -> list[tuple[int, float, float]]:
        return [(i + 1, float(l), float(r)) for i, (l, r) in enumerate(zip(self.eigenvalues, self.residuals))]


def _sign_fix(V: np.ndarray) -> np.ndarray:
    """Make the first clearly nonzero coordinate of each column positive."""
    if V.size == 0:
        return V
    scale = np.abs(V).max(axis=0)
    significant = np.abs(V) > 1e-8 * np.where(scale > 0, scale, 1.0)
    first = np.argmax(significant, axis=0)
    signs = np.sign(V[first, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _residuals(op: SymmetricOperator, lam: np.ndarray, V: np.ndarray) -> np.ndarray:
    R = op.stiffness @ V - V * op.mass[:, None] * lam[None, :]
    num = np.sqrt(np.sum(R**2 / op.mass[:, None], axis=0))
    den = np.sqrt(np.sum(V**2 * op.mass[:, None], axis=0))
    scale = max(1.0, op.norm_estimate())
    return num / (den * scale)


def eigs(op: SymmetricOperator, k: int, dense_limit: int = DENSE_LIMIT) -> SpectrumResult:
    """The ``k`` smallest eigenpairs of ``K v = lambda M v``.

    Residuals are ``|M^{-1/2}(K v - lambda M v)| / (|v|_M * max(1, |A|))``
    with ``|A|`` a Gershgorin bound, so the tolerance is scale free.

    Raises:
        ValidationError: ``k`` outside ``1..dim``.
        NumericalError: Residuals above ``1e-8`` after the solve.
    """
    dim = op.dim
    if not 1 <= k <= dim:
        raise ValidationError(f"requested {k} eigenpairs of a {dim}-dimensional operator")
    dinv = 1.0 / np.sqrt(op.mass)
    if dim <= dense_limit:
        K = op.dense()
        Kh = dinv[:, None] * K * dinv[None, :]
        Kh = 0.5 * (Kh + Kh.T)
        if k == dim:
            lam, Y = sla.eigh(Kh)
        else:
            lam, Y = sla.eigh(Kh, subset_by_index=[0, k - 1])
        V = dinv[:, None] * Y
    else:
        K = sp.csr_matrix(op.stiffness)
        M = sp.diags(op.mass)
        sigma = -1e-6 * op.norm_estimate()
        v0 = np.cos(0.7 * np.arange(dim)) + 1.5
        ncv = min(dim, max(2 * k + 1, k + 16))
        try:
            _, V = spla.eigsh(K, k=k, M=M, sigma=sigma, which="LM", v0=v0, ncv=ncv, tol=0.0, maxiter=5000)
        except spla.ArpackNoConvergence as exc:
            raise NumericalError(f"shift-invert Lanczos did not converge: {exc}") from None
        # Rayleigh-Ritz on the returned basis restores exact M-orthonormality
        Kq = V.T @ (K @ V)
        Mq = V.T @ (V * op.mass[:, None])
        lam, Z = sla.eigh(0.5 * (Kq + Kq.T), 0.5 * (Mq + Mq.T))
        V = V @ Z
    V = _sign_fix(V)
    res = _residuals(op, lam, V)
    if np.any(res > RESIDUAL_TOL):
        raise NumericalError(f"eigenpairs failed the residual check: max residual {res.max():.2e}")
    return SpectrumResult(np.asarray(lam, float), V, res)


def rayleigh(op: SymmetricOperator, x: np.ndarray) -> float:
    """``x^T K x / x^T M x``."""
    den = op.mass_inner(x, x)
    if den <= 0:
        raise ValidationError("Rayleigh quotient of the zero vector")
    return op.quadratic(x) / den


def _assemble(n: int, nv: int, u: np.ndarray, v: np.ndarray, w: np.ndarray, U: np.ndarray) -> sp.csr_matrix:
    """Stiffness of ``sum_e w_e |s(v) - U_e s(u)|^2`` on ``nv`` vertices."""
    deg = np.bincount(u, weights=w, minlength=nv) + np.bincount(v, weights=w, minlength=nv)
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    rows_vu = (v[:, None] * n + ii[None, :]).ravel()
    cols_vu = (u[:, None] * n + jj[None, :]).ravel()
    vals = (-w[:, None] * U.reshape(-1, n * n)).ravel()
    diag_idx = np.arange(nv * n)
    rows = np.concatenate([rows_vu, cols_vu, diag_idx])
    cols = np.concatenate([cols_vu, rows_vu, diag_idx])
    data = np.concatenate([vals, vals, np.repeat(deg, n)])
    return sp.csr_matrix((data, (rows, cols)), shape=(nv * n, nv * n))


def rough_laplacian(bundle: Bundle) -> SymmetricOperator:
    """Connection Laplacian with quadratic form ``sum_e w_e |s(v) - U(u,v) s(u)|^2``."""
    mesh = bundle.mesh
    sel = mesh.weights > 0
    K = _assemble(bundle.rank, mesh.n_vertices, mesh.edges[sel, 0], mesh.edges[sel, 1],
                  mesh.weights[sel], bundle.transports[sel])
    return SymmetricOperator(K, np.repeat(mesh.measure, bundle.rank), bundle.rank)


def restricted_operator(bundle: Bundle, members: np.ndarray) -> SymmetricOperator:
    """Variational (natural boundary) restriction to a sorted vertex subset."""
    mesh = bundle.mesh
    members = np.asarray(members, dtype=np.int64)
    local = np.full(mesh.n_vertices, -1, dtype=np.int64)
    local[members] = np.arange(members.size)
    u, v = mesh.edges[:, 0], mesh.edges[:, 1]
    sel = (mesh.weights > 0) & (local[u] >= 0) & (local[v] >= 0)
    K = _assemble(bundle.rank, members.size, local[u[sel]], local[v[sel]], mesh.weights[sel], bundle.transports[sel])
    return SymmetricOperator(K, np.repeat(mesh.measure[members], bundle.rank), bundle.rank, members)


def neumann_ball_operator(bundle: Bundle, ball: Ball) -> SymmetricOperator:
    """Rough-Laplacian form and mass restricted to the vertices of ``ball``."""
    if ball.members.size < bundle.rank + 2:
        raise ValidationError(f"ball around {ball.center} has too few vertices for a rank-{bundle.rank} problem")
    return restricted_operator(bundle, ball.members)


def spectrum_to_csv(result: SpectrumResult) -> str:
    lines = ["index,eigenvalue,residual"]
    for i, lam, r in result.to_rows():
        lines.append(f"{i},{lam!r},{r!r}")
    return "\n".join(lines) + "\n"
