"""Symmetric sparse/dense matrix containers and solver kernels.

Provides the small, fixed vocabulary the rest of the library is written
against: CSR-backed symmetric matrices, a banded LDL^T factorization of SPD
matrices under a reverse Cuthill-McKee reordering, nullspace-deflated solves
for consistent singular SPD systems, and dense verification helpers (symmetric
eigenvalues, generalized condition numbers of preconditioned operators).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee

VERIFY_CAP = 6000  # largest n the dense verification helpers accept


class NotSPD(Exception):
    """Raised when a matrix required to be SPD (on the relevant subspace) is not."""


class CapExceeded(ValueError):
    """Raised when a dense verification helper is asked for a system above the cap."""


def _check_square_csr(m: sp.csr_matrix) -> sp.csr_matrix:
    m = sp.csr_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got {m.shape}")
    m.sum_duplicates()
    m.sort_indices()
    return m


@dataclass(frozen=True)
class SparseSym:
    """Symmetric sparse matrix in CSR form (values stored on both triangles)."""

    csr: sp.csr_matrix

    def __post_init__(self):
        m = _check_square_csr(self.csr)
        object.__setattr__(self, "csr", m)

    @staticmethod
    def from_coo(n: int, rows, cols, vals) -> "SparseSym":
        m = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        return SparseSym(m)

    @property
    def n(self) -> int:
        return self.csr.shape[0]

    @property
    def nnz(self) -> int:
        return self.csr.nnz

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()

    def diagonal(self) -> np.ndarray:
        return self.csr.diagonal()

    def symmetry_error(self) -> float:
        d = self.csr - self.csr.T
        denom = max(abs(self.csr).max(), 1.0)
        return float(abs(d).max() / denom) if d.nnz else 0.0


@dataclass(frozen=True)
class DenseSym:
    """Dense symmetric matrix for verification-scale computations."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"matrix must be square, got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def spmv(a: SparseSym, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, float)
    if x.shape[0] != a.n:
        raise ValueError(f"length mismatch: matrix n={a.n}, vector {x.shape[0]}")
    return a.csr @ x


def _as_dense(a) -> np.ndarray:
    if isinstance(a, SparseSym):
        return a.toarray()
    if isinstance(a, DenseSym):
        return a.values
    return np.asarray(a, float)


@dataclass
class SpdFactor:
    """Banded LDL^T factorization of an SPD matrix under an RCM reordering.

    Stores the permutation, the unit-lower factor in banded layout
    (band_unit[i, j] = L[perm-row j+i, j], band_unit[0, :] = 1), and the
    positive pivots d, so A[perm][:, perm] = L diag(d) L^T.
    """

    perm: np.ndarray
    band_unit: np.ndarray
    d: np.ndarray
    n: int
    _chol_band: np.ndarray = field(repr=False, default=None)
    _inv_perm: np.ndarray = field(repr=False, default=None)

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, float)
        if b.shape[0] != self.n:
            raise ValueError(f"length mismatch: n={self.n}, rhs {b.shape[0]}")
        y = scipy.linalg.cho_solve_banded(
            (self._chol_band, True), b[self.perm], check_finite=False
        )
        return y[self._inv_perm]


def factor_spd(a: SparseSym, pivot_tol: float = 1e-12) -> SpdFactor:
    """Factor an SPD SparseSym; raises NotSPD on failure or tiny/negative pivots."""
    m = a.csr
    n = m.shape[0]
    perm = np.asarray(reverse_cuthill_mckee(m, symmetric_mode=True), dtype=np.int64)
    mp = m[perm][:, perm].tocoo()
    bw = int(np.max(np.abs(mp.row - mp.col))) if mp.nnz else 0
    ab = np.zeros((bw + 1, n))
    lower = mp.row >= mp.col
    ab[mp.row[lower] - mp.col[lower], mp.col[lower]] = mp.data[lower]
    try:
        cb = scipy.linalg.cholesky_banded(ab, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotSPD(f"banded Cholesky failed: {exc}") from None
    d = cb[0] ** 2
    max_diag = float(np.max(np.abs(m.diagonal()))) if n else 0.0
    if n and float(d.min()) <= pivot_tol * max_diag:
        raise NotSPD(
            f"pivot {d.min():.3e} below tolerance {pivot_tol:.0e} * {max_diag:.3e}"
        )
    band_unit = cb / cb[0]
    inv_perm = np.empty_like(perm)
    inv_perm[perm] = np.arange(n)
    return SpdFactor(
        perm=perm, band_unit=band_unit, d=d, n=n, _chol_band=cb, _inv_perm=inv_perm
    )


def _orthonormal_nullspace(nullspace: np.ndarray, n: int) -> np.ndarray:
    v = np.asarray(nullspace, float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] != n:
        raise ValueError(f"nullspace length {v.shape[0]} != n {n}")
    q, r = np.linalg.qr(v)
    if np.min(np.abs(np.diag(r))) < 1e-12 * max(np.max(np.abs(r)), 1.0):
        raise ValueError("nullspace basis is rank deficient")
    return q


@dataclass
class DeflatedFactor:
    """Solver for a consistent singular SPD system A x = b with known nullspace.

    Grounds one row/column per nullspace vector (chosen by pivoted QR on the
    nullspace for stability), factors the reduced SPD matrix, and projects the
    right-hand side and solution onto the orthogonal complement of the
    nullspace. For b in range(A) the result is the exact minimum-norm solution:
    the grounded solve leaves a residual supported on the dropped indices, and
    that residual is orthogonal to the nullspace, hence zero.
    """

    a: SparseSym
    nullspace: np.ndarray
    q: np.ndarray = field(init=False)
    dropped: np.ndarray = field(init=False)
    keep: np.ndarray = field(init=False)
    inner: SpdFactor = field(init=False)

    def __post_init__(self):
        n = self.a.n
        self.q = _orthonormal_nullspace(self.nullspace, n)
        m = self.q.shape[1]
        _, _, piv = scipy.linalg.qr(self.q.T, pivoting=True)
        self.dropped = np.sort(piv[:m])
        keep = np.ones(n, bool)
        keep[self.dropped] = False
        self.keep = np.flatnonzero(keep)
        reduced = self.a.csr[self.keep][:, self.keep]
        self.inner = factor_spd(SparseSym(reduced))

    def project(self, x: np.ndarray) -> np.ndarray:
        return x - self.q @ (self.q.T @ x)

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = self.project(np.asarray(b, float))
        x = np.zeros(self.a.n)
        x[self.keep] = self.inner.solve(b[self.keep])
        return self.project(x)


def solve_deflated(a, b: np.ndarray, nullspace: np.ndarray = None) -> np.ndarray:
    """Minimum-norm solve of a consistent singular SPD system.

    Accepts either a prepared DeflatedFactor or a SparseSym plus nullspace.
    """
    if isinstance(a, DeflatedFactor):
        return a.solve(b)
    if nullspace is None:
        raise ValueError("nullspace required when passing an unfactored matrix")
    return DeflatedFactor(a, nullspace).solve(b)


def _check_cap(n: int):
    if n > VERIFY_CAP:
        raise CapExceeded(f"dense verification limited to n <= {VERIFY_CAP}, got {n}")


def dense_eig_sym(a) -> np.ndarray:
    """All eigenvalues of a symmetric matrix, ascending."""
    ad = _as_dense(a)
    _check_cap(ad.shape[0])
    ad = 0.5 * (ad + ad.T)
    return scipy.linalg.eigvalsh(ad)


def gen_condition(a, apply_pinv) -> float:
    """Spectral condition number of P^{-1} A for SPD A and SPD preconditioner P.

    Materializes W = P^{-1} column by column, symmetrizes, Cholesky-factors
    W = L L^T, and returns the eigenvalue ratio of L^T A L (similar to W A).
    Raises NotSPD if W or the preconditioned spectrum is not positive.
    """
    ad = _as_dense(a)
    n = ad.shape[0]
    _check_cap(n)
    w = np.empty((n, n))
    e = np.zeros(n)
    for i in range(n):
        e[i] = 1.0
        w[:, i] = apply_pinv(e.copy())
        e[i] = 0.0
    w = 0.5 * (w + w.T)
    try:
        low = scipy.linalg.cholesky(w, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NotSPD(f"preconditioner application is not SPD: {exc}") from None
    ev = scipy.linalg.eigvalsh(low.T @ (0.5 * (ad + ad.T)) @ low)
    if ev[0] <= 0.0:
        raise NotSPD(f"preconditioned operator has nonpositive eigenvalue {ev[0]:.3e}")
    return float(ev[-1] / ev[0])
