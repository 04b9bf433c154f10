"""Low-lying eigenpairs of a symmetric graph Laplacian.

Two solver paths are available: a dense symmetric decomposition (LAPACK)
for moderate sizes, and shift-invert Lanczos (ARPACK) for large or sparse
Laplacians.  Both finish with a Rayleigh-Ritz pass so the returned vectors
are orthonormal to machine precision, and both apply the same sign
convention (first entry with magnitude above 1e-12 is positive).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy import sparse
from scipy.sparse.linalg import eigsh

from .errors import (
    DisconnectedGraphError,
    NumericError,
    ParameterError,
    UnsupportedNormalizationError,
)
from .graph import LaplacianBundle, dump_matrix, load_matrix

ZERO_TOL = 1e-8
SIGN_TOL = 1e-12
DENSE_MAX = 2000
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    method: str = "dense"

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    @property
    def n_nodes(self) -> int:
        return self.eigenfunctions.shape[0]

    def truncate(self, K: int) -> "Spectrum":
        if not 1 <= K <= self.n_modes:
            raise ParameterError(f"cannot keep {K} of {self.n_modes} modes")
        return Spectrum(self.eigenvalues[:K], self.eigenfunctions[:, :K], self.method)

    def permuted(self, perm) -> "Spectrum":
        """Reorder nodes (rows of the eigenfunction matrix)."""
        return Spectrum(self.eigenvalues, self.eigenfunctions[np.asarray(perm)], self.method)


@dataclass(frozen=True)
class SpectralEmbedding:
    coords: np.ndarray
    first: int


def _fix_signs(V: np.ndarray) -> np.ndarray:
    V = V.copy()
    for m in range(V.shape[1]):
        big = np.flatnonzero(np.abs(V[:, m]) > SIGN_TOL)
        if big.size and V[big[0], m] < 0:
            V[:, m] = -V[:, m]
    return V


def _rayleigh_ritz(L, V):
    Q, _ = np.linalg.qr(V)
    LQ = L @ Q
    H = Q.T @ LQ
    H = 0.5 * (H + H.T)
    theta, Y = np.linalg.eigh(H)
    return theta, Q @ Y


def _dense(L, K):
    L = L.toarray() if sparse.issparse(L) else np.asarray(L)
    vals, vecs = sla.eigh(L, subset_by_index=[0, K - 1], driver="evr")
    return vals, vecs


def start_vector(n: int) -> np.ndarray:
    v0 = 1.0 / np.arange(1, n + 1)
    return v0 / np.linalg.norm(v0)


def _iterative(L, K):
    n = L.shape[0]
    if sparse.issparse(L):
        scale = float(abs(L).sum(axis=1).max())
    else:
        scale = float(np.abs(L).sum(axis=1).max())
    # L is singular (zero mode); shifting just below 0 keeps (L - s I) invertible
    shift = -1e-4 * max(scale, 1e-300)
    ncv = min(n, max(2 * K + 1, 20))
    if K >= n - 1:
        return _dense(L, K)
    vals, vecs = eigsh(L, k=K, sigma=shift, which="LM", v0=start_vector(n), ncv=ncv, tol=0.0)
    return vals, vecs


def lowest_eigenpairs(bundle: LaplacianBundle, K: int, method: str = "auto") -> Spectrum:
    """The ``K`` smallest eigenvalues (ascending) and orthonormal eigenvectors.

    ``method`` is ``"dense"``, ``"iterative"`` or ``"auto"`` (dense for at most
    2000 nodes and dense storage, iterative otherwise).
    """
    if not bundle.symmetric:
        raise UnsupportedNormalizationError(
            f"p_exp={bundle.p_exp} != q_exp={bundle.q_exp}: Laplacian is not symmetric"
        )
    n = bundle.n
    if not 1 <= K <= n:
        raise ParameterError(f"K={K} must satisfy 1 <= K <= {n}")
    if method == "auto":
        method = "dense" if (n <= DENSE_MAX and not bundle.is_sparse) else "iterative"
    if method == "dense":
        vals, vecs = _dense(bundle.L, K)
    elif method == "iterative":
        vals, vecs = _iterative(bundle.L, K)
    else:
        raise ParameterError(f"unknown eigensolver method {method!r}")
    vals, vecs = _rayleigh_ritz(bundle.L, vecs)
    order = np.argsort(vals, kind="stable")
    vals, vecs = vals[order], _fix_signs(vecs[:, order])
    spec = Spectrum(vals, vecs, method)
    res = residuals(bundle, spec)
    bound = RESIDUAL_TOL * max(1.0, float(vals[-1]))
    if not np.all(res <= bound):
        raise NumericError(
            f"eigen-residual {res.max():.3e} exceeds {bound:.1e} ({method} solver)"
        )
    return spec


def residuals(bundle: LaplacianBundle, spec: Spectrum) -> np.ndarray:
    Phi = spec.eigenfunctions
    R = bundle.L @ Phi - Phi * spec.eigenvalues
    return np.linalg.norm(R, axis=0)


def smallest_nonzero(spec: Spectrum, tol: float = ZERO_TOL) -> float:
    """Smallest eigenvalue above ``tol``; the default bandwidth for the regularizer."""
    nz = spec.eigenvalues[spec.eigenvalues > tol]
    if nz.size == 0:
        raise DisconnectedGraphError(int(np.sum(spec.eigenvalues <= tol)))
    return float(nz[0])


def fiedler(spec: Spectrum, tol: float = ZERO_TOL) -> np.ndarray:
    if spec.n_modes < 2:
        raise ParameterError("Fiedler vector needs at least 2 modes")
    null = int(np.sum(spec.eigenvalues <= tol))
    if null != 1:
        raise DisconnectedGraphError(null)
    return spec.eigenfunctions[:, null].copy()


def embed(spec: Spectrum, first: int = 0, count: int | None = None) -> SpectralEmbedding:
    """Rows are node coordinates in modes ``first .. first+count-1`` (0-based)."""
    if count is None:
        count = spec.n_modes - first
    if first < 0 or count < 1 or first + count > spec.n_modes:
        raise ParameterError(
            f"mode range [{first}, {first + count}) outside 0..{spec.n_modes}"
        )
    return SpectralEmbedding(spec.eigenfunctions[:, first:first + count].copy(), first)


def save_spectrum(spec: Spectrum, directory, stem: str = "spectrum") -> None:
    directory = Path(directory)
    with (directory / f"{stem}_eigenvalues.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "eigenvalue"])
        for m, lam in enumerate(spec.eigenvalues):
            w.writerow([m, repr(float(lam))])
    dump_matrix(spec.eigenfunctions, directory / f"{stem}_eigenfunctions.bin", "eigenfunctions")


def load_spectrum(directory, stem: str = "spectrum") -> Spectrum:
    directory = Path(directory)
    with (directory / f"{stem}_eigenvalues.csv").open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    vals = np.array([float(r[1]) for r in rows])
    Phi, _ = load_matrix(directory / f"{stem}_eigenfunctions.bin")
    return Spectrum(vals, Phi, "file")
