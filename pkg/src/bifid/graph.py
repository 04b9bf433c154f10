"""Complete weighted graph over scaled data points.

Adjacency uses a Gaussian kernel on Euclidean distance, either with one
global bandwidth or with per-point self-tuned bandwidths (distance to the
k-th nearest neighbour).  The Laplacian family is
``L = D^-p (D - W) D^-q`` with ``D`` the diagonal degree matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .dataset import Dataset
from .errors import DegenerateDataError, DimensionError, ParameterError, StateError

DEFAULT_NEIGHBOR_RANK = 7
DENSE_LIMIT = 10_000
SPARSE_DROP = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    mode: str = "fixed"
    sigma: float = 0.25
    neighbor_rank: int = DEFAULT_NEIGHBOR_RANK

    def __post_init__(self):
        if self.mode not in ("fixed", "self_tuned"):
            raise ParameterError(f"unknown kernel mode {self.mode!r}")
        if self.mode == "fixed" and not self.sigma > 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if self.mode == "self_tuned" and self.neighbor_rank < 1:
            raise ParameterError(f"neighbor_rank must be >= 1, got {self.neighbor_rank}")

    @classmethod
    def fixed(cls, sigma: float) -> "KernelSpec":
        return cls("fixed", sigma=sigma)

    @classmethod
    def self_tuned(cls, k: int = DEFAULT_NEIGHBOR_RANK) -> "KernelSpec":
        return cls("self_tuned", neighbor_rank=k)

    def to_json(self) -> dict:
        if self.mode == "fixed":
            return {"mode": "fixed", "sigma": self.sigma}
        return {"mode": "self_tuned", "neighbor_rank": self.neighbor_rank}


@dataclass(frozen=True)
class LaplacianBundle:
    W: np.ndarray
    deg: np.ndarray
    L: np.ndarray
    p_exp: float
    q_exp: float
    kernel: KernelSpec | None = None

    @property
    def n(self) -> int:
        return self.deg.size

    @property
    def symmetric(self) -> bool:
        return self.p_exp == self.q_exp

    @property
    def is_sparse(self) -> bool:
        return sparse.issparse(self.L)


def kernel_value(r, sigma):
    """``exp(-r**2 / sigma**2)``; works on scalars and arrays."""
    if not np.all(np.asarray(sigma) > 0):
        raise ParameterError(f"sigma must be positive, got {sigma}")
    if np.any(np.asarray(r) < 0):
        raise ParameterError("distance must be nonnegative")
    return np.exp(-np.square(r) / np.square(sigma))


def _require_scaled(points: Dataset) -> np.ndarray:
    if not isinstance(points, Dataset):
        raise StateError("adjacency requires a scaled Dataset")
    if not points.is_scaled:
        raise StateError("dataset must be scaled to [-1, 1] before building the graph")
    if points.n_points < 2:
        raise DimensionError("need at least 2 points to build a graph")
    return points.points


def self_tuned_sigmas(points, k: int = DEFAULT_NEIGHBOR_RANK) -> np.ndarray:
    """Per-point bandwidth: distance to the k-th nearest other point.

    Zero bandwidths (duplicated points) are clamped to the smallest positive
    pairwise distance in the set.
    """
    X = points.points if isinstance(points, Dataset) else np.asarray(points, dtype=float)
    n = X.shape[0]
    if not 1 <= k < n:
        raise ParameterError(f"neighbor_rank must satisfy 1 <= k < n={n}, got {k}")
    tree = cKDTree(X)
    # column 0 is the point itself (or a duplicate at distance 0); ask for k+1
    dist, _ = tree.query(X, k=k + 1)
    sig = np.array(dist[:, k], dtype=float)
    if np.any(sig == 0):
        floor = _smallest_positive_distance(X)
        if floor is None:
            raise DegenerateDataError("all points are identical")
        sig[sig == 0] = floor
    return sig


def _smallest_positive_distance(X) -> float | None:
    tree = cKDTree(X)
    n = X.shape[0]
    k = 2
    while True:
        d, _ = tree.query(X, k=min(n, k))
        pos = d[d > 0]
        if pos.size:
            return float(pos.min())
        if k >= n:
            return None
        k *= 2


def _sq_dists(X, rows=slice(None)):
    return cdist(X[rows], X, metric="sqeuclidean")


def build_adjacency(points: Dataset, kernel: KernelSpec, sparse_threshold: float | None = None):
    """Dense Gaussian-kernel adjacency over the complete graph.

    The diagonal is kept (``W_ii = 1``).  With ``sparse_threshold`` set, the
    matrix is assembled block-wise and entries below the threshold are
    dropped, returning a CSR matrix; this is an approximation of the
    complete graph meant for large point sets.
    """
    X = _require_scaled(points)
    n = X.shape[0]
    if kernel.mode == "self_tuned":
        if not kernel.neighbor_rank < n:
            raise ParameterError(
                f"neighbor_rank {kernel.neighbor_rank} must be < number of points {n}"
            )
        sig = self_tuned_sigmas(X, kernel.neighbor_rank)
    else:
        sig = None

    def block(rows):
        d2 = _sq_dists(X, rows)
        if sig is None:
            return np.exp(-d2 / (kernel.sigma * kernel.sigma))
        return np.exp(-d2 / (sig[rows, None] * sig[None, :]))

    if sparse_threshold is None:
        return block(slice(None))

    step = max(1, 4_000_000 // max(n, 1))
    parts = []
    for start in range(0, n, step):
        b = block(slice(start, min(n, start + step)))
        b[b < sparse_threshold] = 0.0
        parts.append(sparse.csr_matrix(b))
    return sparse.vstack(parts, format="csr")


def build_laplacian(W, p_exp: float = 0.5, q_exp: float = 0.5, kernel: KernelSpec | None = None) -> LaplacianBundle:
    is_sp = sparse.issparse(W)
    deg = np.asarray(W.sum(axis=1)).ravel()
    if not np.all(deg > 0):
        raise DegenerateDataError(f"{int(np.sum(deg <= 0))} node(s) with zero degree")
    left = deg ** (-p_exp)
    right = deg ** (-q_exp)
    if is_sp:
        lap = sparse.diags(deg) - W
        L = (sparse.diags(left) @ lap @ sparse.diags(right)).tocsr()
    else:
        lap = np.diag(deg) - W
        L = np.outer(left, right) * lap
    return LaplacianBundle(W=W, deg=deg, L=L, p_exp=float(p_exp), q_exp=float(q_exp), kernel=kernel)


def graph_laplacian(points: Dataset, kernel: KernelSpec, p_exp: float = 0.5, q_exp: float = 0.5, sparse_threshold: float | None = None) -> LaplacianBundle:
    """Adjacency followed by Laplacian in one call."""
    if sparse_threshold is None and points.n_points > DENSE_LIMIT:
        raise ParameterError(
            f"{points.n_points} points exceeds dense limit {DENSE_LIMIT}; pass a sparse_threshold"
        )
    W = build_adjacency(points, kernel, sparse_threshold=sparse_threshold)
    return build_laplacian(W, p_exp, q_exp, kernel=kernel)


# -- binary matrix dump -------------------------------------------------------


def dump_matrix(M, path, kind: str) -> None:
    """Write ``path`` (raw little-endian float64, row-major) and ``path.json``."""
    if sparse.issparse(M):
        M = M.toarray()
    M = np.ascontiguousarray(M, dtype="<f8")
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    path = Path(path)
    path.write_bytes(M.tobytes(order="C"))
    header = {"rows": int(M.shape[0]), "cols": int(M.shape[1]), "kind": kind}
    Path(str(path) + ".json").write_text(json.dumps(header) + "\n")


def load_matrix(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    header = json.loads(Path(str(path) + ".json").read_text())
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    if raw.size != header["rows"] * header["cols"]:
        raise DimensionError(f"{path}: {raw.size} values, header says {header['rows']}x{header['cols']}")
    return raw.reshape(header["rows"], header["cols"]).astype(float), header

