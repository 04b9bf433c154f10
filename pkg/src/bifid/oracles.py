"""Slow, literal reference implementations used by the test suite.

Nothing here imports from the graph, spectral, selection or fusion modules.
Loops are written out on purpose; keep inputs small (a few hundred points).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from decimal import Decimal, localcontext

import numpy as np

from .errors import ParameterError

FD_STEP = 1e-6


# -- graph --------------------------------------------------------------------


def naive_distance(a, b) -> float:
    return math.sqrt(math.fsum((float(x) - float(y)) ** 2 for x, y in zip(a, b)))


def naive_adjacency(points, sigma: float | None = None, sigmas=None) -> np.ndarray:
    """``exp(-|x_i - x_j|^2 / s_ij)`` with ``s_ij = sigma^2`` or ``sigmas[i] * sigmas[j]``."""
    X = np.asarray(points, dtype=float)
    n = X.shape[0]
    W = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            d2 = math.fsum((X[i, k] - X[j, k]) ** 2 for k in range(X.shape[1]))
            s = sigma * sigma if sigmas is None else sigmas[i] * sigmas[j]
            W[i, j] = math.exp(-d2 / s)
    return W


def naive_self_tuned_sigmas(points, k: int) -> np.ndarray:
    X = np.asarray(points, dtype=float)
    out = []
    for i in range(X.shape[0]):
        d = sorted(naive_distance(X[i], X[j]) for j in range(X.shape[0]) if j != i)
        out.append(d[k - 1])
    return np.array(out)


def naive_laplacian(W, p: float, q: float) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    deg = [math.fsum(W[i]) for i in range(n)]
    L = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            dw = (deg[i] if i == j else 0.0) - W[i, j]
            L[i, j] = deg[i] ** (-p) * dw * deg[j] ** (-q)
    return L


def dense_eigh(L) -> tuple[np.ndarray, np.ndarray]:
    """Full decomposition via numpy, columns sign-fixed like the production solver."""
    vals, vecs = np.linalg.eigh(np.asarray(L, dtype=float))
    for m in range(vecs.shape[1]):
        for x in vecs[:, m]:
            if abs(x) > 1e-12:
                if x < 0:
                    vecs[:, m] = -vecs[:, m]
                break
    return vals, vecs


def quadratic_form_sum(W, x) -> float:
    """``1/2 sum_ij W_ij (x_i - x_j)^2``."""
    n = len(x)
    return 0.5 * math.fsum(W[i][j] * (x[i] - x[j]) ** 2 for i in range(n) for j in range(n))


# -- fusion -------------------------------------------------------------------


def naive_auxiliary(alpha, phi) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    phi = np.asarray(phi, dtype=float)
    n, K = phi.shape
    N = alpha.shape[0]
    V = np.zeros((n, N))
    for i in range(n):
        for j in range(N):
            V[i, j] = math.fsum(alpha[j, m] * phi[i, m] for m in range(K))
    return V


def precise_softmax(V, digits: int = 50) -> np.ndarray:
    """Row softmax evaluated in decimal arithmetic, then rounded to float."""
    V = np.asarray(V, dtype=float)
    out = np.empty_like(V)
    with localcontext() as ctx:
        ctx.prec = digits
        for i in range(V.shape[0]):
            e = [Decimal(float(v)).exp() for v in V[i]]
            total = sum(e)
            out[i] = [float(x / total) for x in e]
    return out


def naive_transform(low, high_ctrl, high_idx, psi) -> np.ndarray:
    low = np.asarray(low, dtype=float)
    high_ctrl = np.asarray(high_ctrl, dtype=float)
    n, D = low.shape
    W = np.empty_like(low)
    for i in range(n):
        for k in range(D):
            W[i, k] = low[i, k] + math.fsum(
                (high_ctrl[j, k] - low[high_idx[j], k]) * psi[i, j] for j in range(len(high_idx))
            )
    return W


def naive_j_data(w, high_ctrl, high_idx) -> float:
    N = len(high_idx)
    return math.fsum(
        (w[high_idx[j], k] - high_ctrl[j][k]) ** 2 for j in range(N) for k in range(w.shape[1])
    ) / N


def naive_j_reg_diagonal(alpha, eigenvalues, tau: float) -> float:
    N, K = np.shape(alpha)
    return math.fsum(
        alpha[j][m] ** 2 * (1 + eigenvalues[m] / tau) ** 2 for j in range(N) for m in range(K)
    ) / (K * N)


def naive_j_reg_matrix(alpha, phi, L, tau: float) -> float:
    """``1/(tau^2 K N) sum_j v^(j) . (L + tau I)^2 v^(j)`` with the full Laplacian."""
    alpha = np.asarray(alpha, dtype=float)
    N, K = alpha.shape
    A = np.asarray(L, dtype=float) + tau * np.eye(L.shape[0])
    V = naive_auxiliary(alpha, phi)
    total = []
    for j in range(N):
        y = A @ V[:, j]
        total.append(float(y @ y))
    return math.fsum(total) / (tau * tau * K * N)


def naive_loss(alpha, low, high_ctrl, high_idx, phi, eigenvalues, tau, omega) -> float:
    psi = precise_softmax(naive_auxiliary(alpha, phi))
    w = naive_transform(low, high_ctrl, high_idx, psi)
    return naive_j_data(w, high_ctrl, high_idx) + omega * naive_j_reg_diagonal(alpha, eigenvalues, tau)


def naive_gradient(alpha, low, high_ctrl, high_idx, phi, eigenvalues, tau, omega) -> np.ndarray:
    """Term-by-term transliteration of the analytic gradient."""
    alpha = np.asarray(alpha, dtype=float)
    N, K = alpha.shape
    psi = precise_softmax(naive_auxiliary(alpha, phi))
    w = naive_transform(low, high_ctrl, high_idx, psi)
    disp = [np.asarray(high_ctrl[j]) - low[high_idx[j]] for j in range(N)]
    g = np.zeros((N, K))
    for u in range(N):
        for v in range(K):
            terms = []
            for c in range(N):
                i = high_idx[c]
                r = w[i] - np.asarray(high_ctrl[c])
                for j in range(N):
                    kd = 1.0 if j == u else 0.0
                    terms.append(float(r @ disp[j]) * phi[i, v] * psi[i, j] * (kd - psi[i, u]))
            g[u, v] = 2.0 / N * math.fsum(terms) + 2.0 * omega * alpha[u, v] / (K * N) * (1 + eigenvalues[v] / tau) ** 2
    return g


def fd_gradient(f, x, h: float = FD_STEP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.empty(x.size)
    flat = x.ravel()
    for k in range(flat.size):
        xp, xm = flat.copy(), flat.copy()
        xp[k] += h
        xm[k] -= h
        # divide by the step actually represented, not the nominal 2h
        g[k] = (f(xp.reshape(x.shape)) - f(xm.reshape(x.shape))) / (xp[k] - xm[k])
    return g.reshape(x.shape)


def fd_hessian(grad, x, h: float = FD_STEP) -> np.ndarray:
    """Central differences of a gradient callable, symmetrized."""
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    n = flat.size
    H = np.empty((n, n))
    for k in range(n):
        xp, xm = flat.copy(), flat.copy()
        xp[k] += h
        xm[k] -= h
        H[:, k] = (np.ravel(grad(xp.reshape(x.shape))) - np.ravel(grad(xm.reshape(x.shape)))) / (xp[k] - xm[k])
    return 0.5 * (H + H.T)


# -- selection ----------------------------------------------------------------


def brute_nearest(X, centroids, labels) -> np.ndarray:
    out = []
    for c, mu in enumerate(centroids):
        best, best_d = -1, math.inf
        for i in range(len(X)):
            if labels[i] != c:
                continue
            d = math.fsum((X[i][k] - mu[k]) ** 2 for k in range(len(mu)))
            if d < best_d:
                best, best_d = i, d
        out.append(best)
    return np.array(out, dtype=np.int64)


def partition_agreement(a, b) -> float:
    """Best fraction of matching labels over all relabelings of ``b`` (small label counts only)."""
    a, b = list(a), list(b)
    la, lb = sorted(set(a)), sorted(set(b))
    if len(lb) > 8:
        raise ParameterError("too many labels for exhaustive relabeling")
    best = 0
    for perm in itertools.permutations(la, len(lb)):
        m = dict(zip(lb, perm))
        best = max(best, sum(1 for x, y in zip(a, b) if m[y] == x))
    return best / len(a)


# -- restricted analysis of the rigid-translation problem ------------------------


@dataclass(frozen=True)
class RestrictedCanonicalSolution:
    M: int
    b: np.ndarray  # one row per cluster
    alpha: float
    gamma: float
    j_data: float
    j_reg: float

    @property
    def misfit_norms(self) -> np.ndarray:
        """Predicted ``||w - u||`` for a member of each cluster."""
        return self.gamma * np.linalg.norm(self.b, axis=1)


def restricted_b(translations) -> np.ndarray:
    T = np.asarray(translations, dtype=float)
    M = T.shape[0]
    return np.array([-(M - 1) * T[i] + sum(T[j] for j in range(M) if j != i) for i in range(M)])


def restricted_gamma(alpha: float, M: int) -> float:
    e = math.exp(-2 * alpha)
    return e / (1 + (M - 1) * e)


def canonical_prediction(spec_or_translations, omega: float) -> RestrictedCanonicalSolution:
    """Leading-order optimum of the scalar ansatz ``alpha_jm = alpha delta_jm``.

    Accepts a ``CanonicalSpec`` or an ``M x D`` array of cluster translations.
    """
    if not omega > 0:
        raise ParameterError(f"omega must be positive, got {omega}")
    if hasattr(spec_or_translations, "translation_array"):
        T = spec_or_translations.translation_array()
    else:
        T = np.asarray(spec_or_translations, dtype=float)
    M = T.shape[0]
    b = restricted_b(T)
    alpha = -math.log(omega) / 4
    g = restricted_gamma(alpha, M)
    j_data = g * g * float((b**2).sum()) / M
    return RestrictedCanonicalSolution(M, b, alpha, g, j_data, alpha * alpha / M)


def indicator_eigenfunctions(labels, M: int) -> np.ndarray:
    """The idealized +1/-1 cluster indicators of the infinite-data limit."""
    labels = np.asarray(labels)
    return np.where(labels[:, None] == np.arange(M)[None, :], 1.0, -1.0)
