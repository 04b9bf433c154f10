"""Influence-function transform from low- to bi-fidelity points.

Each low-fidelity point is moved by a convex combination of the known
control-point displacements ``u^j - ubar^j``.  The weights are a row-wise
softmax of auxiliary functions ``V = Phi @ alpha.T`` built from the
low-lying Laplacian eigenfunctions, and ``alpha`` minimises

    J(alpha) = J_data + omega * J_reg
    J_data   = mean_j || w^j - u^j ||^2                (over control points)
    J_reg    = sum_jm alpha_jm^2 (1 + lambda_m / tau)^2 / (K N)
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .errors import DimensionError, NumericError, OptimizationError, ParameterError, SizeError
from .graph import dump_matrix
from .spectral import Spectrum, smallest_nonzero

HESSIAN_MAX = 5000
FD_STEP = 1e-6


@dataclass(frozen=True)
class FusionConfig:
    K_cutoff: int | None = None
    tau: float | None = None
    omega: float = 1e-6
    grad_tol: float = 1e-8
    max_iters: int = 5000
    memory: int = 10

    def __post_init__(self):
        if self.K_cutoff is not None and self.K_cutoff < 1:
            raise ParameterError(f"K_cutoff must be positive, got {self.K_cutoff}")
        if self.tau is not None and not self.tau > 0:
            raise ParameterError(f"tau must be positive, got {self.tau}")
        if self.omega < 0:
            raise ParameterError(f"omega must be nonnegative, got {self.omega}")


@dataclass(frozen=True)
class LossBreakdown:
    j_data: float
    j_reg: float
    omega: float

    @property
    def j_total(self) -> float:
        return self.j_data + self.omega * self.j_reg


@dataclass(frozen=True)
class FusionProblem:
    """Everything the loss needs, in scaled coordinates.

    ``low`` holds all low-fidelity points, ``high`` the high-fidelity values
    at ``high_idx`` (same order), ``phi``/``eigenvalues`` the first K modes.
    """

    low: np.ndarray
    high: np.ndarray
    high_idx: np.ndarray
    phi: np.ndarray
    eigenvalues: np.ndarray
    tau: float

    def __post_init__(self):
        n_all, dim = self.low.shape
        N = len(self.high_idx)
        if self.high.shape != (N, dim):
            raise DimensionError(f"high data shape {self.high.shape}, expected {(N, dim)}")
        if self.phi.shape[0] != n_all or self.phi.shape[1] != self.eigenvalues.size:
            raise DimensionError("eigenfunctions do not match points or eigenvalues")
        if not self.tau > 0:
            raise ParameterError(f"tau must be positive, got {self.tau}")
        if len(set(int(i) for i in self.high_idx)) != N:
            raise DimensionError("control indices must be distinct")
        object.__setattr__(self, "displacements", self.high - self.low[self.high_idx])
        object.__setattr__(self, "phi_ctrl", self.phi[self.high_idx])
        object.__setattr__(self, "reg_weights", (1.0 + self.eigenvalues / self.tau) ** 2)

    @property
    def n_ctrl(self) -> int:
        return len(self.high_idx)

    @property
    def K(self) -> int:
        return self.eigenvalues.size

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_ctrl, self.K)

    @classmethod
    def build(cls, low: Dataset, high: Dataset, high_idx, spectrum: Spectrum, K: int | None = None, tau: float | None = None) -> "FusionProblem":
        """Assemble from datasets; defaults are ``K = 3 N`` and ``tau = lambda_2``."""
        high_idx = np.asarray(high_idx, dtype=np.int64)
        N = high_idx.size
        if K is None:
            K = min(3 * N, spectrum.n_modes)
        if K > spectrum.n_modes:
            raise ParameterError(f"K={K} exceeds available {spectrum.n_modes} modes")
        if tau is None:
            tau = smallest_nonzero(spectrum)
        if high.n_points != N:
            raise DimensionError(f"{high.n_points} high-fidelity rows for {N} selected points")
        spec = spectrum.truncate(K)
        return cls(
            low=np.asarray(low.points),
            high=np.asarray(high.points),
            high_idx=high_idx,
            phi=spec.eigenfunctions,
            eigenvalues=spec.eigenvalues,
            tau=float(tau),
        )


def auxiliary(alpha, phi) -> np.ndarray:
    """``V[i, j] = sum_m alpha[j, m] * phi[i, m]``."""
    alpha = np.asarray(alpha, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if alpha.ndim != 2 or phi.ndim != 2 or alpha.shape[1] != phi.shape[1]:
        raise DimensionError(f"alpha {alpha.shape} incompatible with eigenfunctions {phi.shape}")
    return phi @ alpha.T


def influence(V) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    if not np.all(np.isfinite(V)):
        raise NumericError("non-finite auxiliary function values")
    E = np.exp(V - V.max(axis=1, keepdims=True))
    return E / E.sum(axis=1, keepdims=True)


def _check_alpha(alpha, problem: FusionProblem) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.size == problem.n_ctrl * problem.K:
        alpha = alpha.reshape(problem.shape)
    if alpha.shape != problem.shape:
        raise DimensionError(f"alpha shape {alpha.shape}, expected {problem.shape}")
    return alpha


def _control_state(alpha, problem):
    psi = influence(problem.phi_ctrl @ alpha.T)
    w = problem.low[problem.high_idx] + psi @ problem.displacements
    return psi, w - problem.high


def loss(alpha, problem: FusionProblem, omega: float) -> LossBreakdown:
    alpha = _check_alpha(alpha, problem)
    _, resid = _control_state(alpha, problem)
    N, K = problem.shape
    j_data = float(np.sum(resid * resid) / N)
    j_reg = float(np.sum(alpha * alpha * problem.reg_weights) / (K * N))
    return LossBreakdown(j_data, j_reg, float(omega))


def gradient(alpha, problem: FusionProblem, omega: float) -> np.ndarray:
    alpha = _check_alpha(alpha, problem)
    return _loss_and_grad(alpha, problem, omega)[1]


def _loss_and_grad(alpha, problem, omega):
    N, K = problem.shape
    psi, resid = _control_state(alpha, problem)
    # A[i, j] = (w^i - u^i) . (u^j - ubar^j)
    A = resid @ problem.displacements.T
    s = np.sum(A * psi, axis=1, keepdims=True)
    B = psi * (A - s)
    g_data = (2.0 / N) * (B.T @ problem.phi_ctrl)
    g_reg = (2.0 / (K * N)) * alpha * problem.reg_weights
    lb = LossBreakdown(
        float(np.sum(resid * resid) / N),
        float(np.sum(alpha * alpha * problem.reg_weights) / (K * N)),
        float(omega),
    )
    return lb, g_data + omega * g_reg


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    j_data: float
    j_reg: float
    j_total: float
    grad_inf_norm: float


@dataclass(frozen=True)
class OptimizeResult:
    alpha: np.ndarray
    loss: LossBreakdown
    trace: tuple[TraceRow, ...]
    converged: bool
    status: str
    n_iter: int
    grad_inf_norm: float


def _two_loop(g, S, Y):
    q = g.copy()
    coeffs = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        q -= a * y
        coeffs.append((rho, a))
    if S:
        q *= float(S[-1] @ Y[-1]) / float(Y[-1] @ Y[-1])
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(coeffs)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def optimize(problem: FusionProblem, cfg: FusionConfig, alpha0=None) -> OptimizeResult:
    """Limited-memory quasi-Newton descent with backtracking (Armijo) line search.

    Accepted iterates never increase ``J``.  A step producing a non-finite
    loss is halved like any other rejection; 60 rejections in a row raise
    :class:`OptimizationError`, unless the predicted decrease is already
    below floating-point resolution, in which case the run stops with
    status ``"stalled"``.
    """
    omega = cfg.omega
    shape = problem.shape
    x = np.zeros(shape) if alpha0 is None else _check_alpha(alpha0, problem).copy()
    lb, g = _loss_and_grad(x, problem, omega)
    f = lb.j_total
    if not np.isfinite(f):
        raise OptimizationError("initial loss is not finite")
    trace = [TraceRow(0, lb.j_data, lb.j_reg, f, float(np.max(np.abs(g))))]
    S: list[np.ndarray] = []
    Y: list[np.ndarray] = []
    status = "max_iters"
    for it in range(1, cfg.max_iters + 1):
        if float(np.max(np.abs(g))) <= cfg.grad_tol:
            status = "converged"
            break
        gv = g.ravel()
        d = _two_loop(gv, S, Y)
        slope = float(gv @ d)
        if not slope < 0:
            S.clear()
            Y.clear()
            d = -gv
            slope = float(gv @ d)
        if not S:
            d = d / max(1.0, float(np.max(np.abs(d))))
            slope = float(gv @ d)
        step = 1.0
        for _ in range(60):
            xn = x + step * d.reshape(shape)
            try:
                lbn, gn = _loss_and_grad(xn, problem, omega)
                fn = lbn.j_total
            except NumericError:
                fn = np.inf
            if np.isfinite(fn) and fn <= f + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            if abs(slope) <= 1e-13 * max(1.0, abs(f)):
                status = "stalled"
                break
            raise OptimizationError(
                f"line search failed after 60 rejections at iteration {it}", trace=tuple(trace)
            )
        s = (xn - x).ravel()
        y = (gn - g).ravel()
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            S.append(s)
            Y.append(y)
            if len(S) > cfg.memory:
                S.pop(0)
                Y.pop(0)
        x, f, g, lb = xn, fn, gn, lbn
        trace.append(TraceRow(it, lb.j_data, lb.j_reg, f, float(np.max(np.abs(g)))))
    else:
        if float(np.max(np.abs(g))) <= cfg.grad_tol:
            status = "converged"
    gmax = float(np.max(np.abs(g)))
    return OptimizeResult(
        alpha=x,
        loss=lb,
        trace=tuple(trace),
        converged=status == "converged",
        status=status,
        n_iter=len(trace) - 1,
        grad_inf_norm=gmax,
    )


@dataclass(frozen=True)
class FusionModel:
    alpha: np.ndarray
    phi: np.ndarray
    eigenvalues: np.ndarray
    high_idx: np.ndarray
    displacements: np.ndarray
    tau: float
    omega: float
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        N, K = self.alpha.shape
        if self.phi.shape[1] != K or self.displacements.shape[0] != N or len(self.high_idx) != N:
            raise DimensionError("inconsistent model shapes")

    @classmethod
    def from_problem(cls, problem: FusionProblem, alpha, omega: float) -> "FusionModel":
        return cls(
            alpha=_check_alpha(alpha, problem).copy(),
            phi=problem.phi,
            eigenvalues=problem.eigenvalues,
            high_idx=np.asarray(problem.high_idx),
            displacements=problem.displacements,
            tau=problem.tau,
            omega=float(omega),
        )

    @property
    def K(self) -> int:
        return self.alpha.shape[1]

    def auxiliary(self) -> np.ndarray:
        return auxiliary(self.alpha, self.phi)

    def influence(self) -> np.ndarray:
        return influence(self.auxiliary())

    def to_json(self) -> dict:
        return {
            "alpha": [float(a) for a in self.alpha.ravel()],
            "shape": list(self.alpha.shape),
            "K": self.K,
            "tau": self.tau,
            "omega": self.omega,
            "high_idx": [int(i) for i in self.high_idx],
            **self.extra,
        }

    def save(self, directory, stem: str = "model") -> None:
        directory = Path(directory)
        (directory / f"{stem}.json").write_text(json.dumps(self.to_json(), indent=1) + "\n")
        dump_matrix(self.displacements, directory / f"{stem}_displacements.bin", "displacements")


def transform(low: Dataset, model: FusionModel) -> Dataset:
    """``w^i = ubar^i + sum_j (u^j - ubar^j) psi^(j)_i`` for every point."""
    if low.n_points != model.phi.shape[0]:
        raise DimensionError(f"{low.n_points} points, model built on {model.phi.shape[0]}")
    if low.dim != model.displacements.shape[1]:
        raise DimensionError(f"data dimension {low.dim}, displacements {model.displacements.shape[1]}")
    psi = model.influence()
    w = low.points + psi @ model.displacements
    return low.with_points(w, fidelity="bi")


def fit(problem: FusionProblem, cfg: FusionConfig, alpha0=None) -> tuple[FusionModel, OptimizeResult]:
    res = optimize(problem, cfg, alpha0)
    return FusionModel.from_problem(problem, res.alpha, cfg.omega), res


def save_trace(trace, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "j_data", "j_reg", "j_total", "grad_inf_norm"])
        for r in trace:
            w.writerow([r.iteration, repr(r.j_data), repr(r.j_reg), repr(r.j_total), repr(r.grad_inf_norm)])


# -- Hessian diagnostic -------------------------------------------------------


@dataclass(frozen=True)
class HessianReport:
    min_eigenvalue: float
    positive_definite: bool
    zeta: float
    misfit_sum: float
    condition_bound: float
    condition_met: bool
    hessian: np.ndarray


def _fd_jacobian(fun, x, h):
    n = x.size
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        cols.append((fun(x + e) - fun(x - e)) / (2 * h))
    J = np.column_stack(cols)
    return 0.5 * (J + J.T)


def hessian_check(alpha, problem: FusionProblem, omega: float, h: float = FD_STEP) -> HessianReport:
    """Finite-difference Hessian of ``J`` and the sufficient condition for its definiteness.

    The condition is ``sum_i ||w^i - u^i|| <= omega / (2 |zeta| K)`` where
    ``zeta`` is the most negative eigenvalue over control points of the
    Hessian of ``e_i . w^i`` (``e_i`` the frozen unit residual direction).
    Indefiniteness is reported, never raised.
    """
    alpha = _check_alpha(alpha, problem)
    N, K = problem.shape
    n = N * K
    if n > HESSIAN_MAX:
        raise SizeError(f"dense Hessian of size {n} exceeds {HESSIAN_MAX}; use subsampled probing")
    x0 = alpha.ravel()

    H = _fd_jacobian(lambda x: _loss_and_grad(x.reshape(N, K), problem, omega)[1].ravel(), x0, h)
    min_eig = float(np.linalg.eigvalsh(H)[0])

    _, resid = _control_state(alpha, problem)
    norms = np.linalg.norm(resid, axis=1)
    zeta = np.inf
    for i in range(N):
        if norms[i] == 0:
            continue
        e = resid[i] / norms[i]
        c = problem.displacements @ e

        def grad_z(x, i=i, c=c):
            psi_i = influence((problem.phi_ctrl[i] @ x.reshape(N, K).T)[None, :])[0]
            b = psi_i * (c - psi_i @ c)
            return np.outer(b, problem.phi_ctrl[i]).ravel()

        Hz = _fd_jacobian(grad_z, x0, h)
        zeta = min(zeta, float(np.linalg.eigvalsh(Hz)[0]))
    if not np.isfinite(zeta):
        zeta = 0.0
    misfit = float(norms.sum())
    if zeta >= 0:
        bound, met = np.inf, True
    else:
        bound = omega / (2 * abs(zeta) * K)
        met = misfit <= bound
    return HessianReport(min_eig, min_eig > 0, zeta, misfit, bound, met, H)
