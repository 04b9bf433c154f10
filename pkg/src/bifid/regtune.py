"""L-curve sweep over the regularization weight and elbow detection."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import BifidError, OptimizationError, ParameterError
from .fusion import FusionConfig, FusionProblem, optimize

LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class LCurve:
    omegas: np.ndarray
    j_data: np.ndarray
    j_reg: np.ndarray
    alphas: tuple[np.ndarray, ...] = ()
    curvatures: np.ndarray | None = None
    elbow_index: int | None = None
    no_elbow: bool = False
    degenerate: bool = False

    @property
    def omega_star(self) -> float | None:
        return None if self.elbow_index is None else float(self.omegas[self.elbow_index])

    def __len__(self) -> int:
        return self.omegas.size


def omega_grid(lo_exp: float, hi_exp: float, n: int = 13) -> np.ndarray:
    """``n`` log-spaced values from ``10**lo_exp`` to ``10**hi_exp``."""
    return np.logspace(lo_exp, hi_exp, n)


def sweep(problem: FusionProblem, omegas, cfg: FusionConfig | None = None, warm_start: bool = True) -> LCurve:
    """Solve at every omega, largest first, warm-starting from the previous optimum."""
    omegas = np.unique(np.asarray(omegas, dtype=float))
    if omegas.size < 3 or np.any(omegas <= 0):
        raise ParameterError("L-curve needs at least 3 distinct positive omegas")
    cfg = cfg or FusionConfig()
    n = omegas.size
    j_data = np.empty(n)
    j_reg = np.empty(n)
    alphas: list = [None] * n
    alpha = None
    for k in range(n - 1, -1, -1):
        try:
            res = optimize(problem, replace(cfg, omega=float(omegas[k])), alpha if warm_start else None)
        except OptimizationError as exc:
            raise OptimizationError(f"L-curve sweep failed at omega={omegas[k]:.3e}: {exc}", exc.trace) from exc
        alpha = res.alpha
        alphas[k] = res.alpha
        j_data[k] = res.loss.j_data
        j_reg[k] = res.loss.j_reg
    curve = LCurve(omegas, j_data, j_reg, tuple(alphas))
    return elbow(curve)


def menger_curvature(x, y) -> np.ndarray:
    """Signed three-point curvature at each interior point of a polyline.

    Positive when the path turns counter-clockwise.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ax, ay = x[:-2], y[:-2]
    bx, by = x[1:-1], y[1:-1]
    cx, cy = x[2:], y[2:]
    cross = (bx - ax) * (cy - by) - (by - ay) * (cx - bx)
    ab = np.hypot(bx - ax, by - ay)
    bc = np.hypot(cx - bx, cy - by)
    ca = np.hypot(ax - cx, ay - cy)
    denom = ab * bc * ca
    with np.errstate(invalid="ignore", divide="ignore"):
        kappa = np.where(denom > 0, 2.0 * cross / denom, 0.0)
    return kappa


def elbow(curve: LCurve, tol: float = 1e-12) -> LCurve:
    """Pick the point of maximum curvature of (log10 J_data, log10 J_reg).

    Points are ordered by increasing omega.  Curvature is compared by
    magnitude, so the corner is found whichever way the curve turns; the
    signed values are kept on the result.  Zero losses are clamped to 1e-300
    and flagged as degenerate.  If no interior point has curvature above
    ``tol`` the middle point is returned with ``no_elbow`` set.
    """
    if len(curve) < 3:
        raise ParameterError("elbow needs at least 3 points")
    jd = np.asarray(curve.j_data, dtype=float)
    jr = np.asarray(curve.j_reg, dtype=float)
    degenerate = bool(np.any(jd <= 0) or np.any(jr <= 0))
    x = np.log10(np.maximum(jd, LOG_FLOOR))
    y = np.log10(np.maximum(jr, LOG_FLOOR))
    kappa = menger_curvature(x, y)
    if not np.all(np.isfinite(kappa)):
        raise BifidError("curvature undefined")
    mag = np.abs(kappa)
    best = int(np.argmax(mag))  # first maximum -> smaller omega on ties
    if mag[best] <= tol:
        idx, flag = (len(curve) - 1) // 2, True
    else:
        idx, flag = best + 1, False
    return replace(curve, curvatures=kappa, elbow_index=idx, no_elbow=flag, degenerate=degenerate)


def save_lcurve(curve: LCurve, path) -> None:
    kappa = np.full(len(curve), np.nan)
    if curve.curvatures is not None:
        kappa[1:-1] = curve.curvatures
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega", "j_data", "j_reg", "curvature", "is_elbow"])
        for k in range(len(curve)):
            w.writerow([
                repr(float(curve.omegas[k])),
                repr(float(curve.j_data[k])),
                repr(float(curve.j_reg[k])),
                "" if np.isnan(kappa[k]) else repr(float(kappa[k])),
                int(k == curve.elbow_index),
            ])
