"""End-to-end runs: graph, selection, fusion and error reporting in one call."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .dataset import Dataset, ScalingRecord, apply_scaling, fit_scaling, inverse_scaling
from .errors import DimensionError, ParameterError
from .fusion import FusionConfig, FusionModel, FusionProblem, OptimizeResult, fit, transform
from .graph import KernelSpec, graph_laplacian
from .metrics import ComparisonTable, ErrorReport, comparison_table, relative_errors
from .regtune import LCurve, omega_grid, sweep
from .selection import KMeansConfig, SelectionResult, random_selection, select_high_fidelity
from .spectral import Spectrum, lowest_eigenpairs


@dataclass(frozen=True)
class PipelineConfig:
    kernel: KernelSpec = field(default_factory=KernelSpec)
    p_exp: float = 0.5
    q_exp: float = 0.5
    n_select: int = 7
    K_cutoff: int | None = None
    tau: float | None = None
    omega: float = 1e-6
    omega_policy: str = "fixed"
    lcurve_decades: tuple[float, float] = (-8.0, -2.0)
    lcurve_points: int = 13
    seed: int = 0
    n_restarts: int = 10
    strategy: str = "centroid"
    eigensolver: str = "auto"
    sparse_threshold: float | None = None
    grad_tol: float = 1e-8
    max_iters: int = 5000

    def __post_init__(self):
        if self.n_select < 1:
            raise ParameterError(f"N must be at least 1, got {self.n_select}")
        if self.omega_policy not in ("fixed", "lcurve"):
            raise ParameterError(f"omega policy must be 'fixed' or 'lcurve', got {self.omega_policy!r}")
        if self.strategy not in ("centroid", "random"):
            raise ParameterError(f"strategy must be 'centroid' or 'random', got {self.strategy!r}")
        if self.lcurve_points < 3:
            raise ParameterError("L-curve needs at least 3 points")

    @property
    def K(self) -> int:
        return 3 * self.n_select if self.K_cutoff is None else self.K_cutoff

    @property
    def n_modes(self) -> int:
        return max(self.K, self.n_select)

    def fusion_config(self, omega: float | None = None) -> FusionConfig:
        return FusionConfig(
            K_cutoff=self.K,
            tau=self.tau,
            omega=self.omega if omega is None else omega,
            grad_tol=self.grad_tol,
            max_iters=self.max_iters,
        )

    def to_json(self) -> dict:
        d = asdict(self)
        d["kernel"] = self.kernel.to_json()
        d["lcurve_decades"] = list(self.lcurve_decades)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "kernel" in d and isinstance(d["kernel"], dict):
            d["kernel"] = KernelSpec(**d["kernel"])
        if "lcurve_decades" in d:
            d["lcurve_decades"] = tuple(float(v) for v in d["lcurve_decades"])
        return cls(**d)


@dataclass(frozen=True)
class GraphStage:
    low: Dataset  # scaled
    scaling: ScalingRecord
    spectrum: Spectrum


@dataclass(frozen=True)
class FusionStage:
    model: FusionModel
    result: OptimizeResult
    bi_scaled: Dataset
    bi: Dataset  # problem units
    omega: float
    lcurve: LCurve | None = None


@dataclass(frozen=True)
class PipelineResult:
    graph: GraphStage
    selection: SelectionResult
    fusion: FusionStage
    validation_idx: np.ndarray
    low_report: ErrorReport | None = None
    bi_report: ErrorReport | None = None
    table: ComparisonTable | None = None


def graph_stage(low: Dataset, cfg: PipelineConfig, n_modes: int | None = None) -> GraphStage:
    sc = fit_scaling(low)
    scaled = apply_scaling(low, sc)
    bundle = graph_laplacian(scaled, cfg.kernel, cfg.p_exp, cfg.q_exp, cfg.sparse_threshold)
    n_modes = cfg.n_modes if n_modes is None else n_modes
    if n_modes > scaled.n_points:
        raise ParameterError(f"{n_modes} modes requested for {scaled.n_points} points")
    spec = lowest_eigenpairs(bundle, n_modes, cfg.eigensolver)
    return GraphStage(scaled, sc, spec)


def selection_stage(g: GraphStage, cfg: PipelineConfig, strategy: str | None = None, seed: int | None = None) -> SelectionResult:
    strategy = strategy or cfg.strategy
    seed = cfg.seed if seed is None else seed
    if strategy == "random":
        return random_selection(g.low, cfg.n_select, seed)
    if cfg.n_select > g.spectrum.n_modes:
        raise ParameterError(f"N={cfg.n_select} exceeds the {g.spectrum.n_modes} computed modes")
    return select_high_fidelity(g.low, g.spectrum, KMeansConfig(cfg.n_select, cfg.n_restarts, seed=seed))


def fusion_stage(g: GraphStage, selected, high_selected: Dataset, cfg: PipelineConfig) -> FusionStage:
    """``high_selected`` holds the high-fidelity rows for ``selected``, in problem units."""
    selected = np.asarray(selected, dtype=np.int64)
    if high_selected.n_points != selected.size:
        raise DimensionError(
            f"high-fidelity data has {high_selected.n_points} rows, expected {selected.size} (one per selected point)"
        )
    if high_selected.dim != g.low.dim:
        raise DimensionError(f"high-fidelity dimension {high_selected.dim}, low {g.low.dim}")
    hi = apply_scaling(high_selected, g.scaling)
    problem = FusionProblem.build(g.low, hi, selected, g.spectrum, K=cfg.K, tau=cfg.tau)
    curve = None
    omega = cfg.omega
    alpha0 = None
    if cfg.omega_policy == "lcurve":
        curve = sweep(problem, omega_grid(*cfg.lcurve_decades, cfg.lcurve_points), cfg.fusion_config())
        omega = curve.omega_star
        alpha0 = curve.alphas[curve.elbow_index]
    model, res = fit(problem, cfg.fusion_config(omega), alpha0)
    bi_scaled = transform(g.low, model)
    return FusionStage(model, res, bi_scaled, inverse_scaling(bi_scaled), omega, curve)


def validation_set(n: int, selected) -> np.ndarray:
    """All points that were not given high-fidelity data."""
    return np.setdiff1d(np.arange(n), np.asarray(selected, dtype=np.int64))


def run(low: Dataset, high: Dataset, cfg: PipelineConfig, graph: GraphStage | None = None,
        strategy: str | None = None, seed: int | None = None) -> PipelineResult:
    """Full run when high-fidelity truth is known at every point (synthetic problems)."""
    if high.points.shape != low.points.shape:
        raise DimensionError(f"low {low.points.shape} and high {high.points.shape} differ in shape")
    g = graph or graph_stage(low, cfg)
    sel = selection_stage(g, cfg, strategy, seed)
    fs = fusion_stage(g, sel.selected, high.take(sel.selected), cfg)
    val = validation_set(low.n_points, sel.selected)
    low_rep = relative_errors(low, high, val, high.columns)
    bi_rep = relative_errors(fs.bi, high, val, high.columns)
    return PipelineResult(g, sel, fs, val, low_rep, bi_rep, comparison_table(low_rep, bi_rep))


def with_overrides(cfg: PipelineConfig, **changes) -> PipelineConfig:
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})
