"""Relative error metrics, low-vs-bi comparison tables and the selection study."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dataset import Dataset
from .errors import BifidError, ComparisonError, DimensionError, ParameterError


def _values(x) -> np.ndarray:
    return np.asarray(x.points if isinstance(x, Dataset) else x, dtype=float)


@dataclass(frozen=True)
class ErrorReport:
    """Per-point, per-component errors in percent over a validation set.

    ``errors[i, k]`` is NaN where component ``k`` is undefined (the mean
    absolute truth over the validation set is zero).
    """

    errors: np.ndarray
    validation_idx: np.ndarray
    scale: np.ndarray
    columns: tuple[str, ...] = ()

    @property
    def undefined(self) -> np.ndarray:
        return self.scale == 0

    @property
    def means(self) -> np.ndarray:
        out = np.full(self.errors.shape[1], np.nan)
        ok = ~self.undefined
        out[ok] = self.errors[:, ok].mean(axis=0)
        return out


def relative_errors(approx, truth, validation_idx=None, columns: Sequence[str] | None = None) -> ErrorReport:
    """``|approx - truth| / mean(|truth|) * 100`` per component, on the validation rows."""
    A, T = _values(approx), _values(truth)
    if A.shape != T.shape or A.ndim != 2:
        raise DimensionError(f"shape mismatch: approx {A.shape} vs truth {T.shape}")
    idx = np.arange(A.shape[0]) if validation_idx is None else np.asarray(validation_idx, dtype=np.int64)
    if idx.size == 0:
        raise ParameterError("validation set is empty")
    A, T = A[idx], T[idx]
    scale = np.abs(T).mean(axis=0)
    err = np.full(A.shape, np.nan)
    ok = scale > 0
    err[:, ok] = np.abs(A[:, ok] - T[:, ok]) / scale[ok] * 100.0
    if columns is None:
        columns = truth.columns if isinstance(truth, Dataset) else tuple(f"c{k}" for k in range(A.shape[1]))
    return ErrorReport(err, idx, scale, tuple(columns))


@dataclass(frozen=True)
class ComparisonRow:
    column: str
    low: float
    bi: float
    factor: float  # inf when bi == 0, nan when undefined

    def factor_text(self) -> str:
        if math.isnan(self.factor):
            return "undefined"
        return "inf" if math.isinf(self.factor) else f"{self.factor:.2f}"


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[ComparisonRow, ...]
    n_validation: int

    def factors(self) -> np.ndarray:
        return np.array([r.factor for r in self.rows])

    def to_markdown(self) -> str:
        head = "| | " + " | ".join(r.column for r in self.rows) + " |"
        sep = "|---" * (len(self.rows) + 1) + "|"

        def fmt(v):
            return "undefined" if math.isnan(v) else f"{v:.2f}"

        lines = [
            head,
            sep,
            "| low-fidelity error (%) | " + " | ".join(fmt(r.low) for r in self.rows) + " |",
            "| bi-fidelity error (%) | " + " | ".join(fmt(r.bi) for r in self.rows) + " |",
            "| improvement factor | " + " | ".join(r.factor_text() for r in self.rows) + " |",
        ]
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        def num(v):
            if math.isnan(v):
                return None
            return "inf" if math.isinf(v) else float(v)

        return {
            "n_validation": self.n_validation,
            "components": [
                {"column": r.column, "low": num(r.low), "bi": num(r.bi), "factor": num(r.factor)}
                for r in self.rows
            ],
        }


def improvement_factor(low_mean: float, bi_mean: float) -> float:
    """``low / bi``; ``inf`` for a zero bi error, NaN when the low error is already zero."""
    if math.isnan(low_mean) or math.isnan(bi_mean) or low_mean == 0:
        return math.nan
    if bi_mean == 0:
        return math.inf
    return low_mean / bi_mean


def comparison_table(low: ErrorReport, bi: ErrorReport) -> ComparisonTable:
    if low.errors.shape[1] != bi.errors.shape[1]:
        raise ComparisonError("reports cover different numbers of components")
    if not np.array_equal(low.validation_idx, bi.validation_idx):
        raise ComparisonError("reports use different validation sets")
    rows = []
    for k, (lm, bm) in enumerate(zip(low.means, bi.means)):
        col = low.columns[k] if k < len(low.columns) else f"c{k}"
        rows.append(ComparisonRow(col, float(lm), float(bm), improvement_factor(float(lm), float(bm))))
    return ComparisonTable(tuple(rows), int(low.validation_idx.size))


def save_comparison(table: ComparisonTable, stem) -> None:
    """Write ``<stem>.md`` and ``<stem>.json``."""
    stem = Path(stem)
    stem.with_suffix(".md").write_text(table.to_markdown(), encoding="utf-8")
    stem.with_suffix(".json").write_text(json.dumps(table.to_json(), indent=1) + "\n", encoding="utf-8")


# -- random vs centroid selection ------------------------------------------------


@dataclass(frozen=True)
class StudyResult:
    """``trial_means`` has one row per successful trial (component means in percent)."""

    centroid: np.ndarray
    trial_means: np.ndarray
    seeds: tuple[int, ...]
    failures: tuple[tuple[int, str], ...] = ()
    columns: tuple[str, ...] = ()

    @property
    def mean(self) -> np.ndarray:
        return self.trial_means.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        return self.trial_means.std(axis=0)

    @property
    def n_failed(self) -> int:
        return len(self.failures)

    def centroid_within_one_sigma(self) -> np.ndarray:
        return self.centroid <= self.mean + self.std

    def to_json(self) -> dict:
        return {
            "columns": list(self.columns),
            "centroid": [float(v) for v in self.centroid],
            "M": [float(v) for v in self.mean],
            "Sigma": [float(v) for v in self.std],
            "n_trials": len(self.seeds),
            "n_failed": self.n_failed,
            "failures": [{"seed": s, "error": msg} for s, msg in self.failures],
        }

    def to_markdown(self) -> str:
        cols = self.columns or tuple(f"c{k}" for k in range(self.centroid.size))
        lines = [
            "| | " + " | ".join(cols) + " |",
            "|---" * (len(cols) + 1) + "|",
            "| centroid selection (%) | " + " | ".join(f"{v:.2f}" for v in self.centroid) + " |",
            "| random M (%) | " + " | ".join(f"{v:.2f}" for v in self.mean) + " |",
            "| random Sigma (%) | " + " | ".join(f"{v:.2f}" for v in self.std) + " |",
        ]
        return "\n".join(lines) + "\n"


def selection_study(
    run: Callable[[str, int], np.ndarray],
    n_trials: int,
    seeds: Sequence[int] | None = None,
    columns: Sequence[str] = (),
) -> StudyResult:
    """Compare centroid selection against ``n_trials`` random selections.

    ``run(strategy, seed)`` performs the whole fusion for ``strategy`` in
    {"centroid", "random"} and returns per-component bi-fidelity mean errors.
    A failing random trial is recorded and skipped.
    """
    if n_trials < 2:
        raise ParameterError(f"selection study needs at least 2 trials, got {n_trials}")
    seeds = tuple(range(n_trials)) if seeds is None else tuple(int(s) for s in seeds)
    if len(seeds) != n_trials:
        raise ParameterError(f"got {len(seeds)} seeds for {n_trials} trials")
    centroid = np.asarray(run("centroid", 0), dtype=float)
    rows, failures = [], []
    for s in seeds:
        try:
            rows.append(np.asarray(run("random", s), dtype=float))
        except BifidError as exc:
            failures.append((s, str(exc)))
    if len(rows) < 1:
        raise BifidError(f"all {n_trials} random trials failed")
    return StudyResult(centroid, np.vstack(rows), seeds, tuple(failures), tuple(columns))
