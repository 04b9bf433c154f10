"""Data points, the restriction operator, [-1, 1] scaling and CSV/JSON I/O.

A :class:`Dataset` is an immutable ``(n_points, dim)`` array plus the
bookkeeping that travels with it: column names, a fidelity tag, the scaling
record that was applied (if any) and the row permutation relative to the
original ordering.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DimensionError,
    EmptyInputError,
    ParseError,
    PermutationError,
    StateError,
)

FIDELITIES = ("low", "high", "bi")


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RestrictionSpec:
    """Which parameter and QoI components make up a data point."""

    param_indices: tuple[int, ...] = ()
    qoi_indices: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "param_indices", tuple(int(i) for i in self.param_indices))
        object.__setattr__(self, "qoi_indices", tuple(int(i) for i in self.qoi_indices))
        for name, idx in (("param", self.param_indices), ("qoi", self.qoi_indices)):
            if len(set(idx)) != len(idx):
                raise DimensionError(f"duplicate {name} indices: {list(idx)}")
            if any(i < 0 for i in idx):
                raise DimensionError(f"negative {name} index in {list(idx)}")
        if self.dim < 1:
            raise DimensionError("restriction selects no components")

    @property
    def dim(self) -> int:
        return len(self.param_indices) + len(self.qoi_indices)

    @classmethod
    def full(cls, n_params: int, n_qois: int) -> "RestrictionSpec":
        return cls(tuple(range(n_params)), tuple(range(n_qois)))

    def validate(self, n_params: int, n_qois: int) -> None:
        if any(i >= n_params for i in self.param_indices):
            raise DimensionError(
                f"param index out of range for P={n_params}: {list(self.param_indices)}"
            )
        if any(i >= n_qois for i in self.qoi_indices):
            raise DimensionError(
                f"qoi index out of range for Q={n_qois}: {list(self.qoi_indices)}"
            )
        if not 1 < self.dim <= n_params + n_qois:
            raise DimensionError(
                f"data dimension {self.dim} must satisfy 1 < D <= P+Q = {n_params + n_qois}"
            )


def restrict(mu, q, spec: RestrictionSpec) -> np.ndarray:
    """Concatenate the selected parameter components and QoI components.

    ``mu`` and ``q`` may be single vectors or stacked ``(n, P)`` / ``(n, Q)``
    arrays; the output has the same leading shape.
    """
    mu = np.asarray(mu, dtype=float)
    q = np.asarray(q, dtype=float)
    n_params, n_qois = mu.shape[-1], q.shape[-1]
    if any(i >= n_params for i in spec.param_indices) or any(
        i >= n_qois for i in spec.qoi_indices
    ):
        raise DimensionError(
            f"restriction {spec} out of range for P={n_params}, Q={n_qois}"
        )
    parts = [mu[..., list(spec.param_indices)], q[..., list(spec.qoi_indices)]]
    return np.concatenate(parts, axis=-1)


@dataclass(frozen=True)
class ScalingRecord:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = _frozen(self.lo), _frozen(self.hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("lo and hi must be 1-d arrays of equal length")
        if np.any(hi < lo):
            raise DimensionError("scaling bounds require hi >= lo")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def degenerate(self) -> np.ndarray:
        return self.hi == self.lo

    def to_json(self) -> list[dict]:
        return [{"lo": float(a), "hi": float(b)} for a, b in zip(self.lo, self.hi)]

    @classmethod
    def from_json(cls, items: Sequence[dict]) -> "ScalingRecord":
        return cls([it["lo"] for it in items], [it["hi"] for it in items])


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray
    fidelity: str = "low"
    scaling: ScalingRecord | None = None
    permutation: np.ndarray | None = None
    columns: tuple[str, ...] | None = None

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim == 1:
            pts = _frozen(pts.reshape(-1, 1))
        if pts.ndim != 2:
            raise DimensionError(f"points must be 2-d, got shape {pts.shape}")
        object.__setattr__(self, "points", pts)
        if self.fidelity not in FIDELITIES:
            raise ValueError(f"fidelity must be one of {FIDELITIES}")
        n, d = pts.shape
        perm = np.arange(n) if self.permutation is None else self.permutation
        perm = _frozen(perm, dtype=np.int64)
        if perm.shape != (n,):
            raise PermutationError(f"permutation length {perm.size} != {n} rows")
        object.__setattr__(self, "permutation", perm)
        cols = self.columns
        if cols is None:
            cols = tuple(f"c{k}" for k in range(d))
        cols = tuple(str(c) for c in cols)
        if len(cols) != d:
            raise DimensionError(f"{len(cols)} column names for {d} columns")
        object.__setattr__(self, "columns", cols)
        if self.scaling is not None and self.scaling.dim != d:
            raise DimensionError(f"scaling has {self.scaling.dim} components, data {d}")

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def is_scaled(self) -> bool:
        return self.scaling is not None

    def with_points(self, points, **changes) -> "Dataset":
        return replace(self, points=points, **changes)

    def take(self, rows) -> "Dataset":
        """Subset of rows; ``permutation`` keeps pointing at original row numbers."""
        rows = np.asarray(rows, dtype=np.int64)
        return replace(self, points=self.points[rows], permutation=self.permutation[rows])


def fit_scaling(ds: Dataset) -> ScalingRecord:
    if ds.n_points < 2:
        raise EmptyInputError(f"scaling needs at least 2 points, got {ds.n_points}")
    return ScalingRecord(ds.points.min(axis=0), ds.points.max(axis=0))


def _affine(sc: ScalingRecord):
    span = sc.hi - sc.lo
    safe = np.where(sc.degenerate, 1.0, span)
    return span, safe


def apply_scaling(ds: Dataset, sc: ScalingRecord) -> Dataset:
    """Map component k by ``x -> 2 (x - lo_k) / (hi_k - lo_k) - 1``.

    Degenerate components (``hi_k == lo_k``) map to 0. Points outside the
    fitted range are allowed and land outside [-1, 1].
    """
    if sc.dim != ds.dim:
        raise DimensionError(f"scaling has {sc.dim} components, data {ds.dim}")
    _, safe = _affine(sc)
    scaled = 2.0 * (ds.points - sc.lo) / safe - 1.0
    scaled[:, sc.degenerate] = 0.0
    return ds.with_points(scaled, scaling=sc)


def inverse_scaling(ds: Dataset, sc: ScalingRecord | None = None) -> Dataset:
    sc = ds.scaling if sc is None else sc
    if sc is None or ds.scaling is None:
        raise StateError("dataset carries no scaling record")
    if sc.dim != ds.dim:
        raise DimensionError(f"scaling has {sc.dim} components, data {ds.dim}")
    span, _ = _affine(sc)
    raw = sc.lo + (ds.points + 1.0) * span / 2.0
    raw[:, sc.degenerate] = sc.lo[sc.degenerate]
    return ds.with_points(raw, scaling=None)


def check_permutation(perm, n: int) -> np.ndarray:
    perm = np.asarray(perm)
    if perm.shape != (n,) or not np.issubdtype(perm.dtype, np.integer):
        raise PermutationError(f"permutation must be {n} integers")
    seen = np.zeros(n, dtype=bool)
    if perm.min(initial=0) < 0 or perm.max(initial=-1) >= n:
        raise PermutationError("permutation entries out of range")
    seen[perm] = True
    if not seen.all():
        raise PermutationError("permutation is not a bijection")
    return perm.astype(np.int64)


def permute(ds: Dataset, perm) -> Dataset:
    """Row ``i`` of the result is row ``perm[i]`` of ``ds``.

    The stored permutation composes, so ``result.permutation[i]`` always
    points back at the original (pre-any-permutation) row.
    """
    perm = check_permutation(perm, ds.n_points)
    return ds.with_points(ds.points[perm], permutation=ds.permutation[perm])


def inverse_permutation(perm) -> np.ndarray:
    perm = np.asarray(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return inv


# -- I/O ---------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def save_csv(ds: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ds.columns)
        for row in ds.points:
            w.writerow([_fmt(x) for x in row])


def read_table(path) -> tuple[tuple[str, ...], np.ndarray]:
    """Read a header + numeric-rows CSV into (column names, array)."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise EmptyInputError(f"{path}: empty file")
    header = tuple(c.strip() for c in rows[0])
    body = rows[1:]
    if not body:
        raise EmptyInputError(f"{path}: no data rows")
    out = np.empty((len(body), len(header)))
    for i, r in enumerate(body):
        line_no = i + 2
        if len(r) != len(header):
            raise ParseError(
                f"{path}: expected {len(header)} columns, got {len(r)}", row=line_no
            )
        for k, cell in enumerate(r):
            try:
                out[i, k] = float(cell)
            except ValueError:
                raise ParseError(f"{path}: non-numeric cell {cell!r}", row=line_no) from None
    return header, out


def load_csv(path, fidelity: str = "low") -> Dataset:
    header, values = read_table(path)
    return Dataset(values, fidelity=fidelity, columns=header)


def sidecar_dict(ds: Dataset, provenance: dict | None = None) -> dict:
    doc = {
        "scaling": ds.scaling.to_json() if ds.scaling is not None else None,
        "permutation": [int(i) for i in ds.permutation],
        "fidelity": ds.fidelity,
    }
    if provenance:
        doc["provenance"] = provenance
    return doc


def save_sidecar(ds: Dataset, path, provenance: dict | None = None) -> None:
    Path(path).write_text(json.dumps(sidecar_dict(ds, provenance), indent=1) + "\n")


def load_sidecar(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("scaling") is not None:
        doc["scaling"] = ScalingRecord.from_json(doc["scaling"])
    doc["permutation"] = np.asarray(doc.get("permutation", []), dtype=np.int64)
    return doc


def mean_distance(a, b) -> float:
    a = a.points if isinstance(a, Dataset) else np.asarray(a)
    b = b.points if isinstance(b, Dataset) else np.asarray(b)
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


__all__ = [
    "Dataset",
    "RestrictionSpec",
    "ScalingRecord",
    "apply_scaling",
    "check_permutation",
    "fit_scaling",
    "inverse_permutation",
    "inverse_scaling",
    "load_csv",
    "load_sidecar",
    "mean_distance",
    "permute",
    "read_table",
    "restrict",
    "save_csv",
    "save_sidecar",
    "sidecar_dict",
]
