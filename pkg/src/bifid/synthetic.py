"""Desk-scale low/high-fidelity problems.

* ``ring_disk`` -- a disk inside a ring; the high-fidelity version moves the
  disk outside the ring and stretches the ring by an affine map.
* ``canonical_clusters`` -- well separated balls, each rigidly translated.
* ``analytic_pair`` -- registered 1-d function pairs sampled on [0, 1].

All generators are pure functions of their spec (including the seed) and
return index-aligned low/high datasets in problem units.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dataset import Dataset, RestrictionSpec, restrict
from .errors import RegistryError, SpecError
from .selection import make_rng


def _stream(seed: int, name: str) -> np.random.Generator:
    return make_rng(seed, zlib.crc32(name.encode()))


@dataclass(frozen=True)
class SyntheticProblem:
    low: Dataset
    high: Dataset
    labels: np.ndarray | None = None
    name: str = ""


# -- ring and disk ------------------------------------------------------------


@dataclass(frozen=True)
class RingDiskSpec:
    n_points: int = 2000
    disk_center: tuple[float, float] = (0.0, 0.0)
    disk_radius: float = 0.5
    ring_inner: float = 1.5
    ring_outer: float = 2.0
    disk_fraction: float = 0.2
    disk_translation: tuple[float, float] = (3.5, 0.0)
    ring_affine: tuple[tuple[float, float], tuple[float, float]] = ((1.4, 0.0), (0.0, 0.8))
    seed: int = 0

    def validate(self) -> None:
        if self.n_points < 4:
            raise SpecError("ring_disk needs at least 4 points")
        if not 0 < self.disk_radius < self.ring_inner < self.ring_outer:
            raise SpecError("need 0 < disk_radius < ring_inner < ring_outer")
        if not 0 < self.disk_fraction < 1:
            raise SpecError("disk_fraction must lie in (0, 1)")
        if np.hypot(*self.disk_center) + self.disk_radius >= self.ring_inner:
            raise SpecError("disk must lie inside the ring's hole")


def ring_disk(spec: RingDiskSpec = RingDiskSpec()) -> SyntheticProblem:
    """Labels are 0 for disk points and 1 for ring points."""
    spec.validate()
    rng = _stream(spec.seed, "ring_disk")
    n_disk = int(round(spec.n_points * spec.disk_fraction))
    n_disk = min(max(n_disk, 1), spec.n_points - 1)
    n_ring = spec.n_points - n_disk

    r = spec.disk_radius * np.sqrt(rng.random(n_disk))
    t = 2 * np.pi * rng.random(n_disk)
    disk = np.column_stack([r * np.cos(t), r * np.sin(t)]) + np.asarray(spec.disk_center)

    a2, b2 = spec.ring_inner**2, spec.ring_outer**2
    r = np.sqrt(a2 + (b2 - a2) * rng.random(n_ring))
    t = 2 * np.pi * rng.random(n_ring)
    ring = np.column_stack([r * np.cos(t), r * np.sin(t)])

    low = np.vstack([disk, ring])
    labels = np.concatenate([np.zeros(n_disk, dtype=np.int64), np.ones(n_ring, dtype=np.int64)])
    order = rng.permutation(spec.n_points)
    low, labels = low[order], labels[order]

    A = np.asarray(spec.ring_affine, dtype=float)
    high = np.where(
        (labels == 0)[:, None],
        low + np.asarray(spec.disk_translation, dtype=float),
        low @ A.T,
    )
    cols = ("x", "y")
    return SyntheticProblem(
        Dataset(low, "low", columns=cols), Dataset(high, "high", columns=cols), labels, "ring-disk"
    )


# -- canonical rigid-translation clusters -------------------------------------


def _default_centers(M: int, dim: int) -> np.ndarray:
    t = 2 * np.pi * np.arange(M) / M
    C = np.zeros((M, dim))
    C[:, 0] = 2.0 * np.cos(t)
    if dim > 1:
        C[:, 1] = 2.0 * np.sin(t)
    return C


def _default_translations(M: int, dim: int) -> np.ndarray:
    t = 2 * np.pi * np.arange(M) / M + np.pi / 2
    T = np.zeros((M, dim))
    T[:, 0] = np.cos(t)
    if dim > 1:
        T[:, 1] = np.sin(t)
    return T


@dataclass(frozen=True)
class CanonicalSpec:
    M: int = 3
    points_per_cluster: int = 100
    dim: int = 2
    radius: float = 0.5
    centers: tuple | None = None
    translations: tuple | None = None
    seed: int = 0

    def center_array(self) -> np.ndarray:
        if self.centers is None:
            return _default_centers(self.M, self.dim)
        return np.asarray(self.centers, dtype=float).reshape(self.M, self.dim)

    def translation_array(self) -> np.ndarray:
        if self.translations is None:
            return _default_translations(self.M, self.dim)
        return np.asarray(self.translations, dtype=float).reshape(self.M, self.dim)

    def validate(self) -> None:
        if self.M < 1 or self.points_per_cluster < 1 or self.dim < 1:
            raise SpecError("M, points_per_cluster and dim must be positive")
        if not self.radius > 0:
            raise SpecError("radius must be positive")
        C = self.center_array()
        for i in range(self.M):
            for j in range(i + 1, self.M):
                if np.linalg.norm(C[i] - C[j]) <= 4 * self.radius:
                    raise SpecError(f"clusters {i} and {j} overlap (separation <= 4 radius)")


def canonical_clusters(spec: CanonicalSpec = CanonicalSpec()) -> SyntheticProblem:
    """Uniform balls around the centers; high = low + translation of the point's cluster."""
    spec.validate()
    rng = _stream(spec.seed, "canonical")
    C, T = spec.center_array(), spec.translation_array()
    n = spec.M * spec.points_per_cluster
    labels = np.repeat(np.arange(spec.M), spec.points_per_cluster)
    g = rng.standard_normal((n, spec.dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = spec.radius * rng.random(n) ** (1.0 / spec.dim)
    low = C[labels] + g * r[:, None]
    order = rng.permutation(n)
    low, labels = low[order], labels[order]
    high = low + T[labels]
    cols = tuple(f"u{k}" for k in range(spec.dim))
    return SyntheticProblem(
        Dataset(low, "low", columns=cols), Dataset(high, "high", columns=cols), labels, "canonical"
    )


# -- analytic function pairs --------------------------------------------------


def forrester_high(x):
    x = np.asarray(x, dtype=float)
    return (6 * x - 2) ** 2 * np.sin(12 * x - 4)


def forrester_low(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * forrester_high(x) + 10 * (x - 0.5) - 5


@dataclass(frozen=True)
class AnalyticPair:
    low: Callable
    high: Callable
    n_params: int = 1


PAIRS: dict[str, AnalyticPair] = {
    "forrester": AnalyticPair(forrester_low, forrester_high, 1),
}


@dataclass(frozen=True)
class AnalyticPairSpec:
    name: str = "forrester"
    n_samples: int = 500
    n_params: int = 1
    restriction: RestrictionSpec = field(default_factory=lambda: RestrictionSpec((0,), (0,)))
    seed: int = 0


def analytic_pair(spec: AnalyticPairSpec = AnalyticPairSpec()) -> SyntheticProblem:
    if spec.name not in PAIRS:
        raise RegistryError(f"unknown analytic pair {spec.name!r}; known: {sorted(PAIRS)}")
    pair = PAIRS[spec.name]
    if spec.n_params != pair.n_params:
        raise SpecError(f"pair {spec.name!r} takes {pair.n_params} parameter(s)")
    spec.restriction.validate(pair.n_params, 1)
    mu = _stream(spec.seed, f"analytic:{spec.name}").random((spec.n_samples, pair.n_params))
    x = mu[:, 0]
    low = restrict(mu, pair.low(x)[:, None], spec.restriction)
    high = restrict(mu, pair.high(x)[:, None], spec.restriction)
    cols = tuple(f"mu{i}" for i in spec.restriction.param_indices) + tuple(
        f"q{i}" for i in spec.restriction.qoi_indices
    )
    return SyntheticProblem(
        Dataset(low, "low", columns=cols), Dataset(high, "high", columns=cols), None, spec.name
    )
