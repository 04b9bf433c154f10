"""Choosing which points get high-fidelity evaluations.

Points are embedded with the low-lying Laplacian eigenfunctions, clustered
with Lloyd's k-means (D^2 seeding, several restarts), and the member nearest
each centroid is selected.  A seeded uniform draw is provided as a baseline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import Dataset
from .errors import BifidError, ParameterError
from .spectral import SpectralEmbedding, Spectrum, embed


def make_rng(*words: int) -> np.random.Generator:
    """Counter-based generator keyed by the given integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(w) & (2**64 - 1) for w in words])))


@dataclass(frozen=True)
class KMeansConfig:
    n_clusters: int
    n_restarts: int = 10
    max_iters: int = 300
    seed: int = 0
    tol: float = 1e-10

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ParameterError(f"n_clusters must be >= 1, got {self.n_clusters}")
        if self.n_restarts < 1 or self.max_iters < 1:
            raise ParameterError("n_restarts and max_iters must be >= 1")
        if self.tol < 0:
            raise ParameterError("tol must be nonnegative")


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int
    history: tuple[float, ...] = ()
    restart: int = 0


@dataclass(frozen=True)
class SelectionResult:
    selected: np.ndarray
    permutation: np.ndarray
    labels: np.ndarray | None = None
    centroids: np.ndarray | None = None
    inertia: float | None = None
    seed: int | None = None
    strategy: str = "centroid"

    @property
    def n_selected(self) -> int:
        return self.selected.size

    def report(self, labels_path: str | None = None) -> dict:
        return {
            "selected": [int(i) for i in self.selected],
            "inertia": None if self.inertia is None else float(self.inertia),
            "seed": self.seed,
            "labels_path": labels_path,
            "strategy": self.strategy,
        }


def _sq_dist(X, C):
    # per-pair differences, so coincident points give exact zeros
    return cdist(X, C, metric="sqeuclidean")


def _seed_centroids(X, k, rng):
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dist(X, X[chosen]).ravel()
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            mask = np.ones(n, dtype=bool)
            mask[chosen] = False
            idx = int(np.flatnonzero(mask)[0])
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dist(X, X[[idx]]).ravel())
    return X[chosen].copy()


def _repair_empty(X, labels, centroids, k):
    """Give each empty cluster the point farthest from its own centroid."""
    labels = labels.copy()
    counts = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(counts == 0):
        own = ((X - centroids[labels]) ** 2).sum(axis=1)
        own[counts[labels] < 2] = -1.0
        far = int(np.argmax(own))
        counts[labels[far]] -= 1
        labels[far] = c
        counts[c] = 1
    return labels


def _means(X, labels, k):
    C = np.zeros((k, X.shape[1]))
    np.add.at(C, labels, X)
    return C / np.bincount(labels, minlength=k)[:, None]


def _inertia(X, labels, C):
    return float(((X - C[labels]) ** 2).sum())


def _lloyd(X, k, rng, max_iters, tol, restart):
    C = _seed_centroids(X, k, rng)
    history = []
    n_iter = 0
    labels = None
    for n_iter in range(1, max_iters + 1):
        labels = np.argmin(_sq_dist(X, C), axis=1)
        labels = _repair_empty(X, labels, C, k)
        C_new = _means(X, labels, k)
        history.append(_inertia(X, labels, C_new))
        shift = float(np.max(np.linalg.norm(C_new - C, axis=1)))
        C = C_new
        if shift <= tol:
            break
    return KMeansResult(labels, C, history[-1], n_iter, tuple(history), restart)


def kmeans(embedding, cfg: KMeansConfig) -> KMeansResult:
    """Best-of-restarts Lloyd clustering; ties between restarts go to the earliest."""
    X = embedding.coords if isinstance(embedding, SpectralEmbedding) else np.asarray(embedding, dtype=float)
    n = X.shape[0]
    k = cfg.n_clusters
    if k > n:
        raise ParameterError(f"n_clusters={k} exceeds number of points {n}")
    best = None
    for r in range(cfg.n_restarts):
        res = _lloyd(X, k, make_rng(cfg.seed, r), cfg.max_iters, cfg.tol, r)
        if best is None or res.inertia < best.inertia:
            best = res
    return best


def nearest_to_centroids(embedding, centroids, labels) -> np.ndarray:
    """Per cluster, the member closest to the centroid (lowest index on ties)."""
    X = embedding.coords if isinstance(embedding, SpectralEmbedding) else np.asarray(embedding, dtype=float)
    labels = np.asarray(labels)
    out = np.empty(len(centroids), dtype=np.int64)
    for c, mu in enumerate(np.asarray(centroids)):
        members = np.flatnonzero(labels == c)
        if members.size == 0:
            raise BifidError(f"cluster {c} is empty; k-means repair should prevent this")
        d = ((X[members] - mu) ** 2).sum(axis=1)
        out[c] = members[int(np.argmin(d))]
    return out


def selection_permutation(selected, n: int) -> np.ndarray:
    selected = np.asarray(selected, dtype=np.int64)
    rest = np.setdiff1d(np.arange(n), selected, assume_unique=False)
    return np.concatenate([selected, rest])


def select_high_fidelity(points: Dataset | int, spec: Spectrum, cfg: KMeansConfig) -> SelectionResult:
    n = points.n_points if isinstance(points, Dataset) else int(points)
    if spec.n_nodes != n:
        raise ParameterError(f"spectrum has {spec.n_nodes} nodes, dataset {n}")
    if cfg.n_clusters > spec.n_modes:
        raise ParameterError(
            f"need {cfg.n_clusters} modes for the embedding, spectrum has {spec.n_modes}"
        )
    emb = embed(spec, 0, cfg.n_clusters)
    km = kmeans(emb, cfg)
    selected = nearest_to_centroids(emb, km.centroids, km.labels)
    return SelectionResult(
        selected=selected,
        permutation=selection_permutation(selected, n),
        labels=km.labels,
        centroids=km.centroids,
        inertia=km.inertia,
        seed=cfg.seed,
        strategy="centroid",
    )


def random_selection(points: Dataset | int, N: int, seed: int) -> SelectionResult:
    n = points.n_points if isinstance(points, Dataset) else int(points)
    if not 1 <= N <= n:
        raise ParameterError(f"N={N} must satisfy 1 <= N <= {n}")
    selected = make_rng(seed).choice(n, size=N, replace=False).astype(np.int64)
    return SelectionResult(
        selected=selected,
        permutation=selection_permutation(selected, n),
        seed=seed,
        strategy="random",
    )


def save_selection(sel: SelectionResult, directory) -> None:
    directory = Path(directory)
    labels_path = None
    if sel.labels is not None:
        labels_path = "labels.csv"
        with (directory / labels_path).open("w", encoding="utf-8") as fh:
            fh.write("index,label\n")
            for i, lab in enumerate(sel.labels):
                fh.write(f"{i},{int(lab)}\n")
    (directory / "selection.json").write_text(json.dumps(sel.report(labels_path), indent=1) + "\n")
    (directory / "permutation.json").write_text(
        json.dumps({"permutation": [int(i) for i in sel.permutation]}) + "\n"
    )


def load_selection(directory) -> SelectionResult:
    directory = Path(directory)
    rep = json.loads((directory / "selection.json").read_text())
    perm = json.loads((directory / "permutation.json").read_text())["permutation"]
    labels = None
    if rep.get("labels_path"):
        rows = (directory / rep["labels_path"]).read_text().splitlines()[1:]
        labels = np.array([int(r.split(",")[1]) for r in rows], dtype=np.int64)
    return SelectionResult(
        selected=np.asarray(rep["selected"], dtype=np.int64),
        permutation=np.asarray(perm, dtype=np.int64),
        labels=labels,
        inertia=rep.get("inertia"),
        seed=rep.get("seed"),
        strategy=rep.get("strategy", "centroid"),
    )

