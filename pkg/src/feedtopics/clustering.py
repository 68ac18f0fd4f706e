"""Dimensionality reduction and density-based clustering with noise.

Reduction shrinks document vectors to a small working space before the
density clusterer runs. The neighborhood-graph reducer (umap-learn) is
used when installed; otherwise a deterministic PCA reducer stands in
behind the same contract, and the substitution is recorded in the matrix
provenance and the run manifest. Clustering delegates to HDBSCAN as
shipped by scikit-learn; points that fit no cluster keep the noise label
-1 with probability zero.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.cluster import HDBSCAN
from sklearn.decomposition import PCA

from .embedding import EmbeddingMatrix

log = logging.getLogger(__name__)

NOISE_LABEL = -1

SELECTION_LEAF = "leaf"
SELECTION_EXCESS_OF_MASS = "excess_of_mass"
_SELECTION_TO_SKLEARN = {SELECTION_LEAF: "leaf", SELECTION_EXCESS_OF_MASS: "eom"}


class ReductionError(RuntimeError):
    """Reduction preconditions violated or the reducer failed."""


class ClusteringError(RuntimeError):
    """Clustering produced output violating its contract."""


@dataclass(frozen=True)
class ReductionConfig:
    output_dims: int = 20
    n_neighbors: int = 100
    min_dist: float = 0.0
    seed: int = 0
    # "auto" prefers the neighborhood-graph reducer and falls back to PCA.
    method: str = "auto"

    def __post_init__(self) -> None:
        if self.output_dims < 1:
            raise ValueError("output_dims must be positive")
        if self.n_neighbors < 2:
            raise ValueError("n_neighbors must be at least 2")
        if self.min_dist < 0:
            raise ValueError("min_dist must be non-negative")


@dataclass(frozen=True)
class ClusterConfig:
    min_cluster_size: int = 30
    selection: str = SELECTION_LEAF

    def __post_init__(self) -> None:
        if self.min_cluster_size < 2:
            raise ValueError("min_cluster_size must be at least 2")
        if self.selection not in _SELECTION_TO_SKLEARN:
            raise ValueError(f"selection must be one of {sorted(_SELECTION_TO_SKLEARN)}")


@dataclass(frozen=True)
class ClusterAssignment:
    doc_id: str
    label: int
    probability: float


def _umap_available() -> bool:
    try:
        import umap  # noqa: F401
    except ImportError:
        return False
    return True


def _resolve_method(config: ReductionConfig) -> str:
    if config.method == "auto":
        return "umap" if _umap_available() else "pca"
    if config.method in ("umap", "pca"):
        if config.method == "umap" and not _umap_available():
            raise ReductionError("umap-learn is not installed; use method='pca' or 'auto'")
        return config.method
    raise ReductionError(f"unknown reduction method {config.method!r}")


@dataclass
class FittedReducer:
    """A fitted reduction transform; maps new embedding-space rows into
    the same reduced space as the batch it was fit on."""

    method: str
    config: ReductionConfig
    _model: object

    def transform(self, rows: np.ndarray) -> np.ndarray:
        if self.method == "umap":
            out = self._model.transform(rows)
        else:
            out = self._model.transform(np.asarray(rows, dtype=np.float64))
        return np.asarray(out, dtype=np.float32)


def fit_reduce(matrix: EmbeddingMatrix, config: ReductionConfig) -> tuple[EmbeddingMatrix, FittedReducer]:
    """Project rows into ``output_dims`` dimensions and keep the fitted
    transform for out-of-batch documents.

    Deterministic for a fixed seed; requires more rows than ``n_neighbors``
    so the neighborhood graph is well defined.
    """
    n_rows, n_dims = matrix.vectors.shape
    if n_rows <= config.n_neighbors:
        raise ReductionError(
            f"reduction needs more rows than n_neighbors: got {n_rows} rows for"
            f" n_neighbors={config.n_neighbors}; ingest more documents or lower n_neighbors"
        )
    if config.output_dims >= n_dims:
        raise ReductionError(
            f"output_dims={config.output_dims} must be smaller than the input dimension {n_dims}"
        )

    method = _resolve_method(config)
    if method == "umap":
        import umap

        reducer = umap.UMAP(
            n_components=config.output_dims,
            n_neighbors=config.n_neighbors,
            min_dist=config.min_dist,
            random_state=config.seed,
            metric="euclidean",
        )
        reduced = np.asarray(reducer.fit_transform(matrix.vectors), dtype=np.float32)
    else:
        reducer = PCA(n_components=config.output_dims, svd_solver="auto", random_state=config.seed)
        reduced = np.asarray(reducer.fit_transform(matrix.vectors.astype(np.float64)), dtype=np.float32)

    if not np.isfinite(reduced).all():
        raise ReductionError("reducer produced non-finite values")

    provenance = {
        "space": "reduced",
        "method": method,
        "output_dims": config.output_dims,
        "n_neighbors": config.n_neighbors,
        "min_dist": config.min_dist,
        "seed": config.seed,
        "source_hash": matrix.content_hash,
    }
    if method == "pca":
        provenance["substitution"] = (
            "neighborhood-graph reducer unavailable; deterministic PCA used behind the same contract"
        )
    out = EmbeddingMatrix(
        ids=list(matrix.ids),
        vectors=reduced,
        dimension=config.output_dims,
        provenance=provenance,
    )
    return out, FittedReducer(method=method, config=config, _model=reducer)


def reduce(matrix: EmbeddingMatrix, config: ReductionConfig) -> EmbeddingMatrix:
    """:func:`fit_reduce` without keeping the transform."""
    return fit_reduce(matrix, config)[0]


def project_2d(matrix: EmbeddingMatrix, seed: int = 0) -> EmbeddingMatrix:
    """Two-dimensional projection for scatter views; same contract as
    :func:`reduce` with ``output_dims=2``."""
    n_rows = matrix.vectors.shape[0]
    neighbors = min(100, max(2, n_rows - 1))
    config = ReductionConfig(output_dims=2, n_neighbors=neighbors, min_dist=0.0, seed=seed)
    projected = reduce(matrix, config)
    projected.provenance["space"] = "projection_2d"
    return projected


def cluster(reduced: EmbeddingMatrix, config: ClusterConfig) -> list[ClusterAssignment]:
    """Group reduced rows into topics; unassignable rows become noise.

    Labels are renumbered 0..K-1 by descending cluster size (ties broken by
    the smallest member doc id); noise rows carry probability 0.
    """
    if reduced.vectors.shape[0] == 0:
        raise ClusteringError("cannot cluster an empty matrix")

    model = HDBSCAN(
        min_cluster_size=config.min_cluster_size,
        cluster_selection_method=_SELECTION_TO_SKLEARN[config.selection],
    )
    raw_labels = model.fit_predict(reduced.vectors)
    probabilities = np.asarray(model.probabilities_, dtype=np.float64)
    probabilities = np.clip(probabilities, 0.0, 1.0)

    label_order = _renumbering(reduced.ids, raw_labels)
    assignments: list[ClusterAssignment] = []
    for doc_id, raw_label, probability in zip(reduced.ids, raw_labels, probabilities):
        if raw_label == NOISE_LABEL:
            assignments.append(ClusterAssignment(doc_id, NOISE_LABEL, 0.0))
        else:
            assignments.append(ClusterAssignment(doc_id, label_order[int(raw_label)], float(probability)))

    _validate_assignments(assignments, config)
    if all(a.label == NOISE_LABEL for a in assignments):
        log.warning("clustering produced only noise (%d points)", len(assignments))
    return assignments


def _renumbering(ids: Sequence[str], raw_labels: np.ndarray) -> dict[int, int]:
    members: dict[int, list[str]] = {}
    for doc_id, label in zip(ids, raw_labels):
        if label != NOISE_LABEL:
            members.setdefault(int(label), []).append(doc_id)
    ordered = sorted(members.items(), key=lambda item: (-len(item[1]), min(item[1])))
    return {raw: new for new, (raw, _) in enumerate(ordered)}


def _validate_assignments(assignments: Sequence[ClusterAssignment], config: ClusterConfig) -> None:
    sizes: dict[int, int] = {}
    for a in assignments:
        if a.label < NOISE_LABEL:
            raise ClusteringError(f"invalid label {a.label} for {a.doc_id}")
        if not (0.0 <= a.probability <= 1.0):
            raise ClusteringError(f"probability out of bounds for {a.doc_id}: {a.probability}")
        if a.label == NOISE_LABEL and a.probability != 0.0:
            raise ClusteringError(f"noise point {a.doc_id} has non-zero probability")
        if a.label != NOISE_LABEL:
            sizes[a.label] = sizes.get(a.label, 0) + 1
    if sizes and sorted(sizes) != list(range(len(sizes))):
        raise ClusteringError(f"labels are not contiguous: {sorted(sizes)}")
    undersized = {label: n for label, n in sizes.items() if n < config.min_cluster_size}
    if undersized:
        raise ClusteringError(
            f"clusters below min_cluster_size={config.min_cluster_size}: {undersized}"
        )


def save_assignments(assignments: Iterable[ClusterAssignment], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for a in assignments:
            fh.write(json.dumps({"doc_id": a.doc_id, "label": a.label, "probability": a.probability}))
            fh.write("\n")
    return path


def load_assignments(path: str | Path) -> list[ClusterAssignment]:
    assignments = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        assignments.append(
            ClusterAssignment(record["doc_id"], int(record["label"]), float(record["probability"]))
        )
    return assignments
