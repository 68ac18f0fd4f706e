"""Sentence embeddings and document-level mean pooling.

Two backends ship: the reference pretrained sentence encoder (reached
through an external model runtime, optional dependency) and a seeded
feature-hashing embedder that is deterministic, dependency-free, and used
for CI and property tests. A document vector is the arithmetic mean of its
sentence vectors.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .corpus import CleanDocument

REFERENCE_MODEL = "bert-base-nli-mean-tokens"
REFERENCE_DIMENSION = 768


class EmbeddingBackendError(RuntimeError):
    """The backend is unavailable or failed transiently; retriable."""


class EmbeddingConfigError(ValueError):
    """The configuration contradicts the backend; not retriable."""


@dataclass(frozen=True)
class EmbedderConfig:
    backend_id: str = "hashing"
    model_name: str = ""
    dimension: int = REFERENCE_DIMENSION
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dimension < 2:
            raise EmbeddingConfigError("dimension must be at least 2")
        if self.batch_size < 1:
            raise EmbeddingConfigError("batch_size must be positive")


class SentenceEmbedder(Protocol):
    dimension: int

    def embed(self, sentences: Sequence[str]) -> np.ndarray: ...


_TOKEN = re.compile(r"\w+", re.UNICODE)


def fallback_embed(sentence: str, dimension: int, seed: int) -> np.ndarray:
    """Seeded feature hashing of word uni- and bigrams into ``dimension``
    signed buckets, L2-normalized. Equal sentences map to equal vectors;
    token overlap raises cosine similarity."""
    if dimension < 2:
        raise ValueError("dimension must be at least 2")
    tokens = _TOKEN.findall(sentence.lower())
    grams = tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
    if not grams:
        # Degenerate sentence with no word characters: hash it whole so the
        # output still has unit norm.
        grams = [sentence]
    vec = np.zeros(dimension, dtype=np.float64)
    for gram in grams:
        digest = hashlib.blake2b(f"{seed}:{gram}".encode("utf-8"), digest_size=16).digest()
        index = int.from_bytes(digest[:8], "little") % dimension
        sign = 1.0 if digest[8] % 2 == 0 else -1.0
        vec[index] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        # Signed collisions cancelled everything; fall back to an unsigned
        # deterministic bucket so the unit-norm contract holds.
        digest = hashlib.blake2b(f"{seed}|{sentence}".encode("utf-8"), digest_size=16).digest()
        vec[int.from_bytes(digest[:8], "little") % dimension] = 1.0
        norm = 1.0
    return (vec / norm).astype(np.float32)


class HashingEmbedder:
    """Deterministic test backend built on :func:`fallback_embed`."""

    def __init__(self, dimension: int = REFERENCE_DIMENSION, seed: int = 0):
        if dimension < 2:
            raise EmbeddingConfigError("dimension must be at least 2")
        self.dimension = dimension
        self.seed = seed
        self.truncated = 0

    def embed(self, sentences: Sequence[str]) -> np.ndarray:
        if not sentences:
            return np.zeros((0, self.dimension), dtype=np.float32)
        return np.stack([fallback_embed(s, self.dimension, self.seed) for s in sentences])


class SentenceTransformerEmbedder:
    """Pretrained sentence encoder reached through the sentence-transformers
    runtime. Sentences beyond the model's token limit are truncated by the
    backend; the count is recorded in ``truncated``."""

    def __init__(self, model_name: str = REFERENCE_MODEL, dimension: int = REFERENCE_DIMENSION, batch_size: int = 64):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EmbeddingBackendError(
                "sentence-transformers is not installed; install the 'sbert' extra or use the hashing backend"
            ) from exc
        try:
            self._model = SentenceTransformer(model_name)
        except Exception as exc:  # model download/load failures are retriable
            raise EmbeddingBackendError(f"cannot load model {model_name!r}: {exc}") from exc
        declared = self._model.get_sentence_embedding_dimension()
        if declared != dimension:
            raise EmbeddingConfigError(
                f"configured dimension {dimension} does not match model output width {declared}"
            )
        self.dimension = dimension
        self.batch_size = batch_size
        self.truncated = 0

    def embed(self, sentences: Sequence[str]) -> np.ndarray:
        if not sentences:
            return np.zeros((0, self.dimension), dtype=np.float32)
        limit = getattr(self._model, "max_seq_length", None)
        if limit:
            try:
                tokenizer = self._model.tokenizer
                self.truncated += sum(
                    1 for s in sentences if len(tokenizer.encode(s, add_special_tokens=True)) > limit
                )
            except Exception:
                pass
        vectors = self._model.encode(
            list(sentences),
            batch_size=self.batch_size,
            convert_to_numpy=True,
            show_progress_bar=False,
        )
        return np.asarray(vectors, dtype=np.float32)


def make_backend(config: EmbedderConfig) -> SentenceEmbedder:
    if config.backend_id == "hashing":
        return HashingEmbedder(dimension=config.dimension, seed=config.seed)
    if config.backend_id == "sbert":
        return SentenceTransformerEmbedder(
            model_name=config.model_name or REFERENCE_MODEL,
            dimension=config.dimension,
            batch_size=config.batch_size,
        )
    raise EmbeddingConfigError(f"unknown embedding backend {config.backend_id!r}")


def embed_sentences(sentences: Sequence[str], backend: SentenceEmbedder) -> np.ndarray:
    """One row per sentence, input order preserved, float32, finite."""
    matrix = backend.embed(sentences)
    if matrix.shape != (len(sentences), backend.dimension):
        raise EmbeddingConfigError(
            f"backend returned shape {matrix.shape}, expected {(len(sentences), backend.dimension)}"
        )
    if matrix.size and not np.isfinite(matrix).all():
        raise EmbeddingBackendError("backend produced non-finite values")
    return matrix.astype(np.float32, copy=False)


def pool_document(sentence_rows: np.ndarray) -> np.ndarray:
    """Componentwise mean over sentence rows. Accumulates in float64 so
    pooling k copies of one row returns that row exactly."""
    rows = np.asarray(sentence_rows)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ValueError("pooling requires at least one sentence row")
    return rows.mean(axis=0, dtype=np.float64).astype(np.float32)


@dataclass
class EmbeddingMatrix:
    """Row-per-document dense float32 matrix with ids and provenance.

    Also reused for reduced and projected spaces; ``provenance`` records
    which transform produced the rows.
    """

    ids: list[str]
    vectors: np.ndarray
    dimension: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2:
            raise ValueError("vectors must be a 2-D array")
        if self.vectors.shape[0] != len(self.ids):
            raise ValueError("row count must equal id count")
        if self.vectors.shape[1] != self.dimension:
            raise ValueError("declared dimension does not match vectors")

    def validate(self) -> None:
        if self.vectors.size and not np.isfinite(self.vectors).all():
            raise ValueError("matrix contains NaN or Inf entries")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate document ids")

    @property
    def content_hash(self) -> str:
        return hashlib.sha256(self.vectors.astype("<f4").tobytes()).hexdigest()

    def row_for(self, doc_id: str) -> np.ndarray:
        return self.vectors[self.ids.index(doc_id)]

    def save(self, prefix: str | Path) -> tuple[Path, Path]:
        """Write ``<prefix>.f32`` (row-major little-endian float32 blob) and
        ``<prefix>.json`` sidecar."""
        prefix = Path(prefix)
        blob_path = prefix.with_suffix(".f32")
        sidecar_path = prefix.with_suffix(".json")
        blob = self.vectors.astype("<f4").tobytes()
        blob_path.write_bytes(blob)
        sidecar = {
            "ids": self.ids,
            "dimension": self.dimension,
            "rows": int(self.vectors.shape[0]),
            "model_name": self.provenance.get("model_name", ""),
            "content_hash": self.content_hash,
            "provenance": self.provenance,
        }
        sidecar_path.write_text(json.dumps(sidecar, sort_keys=True), encoding="utf-8")
        return blob_path, sidecar_path

    @classmethod
    def load(cls, prefix: str | Path) -> "EmbeddingMatrix":
        prefix = Path(prefix)
        sidecar = json.loads(prefix.with_suffix(".json").read_text(encoding="utf-8"))
        raw = prefix.with_suffix(".f32").read_bytes()
        rows = sidecar["rows"]
        dimension = sidecar["dimension"]
        vectors = np.frombuffer(raw, dtype="<f4").reshape(rows, dimension).copy()
        matrix = cls(
            ids=list(sidecar["ids"]),
            vectors=vectors,
            dimension=dimension,
            provenance=sidecar.get("provenance", {}),
        )
        if matrix.content_hash != sidecar["content_hash"]:
            raise ValueError(f"matrix blob does not match its sidecar hash ({prefix})")
        return matrix


def embed_documents(
    documents: Iterable[CleanDocument],
    backend: SentenceEmbedder,
    config: EmbedderConfig | None = None,
) -> EmbeddingMatrix:
    """Embed every sentence, mean-pool per document. Excluded documents
    must be filtered out by the caller and raise here."""
    docs = list(documents)
    for doc in docs:
        if doc.excluded or not doc.sentences:
            raise ValueError(f"document {doc.id} is excluded or empty; it must not be embedded")

    flat: list[str] = []
    bounds: list[tuple[int, int]] = []
    for doc in docs:
        start = len(flat)
        flat.extend(doc.sentences)
        bounds.append((start, len(flat)))

    batch = config.batch_size if config else 256
    rows = np.zeros((len(flat), backend.dimension), dtype=np.float32)
    for offset in range(0, len(flat), batch):
        chunk = flat[offset : offset + batch]
        rows[offset : offset + len(chunk)] = embed_sentences(chunk, backend)

    pooled = np.zeros((len(docs), backend.dimension), dtype=np.float32)
    for i, (start, end) in enumerate(bounds):
        pooled[i] = pool_document(rows[start:end])

    corpus_digest = hashlib.sha256()
    for doc in docs:
        corpus_digest.update(doc.id.encode("utf-8"))
        corpus_digest.update(b"\x00")
        corpus_digest.update(doc.rejoined().encode("utf-8"))
        corpus_digest.update(b"\x01")

    provenance = {
        "backend_id": config.backend_id if config else type(backend).__name__,
        "model_name": config.model_name if config else "",
        "dimension": backend.dimension,
        "seed": getattr(backend, "seed", None),
        "input_hash": corpus_digest.hexdigest(),
        "truncated_sentences": getattr(backend, "truncated", 0),
        "space": "embedding",
    }
    matrix = EmbeddingMatrix(
        ids=[doc.id for doc in docs],
        vectors=pooled,
        dimension=backend.dimension,
        provenance=provenance,
    )
    matrix.validate()
    return matrix
