"""Run orchestration: stage execution, persistence, and the run manifest.

Each run lives in its own directory under the store root. The seven
pipeline stages (ingest, preprocess, embed, reduce, cluster, topics,
trends) each persist one artifact; the manifest records configs, seeds,
and per-stage artifact hashes. Reruns skip stages whose inputs, config,
and artifact all still hash-verify, and rerun everything downstream of the
first stage that does not.
"""

from __future__ import annotations

import hashlib
import json
import shutil
from dataclasses import dataclass, field, asdict
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Callable

from . import clustering, corpus, embedding, topics as topics_mod
from .embedding import EmbedderConfig, EmbeddingMatrix, make_backend
from .clustering import ClusterConfig, ReductionConfig

STAGES = ("ingest", "preprocess", "embed", "reduce", "cluster", "topics", "trends")

MANIFEST_NAME = "manifest.json"


class StageFailure(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class TrendConfig:
    window_days: float = 7.0
    horizon: int = 8
    threshold: float = 0.5

    @property
    def window(self) -> timedelta:
        return timedelta(days=self.window_days)


@dataclass(frozen=True)
class PipelineConfig:
    handles: tuple[str, ...] = ("ExampleTelco",)
    languages: tuple[str, ...] | None = None
    embedding: EmbedderConfig = field(default_factory=EmbedderConfig)
    reduction: ReductionConfig = field(default_factory=ReductionConfig)
    clustering: ClusterConfig = field(default_factory=ClusterConfig)
    trends: TrendConfig = field(default_factory=TrendConfig)
    projection_seed: int = 0

    def to_dict(self) -> dict:
        return {
            "handles": list(self.handles),
            "languages": list(self.languages) if self.languages is not None else None,
            "embedding": asdict(self.embedding),
            "reduction": asdict(self.reduction),
            "clustering": asdict(self.clustering),
            "trends": asdict(self.trends),
            "projection_seed": self.projection_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        languages = data.get("languages")
        return cls(
            handles=tuple(data.get("handles", ("ExampleTelco",))),
            languages=tuple(languages) if languages is not None else None,
            embedding=EmbedderConfig(**data.get("embedding", {})),
            reduction=ReductionConfig(**data.get("reduction", {})),
            clustering=ClusterConfig(**data.get("clustering", {})),
            trends=TrendConfig(**data.get("trends", {})),
            projection_seed=data.get("projection_seed", 0),
        )

    def seeds(self) -> dict:
        return {
            "embedding": self.embedding.seed,
            "reduction": self.reduction.seed,
            "projection": self.projection_seed,
        }


def _canonical(data: object) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class StageRecord:
    name: str
    status: str  # "completed" | "failed"
    artifact_files: list[str] = field(default_factory=list)
    artifact_hash: str = ""
    input_hash: str = ""
    config_hash: str = ""
    started_at: str = ""
    finished_at: str = ""
    error: str | None = None
    meta: dict = field(default_factory=dict)


@dataclass
class RunManifest:
    run_id: str
    created_at: str
    corpus_path: str
    corpus_hash: str
    config: dict
    seeds: dict
    stages: dict[str, StageRecord] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "created_at": self.created_at,
            "corpus_path": self.corpus_path,
            "corpus_hash": self.corpus_hash,
            "config": self.config,
            "seeds": self.seeds,
            "stages": {name: asdict(record) for name, record in self.stages.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        stages = {name: StageRecord(**record) for name, record in data.get("stages", {}).items()}
        return cls(
            run_id=data["run_id"],
            created_at=data["created_at"],
            corpus_path=data["corpus_path"],
            corpus_hash=data["corpus_hash"],
            config=data["config"],
            seeds=data["seeds"],
            stages=stages,
        )

    def content_fingerprint(self) -> str:
        """Hash of everything that determines run content: configs, seeds,
        corpus hash, and per-stage artifact hashes. Run id and wall-clock
        timestamps are excluded so identical inputs give identical prints."""
        payload = {
            "corpus_hash": self.corpus_hash,
            "config": self.config,
            "seeds": self.seeds,
            "stages": {
                name: {
                    "status": record.status,
                    "artifact_files": record.artifact_files,
                    "artifact_hash": record.artifact_hash,
                    "input_hash": record.input_hash,
                    "config_hash": record.config_hash,
                }
                for name, record in self.stages.items()
            },
        }
        return sha256_text(_canonical(payload))

    def save(self, run_dir: Path) -> Path:
        path = run_dir / MANIFEST_NAME
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        return path

    @classmethod
    def load(cls, run_dir: Path) -> "RunManifest":
        return cls.from_dict(json.loads((run_dir / MANIFEST_NAME).read_text(encoding="utf-8")))

    def verify_artifacts(self, run_dir: Path) -> list[str]:
        """Names of stages whose artifacts are missing or hash-mismatched."""
        broken = []
        for name, record in self.stages.items():
            if record.status != "completed":
                broken.append(name)
                continue
            if record.artifact_hash != _hash_files(run_dir, record.artifact_files):
                broken.append(name)
        return broken


def _hash_files(run_dir: Path, names: list[str]) -> str:
    digest = hashlib.sha256()
    for name in names:
        path = run_dir / name
        if not path.exists():
            return ""
        digest.update(name.encode("utf-8"))
        digest.update(bytes.fromhex(sha256_file(path)))
    return digest.hexdigest()


class RunStore:
    """Directory-per-run persistence rooted at ``root``."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def run_dir(self, run_id: str) -> Path:
        if not run_id or "/" in run_id or run_id.startswith("."):
            raise ValueError(f"invalid run id {run_id!r}")
        return self.root / run_id

    def list_runs(self) -> list[str]:
        return sorted(
            p.name for p in self.root.iterdir() if p.is_dir() and (p / MANIFEST_NAME).exists()
        )

    def manifest(self, run_id: str) -> RunManifest:
        run_dir = self.run_dir(run_id)
        if not (run_dir / MANIFEST_NAME).exists():
            raise KeyError(f"unknown run {run_id!r}")
        return RunManifest.load(run_dir)

    def delete_run(self, run_id: str) -> None:
        shutil.rmtree(self.run_dir(run_id))


ARTIFACTS = {
    "ingest": ["corpus.jsonl"],
    "preprocess": ["documents.jsonl"],
    "embed": ["embeddings.f32", "embeddings.json"],
    "reduce": ["reduced.f32", "reduced.json"],
    "cluster": ["assignments.jsonl"],
    "topics": ["topics.json"],
    "trends": ["trends.json"],
}


def _write_jsonl(path: Path, records: list[dict]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")


def _read_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def _comment_to_record(comment: corpus.RawComment) -> dict:
    return {
        "id": comment.id,
        "text": comment.text,
        "created_at": comment.created_at.isoformat(),
        "author": comment.author,
        "lang": comment.lang,
    }


def _comment_from_record(record: dict) -> corpus.RawComment:
    return corpus.RawComment(
        id=record["id"],
        text=record["text"],
        created_at=corpus.parse_timestamp(record["created_at"]),
        author=record.get("author", ""),
        lang=record.get("lang"),
    )


def load_corpus(run_dir: Path) -> list[corpus.RawComment]:
    return [_comment_from_record(r) for r in _read_jsonl(run_dir / "corpus.jsonl")]


def load_documents(run_dir: Path) -> list[corpus.CleanDocument]:
    return [corpus.document_from_record(r) for r in _read_jsonl(run_dir / "documents.jsonl")]


def run_pipeline(
    corpus_path: str | Path,
    config: PipelineConfig,
    store: RunStore,
    run_id: str,
    until: str = "trends",
) -> RunManifest:
    """Execute pipeline stages up to ``until`` (inclusive), resuming from
    persisted artifacts when inputs and configs are unchanged."""
    if until not in STAGES:
        raise ValueError(f"unknown stage {until!r}; expected one of {STAGES}")
    corpus_path = Path(corpus_path)
    if not corpus_path.exists():
        raise corpus.IngestError(f"corpus file not found: {corpus_path}")
    corpus_hash = sha256_file(corpus_path)

    run_dir = store.run_dir(run_id)
    run_dir.mkdir(parents=True, exist_ok=True)

    manifest: RunManifest
    if (run_dir / MANIFEST_NAME).exists():
        manifest = RunManifest.load(run_dir)
        if manifest.corpus_hash != corpus_hash or manifest.config != config.to_dict():
            # Inputs changed: every stage is stale.
            manifest.corpus_hash = corpus_hash
            manifest.corpus_path = str(corpus_path)
            manifest.config = config.to_dict()
            manifest.seeds = config.seeds()
            manifest.stages = {}
    else:
        manifest = RunManifest(
            run_id=run_id,
            created_at=datetime.now(timezone.utc).isoformat(),
            corpus_path=str(corpus_path),
            corpus_hash=corpus_hash,
            config=config.to_dict(),
            seeds=config.seeds(),
        )

    stage_configs = {
        "ingest": {"languages": config.to_dict()["languages"]},
        "preprocess": {"handles": list(config.handles)},
        "embed": asdict(config.embedding),
        "reduce": asdict(config.reduction),
        "cluster": asdict(config.clustering),
        "topics": {},
        "trends": asdict(config.trends),
    }

    runners: dict[str, Callable[[Path, dict], dict]] = {
        "ingest": _stage_ingest,
        "preprocess": _stage_preprocess,
        "embed": _stage_embed,
        "reduce": _stage_reduce,
        "cluster": _stage_cluster,
        "topics": _stage_topics,
        "trends": _stage_trends,
    }

    context = {"config": config, "corpus_path": corpus_path}
    upstream_hash = corpus_hash
    rerun_downstream = False
    for stage in STAGES:
        config_hash = sha256_text(_canonical(stage_configs[stage]))
        input_hash = sha256_text(upstream_hash + ":" + config_hash)
        existing = manifest.stages.get(stage)
        fresh = (
            existing is not None
            and existing.status == "completed"
            and existing.input_hash == input_hash
            and existing.artifact_hash == _hash_files(run_dir, existing.artifact_files)
            and not rerun_downstream
        )
        if fresh:
            upstream_hash = existing.artifact_hash
            if STAGES.index(stage) >= STAGES.index(until):
                break
            continue

        rerun_downstream = True
        record = StageRecord(
            name=stage,
            status="failed",
            artifact_files=list(ARTIFACTS[stage]),
            input_hash=input_hash,
            config_hash=config_hash,
            started_at=datetime.now(timezone.utc).isoformat(),
        )
        try:
            meta = runners[stage](run_dir, context)
        except Exception as exc:
            record.error = f"{type(exc).__name__}: {exc}"
            record.finished_at = datetime.now(timezone.utc).isoformat()
            manifest.stages[stage] = record
            manifest.save(run_dir)
            raise StageFailure(stage, exc) from exc
        record.status = "completed"
        record.meta = meta
        record.artifact_hash = _hash_files(run_dir, record.artifact_files)
        record.finished_at = datetime.now(timezone.utc).isoformat()
        manifest.stages[stage] = record
        # Stages downstream of a rerun stage are stale; drop their records.
        for later in STAGES[STAGES.index(stage) + 1 :]:
            manifest.stages.pop(later, None)
        manifest.save(run_dir)
        upstream_hash = record.artifact_hash
        if STAGES.index(stage) >= STAGES.index(until):
            break

    manifest.save(run_dir)
    return manifest


def _stage_ingest(run_dir: Path, context: dict) -> dict:
    config: PipelineConfig = context["config"]
    languages = frozenset(config.languages) if config.languages is not None else None
    result = corpus.ingest(context["corpus_path"], corpus.IngestConfig(languages=languages))
    _write_jsonl(run_dir / "corpus.jsonl", [_comment_to_record(c) for c in result.comments])
    return {
        "accepted": len(result.comments),
        "total_lines": result.total_lines,
        "skipped_invalid": result.skipped_invalid,
        "skipped_duplicates": result.skipped_duplicates,
        "skipped_language": result.skipped_language,
    }


def _stage_preprocess(run_dir: Path, context: dict) -> dict:
    config: PipelineConfig = context["config"]
    comments = load_corpus(run_dir)
    documents = corpus.preprocess_corpus(comments, config.handles)
    _write_jsonl(run_dir / "documents.jsonl", [corpus.document_to_record(d) for d in documents])
    excluded = sum(d.excluded for d in documents)
    return {"documents": len(documents), "excluded": excluded}


def _stage_embed(run_dir: Path, context: dict) -> dict:
    config: PipelineConfig = context["config"]
    documents = [d for d in load_documents(run_dir) if not d.excluded]
    backend = make_backend(config.embedding)
    matrix = embedding.embed_documents(documents, backend, config.embedding)
    matrix.save(run_dir / "embeddings")
    return {"rows": len(matrix.ids), "dimension": matrix.dimension}


def _stage_reduce(run_dir: Path, context: dict) -> dict:
    config: PipelineConfig = context["config"]
    matrix = EmbeddingMatrix.load(run_dir / "embeddings")
    reduced = clustering.reduce(matrix, config.reduction)
    reduced.save(run_dir / "reduced")
    return {"rows": len(reduced.ids), "dimension": reduced.dimension, "method": reduced.provenance["method"]}


def _stage_cluster(run_dir: Path, context: dict) -> dict:
    config: PipelineConfig = context["config"]
    reduced = EmbeddingMatrix.load(run_dir / "reduced")
    assignments = clustering.cluster(reduced, config.clustering)
    clustering.save_assignments(assignments, run_dir / "assignments.jsonl")
    labels = {a.label for a in assignments if a.label != clustering.NOISE_LABEL}
    noise = sum(a.label == clustering.NOISE_LABEL for a in assignments)
    return {"clusters": len(labels), "noise": noise}


def _stage_topics(run_dir: Path, context: dict) -> dict:
    assignments = clustering.load_assignments(run_dir / "assignments.jsonl")
    topic_list = topics_mod.build_topics(assignments)
    topics_mod.save_topics(topic_list, run_dir / "topics.json")
    return {"topics": len(topic_list)}


def _stage_trends(run_dir: Path, context: dict) -> dict:
    config: PipelineConfig = context["config"]
    topic_list = topics_mod.load_topics(run_dir / "topics.json")
    timestamps = {c.id: c.created_at for c in load_corpus(run_dir)}
    series = topics_mod.compute_trends(
        topic_list,
        timestamps,
        window=config.trends.window,
        horizon=config.trends.horizon,
        threshold=config.trends.threshold,
    )
    topics_mod.save_trends(series, run_dir / "trends.json")
    directions = {d: sum(s.direction == d for s in series) for d in ("rising", "falling", "flat")}
    return {"series": len(series), **directions}
