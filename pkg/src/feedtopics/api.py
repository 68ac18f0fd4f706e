"""HTTP/JSON API over persisted runs.

Every response is derived from the artifacts in the run directory; the
only mutable state is the append-only annotation log and the topic
name/theme sidecar with its audit trail. Annotator-facing task payloads
are sanitized views that never include truth fields.
"""

from __future__ import annotations

import hashlib
import json
import random
import threading
from importlib import resources
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel, Field

from . import clustering, evaluation, topics as topics_mod
from .clustering import NOISE_LABEL
from .embedding import EmbeddingMatrix
from .pipeline import RunStore, load_corpus, load_documents
from .topics import SilhouetteUndefinedError

EVAL_DIR = "eval"
TASK_FILES = {
    evaluation.KIND_INTRUDER: "tasks-intruder.jsonl",
    evaluation.KIND_ASSIGNMENT: "tasks-assignment.jsonl",
    evaluation.KIND_EXPERT: "tasks-expert.jsonl",
}
ANNOTATIONS_FILE = "annotations.jsonl"
ADJUDICATIONS_FILE = "adjudications.jsonl"
TOPIC_META_FILE = "topic_meta.json"
AUDIT_FILE = "audit.jsonl"


class AnnotationIn(BaseModel):
    task_id: str
    annotator_id: str = Field(min_length=1)
    kind: str
    chosen: str | None = None
    assignments: dict[str, int] | None = None
    answers: dict[str, str | int | None] | None = None


class NameIn(BaseModel):
    name: str = Field(min_length=1, max_length=200)


class ThemeIn(BaseModel):
    theme: str = Field(min_length=1, max_length=200)


class AssignIn(BaseModel):
    text: str = Field(min_length=1, max_length=10_000)


def starter_vocabulary() -> list[str]:
    text = resources.files("feedtopics").joinpath("data/themes.txt").read_text(encoding="utf-8")
    return [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]


def _append_jsonl(path: Path, record: dict) -> None:
    with path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True))
        fh.write("\n")


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


class RunData:
    """Lazy accessors over one run directory."""

    def __init__(self, store: RunStore, run_id: str):
        self.store = store
        self.run_id = run_id
        try:
            self.manifest = store.manifest(run_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id!r}")
        self.run_dir = store.run_dir(run_id)

    def _require(self, stage: str) -> None:
        record = self.manifest.stages.get(stage)
        if record is None or record.status != "completed":
            raise HTTPException(status_code=409, detail=f"run {self.run_id} has not completed stage {stage!r}")

    def texts(self) -> dict[str, str]:
        self._require("preprocess")
        return {d.id: d.display_text() for d in load_documents(self.run_dir) if not d.excluded}

    def topics(self) -> list[topics_mod.Topic]:
        self._require("topics")
        topic_list = topics_mod.load_topics(self.run_dir / "topics.json")
        meta = self.topic_meta()
        for topic in topic_list:
            entry = meta.get(str(topic.topic_id), {})
            topic.name = entry.get("name")
            topic.theme = entry.get("theme")
        return topic_list

    def assignments(self) -> list[clustering.ClusterAssignment]:
        self._require("cluster")
        return clustering.load_assignments(self.run_dir / "assignments.jsonl")

    def topic_meta(self) -> dict:
        path = self.run_dir / TOPIC_META_FILE
        if not path.exists():
            return {}
        return json.loads(path.read_text(encoding="utf-8"))

    def save_topic_meta(self, meta: dict) -> None:
        (self.run_dir / TOPIC_META_FILE).write_text(json.dumps(meta, sort_keys=True, indent=2), encoding="utf-8")

    def eval_dir(self) -> Path:
        path = self.run_dir / EVAL_DIR
        path.mkdir(exist_ok=True)
        return path

    def tasks(self, kind: str | None = None) -> list:
        kinds = [kind] if kind else list(TASK_FILES)
        found = []
        for k in kinds:
            if k not in TASK_FILES:
                raise HTTPException(status_code=404, detail=f"unknown task kind {k!r}")
            path = self.eval_dir() / TASK_FILES[k]
            if path.exists():
                found.extend(evaluation.load_tasks(path))
        return found

    def annotations(self) -> list[dict]:
        return _read_jsonl(self.eval_dir() / ANNOTATIONS_FILE)


class _ApproximateAssigner:
    """Nearest-topic-exemplar matching for documents that arrive after a
    run. Each topic's cutoff is the largest member-to-own-exemplar
    distance observed in the run; a new document farther than that from
    every exemplar is reported as noise."""

    def __init__(self, data: RunData):
        import numpy as np

        from . import corpus as corpus_mod
        from .embedding import embed_documents, make_backend
        from .pipeline import PipelineConfig

        self._np = np
        self._corpus = corpus_mod
        self._embed_documents = embed_documents
        config = PipelineConfig.from_dict(data.manifest.config)
        self._config = config
        self._backend = make_backend(config.embedding)

        embeddings = EmbeddingMatrix.load(data.run_dir / "embeddings")
        # Refitting with the recorded seed reproduces the persisted reduced
        # space; the fitted transform then maps fresh rows into it.
        reduced, self._reducer = clustering.fit_reduce(embeddings, config.reduction)
        row_index = {doc_id: i for i, doc_id in enumerate(reduced.ids)}
        self._exemplars = {}
        self._cutoffs = {}
        for topic in data.topics():
            exemplar_row = reduced.vectors[row_index[topic.representative_id]]
            self._exemplars[topic.topic_id] = exemplar_row
            self._cutoffs[topic.topic_id] = max(
                float(np.linalg.norm(reduced.vectors[row_index[doc_id]] - exemplar_row))
                for doc_id in topic.member_ids
            )

    def assign(self, text: str) -> dict:
        comment = self._corpus.RawComment(
            id="new-doc", text=text, created_at=self._corpus.parse_timestamp("1970-01-01T00:00:00Z")
        )
        doc = self._corpus.preprocess(comment, self._config.handles)
        if doc.excluded:
            return {"topic_id": None, "distance": None, "reason": "empty after cleaning"}
        matrix = self._embed_documents([doc], self._backend, self._config.embedding)
        np = self._np
        projected = self._reducer.transform(matrix.vectors)[0]
        best_topic, best_distance = None, None
        for topic_id, exemplar in self._exemplars.items():
            d = float(np.linalg.norm(projected - exemplar))
            if d <= self._cutoffs[topic_id] and (best_distance is None or d < best_distance):
                best_topic, best_distance = topic_id, d
        if best_topic is None:
            nearest = min(
                (float(np.linalg.norm(projected - e)) for e in self._exemplars.values()), default=None
            )
            return {"topic_id": None, "distance": nearest, "reason": "beyond distance cutoff"}
        return {"topic_id": best_topic, "distance": best_distance, "reason": None}


def create_app(store: RunStore, frontend_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="feedtopics", version="0.1.0")
    write_lock = threading.Lock()

    @app.get("/api/health")
    def health() -> dict:
        return {"status": "ok", "runs": len(store.list_runs())}

    @app.get("/api/runs")
    def list_runs() -> list[dict]:
        out = []
        for run_id in store.list_runs():
            manifest = store.manifest(run_id)
            out.append(
                {
                    "run_id": run_id,
                    "created_at": manifest.created_at,
                    "stages_completed": [
                        name for name, record in manifest.stages.items() if record.status == "completed"
                    ],
                    "fingerprint": manifest.content_fingerprint(),
                }
            )
        return out

    @app.get("/api/runs/{run_id}")
    def get_run(run_id: str) -> dict:
        return RunData(store, run_id).manifest.to_dict()

    @app.get("/api/runs/{run_id}/stats")
    def get_stats(run_id: str) -> dict:
        data = RunData(store, run_id)
        topic_list = data.topics()
        corpus_size = len(load_corpus(data.run_dir))
        stats = topics_mod.corpus_stats(topic_list, corpus_size)
        return {
            "n_topics": stats.n_topics,
            "coverage": stats.coverage,
            "mean_size": stats.mean_size,
            "sd_size": stats.sd_size,
            "total_assigned": stats.total_assigned,
            "corpus_size": stats.corpus_size,
        }

    def _topic_payload(data: RunData, topic: topics_mod.Topic, texts: dict[str, str], samples: int) -> dict:
        sample_ids = topic.member_ids[:samples]
        return {
            "topic_id": topic.topic_id,
            "size": topic.size,
            "name": topic.name,
            "theme": topic.theme,
            "representative_id": topic.representative_id,
            "representative_text": texts.get(topic.representative_id, ""),
            "sample_docs": [{"doc_id": d, "text": texts.get(d, "")} for d in sample_ids],
        }

    @app.get("/api/runs/{run_id}/topics")
    def get_topics(run_id: str, samples: int = Query(default=3, ge=0, le=25)) -> list[dict]:
        data = RunData(store, run_id)
        texts = data.texts()
        return [_topic_payload(data, t, texts, samples) for t in data.topics()]

    @app.get("/api/runs/{run_id}/topics/{topic_id}")
    def get_topic(run_id: str, topic_id: int, samples: int = Query(default=10, ge=0, le=100)) -> dict:
        data = RunData(store, run_id)
        texts = data.texts()
        for topic in data.topics():
            if topic.topic_id == topic_id:
                payload = _topic_payload(data, topic, texts, samples)
                payload["member_ids"] = topic.member_ids
                return payload
        raise HTTPException(status_code=404, detail=f"unknown topic {topic_id}")

    def _mutate_topic(run_id: str, topic_id: int, field_name: str, value: str) -> dict:
        data = RunData(store, run_id)
        if all(t.topic_id != topic_id for t in data.topics()):
            raise HTTPException(status_code=404, detail=f"unknown topic {topic_id}")
        with write_lock:
            meta = data.topic_meta()
            entry = meta.setdefault(str(topic_id), {})
            previous = entry.get(field_name)
            entry[field_name] = value
            data.save_topic_meta(meta)
            _append_jsonl(
                data.run_dir / AUDIT_FILE,
                {"topic_id": topic_id, "field": field_name, "value": value, "previous": previous},
            )
        return {"topic_id": topic_id, field_name: value}

    @app.put("/api/runs/{run_id}/topics/{topic_id}/name")
    def set_name(run_id: str, topic_id: int, body: NameIn) -> dict:
        return _mutate_topic(run_id, topic_id, "name", body.name)

    @app.put("/api/runs/{run_id}/topics/{topic_id}/theme")
    def set_theme(run_id: str, topic_id: int, body: ThemeIn) -> dict:
        return _mutate_topic(run_id, topic_id, "theme", body.theme)

    @app.get("/api/themes/vocabulary")
    def vocabulary() -> dict:
        return {"themes": starter_vocabulary()}

    @app.get("/api/runs/{run_id}/projection")
    def get_projection(run_id: str) -> dict:
        data = RunData(store, run_id)
        data._require("embed")
        cache = data.run_dir / "projection_2d"
        if not (cache.with_suffix(".f32").exists() and cache.with_suffix(".json").exists()):
            matrix = EmbeddingMatrix.load(data.run_dir / "embeddings")
            seed = data.manifest.seeds.get("projection", 0)
            projected = clustering.project_2d(matrix, seed=seed)
            projected.save(cache)
        projected = EmbeddingMatrix.load(cache)
        labels = {a.doc_id: a.label for a in data.assignments()}
        points = [
            {
                "doc_id": doc_id,
                "x": float(projected.vectors[i, 0]),
                "y": float(projected.vectors[i, 1]),
                "label": labels.get(doc_id, NOISE_LABEL),
            }
            for i, doc_id in enumerate(projected.ids)
        ]
        return {"points": points}

    @app.get("/api/runs/{run_id}/trends")
    def get_trends(run_id: str) -> dict:
        data = RunData(store, run_id)
        data._require("trends")
        series = topics_mod.load_trends(data.run_dir / "trends.json")
        names = {t.topic_id: t.name for t in data.topics()}
        texts = data.texts()
        representatives = {
            t.topic_id: texts.get(t.representative_id, "") for t in data.topics()
        }
        panels: dict[str, list[dict]] = {"rising": [], "falling": [], "flat": []}
        for s in sorted(series, key=lambda s: -abs(s.slope)):
            record = topics_mod.trend_to_record(s)
            record["name"] = names.get(s.topic_id)
            record["representative_text"] = representatives.get(s.topic_id, "")
            panels[s.direction].append(record)
        return panels

    @app.get("/api/runs/{run_id}/silhouette")
    def get_silhouette(run_id: str, space: str = Query(default="reduced")) -> dict:
        if space not in ("embedding", "reduced"):
            raise HTTPException(status_code=422, detail="space must be 'embedding' or 'reduced'")
        data = RunData(store, run_id)
        prefix = "embeddings" if space == "embedding" else "reduced"
        data._require("embed" if space == "embedding" else "reduce")
        matrix = EmbeddingMatrix.load(data.run_dir / prefix)
        labels_by_id = {a.doc_id: a.label for a in data.assignments()}
        labels = [labels_by_id.get(doc_id, NOISE_LABEL) for doc_id in matrix.ids]
        try:
            report = topics_mod.silhouette(matrix.vectors, labels, space=space)
        except SilhouetteUndefinedError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {
            "coefficient": report.coefficient,
            "n_points_scored": report.n_points_scored,
            "n_noise_excluded": report.n_noise_excluded,
            "space": report.space,
        }

    # Between-run assignment of fresh documents is approximate by design:
    # the clusterer is batch, so a new text is embedded with the run's
    # config, projected by a reducer refit deterministically from the
    # persisted embeddings, and matched to the nearest topic exemplar.
    assigners: dict[str, "_ApproximateAssigner"] = {}

    @app.post("/api/runs/{run_id}/assign")
    def assign_new_document(run_id: str, body: AssignIn) -> dict:
        data = RunData(store, run_id)
        data._require("topics")
        key = f"{run_id}:{data.manifest.content_fingerprint()}"
        if key not in assigners:
            assigners.clear()
            assigners[key] = _ApproximateAssigner(data)
        result = assigners[key].assign(body.text)
        result["approximate"] = True
        return result

    # --- annotation workflow ------------------------------------------

    def _task_order(data: RunData, annotator_id: str, kind: str | None) -> list[str]:
        tasks = data.tasks(kind)
        task_ids = [t.task_id for t in tasks]
        safe = hashlib.sha256(annotator_id.encode("utf-8")).hexdigest()[:16]
        order_path = data.eval_dir() / f"order-{safe}.json"
        recorded: dict[str, list[str]] = {}
        if order_path.exists():
            recorded = json.loads(order_path.read_text(encoding="utf-8"))
        key = kind or "all"
        if key not in recorded or set(recorded[key]) != set(task_ids):
            rng = random.Random(int(hashlib.sha256(f"{annotator_id}:{key}".encode()).hexdigest(), 16) % (2**32))
            shuffled = list(task_ids)
            rng.shuffle(shuffled)
            recorded[key] = shuffled
            order_path.write_text(
                json.dumps({"annotator_id": annotator_id, **recorded}, sort_keys=True), encoding="utf-8"
            )
        return recorded[key]

    @app.get("/api/runs/{run_id}/eval/tasks/next")
    def next_task(run_id: str, annotator_id: str, kind: str | None = None) -> dict:
        data = RunData(store, run_id)
        tasks = {t.task_id: t for t in data.tasks(kind)}
        done = {
            a["task_id"]
            for a in data.annotations()
            if a["annotator_id"] == annotator_id and a["task_id"] in tasks
        }
        pending = [tid for tid in _task_order(data, annotator_id, kind) if tid not in done]
        payload = tasks[pending[0]].annotator_view() if pending else None
        return {
            "task": payload,
            "remaining": len(pending),
            "done": len(done),
            "total": len(tasks),
        }

    def _validate_annotation(task, body: AnnotationIn) -> dict:
        problems: list[str] = []
        record: dict = {"task_id": body.task_id, "annotator_id": body.annotator_id, "kind": body.kind}
        if isinstance(task, evaluation.IntruderTask):
            if body.kind != evaluation.KIND_INTRUDER:
                problems.append(f"kind: task {body.task_id} is an intruder task")
            item_ids = {i.doc_id for i in task.items}
            if not body.chosen:
                problems.append("chosen: required for intruder tasks")
            elif body.chosen not in item_ids:
                problems.append(f"chosen: {body.chosen!r} is not one of the task's items")
            record["choices"] = {"chosen": body.chosen}
        elif isinstance(task, evaluation.AssignmentTask):
            if body.kind != evaluation.KIND_ASSIGNMENT:
                problems.append(f"kind: task {body.task_id} is an assignment task")
            expected = {q.doc_id for q in task.queries}
            got = body.assignments or {}
            if set(got) != expected:
                problems.append("assignments: must answer every query document exactly once")
            allowed = {task.topic_a, task.topic_b}
            for doc_id, topic_id in got.items():
                if topic_id not in allowed:
                    problems.append(f"assignments.{doc_id}: topic {topic_id} is not offered by this task")
            record["choices"] = dict(got)
        else:
            if body.kind != evaluation.KIND_EXPERT:
                problems.append(f"kind: task {body.task_id} is an expert label form")
            answers = body.answers or {}
            extra = set(answers) - set(evaluation.EXPERT_ATTRIBUTES)
            missing = set(evaluation.EXPERT_ATTRIBUTES) - set(answers)
            if extra:
                problems.append(f"answers: unknown attributes {sorted(extra)}")
            if missing:
                problems.append(f"answers: missing attributes {sorted(missing)} (use null for not-applicable)")
            emotion = answers.get("emotion")
            if emotion is not None and emotion not in evaluation.EMOTION_SCALE:
                problems.append(f"answers.emotion: must be an integer 1..5 or null, got {emotion!r}")
            for attr in ("trigger", "entity", "concern", "consequence"):
                value = answers.get(attr)
                if value is not None and not isinstance(value, str):
                    problems.append(f"answers.{attr}: must be a string or null")
            record["answers"] = {attr: answers.get(attr) for attr in evaluation.EXPERT_ATTRIBUTES}
        if problems:
            raise HTTPException(status_code=422, detail=problems)
        return record

    @app.post("/api/runs/{run_id}/eval/annotations", status_code=201)
    def submit_annotation(run_id: str, body: AnnotationIn) -> dict:
        data = RunData(store, run_id)
        tasks = {t.task_id: t for t in data.tasks()}
        task = tasks.get(body.task_id)
        if task is None:
            raise HTTPException(status_code=404, detail=f"unknown task {body.task_id!r}")
        record = _validate_annotation(task, body)
        with write_lock:
            for existing in data.annotations():
                if existing["task_id"] == body.task_id and existing["annotator_id"] == body.annotator_id:
                    raise HTTPException(
                        status_code=409,
                        detail=f"annotator {body.annotator_id!r} already annotated task {body.task_id!r}",
                    )
            _append_jsonl(data.eval_dir() / ANNOTATIONS_FILE, record)
        return {"accepted": True, "task_id": body.task_id, "annotator_id": body.annotator_id}

    @app.get("/api/runs/{run_id}/eval/annotations")
    def list_annotations(run_id: str, kind: str | None = None, task_id: str | None = None) -> list[dict]:
        data = RunData(store, run_id)
        records = data.annotations()
        if kind is not None:
            records = [r for r in records if r["kind"] == kind]
        if task_id is not None:
            records = [r for r in records if r["task_id"] == task_id]
        return records

    @app.get("/api/runs/{run_id}/eval/reports/{kind}")
    def get_report(run_id: str, kind: str) -> dict:
        data = RunData(store, run_id)
        if kind not in TASK_FILES:
            raise HTTPException(status_code=404, detail=f"unknown task kind {kind!r}")
        tasks = data.tasks(kind)
        if not tasks:
            raise HTTPException(status_code=404, detail=f"no {kind} tasks sampled for run {run_id}")
        raw = [a for a in data.annotations() if a["kind"] == kind]
        if kind == evaluation.KIND_EXPERT:
            annotations = [evaluation.annotation_from_record(a) for a in raw]
            adjudications = [
                evaluation.adjudication_from_record(r)
                for r in _read_jsonl(data.eval_dir() / ADJUDICATIONS_FILE)
            ]
            report = evaluation.score_expert_labels(tasks, annotations, adjudications)
        else:
            annotations = [evaluation.annotation_from_record(a) for a in raw]
            report = evaluation.score_choice_tasks(tasks, annotations)
        return report.to_dict()

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="console")

    return app
