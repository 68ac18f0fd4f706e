"""Command-line interface.

Stage commands (ingest, embed, reduce, cluster, topics, trends) run the
pipeline up to that stage, resuming from persisted artifacts. eval-sample
and eval-score drive the annotation workflow, report summarizes a run,
and serve starts the HTTP API.

Exit codes: 0 success, 1 usage error, 2 data error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import evaluation, topics as topics_mod
from .api import ADJUDICATIONS_FILE, ANNOTATIONS_FILE, TASK_FILES, create_app
from .corpus import IngestError
from .embedding import EmbeddingMatrix
from .pipeline import PipelineConfig, RunStore, StageFailure, run_pipeline
from .topics import SilhouetteUndefinedError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_STAGE = 3

STAGE_COMMANDS = ("ingest", "embed", "reduce", "cluster", "topics", "trends")
EVAL_KINDS = {"intruder": "intruder", "assign": "assignment", "expert": "expert"}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--store", default=os.environ.get("FEEDTOPICS_STORE", "runs"), help="run store root")
    parser.add_argument("--run-id", default="default", help="run identifier")
    parser.add_argument("--config", help="pipeline config JSON file")
    parser.add_argument("--seed", type=int, help="override embedding/reduction seeds")
    parser.add_argument("--json", action="store_true", help="machine-readable output")


def build_parser() -> Parser:
    parser = Parser(prog="feedtopics", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    for stage in STAGE_COMMANDS:
        p = sub.add_parser(stage, help=f"run the pipeline up to the {stage} stage")
        p.add_argument("--source", help="line-delimited JSON comment file (defaults to the run's recorded source)")
        _add_common(p)

    p = sub.add_parser("eval-sample", help="sample annotation tasks from a finished run")
    p.add_argument("kind", choices=sorted(EVAL_KINDS))
    p.add_argument("--n", type=int, default=10, help="number of tasks/forms")
    _add_common(p)

    p = sub.add_parser("eval-score", help="score peer agreement for sampled tasks")
    p.add_argument("--kind", choices=sorted(EVAL_KINDS), required=True)
    p.add_argument("--table", action="store_true", help="print the rendered agreement table")
    _add_common(p)

    p = sub.add_parser("report", help="stats, silhouette, and trend summary for a run")
    p.add_argument("--space", choices=("embedding", "reduced"), default="reduced")
    _add_common(p)

    p = sub.add_parser("serve", help="start the HTTP/JSON API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--frontend", help="directory with built console assets to serve at /")
    _add_common(p)

    return parser


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {args.config}: {exc}") from exc
        config = PipelineConfig.from_dict(data)
    else:
        config = PipelineConfig()
    if args.seed is not None:
        config = dataclasses.replace(
            config,
            embedding=dataclasses.replace(config.embedding, seed=args.seed),
            reduction=dataclasses.replace(config.reduction, seed=args.seed),
            projection_seed=args.seed,
        )
    return config


def _emit(args: argparse.Namespace, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True, default=str))
    else:
        print(text)


def _resolve_source(args: argparse.Namespace, store: RunStore) -> Path:
    if args.source:
        return Path(args.source)
    try:
        manifest = store.manifest(args.run_id)
    except KeyError:
        raise DataError(
            f"run {args.run_id!r} has no manifest yet; pass --source to start it"
        ) from None
    return Path(manifest.corpus_path)


def _cmd_stage(args: argparse.Namespace) -> int:
    store = RunStore(args.store)
    config = _load_config(args)
    source = _resolve_source(args, store)
    manifest = run_pipeline(source, config, store, args.run_id, until=args.command)
    record = manifest.stages[args.command]
    _emit(
        args,
        {"run_id": args.run_id, "stage": args.command, "meta": record.meta, "fingerprint": manifest.content_fingerprint()},
        f"run {args.run_id}: stage {args.command} completed {record.meta}",
    )
    return EXIT_OK


def _run_data(args: argparse.Namespace):
    store = RunStore(args.store)
    try:
        manifest = store.manifest(args.run_id)
    except KeyError:
        raise DataError(f"unknown run {args.run_id!r} in store {args.store}") from None
    return store, manifest


def _cmd_eval_sample(args: argparse.Namespace) -> int:
    store, manifest = _run_data(args)
    run_dir = store.run_dir(args.run_id)
    if "topics" not in manifest.stages or manifest.stages["topics"].status != "completed":
        raise DataError(f"run {args.run_id!r} has no topics artifact; run `feedtopics topics` first")
    topic_list = topics_mod.load_topics(run_dir / "topics.json")
    from .pipeline import load_documents

    texts = {d.id: d.display_text() for d in load_documents(run_dir) if not d.excluded}
    kind = EVAL_KINDS[args.kind]
    seed = args.seed if args.seed is not None else 0
    try:
        if kind == evaluation.KIND_INTRUDER:
            tasks = evaluation.sample_intruder_tasks(topic_list, texts, args.n, seed)
        elif kind == evaluation.KIND_ASSIGNMENT:
            tasks = evaluation.sample_assignment_tasks(topic_list, texts, args.n, seed)
        else:
            tasks = evaluation.sample_expert_forms(topic_list, texts, args.n, seed)
    except evaluation.SamplingError as exc:
        raise DataError(str(exc)) from exc
    eval_dir = run_dir / "eval"
    eval_dir.mkdir(exist_ok=True)
    path = evaluation.save_tasks(tasks, eval_dir / TASK_FILES[kind])
    _emit(
        args,
        {"kind": kind, "n": len(tasks), "path": str(path), "seed": seed},
        f"wrote {len(tasks)} {kind} tasks to {path}",
    )
    return EXIT_OK


def _cmd_eval_score(args: argparse.Namespace) -> int:
    store, _ = _run_data(args)
    run_dir = store.run_dir(args.run_id)
    kind = EVAL_KINDS[args.kind]
    tasks_path = run_dir / "eval" / TASK_FILES[kind]
    if not tasks_path.exists():
        raise DataError(f"no {kind} tasks sampled for run {args.run_id!r}")
    tasks = evaluation.load_tasks(tasks_path)
    annotations_path = run_dir / "eval" / ANNOTATIONS_FILE
    raw = []
    if annotations_path.exists():
        raw = [
            json.loads(line)
            for line in annotations_path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
    annotations = [evaluation.annotation_from_record(r) for r in raw if r["kind"] == kind]
    try:
        if kind == evaluation.KIND_EXPERT:
            adjudications_path = run_dir / "eval" / ADJUDICATIONS_FILE
            adjudications = []
            if adjudications_path.exists():
                adjudications = [
                    evaluation.adjudication_from_record(json.loads(line))
                    for line in adjudications_path.read_text(encoding="utf-8").splitlines()
                    if line.strip()
                ]
            report = evaluation.score_expert_labels(tasks, annotations, adjudications)
        else:
            report = evaluation.score_choice_tasks(tasks, annotations)
    except evaluation.ScoringError as exc:
        raise DataError(str(exc)) from exc
    if args.json:
        print(json.dumps(report.to_dict(), sort_keys=True))
    elif args.table:
        print(report.render_table())
    else:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    store, manifest = _run_data(args)
    run_dir = store.run_dir(args.run_id)
    from . import clustering
    from .pipeline import load_corpus

    if "topics" not in manifest.stages:
        raise DataError(f"run {args.run_id!r} has no topics artifact")
    topic_list = topics_mod.load_topics(run_dir / "topics.json")
    corpus_size = len(load_corpus(run_dir))
    stats = topics_mod.corpus_stats(topic_list, corpus_size)
    payload: dict = {
        "run_id": args.run_id,
        "stats": {
            "n_topics": stats.n_topics,
            "coverage": stats.coverage,
            "mean_size": stats.mean_size,
            "sd_size": stats.sd_size,
            "corpus_size": stats.corpus_size,
        },
    }
    prefix = "embeddings" if args.space == "embedding" else "reduced"
    matrix = EmbeddingMatrix.load(run_dir / prefix)
    assignments = clustering.load_assignments(run_dir / "assignments.jsonl")
    labels_by_id = {a.doc_id: a.label for a in assignments}
    labels = [labels_by_id.get(doc_id, -1) for doc_id in matrix.ids]
    try:
        silhouette = topics_mod.silhouette(matrix.vectors, labels, space=args.space)
        payload["silhouette"] = {
            "coefficient": silhouette.coefficient,
            "n_points_scored": silhouette.n_points_scored,
            "space": silhouette.space,
        }
    except SilhouetteUndefinedError as exc:
        payload["silhouette"] = {"error": str(exc)}
    trends_path = run_dir / "trends.json"
    if trends_path.exists():
        series = topics_mod.load_trends(trends_path)
        payload["trends"] = {
            d: sum(s.direction == d for s in series) for d in ("rising", "falling", "flat")
        }
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        stats_line = (
            f"run {args.run_id}: {stats.n_topics} topics, coverage {stats.coverage:.1%},"
            f" mean size {stats.mean_size:.1f} (sd {stats.sd_size:.1f})"
        )
        print(stats_line)
        if "coefficient" in payload["silhouette"]:
            print(
                f"silhouette ({args.space}): {payload['silhouette']['coefficient']:.4f}"
                f" over {payload['silhouette']['n_points_scored']} points"
            )
        if "trends" in payload:
            t = payload["trends"]
            print(f"trends: {t['rising']} rising / {t['falling']} falling / {t['flat']} flat")
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    store = RunStore(args.store)
    app = create_app(store, frontend_dir=args.frontend)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    if not args.command:
        print(parser.format_usage(), file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command in STAGE_COMMANDS:
            return _cmd_stage(args)
        if args.command == "eval-sample":
            return _cmd_eval_sample(args)
        if args.command == "eval-score":
            return _cmd_eval_score(args)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "serve":
            return _cmd_serve(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DataError, IngestError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    print(f"unknown command {args.command!r}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
