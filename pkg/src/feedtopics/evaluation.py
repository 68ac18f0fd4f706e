"""Annotation task sampling and peer-agreement scoring.

Three task types are generated from a topic model: intruder detection
(spot the one document drawn from a different topic among three),
document-to-topic assignment (route ten query documents to one of two
exemplified topics), and expert label forms (describe a topic's trigger,
entity, concern, emotion, and consequence from a ten-document sample).

Every task is peer-coded by exactly two annotators. Choice tasks score
automatically against the hidden truth; expert labels combine automatic
emotion equality with human adjudication verdicts for free text.
Annotator-facing payloads never contain truth fields.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Mapping, Sequence

from .topics import Topic

KIND_INTRUDER = "intruder"
KIND_ASSIGNMENT = "assignment"
KIND_EXPERT = "expert"

EXEMPLARS_PER_TOPIC = 10
QUERIES_PER_TASK = 10
DOCS_PER_FORM = 10
DEFAULT_SPLIT_RANGE = (1, 9)

EXPERT_ATTRIBUTES = ("trigger", "entity", "concern", "emotion", "consequence")
EMOTION_SCALE = (1, 2, 3, 4, 5)

ADJUDICATION_RULES = ("R1", "R2", "R3", "R4")

# Keys that must never appear in annotator-facing payloads.
TRUTH_FIELDS = frozenset({"truth_index", "truth_topic", "source_topics", "split", "base_topic", "intruder_topic"})


class SamplingError(ValueError):
    """A sampler precondition is violated; the message names it."""


class ScoringError(ValueError):
    """Annotation data cannot be scored as requested."""


@dataclass(frozen=True)
class TaskItem:
    doc_id: str
    text: str


@dataclass(frozen=True)
class IntruderTask:
    task_id: str
    items: tuple[TaskItem, TaskItem, TaskItem]
    truth_index: int
    base_topic: int
    intruder_topic: int

    def annotator_view(self) -> dict:
        return {
            "task_id": self.task_id,
            "kind": KIND_INTRUDER,
            "items": [{"doc_id": i.doc_id, "text": i.text} for i in self.items],
        }


@dataclass(frozen=True)
class QueryItem:
    doc_id: str
    text: str
    truth_topic: int


@dataclass(frozen=True)
class AssignmentTask:
    task_id: str
    topic_a: int
    topic_b: int
    exemplars: Mapping[int, tuple[TaskItem, ...]]
    queries: tuple[QueryItem, ...]
    split: tuple[int, int]

    def annotator_view(self) -> dict:
        return {
            "task_id": self.task_id,
            "kind": KIND_ASSIGNMENT,
            "topic_a": self.topic_a,
            "topic_b": self.topic_b,
            "exemplars": {
                str(topic): [{"doc_id": i.doc_id, "text": i.text} for i in items]
                for topic, items in self.exemplars.items()
            },
            "queries": [{"doc_id": q.doc_id, "text": q.text} for q in self.queries],
        }


@dataclass(frozen=True)
class ExpertLabelForm:
    task_id: str
    topic_id: int
    sample: tuple[TaskItem, ...]

    def annotator_view(self) -> dict:
        return {
            "task_id": self.task_id,
            "kind": KIND_EXPERT,
            "topic_id": self.topic_id,
            "sample": [{"doc_id": i.doc_id, "text": i.text} for i in self.sample],
            "attributes": list(EXPERT_ATTRIBUTES),
            "emotion_scale": list(EMOTION_SCALE),
        }


@dataclass(frozen=True)
class ChoiceAnnotation:
    """One annotator's response to an intruder or assignment task.

    ``choices`` maps the scored unit to the answer: for intruder tasks a
    single entry ``{"chosen": doc_id}``; for assignment tasks one entry
    per query ``{query_doc_id: chosen_topic_id}``.
    """

    task_id: str
    annotator_id: str
    kind: str
    choices: Mapping[str, object]


@dataclass(frozen=True)
class ExpertAnnotation:
    task_id: str
    annotator_id: str
    answers: Mapping[str, object]  # attribute -> str | int | None


@dataclass(frozen=True)
class Adjudication:
    """Human equivalence verdict for one free-text attribute pair.

    ``rule`` tags the written guidance clause applied (R1..R4). An
    ``override`` marks a one-sided null that the sample makes obviously an
    oversight; it scores as an agreement.
    """

    task_id: str
    attribute: str
    verdict: str  # "agree" | "disagree"
    rule: str | None = None
    override: bool = False
    note: str = ""


def _texts_for(topic: Topic, texts: Mapping[str, str]) -> None:
    missing = [d for d in topic.member_ids if d not in texts]
    if missing:
        raise SamplingError(f"missing document text for {missing[:3]} (topic {topic.topic_id})")


def sample_intruder_tasks(
    topics: Sequence[Topic],
    texts: Mapping[str, str],
    n_tasks: int,
    seed: int,
) -> list[IntruderTask]:
    """Two documents from one topic plus one intruder from another, in
    shuffled order. Base topics are drawn uniformly from those with at
    least two members."""
    if n_tasks < 1:
        raise SamplingError("n_tasks must be positive")
    if len(topics) < 2:
        raise SamplingError("intruder sampling needs at least 2 topics")
    bases = [t for t in topics if t.size >= 2]
    if not bases:
        raise SamplingError("intruder sampling needs a topic with at least 2 members")
    for topic in topics:
        _texts_for(topic, texts)

    rng = random.Random(seed)
    tasks = []
    for i in range(n_tasks):
        base = rng.choice(bases)
        others = [t for t in topics if t.topic_id != base.topic_id]
        intruder = rng.choice(others)
        base_docs = rng.sample(base.member_ids, 2)
        intruder_doc = rng.choice(intruder.member_ids)
        items = [TaskItem(d, texts[d]) for d in base_docs] + [TaskItem(intruder_doc, texts[intruder_doc])]
        order = [0, 1, 2]
        rng.shuffle(order)
        shuffled = tuple(items[j] for j in order)
        truth_index = order.index(2)
        tasks.append(
            IntruderTask(
                task_id=f"intruder-{i:05d}",
                items=shuffled,  # type: ignore[arg-type]
                truth_index=truth_index,
                base_topic=base.topic_id,
                intruder_topic=intruder.topic_id,
            )
        )
    return tasks


def _feasible_split(size_a: int, size_b: int, split_range: tuple[int, int]) -> tuple[int, int] | None:
    low = max(split_range[0], QUERIES_PER_TASK - (size_b - EXEMPLARS_PER_TOPIC))
    high = min(split_range[1], size_a - EXEMPLARS_PER_TOPIC)
    if low > high:
        return None
    return low, high


def sample_assignment_tasks(
    topics: Sequence[Topic],
    texts: Mapping[str, str],
    n_tasks: int,
    seed: int,
    split_range: tuple[int, int] = DEFAULT_SPLIT_RANGE,
) -> list[AssignmentTask]:
    """Pairs of topics with ten exemplars each and ten shuffled queries;
    the per-task split k is uniform over the feasible part of
    ``split_range``. Queries never overlap exemplars."""
    if n_tasks < 1:
        raise SamplingError("n_tasks must be positive")
    if not (1 <= split_range[0] <= split_range[1] <= QUERIES_PER_TASK - 1):
        raise SamplingError(f"split_range must lie within 1..{QUERIES_PER_TASK - 1}")
    eligible = [t for t in topics if t.size >= EXEMPLARS_PER_TOPIC + split_range[0]]
    pairs_exist = (
        len(eligible) >= 2
        and any(
            _feasible_split(a.size, b.size, split_range)
            for a in eligible
            for b in eligible
            if a.topic_id != b.topic_id
        )
    )
    if not pairs_exist:
        raise SamplingError(
            "assignment sampling needs two topics with at least "
            f"{EXEMPLARS_PER_TOPIC} exemplars plus their query share"
        )
    for topic in topics:
        _texts_for(topic, texts)

    rng = random.Random(seed)
    tasks = []
    attempts = 0
    while len(tasks) < n_tasks:
        attempts += 1
        if attempts > n_tasks * 100:
            raise SamplingError("could not find enough feasible topic pairs for assignment tasks")
        topic_a, topic_b = rng.sample(eligible, 2)
        feasible = _feasible_split(topic_a.size, topic_b.size, split_range)
        if feasible is None:
            continue
        k = rng.randint(*feasible)
        exemplars_a = rng.sample(topic_a.member_ids, EXEMPLARS_PER_TOPIC)
        exemplars_b = rng.sample(topic_b.member_ids, EXEMPLARS_PER_TOPIC)
        pool_a = [d for d in topic_a.member_ids if d not in set(exemplars_a)]
        pool_b = [d for d in topic_b.member_ids if d not in set(exemplars_b)]
        queries_a = rng.sample(pool_a, k)
        queries_b = rng.sample(pool_b, QUERIES_PER_TASK - k)
        queries = [QueryItem(d, texts[d], topic_a.topic_id) for d in queries_a] + [
            QueryItem(d, texts[d], topic_b.topic_id) for d in queries_b
        ]
        rng.shuffle(queries)
        tasks.append(
            AssignmentTask(
                task_id=f"assignment-{len(tasks):05d}",
                topic_a=topic_a.topic_id,
                topic_b=topic_b.topic_id,
                exemplars={
                    topic_a.topic_id: tuple(TaskItem(d, texts[d]) for d in exemplars_a),
                    topic_b.topic_id: tuple(TaskItem(d, texts[d]) for d in exemplars_b),
                },
                queries=tuple(queries),
                split=(k, QUERIES_PER_TASK - k),
            )
        )
    return tasks


def sample_expert_forms(
    topics: Sequence[Topic],
    texts: Mapping[str, str],
    n_forms: int,
    seed: int,
) -> list[ExpertLabelForm]:
    """Ten-document samples for ``n_forms`` distinct topics with at least
    ten members each."""
    if n_forms < 1:
        raise SamplingError("n_forms must be positive")
    eligible = [t for t in topics if t.size >= DOCS_PER_FORM]
    if len(eligible) < n_forms:
        raise SamplingError(
            f"expert sampling needs {n_forms} topics with >= {DOCS_PER_FORM} members; only {len(eligible)} qualify"
        )
    for topic in eligible:
        _texts_for(topic, texts)

    rng = random.Random(seed)
    chosen = rng.sample(eligible, n_forms)
    forms = []
    for i, topic in enumerate(chosen):
        sample = rng.sample(topic.member_ids, DOCS_PER_FORM)
        forms.append(
            ExpertLabelForm(
                task_id=f"expert-{i:05d}",
                topic_id=topic.topic_id,
                sample=tuple(TaskItem(d, texts[d]) for d in sample),
            )
        )
    return forms


def percent(numerator: int, denominator: int, places: str = "0.1") -> float:
    """Half-up decimal percentage used in rendered reports."""
    if denominator == 0:
        return 0.0
    value = Decimal(numerator) * 100 / Decimal(denominator)
    return float(value.quantize(Decimal(places), rounding=ROUND_HALF_UP))


@dataclass
class ChoiceAgreementReport:
    kind: str
    n_units: int
    both_correct: int
    one_correct: int
    both_incorrect: int
    incomplete: list[str] = field(default_factory=list)

    @property
    def rates(self) -> dict[str, float]:
        total = self.n_units or 1
        return {
            "both_correct": self.both_correct / total,
            "one_correct": self.one_correct / total,
            "both_incorrect": self.both_incorrect / total,
        }

    @property
    def percents(self) -> dict[str, float]:
        return {
            "both_correct": percent(self.both_correct, self.n_units),
            "one_correct": percent(self.one_correct, self.n_units),
            "both_incorrect": percent(self.both_incorrect, self.n_units),
        }

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_units": self.n_units,
            "counts": {
                "both_correct": self.both_correct,
                "one_correct": self.one_correct,
                "both_incorrect": self.both_incorrect,
            },
            "rates": self.rates,
            "percents": self.percents,
            "incomplete": self.incomplete,
        }

    def render_table(self) -> str:
        p = self.percents
        lines = [
            f"Peer-coding units      {self.n_units}",
            f"Both correct           {self.both_correct} ({p['both_correct']}%)",
            f"One correct            {self.one_correct} ({p['one_correct']}%)",
            f"Both incorrect         {self.both_incorrect} ({p['both_incorrect']}%)",
        ]
        if self.incomplete:
            lines.append(f"Incomplete (excluded)  {len(self.incomplete)}")
        return "\n".join(lines)


def score_choice_tasks(
    tasks: Sequence[IntruderTask] | Sequence[AssignmentTask],
    annotations: Sequence[ChoiceAnnotation],
) -> ChoiceAgreementReport:
    """Classify every scored unit as both/one/neither correct against the
    hidden truth. Tasks without exactly two annotator responses are flagged
    incomplete and excluded from the rates."""
    if not tasks:
        raise ScoringError("no tasks to score")
    kinds = {KIND_INTRUDER if isinstance(t, IntruderTask) else KIND_ASSIGNMENT for t in tasks}
    if len(kinds) != 1:
        raise ScoringError("tasks must all be of one kind")
    kind = kinds.pop()

    by_task: dict[str, list[ChoiceAnnotation]] = {}
    for a in annotations:
        if a.kind != kind:
            raise ScoringError(f"annotation kind {a.kind!r} does not match task kind {kind!r}")
        by_task.setdefault(a.task_id, []).append(a)

    both = one = neither = units = 0
    incomplete: list[str] = []
    for task in tasks:
        pair = by_task.get(task.task_id, [])
        if len(pair) != 2 or len({a.annotator_id for a in pair}) != 2:
            incomplete.append(task.task_id)
            continue
        if isinstance(task, IntruderTask):
            truth_doc = task.items[task.truth_index].doc_id
            corrects = [a.choices.get("chosen") == truth_doc for a in pair]
            n_correct = sum(corrects)
            units += 1
            both += n_correct == 2
            one += n_correct == 1
            neither += n_correct == 0
        else:
            for query in task.queries:
                corrects = [a.choices.get(query.doc_id) == query.truth_topic for a in pair]
                n_correct = sum(corrects)
                units += 1
                both += n_correct == 2
                one += n_correct == 1
                neither += n_correct == 0
    return ChoiceAgreementReport(
        kind=kind,
        n_units=units,
        both_correct=both,
        one_correct=one,
        both_incorrect=neither,
        incomplete=incomplete,
    )


@dataclass
class AttributeAgreement:
    attribute: str
    annotations: int
    non_null: int
    agreements: int  # non-null annotations whose pair scored 1

    @property
    def non_null_percent(self) -> float:
        return percent(self.non_null, self.annotations, places="1")

    @property
    def agreement_percent(self) -> float:
        return percent(self.agreements, self.non_null, places="1")


@dataclass
class ExpertAgreementReport:
    per_attribute: dict[str, AttributeAgreement]
    omitted_attributes: list[str]
    incomplete: list[str] = field(default_factory=list)

    @property
    def total_annotations(self) -> int:
        return sum(a.annotations for a in self.per_attribute.values())

    @property
    def total_non_null(self) -> int:
        return sum(a.non_null for a in self.per_attribute.values())

    @property
    def total_agreements(self) -> int:
        return sum(a.agreements for a in self.per_attribute.values())

    @property
    def overall_non_null_percent(self) -> float:
        return percent(self.total_non_null, self.total_annotations, places="1")

    @property
    def overall_agreement_percent(self) -> float:
        return percent(self.total_agreements, self.total_non_null, places="1")

    def to_dict(self) -> dict:
        return {
            "per_attribute": {
                name: {
                    "annotations": a.annotations,
                    "non_null": a.non_null,
                    "non_null_percent": a.non_null_percent,
                    "agreements": a.agreements,
                    "agreement_percent": a.agreement_percent,
                }
                for name, a in self.per_attribute.items()
            },
            "totals": {
                "annotations": self.total_annotations,
                "non_null": self.total_non_null,
                "non_null_percent": self.overall_non_null_percent,
                "agreements": self.total_agreements,
                "agreement_percent": self.overall_agreement_percent,
            },
            "omitted_attributes": self.omitted_attributes,
            "incomplete": self.incomplete,
        }

    def render_table(self) -> str:
        header = f"{'Attribute':<12}{'Annotations':>12}{'Non-null':>16}{'Agreement':>12}"
        lines = [header]
        for name, a in self.per_attribute.items():
            lines.append(
                f"{name:<12}{a.annotations:>12}"
                f"{a.non_null:>10} ({a.non_null_percent:.0f}%)"
                f"{a.agreement_percent:>10.0f}%"
            )
        lines.append(
            f"{'Total':<12}{self.total_annotations:>12}"
            f"{self.total_non_null:>10} ({self.overall_non_null_percent:.0f}%)"
            f"{self.overall_agreement_percent:>10.0f}%"
        )
        if self.omitted_attributes:
            lines.append(f"Omitted (never annotated): {', '.join(self.omitted_attributes)}")
        if self.incomplete:
            lines.append(f"Incomplete pairs excluded: {len(self.incomplete)}")
        return "\n".join(lines)


def _is_null(value: object) -> bool:
    return value is None or (isinstance(value, str) and not value.strip())


def score_expert_labels(
    forms: Sequence[ExpertLabelForm],
    annotations: Sequence[ExpertAnnotation],
    adjudications: Sequence[Adjudication] = (),
) -> ExpertAgreementReport:
    """Score per-attribute agreement over expert label forms.

    Emotion pairs compare by exact scale equality. Free-text pairs take the
    human adjudication verdict; a missing verdict marks the pair incomplete.
    One-sided nulls count as disagreement unless an override adjudication
    marks the null as an obvious oversight. Pairs where both annotators
    left the attribute null are excluded from the non-null accounting, and
    attributes never annotated at all are omitted from the report.
    """
    if not forms:
        raise ScoringError("no forms to score")
    by_form: dict[str, list[ExpertAnnotation]] = {}
    for a in annotations:
        by_form.setdefault(a.task_id, []).append(a)
    verdicts: dict[tuple[str, str], Adjudication] = {}
    for adj in adjudications:
        if adj.verdict not in ("agree", "disagree"):
            raise ScoringError(f"invalid verdict {adj.verdict!r} for {adj.task_id}/{adj.attribute}")
        verdicts[(adj.task_id, adj.attribute)] = adj

    counters = {attr: AttributeAgreement(attr, 0, 0, 0) for attr in EXPERT_ATTRIBUTES}
    incomplete: list[str] = []
    for form in forms:
        pair = by_form.get(form.task_id, [])
        if len(pair) != 2 or len({a.annotator_id for a in pair}) != 2:
            incomplete.append(form.task_id)
            continue
        first, second = pair
        for attr in EXPERT_ATTRIBUTES:
            value_a = first.answers.get(attr)
            value_b = second.answers.get(attr)
            if attr == "emotion":
                for v in (value_a, value_b):
                    if not _is_null(v) and v not in EMOTION_SCALE:
                        raise ScoringError(f"emotion must be in {EMOTION_SCALE}: got {v!r} in {form.task_id}")
            null_a, null_b = _is_null(value_a), _is_null(value_b)
            adj = verdicts.get((form.task_id, attr))
            if null_a and null_b:
                counters[attr].annotations += 2
                continue
            if null_a or null_b:
                agreed = bool(adj and adj.override and adj.verdict == "agree")
                counters[attr].annotations += 2
                counters[attr].non_null += 1
                counters[attr].agreements += 1 if agreed else 0
                continue
            # both non-null
            if attr == "emotion":
                agreed = value_a == value_b
            else:
                if adj is None:
                    incomplete.append(f"{form.task_id}:{attr}")
                    continue
                agreed = adj.verdict == "agree"
            counters[attr].annotations += 2
            counters[attr].non_null += 2
            counters[attr].agreements += 2 if agreed else 0

    omitted = [attr for attr, c in counters.items() if c.non_null == 0]
    per_attribute = {attr: c for attr, c in counters.items() if c.non_null > 0}
    return ExpertAgreementReport(
        per_attribute=per_attribute,
        omitted_attributes=omitted,
        incomplete=incomplete,
    )


# --- serialization -------------------------------------------------------

def task_to_record(task: IntruderTask | AssignmentTask | ExpertLabelForm) -> dict:
    if isinstance(task, IntruderTask):
        return {
            "kind": KIND_INTRUDER,
            "task_id": task.task_id,
            "items": [{"doc_id": i.doc_id, "text": i.text} for i in task.items],
            "truth_index": task.truth_index,
            "base_topic": task.base_topic,
            "intruder_topic": task.intruder_topic,
        }
    if isinstance(task, AssignmentTask):
        return {
            "kind": KIND_ASSIGNMENT,
            "task_id": task.task_id,
            "topic_a": task.topic_a,
            "topic_b": task.topic_b,
            "exemplars": {
                str(topic): [{"doc_id": i.doc_id, "text": i.text} for i in items]
                for topic, items in task.exemplars.items()
            },
            "queries": [
                {"doc_id": q.doc_id, "text": q.text, "truth_topic": q.truth_topic} for q in task.queries
            ],
            "split": list(task.split),
        }
    return {
        "kind": KIND_EXPERT,
        "task_id": task.task_id,
        "topic_id": task.topic_id,
        "sample": [{"doc_id": i.doc_id, "text": i.text} for i in task.sample],
    }


def task_from_record(record: dict) -> IntruderTask | AssignmentTask | ExpertLabelForm:
    kind = record["kind"]
    if kind == KIND_INTRUDER:
        return IntruderTask(
            task_id=record["task_id"],
            items=tuple(TaskItem(i["doc_id"], i["text"]) for i in record["items"]),  # type: ignore[arg-type]
            truth_index=int(record["truth_index"]),
            base_topic=int(record["base_topic"]),
            intruder_topic=int(record["intruder_topic"]),
        )
    if kind == KIND_ASSIGNMENT:
        return AssignmentTask(
            task_id=record["task_id"],
            topic_a=int(record["topic_a"]),
            topic_b=int(record["topic_b"]),
            exemplars={
                int(topic): tuple(TaskItem(i["doc_id"], i["text"]) for i in items)
                for topic, items in record["exemplars"].items()
            },
            queries=tuple(
                QueryItem(q["doc_id"], q["text"], int(q["truth_topic"])) for q in record["queries"]
            ),
            split=tuple(record["split"]),  # type: ignore[arg-type]
        )
    if kind == KIND_EXPERT:
        return ExpertLabelForm(
            task_id=record["task_id"],
            topic_id=int(record["topic_id"]),
            sample=tuple(TaskItem(i["doc_id"], i["text"]) for i in record["sample"]),
        )
    raise ValueError(f"unknown task kind {kind!r}")


def save_tasks(tasks: Sequence[IntruderTask | AssignmentTask | ExpertLabelForm], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for task in tasks:
            fh.write(json.dumps(task_to_record(task), sort_keys=True))
            fh.write("\n")
    return path


def load_tasks(path: str | Path) -> list[IntruderTask | AssignmentTask | ExpertLabelForm]:
    tasks = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            tasks.append(task_from_record(json.loads(line)))
    return tasks


def annotation_to_record(annotation: ChoiceAnnotation | ExpertAnnotation) -> dict:
    if isinstance(annotation, ChoiceAnnotation):
        return {
            "task_id": annotation.task_id,
            "annotator_id": annotation.annotator_id,
            "kind": annotation.kind,
            "choices": dict(annotation.choices),
        }
    return {
        "task_id": annotation.task_id,
        "annotator_id": annotation.annotator_id,
        "kind": KIND_EXPERT,
        "answers": dict(annotation.answers),
    }


def annotation_from_record(record: dict) -> ChoiceAnnotation | ExpertAnnotation:
    kind = record["kind"]
    if kind == KIND_EXPERT:
        return ExpertAnnotation(
            task_id=record["task_id"],
            annotator_id=record["annotator_id"],
            answers=dict(record["answers"]),
        )
    return ChoiceAnnotation(
        task_id=record["task_id"],
        annotator_id=record["annotator_id"],
        kind=kind,
        choices=dict(record["choices"]),
    )


def adjudication_to_record(adj: Adjudication) -> dict:
    return {
        "task_id": adj.task_id,
        "attribute": adj.attribute,
        "verdict": adj.verdict,
        "rule": adj.rule,
        "override": adj.override,
        "note": adj.note,
    }


def adjudication_from_record(record: dict) -> Adjudication:
    return Adjudication(
        task_id=record["task_id"],
        attribute=record["attribute"],
        verdict=record["verdict"],
        rule=record.get("rule"),
        override=record.get("override", False),
        note=record.get("note", ""),
    )
