import json
import random
from collections import Counter

import pytest

from feedtopics.evaluation import (
    Adjudication,
    ChoiceAnnotation,
    ExpertAnnotation,
    KIND_INTRUDER,
    SamplingError,
    ScoringError,
    TRUTH_FIELDS,
    percent,
    sample_assignment_tasks,
    sample_expert_forms,
    sample_intruder_tasks,
    save_tasks,
    score_choice_tasks,
    score_expert_labels,
    task_to_record,
    task_from_record,
)
from feedtopics.topics import Topic

from .fixtures_eval import (
    build_assignment_outcomes,
    build_expert_outcomes,
    build_intruder_outcomes,
    make_forms,
    make_topic_model,
    wrong_intruder_choice,
)


def topic_with(ids):
    return Topic(topic_id=hash(tuple(ids)) % 1000, member_ids=list(ids), size=len(ids), representative_id=ids[0])


class TestIntruderSampler:
    def test_tiny_model_forces_base_choice(self):
        topics = [
            Topic(topic_id=0, member_ids=["a", "b"], size=2, representative_id="a"),
            Topic(topic_id=1, member_ids=["c"], size=1, representative_id="c"),
        ]
        texts = {"a": "ta", "b": "tb", "c": "tc"}
        tasks = sample_intruder_tasks(topics, texts, 20, seed=1)
        assert all(t.base_topic == 0 and t.intruder_topic == 1 for t in tasks)

    def test_task_structure_invariants(self):
        topics, texts = make_topic_model()
        members = {t.topic_id: set(t.member_ids) for t in topics}
        for task in sample_intruder_tasks(topics, texts, 300, seed=3):
            assert task.base_topic != task.intruder_topic
            ids = [item.doc_id for item in task.items]
            assert len(set(ids)) == 3
            from_base = [d for d in ids if d in members[task.base_topic]]
            from_intruder = [d for d in ids if d in members[task.intruder_topic]]
            assert len(from_base) == 2
            assert len(from_intruder) == 1
            assert task.items[task.truth_index].doc_id == from_intruder[0]

    def test_seed_reproduces_identical_file(self, tmp_path):
        topics, texts = make_topic_model()
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        save_tasks(sample_intruder_tasks(topics, texts, 200, seed=7), a)
        save_tasks(sample_intruder_tasks(topics, texts, 200, seed=7), b)
        assert a.read_bytes() == b.read_bytes()

    def test_base_topics_uniform_over_equal_topics(self):
        topics, texts = make_topic_model(n_topics=5, size=30)
        tasks = sample_intruder_tasks(topics, texts, 10_000, seed=11)
        freq = Counter(t.base_topic for t in tasks)
        for topic in topics:
            assert abs(freq[topic.topic_id] / 10_000 - 0.2) < 0.02

    def test_preconditions_named(self):
        topics, texts = make_topic_model(n_topics=1)
        with pytest.raises(SamplingError, match="at least 2 topics"):
            sample_intruder_tasks(topics, texts, 5, seed=0)
        singletons = [
            Topic(topic_id=0, member_ids=["a"], size=1, representative_id="a"),
            Topic(topic_id=1, member_ids=["b"], size=1, representative_id="b"),
        ]
        with pytest.raises(SamplingError, match="at least 2 members"):
            sample_intruder_tasks(singletons, {"a": "x", "b": "y"}, 5, seed=0)


class TestAssignmentSampler:
    def test_exemplars_disjoint_from_queries(self):
        topics, texts = make_topic_model(n_topics=2, size=25)
        for task in sample_assignment_tasks(topics, texts, 50, seed=2):
            exemplar_ids = {i.doc_id for items in task.exemplars.values() for i in items}
            query_ids = {q.doc_id for q in task.queries}
            assert not exemplar_ids & query_ids
            assert len(task.queries) == 10
            assert len(exemplar_ids) == 20
            assert task.split[0] + task.split[1] == 10

    def test_split_matches_truth_counts(self):
        topics, texts = make_topic_model()
        for task in sample_assignment_tasks(topics, texts, 100, seed=5):
            k = sum(q.truth_topic == task.topic_a for q in task.queries)
            assert (k, 10 - k) == task.split

    def test_seed_reproduces_identical_file(self, tmp_path):
        topics, texts = make_topic_model()
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        save_tasks(sample_assignment_tasks(topics, texts, 100, seed=13), a)
        save_tasks(sample_assignment_tasks(topics, texts, 100, seed=13), b)
        assert a.read_bytes() == b.read_bytes()

    def test_split_uniform_chi_square(self):
        topics, texts = make_topic_model(n_topics=4, size=60)
        tasks = sample_assignment_tasks(topics, texts, 1000, seed=17)
        freq = Counter(t.split[0] for t in tasks)
        assert set(freq) <= set(range(1, 10))
        expected = 1000 / 9
        chi2 = sum((freq.get(k, 0) - expected) ** 2 / expected for k in range(1, 10))
        # 0.999 quantile of chi-square with 8 degrees of freedom.
        assert chi2 < 26.12

    def test_undersized_topics_rejected(self):
        topics, texts = make_topic_model(n_topics=2, size=10)
        with pytest.raises(SamplingError, match="exemplars"):
            sample_assignment_tasks(topics, texts, 5, seed=0)


class TestExpertSampler:
    def test_forms_have_ten_distinct_docs(self):
        topics, texts = make_topic_model()
        for form in sample_expert_forms(topics, texts, 6, seed=3):
            assert len(form.sample) == 10
            assert len({i.doc_id for i in form.sample}) == 10

    def test_topics_distinct_across_forms(self):
        topics, texts = make_topic_model()
        forms = sample_expert_forms(topics, texts, 6, seed=9)
        ids = [f.topic_id for f in forms]
        assert len(set(ids)) == len(ids)

    def test_seed_reproduces_identical_file(self, tmp_path):
        topics, texts = make_topic_model()
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        save_tasks(sample_expert_forms(topics, texts, 5, seed=21), a)
        save_tasks(sample_expert_forms(topics, texts, 5, seed=21), b)
        assert a.read_bytes() == b.read_bytes()

    def test_topic_coverage_roughly_uniform_over_seeds(self):
        topics, texts = make_topic_model(n_topics=5, size=12)
        freq = Counter()
        n_seeds = 600
        for seed in range(n_seeds):
            for form in sample_expert_forms(topics, texts, 2, seed=seed):
                freq[form.topic_id] += 1
        expected = n_seeds * 2 / 5
        for topic in topics:
            assert abs(freq[topic.topic_id] - expected) / expected < 0.15

    def test_insufficient_topics_named(self):
        topics, texts = make_topic_model(n_topics=3, size=12)
        with pytest.raises(SamplingError, match="expert sampling needs 4 topics"):
            sample_expert_forms(topics, texts, 4, seed=0)


class TestTruthSecrecy:
    def _scan(self, payload):
        if isinstance(payload, dict):
            for key, value in payload.items():
                assert key not in TRUTH_FIELDS, f"truth field {key!r} leaked"
                self._scan(value)
        elif isinstance(payload, list):
            for value in payload:
                self._scan(value)

    def test_annotator_views_have_no_truth_fields(self):
        topics, texts = make_topic_model()
        views = [t.annotator_view() for t in sample_intruder_tasks(topics, texts, 20, seed=1)]
        views += [t.annotator_view() for t in sample_assignment_tasks(topics, texts, 20, seed=1)]
        views += [f.annotator_view() for f in sample_expert_forms(topics, texts, 5, seed=1)]
        for view in views:
            self._scan(json.loads(json.dumps(view)))

    def test_full_records_do_keep_truth(self):
        topics, texts = make_topic_model()
        task = sample_intruder_tasks(topics, texts, 1, seed=1)[0]
        record = task_to_record(task)
        assert "truth_index" in record
        assert task_from_record(record) == task


class TestChoiceScoring:
    def test_table_one_intruder_counts(self):
        tasks, annotations = build_intruder_outcomes(190, 7, 3)
        report = score_choice_tasks(tasks, annotations)
        assert (report.n_units, report.both_correct, report.one_correct, report.both_incorrect) == (
            200,
            190,
            7,
            3,
        )
        assert report.percents == {"both_correct": 95.0, "one_correct": 3.5, "both_incorrect": 1.5}

    def test_table_one_assignment_counts(self):
        tasks, annotations = build_assignment_outcomes(200, 1968, 21, 11)
        report = score_choice_tasks(tasks, annotations)
        assert (report.n_units, report.both_correct, report.one_correct, report.both_incorrect) == (
            2000,
            1968,
            21,
            11,
        )
        assert report.percents == {"both_correct": 98.4, "one_correct": 1.1, "both_incorrect": 0.6}

    def test_all_correct(self):
        tasks, annotations = build_intruder_outcomes(10, 0, 0)
        report = score_choice_tasks(tasks, annotations)
        assert report.percents["both_correct"] == 100.0
        assert report.both_incorrect == 0

    def test_missing_annotation_flags_incomplete(self):
        tasks, annotations = build_intruder_outcomes(5, 0, 0)
        dropped = tasks[2].task_id
        annotations = [a for a in annotations if not (a.task_id == dropped and a.annotator_id == "ann2")]
        report = score_choice_tasks(tasks, annotations)
        assert report.incomplete == [dropped]
        assert report.n_units == 4

    def test_rate_algebra(self):
        rng = random.Random(5)
        tasks, _ = build_intruder_outcomes(30, 0, 0, seed=9)
        annotations = []
        for task in tasks:
            truth = task.items[task.truth_index].doc_id
            wrong = wrong_intruder_choice(task)
            for annotator in ("ann1", "ann2"):
                chosen = truth if rng.random() < 0.7 else wrong
                annotations.append(
                    ChoiceAnnotation(task.task_id, annotator, KIND_INTRUDER, {"chosen": chosen})
                )
        report = score_choice_tasks(tasks, annotations)
        assert report.both_correct + report.one_correct + report.both_incorrect == report.n_units
        rates = report.rates
        assert all(0.0 <= r <= 1.0 for r in rates.values())
        assert rates["both_correct"] == report.both_correct / report.n_units

    def test_mixed_kinds_rejected(self):
        intruder_tasks, _ = build_intruder_outcomes(2, 0, 0)
        assignment_tasks, _ = build_assignment_outcomes(2, 20, 0, 0)
        with pytest.raises(ScoringError):
            score_choice_tasks(intruder_tasks + assignment_tasks, [])


class TestExpertScoring:
    def test_table_two_reconstruction(self):
        forms, annotations, adjudications = build_expert_outcomes()
        report = score_expert_labels(forms, annotations, adjudications)
        per = report.per_attribute
        assert [per[a].annotations for a in ("trigger", "concern", "entity", "emotion")] == [200] * 4
        assert [per[a].non_null for a in ("trigger", "concern", "entity", "emotion")] == [177, 145, 122, 195]
        assert [per[a].agreement_percent for a in ("trigger", "concern", "entity", "emotion")] == [
            97.0,
            87.0,
            97.0,
            84.0,
        ]
        assert [per[a].non_null_percent for a in ("trigger", "concern", "entity", "emotion")] == [
            89.0,
            73.0,
            61.0,
            98.0,
        ]
        assert report.total_annotations == 800
        assert report.total_non_null == 639
        assert report.overall_non_null_percent == 80.0
        assert report.overall_agreement_percent == 91.0
        assert report.omitted_attributes == ["consequence"]
        assert report.incomplete == []

    def test_both_null_excluded_from_non_null(self):
        forms, annotations, adjudications = build_expert_outcomes(n_forms=100)
        report = score_expert_labels(forms, annotations, adjudications)
        # 7 trigger pairs are both-null: 200 annotations, only 177 non-null.
        assert report.per_attribute["trigger"].annotations == 200
        assert report.per_attribute["trigger"].non_null == 177

    def test_emotion_exact_match_rule(self):
        forms, annotations, _ = build_expert_outcomes(n_forms=100)
        report = score_expert_labels(forms, annotations, adjudications=[])
        # Emotion pairs need no adjudication: 82 equal pairs agree.
        assert report.per_attribute["emotion"].agreements == 164

    def test_missing_adjudication_marks_incomplete(self):
        forms, annotations, adjudications = build_expert_outcomes()
        target = forms[0].task_id
        pruned = [a for a in adjudications if not (a.task_id == target and a.attribute == "trigger")]
        report = score_expert_labels(forms, annotations, pruned)
        assert f"{target}:trigger" in report.incomplete

    def test_one_null_is_disagreement_without_override(self):
        form = make_forms(1)[0]
        annotations = [
            ExpertAnnotation(form.task_id, "ann1", {"trigger": "outage wave", "emotion": None}),
            ExpertAnnotation(form.task_id, "ann2", {"trigger": None, "emotion": None}),
        ]
        report = score_expert_labels([form], annotations, [])
        trigger = report.per_attribute["trigger"]
        assert trigger.non_null == 1
        assert trigger.agreements == 0

    def test_override_turns_one_null_into_agreement(self):
        form = make_forms(1)[0]
        annotations = [
            ExpertAnnotation(form.task_id, "ann1", {"trigger": "outage wave"}),
            ExpertAnnotation(form.task_id, "ann2", {"trigger": None}),
        ]
        adjudications = [Adjudication(form.task_id, "trigger", "agree", override=True)]
        report = score_expert_labels([form], annotations, adjudications)
        trigger = report.per_attribute["trigger"]
        assert trigger.non_null == 1
        assert trigger.agreements == 1

    def test_emotion_scale_enforced(self):
        form = make_forms(1)[0]
        annotations = [
            ExpertAnnotation(form.task_id, "ann1", {"emotion": 9}),
            ExpertAnnotation(form.task_id, "ann2", {"emotion": 4}),
        ]
        with pytest.raises(ScoringError, match="emotion"):
            score_expert_labels([form], annotations, [])


class TestPercentRounding:
    @pytest.mark.parametrize(
        "n,d,expected",
        [(190, 200, 95.0), (7, 200, 3.5), (3, 200, 1.5), (1968, 2000, 98.4), (21, 2000, 1.1), (11, 2000, 0.6)],
    )
    def test_one_decimal_half_up(self, n, d, expected):
        assert percent(n, d) == expected

    @pytest.mark.parametrize(
        "n,d,expected",
        [(177, 200, 89.0), (145, 200, 73.0), (122, 200, 61.0), (195, 200, 98.0), (639, 800, 80.0), (580, 639, 91.0)],
    )
    def test_integer_half_up(self, n, d, expected):
        assert percent(n, d, places="1") == expected
