import pytest

from feedtopics.clustering import ClusterConfig, ReductionConfig
from feedtopics.embedding import EmbedderConfig
from feedtopics.pipeline import PipelineConfig, RunStore, TrendConfig, run_pipeline
from feedtopics.synth import make_corpus


def small_pipeline_config(seed=0):
    return PipelineConfig(
        handles=("ExampleTelco",),
        embedding=EmbedderConfig(backend_id="hashing", dimension=128, batch_size=256, seed=seed),
        reduction=ReductionConfig(output_dims=10, n_neighbors=50, min_dist=0.0, seed=seed),
        clustering=ClusterConfig(min_cluster_size=30, selection="leaf"),
        trends=TrendConfig(window_days=7.0, horizon=8, threshold=0.5),
        projection_seed=seed,
    )


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    corpus = make_corpus(n_docs=800, n_themes=8, seed=5)
    path = tmp_path_factory.mktemp("corpus") / "comments.jsonl"
    corpus.write(path)
    return path, corpus


@pytest.fixture(scope="session")
def completed_run(tmp_path_factory, fixture_corpus):
    """One fully executed pipeline run shared by service-level tests."""
    corpus_path, corpus = fixture_corpus
    store = RunStore(tmp_path_factory.mktemp("store"))
    manifest = run_pipeline(corpus_path, small_pipeline_config(), store, "fixture-run")
    return store, manifest, corpus
