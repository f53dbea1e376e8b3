"""Shared fixtures: the default synthetic corpus and memoized end-to-end pipeline runs."""
from dataclasses import replace

import pytest

from tdtrojan.sweeps import PipelineConfig, run_pipeline
from tdtrojan.toy import SyntheticCorpusSpec, TrainConfig, generate_corpus, train


@pytest.fixture(scope="session")
def desk_corpus(tmp_path_factory):
    """(train, test) manifests of the default synthetic corpus."""
    return generate_corpus(SyntheticCorpusSpec(), tmp_path_factory.mktemp("corpus"))


@pytest.fixture(scope="session")
def pipeline(desk_corpus):
    """run(ratio=..., seed=..., trigger=...) -> PipelineResult, cached per configuration.

    Training dominates the suite's runtime, so identical configurations requested
    by different tests share one run.
    """
    cache = {}
    train_m, test_m = desk_corpus

    def run(ratio=0.2, seed=0, trigger=None):
        base = PipelineConfig()
        trig = base.trigger if trigger is None else trigger
        key = (ratio, seed, trig.to_json())
        if key not in cache:
            cfg = replace(base, trigger=trig, ratio=ratio, seed=seed,
                          train=replace(base.train, seed=seed))
            cache[key] = run_pipeline(train_m, test_m, cfg)
        return cache[key]

    return run


@pytest.fixture(scope="session")
def clean_model(desk_corpus):
    """seed -> TrainResult of a model trained on the unpoisoned corpus (cached)."""
    cache = {}

    def get(seed=0):
        if seed not in cache:
            cache[seed] = train(None, desk_corpus[0], TrainConfig(seed=seed))
        return cache[seed]

    return get


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
