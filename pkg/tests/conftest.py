from pathlib import Path

import pytest

from fewshot_oie.corpus import load_jsonl

FIXTURES = Path(__file__).parent / "fixtures"

ACCEPTANCE_LINES = []


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def dev_corpus():
    return load_jsonl(FIXTURES / "corpus.jsonl")


@pytest.fixture
def train_corpus():
    return load_jsonl(FIXTURES / "train.jsonl")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
