import numpy as np
import pytest

from promptmrc.corpus import parse_brat_document
from promptmrc.synth import SyntheticCorpusSpec, generate_corpus, synthetic_schema
from promptmrc.templates import load_schema_templates


@pytest.fixture(scope="session")
def drug_schema():
    return load_schema_templates("drug_ade")


@pytest.fixture(scope="session")
def sdoh_schema():
    return load_schema_templates("sdoh")


@pytest.fixture(scope="session")
def synth_schema():
    return synthetic_schema()


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(SyntheticCorpusSpec(num_documents=10, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def discussion_doc(drug_schema):
    text = "Take it as long as your rash is itching."
    ann = ("T1\tDuration 8 39\tas long as your rash is itching\n"
           "T2\tADE 24 28\trash\n"
           "T3\tReason 32 39\titching\n")
    return parse_brat_document(text, ann, drug_schema, doc_id="disc")


# ----------------------------------------------------------- acceptance log

_ACCEPTANCE = pytest.StashKey[list]()


class _Criterion:
    def __init__(self, log, number, title):
        self.log, self.number, self.title, self.detail = log, number, title, ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        detail = self.detail if exc_type is None else f"{self.detail} {exc_type.__name__}: {exc}".strip()
        line = f"criterion {self.number:>2} {status}: {self.title}"
        self.log.append(line + (f" ({detail})" if detail else ""))
        print(self.log[-1])
        return False


@pytest.fixture
def acceptance(request):
    log = request.config.stash.setdefault(_ACCEPTANCE, [])
    return lambda number, title: _Criterion(log, number, title)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
