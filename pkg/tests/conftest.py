import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def golden_corpus_dir(tmp_path_factory) -> Path:
    """The shipped 10k-record synthetic corpus, materialized once per session."""
    from pixsift.synth import generate_corpus, write_corpus

    outdir = tmp_path_factory.mktemp("golden_corpus")
    write_corpus(generate_corpus(), outdir)
    return outdir


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES
