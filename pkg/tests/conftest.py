import pytest

from nearcrash.pipeline import load_config, prepare_database
from nearcrash.synthetic import write_corpus


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    return write_corpus(tmp_path_factory.mktemp("corpus"))


@pytest.fixture(scope="session")
def corpus_db(corpus):
    cfg = load_config(corpus.config, env={})
    db, freq_rows, report = prepare_database(cfg)
    return db, freq_rows, report, cfg
