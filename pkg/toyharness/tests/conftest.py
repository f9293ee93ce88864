import pytest

from toyharness import ToyCorpusSpec, make_corpora, train_toy_lm


@pytest.fixture(scope="session")
def half_overlap_corpus(tmp_path_factory):
    spec = ToyCorpusSpec(overlap_fraction=0.5, seed=1)
    return make_corpora(spec, tmp_path_factory.mktemp("corpora"))


@pytest.fixture(scope="session")
def pretrained_models(half_overlap_corpus, tmp_path_factory):
    """Large source-language and small target-language models.

    Shared across tests: pretraining dominates the suite's runtime.
    """
    out_dir = tmp_path_factory.mktemp("pretrained")
    source = train_toy_lm(
        half_overlap_corpus.source_corpus, half_overlap_corpus.source_vocab,
        "large", 1200, out_dir / "source_large.ckpt",
    )
    small = train_toy_lm(
        half_overlap_corpus.target_corpus, half_overlap_corpus.target_vocab,
        "small", 1200, out_dir / "small_target.ckpt",
    )
    return source, small
