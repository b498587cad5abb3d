import dataclasses

import numpy as np
import pytest

from src.core.tensor import set_default_dtype
from src.data.featurize import FeatureConfig, featurize_corpus
from src.data.generate_corpus import CorpusSpec, generate_corpus
from src.model.lut_model import LutModel
from src.model.model_config import ModelConfig
from src.teacher.teacher_model import table_mode


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow end-to-end tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def float64_mode():
    set_default_dtype(np.float64)
    yield
    set_default_dtype(np.float64)


@pytest.fixture(autouse=True)
def no_env_seed(monkeypatch):
    monkeypatch.delenv("LUT_SEED", raising=False)


TINY_SPEC = CorpusSpec(
    n_src_tokens=6,
    n_tgt_tokens=6,
    n_utts=40,
    min_len=2,
    max_len=4,
    frames_per_token=3,
    noise=0.05,
    feature_dim=4,
    n_speakers=2,
    n_intents=2,
    dev_fraction=0.1,
    test_fraction=0.1,
    seed=0,
)
TINY_FEATURES = FeatureConfig(stack_right=1, downsample=1, normalize=True)


@pytest.fixture
def tiny_spec():
    return TINY_SPEC


@pytest.fixture
def tiny_corpus():
    return generate_corpus(TINY_SPEC)


@pytest.fixture
def tiny_data(tiny_corpus):
    """(utterances đã featurize, src_vocab, tgt_vocab, normalizer)."""
    utts, _, normalizer = featurize_corpus(tiny_corpus.utterances, TINY_FEATURES)
    return utts, tiny_corpus.src_vocab, tiny_corpus.tgt_vocab, normalizer


def tiny_model_config(src_vocab, tgt_vocab, **overrides) -> ModelConfig:
    base = ModelConfig(
        n_ae=1,
        n_se=1,
        n_td=1,
        d_model=8,
        n_heads=2,
        d_ff=16,
        input_dim=TINY_FEATURES.output_dim(TINY_SPEC.feature_dim),
        n_ctc_labels=len(src_vocab.ctc_label_ids()),
        tgt_vocab_size=len(tgt_vocab),
        dropout=0.0,
        seed=0,
    )
    return dataclasses.replace(base, **overrides)


@pytest.fixture
def tiny_model(tiny_data):
    _, src_vocab, tgt_vocab, _ = tiny_data
    return LutModel(tiny_model_config(src_vocab, tgt_vocab)).eval()


@pytest.fixture
def tiny_teacher(tiny_data):
    _, src_vocab, _, _ = tiny_data
    return table_mode(src_vocab, d_model=8, seed=0)
