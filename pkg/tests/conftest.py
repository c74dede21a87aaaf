"""Shared fixtures: a session-scoped synthetic corpus and small trained runs."""

import pytest
import torch

torch.set_num_threads(1)

from singsynth.acoustic import ModelConfig
from singsynth.corpus import generate_toy_corpus
from singsynth.speakers import MultiRefConfig
from singsynth.training import CorpusData, OptimizerConfig, train


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """Two synthetic singers, four utterances each, fixed seed."""
    root = tmp_path_factory.mktemp("corpus")
    return generate_toy_corpus(root, n_speakers=2, utts_per_speaker=4, seed=42)


@pytest.fixture(scope="session")
def toy_model_cfg(toy_corpus):
    return ModelConfig.toy_profile(len(toy_corpus.phoneme_inventory))


@pytest.fixture(scope="session")
def toy_mr_cfg(toy_model_cfg):
    return MultiRefConfig.toy_profile(d_query=toy_model_cfg.d_model)


@pytest.fixture(scope="session")
def corpus_data(toy_corpus, toy_model_cfg):
    return CorpusData(toy_corpus, toy_model_cfg.pitch_bins)


@pytest.fixture(scope="session")
def stub_run(tmp_path_factory, toy_corpus, toy_model_cfg, toy_mr_cfg):
    """A three-step training run: valid checkpoint layout, untrained quality.

    Contract tests (CLI plumbing, checkpoint round-trips) need a loadable
    run directory, not a good model; keeping it short keeps the suite fast.
    """
    run_dir = tmp_path_factory.mktemp("stub_run")
    opt_cfg = OptimizerConfig(
        d_model=toy_model_cfg.d_model,
        warmup=800,
        max_steps=3,
        token_budget=2000,
        eval_every=3,
        checkpoint_every=3,
        eval_vocode_iters=4,
    )
    result = train(toy_corpus, run_dir, toy_model_cfg, toy_mr_cfg, opt_cfg, seed=0)
    return {"run_dir": run_dir, "result": result, "opt_cfg": opt_cfg}
