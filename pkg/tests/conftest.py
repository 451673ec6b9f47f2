import numpy as np
import pytest

from featenc.config import EvalConfig, FisherConfig, LowRankConfig, MpcaConfig, RunConfig, SparseConfig, TsvdConfig
from featenc.io import synth_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_corpus():
    """4개 범주 × 6장, 3×3×8 특징 텐서"""
    return synth_corpus(4, 6, 3, 3, 8, seed=7)


@pytest.fixture
def small_queries():
    """같은 범주 분포에서 새로 뽑은 질의 (범주당 2장)"""
    return synth_corpus(4, 2, 3, 3, 8, seed=7, stream=1)


@pytest.fixture
def small_config():
    """작은 코퍼스에 맞춘 실행 설정"""
    return RunConfig(
        seed=3,
        fisher=FisherConfig(components=2),
        sparse=SparseConfig(atoms=12, sparsity=2, iterations=3),
        tsvd=TsvdConfig(rank=3),
        mpca=MpcaConfig(dims=[2, 2, 4]),
        lowrank=LowRankConfig(rank=2),
        eval=EvalConfig(k=[1, 5], timing_repeats=1),
    )
