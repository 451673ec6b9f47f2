"""딥 특징 텐서 인코딩과 내용 기반 검색

이 패키지는 다음 기능을 제공합니다:
- Fisher 벡터 (대각 GMM, EM 학습)
- k-SVD 사전 학습과 OMP 희소 코딩
- t-product 대수, t-SVD 투영, 저랭크 + 희소 분할
- mPCA (다선형 주성분 분석)
- 유클리드 거리 검색과 MAP@k 평가
- TENC 특징 파일 입출력과 명령줄 파이프라인
"""

from .base import (
    BaseEncoder,
    DescriptorSet,
    EncoderInterface,
    EncoderType,
    FeatureCorpus,
    RankedResult,
    Signature,
)
from .config import ConfigLoader, RunConfig
from .encoders import EncoderFactory
from .engine import EncodedIndex, average_precision_at_k, build_index, mean_average_precision, query
from .io import FeatureFileError, ModelFileError, export, ingest, load_model, save_model, synth_corpus
from .pipeline import EvalReport, PipelineError, format_table, run_pipeline, run_table

__all__ = [
    'EncoderType',
    'DescriptorSet',
    'FeatureCorpus',
    'Signature',
    'RankedResult',
    'EncoderInterface',
    'BaseEncoder',
    'EncoderFactory',
    'RunConfig',
    'ConfigLoader',
    'EncodedIndex',
    'build_index',
    'query',
    'average_precision_at_k',
    'mean_average_precision',
    'FeatureFileError',
    'ModelFileError',
    'ingest',
    'export',
    'synth_corpus',
    'save_model',
    'load_model',
    'EvalReport',
    'PipelineError',
    'run_pipeline',
    'run_table',
    'format_table',
]
