"""학습 → 인코딩 → 인덱싱 → 평가 파이프라인

모든 인코더가 같은 골격을 공유하므로 단계별 시간 비교가 구조적으로 같습니다.
이미지별 인코딩은 스레드 풀에서 순서를 유지하며 모으므로 결과는 스레드 수와
무관합니다.
"""

import logging
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import yaml
from pydantic import BaseModel, Field

from .base import BaseEncoder, EncoderType, FeatureCorpus, FloatArray, Signature
from .config import RunConfig
from .encoders import EncoderFactory
from .engine import EncodedIndex, build_index, l2_normalize, mean_average_precision
from .io import ingest

logger = logging.getLogger(__name__)

THREADS_ENV = 'FEATENC_THREADS'
TIMING_SAMPLE = 16

TABLE_ORDER = (
    EncoderType.FISHER,
    EncoderType.SPARSE,
    EncoderType.TSVD,
    EncoderType.MPCA,
    EncoderType.LOWRANK,
    EncoderType.RAW,
)
METHOD_NAMES = {
    EncoderType.FISHER: 'Fisher',
    EncoderType.SPARSE: 'Sparse',
    EncoderType.TSVD: 't-SVD',
    EncoderType.MPCA: 'mPCA',
    EncoderType.LOWRANK: 'Low Rank',
    EncoderType.RAW: 'Raw Tensor',
}

CorpusSource = Union[str, Path, FeatureCorpus]


class PipelineError(RuntimeError):
    """파이프라인 단계 실패 (단계와 인코더 태그 포함)"""

    def __init__(self, stage: str, encoder: EncoderType, cause: Exception):
        super().__init__(f'{stage} stage failed for {encoder.value} encoder: {cause}')
        self.stage = stage
        self.encoder = encoder


class StageTimings(BaseModel):
    """단계별 소요 시간 (초, 반복 측정의 중앙값)"""

    train_seconds: Optional[float] = None
    encode_per_image_seconds: float = 0.0
    query_per_query_seconds: float = 0.0


class EncoderResult(BaseModel):
    """인코더 하나의 평가 결과"""

    encoder: EncoderType
    signature_dim: int
    map_at_k: Dict[str, float]
    timings: StageTimings = Field(default_factory=StageTimings)


class EvalReport(BaseModel):
    """평가 보고서

    키 순서는 필드 선언 순서로 고정됩니다.
    """

    version: str = '1.0'
    seed: int
    database_size: int
    query_count: int
    k: List[int]
    normalization: str
    exclude_self: bool
    results: List[EncoderResult] = Field(default_factory=list)
    config: Dict[str, Any] = Field(default_factory=dict)

    def result(self, encoder: EncoderType) -> EncoderResult:
        """인코더별 결과 조회

        Raises:
            KeyError: 보고서에 없는 인코더
        """
        for item in self.results:
            if item.encoder == encoder:
                return item
        raise KeyError(f'No result for encoder {encoder.value}')

    def to_dict(self, include_timings: bool = True) -> Dict[str, Any]:
        exclude = {'results': {'__all__': {'timings'}}} if not include_timings else None
        return self.model_dump(mode='json', exclude=exclude)

    def render(self, include_timings: bool = True) -> str:
        """YAML 텍스트로 렌더링 (시간 제외 시 같은 시드의 실행은 바이트 단위로 같음)"""
        data = self.to_dict(include_timings)
        return yaml.safe_dump(data, sort_keys=False, allow_unicode=True, default_flow_style=False)


def resolve_threads(config: RunConfig) -> int:
    """작업 스레드 수 (환경 변수가 설정 파일 값보다 우선)

    Raises:
        ValueError: 환경 변수가 양의 정수가 아님
    """
    value = os.environ.get(THREADS_ENV)
    if value is None or value == '':
        return config.threads
    try:
        threads = int(value)
    except ValueError:
        raise ValueError(f'{THREADS_ENV} must be a positive integer, got {value!r}') from None
    if threads < 1:
        raise ValueError(f'{THREADS_ENV} must be a positive integer, got {value!r}')
    return threads


def _load(source: CorpusSource) -> FeatureCorpus:
    return source if isinstance(source, FeatureCorpus) else ingest(source)


def _median_time(action: Callable[[], object], repeats: int) -> float:
    samples: List[float] = []
    for _ in range(repeats):
        start = time.perf_counter()
        action()
        samples.append(time.perf_counter() - start)
    return float(statistics.median(samples))


def _is_same_corpus(database: FeatureCorpus, queries: FeatureCorpus) -> bool:
    if queries is database:
        return True
    return (
        queries.tensors.shape == database.tensors.shape
        and queries.label_names == database.label_names
        and np.array_equal(queries.label_ids, database.label_ids)
        and np.array_equal(queries.tensors, database.tensors)
    )


def self_match_ids(config: RunConfig, database: FeatureCorpus, queries: FeatureCorpus) -> Optional[List[int]]:
    """자기 제외 평가에서 질의마다 데이터베이스 안의 자기 자신 id

    질의 코퍼스가 데이터베이스와 같은 코퍼스일 때만 질의 i를 데이터베이스 항목 i로
    봅니다. 별도 질의 파일이면 제외할 항목이 없으므로 None입니다.
    """
    if not config.eval.exclude_self:
        return None
    if not _is_same_corpus(database, queries):
        logger.warning('exclude_self has no effect: the query corpus is not the database corpus')
        return None
    return list(range(queries.size))


def encode_corpus_signatures(encoder: BaseEncoder, corpus: FeatureCorpus, threads: int = 1) -> List[Signature]:
    """코퍼스의 모든 이미지를 인코딩하고 l2 정규화 (입력 순서 유지)"""

    def encode_one(index: int) -> FloatArray:
        values, _ = l2_normalize(np.ravel(encoder.encode(corpus.image(index))))
        return values

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            encoded = list(pool.map(encode_one, range(corpus.size)))
    else:
        encoded = [encode_one(i) for i in range(corpus.size)]
    return [Signature(values=values, item_id=i, label=corpus.label_of(i)) for i, values in enumerate(encoded)]


def _evaluate(
    config: RunConfig,
    encoder_type: EncoderType,
    database: FeatureCorpus,
    queries: FeatureCorpus,
    threads: int,
) -> tuple[EncoderResult, BaseEncoder, EncodedIndex]:
    repeats = config.eval.timing_repeats
    timings = StageTimings()

    def stage(name: str, action: Callable[[], Any]) -> Any:
        try:
            return action()
        except Exception as e:
            raise PipelineError(name, encoder_type, e) from e

    encoder = stage('configure', lambda: EncoderFactory.from_run_config(config, encoder_type))
    start = time.perf_counter()
    stage('train', lambda: encoder.train(database))
    if encoder.requires_training:
        timings.train_seconds = time.perf_counter() - start

    signatures = stage('encode', lambda: encode_corpus_signatures(encoder, database, threads))
    query_signatures = stage('encode', lambda: encode_corpus_signatures(encoder, queries, threads))
    sample = min(TIMING_SAMPLE, database.size)
    encode_time = _median_time(lambda: [encoder.encode(database.image(i)) for i in range(sample)], repeats)
    timings.encode_per_image_seconds = encode_time / sample

    index = stage('index', lambda: build_index(signatures, encoder_type))
    self_ids = self_match_ids(config, database, queries)
    scores: Dict[str, float] = {}
    for k in config.eval.k:
        scores[f'top-{k}'] = stage(
            'eval',
            lambda k=k: mean_average_precision(
                index, query_signatures, k, config.eval.normalization, self_ids
            ),
        )
    depth = max(config.eval.k)
    query_time = _median_time(lambda: [index.query(q, depth) for q in query_signatures], repeats)
    timings.query_per_query_seconds = query_time / len(query_signatures)

    logger.info('%s: %s', encoder_type.value, ', '.join(f'{key}={value:.4f}' for key, value in scores.items()))
    result = EncoderResult(encoder=encoder_type, signature_dim=index.dimension, map_at_k=scores, timings=timings)
    return result, encoder, index


def _new_report(config: RunConfig, database: FeatureCorpus, queries: FeatureCorpus) -> EvalReport:
    return EvalReport(
        version=config.version,
        seed=config.seed,
        database_size=database.size,
        query_count=queries.size,
        k=list(config.eval.k),
        normalization=config.eval.normalization,
        exclude_self=config.eval.exclude_self,
        config=config.model_dump(mode='json', exclude={'report_path', 'model_file', 'threads'}),
    )


def run_pipeline(
    config: RunConfig,
    train_file: CorpusSource,
    query_file: CorpusSource,
    encoder_type: Optional[EncoderType] = None,
) -> EvalReport:
    """한 인코더로 학습/인코딩/인덱싱/MAP@k 평가를 수행

    Args:
        config: 실행 설정
        train_file: 학습 겸 검색 대상 코퍼스 (파일 경로 또는 적재된 코퍼스)
        query_file: 질의 코퍼스
        encoder_type: 지정하면 config.encoder 대신 사용

    Returns:
        평가 보고서

    Raises:
        PipelineError: 단계 실패 (stage, encoder 속성 포함)
    """
    return run_table(config, train_file, query_file, [encoder_type or config.encoder])


def run_table(
    config: RunConfig,
    train_file: CorpusSource,
    query_file: CorpusSource,
    encoders: Optional[Sequence[EncoderType]] = None,
) -> EvalReport:
    """여러 인코더를 같은 코퍼스로 평가해 한 보고서로 합침 (기본은 여섯 방식 전부)"""
    encoder_types = [EncoderType(e) for e in (encoders or TABLE_ORDER)]
    database = _load(train_file)
    queries = _load(query_file)
    if queries.image_shape != database.image_shape:
        raise PipelineError(
            'ingest',
            encoder_types[0],
            ValueError(f'Query shape {queries.image_shape} does not match database shape {database.image_shape}'),
        )
    threads = resolve_threads(config)
    report = _new_report(config, database, queries)
    for encoder_type in encoder_types:
        result, _, _ = _evaluate(config, encoder_type, database, queries, threads)
        report.results.append(result)
    return report


def train_encoder(
    config: RunConfig,
    train_file: CorpusSource,
    encoder_type: Optional[EncoderType] = None,
) -> BaseEncoder:
    """설정된 인코더를 학습해 반환"""
    encoder_type = encoder_type or config.encoder
    encoder = EncoderFactory.from_run_config(config, encoder_type)
    try:
        encoder.train(_load(train_file))
    except Exception as e:
        raise PipelineError('train', encoder_type, e) from e
    return encoder


def format_table(report: EvalReport) -> str:
    """방식 × top-k 열과 시간 열로 이루어진 고정 폭 표"""
    columns = [f'top-{k}' for k in report.k]
    header = f'{"Method":<12}' + ''.join(f'{c:>9}' for c in columns)
    header += f'{"train(s)":>11}{"encode(ms)":>12}{"query(ms)":>11}'
    lines = [header, '-' * len(header)]
    for item in report.results:
        train = '-' if item.timings.train_seconds is None else f'{item.timings.train_seconds:.2f}'
        row = f'{METHOD_NAMES[item.encoder]:<12}' + ''.join(f'{item.map_at_k[c]:>9.4f}' for c in columns)
        row += f'{train:>11}{item.timings.encode_per_image_seconds * 1e3:>12.3f}'
        row += f'{item.timings.query_per_query_seconds * 1e3:>11.3f}'
        lines.append(row)
    return '\n'.join(lines)


def save_report(report: EvalReport, path: Union[str, Path], include_timings: bool = True) -> None:
    """보고서를 YAML 파일로 저장"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.render(include_timings), encoding='utf-8')


def load_report(path: Union[str, Path]) -> EvalReport:
    """YAML 보고서 파일 로드"""
    with open(path, encoding='utf-8') as f:
        return EvalReport(**yaml.safe_load(f))
