"""검색 엔진

l2 정규화된 시그니처 인덱스를 만들고, 유클리드 거리 순위 질의와
MAP@k 평가를 제공합니다. 시그니처 행렬은 생성 후 변경되지 않고 질의 통계는
잠금으로 갱신하므로 여러 스레드에서 동시에 질의해도 안전합니다.
"""

import logging
import threading
import time
from typing import Iterable, List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from .base import EncoderType, FloatArray, RankedResult, Signature

logger = logging.getLogger(__name__)

Normalization = Literal['retrieved', 'min_relevant']


def l2_normalize(values: FloatArray) -> tuple[FloatArray, bool]:
    """평탄화한 값을 l2 정규화

    Returns:
        (정규화된 값, 정규화 여부). 노름이 0이면 원래 값을 그대로 돌려줌
    """
    values = np.asarray(values, dtype=np.float64)
    norm = float(np.linalg.norm(np.ravel(values)))
    if norm == 0.0:
        return values, False
    return values / norm, True


class Stats(BaseModel):
    """질의 처리 통계"""

    total_queries: int = 0
    processing_time: float = 0.0
    avg_query_time: float = 0.0


class EncodedIndex:
    """한 인코더가 만든 시그니처들의 전수 탐색 인덱스

    삽입 순서를 유지하며, 거리가 같으면 먼저 삽입된 항목이 앞에 옵니다.
    """

    def __init__(
        self,
        signatures: Sequence[Signature],
        encoder_tag: EncoderType = EncoderType.RAW,
        model_path: Optional[str] = None,
    ):
        """인덱스 초기화

        Args:
            signatures: 인덱싱할 시그니처 목록
            encoder_tag: 시그니처를 만든 인코더
            model_path: 시그니처를 만든 모델 파일 경로 (알 수 있을 때)

        Raises:
            ValueError: 시그니처가 없거나 차원이 서로 다르거나 유한하지 않은 값이 있음
        """
        if not signatures:
            raise ValueError('Cannot build an index from zero signatures')
        rows = [np.ravel(np.asarray(signature.values, dtype=np.float64)) for signature in signatures]
        dimension = rows[0].size
        for signature, row in zip(signatures, rows):
            if row.size != dimension:
                raise ValueError(
                    f'Signature {signature.item_id} has dimension {row.size}, expected {dimension}'
                )
            if not np.all(np.isfinite(row)):
                raise ValueError(f'Signature {signature.item_id} has non-finite entries')

        self.signatures = list(signatures)
        self.encoder_tag = EncoderType(encoder_tag)
        self.model_path = model_path
        self.matrix = np.vstack(rows)
        self.item_ids = tuple(signature.item_id for signature in signatures)
        self.labels = tuple(signature.label for signature in signatures)
        self.stats = Stats()
        self._stats_lock = threading.Lock()

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self) -> int:
        return int(self.matrix.shape[0])

    def distances(self, values: FloatArray) -> FloatArray:
        """질의와 모든 항목 사이의 유클리드 거리 (텐서 인코딩은 Frobenius 거리와 같음)

        Raises:
            ValueError: 질의 차원이 인덱스와 다름
        """
        q = np.ravel(np.asarray(values, dtype=np.float64))
        if q.size != self.dimension:
            raise ValueError(f'Query dimension {q.size} does not match index dimension {self.dimension}')
        diff = self.matrix - q[None, :]
        return np.sqrt(np.sum(diff * diff, axis=1))

    def query(self, q: Signature, k: int, exclude: Optional[int] = None) -> RankedResult:
        """거리 오름차순 상위 k개 검색

        Args:
            q: 질의 시그니처
            k: 반환할 개수 (인덱스보다 크면 전체)
            exclude: 후보에서 뺄 item_id (leave-one-out 평가용)

        Returns:
            거리 오름차순 결과. 동률은 삽입 순서

        Raises:
            ValueError: k < 1 또는 질의 차원이 다름
        """
        if k < 1:
            raise ValueError(f'k must be positive, got {k}')
        start_time = time.perf_counter()

        dist = self.distances(q.values)
        order = np.argsort(dist, kind='stable')
        if exclude is not None:
            order = order[[self.item_ids[i] != exclude for i in order]]
        top = order[:k]
        result = RankedResult(
            item_ids=tuple(self.item_ids[i] for i in top),
            distances=tuple(float(dist[i]) for i in top),
            labels=tuple(self.labels[i] for i in top),
        )

        elapsed = time.perf_counter() - start_time
        with self._stats_lock:
            self.stats.total_queries += 1
            self.stats.processing_time += elapsed
        return result

    def get_performance_stats(self) -> Stats:
        """질의 통계 반환"""
        with self._stats_lock:
            stats = self.stats.model_copy()
        if stats.total_queries > 0:
            stats.avg_query_time = stats.processing_time / stats.total_queries
        return stats

    def reset_stats(self):
        """통계 초기화"""
        with self._stats_lock:
            self.stats = Stats()

    def __str__(self) -> str:
        return f'EncodedIndex(encoder={self.encoder_tag.value}, size={len(self)}, dimension={self.dimension})'


def build_index(signatures: Iterable[Signature], encoder_tag: EncoderType = EncoderType.RAW) -> EncodedIndex:
    """시그니처 목록으로 인덱스 생성"""
    return EncodedIndex(list(signatures), encoder_tag)


def query(index: EncodedIndex, q: Signature, k: int) -> RankedResult:
    """인덱스에서 상위 k개 검색

    Raises:
        ValueError: 빈 인덱스, k < 1 또는 차원 불일치
    """
    if len(index) == 0:
        raise ValueError('Cannot query an empty index')
    return index.query(q, k)


def average_precision_at_k(
    result: RankedResult,
    query_label: str,
    k: int,
    normalization: Normalization = 'retrieved',
    total_relevant: Optional[int] = None,
) -> float:
    """상위 k개 결과의 평균 정밀도

    AP@k = Σ_{i≤k, rel(i)} P@i / R. 기본(``retrieved``)은 R을 상위 k개 안의
    관련 항목 수로(없으면 1), ``min_relevant``는 min(k, 전체 관련 항목 수)로
    둡니다. k 아래 순위의 결과는 값에 영향을 주지 않습니다.

    Args:
        result: 순위 결과
        query_label: 질의의 범주
        k: 평가 깊이
        normalization: 정규화 방식
        total_relevant: ``min_relevant``에서 사용할 인덱스 안의 관련 항목 수

    Raises:
        ValueError: k < 1 이거나 ``min_relevant``인데 total_relevant가 없음
    """
    if k < 1:
        raise ValueError(f'k must be positive, got {k}')
    hits = 0
    precision_sum = 0.0
    for rank, label in enumerate(result.labels[:k], start=1):
        if label == query_label:
            hits += 1
            precision_sum += hits / rank

    if normalization == 'retrieved':
        return precision_sum / max(hits, 1)
    if normalization == 'min_relevant':
        if total_relevant is None:
            raise ValueError('min_relevant normalization requires total_relevant')
        return precision_sum / max(min(k, total_relevant), 1)
    raise ValueError(f'Unknown AP normalization: {normalization}')


def mean_average_precision(
    index: EncodedIndex,
    queries: Sequence[Signature],
    k: int,
    normalization: Normalization = 'retrieved',
    self_ids: Optional[Sequence[Optional[int]]] = None,
) -> float:
    """질의 집합의 AP@k 평균

    Args:
        index: 검색 인덱스
        queries: 범주가 붙은 질의 시그니처들
        k: 평가 깊이
        normalization: AP 정규화 방식
        self_ids: 질의마다 인덱스 안에서 그 질의 자신인 항목의 item_id (없으면 None).
            지정한 항목은 후보와 관련 항목 수에서 제외

    Raises:
        ValueError: 질의가 없거나 self_ids 길이가 다르거나 인덱스에 없는 id
    """
    return float(np.mean(per_query_average_precision(index, queries, k, normalization, self_ids)))


def per_query_average_precision(
    index: EncodedIndex,
    queries: Sequence[Signature],
    k: int,
    normalization: Normalization = 'retrieved',
    self_ids: Optional[Sequence[Optional[int]]] = None,
) -> List[float]:
    """질의 순서대로 AP@k 목록"""
    if not queries:
        raise ValueError('At least one query is required')
    if self_ids is None:
        self_ids = [None] * len(queries)
    elif len(self_ids) != len(queries):
        raise ValueError(f'Got {len(self_ids)} self ids for {len(queries)} queries')
    positions = {item_id: position for position, item_id in enumerate(index.item_ids)}
    label_counts: dict[str, int] = {}
    for label in index.labels:
        label_counts[label] = label_counts.get(label, 0) + 1

    scores: List[float] = []
    for q, exclude in zip(queries, self_ids):
        relevant = label_counts.get(q.label, 0)
        if exclude is not None:
            if exclude not in positions:
                raise ValueError(f'Self id {exclude} is not in the index')
            relevant -= int(index.labels[positions[exclude]] == q.label)
        result = index.query(q, k, exclude=exclude)
        scores.append(average_precision_at_k(result, q.label, k, normalization, relevant))
    logger.debug('Evaluated %d queries at k=%d on %s', len(queries), k, index)
    return scores
