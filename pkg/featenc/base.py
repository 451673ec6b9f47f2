"""특징 인코딩 시스템의 기본 구조 정의

NamedTuple을 상속한 불변 레코드들과 인코더 기본 인터페이스를 제공합니다.
배열 필드는 모두 float64 numpy 배열이며, 생성 이후에는 변경하지 않습니다.
"""

from abc import ABC, abstractmethod
from enum import StrEnum
from typing import Any, NamedTuple, Optional, Protocol

import numpy as np
from numpy.typing import NDArray

FloatArray = NDArray[np.float64]
IndexArray = NDArray[np.intp]


class EncoderType(StrEnum):
    """인코더 타입 열거형"""

    FISHER = 'fisher'
    SPARSE = 'sparse'
    TSVD = 'tsvd'
    MPCA = 'mpca'
    LOWRANK = 'lowrank'
    RAW = 'raw'


class DescriptorSet(NamedTuple):
    """한 이미지의 지역 특징 집합 (N×D, 행 하나가 t_i)"""

    descriptors: FloatArray
    source_id: Any = None

    @property
    def count(self) -> int:
        return int(self.descriptors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.descriptors.shape[1])

    @classmethod
    def from_tensor(cls, tensor: FloatArray, source_id: Any = None) -> 'DescriptorSet':
        """H×W×D 특징 텐서를 (H·W)×D 지역 특징 행렬로 변환

        픽셀 순서는 문서화된 선형화(첫 인덱스가 가장 빠름)를 따릅니다.
        """
        h, w, d = tensor.shape
        return cls(descriptors=np.reshape(tensor, (h * w, d), order='F'), source_id=source_id)

    def __str__(self) -> str:
        return f'DescriptorSet(N={self.count}, D={self.dim}, source={self.source_id!r})'


def descriptor_matrix(data: 'DescriptorSet | FloatArray') -> FloatArray:
    """DescriptorSet 또는 배열을 검증된 N×D float64 행렬로 변환

    Raises:
        ValueError: N×D 행렬이 아니거나 (N, D ≥ 1) 유한하지 않은 값을 포함
    """
    matrix = data.descriptors if isinstance(data, DescriptorSet) else data
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise ValueError(f'Descriptor matrix must be N×D with N, D ≥ 1, got shape {matrix.shape}')
    if not np.all(np.isfinite(matrix)):
        raise ValueError('Descriptor entries must be finite')
    return matrix


class GmmModel(NamedTuple):
    """대각 공분산 K 성분 GMM (ω_k, μ_k, σ²_k)"""

    weights: FloatArray
    means: FloatArray
    variances: FloatArray
    log_likelihood: tuple[float, ...] = ()

    @property
    def components(self) -> int:
        return int(self.means.shape[0])

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    def __str__(self) -> str:
        return f'GmmModel(K={self.components}, D={self.dim}, iterations={len(self.log_likelihood)})'


class FisherVector(NamedTuple):
    """길이 2KD Fisher 벡터"""

    values: FloatArray
    normalized: bool


class SparseDictionary(NamedTuple):
    """단위 노름 열(atom)을 가진 D×K_a 사전"""

    atoms: FloatArray
    objective: tuple[float, ...] = ()

    @property
    def atom_count(self) -> int:
        return int(self.atoms.shape[1])

    @property
    def dim(self) -> int:
        return int(self.atoms.shape[0])

    def __str__(self) -> str:
        return f'SparseDictionary(D={self.dim}, K_a={self.atom_count}, sweeps={len(self.objective)})'


class SparseCode(NamedTuple):
    """OMP 희소 코드 (정렬된 support와 해당 계수)"""

    support: tuple[int, ...]
    coefficients: tuple[float, ...]
    ambient: int

    def to_dense(self) -> FloatArray:
        dense = np.zeros(self.ambient)
        if self.support:
            dense[list(self.support)] = self.coefficients
        return dense


class PooledSignature(NamedTuple):
    """max pooling된 이미지 희소 시그니처"""

    values: FloatArray
    normalized: bool


class TsvdBasis(NamedTuple):
    """학습 집합의 t-SVD 직교 사전

    학습 이미지는 두 번째 인덱스로 쌓입니다: (H·W)×M×D.
    """

    u: FloatArray
    s: FloatArray
    mean: FloatArray
    v: Optional[FloatArray] = None

    def __str__(self) -> str:
        return f'TsvdBasis(u={self.u.shape}, mean={self.mean.shape}, has_v={self.v is not None})'


class MpcaModel(NamedTuple):
    """모드별 직교 투영 행렬과 학습 평균"""

    factors: tuple[FloatArray, ...]
    mean: FloatArray
    subspace_dims: tuple[int, ...]
    scatter_history: tuple[float, ...] = ()

    def __str__(self) -> str:
        return f'MpcaModel(input={self.mean.shape}, dims={self.subspace_dims}, sweeps={len(self.scatter_history)})'


class LowRankSplit(NamedTuple):
    """텐서의 저랭크 + 희소 분할 (𝒯 = ℒ + 𝒫)"""

    low_rank: FloatArray
    sparse: FloatArray
    r: int


class Signature(NamedTuple):
    """검색용 인코딩 결과 (거리 계산 시 평탄화)"""

    values: FloatArray
    item_id: int
    label: str


class RankedResult(NamedTuple):
    """거리 오름차순으로 정렬된 검색 결과"""

    item_ids: tuple[int, ...]
    distances: tuple[float, ...]
    labels: tuple[str, ...]

    def __str__(self) -> str:
        return f'RankedResult(top={len(self.item_ids)})'


class FeatureCorpus(NamedTuple):
    """메모리에 적재된 특징 텐서 모음

    tensors는 (M, H, W, D) 배열이며, label_ids는 label_names 테이블의 인덱스입니다.
    """

    tensors: FloatArray
    label_names: tuple[str, ...]
    label_ids: IndexArray

    @property
    def size(self) -> int:
        return int(self.tensors.shape[0])

    @property
    def image_shape(self) -> tuple[int, int, int]:
        _, h, w, d = self.tensors.shape
        return int(h), int(w), int(d)

    def image(self, index: int) -> FloatArray:
        return self.tensors[index]

    def label_of(self, index: int) -> str:
        return self.label_names[int(self.label_ids[index])]

    def labels(self) -> list[str]:
        return [self.label_of(i) for i in range(self.size)]

    def pooled_descriptors(self) -> FloatArray:
        """모든 이미지의 지역 특징을 하나의 (M·H·W)×D 행렬로 합침"""
        m, h, w, d = self.tensors.shape
        # 이미지 축은 유지하고 픽셀은 첫 인덱스가 빠른 순서로 펼침
        per_image = np.reshape(self.tensors, (m, h * w, d), order='F')
        return np.reshape(per_image, (m * h * w, d))

    def __str__(self) -> str:
        return f'FeatureCorpus(M={self.size}, shape={self.image_shape}, labels={len(self.label_names)})'


class EncoderInterface(Protocol):
    """인코더 인터페이스 프로토콜"""

    def train(self, corpus: FeatureCorpus) -> None:
        """학습 코퍼스로 인코더를 학습

        Args:
            corpus: 학습용 특징 코퍼스
        """
        ...

    def encode(self, image: FloatArray) -> FloatArray:
        """H×W×D 특징 텐서 하나를 평탄화된 시그니처로 인코딩

        Args:
            image: 인코딩할 특징 텐서

        Returns:
            l2 정규화 전 시그니처 값
        """
        ...


class BaseEncoder(ABC):
    """기본 인코더 추상 클래스"""

    encoder_type: EncoderType
    requires_training: bool = True
    config_class: Optional[type] = None

    def __init__(self, config: Any, seed: int = 0):
        self.config = config
        self.seed = seed

    @abstractmethod
    def train(self, corpus: FeatureCorpus) -> None:
        """학습 코퍼스로 인코더를 학습"""
        pass

    @abstractmethod
    def encode(self, image: FloatArray) -> FloatArray:
        """특징 텐서 하나를 시그니처로 인코딩"""
        pass

    @abstractmethod
    def state(self) -> dict[str, FloatArray]:
        """직렬화할 학습 상태 배열들을 반환"""
        pass

    @abstractmethod
    def load_state(self, arrays: dict[str, FloatArray]) -> None:
        """직렬화된 학습 상태를 복원"""
        pass

    @property
    @abstractmethod
    def is_trained(self) -> bool:
        """인코딩 가능한 상태인지 확인"""
        pass

    def _check_trained(self) -> None:
        if not self.is_trained:
            raise ValueError(f'{self.encoder_type.value} encoder is not trained')

    def __str__(self) -> str:
        return f'{self.__class__.__name__}(seed={self.seed}, trained={self.is_trained})'

    def __repr__(self) -> str:
        return self.__str__()
