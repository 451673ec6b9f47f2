"""인코더 구현체들

각 인코딩 방식을 공통 인터페이스(train / encode / state)로 감싼 클래스와
인코더 생성 팩토리를 제공합니다. encode는 l2 정규화 전 값을 돌려주며,
정규화는 파이프라인이 모든 인코더에 동일하게 적용합니다.
"""

import logging
from typing import Dict, List, Optional, Type

import numpy as np
from pydantic import BaseModel

from .base import (
    BaseEncoder,
    DescriptorSet,
    EncoderType,
    FeatureCorpus,
    FloatArray,
    GmmModel,
    MpcaModel,
    SparseDictionary,
    TsvdBasis,
)
from .config import FisherConfig, LowRankConfig, MpcaConfig, RunConfig, SparseConfig, TsvdConfig
from .fisher import fisher_encode, train_gmm
from .multilinear import low_rank_project, mpca_project, mpca_train, tsvd_project, tsvd_train
from .sparse import encode_image_sparse, ksvd_train
from .tensor import linearize

logger = logging.getLogger(__name__)


def _training_descriptors(corpus: FeatureCorpus, limit: int, seed: int) -> FloatArray:
    """코퍼스 전체 지역 특징에서 최대 limit개를 고정 시드로 추출"""
    descriptors = corpus.pooled_descriptors()
    if descriptors.shape[0] <= limit:
        return descriptors
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(descriptors.shape[0], size=limit, replace=False))
    logger.debug('Subsampled %d of %d training descriptors', limit, descriptors.shape[0])
    return descriptors[rows]


class RawEncoder(BaseEncoder):
    """원본 특징 텐서를 그대로 평탄화하는 기준 인코더"""

    encoder_type = EncoderType.RAW
    requires_training = False
    config_class = None

    def train(self, corpus: FeatureCorpus) -> None:
        pass

    def encode(self, image: FloatArray) -> FloatArray:
        return linearize(image)

    def state(self) -> dict[str, FloatArray]:
        return {}

    def load_state(self, arrays: dict[str, FloatArray]) -> None:
        pass

    @property
    def is_trained(self) -> bool:
        return True


class FisherEncoder(BaseEncoder):
    """GMM 기반 Fisher 벡터 인코더 (시그니처 길이 2KD)"""

    encoder_type = EncoderType.FISHER
    config_class = FisherConfig

    def __init__(self, config: Optional[FisherConfig] = None, seed: int = 0):
        super().__init__(config or FisherConfig(), seed)
        self.model: Optional[GmmModel] = None

    def train(self, corpus: FeatureCorpus) -> None:
        x = _training_descriptors(corpus, self.config.max_train_descriptors, self.seed)
        self.model = train_gmm(x, self.config.components, self.config, self.seed)

    def encode(self, image: FloatArray) -> FloatArray:
        self._check_trained()
        descriptors = DescriptorSet.from_tensor(np.asarray(image, dtype=np.float64))
        return fisher_encode(self.model, descriptors, weighted_posterior=self.config.weighted_posterior).values

    def state(self) -> dict[str, FloatArray]:
        self._check_trained()
        return {'means': self.model.means, 'variances': self.model.variances, 'weights': self.model.weights}

    def load_state(self, arrays: dict[str, FloatArray]) -> None:
        self.model = GmmModel(weights=arrays['weights'], means=arrays['means'], variances=arrays['variances'])

    @property
    def is_trained(self) -> bool:
        return self.model is not None


class SparseEncoder(BaseEncoder):
    """k-SVD 사전과 OMP 코드의 max pooling 인코더"""

    encoder_type = EncoderType.SPARSE
    config_class = SparseConfig

    def __init__(self, config: Optional[SparseConfig] = None, seed: int = 0):
        super().__init__(config or SparseConfig(), seed)
        self.dictionary: Optional[SparseDictionary] = None

    def train(self, corpus: FeatureCorpus) -> None:
        x = _training_descriptors(corpus, self.config.max_train_descriptors, self.seed)
        self.dictionary = ksvd_train(
            x,
            self.config.atom_count(x.shape[1]),
            self.config.sparsity,
            self.config.iterations,
            seed=self.seed,
            res_tol=self.config.residual_tol,
        )

    def encode(self, image: FloatArray) -> FloatArray:
        self._check_trained()
        descriptors = DescriptorSet.from_tensor(np.asarray(image, dtype=np.float64))
        return encode_image_sparse(self.dictionary, descriptors, self.config.sparsity, self.config.residual_tol).values

    def state(self) -> dict[str, FloatArray]:
        self._check_trained()
        return {'atoms': self.dictionary.atoms}

    def load_state(self, arrays: dict[str, FloatArray]) -> None:
        self.dictionary = SparseDictionary(atoms=arrays['atoms'])

    @property
    def is_trained(self) -> bool:
        return self.dictionary is not None


class TsvdEncoder(BaseEncoder):
    """학습 집합 t-SVD 사전으로의 직교 투영 인코더"""

    encoder_type = EncoderType.TSVD
    config_class = TsvdConfig

    def __init__(self, config: Optional[TsvdConfig] = None, seed: int = 0):
        super().__init__(config or TsvdConfig(), seed)
        self.basis: Optional[TsvdBasis] = None

    def train(self, corpus: FeatureCorpus) -> None:
        self.basis = tsvd_train(corpus)
        rank = self.config.rank
        if rank is not None and rank > self.basis.u.shape[1]:
            raise ValueError(f'Projection rank {rank} exceeds basis size {self.basis.u.shape[1]}')

    def encode(self, image: FloatArray) -> FloatArray:
        self._check_trained()
        return tsvd_project(self.basis, image, self.config.rank)

    def state(self) -> dict[str, FloatArray]:
        self._check_trained()
        return {'mean': self.basis.mean, 's': self.basis.s, 'u': self.basis.u}

    def load_state(self, arrays: dict[str, FloatArray]) -> None:
        self.basis = TsvdBasis(u=arrays['u'], s=arrays['s'], mean=arrays['mean'])

    @property
    def is_trained(self) -> bool:
        return self.basis is not None


class MpcaEncoder(BaseEncoder):
    """mPCA core 텐서 투영 인코더"""

    encoder_type = EncoderType.MPCA
    config_class = MpcaConfig

    def __init__(self, config: Optional[MpcaConfig] = None, seed: int = 0):
        super().__init__(config or MpcaConfig(), seed)
        self.model: Optional[MpcaModel] = None

    def train(self, corpus: FeatureCorpus) -> None:
        self.model = mpca_train(
            corpus,
            q=self.config.variance_ratio,
            dims=self.config.dims,
            max_sweeps=self.config.max_sweeps,
            tol=self.config.tol,
        )
        logger.info('mPCA subspace dims %s', self.model.subspace_dims)

    def encode(self, image: FloatArray) -> FloatArray:
        self._check_trained()
        return mpca_project(self.model, image)

    def state(self) -> dict[str, FloatArray]:
        self._check_trained()
        arrays = {f'factor_{mode}': factor for mode, factor in enumerate(self.model.factors)}
        arrays['mean'] = self.model.mean
        return arrays

    def load_state(self, arrays: dict[str, FloatArray]) -> None:
        factors = tuple(arrays[f'factor_{mode}'] for mode in range(len(arrays) - 1))
        self.model = MpcaModel(
            factors=factors,
            mean=arrays['mean'],
            subspace_dims=tuple(int(f.shape[1]) for f in factors),
        )

    @property
    def is_trained(self) -> bool:
        return self.model is not None


class LowRankEncoder(BaseEncoder):
    """학습 집합 t-SVD 기반 저랭크 + 희소 분할 인코더

    이미지를 학습 기저의 앞쪽 r개 eigen-tuple로 분할하고, 설정에 따라 ℒ, 𝒫
    또는 둘을 이어 붙인 값을 시그니처로 씁니다. r이 H·W보다 크면 H·W로 줄입니다.
    """

    encoder_type = EncoderType.LOWRANK
    config_class = LowRankConfig

    def __init__(self, config: Optional[LowRankConfig] = None, seed: int = 0):
        super().__init__(config or LowRankConfig(), seed)
        self.basis: Optional[TsvdBasis] = None
        self.rank = self.config.rank

    def train(self, corpus: FeatureCorpus) -> None:
        self.basis = tsvd_train(corpus)
        self.rank = self._effective_rank(self.basis)

    def _effective_rank(self, basis: TsvdBasis) -> int:
        limit = int(basis.u.shape[1])
        if self.config.rank > limit:
            logger.warning('Truncation index %d exceeds H·W=%d; using %d', self.config.rank, limit, limit)
            return limit
        return self.config.rank

    def encode(self, image: FloatArray) -> FloatArray:
        self._check_trained()
        split = low_rank_project(self.basis, image, self.rank)
        if self.config.component == 'low_rank':
            return linearize(split.low_rank)
        if self.config.component == 'sparse':
            return linearize(split.sparse)
        return np.concatenate([linearize(split.low_rank), linearize(split.sparse)])

    def state(self) -> dict[str, FloatArray]:
        self._check_trained()
        return {'mean': self.basis.mean, 's': self.basis.s, 'u': self.basis.u}

    def load_state(self, arrays: dict[str, FloatArray]) -> None:
        self.basis = TsvdBasis(u=arrays['u'], s=arrays['s'], mean=arrays['mean'])
        self.rank = self._effective_rank(self.basis)

    @property
    def is_trained(self) -> bool:
        return self.basis is not None


class EncoderFactory:
    """인코더 생성 팩토리"""

    _encoder_registry: Dict[EncoderType, Type[BaseEncoder]] = {
        EncoderType.FISHER: FisherEncoder,
        EncoderType.SPARSE: SparseEncoder,
        EncoderType.TSVD: TsvdEncoder,
        EncoderType.MPCA: MpcaEncoder,
        EncoderType.LOWRANK: LowRankEncoder,
        EncoderType.RAW: RawEncoder,
    }

    @classmethod
    def register_encoder(cls, encoder_type: EncoderType, encoder_class: Type[BaseEncoder]):
        """새로운 인코더 타입 등록"""
        cls._encoder_registry[encoder_type] = encoder_class

    @classmethod
    def create_encoder(
        cls,
        encoder_type: EncoderType | str,
        config: Optional[BaseModel] = None,
        seed: int = 0,
    ) -> BaseEncoder:
        """인코더 타입과 하위 설정으로 인코더 생성

        Raises:
            ValueError: 알 수 없는 인코더 타입
        """
        try:
            encoder_type = EncoderType(encoder_type)
        except ValueError:
            raise ValueError(f'Unknown encoder type: {encoder_type}') from None
        encoder_class = cls._encoder_registry.get(encoder_type)
        if not encoder_class:
            raise ValueError(f'Unknown encoder type: {encoder_type}')
        return encoder_class(config, seed)

    @classmethod
    def from_run_config(cls, config: RunConfig, encoder_type: Optional[EncoderType] = None) -> BaseEncoder:
        """실행 설정에서 해당 인코더의 하위 설정과 시드를 꺼내 생성"""
        encoder_type = encoder_type or config.encoder
        return cls.create_encoder(encoder_type, config.encoder_config(encoder_type), config.seed)

    @classmethod
    def config_class(cls, encoder_type: EncoderType) -> Optional[Type[BaseModel]]:
        """인코더 타입의 하위 설정 클래스 (raw는 None)"""
        return cls._encoder_registry[EncoderType(encoder_type)].config_class

    @classmethod
    def get_supported_types(cls) -> List[EncoderType]:
        """지원하는 인코더 타입 목록 반환"""
        return list(cls._encoder_registry.keys())

    @classmethod
    def is_supported(cls, encoder_type: EncoderType) -> bool:
        """인코더 타입이 지원되는지 확인"""
        return encoder_type in cls._encoder_registry
