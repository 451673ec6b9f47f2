"""인코딩 실행 설정 관리

설정 파일 로드/저장 및 Pydantic 모델을 제공합니다.
CLI 플래그는 파일에서 읽은 값 위에 덮어씁니다.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, Field, field_validator

from .base import EncoderType


def _positive(name: str, v: int) -> int:
    if v < 1:
        raise ValueError(f'{name} must be positive')
    return v


class FisherConfig(BaseModel):
    """Fisher 벡터 / GMM(EM) 설정"""

    components: int = 16
    tol: float = 1e-5
    max_iter: int = 100
    variance_floor: float = 1e-4
    seeding_subsample: int = 10000
    max_train_descriptors: int = 50000
    weighted_posterior: bool = False

    @field_validator('components', 'max_iter', 'seeding_subsample', 'max_train_descriptors')
    @classmethod
    def validate_counts(cls, v: int) -> int:
        return _positive('Count', v)

    @field_validator('tol', 'variance_floor')
    @classmethod
    def validate_tolerances(cls, v: float) -> float:
        if v <= 0:
            raise ValueError('Tolerances must be positive')
        return v


class SparseConfig(BaseModel):
    """k-SVD / OMP 설정

    atoms가 None이면 특징 차원의 두 배(2D)를 사용합니다.
    """

    atoms: Optional[int] = None
    sparsity: int = 5
    iterations: int = 10
    residual_tol: float = 1e-10
    max_train_descriptors: int = 20000

    @field_validator('atoms')
    @classmethod
    def validate_atoms(cls, v: Optional[int]) -> Optional[int]:
        if v is not None:
            _positive('Atom count', v)
        return v

    @field_validator('sparsity', 'max_train_descriptors')
    @classmethod
    def validate_counts(cls, v: int) -> int:
        return _positive('Count', v)

    @field_validator('iterations')
    @classmethod
    def validate_iterations(cls, v: int) -> int:
        if v < 0:
            raise ValueError('Iterations must be non-negative')
        return v

    @field_validator('residual_tol')
    @classmethod
    def validate_residual_tol(cls, v: float) -> float:
        if v < 0:
            raise ValueError('Residual tolerance must be non-negative')
        return v

    def atom_count(self, dim: int) -> int:
        return self.atoms if self.atoms is not None else 2 * dim


class TsvdConfig(BaseModel):
    """t-SVD 투영 설정 (rank가 None이면 전체 투영)"""

    rank: Optional[int] = None

    @field_validator('rank')
    @classmethod
    def validate_rank(cls, v: Optional[int]) -> Optional[int]:
        if v is not None:
            _positive('Rank', v)
        return v


class MpcaConfig(BaseModel):
    """mPCA 설정

    dims를 지정하면 그대로 사용하고, 아니면 모드별 분산 비율 variance_ratio를
    만족하는 가장 작은 차원을 고릅니다.
    """

    variance_ratio: float = 0.97
    dims: Optional[List[int]] = None
    max_sweeps: int = 10
    tol: float = 1e-6

    @field_validator('variance_ratio')
    @classmethod
    def validate_variance_ratio(cls, v: float) -> float:
        if not 0.0 < v <= 1.0:
            raise ValueError('Variance ratio must be in (0, 1]')
        return v

    @field_validator('dims')
    @classmethod
    def validate_dims(cls, v: Optional[List[int]]) -> Optional[List[int]]:
        if v is not None:
            if not v:
                raise ValueError('Subspace dims cannot be empty')
            for d in v:
                _positive('Subspace dim', d)
        return v

    @field_validator('max_sweeps')
    @classmethod
    def validate_max_sweeps(cls, v: int) -> int:
        if v < 0:
            raise ValueError('Max sweeps must be non-negative')
        return v


class LowRankConfig(BaseModel):
    """저랭크 분할 설정 (검색 거리에 쓸 성분 선택 포함)"""

    rank: int = 16
    component: Literal['low_rank', 'sparse', 'concat'] = 'low_rank'

    @field_validator('rank')
    @classmethod
    def validate_rank(cls, v: int) -> int:
        return _positive('Rank', v)


class EvalConfig(BaseModel):
    """검색 평가 설정"""

    k: List[int] = Field(default_factory=lambda: [1, 5, 10])
    normalization: Literal['retrieved', 'min_relevant'] = 'retrieved'
    exclude_self: bool = False
    timing_repeats: int = 5

    @field_validator('k')
    @classmethod
    def validate_k(cls, v: List[int]) -> List[int]:
        if not v:
            raise ValueError('At least one k is required')
        for k in v:
            _positive('k', k)
        return v

    @field_validator('timing_repeats')
    @classmethod
    def validate_timing_repeats(cls, v: int) -> int:
        return _positive('Timing repeats', v)


class RunConfig(BaseModel):
    """인코딩/검색 실행 전체 설정

    seed는 기본값이 없으며 항상 명시해야 합니다.
    """

    version: str = '1.0'
    encoder: EncoderType = EncoderType.RAW
    seed: int
    fisher: FisherConfig = Field(default_factory=FisherConfig)
    sparse: SparseConfig = Field(default_factory=SparseConfig)
    tsvd: TsvdConfig = Field(default_factory=TsvdConfig)
    mpca: MpcaConfig = Field(default_factory=MpcaConfig)
    lowrank: LowRankConfig = Field(default_factory=LowRankConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    threads: int = 1
    report_path: Optional[str] = None
    model_file: Optional[str] = None

    @field_validator('version')
    @classmethod
    def validate_version(cls, v: str) -> str:
        """버전 유효성 검증"""
        if not v:
            raise ValueError('Version cannot be empty')
        return v

    @field_validator('seed')
    @classmethod
    def validate_seed(cls, v: int) -> int:
        if v < 0:
            raise ValueError('Seed must be non-negative')
        return v

    @field_validator('threads')
    @classmethod
    def validate_threads(cls, v: int) -> int:
        return _positive('Thread count', v)

    def encoder_config(self, encoder_type: Optional[EncoderType] = None) -> Optional[BaseModel]:
        """인코더 타입에 해당하는 하위 설정 반환 (raw는 None)"""
        encoder_type = encoder_type or self.encoder
        sections: Dict[EncoderType, BaseModel] = {
            EncoderType.FISHER: self.fisher,
            EncoderType.SPARSE: self.sparse,
            EncoderType.TSVD: self.tsvd,
            EncoderType.MPCA: self.mpca,
            EncoderType.LOWRANK: self.lowrank,
        }
        return sections.get(encoder_type)


class ConfigLoader:
    """설정 파일 로더"""

    @staticmethod
    def load_from_json(file_path: Union[str, Path]) -> RunConfig:
        """JSON 파일에서 설정 로드

        Args:
            file_path: JSON 파일 경로

        Returns:
            실행 설정

        Raises:
            FileNotFoundError: 파일이 존재하지 않음
            json.JSONDecodeError: JSON 파싱 오류
            ValueError: 설정 유효성 검증 오류
        """
        file_path = Path(file_path)
        if not file_path.exists():
            raise FileNotFoundError(f'Config file not found: {file_path}')

        with open(file_path, encoding='utf-8') as f:
            data = json.load(f)

        return ConfigLoader._parse_config_data(data)

    @staticmethod
    def load_from_yaml(file_path: Union[str, Path]) -> RunConfig:
        """YAML 파일에서 설정 로드

        Args:
            file_path: YAML 파일 경로

        Returns:
            실행 설정

        Raises:
            FileNotFoundError: 파일이 존재하지 않음
            yaml.YAMLError: YAML 파싱 오류
            ValueError: 설정 유효성 검증 오류
        """
        file_path = Path(file_path)
        if not file_path.exists():
            raise FileNotFoundError(f'Config file not found: {file_path}')

        with open(file_path, encoding='utf-8') as f:
            data = yaml.safe_load(f)

        return ConfigLoader._parse_config_data(data)

    @staticmethod
    def _parse_config_data(data: Optional[Dict[str, Any]]) -> RunConfig:
        """설정 데이터를 파싱하여 RunConfig 생성"""
        if not isinstance(data, dict):
            raise ValueError('Config root must be a mapping')
        return RunConfig(**data)

    @staticmethod
    def save_to_json(config: RunConfig, file_path: Union[str, Path]) -> None:
        """설정을 JSON 파일로 저장"""
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)

        with open(file_path, 'w', encoding='utf-8') as f:
            json.dump(config.model_dump(mode='json'), f, indent=2, ensure_ascii=False)

    @staticmethod
    def save_to_yaml(config: RunConfig, file_path: Union[str, Path]) -> None:
        """설정을 YAML 파일로 저장"""
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)

        with open(file_path, 'w', encoding='utf-8') as f:
            yaml.safe_dump(
                config.model_dump(mode='json'),
                f,
                default_flow_style=False,
                allow_unicode=True,
                sort_keys=False,
                indent=2,
            )

    @staticmethod
    def create_sample_config(seed: int = 0) -> RunConfig:
        """합성 코퍼스 평가용 샘플 설정 생성

        t-SVD와 저랭크는 상위 성분만 남기도록 잘라서 원본 텐서와 구분되게 합니다.
        """
        return RunConfig(
            encoder=EncoderType.MPCA,
            seed=seed,
            fisher=FisherConfig(components=16),
            sparse=SparseConfig(sparsity=5, iterations=10),
            tsvd=TsvdConfig(rank=2),
            mpca=MpcaConfig(dims=[2, 2, 32]),
            lowrank=LowRankConfig(rank=1),
        )


def load_config_from_file(file_path: Union[str, Path]) -> RunConfig:
    """파일 확장자에 따라 자동으로 설정 로드

    Raises:
        ValueError: 지원하지 않는 파일 형식
    """
    file_path = Path(file_path)
    suffix = file_path.suffix.lower()

    if suffix == '.json':
        return ConfigLoader.load_from_json(file_path)
    elif suffix in ['.yaml', '.yml']:
        return ConfigLoader.load_from_yaml(file_path)
    else:
        raise ValueError(f'Unsupported file format: {suffix}. Supported formats: .json, .yaml, .yml')


def save_config_to_file(config: RunConfig, file_path: Union[str, Path]) -> None:
    """파일 확장자에 따라 자동으로 설정 저장

    Raises:
        ValueError: 지원하지 않는 파일 형식
    """
    file_path = Path(file_path)
    suffix = file_path.suffix.lower()

    if suffix == '.json':
        ConfigLoader.save_to_json(config, file_path)
    elif suffix in ['.yaml', '.yml']:
        ConfigLoader.save_to_yaml(config, file_path)
    else:
        raise ValueError(f'Unsupported file format: {suffix}. Supported formats: .json, .yaml, .yml')
