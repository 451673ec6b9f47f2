"""
인코더 구현체와 팩토리 테스트
"""

import logging

import numpy as np
import pytest

from featenc.base import EncoderType
from featenc.config import FisherConfig, LowRankConfig, MpcaConfig, RunConfig, SparseConfig, TsvdConfig
from featenc.encoders import (
    EncoderFactory,
    FisherEncoder,
    LowRankEncoder,
    MpcaEncoder,
    RawEncoder,
    SparseEncoder,
    TsvdEncoder,
)
from featenc.tensor import linearize


class TestEncoderFactory:
    """EncoderFactory 테스트"""

    def test_create_each_type(self):
        """모든 타입의 인코더 생성"""
        expected = {
            EncoderType.FISHER: FisherEncoder,
            EncoderType.SPARSE: SparseEncoder,
            EncoderType.TSVD: TsvdEncoder,
            EncoderType.MPCA: MpcaEncoder,
            EncoderType.LOWRANK: LowRankEncoder,
            EncoderType.RAW: RawEncoder,
        }
        for encoder_type, encoder_class in expected.items():
            encoder = EncoderFactory.create_encoder(encoder_type, seed=4)
            assert isinstance(encoder, encoder_class)
            assert encoder.encoder_type == encoder_type
            assert encoder.seed == 4

    def test_create_from_string(self):
        """문자열 타입으로도 생성"""
        assert isinstance(EncoderFactory.create_encoder('mpca'), MpcaEncoder)

    def test_unknown_type(self):
        """알 수 없는 타입은 오류"""
        with pytest.raises(ValueError, match='Unknown encoder type: cp'):
            EncoderFactory.create_encoder('cp')

    def test_register_encoder(self, monkeypatch):
        """등록한 클래스로 교체"""

        class ScaledRawEncoder(RawEncoder):
            def encode(self, image):
                return 2.0 * super().encode(image)

        monkeypatch.setitem(EncoderFactory._encoder_registry, EncoderType.RAW, RawEncoder)
        EncoderFactory.register_encoder(EncoderType.RAW, ScaledRawEncoder)
        assert isinstance(EncoderFactory.create_encoder(EncoderType.RAW), ScaledRawEncoder)

    def test_supported_types(self):
        """지원 타입 목록"""
        supported = EncoderFactory.get_supported_types()
        assert set(supported) == set(EncoderType)
        assert EncoderFactory.is_supported(EncoderType.TSVD)

    def test_config_class(self):
        """타입별 하위 설정 클래스"""
        assert EncoderFactory.config_class(EncoderType.FISHER) is FisherConfig
        assert EncoderFactory.config_class(EncoderType.LOWRANK) is LowRankConfig
        assert EncoderFactory.config_class(EncoderType.RAW) is None

    def test_from_run_config(self, small_config):
        """실행 설정의 하위 설정과 시드 사용"""
        encoder = EncoderFactory.from_run_config(small_config, EncoderType.SPARSE)
        assert isinstance(encoder, SparseEncoder)
        assert encoder.config.atoms == 12
        assert encoder.seed == 3

        default = EncoderFactory.from_run_config(RunConfig(seed=1, encoder=EncoderType.MPCA))
        assert isinstance(default, MpcaEncoder)


class TestEncoders:
    """인코더별 학습/인코딩 테스트"""

    def test_raw(self, small_corpus):
        """raw는 학습 없이 선형화"""
        encoder = RawEncoder(None)
        assert encoder.requires_training is False
        assert encoder.is_trained
        image = small_corpus.image(0)
        np.testing.assert_array_equal(encoder.encode(image), linearize(image))

    def test_fisher(self, small_corpus):
        """Fisher 시그니처 길이 2KD"""
        encoder = FisherEncoder(FisherConfig(components=2), seed=1)
        encoder.train(small_corpus)
        assert encoder.encode(small_corpus.image(0)).shape == (2 * 2 * 8,)

    def test_sparse(self, small_corpus):
        """희소 시그니처 길이 K_a (기본 2D)"""
        encoder = SparseEncoder(SparseConfig(sparsity=2, iterations=2), seed=1)
        encoder.train(small_corpus)
        assert encoder.dictionary.atom_count == 16
        assert encoder.encode(small_corpus.image(3)).shape == (16,)

    def test_tsvd(self, small_corpus):
        """t-SVD 투영 크기"""
        full = TsvdEncoder(TsvdConfig())
        full.train(small_corpus)
        assert full.encode(small_corpus.image(0)).shape == (9, 1, 8)

        truncated = TsvdEncoder(TsvdConfig(rank=3))
        truncated.train(small_corpus)
        assert truncated.encode(small_corpus.image(0)).shape == (3, 1, 8)

    def test_tsvd_rank_too_large(self, small_corpus):
        """rank가 H·W보다 크면 학습 오류"""
        with pytest.raises(ValueError, match='exceeds basis size'):
            TsvdEncoder(TsvdConfig(rank=10)).train(small_corpus)

    def test_mpca(self, small_corpus):
        """mPCA core 크기는 subspace dims"""
        encoder = MpcaEncoder(MpcaConfig(dims=[2, 2, 4]))
        encoder.train(small_corpus)
        assert encoder.encode(small_corpus.image(1)).shape == (2, 2, 4)

    def test_low_rank_components(self, small_corpus):
        """저랭크 성분 선택"""
        lengths = {'low_rank': 9 * 8, 'sparse': 9 * 8, 'concat': 2 * 9 * 8}
        for component, length in lengths.items():
            encoder = LowRankEncoder(LowRankConfig(rank=2, component=component))
            encoder.train(small_corpus)
            assert encoder.encode(small_corpus.image(2)).shape == (length,)

    def test_low_rank_clamps_rank(self, small_corpus, caplog):
        """r이 H·W보다 크면 H·W로 줄이고 경고"""
        encoder = LowRankEncoder(LowRankConfig(rank=20))
        with caplog.at_level(logging.WARNING, logger='featenc.encoders'):
            encoder.train(small_corpus)
        assert encoder.rank == 9
        assert 'exceeds H·W=9' in caplog.text

    def test_untrained_encode(self, small_corpus):
        """학습 전 인코딩은 오류"""
        for encoder_class in (FisherEncoder, SparseEncoder, TsvdEncoder, MpcaEncoder, LowRankEncoder):
            encoder = encoder_class()
            assert not encoder.is_trained
            with pytest.raises(ValueError, match='is not trained'):
                encoder.encode(small_corpus.image(0))

    def test_state_round_trip(self, small_corpus, small_config):
        """state/load_state로 같은 인코딩 복원"""
        for encoder_type in EncoderType:
            encoder = EncoderFactory.from_run_config(small_config, encoder_type)
            encoder.train(small_corpus)
            restored = EncoderFactory.create_encoder(encoder_type, encoder.config, encoder.seed)
            restored.load_state(encoder.state())
            image = small_corpus.image(4)
            np.testing.assert_array_equal(restored.encode(image), encoder.encode(image))
