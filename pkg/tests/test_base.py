"""
특징 인코딩 기본 구조 테스트
"""

import numpy as np
import pytest

from featenc import BaseEncoder, DescriptorSet, EncoderType, FeatureCorpus, RankedResult
from featenc.base import GmmModel, SparseCode, descriptor_matrix


class TestEncoderType:
    """EncoderType 열거형 테스트"""

    def test_encoder_type_values(self):
        """인코더 타입 값들이 올바른지 확인"""
        assert EncoderType.FISHER.value == 'fisher'
        assert EncoderType.SPARSE.value == 'sparse'
        assert EncoderType.TSVD.value == 'tsvd'
        assert EncoderType.MPCA.value == 'mpca'
        assert EncoderType.LOWRANK.value == 'lowrank'
        assert EncoderType.RAW.value == 'raw'

    def test_from_string(self):
        """문자열에서 생성"""
        assert EncoderType('mpca') is EncoderType.MPCA
        with pytest.raises(ValueError):
            EncoderType('cp')


class TestDescriptorSet:
    """DescriptorSet NamedTuple 테스트"""

    def test_from_tensor_pixel_order(self):
        """픽셀은 첫 인덱스가 빠른 순서로 행이 됨"""
        tensor = np.zeros((2, 3, 2))
        for i in range(2):
            for j in range(3):
                tensor[i, j] = [10 * i + j, -(10 * i + j)]
        descriptors = DescriptorSet.from_tensor(tensor, source_id='img').descriptors

        assert descriptors.shape == (6, 2)
        assert descriptors[:, 0].tolist() == [0, 10, 1, 11, 2, 12]

    def test_properties_and_str(self, rng):
        """count, dim, 문자열 표현"""
        descriptor_set = DescriptorSet(rng.normal(size=(5, 3)), source_id=4)
        assert descriptor_set.count == 5
        assert descriptor_set.dim == 3
        assert str(descriptor_set) == 'DescriptorSet(N=5, D=3, source=4)'

    def test_descriptor_matrix_validation(self):
        """N×D가 아니거나 유한하지 않으면 오류"""
        with pytest.raises(ValueError, match='N×D'):
            descriptor_matrix(np.zeros(3))
        with pytest.raises(ValueError, match='N×D'):
            descriptor_matrix(np.zeros((0, 3)))
        with pytest.raises(ValueError, match='finite'):
            descriptor_matrix(np.array([[np.nan, 1.0]]))


class TestRecords:
    """불변 레코드 테스트"""

    def test_sparse_code_to_dense(self):
        """support 위치에만 계수"""
        code = SparseCode(support=(1, 3), coefficients=(0.5, -2.0), ambient=5)
        assert code.to_dense().tolist() == [0.0, 0.5, 0.0, -2.0, 0.0]

    def test_gmm_model_str(self):
        """GmmModel 문자열 표현"""
        model = GmmModel(weights=np.ones(2) / 2, means=np.zeros((2, 3)), variances=np.ones((2, 3)))
        assert model.components == 2
        assert model.dim == 3
        assert str(model) == 'GmmModel(K=2, D=3, iterations=0)'

    def test_ranked_result_str(self):
        """RankedResult 문자열 표현"""
        result = RankedResult(item_ids=(3, 1), distances=(0.0, 1.0), labels=('a', 'b'))
        assert str(result) == 'RankedResult(top=2)'

    def test_records_are_immutable(self):
        """NamedTuple 필드는 재할당 불가"""
        result = RankedResult(item_ids=(1,), distances=(0.0,), labels=('a',))
        with pytest.raises(AttributeError):
            result.item_ids = (2,)  # type: ignore[misc]


class TestFeatureCorpus:
    """FeatureCorpus 테스트"""

    def test_accessors(self, small_corpus):
        """크기, 라벨, 이미지 접근"""
        assert small_corpus.size == 24
        assert small_corpus.image_shape == (3, 3, 8)
        assert small_corpus.image(5).shape == (3, 3, 8)
        assert small_corpus.label_of(0) == 'category_0'
        assert small_corpus.label_of(23) == 'category_3'
        assert len(small_corpus.labels()) == 24
        assert str(small_corpus) == 'FeatureCorpus(M=24, shape=(3, 3, 8), labels=4)'

    def test_pooled_descriptors(self, small_corpus):
        """이미지별 지역 특징을 이미지 순서대로 이어 붙임"""
        pooled = small_corpus.pooled_descriptors()
        assert pooled.shape == (24 * 9, 8)
        for index in (0, 7):
            expected = DescriptorSet.from_tensor(small_corpus.image(index)).descriptors
            np.testing.assert_array_equal(pooled[9 * index : 9 * (index + 1)], expected)

    def test_corpus_from_arrays(self):
        """배열로 직접 생성"""
        corpus = FeatureCorpus(tensors=np.zeros((2, 1, 1, 3)), label_names=('x',), label_ids=np.array([0, 0]))
        assert corpus.labels() == ['x', 'x']


class TestBaseEncoder:
    """BaseEncoder 추상 클래스 테스트"""

    def test_cannot_instantiate(self):
        """추상 클래스는 직접 생성 불가"""
        with pytest.raises(TypeError):
            BaseEncoder(None)  # type: ignore[abstract]
