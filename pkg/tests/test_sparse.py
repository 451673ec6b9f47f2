"""k-SVD 사전 학습과 OMP 희소 코딩 테스트"""

import logging
import math

import numpy as np
import pytest

from featenc.base import DescriptorSet, SparseDictionary
from featenc.sparse import batch_omp, dense_codes, encode_image_sparse, ksvd_train, omp


def random_dictionary(rng, dim, atoms):
    matrix = rng.normal(size=(dim, atoms))
    return SparseDictionary(atoms=matrix / np.linalg.norm(matrix, axis=0))


class TestOmp:
    """OMP 희소 코딩 테스트"""

    def test_exact_atom(self, rng):
        """atom 하나와 같은 특징 → support {j}, 계수 1"""
        dictionary = random_dictionary(rng, 20, 50)
        code = omp(dictionary, dictionary.atoms[:, 7], 3, res_tol=1e-10)

        assert code.support == (7,)
        assert code.coefficients[0] == pytest.approx(1.0, abs=1e-12)
        assert code.ambient == 50

    def test_orthonormal_basis(self, rng):
        """정방 직교 사전, s=D → 코드는 Dᵀt"""
        q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
        t = rng.normal(size=6)
        code = omp(SparseDictionary(atoms=q), t, 6)

        np.testing.assert_allclose(code.to_dense(), q.T @ t, atol=1e-10)

    def test_planted_support_recovery(self, rng):
        """3-희소 신호 100개 중 95개 이상 support 복원"""
        recovered = 0
        for _ in range(100):
            dictionary = random_dictionary(rng, 20, 50)
            support = np.sort(rng.choice(50, size=3, replace=False))
            magnitudes = np.array([4.0, 2.0, 1.0]) * rng.uniform(1.0, 1.25, size=3)
            coefficients = rng.choice([-1.0, 1.0], size=3) * magnitudes
            t = dictionary.atoms[:, support] @ coefficients
            code = omp(dictionary, t, 3)
            recovered += int(code.support == tuple(int(i) for i in support))
        assert recovered >= 95

    def test_residual_orthogonal_to_support(self, rng):
        """최종 잔차는 선택된 atom들과 직교"""
        dictionary = random_dictionary(rng, 20, 50)
        for _ in range(10):
            t = rng.normal(size=20)
            code = omp(dictionary, t, 5)
            selected = dictionary.atoms[:, list(code.support)]
            residual = t - selected @ np.array(code.coefficients)
            assert np.max(np.abs(selected.T @ residual)) <= 1e-8

    def test_support_sorted_and_unique(self, rng):
        """support는 정렬되고 중복 없음"""
        dictionary = random_dictionary(rng, 8, 16)
        code = omp(dictionary, rng.normal(size=8), 8)
        assert list(code.support) == sorted(set(code.support))
        assert len(code.support) <= 8

    def test_zero_descriptor(self, rng):
        """0 특징 → 빈 support"""
        code = omp(random_dictionary(rng, 5, 10), np.zeros(5), 3)
        assert code.support == ()
        assert not np.any(code.to_dense())

    def test_residual_norm_decreases(self, rng):
        """sparsity를 늘릴수록 잔차가 줄어듦"""
        dictionary = random_dictionary(rng, 12, 30)
        t = rng.normal(size=12)
        norms = []
        for s in range(1, 6):
            code = omp(dictionary, t, s)
            norms.append(float(np.linalg.norm(t - dictionary.atoms @ code.to_dense())))
        assert all(later < earlier for earlier, later in zip(norms, norms[1:]))

    def test_sparsity_out_of_range(self, rng):
        """sparsity가 [1, min(D, K_a)] 밖이면 오류"""
        dictionary = random_dictionary(rng, 5, 10)
        with pytest.raises(ValueError, match='Sparsity must be in'):
            omp(dictionary, np.ones(5), 0)
        with pytest.raises(ValueError, match='Sparsity must be in'):
            omp(dictionary, np.ones(5), 6)

    def test_batch_matches_single(self, rng):
        """batch_omp는 신호별 omp와 같은 코드"""
        dictionary = random_dictionary(rng, 10, 25)
        signals = rng.normal(size=(15, 10))
        support, coefficients = batch_omp(dictionary.atoms, signals, 4)
        codes = dense_codes(support, coefficients, 25)
        for row, signal in enumerate(signals):
            np.testing.assert_allclose(codes[row], omp(dictionary, signal, 4).to_dense(), atol=1e-12)


class TestKsvd:
    """k-SVD 사전 학습 테스트"""

    @pytest.fixture
    def planted(self, rng):
        truth = random_dictionary(rng, 20, 32).atoms
        codes = np.zeros((32, 2000))
        for column in range(2000):
            rows = rng.choice(32, size=3, replace=False)
            codes[rows, column] = rng.normal(size=3)
        return truth, (truth @ codes).T

    def test_objective_monotone(self, planted):
        """30 sweep 동안 목적 함수가 증가하지 않음"""
        _, x = planted
        dictionary = ksvd_train(x, 32, 3, 30, seed=4)

        assert len(dictionary.objective) == 30
        for earlier, later in zip(dictionary.objective, dictionary.objective[1:]):
            assert later <= earlier + 1e-9 * max(earlier, 1.0)

    def test_planted_atoms_recovered(self, planted):
        """심어둔 atom의 80% 이상을 |cos| ≥ 0.99로 복원"""
        truth, x = planted
        dictionary = ksvd_train(x, 32, 3, 30, seed=4)

        cosines = np.abs(truth.T @ dictionary.atoms)
        assert np.sum(np.max(cosines, axis=1) >= 0.99) >= 0.8 * 32

    def test_unused_atom_replaced(self, monkeypatch, caplog):
        """중복 초기 atom은 쓰이지 않아 가장 설명이 안 되는 신호로 교체됨"""
        scales = np.arange(1.0, 21.0)
        x = np.concatenate([np.outer(scales, axis) for axis in np.eye(3)])
        start = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
        monkeypatch.setattr('featenc.sparse._initial_atoms', lambda data, atom_count, seed: start.copy())

        with caplog.at_level(logging.WARNING, logger='featenc.sparse'):
            dictionary = ksvd_train(x, 3, 1, 3)

        assert 'k-SVD sweep 0: replaced 1 unused atom(s)' in caplog.text
        np.testing.assert_allclose(np.linalg.norm(dictionary.atoms, axis=0), 1.0, atol=1e-10)
        # 교체된 atom이 세 번째 축을 덮어 모든 신호가 정확히 표현됨
        assert np.max(np.abs(dictionary.atoms[2])) == pytest.approx(1.0, abs=1e-10)
        assert dictionary.objective[-1] == pytest.approx(0.0, abs=1e-8)
        for earlier, later in zip(dictionary.objective, dictionary.objective[1:]):
            assert later <= earlier + 1e-9 * max(earlier, 1.0)

    def test_unit_norm_atoms(self, rng):
        """모든 atom은 단위 노름"""
        dictionary = ksvd_train(rng.normal(size=(300, 6)), 12, 2, 5, seed=1)
        np.testing.assert_allclose(np.linalg.norm(dictionary.atoms, axis=0), 1.0, atol=1e-10)

    def test_zero_iterations_returns_initialization(self, rng):
        """iters=0 → 정규화된 학습 신호 중에서 고른 사전"""
        x = rng.normal(size=(40, 5))
        dictionary = ksvd_train(x, 8, 2, 0, seed=3)

        normalized = x / np.linalg.norm(x, axis=1, keepdims=True)
        for column in dictionary.atoms.T:
            assert np.min(np.linalg.norm(normalized - column, axis=1)) <= 1e-12
        assert dictionary.objective == ()

    def test_reproducible(self, rng):
        """같은 시드는 같은 사전"""
        x = rng.normal(size=(100, 4))
        first = ksvd_train(x, 8, 2, 3, seed=9)
        second = ksvd_train(x, 8, 2, 3, seed=9)
        np.testing.assert_array_equal(first.atoms, second.atoms)

    def test_too_few_signals(self, rng):
        """N < K_a이면 오류"""
        with pytest.raises(ValueError, match='training signals'):
            ksvd_train(rng.normal(size=(5, 4)), 8, 2, 1)


class TestPooledSignature:
    """max pooling 시그니처 테스트"""

    def test_one_hot(self, rng):
        """atom j와 같은 특징 하나 → j 위치 one-hot"""
        dictionary = random_dictionary(rng, 10, 20)
        signature = encode_image_sparse(dictionary, dictionary.atoms[:, 4][None, :], 3, res_tol=1e-10)

        expected = np.zeros(20)
        expected[4] = 1.0
        np.testing.assert_allclose(signature.values, expected, atol=1e-12)
        assert signature.normalized is True

    def test_disjoint_atoms(self, rng):
        """서로 다른 atom {1}, {5} → 두 위치 모두 1/√2"""
        dictionary = random_dictionary(rng, 10, 20)
        descriptors = np.stack([dictionary.atoms[:, 1], dictionary.atoms[:, 5]])
        signature = encode_image_sparse(dictionary, descriptors, 3, res_tol=1e-10)

        assert signature.values[1] == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-12)
        assert signature.values[5] == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-12)
        assert np.linalg.norm(signature.values) == pytest.approx(1.0, abs=1e-10)

    def test_duplication_and_permutation_invariant(self, rng):
        """행 중복과 순서에 무관"""
        dictionary = random_dictionary(rng, 6, 12)
        x = rng.normal(size=(7, 6))
        base = encode_image_sparse(dictionary, DescriptorSet(x), 3).values
        doubled = encode_image_sparse(dictionary, np.vstack([x, x]), 3).values
        shuffled = encode_image_sparse(dictionary, x[rng.permutation(7)], 3).values
        np.testing.assert_allclose(doubled, base, atol=1e-14)
        np.testing.assert_allclose(shuffled, base, atol=1e-14)

    def test_empty_descriptor_set(self, rng):
        """빈 특징 집합은 오류"""
        with pytest.raises(ValueError, match='empty descriptor set'):
            encode_image_sparse(random_dictionary(rng, 4, 8), np.zeros((0, 4)), 2)
