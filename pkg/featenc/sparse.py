"""k-SVD 사전 학습과 OMP 희소 코딩

단위 노름 과완비(over-complete) 사전을 k-SVD로 학습하고, 지역 특징을
OMP로 희소 코딩한 뒤 계수 절댓값의 max pooling으로 이미지 시그니처를 만듭니다.
"""

import logging
from typing import Union

import numpy as np

from .base import (
    DescriptorSet,
    FloatArray,
    IndexArray,
    PooledSignature,
    SparseCode,
    SparseDictionary,
    descriptor_matrix,
)

logger = logging.getLogger(__name__)

# 잔차와 거의 직교하는 atom만 남으면 선택을 멈춤
_CORRELATION_EPS = 1e-12


def _check_sparsity(sparsity: int, dim: int, atom_count: int) -> None:
    if not 1 <= sparsity <= min(dim, atom_count):
        raise ValueError(f'Sparsity must be in [1, {min(dim, atom_count)}], got {sparsity}')


def batch_omp(
    atoms: FloatArray,
    signals: FloatArray,
    sparsity: int,
    res_tol: float = 0.0,
) -> tuple[IndexArray, FloatArray]:
    """여러 신호를 한 번에 OMP로 코딩

    각 단계에서 잔차와 상관(|⟨d_j, r⟩|)이 가장 큰 atom을 support에 추가하고
    (동률이면 작은 인덱스), support 전체에 대해 최소제곱으로 계수를 다시 맞춥니다.
    신호별로 sparsity개를 채우거나 잔차 노름이 res_tol 이하가 되면 멈춥니다.

    Args:
        atoms: D×K_a 단위 노름 사전
        signals: n×D 신호 행렬
        sparsity: 최대 support 크기
        res_tol: 잔차 노름 허용치

    Returns:
        (선택 순서의 support 인덱스 n×s, 해당 계수 n×s). 빈 자리는 -1과 0
    """
    dim, atom_count = atoms.shape
    signals = np.atleast_2d(np.asarray(signals, dtype=np.float64))
    if signals.shape[1] != dim:
        raise ValueError(f'Signal dimension {signals.shape[1]} does not match dictionary dimension {dim}')
    _check_sparsity(sparsity, dim, atom_count)

    n = signals.shape[0]
    gram = atoms.T @ atoms
    projections = signals @ atoms
    support = np.full((n, sparsity), -1, dtype=np.intp)
    coefficients = np.zeros((n, sparsity))
    residual = signals.copy()
    norms = np.linalg.norm(residual, axis=1)
    active = norms > res_tol

    for step in range(sparsity):
        rows = np.flatnonzero(active)
        if rows.size == 0:
            break
        correlation = np.abs(residual[rows] @ atoms)
        if step:
            np.put_along_axis(correlation, support[rows, :step], -1.0, axis=1)
        best = np.argmax(correlation, axis=1)
        strength = correlation[np.arange(rows.size), best]
        stalled = strength <= _CORRELATION_EPS * norms[rows]
        if stalled.any():
            active[rows[stalled]] = False
            rows, best = rows[~stalled], best[~stalled]
            if rows.size == 0:
                break

        support[rows, step] = best
        chosen = support[rows, : step + 1]
        sub_gram = gram[chosen[:, :, None], chosen[:, None, :]]
        rhs = np.take_along_axis(projections[rows], chosen, axis=1)
        fitted = np.linalg.solve(sub_gram, rhs[..., None])[..., 0]
        coefficients[rows, : step + 1] = fitted
        residual[rows] = signals[rows] - np.einsum('ns,nsd->nd', fitted, atoms.T[chosen])
        norms[rows] = np.linalg.norm(residual[rows], axis=1)
        active[rows] = norms[rows] > res_tol

    return support, coefficients


def dense_codes(support: IndexArray, coefficients: FloatArray, atom_count: int) -> FloatArray:
    """batch_omp 결과를 n×K_a 밀집 코드 행렬로 변환"""
    n, width = support.shape
    codes = np.zeros((n, atom_count))
    filled = support >= 0
    rows = np.repeat(np.arange(n), width).reshape(n, width)
    codes[rows[filled], support[filled]] = coefficients[filled]
    return codes


def omp(dictionary: SparseDictionary, t: FloatArray, sparsity: int, res_tol: float = 0.0) -> SparseCode:
    """지역 특징 하나를 OMP로 희소 코딩

    Raises:
        ValueError: 특징 차원이 다르거나 sparsity가 [1, min(D, K_a)] 밖
    """
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 1:
        raise ValueError(f'Descriptor must be a vector, got shape {t.shape}')
    support, coefficients = batch_omp(dictionary.atoms, t[None, :], sparsity, res_tol)
    chosen = support[0] >= 0
    indices = support[0][chosen]
    values = coefficients[0][chosen]
    order = np.argsort(indices)
    return SparseCode(
        support=tuple(int(i) for i in indices[order]),
        coefficients=tuple(float(c) for c in values[order]),
        ambient=dictionary.atom_count,
    )


def _initial_atoms(x: FloatArray, atom_count: int, seed: int) -> FloatArray:
    norms = np.linalg.norm(x, axis=1)
    candidates = np.flatnonzero(norms > 0.0)
    if candidates.size < atom_count:
        raise ValueError(f'Need at least {atom_count} nonzero training signals, got {candidates.size}')
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(candidates, size=atom_count, replace=False))
    return (x[rows] / norms[rows, None]).T.copy()


def ksvd_train(
    data: Union[DescriptorSet, FloatArray],
    k_atoms: int,
    sparsity: int,
    iters: int,
    seed: int = 0,
    res_tol: float = 0.0,
) -> SparseDictionary:
    """k-SVD로 단위 노름 사전을 학습

    각 sweep은 OMP 코딩 단계와 열별 갱신 단계로 이루어집니다. 열 k는 그 atom을
    쓰는 신호들로 제한한 오차 E_k의 rank-1 SVD로 갱신합니다 (d_k = u₀,
    계수 = σ₀v₀). 새 OMP 코드가 기존 코드보다 나쁜 신호는 기존 코드를 유지하므로
    sweep별 목적 함수 ‖T − Dφ‖_F는 증가하지 않습니다.

    Args:
        data: N×D 학습 지역 특징
        k_atoms: atom 개수 K_a
        sparsity: 신호당 최대 atom 수
        iters: sweep 횟수 (0이면 초기 사전 반환)
        seed: 초기 atom 선택 시드
        res_tol: OMP 잔차 허용치

    Returns:
        학습된 사전 (sweep별 목적 함수 기록 포함)

    Raises:
        ValueError: N < K_a 이거나 sparsity가 범위 밖
    """
    x = descriptor_matrix(data)
    n, dim = x.shape
    if n < k_atoms:
        raise ValueError(f'Need at least {k_atoms} training signals, got {n}')
    _check_sparsity(sparsity, dim, k_atoms)
    if iters < 0:
        raise ValueError(f'Iterations must be non-negative, got {iters}')

    atoms = _initial_atoms(x, k_atoms, seed)
    if iters == 0:
        return SparseDictionary(atoms=atoms)

    codes = np.zeros((n, k_atoms))
    residual = x.copy()
    errors = np.sum(residual * residual, axis=1)
    history: list[float] = []

    for sweep in range(iters):
        support, coefficients = batch_omp(atoms, x, sparsity, res_tol)
        fresh = dense_codes(support, coefficients, k_atoms)
        fresh_residual = x - fresh @ atoms.T
        fresh_errors = np.sum(fresh_residual * fresh_residual, axis=1)
        better = fresh_errors <= errors
        codes[better] = fresh[better]
        residual[better] = fresh_residual[better]

        replaced: set[int] = set()
        for j in range(k_atoms):
            users = np.flatnonzero(codes[:, j])
            if users.size == 0:
                # 쓰이지 않는 atom은 가장 설명이 안 되는 학습 신호로 교체
                ranking = np.argsort(-np.sum(residual * residual, axis=1), kind='stable')
                pick = next(int(i) for i in ranking if int(i) not in replaced and np.any(x[i]))
                replaced.add(pick)
                atoms[:, j] = x[pick] / np.linalg.norm(x[pick])
                continue
            restricted = residual[users] + np.outer(codes[users, j], atoms[:, j])
            left, singular, right = np.linalg.svd(restricted, full_matrices=False)
            atoms[:, j] = right[0]
            codes[users, j] = singular[0] * left[:, 0]
            residual[users] = restricted - np.outer(codes[users, j], atoms[:, j])

        if replaced:
            logger.warning('k-SVD sweep %d: replaced %d unused atom(s)', sweep, len(replaced))
        residual = x - codes @ atoms.T
        errors = np.sum(residual * residual, axis=1)
        history.append(float(np.sqrt(np.sum(errors))))
        logger.debug('k-SVD sweep %d objective %.10g', sweep, history[-1])

    return SparseDictionary(atoms=atoms, objective=tuple(history))


def encode_image_sparse(
    dictionary: SparseDictionary,
    image: Union[DescriptorSet, FloatArray],
    sparsity: int,
    res_tol: float = 0.0,
) -> PooledSignature:
    """이미지의 모든 지역 특징을 OMP로 코딩하고 atom별 |계수|의 최댓값으로 pooling

    Raises:
        ValueError: 지역 특징 집합이 비었거나 차원이 다름
    """
    matrix = image.descriptors if isinstance(image, DescriptorSet) else image
    if np.asarray(matrix).size == 0:
        raise ValueError('Cannot encode an empty descriptor set')
    x = descriptor_matrix(image)
    support, coefficients = batch_omp(dictionary.atoms, x, sparsity, res_tol)
    pooled = np.max(np.abs(dense_codes(support, coefficients, dictionary.atom_count)), axis=0)
    norm = float(np.linalg.norm(pooled))
    if norm == 0.0:
        return PooledSignature(values=pooled, normalized=False)
    return PooledSignature(values=pooled / norm, normalized=True)
