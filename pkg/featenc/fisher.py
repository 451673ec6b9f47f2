"""GMM 학습과 Fisher 벡터 인코딩

대각 공분산 GMM을 EM으로 학습하고, 이미지의 지역 특징 집합을
평균/분산 편미분을 이어 붙인 2KD 차원 Fisher 벡터로 인코딩합니다.
"""

import logging
from typing import Optional, Union

import numpy as np
from scipy.special import logsumexp
from sklearn.cluster import kmeans_plusplus

from .base import DescriptorSet, FisherVector, FloatArray, GmmModel, descriptor_matrix
from .config import FisherConfig

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))
MONOTONE_SLACK = 1e-9
_CHUNK_ROWS = 4096
_MIN_MASS = 1e-8


def _squared_mahalanobis(x: FloatArray, means: FloatArray, variances: FloatArray) -> FloatArray:
    """(N, K) 대각 마할라노비스 거리 제곱 (행 단위로 나눠 계산)"""
    inverse = 1.0 / variances
    out = np.empty((x.shape[0], means.shape[0]))
    for start in range(0, x.shape[0], _CHUNK_ROWS):
        block = x[start : start + _CHUNK_ROWS]
        diff = block[:, None, :] - means[None, :, :]
        out[start : start + _CHUNK_ROWS] = np.einsum('nkd,kd->nk', diff * diff, inverse)
    return out


def _log_gaussians(x: FloatArray, means: FloatArray, variances: FloatArray) -> FloatArray:
    log_det = np.sum(np.log(variances), axis=1) + means.shape[1] * LOG_2PI
    return -0.5 * (_squared_mahalanobis(x, means, variances) + log_det[None, :])


def _log_posteriors(x: FloatArray, model: GmmModel, weighted: bool) -> FloatArray:
    if weighted:
        log_joint = _log_gaussians(x, model.means, model.variances) + np.log(model.weights)[None, :]
    else:
        # 가중치와 정규화 상수 없이 지수 항만 비교
        log_joint = -0.5 * _squared_mahalanobis(x, model.means, model.variances)
    return log_joint - logsumexp(log_joint, axis=1, keepdims=True)


def _posteriors(x: FloatArray, model: GmmModel, weighted: bool) -> FloatArray:
    q = np.exp(_log_posteriors(x, model, weighted))
    return q / np.sum(q, axis=1, keepdims=True)


def gmm_log_likelihood(model: GmmModel, data: Union[DescriptorSet, FloatArray]) -> float:
    """데이터의 표본당 평균 로그 우도"""
    x = descriptor_matrix(data)
    log_joint = _log_gaussians(x, model.means, model.variances) + np.log(model.weights)[None, :]
    return float(np.mean(logsumexp(log_joint, axis=1)))


def soft_assign(model: GmmModel, t: FloatArray, weighted_posterior: bool = False) -> FloatArray:
    """지역 특징 하나의 성분별 soft assignment q_k

    기본값은 혼합 가중치 없이 지수 항만 정규화하는 형태이며,
    ``weighted_posterior=True``이면 ω_k N(t; μ_k, Σ_k) 사후 확률을 사용합니다.

    Args:
        model: 학습된 GMM
        t: 길이 D의 지역 특징
        weighted_posterior: 가중치 포함 사후 확률 사용 여부

    Returns:
        합이 1인 길이 K 벡터

    Raises:
        ValueError: 특징 차원이 모델과 다름
    """
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 1 or t.shape[0] != model.dim:
        raise ValueError(f'Descriptor dimension {t.shape} does not match model dimension {model.dim}')
    return _posteriors(t[None, :], model, weighted_posterior)[0]


def _variance_floor(x: FloatArray, ratio: float) -> FloatArray:
    global_variance = np.var(x, axis=0)
    # 상수 차원은 절대 하한을 사용
    return np.where(global_variance > 0.0, ratio * global_variance, ratio)


def _initial_means(x: FloatArray, k: int, subsample: int, seed: int) -> FloatArray:
    rng = np.random.default_rng(seed)
    size = min(x.shape[0], max(subsample, k))
    rows = np.sort(rng.choice(x.shape[0], size=size, replace=False))
    centers, _ = kmeans_plusplus(x[rows], n_clusters=k, random_state=seed)
    return np.asarray(centers, dtype=np.float64)


def train_gmm(
    data: Union[DescriptorSet, FloatArray],
    k: int,
    config: Optional[FisherConfig] = None,
    seed: int = 0,
) -> GmmModel:
    """EM으로 대각 공분산 GMM 학습

    고정 시드 부분 표본에서 k-means++로 평균을 초기화한 뒤 EM을 반복합니다.
    상대 로그 우도 개선이 ``config.tol`` 미만이거나 ``config.max_iter``에
    도달하면 멈춥니다. 분산은 전역 차원별 분산의 ``config.variance_floor``
    배 이상으로 유지됩니다.

    Args:
        data: 학습 코퍼스 전체에서 모은 지역 특징
        k: 성분 개수
        config: EM 설정
        seed: 초기화 시드

    Returns:
        학습된 GMM (반복별 평균 로그 우도 기록 포함)

    Raises:
        ValueError: k < 1 또는 표본 수 < k
        RuntimeError: 로그 우도가 감소함
    """
    if k < 1:
        raise ValueError(f'Component count must be positive, got {k}')
    config = config or FisherConfig(components=k)
    x = descriptor_matrix(data)
    n, d = x.shape
    if k > n:
        raise ValueError(f'Component count {k} exceeds sample count {n}')

    floor = _variance_floor(x, config.variance_floor)
    base_variance = np.maximum(np.var(x, axis=0), floor)
    means = _initial_means(x, k, config.seeding_subsample, seed)
    variances = np.tile(base_variance, (k, 1))
    weights = np.full(k, 1.0 / k)

    history: list[float] = []
    reseeded = False
    for iteration in range(config.max_iter):
        log_joint = _log_gaussians(x, means, variances) + np.log(weights)[None, :]
        log_norm = logsumexp(log_joint, axis=1)
        ll = float(np.mean(log_norm))

        if history and not reseeded:
            previous = history[-1]
            if ll < previous - MONOTONE_SLACK * max(abs(previous), 1.0):
                raise RuntimeError(f'EM log-likelihood decreased at iteration {iteration}: {previous} -> {ll}')
            history.append(ll)
            if ll - previous < config.tol * abs(previous):
                break
        else:
            history.append(ll)
        reseeded = False

        # M-step
        resp = np.exp(log_joint - log_norm[:, None])
        mass = np.sum(resp, axis=0)
        degenerate = np.flatnonzero(mass <= _MIN_MASS)
        safe_mass = np.where(mass > _MIN_MASS, mass, 1.0)
        means = (resp.T @ x) / safe_mass[:, None]
        for j in range(k):
            diff = x - means[j]
            variances[j] = (resp[:, j] @ (diff * diff)) / safe_mass[j]
        variances = np.maximum(variances, floor)

        if degenerate.size:
            # 가장 설명이 안 되는 표본으로 빈 성분을 다시 심음
            worst = np.argsort(log_norm, kind='stable')[: degenerate.size]
            means[degenerate] = x[worst]
            variances[degenerate] = base_variance
            mass[degenerate] = 1.0
            reseeded = True
            logger.warning(
                'EM iteration %d: re-seeded %d empty component(s) %s', iteration, degenerate.size, degenerate.tolist()
            )
        weights = mass / np.sum(mass)

    logger.debug('Trained GMM K=%d D=%d in %d iterations, log-likelihood %.6f', k, d, len(history), history[-1])
    return GmmModel(weights=weights, means=means, variances=variances, log_likelihood=tuple(history))


def sample_gmm(model: GmmModel, n: int, seed: int = 0) -> FloatArray:
    """모델에서 n개의 지역 특징을 표본 추출"""
    rng = np.random.default_rng(seed)
    components = rng.choice(model.components, size=n, p=model.weights)
    noise = rng.standard_normal((n, model.dim))
    return model.means[components] + np.sqrt(model.variances[components]) * noise


def fisher_encode(
    model: GmmModel,
    image: Union[DescriptorSet, FloatArray],
    weighted_posterior: bool = False,
    normalize: bool = True,
) -> FisherVector:
    """지역 특징 집합을 2KD 차원 Fisher 벡터로 인코딩

    성분 순서대로 평균 편미분 블록 K개를 먼저, 분산 편미분 블록 K개를
    이어서 배치합니다. 평균 블록은 1/(N√ω_k), 분산 블록은 1/(N√(2ω_k))로
    스케일합니다.

    Args:
        model: 학습된 GMM
        image: 이미지 하나의 지역 특징
        weighted_posterior: soft assignment에 가중치 포함 사후 확률 사용
        normalize: l2 정규화 여부

    Returns:
        Fisher 벡터. 노름이 0이면 정규화하지 않고 ``normalized=False``로 반환
    """
    x = descriptor_matrix(image)
    n, d = x.shape
    if d != model.dim:
        raise ValueError(f'Descriptor dimension {d} does not match model dimension {model.dim}')

    q = _posteriors(x, model, weighted_posterior)
    sigma = np.sqrt(model.variances)
    mean_sum = np.zeros_like(model.means)
    variance_sum = np.zeros_like(model.means)
    for start in range(0, n, _CHUNK_ROWS):
        block = x[start : start + _CHUNK_ROWS]
        weights = q[start : start + _CHUNK_ROWS]
        diff = (block[:, None, :] - model.means[None, :, :]) / sigma[None, :, :]
        mean_sum += np.einsum('nk,nkd->kd', weights, diff)
        variance_sum += np.einsum('nk,nkd->kd', weights, diff * diff - 1.0)

    mean_block = mean_sum / (n * np.sqrt(model.weights))[:, None]
    variance_block = variance_sum / (n * np.sqrt(2.0 * model.weights))[:, None]
    values = np.concatenate([mean_block.ravel(), variance_block.ravel()])

    if not normalize:
        return FisherVector(values=values, normalized=False)
    norm = float(np.linalg.norm(values))
    if norm == 0.0:
        return FisherVector(values=values, normalized=False)
    return FisherVector(values=values / norm, normalized=True)
