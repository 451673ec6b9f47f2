"""직교 다선형 사전: t-SVD, 저랭크 분할, mPCA

t-SVD는 tube 축 FFT 후 주파수 slice별 SVD로 계산합니다. 실수 텐서의 스펙트럼은
켤레 대칭이므로 절반(rfft)만 분해하고, 0번과 Nyquist slice는 실수 SVD를 사용해
역변환 결과가 정확히 실수가 되도록 합니다.

특이 벡터의 위상은 각 열의 첫 번째 0이 아닌 원소를 음이 아닌 실수로 맞춰
고정합니다. 같은 입력은 항상 같은 바이트의 기저를 만듭니다.
"""

import logging
from typing import Optional, Sequence, Union

import numpy as np
import tensorly as tl
from numpy.typing import NDArray
from scipy import fft as sp_fft

from .base import FeatureCorpus, FloatArray, LowRankSplit, MpcaModel, TsvdBasis
from .tensor import DenseTensor, Matrix, _require_order3, mode_n_product, t_product, t_transpose

logger = logging.getLogger(__name__)

ComplexArray = NDArray[np.complex128]

_PHASE_TOL = 1e-8
_SINGULAR_RTOL = 1e-12


def _real_slices(n3: int) -> list[int]:
    """rfft 결과 중 허수부가 0인 주파수 slice (DC와 짝수 길이의 Nyquist)"""
    slices = [0]
    if n3 % 2 == 0 and n3 > 1:
        slices.append(n3 // 2)
    return slices


def _leading_phase(vectors: ComplexArray) -> ComplexArray:
    """(slice, n, k) 배열의 각 열에서 첫 번째 0이 아닌 원소의 단위 위상 (0이면 1)"""
    first = np.argmax(np.abs(vectors) > _PHASE_TOL, axis=1)
    entry = np.take_along_axis(vectors, first[:, None, :], axis=1)[:, 0, :]
    size = np.abs(entry)
    return np.where(size > _PHASE_TOL, entry / np.where(size > 0.0, size, 1.0), 1.0)


def _fix_phase(u: ComplexArray, vh: Optional[ComplexArray] = None) -> None:
    """각 열의 첫 번째 0이 아닌 원소가 음이 아닌 실수가 되도록 위상 고정 (제자리 변경)

    u는 (slice, n1, ku), vh는 (slice, kv, n2) 배열입니다. 짝을 이루는 앞쪽
    min(ku, kv)개는 u 열에 conj(c)를, vh 행에 c를 곱하므로 u·S·vh는 변하지
    않습니다. 전체 행렬에서 짝이 없는 나머지 열과 행은 특이값이 0이라 따로 고정합니다.
    """
    phase = _leading_phase(u)
    u *= np.conj(phase)[:, None, :]
    if vh is None:
        return
    paired = min(u.shape[2], vh.shape[1])
    vh[:, :paired, :] *= phase[:, :paired, None]
    if vh.shape[1] > paired:
        # vh의 남는 행은 켤레 전치의 열 기준으로 고정
        extra = np.conj(np.transpose(vh[:, paired:, :], (0, 2, 1)))
        vh[:, paired:, :] *= _leading_phase(extra)[:, :, None]


def _spectral_svd(t: DenseTensor, full_matrices: bool) -> tuple[ComplexArray, FloatArray, ComplexArray]:
    """주파수 slice별 SVD (slice 축이 맨 앞)"""
    _, _, n3 = _require_order3(t, 'tsvd')
    spectrum = np.transpose(sp_fft.rfft(t, axis=2), (2, 0, 1))
    u, sing, vh = np.linalg.svd(spectrum, full_matrices=full_matrices)
    for f in _real_slices(n3):
        # 실수 slice는 실수 특이 벡터로 다시 분해
        ru, rs, rvh = np.linalg.svd(spectrum[f].real, full_matrices=full_matrices)
        u[f], sing[f], vh[f] = ru, rs, rvh
    _fix_phase(u, vh)
    return u, sing, vh


def _to_spatial(spectral: ComplexArray, n3: int) -> DenseTensor:
    """(slice, a, b) 스펙트럼을 a×b×n3 실수 텐서로 역변환"""
    return sp_fft.irfft(np.transpose(spectral, (1, 2, 0)), n=n3, axis=2)


def _f_diagonal(sing: FloatArray, rows: int, cols: int) -> ComplexArray:
    spectral = np.zeros((sing.shape[0], rows, cols), dtype=np.complex128)
    k = sing.shape[1]
    spectral[:, np.arange(k), np.arange(k)] = sing
    return spectral


def tsvd(t: DenseTensor, full_matrices: bool = False) -> tuple[DenseTensor, DenseTensor, DenseTensor]:
    """텐서 특이값 분해 𝒯 = 𝒰 * 𝒮 * 𝒱ᵀ

    Args:
        t: n1×n2×n3 텐서
        full_matrices: True면 정방 𝒰(n1×n1×n3), 𝒱(n2×n2×n3)를 반환,
            False면 k = min(n1, n2)인 축약형 반환

    Returns:
        (u, s, v). s는 f-diagonal이며 주파수 slice별 특이값은 내림차순

    Raises:
        ValueError: 3차 텐서가 아님
    """
    n1, n2, n3 = _require_order3(t, 'tsvd')
    u, sing, vh = _spectral_svd(t, full_matrices)
    rows, cols = (n1, n2) if full_matrices else (sing.shape[1], sing.shape[1])
    s = _f_diagonal(sing, rows, cols)
    v = np.conj(np.transpose(vh, (0, 2, 1)))
    return _to_spatial(u, n3), _to_spatial(s, n3), _to_spatial(v, n3)


def as_tube_column(image: FloatArray) -> DenseTensor:
    """H×W×D 특징 텐서를 (H·W)×1×D 구조로 변환 (픽셀 순서는 첫 인덱스가 빠름)"""
    image = np.asarray(image, dtype=np.float64)
    h, w, d = _require_order3(image, 'as_tube_column')
    return np.reshape(image, (h * w, 1, d), order='F')


def _stack_images(training: Union[FeatureCorpus, Sequence[FloatArray], FloatArray]) -> FloatArray:
    """학습 이미지를 (M, ...) 배열로 쌓음

    Raises:
        ValueError: 이미지가 없거나 크기가 서로 다름
    """
    if isinstance(training, FeatureCorpus):
        return training.tensors
    if isinstance(training, np.ndarray):
        if training.ndim < 2 or training.shape[0] < 1:
            raise ValueError(f'Training stack must be (M, ...) with M ≥ 1, got shape {training.shape}')
        return np.asarray(training, dtype=np.float64)
    images = [np.asarray(image, dtype=np.float64) for image in training]
    if not images:
        raise ValueError('At least one training image is required')
    shapes = {image.shape for image in images}
    if len(shapes) != 1:
        raise ValueError(f'Training images have inconsistent shapes: {sorted(shapes)}')
    return np.stack(images)


def tsvd_train(
    training: Union[FeatureCorpus, Sequence[FloatArray], FloatArray],
    keep_right: bool = False,
) -> TsvdBasis:
    """학습 이미지 전체의 t-SVD 직교 사전 학습

    이미지를 (H·W)×1×D로 바꿔 두 번째 인덱스로 쌓은 (H·W)×M×D 텐서에서
    평균을 빼고 분해합니다. 𝒰는 주파수 slice별 Gram 행렬 A_f A_fᴴ의 고유
    분해로 얻으며 항상 정방(n1×n1×n3)입니다. 𝒮는 n1×n1×n3 f-diagonal
    텐서입니다.

    Args:
        training: H×W×D 이미지 목록, (M, H, W, D) 배열 또는 FeatureCorpus
        keep_right: True면 전체 t-SVD로 𝒱(M×M×n3)와 n1×M×n3 𝒮를 함께 저장

    Returns:
        학습된 t-SVD 기저

    Raises:
        ValueError: 이미지가 없거나 크기가 서로 다름
    """
    stacked = _stack_images(training)
    if stacked.ndim != 4:
        raise ValueError(f'Training images must be H×W×D: order-3 required, got order {stacked.ndim - 1}')
    m, h, w, d = stacked.shape
    columns = np.reshape(stacked, (m, h * w, d), order='F')
    tensor = np.transpose(columns, (1, 0, 2))
    mean = np.mean(tensor, axis=1, keepdims=True)
    centered = tensor - mean

    if keep_right:
        u, s, v = tsvd(centered, full_matrices=True)
        logger.debug('Trained t-SVD basis with right factor: %s', u.shape)
        return TsvdBasis(u=u, s=s, mean=mean, v=v)

    n1, n3 = h * w, d
    spectrum = np.transpose(sp_fft.rfft(centered, axis=2), (2, 0, 1))
    gram = spectrum @ np.conj(np.transpose(spectrum, (0, 2, 1)))
    eigenvalues, vectors = np.linalg.eigh(gram)
    for f in _real_slices(n3):
        eigenvalues[f], vectors[f] = np.linalg.eigh(gram[f].real)
    eigenvalues, vectors = eigenvalues[:, ::-1], np.ascontiguousarray(vectors[:, :, ::-1])
    _fix_phase(vectors)
    sing = np.sqrt(np.clip(eigenvalues, 0.0, None))

    u = _to_spatial(vectors, n3)
    s = _to_spatial(_f_diagonal(sing, n1, n1), n3)
    logger.debug('Trained t-SVD basis u=%s from %d images', u.shape, m)
    return TsvdBasis(u=u, s=s, mean=mean)


def tsvd_project(basis: TsvdBasis, t: FloatArray, rank: Optional[int] = None) -> DenseTensor:
    """평균을 뺀 이미지를 직교 사전에 투영: 𝒰ᵀ * (𝒯 − 평균)

    Args:
        basis: 학습된 t-SVD 기저
        t: H×W×D 이미지 또는 (H·W)×1×D 텐서
        rank: 지정하면 앞쪽 rank개 행만 남김

    Returns:
        n1×1×n3 (또는 rank×1×n3) 투영 텐서

    Raises:
        ValueError: 크기가 기저와 다르거나 rank가 범위 밖
    """
    column = as_tube_column(t)
    if column.shape != basis.mean.shape:
        raise ValueError(f'Image shape {np.shape(t)} does not match basis mean {basis.mean.shape}')
    n1 = basis.u.shape[1]
    if rank is not None and not 1 <= rank <= n1:
        raise ValueError(f'Projection rank must be in [1, {n1}], got {rank}')
    u = basis.u if rank is None else basis.u[:, :rank]
    return t_product(t_transpose(u), column - basis.mean)


def low_rank_split(t: DenseTensor, r: int) -> LowRankSplit:
    """앞쪽 r개 eigen-tuple로 저랭크 ℒ을 만들고 나머지를 𝒫 = 𝒯 − ℒ로 분할

    Raises:
        ValueError: r이 [1, min(n1, n2)] 밖
    """
    n1, n2, n3 = _require_order3(t, 'low_rank_split')
    if not 1 <= r <= min(n1, n2):
        raise ValueError(f'Truncation index must be in [1, {min(n1, n2)}], got {r}')
    u, sing, vh = _spectral_svd(t, full_matrices=False)
    spectral = (u[:, :, :r] * sing[:, None, :r]) @ vh[:, :r, :]
    low_rank = _to_spatial(spectral, n3)
    return LowRankSplit(low_rank=low_rank, sparse=t - low_rank, r=r)


def low_rank_project(basis: TsvdBasis, t: FloatArray, r: int) -> LowRankSplit:
    """학습 집합 t-SVD 기저로 이미지 하나를 저랭크 + 희소로 분할

    평균을 뺀 이미지 열 X에 대해 ℒ = 𝒰_{1:r} * 𝒰ᵀ_{1:r} * X, 𝒫 = X − ℒ 입니다.
    학습 이미지라면 쌓은 텐서에 low_rank_split을 적용한 결과의 해당 열과 같습니다.

    Raises:
        ValueError: 크기가 기저와 다르거나 r이 [1, n1] 밖
    """
    column = as_tube_column(t)
    if column.shape != basis.mean.shape:
        raise ValueError(f'Image shape {np.shape(t)} does not match basis mean {basis.mean.shape}')
    n1 = basis.u.shape[1]
    if not 1 <= r <= n1:
        raise ValueError(f'Truncation index must be in [1, {n1}], got {r}')
    centered = column - basis.mean
    leading = basis.u[:, :r]
    low_rank = t_product(leading, t_product(t_transpose(leading), centered))
    return LowRankSplit(low_rank=low_rank, sparse=centered - low_rank, r=r)


def _mode_scatter(centered: FloatArray, mode: int) -> Matrix:
    """표본 축(0)을 제외한 mode의 scatter 행렬 Σ_m C_m(n) C_m(n)ᵀ"""
    moved = np.moveaxis(centered, mode + 1, 0)
    flat = np.reshape(moved, (moved.shape[0], -1))
    return flat @ flat.T


def _leading_eigenvectors(scatter: Matrix) -> tuple[FloatArray, Matrix]:
    eigenvalues, vectors = np.linalg.eigh(scatter)
    eigenvalues, vectors = eigenvalues[::-1], vectors[:, ::-1]
    # 절댓값이 가장 큰 원소가 양수가 되도록 부호 고정
    pivot = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivot, np.arange(vectors.shape[1])])
    return eigenvalues, vectors * np.where(signs == 0.0, 1.0, signs)


def _project_modes(centered: FloatArray, factors: Sequence[Matrix], skip: Optional[int] = None) -> FloatArray:
    result = centered
    for mode, factor in enumerate(factors):
        if mode != skip:
            result = mode_n_product(result, factor.T, mode + 1)
    return result


def _select_dims(eigenvalues: FloatArray, ratio: float) -> int:
    """누적 scatter 비율이 ratio 이상이 되는 가장 작은 차원"""
    spectrum = np.clip(eigenvalues, 0.0, None)
    total = float(np.sum(spectrum))
    if total == 0.0:
        return 1
    captured = np.cumsum(spectrum) / total
    return int(min(np.searchsorted(captured, ratio - 1e-12) + 1, spectrum.size))


def mpca_train(
    training: Union[FeatureCorpus, Sequence[FloatArray], FloatArray],
    q: float = 0.97,
    dims: Optional[Sequence[int]] = None,
    max_sweeps: int = 10,
    tol: float = 1e-6,
) -> MpcaModel:
    """mPCA: 전체 텐서 scatter를 최대화하는 모드별 투영 행렬 학습

    평균을 뺀 뒤 모드별 전체 scatter의 고유 벡터로 초기화하고, 다른 모드를
    고정한 채 한 모드씩 고유 분해로 갱신합니다. 포착 scatter의 상대 개선이
    tol 미만이거나 max_sweeps에 도달하면 멈춥니다.

    Args:
        training: 같은 크기의 학습 텐서들 (임의 차수)
        q: dims가 없을 때 모드별로 포착할 scatter 비율
        dims: 모드별 부분공간 차원
        max_sweeps: 최대 반복 횟수
        tol: 상대 개선 허용치

    Returns:
        학습된 모델 (초기값과 sweep별 포착 scatter 기록 포함)

    Raises:
        ValueError: M < 2, dims 개수가 차수와 다르거나 모드 크기를 넘음
    """
    stacked = _stack_images(training)
    m = stacked.shape[0]
    if m < 2:
        raise ValueError(f'mPCA needs at least 2 training tensors, got {m}')
    extents = stacked.shape[1:]
    order = len(extents)
    if dims is not None:
        dims = tuple(int(d) for d in dims)
        if len(dims) != order:
            raise ValueError(f'Expected {order} subspace dims, got {len(dims)}')
        for mode, (d, extent) in enumerate(zip(dims, extents)):
            if not 1 <= d <= extent:
                raise ValueError(f'Subspace dim {d} of mode {mode} exceeds extent {extent}')

    mean = np.mean(stacked, axis=0)
    centered = stacked - mean

    factors: list[Matrix] = []
    chosen: list[int] = []
    for mode in range(order):
        eigenvalues, vectors = _leading_eigenvectors(_mode_scatter(centered, mode))
        d = dims[mode] if dims is not None else _select_dims(eigenvalues, q)
        chosen.append(d)
        factors.append(np.ascontiguousarray(vectors[:, :d]))

    history = [float(np.sum(_project_modes(centered, factors) ** 2))]
    for sweep in range(max_sweeps):
        for mode in range(order):
            partial = _project_modes(centered, factors, skip=mode)
            _, vectors = _leading_eigenvectors(_mode_scatter(partial, mode))
            factors[mode] = np.ascontiguousarray(vectors[:, : chosen[mode]])
        captured = float(np.sum(_project_modes(centered, factors) ** 2))
        previous = history[-1]
        history.append(captured)
        logger.debug('mPCA sweep %d captured scatter %.10g', sweep, captured)
        if captured - previous <= tol * abs(previous):
            break

    return MpcaModel(factors=tuple(factors), mean=mean, subspace_dims=tuple(chosen), scatter_history=tuple(history))


def mpca_project(model: MpcaModel, t: FloatArray) -> DenseTensor:
    """평균을 뺀 텐서에 모든 모드의 Aᵀ를 곱해 core 텐서로 투영

    Raises:
        ValueError: 크기가 모델과 다름
    """
    t = np.asarray(t, dtype=np.float64)
    if t.shape != model.mean.shape:
        raise ValueError(f'Tensor shape {t.shape} does not match model shape {model.mean.shape}')
    core = t - model.mean
    for mode, factor in enumerate(model.factors):
        core = mode_n_product(core, factor.T, mode)
    return core


def tucker_reconstruct(core: DenseTensor, factors: Sequence[Matrix]) -> DenseTensor:
    """Tucker 재구성 𝒢 ×₁ A⁽¹⁾ ×₂ A⁽²⁾ … ×_N A⁽ᴺ⁾

    Raises:
        ValueError: 인자 행렬 개수가 차수와 다르거나 열 개수가 core 크기와 다름
    """
    core = np.asarray(core, dtype=np.float64)
    if len(factors) != core.ndim:
        raise ValueError(f'Expected {core.ndim} factor matrices, got {len(factors)}')
    matrices = [np.asarray(factor, dtype=np.float64) for factor in factors]
    for mode, matrix in enumerate(matrices):
        if matrix.ndim != 2 or matrix.shape[1] != core.shape[mode]:
            raise ValueError(f'Factor {mode} has shape {matrix.shape}, expected {core.shape[mode]} columns')
    return np.asarray(tl.tucker_to_tensor((core, matrices)), dtype=np.float64)


def mpca_reconstruct(model: MpcaModel, core: DenseTensor) -> DenseTensor:
    """core를 평균이 제거된 입력 공간으로 역투영"""
    return tucker_reconstruct(core, model.factors)
