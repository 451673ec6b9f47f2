"""밀집 텐서 다선형 대수 기본 연산

모든 텐서는 float64 numpy 배열이며, 문서화된 선형화 순서는 column-major
(``order='F'``, 첫 인덱스가 가장 빠름)입니다. 모든 함수는 순수 함수이고
입력을 변경하지 않습니다.

t-product는 항상 tube 축(3번째 축) FFT로 계산합니다. 실수 입력의 켤레 대칭을
이용해 절반 스펙트럼(rfft)만 저장하고 계산합니다.
"""

import logging
from typing import Sequence

import numpy as np
import tensorly as tl
from numpy.typing import NDArray
from scipy import fft as sp_fft, linalg as sp_linalg

from .base import FloatArray

logger = logging.getLogger(__name__)

DenseTensor = FloatArray
Matrix = FloatArray
TubeSpectrum = NDArray[np.complex128]

IMAG_RESIDUE_TOL = 1e-10


def _require_order3(t: DenseTensor, op: str) -> tuple[int, int, int]:
    if t.ndim != 3:
        raise ValueError(f'{op}: order-3 required, got order {t.ndim}')
    n1, n2, n3 = t.shape
    return int(n1), int(n2), int(n3)


def _require_matrix(m: Matrix, op: str) -> None:
    if m.ndim != 2:
        raise ValueError(f'{op}: matrix required, got order {m.ndim}')


def linearize(t: DenseTensor) -> FloatArray:
    """텐서를 문서화된 순서(첫 인덱스가 가장 빠름)의 1차원 데이터로 변환"""
    return np.ravel(np.asarray(t, dtype=np.float64), order='F')


def delinearize(data: FloatArray, dims: Sequence[int]) -> DenseTensor:
    """1차원 데이터를 주어진 크기의 텐서로 복원

    Raises:
        ValueError: 크기 곱과 데이터 길이가 다름
    """
    dims = tuple(int(d) for d in dims)
    if any(d <= 0 for d in dims):
        raise ValueError(f'Extents must be positive: {dims}')
    if int(np.prod(dims)) != data.size:
        raise ValueError(f'Data length {data.size} does not match extents {dims}')
    return np.reshape(np.asarray(data, dtype=np.float64), dims, order='F')


def frobenius_norm(t: DenseTensor) -> float:
    """Frobenius 노름 (평탄화한 벡터의 l2 노름)"""
    return float(np.linalg.norm(np.ravel(t)))


def nuclear_norm(m: Matrix) -> float:
    """핵(trace) 노름: 특이값의 합

    Raises:
        ValueError: 행렬이 아니거나 유한하지 않은 값을 포함
    """
    _require_matrix(m, 'nuclear_norm')
    if not np.all(np.isfinite(m)):
        raise ValueError('nuclear_norm: entries must be finite')
    return float(np.sum(sp_linalg.svdvals(m)))


def unfold_tube(t: DenseTensor) -> Matrix:
    """frontal slice들을 세로로 쌓아 (n1·n3)×n2 행렬로 변환"""
    n1, n2, n3 = _require_order3(t, 'unfold_tube')
    return np.reshape(np.transpose(t, (2, 0, 1)), (n3 * n1, n2))


def fold_tube(m: Matrix, dims: Sequence[int]) -> DenseTensor:
    """unfold_tube의 역연산

    Raises:
        ValueError: 행렬 크기가 dims와 맞지 않음
    """
    _require_matrix(m, 'fold_tube')
    if len(dims) != 3:
        raise ValueError(f'fold_tube: order-3 required, got dims {tuple(dims)}')
    n1, n2, n3 = (int(d) for d in dims)
    if m.shape != (n1 * n3, n2):
        raise ValueError(f'fold_tube: matrix shape {m.shape} does not match dims {(n1, n2, n3)}')
    return np.transpose(np.reshape(m, (n3, n1, n2)), (1, 2, 0)).copy()


def circ(t: DenseTensor) -> Matrix:
    """블록 순환 행렬 생성: 블록 (i, j)는 frontal slice ((i − j) mod n3)"""
    n1, n2, n3 = _require_order3(t, 'circ')
    steps = np.arange(n3)
    blocks = t[:, :, (steps[:, None] - steps[None, :]) % n3]
    return np.reshape(np.transpose(blocks, (2, 0, 3, 1)), (n3 * n1, n3 * n2))


def tube_fft(t: DenseTensor) -> TubeSpectrum:
    """각 tube(mode-3 fiber)의 이산 푸리에 변환"""
    _require_order3(t, 'tube_fft')
    return sp_fft.fft(t, axis=2)


def tube_ifft(spectrum: TubeSpectrum) -> DenseTensor:
    """tube 스펙트럼을 실수 텐서로 역변환

    Raises:
        ValueError: 허수부 잔차가 허용치(상대 1e-10)를 넘음
    """
    if spectrum.ndim != 3:
        raise ValueError(f'tube_ifft: order-3 required, got order {spectrum.ndim}')
    restored = sp_fft.ifft(spectrum, axis=2)
    scale = float(np.max(np.abs(restored))) if restored.size else 0.0
    residue = float(np.max(np.abs(restored.imag))) if restored.size else 0.0
    if scale > 0.0 and residue > IMAG_RESIDUE_TOL * scale:
        raise ValueError(
            f'tube_ifft: imaginary residue {residue:.3e} exceeds tolerance (spectrum is not conjugate symmetric)'
        )
    return np.ascontiguousarray(restored.real)


def tube_identity(n: int, n3: int) -> DenseTensor:
    """t-product 항등원: 첫 frontal slice가 단위 행렬, 나머지는 0"""
    identity = np.zeros((n, n, n3))
    identity[:, :, 0] = np.eye(n)
    return identity


def _spectral_matmul(a: NDArray[np.complex128], b: NDArray[np.complex128]) -> NDArray[np.complex128]:
    # 주파수 축이 마지막인 스펙트럼을 slice별로 곱함
    product = np.matmul(np.transpose(a, (2, 0, 1)), np.transpose(b, (2, 0, 1)))
    return np.transpose(product, (1, 2, 0))


def t_product(t1: DenseTensor, t2: DenseTensor) -> DenseTensor:
    """t-product 𝒯₁ * 𝒯₂ (n1×n2×n3 * n2×m×n3 → n1×m×n3)

    tube FFT 후 주파수 slice별 복소 행렬곱을 하고 역변환합니다.

    Raises:
        ValueError: 내부 크기 또는 tube 길이가 다름
    """
    n1, n2, n3 = _require_order3(t1, 't_product')
    k2, _, k3 = _require_order3(t2, 't_product')
    if k2 != n2 or k3 != n3:
        raise ValueError(f't_product: dimension mismatch {t1.shape} * {t2.shape}')
    spectrum = _spectral_matmul(sp_fft.rfft(t1, axis=2), sp_fft.rfft(t2, axis=2))
    return sp_fft.irfft(spectrum, n=n3, axis=2)


def t_product_circulant(t1: DenseTensor, t2: DenseTensor) -> DenseTensor:
    """정의식 fold(circ(𝒯₁)·unfold(𝒯₂))로 계산한 t-product (검증용)"""
    n1, n2, n3 = _require_order3(t1, 't_product_circulant')
    k2, m, k3 = _require_order3(t2, 't_product_circulant')
    if k2 != n2 or k3 != n3:
        raise ValueError(f't_product_circulant: dimension mismatch {t1.shape} * {t2.shape}')
    return fold_tube(circ(t1) @ unfold_tube(t2), (n1, m, n3))


def t_transpose(t: DenseTensor) -> DenseTensor:
    """텐서 전치: 각 frontal slice를 전치하고 slice 1..n3−1의 순서를 뒤집음"""
    _, _, n3 = _require_order3(t, 't_transpose')
    order = [0, *range(n3 - 1, 0, -1)]
    return np.transpose(t, (1, 0, 2))[:, :, order]


def tubal_rank(t: DenseTensor, tol: float = 1e-10) -> int:
    """0이 아닌 eigen-tuple 개수 (최대 특이값 대비 상대 허용치)"""
    _require_order3(t, 'tubal_rank')
    spectrum = np.transpose(sp_fft.rfft(t, axis=2), (2, 0, 1))
    singular = np.linalg.svd(spectrum, compute_uv=False)
    top = float(np.max(singular)) if singular.size else 0.0
    if top == 0.0:
        return 0
    return int(np.max(np.sum(singular > tol * top, axis=1)))


def mode_n_product(t: DenseTensor, a: Matrix, mode: int) -> DenseTensor:
    """n-mode 곱 𝒯 ×ₙ A

    Raises:
        ValueError: cols(A)와 mode 크기가 다르거나 mode가 범위를 벗어남
    """
    _require_matrix(a, 'mode_n_product')
    if not 0 <= mode < t.ndim:
        raise ValueError(f'mode_n_product: mode {mode} out of range for order {t.ndim}')
    if a.shape[1] != t.shape[mode]:
        raise ValueError(f'mode_n_product: matrix {a.shape} does not match extent {t.shape[mode]} of mode {mode}')
    return np.asarray(tl.tenalg.mode_dot(t, a, mode), dtype=np.float64)


def unfold(t: DenseTensor, mode: int) -> Matrix:
    """mode-n 행렬화 (열 순서는 문서화된 선형화를 따름)

    tensorly.unfold는 나머지 축을 행 우선으로 펼쳐 열 순서가 다르므로 직접 계산합니다.
    """
    if not 0 <= mode < t.ndim:
        raise ValueError(f'unfold: mode {mode} out of range for order {t.ndim}')
    return np.reshape(np.moveaxis(t, mode, 0), (t.shape[mode], -1), order='F')


def fold(m: Matrix, mode: int, dims: Sequence[int]) -> DenseTensor:
    """unfold의 역연산"""
    dims = tuple(int(d) for d in dims)
    moved = (dims[mode], *dims[:mode], *dims[mode + 1 :])
    if m.size != int(np.prod(dims)) or m.shape[0] != dims[mode]:
        raise ValueError(f'fold: matrix {m.shape} does not match dims {dims} at mode {mode}')
    return np.moveaxis(np.reshape(m, moved, order='F'), 0, mode)


def cp_reconstruct(factors: Sequence[Matrix]) -> DenseTensor:
    """CP 재구성: R개의 rank-1 외적 텐서 합

    Raises:
        ValueError: 인자 행렬이 없거나 열 개수 R이 서로 다름
    """
    if not factors:
        raise ValueError('cp_reconstruct: at least one factor matrix required')
    for factor in factors:
        _require_matrix(factor, 'cp_reconstruct')
    ranks = {int(f.shape[1]) for f in factors}
    if len(ranks) != 1 or 0 in ranks:
        raise ValueError(f'cp_reconstruct: factor column counts differ or are zero: {sorted(ranks)}')
    weights = np.ones(ranks.pop())
    matrices = [np.asarray(f, dtype=np.float64) for f in factors]
    return np.asarray(tl.cp_to_tensor((weights, matrices)), dtype=np.float64)
