"""특징 파일, 모델 파일 입출력과 합성 코퍼스 생성

TENC 특징 파일 (모든 정수는 little-endian)::

    magic        4 bytes  b'TENC'
    version      u16      1
    H, W, D, M   u32 × 4
    label table  u32 개수, 각 항목은 u16 바이트 길이 + UTF-8 이름
    label index  u32 × M  (이미지별 label table 인덱스)
    payload      float64 × M·H·W·D  (이미지마다 첫 인덱스가 가장 빠른 순서)

TENM 모델/시그니처 컨테이너::

    magic        4 bytes  b'TENM'
    version      u16      1
    header size  u32
    header       UTF-8 JSON (키 정렬), 배열 이름/크기 목록 포함
    payload      float64 배열들을 header 순서대로 (첫 인덱스가 가장 빠른 순서)
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Sequence, Union

import numpy as np

from .base import BaseEncoder, EncoderType, FeatureCorpus, FloatArray, Signature
from .engine import EncodedIndex
from .encoders import EncoderFactory

logger = logging.getLogger(__name__)

FEATURE_MAGIC = b'TENC'
FEATURE_VERSION = 1
MODEL_MAGIC = b'TENM'
MODEL_VERSION = 1

_FLOAT = np.dtype('<f8')
_U32 = np.dtype('<u4')


class FeatureFileError(ValueError):
    """특징 파일 형식 오류 (문제가 된 바이트 위치 포함)"""

    def __init__(self, message: str, offset: int):
        super().__init__(f'{message} (at byte offset {offset})')
        self.offset = offset


class ModelFileError(ValueError):
    """모델/시그니처 컨테이너 형식 오류"""


class _Reader:
    """오프셋을 추적하는 바이트 버퍼 리더"""

    def __init__(self, buffer: bytes):
        self.buffer = buffer
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.buffer):
            raise FeatureFileError(
                f'Truncated {what}: need {size} bytes, {len(self.buffer) - self.offset} available', len(self.buffer)
            )
        chunk = self.buffer[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple[Any, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def _to_file_order(tensors: FloatArray) -> FloatArray:
    # (M, H, W, D) → 이미지별 첫 인덱스가 가장 빠른 순서
    return np.transpose(tensors, (0, 3, 2, 1))


def _from_file_order(data: FloatArray, m: int, h: int, w: int, d: int) -> FloatArray:
    return np.ascontiguousarray(np.transpose(np.reshape(data, (m, d, w, h)), (0, 3, 2, 1)), dtype=np.float64)


def encode_corpus(corpus: FeatureCorpus) -> bytes:
    """코퍼스를 TENC 바이트열로 직렬화

    Raises:
        ValueError: 텐서가 (M, H, W, D)가 아니거나 라벨 인덱스가 테이블 밖
    """
    if corpus.tensors.ndim != 4:
        raise ValueError(f'Corpus tensors must be (M, H, W, D), got shape {corpus.tensors.shape}')
    m, h, w, d = corpus.tensors.shape
    label_ids = np.asarray(corpus.label_ids)
    if label_ids.shape != (m,):
        raise ValueError(f'Expected {m} label ids, got shape {label_ids.shape}')
    if m and (label_ids.min() < 0 or label_ids.max() >= len(corpus.label_names)):
        raise ValueError('Label ids must reference the label table')

    parts = [FEATURE_MAGIC, struct.pack('<HIIII', FEATURE_VERSION, h, w, d, m)]
    parts.append(struct.pack('<I', len(corpus.label_names)))
    for name in corpus.label_names:
        encoded = name.encode('utf-8')
        if len(encoded) > 0xFFFF:
            raise ValueError(f'Label is too long: {name[:32]}...')
        parts.append(struct.pack('<H', len(encoded)) + encoded)
    parts.append(label_ids.astype(_U32).tobytes())
    parts.append(np.ascontiguousarray(_to_file_order(corpus.tensors), dtype=_FLOAT).tobytes())
    return b''.join(parts)


def decode_corpus(buffer: bytes) -> FeatureCorpus:
    """TENC 바이트열을 코퍼스로 복원

    Raises:
        FeatureFileError: magic/version 불일치, 잘린 파일, 잘못된 라벨, 남는 바이트
    """
    reader = _Reader(buffer)
    magic = reader.take(4, 'magic')
    if magic != FEATURE_MAGIC:
        raise FeatureFileError(f'Bad magic {magic!r}, expected {FEATURE_MAGIC!r}', 0)
    (version,) = reader.unpack('<H', 'version')
    if version != FEATURE_VERSION:
        raise FeatureFileError(f'Unsupported version {version}', 4)
    header_offset = reader.offset
    h, w, d, m = reader.unpack('<IIII', 'header')
    for index, (name, value) in enumerate(zip('HWDM', (h, w, d, m))):
        if value == 0:
            raise FeatureFileError(f'Extent {name} must be positive', header_offset + 4 * index)

    (count,) = reader.unpack('<I', 'label table')
    names: list[str] = []
    for _ in range(count):
        entry_offset = reader.offset
        (size,) = reader.unpack('<H', 'label length')
        raw = reader.take(size, 'label')
        try:
            names.append(raw.decode('utf-8'))
        except UnicodeDecodeError:
            raise FeatureFileError('Label is not valid UTF-8', entry_offset) from None

    index_offset = reader.offset
    label_ids = np.frombuffer(reader.take(4 * m, 'label index'), dtype=_U32).astype(np.intp)
    bad = np.flatnonzero(label_ids >= count)
    if bad.size:
        first = int(bad[0])
        raise FeatureFileError(f'Label index {label_ids[first]} outside table of {count}', index_offset + 4 * first)

    payload_size = m * h * w * d * _FLOAT.itemsize
    payload_offset = reader.offset
    data = np.frombuffer(reader.take(payload_size, 'payload'), dtype=_FLOAT)
    if reader.offset != len(buffer):
        extra = len(buffer) - reader.offset
        raise FeatureFileError(f'{extra} trailing bytes after payload', payload_offset + payload_size)

    return FeatureCorpus(
        tensors=_from_file_order(data, m, h, w, d),
        label_names=tuple(names),
        label_ids=label_ids,
    )


def ingest(path: Union[str, Path]) -> FeatureCorpus:
    """TENC 특징 파일을 읽어 코퍼스로 적재

    Raises:
        FileNotFoundError: 파일이 없음
        FeatureFileError: 파일 형식 오류
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f'Feature file not found: {path}')
    corpus = decode_corpus(path.read_bytes())
    logger.info('Ingested %s from %s', corpus, path)
    return corpus


def export(corpus: FeatureCorpus, path: Union[str, Path]) -> None:
    """코퍼스를 TENC 특징 파일로 저장 (ingest의 역연산)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_corpus(corpus))


def synth_corpus(
    categories: int,
    per_category: int,
    h: int,
    w: int,
    d: int,
    seed: int,
    stream: int = 0,
) -> FeatureCorpus:
    """범주별 대각 공분산 가우시안에서 지역 특징을 뽑아 합성 코퍼스 생성

    범주 분포(평균, 표준편차)는 seed에만 의존하고 이미지 표본은 (seed, stream)에
    의존합니다. 같은 seed에 stream만 바꾸면 같은 범주에서 새 이미지를 뽑습니다.

    Raises:
        ValueError: 크기 인자가 양수가 아님
    """
    for name, value in (('categories', categories), ('per_category', per_category), ('h', h), ('w', w), ('d', d)):
        if value < 1:
            raise ValueError(f'{name} must be positive, got {value}')

    params = np.random.default_rng(seed)
    means = params.normal(0.0, 0.3, size=(categories, d))
    stds = np.exp(params.uniform(np.log(0.4), np.log(2.5), size=(categories, d)))

    draws = np.random.default_rng([seed, stream])
    label_ids = np.repeat(np.arange(categories, dtype=np.intp), per_category)
    noise = draws.standard_normal((categories * per_category, h, w, d))
    tensors = means[label_ids][:, None, None, :] + stds[label_ids][:, None, None, :] * noise

    width = len(str(categories - 1))
    names = tuple(f'category_{c:0{width}d}' for c in range(categories))
    return FeatureCorpus(tensors=tensors, label_names=names, label_ids=label_ids)


def _pack_container(header: dict[str, Any], arrays: dict[str, FloatArray]) -> bytes:
    names = sorted(arrays)
    header = dict(header)
    header['arrays'] = [{'name': name, 'shape': list(np.shape(arrays[name]))} for name in names]
    encoded = json.dumps(header, sort_keys=True, separators=(',', ':')).encode('utf-8')
    parts = [MODEL_MAGIC, struct.pack('<HI', MODEL_VERSION, len(encoded)), encoded]
    for name in names:
        parts.append(np.asarray(arrays[name], dtype=_FLOAT).tobytes(order='F'))
    return b''.join(parts)


def _unpack_container(buffer: bytes) -> tuple[dict[str, Any], dict[str, FloatArray]]:
    if len(buffer) < 10 or buffer[:4] != MODEL_MAGIC:
        raise ModelFileError(f'Not a model container (magic {buffer[:4]!r})')
    version, size = struct.unpack('<HI', buffer[4:10])
    if version != MODEL_VERSION:
        raise ModelFileError(f'Unsupported model container version {version}')
    try:
        header = json.loads(buffer[10 : 10 + size].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelFileError(f'Corrupt model header: {e}') from None

    arrays: dict[str, FloatArray] = {}
    offset = 10 + size
    for entry in header.get('arrays', []):
        shape = tuple(int(n) for n in entry['shape'])
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * _FLOAT.itemsize
        if end > len(buffer):
            raise ModelFileError(f'Truncated array {entry["name"]!r}')
        data = np.frombuffer(buffer[offset:end], dtype=_FLOAT)
        arrays[entry['name']] = np.reshape(data, shape, order='F').astype(np.float64)
        offset = end
    if offset != len(buffer):
        raise ModelFileError(f'{len(buffer) - offset} trailing bytes in model container')
    return header, arrays


def save_model(encoder: BaseEncoder, path: Union[str, Path]) -> None:
    """학습된 인코더를 TENM 컨테이너로 저장 (같은 모델은 항상 같은 바이트)

    Raises:
        ValueError: 학습되지 않은 인코더
    """
    if not encoder.is_trained:
        raise ValueError(f'{encoder.encoder_type.value} encoder is not trained')
    config = encoder.config.model_dump(mode='json') if encoder.config is not None else None
    header = {'kind': 'model', 'encoder': encoder.encoder_type.value, 'config': config, 'seed': encoder.seed}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(_pack_container(header, encoder.state()))


def load_model(path: Union[str, Path]) -> BaseEncoder:
    """TENM 컨테이너에서 인코더 복원

    Raises:
        ModelFileError: 형식 오류 또는 모델이 아닌 컨테이너
    """
    header, arrays = _unpack_container(Path(path).read_bytes())
    if header.get('kind') != 'model':
        raise ModelFileError(f'Container holds {header.get("kind")!r}, expected a model')
    try:
        encoder_type = EncoderType(header['encoder'])
    except (KeyError, ValueError):
        raise ModelFileError(f'Unknown encoder in model header: {header.get("encoder")!r}') from None
    config_class = EncoderFactory.config_class(encoder_type)
    config = config_class(**header['config']) if config_class is not None and header.get('config') else None
    encoder = EncoderFactory.create_encoder(encoder_type, config, int(header.get('seed', 0)))
    encoder.load_state(arrays)
    return encoder


def save_signatures(index: EncodedIndex, path: Union[str, Path]) -> None:
    """인덱스의 시그니처들을 TENM 컨테이너로 저장 (모델 경로를 알면 헤더에 기록)"""
    header: dict[str, Any] = {
        'kind': 'signatures',
        'encoder': index.encoder_tag.value,
        'item_ids': list(index.item_ids),
        'labels': list(index.labels),
    }
    if index.model_path is not None:
        header['model'] = index.model_path
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(_pack_container(header, {'signatures': index.matrix}))


def load_signatures(path: Union[str, Path]) -> EncodedIndex:
    """TENM 컨테이너에서 인덱스 복원

    Raises:
        ModelFileError: 형식 오류 또는 시그니처가 아닌 컨테이너
    """
    header, arrays = _unpack_container(Path(path).read_bytes())
    if header.get('kind') != 'signatures' or 'signatures' not in arrays:
        raise ModelFileError(f'Container holds {header.get("kind")!r}, expected signatures')
    matrix = arrays['signatures']
    item_ids: Sequence[int] = header['item_ids']
    labels: Sequence[str] = header['labels']
    if not len(item_ids) == len(labels) == matrix.shape[0]:
        raise ModelFileError('Signature count does not match item ids and labels')
    signatures = [
        Signature(values=matrix[row], item_id=int(item_id), label=str(label))
        for row, (item_id, label) in enumerate(zip(item_ids, labels))
    ]
    model_path = header.get('model')
    return EncodedIndex(signatures, EncoderType(header['encoder']), str(model_path) if model_path else None)

