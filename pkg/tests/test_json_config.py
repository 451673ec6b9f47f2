"""JSON 파일 설정 로딩 테스트"""

import json
import tempfile
from pathlib import Path

import pytest
from pydantic import ValidationError

from featenc.base import EncoderType
from featenc.config import ConfigLoader, RunConfig, load_config_from_file, save_config_to_file


class TestJsonConfigLoading:
    """JSON 파일 설정 로딩 테스트"""

    def test_load_simple_json_config(self):
        """간단한 JSON 설정 로딩 테스트"""
        config_data = {
            'version': '1.0',
            'encoder': 'fisher',
            'seed': 42,
            'fisher': {'components': 8, 'weighted_posterior': True},
            'eval': {'k': [1, 10], 'normalization': 'min_relevant'},
        }

        with tempfile.NamedTemporaryFile(mode='w', suffix='.json', delete=False) as f:
            json.dump(config_data, f, indent=2)
            f.flush()

            config = ConfigLoader.load_from_json(f.name)

            assert config.version == '1.0'
            assert config.encoder == EncoderType.FISHER
            assert config.seed == 42
            assert config.fisher.components == 8
            assert config.fisher.weighted_posterior is True
            assert config.eval.k == [1, 10]
            assert config.eval.normalization == 'min_relevant'

            # 지정하지 않은 섹션은 기본값
            assert config.sparse.sparsity == 5
            assert config.tsvd.rank is None
            assert config.lowrank.component == 'low_rank'

            # 파일 정리
            Path(f.name).unlink()

    def test_load_config_from_file_auto_detect_json(self):
        """확장자로 JSON 자동 감지"""
        with tempfile.NamedTemporaryFile(mode='w', suffix='.json', delete=False) as f:
            json.dump({'seed': 1, 'encoder': 'mpca', 'mpca': {'dims': [2, 2, 32]}}, f)
            f.flush()

            config = load_config_from_file(f.name)
            assert config.encoder == EncoderType.MPCA
            assert config.mpca.dims == [2, 2, 32]

            Path(f.name).unlink()

    def test_seed_required(self):
        """seed가 없으면 검증 오류"""
        with tempfile.NamedTemporaryFile(mode='w', suffix='.json', delete=False) as f:
            json.dump({'encoder': 'raw'}, f)
            f.flush()

            with pytest.raises(ValidationError, match='seed'):
                ConfigLoader.load_from_json(f.name)

            Path(f.name).unlink()

    def test_invalid_encoder(self):
        """알 수 없는 인코더 이름"""
        with tempfile.NamedTemporaryFile(mode='w', suffix='.json', delete=False) as f:
            json.dump({'seed': 1, 'encoder': 'cp'}, f)
            f.flush()

            with pytest.raises(ValidationError):
                ConfigLoader.load_from_json(f.name)

            Path(f.name).unlink()

    def test_invalid_values(self):
        """범위를 벗어난 값"""
        with pytest.raises(ValidationError, match='Variance ratio must be in'):
            RunConfig(seed=1, mpca={'variance_ratio': 1.5})
        with pytest.raises(ValidationError, match='Seed must be non-negative'):
            RunConfig(seed=-1)
        with pytest.raises(ValidationError, match='At least one k is required'):
            RunConfig(seed=1, eval={'k': []})
        with pytest.raises(ValidationError, match='must be positive'):
            RunConfig(seed=1, fisher={'components': 0})
        with pytest.raises(ValidationError):
            RunConfig(seed=1, lowrank={'component': 'both'})

    def test_invalid_json_format(self):
        """잘못된 JSON 형식"""
        with tempfile.NamedTemporaryFile(mode='w', suffix='.json', delete=False) as f:
            f.write('{"seed": 1,')
            f.flush()

            with pytest.raises(json.JSONDecodeError):
                ConfigLoader.load_from_json(f.name)

            Path(f.name).unlink()

    def test_non_mapping_root(self):
        """최상위가 객체가 아니면 오류"""
        with tempfile.NamedTemporaryFile(mode='w', suffix='.json', delete=False) as f:
            json.dump([1, 2], f)
            f.flush()

            with pytest.raises(ValueError, match='Config root must be a mapping'):
                ConfigLoader.load_from_json(f.name)

            Path(f.name).unlink()

    def test_file_not_found(self):
        """파일이 없으면 오류"""
        with pytest.raises(FileNotFoundError, match='Config file not found'):
            ConfigLoader.load_from_json('nonexistent.json')

    def test_unsupported_file_format(self):
        """지원하지 않는 파일 형식"""
        with pytest.raises(ValueError, match='Unsupported file format'):
            load_config_from_file('config.toml')
        with pytest.raises(ValueError, match='Unsupported file format'):
            save_config_to_file(RunConfig(seed=1), 'config.ini')


class TestJsonConfigSaving:
    """JSON 설정 저장 테스트"""

    def test_save_and_reload(self):
        """샘플 설정 저장 후 다시 읽으면 같은 설정"""
        config = ConfigLoader.create_sample_config(seed=9)

        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / 'nested' / 'config.json'
            save_config_to_file(config, path)
            loaded = load_config_from_file(path)

            assert loaded.model_dump() == config.model_dump()
            data = json.loads(path.read_text(encoding='utf-8'))
            assert data['encoder'] == 'mpca'
            assert data['tsvd'] == {'rank': 2}

    def test_sample_config(self):
        """샘플 설정 값"""
        config = ConfigLoader.create_sample_config(seed=3)
        assert config.seed == 3
        assert config.encoder == EncoderType.MPCA
        assert config.fisher.components == 16
        assert config.mpca.dims == [2, 2, 32]
        assert config.lowrank.rank == 1
        assert config.encoder_config(EncoderType.RAW) is None
        assert config.encoder_config(EncoderType.TSVD) is config.tsvd
