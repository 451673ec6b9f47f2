"""featenc 명령줄 인터페이스

하위 명령: synth, train, encode, index, query, eval, report.
플래그는 설정 파일 값 위에 덮어쓰며, 모든 난수는 ``--seed``로 고정합니다.
사용법 오류는 종료 코드 2, 실행 중 오류는 stderr에 ``error: ...``를 출력하고 1입니다.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .base import EncoderType, Signature
from .config import RunConfig, load_config_from_file
from .engine import EncodedIndex, l2_normalize
from .io import export, ingest, load_model, load_signatures, save_model, save_signatures, synth_corpus
from .pipeline import (
    TABLE_ORDER,
    encode_corpus_signatures,
    format_table,
    load_report,
    run_table,
    save_report,
    train_encoder,
)

logger = logging.getLogger(__name__)

ALL_ENCODERS = 'all'


def _int_list(value: str) -> List[int]:
    try:
        return [int(part) for part in value.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected comma-separated integers, got {value!r}') from None


def _add_run_flags(parser: argparse.ArgumentParser, encoder_choices: Sequence[str]) -> None:
    parser.add_argument('--config', type=Path, help='JSON/YAML run config')
    parser.add_argument('--seed', type=int, help='random seed (required unless set in --config)')
    parser.add_argument('--encoder', choices=list(encoder_choices))
    parser.add_argument('--components', type=int, help='Fisher GMM components K')
    parser.add_argument('--atoms', type=int, help='k-SVD atom count')
    parser.add_argument('--sparsity', type=int, help='OMP sparsity s')
    parser.add_argument('--iterations', type=int, help='k-SVD sweeps')
    parser.add_argument('--tsvd-rank', type=int, help='t-SVD projection rank')
    parser.add_argument('--variance-ratio', type=float, help='mPCA per-mode scatter ratio q')
    parser.add_argument('--dims', type=_int_list, help='mPCA subspace dims, e.g. 2,2,32')
    parser.add_argument('--rank', type=int, help='low-rank truncation index r')
    parser.add_argument('--component', choices=['low_rank', 'sparse', 'concat'], help='low-rank signature')
    parser.add_argument('--threads', type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='featenc', description='Deep feature tensor encoding and retrieval')
    parser.add_argument('-v', '--verbose', action='count', default=0)
    sub = parser.add_subparsers(dest='command')

    synth = sub.add_parser('synth', help='generate a synthetic feature file')
    synth.add_argument('--out', type=Path, required=True)
    synth.add_argument('--categories', type=int, default=47)
    synth.add_argument('--per-category', type=int, default=80)
    synth.add_argument('--height', type=int, default=8)
    synth.add_argument('--width', type=int, default=8)
    synth.add_argument('--dim', type=int, default=64)
    synth.add_argument('--seed', type=int, required=True)
    synth.add_argument('--stream', type=int, default=0, help='image draw stream (queries use a different one)')

    encoder_names = [e.value for e in EncoderType]
    train = sub.add_parser('train', help='train an encoder and save the model')
    train.add_argument('--train', type=Path, required=True, dest='train_file')
    train.add_argument('--model', type=Path, dest='model_file')
    _add_run_flags(train, encoder_names)

    encode = sub.add_parser('encode', help='encode a feature file into signatures')
    encode.add_argument('--model', type=Path, required=True)
    encode.add_argument('--input', type=Path, required=True)
    encode.add_argument('--out', type=Path, required=True)
    encode.add_argument('--threads', type=int, default=1)

    index = sub.add_parser('index', help='merge signature files into one index')
    index.add_argument('--signatures', type=Path, nargs='+', required=True)
    index.add_argument('--out', type=Path, required=True)

    query = sub.add_parser('query', help='rank index items for one image')
    query.add_argument('--index', type=Path, required=True)
    query.add_argument('--model', type=Path, help='model file (default: the model recorded by encode)')
    query.add_argument('--image', type=Path, required=True, help='feature file holding the query image')
    query.add_argument('--item', type=int, default=0, help='image position inside --image')
    query.add_argument('--top', type=int, default=10)

    evaluate = sub.add_parser('eval', help='train, encode, index and report MAP@k')
    evaluate.add_argument('--train', type=Path, required=True, dest='train_file')
    evaluate.add_argument('--queries', type=Path, required=True, dest='query_file')
    evaluate.add_argument('--k', type=_int_list)
    evaluate.add_argument('--exclude-self', action='store_true', default=None)
    evaluate.add_argument('--timing-repeats', type=int)
    evaluate.add_argument('--report', type=Path, dest='report_path')
    evaluate.add_argument(
        '--no-timings',
        action='store_false',
        dest='include_timings',
        help='leave stage timings out of the saved report so it is byte-reproducible',
    )
    _add_run_flags(evaluate, [*encoder_names, ALL_ENCODERS])

    report = sub.add_parser('report', help='print a saved report as a table')
    report.add_argument('--report', type=Path, required=True, dest='report_path')
    return parser


def _set(data: Dict[str, Any], section: Optional[str], key: str, value: Any) -> None:
    if value is None:
        return
    target = data if section is None else data.setdefault(section, {})
    target[key] = value


def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    """설정 파일을 읽고 명령줄 플래그로 덮어써 RunConfig 생성

    Raises:
        ValueError: 시드가 없거나 값이 범위를 벗어남
    """
    data: Dict[str, Any] = load_config_from_file(args.config).model_dump() if args.config else {}
    _set(data, None, 'seed', args.seed)
    if args.encoder not in (None, ALL_ENCODERS):
        data['encoder'] = args.encoder
    _set(data, 'fisher', 'components', args.components)
    _set(data, 'sparse', 'atoms', args.atoms)
    _set(data, 'sparse', 'sparsity', args.sparsity)
    _set(data, 'sparse', 'iterations', args.iterations)
    _set(data, 'tsvd', 'rank', args.tsvd_rank)
    _set(data, 'mpca', 'variance_ratio', args.variance_ratio)
    _set(data, 'mpca', 'dims', args.dims)
    _set(data, 'lowrank', 'rank', args.rank)
    _set(data, 'lowrank', 'component', args.component)
    _set(data, None, 'threads', args.threads)
    for key in ('k', 'exclude_self', 'timing_repeats'):
        _set(data, 'eval', key, getattr(args, key, None))
    _set(data, None, 'report_path', getattr(args, 'report_path', None) and str(args.report_path))
    _set(data, None, 'model_file', getattr(args, 'model_file', None) and str(args.model_file))
    if 'seed' not in data:
        raise ValueError('a seed is required: pass --seed or set seed in --config')
    return RunConfig(**data)


def _cmd_synth(args: argparse.Namespace) -> int:
    corpus = synth_corpus(args.categories, args.per_category, args.height, args.width, args.dim, args.seed, args.stream)
    export(corpus, args.out)
    print(f'wrote {corpus} to {args.out}')
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    config = run_config_from_args(args)
    if not config.model_file:
        raise ValueError('a model path is required: pass --model or set model_file in --config')
    encoder = train_encoder(config, args.train_file)
    save_model(encoder, config.model_file)
    print(f'saved {encoder} to {config.model_file}')
    return 0


def _cmd_encode(args: argparse.Namespace) -> int:
    encoder = load_model(args.model)
    corpus = ingest(args.input)
    signatures = encode_corpus_signatures(encoder, corpus, args.threads)
    index = EncodedIndex(signatures, encoder.encoder_type, str(args.model.resolve()))
    save_signatures(index, args.out)
    print(f'wrote {len(index)} {encoder.encoder_type.value} signatures to {args.out}')
    return 0


def _cmd_index(args: argparse.Namespace) -> int:
    parts = [load_signatures(path) for path in args.signatures]
    tags = {part.encoder_tag for part in parts}
    if len(tags) != 1:
        raise ValueError(f'Signature files come from different encoders: {sorted(t.value for t in tags)}')
    merged: List[Signature] = []
    for part in parts:
        for row, label in zip(part.matrix, part.labels):
            merged.append(Signature(values=row, item_id=len(merged), label=label))
    models = {part.model_path for part in parts}
    index = EncodedIndex(merged, tags.pop(), models.pop() if len(models) == 1 else None)
    save_signatures(index, args.out)
    print(f'wrote {index} to {args.out}')
    return 0


def _cmd_query(args: argparse.Namespace) -> int:
    index = load_signatures(args.index)
    model_path = args.model or index.model_path
    if model_path is None:
        raise ValueError('a model path is required: pass --model or build the index with encode from one model')
    encoder = load_model(model_path)
    if encoder.encoder_type != index.encoder_tag:
        raise ValueError(f'Model encoder {encoder.encoder_type.value} does not match index {index.encoder_tag.value}')
    corpus = ingest(args.image)
    if not 0 <= args.item < corpus.size:
        raise ValueError(f'Item {args.item} outside feature file of {corpus.size} images')
    values, _ = l2_normalize(np.ravel(encoder.encode(corpus.image(args.item))))
    result = index.query(Signature(values=values, item_id=-1, label=corpus.label_of(args.item)), args.top)
    for rank, (item_id, label, distance) in enumerate(zip(result.item_ids, result.labels, result.distances), start=1):
        print(f'{rank:>4} {item_id:>8} {distance:.10f} {label}')
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    config = run_config_from_args(args)
    encoders = list(TABLE_ORDER) if args.encoder == ALL_ENCODERS else [config.encoder]
    report = run_table(config, args.train_file, args.query_file, encoders)
    print(format_table(report))
    if config.report_path:
        save_report(report, config.report_path, include_timings=args.include_timings)
        logger.info('Saved report to %s', config.report_path)
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    print(format_table(load_report(args.report_path)))
    return 0


COMMANDS = {
    'synth': _cmd_synth,
    'train': _cmd_train,
    'encode': _cmd_encode,
    'index': _cmd_index,
    'query': _cmd_query,
    'eval': _cmd_eval,
    'report': _cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """명령줄 진입점

    Returns:
        종료 코드 (0 성공, 1 실행 오류, 2 사용법 오류)
    """
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else 2
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2

    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    try:
        return COMMANDS[args.command](args)
    except (ValueError, RuntimeError, OSError, KeyError) as e:
        print(f'error: {e}', file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
