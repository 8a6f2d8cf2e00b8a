"""
Command-line entry point
Subcommands: synth, prepare, fit-features, train, generate, evaluate, ablate, report
"""
import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.config.logging_config import log_banner, logger, setup_logging
from src.config.settings import Settings, load_settings
from src.corpus.dataset import load_records, read_jsonl, save_records, split_dataset, write_jsonl
from src.corpus.lexicon import SWLexicon, load_lexicon
from src.corpus.text import detokenize
from src.corpus.vocabulary import Vocabulary, build_vocab
from src.models.schemas import AblationReport, AblationRow, CaptionRecord, RunReport

MANIFEST = 'manifest.jsonl'
CORPUS = 'corpus.jsonl'
VOCAB = 'vocab.json'


class Workspace:
    """File layout under the output directory"""

    def __init__(self, settings: Settings):
        self.settings = settings
        self.root = Path(settings.data_dir)

    @property
    def manifest(self) -> Path:
        return self.root / MANIFEST

    @property
    def corpus(self) -> Path:
        return self.root / CORPUS

    @property
    def vocab(self) -> Path:
        return self.root / VOCAB

    @property
    def models(self) -> Path:
        return self.root / 'models'

    def captions(self, split: str) -> Path:
        return self.root / f"captions_{split}.jsonl"

    def refs(self, split: str) -> Path:
        return self.root / f"refs_{split}.jsonl"

    def require(self, path: Path, hint: str) -> Path:
        if not path.exists():
            raise FileNotFoundError(f"{path} not found ({hint})")
        return path


def _json_dump(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + '\n', encoding='utf-8')


def _lexicon(settings: Settings, path: Optional[str] = None) -> SWLexicon:
    return load_lexicon(Path(path) if path else settings.corpus.lexicon_path)


def _split_and_vocab(records: List[CaptionRecord], settings: Settings, ws: Workspace) -> List[CaptionRecord]:
    if all(r.split for r in records):
        split = records
    else:
        split = split_dataset(records, settings.corpus.split_ratios, seed=settings.seed)
    save_records(ws.corpus, split)
    vocab = build_vocab([r.tokens for r in split if r.split == 'train'], min_count=settings.corpus.min_count)
    vocab.save(ws.vocab)
    logger.info(f"✓ Corpus written to {ws.corpus}, vocabulary ({len(vocab)} ids) to {ws.vocab}")
    return split


def _load_corpus(ws: Workspace) -> List[CaptionRecord]:
    return load_records(ws.require(ws.corpus, 'run synth or prepare first'))


def _load_features(ws: Workspace, records: List[CaptionRecord]):
    from src.synthvision.features import load_features
    features_dir = ws.settings.features_dir
    ws.require(features_dir, 'run synth or fit-features first')
    return load_features(features_dir, [r.clip_id for r in records])


def _fit_and_extract(manifest: List[dict], settings: Settings, ws: Workspace) -> None:
    from src.synthvision.pipeline import extract_all, fit_feature_models

    pca, vae = fit_feature_models(manifest, settings.features, seed=settings.seed)
    ws.models.mkdir(parents=True, exist_ok=True)
    pca.save(ws.models)
    vae.save(ws.models / 'vae.zip')
    extract_all(manifest, settings.features, pca, vae, features_dir=settings.features_dir)


def cmd_synth(args, settings: Settings) -> int:
    from src.synthvision.pipeline import build_manifest, manifest_records

    ws = Workspace(settings)
    n_clips = args.n or settings.synth.n_clips
    duration = args.duration or settings.synth.duration_s
    weighting = args.weighting or settings.synth.action_weighting
    manifest = build_manifest(n_clips, settings.seed, duration, weighting)
    write_jsonl(ws.manifest, manifest)
    records = manifest_records(manifest, settings.features)
    _split_and_vocab(records, settings, ws)
    _fit_and_extract(manifest, settings, ws)
    return 0


def cmd_prepare(args, settings: Settings) -> int:
    ws = Workspace(settings)
    entities = json.loads(Path(args.entities).read_text(encoding='utf-8')) if args.entities else None
    records = load_records(Path(args.input), entities=entities)
    if not records:
        raise ValueError(f"No caption records in {args.input}")
    _split_and_vocab(records, settings, ws)
    return 0


def cmd_fit_features(args, settings: Settings) -> int:
    ws = Workspace(settings)
    manifest_path = Path(args.manifest) if args.manifest else ws.require(ws.manifest, 'run synth first')
    manifest = read_jsonl(manifest_path)
    _fit_and_extract(manifest, settings, ws)
    return 0


def _ledger(settings: Settings, enabled: bool):
    if not enabled:
        return None
    from src.models.database import RunLedger, get_session_factory, init_database
    init_database(settings.database_url)
    return RunLedger(get_session_factory(settings.database_url)())


def cmd_train(args, settings: Settings) -> int:
    from src.corpus.dataset import by_split
    from src.harness.trainer import train
    from src.net.captioner import build_model, configure_for

    ws = Workspace(settings)
    records = _load_corpus(ws)
    vocab = Vocabulary.load(ws.require(ws.vocab, 'run synth or prepare first'))
    features = _load_features(ws, records)
    lexicon = _lexicon(settings)
    config = settings.train
    train_records = by_split(records, 'train')
    if not train_records:
        raise ValueError('Training split is empty')

    model_config = configure_for(settings.model, len(vocab), features[train_records[0].clip_id], streams=config.streams)
    model = build_model(model_config)
    report = train(model, train_records, by_split(records, 'val'), features, vocab, lexicon, config,
                   test_records=by_split(records, 'test'), checkpoint_dir=settings.checkpoints_dir,
                   ledger=_ledger(settings, not args.no_ledger))
    report_path = settings.reports_dir / f"{report.run_id}.json"
    _json_dump(report_path, report.model_dump(mode='json'))
    if report.aborted:
        raise RuntimeError(f"Run {report.run_id} aborted: {report.abort_reason} (report: {report_path})")
    if report.test_metrics is not None:
        _print_table([AblationRow(label=report.label, metrics=report.test_metrics)])
    return 0


def _checkpoint_path(args, settings: Settings) -> Path:
    if args.checkpoint:
        return Path(args.checkpoint)
    return settings.checkpoints_dir / f"{settings.train.label}-seed{settings.train.seed}.zip"


def cmd_generate(args, settings: Settings) -> int:
    from src.corpus.dataset import by_split
    from src.harness.trainer import caption_records
    from src.net.checkpoint import load_checkpoint

    ws = Workspace(settings)
    records = by_split(_load_corpus(ws), args.split)
    model, vocab = load_checkpoint(_checkpoint_path(args, settings))
    if args.mode != 'greedy':
        raise ValueError(f"Unsupported decoding mode '{args.mode}'")
    features = _load_features(ws, records)
    captions = caption_records(model, records, features, vocab, max_len=args.max_len)
    out = ws.captions(args.split)
    write_jsonl(out, ({'clip_id': r.clip_id, 'action': r.action, 'caption': detokenize(c)}
                      for r, c in zip(records, captions)))
    logger.info(f"✓ {len(captions)} {args.split} captions written to {out}")
    save_records(ws.refs(args.split), records)
    logger.info(f"✓ {args.split} references written to {ws.refs(args.split)}")
    return 0


def cmd_evaluate(args, settings: Settings) -> int:
    from src.metrics.report import evaluate_files

    metrics = evaluate_files(Path(args.hyps), Path(args.refs), _lexicon(settings, args.lexicon))
    payload = metrics.model_dump()
    _json_dump(settings.reports_dir / 'evaluation.json', payload)
    print(json.dumps(payload, sort_keys=True))
    _print_table([AblationRow(label=Path(args.hyps).stem, metrics=metrics)])
    return 0


def cmd_ablate(args, settings: Settings) -> int:
    from src.harness.ablation import default_suite, run_ablation

    ws = Workspace(settings)
    records = _load_corpus(ws)
    vocab = Vocabulary.load(ws.require(ws.vocab, 'run synth or prepare first'))
    features = _load_features(ws, records)
    report = run_ablation(default_suite(settings.train), records, features, vocab, _lexicon(settings),
                          settings.model, checkpoint_dir=settings.checkpoints_dir,
                          ledger=_ledger(settings, not args.no_ledger))
    _json_dump(settings.reports_dir / 'ablation.json', report.model_dump(mode='json'))
    _print_table(report.rows, report.notes)
    return 0 if all(row.metrics is not None for row in report.rows) else 1


def cmd_report(args, settings: Settings) -> int:
    from src.metrics.report import report_from_values

    if args.from_values:
        report = report_from_values(Path(args.from_values))
    else:
        path = Path(args.from_run)
        if not path.exists():
            raise FileNotFoundError(f"Report file not found: {path}")
        payload = json.loads(path.read_text(encoding='utf-8'))
        if 'rows' in payload:
            report = AblationReport(**payload)
        else:
            run = RunReport(**payload)
            report = AblationReport(rows=[AblationRow(label=run.label, metrics=run.test_metrics)])
    _json_dump(settings.reports_dir / 'report.json', report.model_dump(mode='json'))
    _print_table(report.rows, report.notes)
    return 0


def _print_table(rows, notes=None) -> None:
    from src.metrics.report import format_table
    print(format_table(rows, notes))


COMMANDS = {
    'synth': cmd_synth,
    'prepare': cmd_prepare,
    'fit-features': cmd_fit_features,
    'train': cmd_train,
    'generate': cmd_generate,
    'evaluate': cmd_evaluate,
    'ablate': cmd_ablate,
    'report': cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON config file (falls back to $CAPKIT_CONFIG)')
    common.add_argument('--seed', type=int, help='Seed propagated to every subsystem')
    common.add_argument('--out', help='Output directory for corpus, features, checkpoints and reports')

    parser = argparse.ArgumentParser(prog='capkit', description='Soccer clip captioning pipeline')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('synth', parents=[common], help='Generate synthetic clips, captions and features')
    p.add_argument('--n', type=int, help='Number of clips')
    p.add_argument('--duration', type=float, help='Clip duration in seconds')
    p.add_argument('--weighting', choices=['uniform', 'caption_counts'], help='Action distribution of the clips')

    p = sub.add_parser('prepare', parents=[common], help='Anonymize, tokenize, split and build the vocabulary')
    p.add_argument('--input', required=True, help='JSON-lines caption file')
    p.add_argument('--entities', help='JSON map clip_id -> {surface name: category}')

    p = sub.add_parser('fit-features', parents=[common], help='Fit PCA and VAE, then extract features')
    p.add_argument('--manifest', help='Clip manifest (defaults to <out>/manifest.jsonl)')

    p = sub.add_parser('train', parents=[common], help='Train the captioner')
    p.add_argument('--no-ledger', action='store_true', help='Do not record the run in the SQLite ledger')

    p = sub.add_parser('generate', parents=[common], help='Caption a split and write its references')
    p.add_argument('--checkpoint', help='Checkpoint archive (defaults to the trained run)')
    p.add_argument('--split', default='test', choices=['train', 'val', 'test'])
    p.add_argument('--mode', default='greedy', choices=['greedy'])
    p.add_argument('--max-len', type=int, default=64)

    p = sub.add_parser('evaluate', parents=[common], help='Score hypotheses against references')
    p.add_argument('--hyps', required=True)
    p.add_argument('--refs', required=True)
    p.add_argument('--lexicon', help='SW lexicon file (defaults to the shipped one)')

    p = sub.add_parser('ablate', parents=[common], help='Run the ablation suite')
    p.add_argument('--no-ledger', action='store_true')

    p = sub.add_parser('report', parents=[common], help='Format results as a table')
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument('--from-values', help='JSON file of published metric values')
    source.add_argument('--from-run', help='Run or ablation report JSON')
    return parser


def run_command(argv: Optional[List[str]] = None) -> int:
    """
    Parse and run one subcommand

    Returns:
        0 on success, 1 on a runtime or missing-file error (one JSON line on
        stderr); argparse exits with 2 on usage errors
    """
    args = build_parser().parse_args(argv)
    try:
        overrides: Dict = {'seed': args.seed}
        if args.out:
            overrides['data_dir'] = args.out
        settings = load_settings(Path(args.config) if args.config else None, **overrides)
        settings.ensure_run_dirs()
        setup_logging(settings.logs_dir, settings.debug)
        log_banner(f"{settings.app_name} {settings.app_version}: {args.command}", output=settings.data_dir, seed=settings.seed)
        status = COMMANDS[args.command](args, settings)
        logger.info(f"{'✓' if status == 0 else '✗'} {args.command} finished with status {status}")
        return status
    except Exception as e:
        logger.error(f"✗ {args.command} failed: {str(e)}")
        print(json.dumps({'error': type(e).__name__, 'message': str(e)}), file=sys.stderr)
        return 1


def main():
    """Main entry point"""
    sys.exit(run_command())


if __name__ == "__main__":
    main()
