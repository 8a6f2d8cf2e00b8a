"""
Captioner training with metric-based checkpoint selection

Training minimizes the weighted loss, but the kept checkpoint is the one with
the best validation normalized score, not the lowest loss.
"""
import copy
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import torch

from src.config.logging_config import logger
from src.corpus.lexicon import SWLexicon
from src.corpus.vocabulary import Vocabulary
from src.harness.data import CaptionBatch, CaptionDataset
from src.models.database import RunLedger
from src.models.schemas import CaptionRecord, EvalPoint, MetricsReport, RunReport, TrainConfig
from src.metrics.report import evaluate_corpus
from src.net.captioner import Captioner
from src.net.checkpoint import save_checkpoint
from src.net.generation import generate_batch
from src.objectives.losses import loss_l1, loss_l2, loss_l3, total_loss
from src.synthvision.features import ClipFeatures


class TrainingDivergedError(RuntimeError):
    """Loss became NaN or infinite"""

    def __init__(self, epoch: int, last_loss: float, what: str = 'captioner'):
        self.epoch = epoch
        self.last_loss = last_loss
        super().__init__(f"{what} training diverged at epoch {epoch} (last finite epoch loss: {last_loss})")


def select_best(history: Sequence[EvalPoint]) -> Optional[EvalPoint]:
    """Evaluation with the highest validation normalized score; the earliest wins ties"""
    best = None
    for point in history:
        if best is None or point.metrics.normalized > best.metrics.normalized:
            best = point
    return best


def compute_losses(model: Captioner, batch: CaptionBatch, config: TrainConfig, pad_id: int) -> Dict[str, torch.Tensor]:
    output = model(batch.inputs, batch.features)
    weights = config.effective_weights()
    l1 = loss_l1(output.logits_c, batch.targets, pad_id=pad_id)
    l2 = loss_l2(output.sw_pred, batch.sw_gt.to(output.sw_pred.dtype), sc=weights.sc)
    l3 = loss_l3(output.logits_a, batch.targets, batch.sw_mask)
    return {'l1': l1, 'l2': l2, 'l3': l3, 'total': total_loss(l1, l2, l3, weights)}


def caption_records(model: Captioner, records: Sequence[CaptionRecord], features: Dict[str, ClipFeatures],
                    vocab: Vocabulary, max_len: int = 64, batch_size: int = 64) -> List[List[str]]:
    """Greedy captions for every record, in record order"""
    captions: List[List[str]] = []
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        captions.extend(generate_batch(model, [features[r.clip_id] for r in chunk], [r.action for r in chunk],
                                       vocab, max_len=max_len))
    return captions


def evaluate_model(model: Captioner, records: Sequence[CaptionRecord], features: Dict[str, ClipFeatures],
                   vocab: Vocabulary, lexicon: SWLexicon, max_len: int = 64) -> Tuple[MetricsReport, List[List[str]]]:
    hyps = caption_records(model, records, features, vocab, max_len=max_len)
    return evaluate_corpus(hyps, [r.tokens for r in records], lexicon), hyps


def _make_optimizer(model: Captioner, config: TrainConfig) -> torch.optim.Optimizer:
    if config.optimizer == 'sgd':
        return torch.optim.SGD(model.parameters(), lr=config.learning_rate, momentum=0.9)
    return torch.optim.Adam(model.parameters(), lr=config.learning_rate)


def _run_epoch(model: Captioner, loader, optimizer, config: TrainConfig, pad_id: int,
               epoch: int, last_loss: float) -> Dict[str, float]:
    model.train()
    sums = {'l1': 0.0, 'l2': 0.0, 'l3': 0.0, 'total': 0.0}
    batches = 0
    for batch in loader:
        losses = compute_losses(model, batch, config, pad_id)
        if not torch.isfinite(losses['total']):
            raise TrainingDivergedError(epoch, last_loss)
        optimizer.zero_grad()
        losses['total'].backward()
        optimizer.step()
        for key in sums:
            sums[key] += float(losses[key].item())
        batches += 1
    return {key: value / max(batches, 1) for key, value in sums.items()}


def train(model: Captioner, train_records: Sequence[CaptionRecord], val_records: Sequence[CaptionRecord],
          features: Dict[str, ClipFeatures], vocab: Vocabulary, lexicon: SWLexicon, config: TrainConfig,
          test_records: Sequence[CaptionRecord] = (), checkpoint_dir: Optional[Path] = None,
          ledger: Optional[RunLedger] = None) -> RunReport:
    """
    Train the captioner and keep the best-scoring checkpoint

    Args:
        model: freshly built captioner (its streams must match config.streams)
        train_records, val_records, test_records: split caption records
        features: clip_id -> ClipFeatures for every record
        vocab, lexicon: shared corpus resources
        config: training schedule, loss weights and ablation flags
        checkpoint_dir: when given, the best checkpoint is written there
        ledger: optional run ledger receiving every evaluation

    Returns:
        RunReport; the model holds the best checkpoint's parameters on return
    """
    if not train_records:
        raise ValueError('Training split is empty')
    if list(model.config.streams) != list(config.streams):
        raise ValueError(f"Model streams {model.config.streams} differ from run streams {config.streams}")
    if not val_records:
        logger.warning('Validation split is empty; selecting checkpoints on the training split')
        val_records = train_records

    run_id = f"{config.label}-seed{config.seed}"
    report = RunReport(run_id=run_id, label=config.label, config=config)
    if ledger is not None:
        ledger.start(run_id, config)
    try:
        _fit(model, report, train_records, val_records, features, vocab, lexicon, config, ledger)
        _finalize(model, report, test_records, features, vocab, lexicon, config, checkpoint_dir, ledger)
    except Exception as e:
        if ledger is not None:
            ledger.fail(run_id, f"{type(e).__name__}: {e}")
        raise
    if ledger is not None:
        ledger.finish(report)
    return report


def _fit(model: Captioner, report: RunReport, train_records: Sequence[CaptionRecord],
         val_records: Sequence[CaptionRecord], features: Dict[str, ClipFeatures], vocab: Vocabulary,
         lexicon: SWLexicon, config: TrainConfig, ledger: Optional[RunLedger]) -> None:
    dataset = CaptionDataset(train_records, features, vocab, lexicon, max_seq_len=model.config.max_seq_len)

    logger.info("=" * 80)
    logger.info(f"Training '{config.label}': {len(train_records)} train / {len(val_records)} val clips, "
                f"weights={config.effective_weights().model_dump()}, streams={config.streams}")
    logger.info("=" * 80)

    best_state = None
    best_score = float('-inf')
    evals_since_best = 0
    last_loss = float('nan')

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        optimizer = _make_optimizer(model, config)
        loader = dataset.loader(config.batch_size, shuffle=True, seed=config.seed)

        for epoch in range(1, config.epochs_max + 1):
            epoch_start = copy.deepcopy(model.state_dict())
            try:
                losses = _run_epoch(model, loader, optimizer, config, vocab.pad_id, epoch, last_loss)
            except TrainingDivergedError as e:
                logger.error(f"✗ {e}; restoring the last good parameters")
                model.load_state_dict(best_state if best_state is not None else epoch_start)
                report.aborted = True
                report.abort_reason = str(e)
                break
            last_loss = losses['total']
            report.loss_history.append({'epoch': float(epoch), **losses})
            logger.info(f"Epoch {epoch}/{config.epochs_max}: total={losses['total']:.4f} "
                        f"l1={losses['l1']:.4f} l2={losses['l2']:.4f} l3={losses['l3']:.4f}")

            if epoch % config.eval_every:
                continue
            metrics, _ = evaluate_model(model, val_records, features, vocab, lexicon, max_len=config.max_len)
            report.history.append(EvalPoint(epoch=epoch, train_loss=losses['total'], metrics=metrics))
            if ledger is not None:
                ledger.log_eval(report.run_id, epoch, 'val', metrics, train_loss=losses['total'])
            logger.info(f"  val: B@4={metrics.b4:.1f} CIDEr={metrics.cider:.2f} P={metrics.sw_precision:.1f} "
                        f"R={metrics.sw_recall:.1f} normalized={metrics.normalized:.3f}")

            if metrics.normalized > best_score:
                best_score = metrics.normalized
                best_state = copy.deepcopy(model.state_dict())
                report.best_epoch = epoch
                evals_since_best = 0
            else:
                evals_since_best += 1
                if evals_since_best >= config.patience:
                    logger.info(f"Stopping at epoch {epoch}: no improvement in {config.patience} evaluations")
                    break

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()


def _finalize(model: Captioner, report: RunReport, test_records: Sequence[CaptionRecord],
              features: Dict[str, ClipFeatures], vocab: Vocabulary, lexicon: SWLexicon, config: TrainConfig,
              checkpoint_dir: Optional[Path], ledger: Optional[RunLedger]) -> None:
    if checkpoint_dir is not None and report.best_epoch is not None:
        path = Path(checkpoint_dir) / f"{report.run_id}.zip"
        save_checkpoint(path, model, vocab)
        report.best_checkpoint = str(path)
    elif checkpoint_dir is not None:
        logger.warning(f"✗ '{config.label}' stopped before its first evaluation; no checkpoint written")

    if test_records:
        report.test_metrics, _ = evaluate_model(model, test_records, features, vocab, lexicon, max_len=config.max_len)
        if ledger is not None:
            ledger.log_eval(report.run_id, report.best_epoch or 0, 'test', report.test_metrics)
        logger.info(f"✓ '{config.label}' test normalized score: {report.test_metrics.normalized:.3f}")
