"""
Captioner checkpoints: config + vocabulary + named parameters in one archive
"""
from pathlib import Path
from typing import Optional, Tuple

from src.config.logging_config import logger
from src.corpus.vocabulary import Vocabulary
from src.models.schemas import ModelConfig
from src.net.captioner import Captioner
from src.synthvision.tensor_io import load_archive, load_state_into, save_archive

ARCHIVE_KIND = 'captioner'


def save_checkpoint(path: Path, model: Captioner, vocab: Vocabulary) -> Path:
    config = {
        'kind': ARCHIVE_KIND,
        'model': model.config.model_dump(mode='json'),
        'vocab': {'min_count': vocab.min_count, 'tokens': vocab.id_to_token},
    }
    save_archive(path, config, model.state_dict())
    logger.info(f"✓ Checkpoint saved: {path}")
    return Path(path)


def load_checkpoint(path: Path, expected: Optional[ModelConfig] = None) -> Tuple[Captioner, Vocabulary]:
    """
    Rebuild a captioner and its vocabulary from an archive

    Raises:
        ValueError: wrong archive kind, config differing from `expected`, or
            parameter shapes not matching the stored config
    """
    config, tensors = load_archive(path)
    if config.get('kind') != ARCHIVE_KIND:
        raise ValueError(f"{path} is not a captioner checkpoint (kind={config.get('kind')})")
    model_config = ModelConfig(**config['model'])
    if expected is not None and expected.model_dump(mode='json') != model_config.model_dump(mode='json'):
        raise ValueError(f"{path}: stored model config does not match the requested one")

    vocab = Vocabulary(config['vocab']['tokens'], min_count=config['vocab'].get('min_count', 1))
    if len(vocab) != model_config.vocab_size:
        raise ValueError(f"{path}: vocabulary has {len(vocab)} ids, model expects {model_config.vocab_size}")

    model = Captioner(model_config)
    load_state_into(model, tensors, source=str(path))
    model.eval()
    return model, vocab
