"""
Teacher-forced training data for the captioner
"""
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset

from src.corpus.lexicon import SWLexicon, sw_positions, sw_vector
from src.corpus.vocabulary import Vocabulary
from src.models.schemas import CaptionRecord
from src.net.captioner import FeatureBatch, collate_features
from src.synthvision.features import ClipFeatures


def teacher_forcing_pair(caption_ids: Sequence[int], tag_id: int, eos_id: int) -> Tuple[List[int], List[int]]:
    """inputs = [tag] + caption, targets = caption + [eos]"""
    caption_ids = list(caption_ids)
    return [tag_id] + caption_ids, caption_ids + [eos_id]


@dataclass
class CaptionExample:
    clip_id: str
    action: str
    features: ClipFeatures
    inputs: List[int]
    targets: List[int]
    sw_mask: List[float]  # aligned with targets
    sw_gt: np.ndarray  # [sw_count] binary


@dataclass
class CaptionBatch:
    clip_ids: List[str]
    features: FeatureBatch
    inputs: torch.Tensor  # [B, L]
    targets: torch.Tensor  # [B, L], pad where absent
    sw_mask: torch.Tensor  # [B, L]
    sw_gt: torch.Tensor  # [B, sw_count]


class CaptionDataset(Dataset):
    """Caption records joined with their clip features"""

    def __init__(self, records: Sequence[CaptionRecord], features: Dict[str, ClipFeatures],
                 vocab: Vocabulary, lexicon: SWLexicon, max_seq_len: int = 64):
        missing = [r.clip_id for r in records if r.clip_id not in features]
        if missing:
            raise ValueError(f"No features for {len(missing)} clips, e.g. {missing[:3]}")
        self.examples: List[CaptionExample] = []
        for record in records:
            # room for the tag (inputs) and eos (targets)
            tokens = record.tokens[:max_seq_len - 1]
            inputs, targets = teacher_forcing_pair(vocab.encode(tokens), vocab.tag_id(record.action), vocab.eos_id)
            mask = [0.0] * len(targets)
            for position in sw_positions(tokens, lexicon):
                mask[position] = 1.0
            self.examples.append(CaptionExample(
                clip_id=record.clip_id,
                action=record.action,
                features=features[record.clip_id],
                inputs=inputs,
                targets=targets,
                sw_mask=mask,
                sw_gt=sw_vector(tokens, lexicon),
            ))
        self.pad_id = vocab.pad_id

    def __len__(self) -> int:
        return len(self.examples)

    def __getitem__(self, idx: int) -> CaptionExample:
        return self.examples[idx]

    def collate(self, examples: Sequence[CaptionExample]) -> CaptionBatch:
        length = max(len(e.inputs) for e in examples)
        inputs = torch.full((len(examples), length), self.pad_id, dtype=torch.long)
        targets = torch.full((len(examples), length), self.pad_id, dtype=torch.long)
        sw_mask = torch.zeros(len(examples), length)
        for i, e in enumerate(examples):
            inputs[i, :len(e.inputs)] = torch.tensor(e.inputs)
            targets[i, :len(e.targets)] = torch.tensor(e.targets)
            sw_mask[i, :len(e.sw_mask)] = torch.tensor(e.sw_mask)
        return CaptionBatch(
            clip_ids=[e.clip_id for e in examples],
            features=collate_features([e.features for e in examples]),
            inputs=inputs,
            targets=targets,
            sw_mask=sw_mask,
            sw_gt=torch.from_numpy(np.stack([e.sw_gt for e in examples])),
        )

    def loader(self, batch_size: int, shuffle: bool = False, seed: int = 0) -> DataLoader:
        generator = torch.Generator().manual_seed(seed)
        return DataLoader(self, batch_size=batch_size, shuffle=shuffle, collate_fn=self.collate,
                          generator=generator)
