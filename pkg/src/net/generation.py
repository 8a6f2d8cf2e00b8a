"""
Autoregressive caption generation
Greedy decoding from the action tag until eos or the length limit.
"""
from typing import List, Sequence

import torch

from src.corpus.vocabulary import Vocabulary
from src.net.captioner import Captioner, collate_features
from src.synthvision.features import ClipFeatures

SUPPORTED_MODES = ('greedy',)


@torch.no_grad()
def generate_batch(model: Captioner, features: Sequence[ClipFeatures], actions: Sequence[str],
                   vocab: Vocabulary, max_len: int = 64, mode: str = 'greedy') -> List[List[str]]:
    """
    Greedy captions for a batch of clips

    Args:
        model: captioner (switched to eval mode)
        features: one ClipFeatures per clip
        actions: action category per clip, fed as the first token
        vocab: vocabulary the model was trained with
        max_len: maximum number of emitted tokens
        mode: only "greedy" is supported

    Returns:
        Token lists without the action tag and eos
    """
    if mode not in SUPPORTED_MODES:
        raise ValueError(f"Unsupported decoding mode '{mode}', expected one of {SUPPORTED_MODES}")
    if len(features) != len(actions):
        raise ValueError(f"Got {len(features)} clips but {len(actions)} actions")
    if not features:
        return []

    model.eval()
    max_len = max(0, min(max_len, model.config.max_seq_len))
    vis, _ = model.part_b_forward(collate_features(features))

    # tags and pad are never emitted
    banned = torch.zeros(model.config.vocab_size, dtype=torch.bool)
    banned[vocab.pad_id] = True
    for token_id in range(len(vocab)):
        if vocab.is_tag(token_id):
            banned[token_id] = True

    prefix = torch.tensor([[vocab.tag_id(a)] for a in actions], dtype=torch.long)
    finished = torch.zeros(len(actions), dtype=torch.bool)
    outputs: List[List[int]] = [[] for _ in actions]
    for _ in range(max_len):
        _, ling = model.part_a_forward(prefix)
        logits = model.part_c_forward(ling[:, -1:], vis)[:, 0]
        logits = logits.masked_fill(banned, float('-inf'))
        next_ids = logits.argmax(dim=-1)
        for i, token_id in enumerate(next_ids.tolist()):
            if finished[i]:
                continue
            if token_id == vocab.eos_id:
                finished[i] = True
            else:
                outputs[i].append(token_id)
        if bool(finished.all()):
            break
        prefix = torch.cat([prefix, next_ids.unsqueeze(1)], dim=1)
    return [vocab.decode(ids, skip_special=True) for ids in outputs]


def generate(model: Captioner, features: ClipFeatures, action: str, vocab: Vocabulary,
             max_len: int = 64, mode: str = 'greedy') -> List[str]:
    """Greedy caption for one clip"""
    return generate_batch(model, [features], [action], vocab, max_len=max_len, mode=mode)[0]
