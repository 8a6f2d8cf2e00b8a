"""
Test suite for the captioning model, checkpoints and greedy generation
"""
import numpy as np
import pytest
import torch

from conftest import make_features, tiny_config
from src.corpus.vocabulary import build_vocab
from src.models.schemas import LossWeights
from src.net.captioner import build_model, collate_features, configure_for, count_parameters
from src.net.checkpoint import load_checkpoint, save_checkpoint
from src.net.generation import generate, generate_batch
from src.objectives.losses import loss_l1, loss_l2, loss_l3, total_loss
from src.synthvision.vae import InpaintingVAE

WORDS = ['the', 'ball', 'goes', 'wide', 'of', 'post', 'shot', 'corner', 'goal', '!', '.']


@pytest.fixture
def vocab():
    return build_vocab([WORDS], min_count=1)


@pytest.fixture
def model(vocab):
    return build_model(tiny_config(vocab_size=len(vocab)))


def test_output_shapes(model, vocab):
    batch = collate_features([make_features(4, seed=0), make_features(3, seed=1)])
    tokens = torch.randint(0, len(vocab), (2, 7))
    out = model(tokens, batch)
    assert out.logits_c.shape == (2, 7, len(vocab))
    assert out.logits_a.shape == (2, 7, len(vocab))
    assert out.sw_pred.shape == (2, 55)
    assert bool(((out.sw_pred > 0) & (out.sw_pred < 1)).all()), 'SW predictions must lie in (0, 1)'


def test_single_clip_forward(model, vocab):
    logits_a, ling = model.part_a_forward(torch.tensor([vocab.tag_id('goal'), 5, 6]))
    assert logits_a.shape == (3, len(vocab)) and ling.shape == (3, 16)
    vis, sw_pred = model.part_b_forward(make_features())
    assert vis.shape == (16,) and sw_pred.shape == (55,)
    assert bool((vis >= 0).all()), 'Visual features come from a ReLU head'


def test_causal_mask_property(model, vocab):
    """Changing token j never changes outputs at positions < j"""
    rng = np.random.default_rng(0)
    features = collate_features([make_features()])
    model.eval()
    with torch.no_grad():
        for trial in range(200):
            length = int(rng.integers(2, 16))
            tokens = torch.from_numpy(rng.integers(0, len(vocab), size=(1, length)))
            j = int(rng.integers(1, length))
            changed = tokens.clone()
            changed[0, j] = (int(tokens[0, j]) + 1 + int(rng.integers(len(vocab) - 1))) % len(vocab)
            before, after = model(tokens, features), model(changed, features)
            assert torch.allclose(before.logits_c[:, :j], after.logits_c[:, :j], atol=1e-6), \
                f"Trial {trial}: position < {j} changed"
            assert torch.allclose(before.logits_a[:, :j], after.logits_a[:, :j], atol=1e-6)


def test_forward_is_finite_on_random_inputs(model, vocab):
    """Random lengths, clip durations and feature scales never produce NaN or inf"""
    rng = np.random.default_rng(1)
    model.eval()
    with torch.no_grad():
        for trial in range(1000):
            batch_size = int(rng.integers(1, 4))
            length = int(rng.integers(1, 17))
            clips = [make_features(int(rng.integers(1, 7)), seed=int(rng.integers(1 << 30))) for _ in range(batch_size)]
            scale = float(10.0 ** rng.uniform(-2, 2))
            for clip in clips:
                clip.flow *= scale
                clip.vae *= scale
            tokens = torch.from_numpy(rng.integers(0, len(vocab), size=(batch_size, length)))
            out = model(tokens, collate_features(clips))
            for name in ('logits_c', 'logits_a', 'sw_pred'):
                assert bool(torch.isfinite(getattr(out, name)).all()), f"Trial {trial}: non-finite {name}"


def test_initial_part_a_distribution_is_near_uniform(model, vocab):
    """Small initial weights give next-word probabilities close to 1/V"""
    tokens = torch.tensor([[vocab.tag_id('goal'), 20, 21, 22, 23]])
    with torch.no_grad():
        logits_a, _ = model.part_a_forward(tokens)
    probs = torch.softmax(logits_a, dim=-1)
    uniform = 1.0 / len(vocab)
    entropy = -(probs * probs.log()).sum(dim=-1)
    assert bool((entropy > np.log(len(vocab)) - 0.05).all()), f"Entropy {entropy} far below log V"
    assert bool(((probs / uniform - 1).abs() < 0.5).all()), 'Initial probabilities must stay near 1/V'


def test_every_enabled_stream_is_wired(model):
    """Zeroing any enabled stream changes the visual features and the final logits"""
    model = model.double()
    batch = collate_features([make_features()]).to(torch.float64)
    tokens = torch.tensor([[3, 20, 21]])
    with torch.no_grad():
        reference = model(tokens, batch)
        vis_ref, _ = model.part_b_forward(batch)
        for stream in ('img', 'flow', 'vae'):
            zeroed = batch.zero_stream(stream)
            vis, _ = model.part_b_forward(zeroed)
            assert not torch.equal(vis, vis_ref), f"Stream {stream} does not reach Part B output"
            assert not torch.equal(model(tokens, zeroed).logits_c, reference.logits_c), \
                f"Stream {stream} does not reach the final logits"


def test_disabled_stream_is_ignored(vocab):
    model = build_model(tiny_config(vocab_size=len(vocab), streams=['img']))
    assert list(model.streams) == ['img']
    batch = collate_features([make_features()])
    with torch.no_grad():
        vis, _ = model.part_b_forward(batch)
        vis_zeroed, _ = model.part_b_forward(batch.zero_stream('flow'))
    assert torch.equal(vis, vis_zeroed)


def test_part_a_rejects_bad_tokens(model, vocab):
    with pytest.raises(ValueError):
        model.part_a_forward(torch.zeros((1, 0), dtype=torch.long))
    with pytest.raises(ValueError):
        model.part_a_forward(torch.zeros((1, 17), dtype=torch.long))
    with pytest.raises(ValueError):
        model.part_a_forward(torch.tensor([[len(vocab)]]))


def test_part_c_rejects_wrong_widths(model):
    with pytest.raises(ValueError):
        model.part_c_forward(torch.zeros(1, 3, 8), torch.zeros(1, 16))


def test_empty_clip_rejected(model):
    with pytest.raises(ValueError):
        model.part_b_forward(make_features(n_frames=0))


def test_gradient_matches_finite_differences(vocab):
    """Analytic gradient of the weighted loss agrees with central differences in float64"""
    model = build_model(tiny_config(vocab_size=len(vocab))).double()
    # zero biases put ReLU pre-activations exactly on the kink
    generator = torch.Generator().manual_seed(0)
    with torch.no_grad():
        for name, param in model.named_parameters():
            if name.endswith('bias'):
                param.normal_(0.0, 0.1, generator=generator)
    batch = collate_features([make_features(3, seed=2), make_features(4, seed=3)]).to(torch.float64)
    inputs = torch.tensor([[3, 20, 21, 22, 23], [4, 24, 25, 0, 0]])
    targets = torch.tensor([[20, 21, 22, 23, 2], [24, 25, 2, 0, 0]])
    sw_mask = torch.tensor([[0., 1., 0., 1., 0.], [1., 0., 0., 0., 0.]])
    sw_gt = torch.zeros(2, 55, dtype=torch.float64)
    sw_gt[0, [1, 9]] = 1.0
    sw_gt[1, 4] = 1.0
    weights = LossWeights(w1=1.0, w2=0.5, w3=0.25)

    def objective() -> torch.Tensor:
        out = model(inputs, batch)
        return total_loss(loss_l1(out.logits_c, targets, pad_id=0), loss_l2(out.sw_pred, sw_gt),
                          loss_l3(out.logits_a, targets, sw_mask), weights)

    model.zero_grad()
    objective().backward()
    params = [p for p in model.parameters() if p.requires_grad]
    rng = np.random.default_rng(0)
    eps = 1e-6
    with torch.no_grad():
        for _ in range(120):
            p = params[int(rng.integers(len(params)))]
            flat = p.view(-1)
            i = int(rng.integers(flat.numel()))
            analytic = float(p.grad.view(-1)[i])
            original = float(flat[i])
            flat[i] = original + eps
            up = float(objective())
            flat[i] = original - eps
            down = float(objective())
            flat[i] = original
            numeric = (up - down) / (2 * eps)
            scale = max(abs(analytic), abs(numeric))
            assert abs(analytic - numeric) <= 1e-3 * scale + 1e-7, \
                f"Gradient mismatch: analytic {analytic}, numeric {numeric}"


def test_build_model_is_seeded(vocab):
    config = tiny_config(vocab_size=len(vocab), seed=5)
    first, second = build_model(config), build_model(config)
    for (name, a), (_, b) in zip(first.state_dict().items(), second.state_dict().items()):
        assert torch.equal(a, b), f"Parameter {name} differs between identically seeded builds"
    assert count_parameters(config) == sum(p.numel() for p in first.parameters())


def test_configure_for_reads_stream_widths(vocab):
    config = configure_for(tiny_config(), len(vocab), make_features(flow_dim=12, vae_dim=6), streams=['flow'])
    assert (config.vocab_size, config.flow_dim, config.vae_dim, config.streams) == (len(vocab), 12, 6, ['flow'])


def test_checkpoint_restores_model(tmp_path, model, vocab):
    path = save_checkpoint(tmp_path / 'model.zip', model, vocab)
    loaded, loaded_vocab = load_checkpoint(path, expected=model.config)
    assert loaded_vocab.id_to_token == vocab.id_to_token
    features = make_features()
    assert generate(loaded, features, 'goal', loaded_vocab) == generate(model, features, 'goal', vocab)

    with pytest.raises(ValueError):
        load_checkpoint(path, expected=model.config.model_copy(update={'fc3_width': 8}))
    InpaintingVAE(32, 64, latent_dim=4).save(tmp_path / 'vae.zip')
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / 'vae.zip')


def test_generation_limits(model, vocab):
    features = [make_features(seed=0), make_features(seed=1)]
    captions = generate_batch(model, features, ['goal', 'corner'], vocab, max_len=5)
    assert len(captions) == 2
    for caption in captions:
        assert len(caption) <= 5
        emitted = vocab.encode(caption)
        assert vocab.pad_id not in emitted and not any(vocab.is_tag(i) for i in emitted), \
            f"Pad or tag token emitted: {caption}"
    assert generate(model, features[0], 'goal', vocab, max_len=0) == []
    assert generate_batch(model, features, ['goal', 'corner'], vocab, max_len=5) == captions


def test_generation_skips_banned_tokens_and_stops_at_eos(model, vocab):
    """Tags and pad are never emitted even when they dominate; eos ends the caption"""
    with torch.no_grad():
        model.head_c.bias[vocab.tag_id('goal')] = 100.0
        model.head_c.bias[vocab.pad_id] = 90.0
        model.head_c.bias[vocab.encode(['goal'])[0]] = 50.0
    assert generate(model, make_features(), 'goal', vocab, max_len=4) == ['goal'] * 4
    with torch.no_grad():
        model.head_c.bias[vocab.eos_id] = 80.0
    assert generate(model, make_features(), 'goal', vocab, max_len=4) == []


def test_generation_rejects_bad_requests(model, vocab):
    with pytest.raises(ValueError):
        generate(model, make_features(), 'goal', vocab, mode='beam')
    with pytest.raises(ValueError):
        generate_batch(model, [make_features()], ['goal', 'corner'], vocab)
    with pytest.raises(ValueError):
        generate(model, make_features(), 'handball', vocab)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
