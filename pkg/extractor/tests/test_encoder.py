import numpy as np
import pytest
import torch

from embextract.encoder import encode, fine_tune, load_encoder

TEXTS = [
    "check my balance please",
    "play some jazz music",
    "book a flight to boston",
    "what is the weather today",
    "pay my electric bill",
]


@pytest.fixture
def enc(encoder_dir):
    return load_encoder(str(encoder_dir))


class TestEncode:
    def test_shape_and_dtype(self, enc):
        out = encode(*enc, TEXTS)
        assert out.shape == (5, 32)
        assert out.dtype == np.float32
        assert np.isfinite(out).all()

    def test_deterministic(self, enc):
        a = encode(*enc, TEXTS)
        b = encode(*enc, TEXTS)
        assert np.array_equal(a, b)

    def test_batch_size_does_not_change_results(self, enc):
        whole = encode(*enc, TEXTS, batch_size=64)
        stepped = encode(*enc, TEXTS, batch_size=2)
        np.testing.assert_allclose(whole, stepped, atol=1e-5)

    def test_special_token_exclusion_changes_output(self, enc):
        with_special = encode(*enc, TEXTS)
        without = encode(*enc, TEXTS, include_special=False)
        assert not np.allclose(with_special, without)

    def test_empty_string_stays_finite(self, enc):
        out = encode(*enc, ["", "check my balance"])
        assert np.isfinite(out).all()


class TestFineTune:
    def test_freeze_boundary(self, encoder_dir):
        tokenizer, model = load_encoder(str(encoder_dir))
        before = {
            name: p.detach().clone() for name, p in model.named_parameters()
        }
        labels = np.array([0, 1, 2, 3, 4])
        fine_tune(
            tokenizer, model, TEXTS, labels, num_classes=5,
            epochs=2, lr=1e-3, seed=0, freeze_layers=1,
        )
        changed = {
            name for name, p in model.named_parameters()
            if not torch.equal(before[name], p)
        }
        assert not any(n.startswith("embeddings.") for n in changed)
        assert not any(n.startswith("encoder.layer.0.") for n in changed)
        assert any(n.startswith("encoder.layer.1.") for n in changed)

    def test_model_left_in_eval_with_grads_restored(self, encoder_dir):
        tokenizer, model = load_encoder(str(encoder_dir))
        fine_tune(
            tokenizer, model, TEXTS, np.array([0, 1, 2, 3, 4]), num_classes=5,
            epochs=1, lr=1e-3, seed=0, freeze_layers=1,
        )
        assert not model.training
        assert all(p.requires_grad for p in model.parameters())

    def test_default_freeze_covers_shallow_encoder(self, encoder_dir):
        # two layers, first ten frozen: extraction must be unaffected
        tokenizer, model = load_encoder(str(encoder_dir))
        frozen = encode(tokenizer, model, TEXTS)
        fine_tune(
            tokenizer, model, TEXTS, np.array([0, 1, 2, 3, 4]), num_classes=5,
            epochs=3, lr=1e-2, seed=0,
        )
        tuned = encode(tokenizer, model, TEXTS)
        assert np.array_equal(frozen, tuned)
