import numpy as np
import pytest

from stressformer import tensor as T
from stressformer.errors import ConfigError, ShapeError, UsageError
from stressformer.model import (
    ModelConfig,
    PatchTransformer,
    make_patches,
    positional_encoding,
)

from conftest import central_diff, rel_err

SMALL = ModelConfig(
    window_len=32, patch_len=8, d_model=8, n_heads=2, n_blocks=2, ff_dim=16,
    dropout_rate=0.1,
)


def _zero_blocks(model: PatchTransformer) -> None:
    for name, w in model.weights.items():
        if ".attn." in name or ".ff." in name:
            w.data[:] = 0.0


def test_make_patches_basic():
    window = np.arange(8.0)
    patches = make_patches(window, 4)
    assert patches.shape == (2, 4)
    assert np.array_equal(patches[0], [0, 1, 2, 3])
    assert np.array_equal(patches[1], [4, 5, 6, 7])


def test_make_patches_700hz_second():
    assert make_patches(np.zeros(700), 70).shape == (10, 70)


def test_indivisible_window_rejected_at_build():
    with pytest.raises(ConfigError):
        ModelConfig(window_len=705, patch_len=70)


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(window_len=32, patch_len=8, d_model=10, n_heads=4)
    with pytest.raises(ConfigError):
        ModelConfig(window_len=32, patch_len=8, dropout_rate=1.0)
    with pytest.raises(ConfigError):
        ModelConfig(window_len=0, patch_len=8)


def test_positional_encoding_position_zero():
    table = positional_encoding(4, 6)
    assert np.array_equal(table[0], [0.0, 1.0, 0.0, 1.0, 0.0, 1.0])


def test_positional_encoding_range():
    table = positional_encoding(50, 32)
    assert table.min() >= -1.0 and table.max() <= 1.0


def test_positional_encoding_rows_distinct():
    # direct evaluation: every pair of positions must differ somewhere
    table = positional_encoding(20, 16)
    for i in range(20):
        for j in range(i + 1, 20):
            assert np.max(np.abs(table[i] - table[j])) > 1e-6


def test_zeroed_block_is_residual_identity(rng):
    model = PatchTransformer(SMALL, seed=3).eval()
    _zero_blocks(model)
    h = T.Tensor(rng.normal(size=(5, SMALL.n_patches, SMALL.d_model)))
    out = model._block(h, 0, 5, training=False, capture=None)
    assert np.array_equal(out.data, h.data)


def test_attention_rows_sum_to_one(rng):
    model = PatchTransformer(SMALL, seed=1).eval()
    capture = {}
    model.forward_batch(rng.normal(size=(3, SMALL.window_len)), capture=capture)
    assert len(capture["attn"]) == SMALL.n_blocks
    for attn in capture["attn"]:
        assert np.max(np.abs(attn.sum(axis=-1) - 1.0)) < 1e-12


def test_single_patch_attention_equals_v_projection(rng):
    # one patch -> softmax over a single key -> context is exactly V
    cfg = ModelConfig(window_len=8, patch_len=8, d_model=8, n_heads=2, n_blocks=1,
                      ff_dim=4)
    model = PatchTransformer(cfg, seed=9).eval()
    x = rng.normal(size=(2, 8))
    capture = {}
    model.forward_batch(x, capture=capture)
    w = model.weights
    embedded = x @ w["patch_embed.w"].data + w["patch_embed.b"].data
    h = embedded[:, None, :] + positional_encoding(1, 8)
    normed = T.layer_norm(
        T.Tensor(h), w["block0.ln1.gamma"], w["block0.ln1.beta"]
    ).data
    v = normed.reshape(2, 8) @ w["block0.attn.wv"].data
    assert np.max(np.abs(capture["context"][0].reshape(2, 8) - v)) < 1e-12


def test_forward_probabilities_sum_to_one(rng):
    model = PatchTransformer(SMALL, seed=4).eval()
    logits, _ = model.forward(rng.normal(size=SMALL.window_len))
    probs = T.softmax(logits, axis=0).data
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_eval_forward_deterministic(rng):
    model = PatchTransformer(SMALL, seed=5).eval()
    x = rng.normal(size=SMALL.window_len)
    l1, e1 = model.forward(x)
    l2, e2 = model.forward(x)
    assert np.array_equal(l1.data, l2.data)
    assert np.array_equal(e1.data, e2.data)


def test_zero_weight_model_uniform_probabilities(rng):
    model = PatchTransformer(SMALL, seed=6).eval()
    for w in model.weights.values():
        w.data[:] = 0.0
    logits, _ = model.forward(rng.normal(size=SMALL.window_len))
    probs = T.softmax(logits, axis=0).data
    assert np.allclose(probs, [1 / 3, 1 / 3, 1 / 3], atol=1e-12)


def test_wrong_window_length_rejected():
    model = PatchTransformer(SMALL, seed=7).eval()
    with pytest.raises(ShapeError):
        model.forward(np.zeros(SMALL.window_len + 1))
    with pytest.raises(ShapeError):
        model.forward_batch(np.zeros((2, SMALL.window_len - 1)))


def test_mode_must_be_set_explicitly():
    model = PatchTransformer(SMALL, seed=8)
    with pytest.raises(UsageError):
        model.forward(np.zeros(SMALL.window_len))


def test_patch_permutation_changes_output_with_positional_encoding(rng):
    model = PatchTransformer(SMALL, seed=11).eval()
    x = rng.normal(size=SMALL.window_len)
    perm = rng.permutation(SMALL.n_patches)
    while np.array_equal(perm, np.arange(SMALL.n_patches)):
        perm = rng.permutation(SMALL.n_patches)
    permuted = x.reshape(SMALL.n_patches, -1)[perm].reshape(-1)
    l1, _ = model.forward(x)
    l2, _ = model.forward(permuted)
    assert np.max(np.abs(l1.data - l2.data)) > 1e-9


def test_patch_permutation_invariant_without_posenc_and_zero_blocks(rng):
    cfg = ModelConfig(window_len=32, patch_len=8, d_model=8, n_heads=2,
                      n_blocks=2, ff_dim=16, positional_encoding=False)
    model = PatchTransformer(cfg, seed=12).eval()
    _zero_blocks(model)
    x = rng.normal(size=cfg.window_len)
    perm = np.array([2, 0, 3, 1])
    permuted = x.reshape(cfg.n_patches, -1)[perm].reshape(-1)
    _, e1 = model.forward(x)
    _, e2 = model.forward(permuted)
    assert np.max(np.abs(e1.data - e2.data)) < 1e-12


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_embedding_dim_is_d_model(seed, rng):
    cfg = ModelConfig(window_len=24, patch_len=6, d_model=12, n_heads=3,
                      n_blocks=1, ff_dim=8)
    model = PatchTransformer(cfg, seed=seed).eval()
    _, emb = model.forward(rng.normal(size=24))
    assert emb.shape == (12,)
    _, emb_b = model.forward_batch(rng.normal(size=(4, 24)))
    assert emb_b.shape == (4, 12)


def test_full_model_gradients_match_finite_differences(rng):
    # sampled weight coordinates, eval mode (dropout off), tol 1e-3
    model = PatchTransformer(SMALL, seed=13).eval()
    x = rng.normal(size=(2, SMALL.window_len))
    onehot = np.eye(3)[[0, 2]]

    def loss_value() -> float:
        logits, _ = model.forward_batch(x)
        probs = T.softmax(logits, axis=1)
        return T.cross_entropy(probs, T.Tensor(onehot)).item()

    with T.Tape():
        logits, _ = model.forward_batch(x)
        probs = T.softmax(logits, axis=1)
        loss = T.cross_entropy(probs, T.Tensor(onehot))
        T.backward(loss)

    h = 1e-5
    coord_rng = np.random.default_rng(99)
    for name, w in model.weights.items():
        assert w.grad is not None, name
        flat = w.data.ravel()
        gflat = w.grad.ravel()
        for idx in coord_rng.choice(flat.size, size=min(3, flat.size), replace=False):
            orig = flat[idx]
            flat[idx] = orig + h
            fp = loss_value()
            flat[idx] = orig - h
            fm = loss_value()
            flat[idx] = orig
            fd = (fp - fm) / (2 * h)
            assert abs(gflat[idx] - fd) / (abs(fd) + 1e-8) < 1e-3, name
