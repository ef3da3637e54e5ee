import numpy as np
import pytest
import torch

from graspdiff.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from graspdiff.conditions import (LABEL_BACKGROUND, blank_conditions,
                                  pack_labels, unpack_labels)
from graspdiff.denoiser import (AttentionBlock, ConditionalDenoiser,
                                DenoiserConfig, build_model,
                                timestep_embedding)
from graspdiff.text import HashTextEmbedder

from conftest import TINY, random_condition_set


def make_inputs(model, batch=2, seed=0):
    gen = torch.Generator().manual_seed(seed)
    size = model.cfg.image_size
    x = torch.randn(batch, 3, size, size, generator=gen)
    t = torch.randint(0, 50, (batch,), generator=gen)
    ctx = torch.randn(batch, model.cfg.context_tokens, model.cfg.context_dim,
                      generator=gen)
    return x, t, ctx


class TestConditionEncoding:
    def test_zero_weights_give_zero_embeddings(self, rng):
        cfg = DenoiserConfig(image_size=8, base_channels=8, channel_multiples=(1, 2),
                             context_dim=8, condition_weights=(0.0, 0.0, 0.0))
        model = build_model(cfg, seed=0)
        emb = model.encode_conditions([random_condition_set(rng)])
        assert len(emb) == 2
        for level in emb:
            assert torch.all(level == 0)

    def test_deterministic(self, tiny_model, rng):
        conds = random_condition_set(rng)
        a = tiny_model.encode_conditions([conds])
        b = tiny_model.encode_conditions([conds])
        for x, y in zip(a, b):
            assert torch.equal(x, y)

    def test_weight_linearity(self, rng):
        conds = random_condition_set(rng)
        embs = {}
        for w in (1.0, 2.0):
            cfg = DenoiserConfig(image_size=8, base_channels=8,
                                 channel_multiples=(1,), context_dim=8,
                                 condition_weights=(w, 0.0, 0.0))
            embs[w] = build_model(cfg, seed=3).encode_conditions([conds])
        for one, two in zip(embs[1.0], embs[2.0]):
            assert torch.allclose(two, 2.0 * one, atol=1e-6)

    def test_resolution_mismatch_rejected(self, tiny_model, rng):
        conds = random_condition_set(rng, resolution=16)
        with pytest.raises(ValueError):
            tiny_model.encode_conditions([conds])

    def test_level_channel_counts(self, rng):
        cfg = DenoiserConfig(image_size=16, base_channels=8,
                             channel_multiples=(1, 2, 4), context_dim=8)
        model = build_model(cfg, seed=0)
        emb = model.encode_conditions([random_condition_set(rng, 16)])
        shapes = [tuple(e.shape) for e in emb]
        assert shapes == [(1, 8, 16, 16), (1, 16, 8, 8), (1, 32, 4, 4)]


class TestBlankConditions:
    def test_blank_equals_zero_maps(self, tiny_model):
        blank = blank_conditions((8, 8))
        zero = blank_conditions((8, 8))  # identical all-zero construction
        for name in ("skeleton", "segmentation", "normal"):
            assert np.all(getattr(blank, name) == 0)
        a = tiny_model.encode_conditions([blank])
        b = tiny_model.encode_conditions([zero])
        for x, y in zip(a, b):
            assert torch.equal(x, y)

    def test_blank_segmentation_decodes_to_background(self):
        blank = blank_conditions((8, 8))
        labels = unpack_labels(blank.segmentation)
        assert np.all(labels == LABEL_BACKGROUND)

    def test_blank_embeddings_spatially_constant(self, tiny_model):
        with torch.no_grad():
            emb = tiny_model.encode_conditions([blank_conditions((8, 8))])
        for level in emb:
            spatial_std = level.std(dim=(2, 3))
            assert float(spatial_std.max()) < 1e-6

    def test_pack_unpack_roundtrip(self, rng):
        labels = rng.integers(0, 3, size=(12, 12))
        np.testing.assert_array_equal(unpack_labels(pack_labels(labels)), labels)

    def test_blank_rejects_bad_resolution(self):
        with pytest.raises(ValueError):
            blank_conditions((0, 8))


class TestDenoise:
    def test_zero_embedding_matches_unconditional(self, tiny_model, rng):
        x, t, ctx = make_inputs(tiny_model)
        zero_emb = [torch.zeros_like(e) for e
                    in tiny_model.encode_conditions([random_condition_set(rng)] * 2)]
        a = tiny_model.denoise(x, t, ctx, zero_emb)
        b = tiny_model.denoise(x, t, ctx, None)
        assert torch.equal(a, b)

    def test_output_shape(self, tiny_model):
        x, t, ctx = make_inputs(tiny_model, batch=3)
        out = tiny_model.denoise(x, t, ctx, None)
        assert out.shape == x.shape

    def test_level_count_mismatch(self, tiny_model):
        x, t, ctx = make_inputs(tiny_model)
        bad = [torch.zeros(2, 8, 8, 8), torch.zeros(2, 8, 4, 4)]
        with pytest.raises(ValueError):
            tiny_model.denoise(x, t, ctx, bad)

    def test_non_finite_input_rejected(self, tiny_model):
        x, t, ctx = make_inputs(tiny_model)
        x[0, 0, 0, 0] = float("nan")
        with pytest.raises(ValueError):
            tiny_model.denoise(x, t, ctx, None)

    def test_bitwise_deterministic(self, tiny_model, rng):
        conds = [random_condition_set(rng) for _ in range(2)]
        x, t, ctx = make_inputs(tiny_model)
        emb = tiny_model.encode_conditions(conds)
        a = tiny_model.denoise(x, t, ctx, emb)
        b = tiny_model.denoise(x, t, ctx, emb)
        assert a.detach().numpy().tobytes() == b.detach().numpy().tobytes()

    def test_fresh_model_predicts_zero(self, tiny_model):
        # output convolution is zero-initialized
        x, t, ctx = make_inputs(tiny_model)
        assert torch.all(tiny_model.denoise(x, t, ctx, None) == 0)

    def test_embedding_perturbation_matches_finite_differences(self, rng):
        model = build_model(TINY, seed=5).double()
        x, t, ctx = make_inputs(model)
        x, ctx = x.double(), ctx.double()
        conds = [random_condition_set(rng) for _ in range(2)]
        emb = [e.detach().clone().requires_grad_(True)
               for e in model.encode_conditions(conds)]
        out = model.denoise(x, t, ctx, emb)
        direction = torch.randn(emb[0].shape, dtype=torch.float64,
                                generator=torch.Generator().manual_seed(7))
        probe = torch.randn(out.shape, dtype=torch.float64,
                            generator=torch.Generator().manual_seed(8))
        scalar = (out * probe).sum()
        (grad,) = torch.autograd.grad(scalar, emb[0])
        analytic = float((grad * direction).sum())

        h = 1e-3
        with torch.no_grad():
            plus = model.denoise(x, t, ctx, [emb[0] + h * direction])
            minus = model.denoise(x, t, ctx, [emb[0] - h * direction])
        numeric = float(((plus - minus) * probe).sum() / (2 * h))
        assert analytic == pytest.approx(numeric, rel=1e-3)


class TestAnchorAttention:
    def test_duplicated_keys_values_identity(self):
        torch.manual_seed(0)
        block = AttentionBlock(16, context_dim=8, heads=2).eval()
        x = torch.randn(3, 16, 4, 4)
        ctx = torch.randn(3, 5, 8)
        with torch.no_grad():
            plain = block(x, ctx)
            block.anchor_index = 0
            anchored = block(x[:1], ctx[:1])  # anchor attends to itself twice
            block.anchor_index = None
        assert torch.allclose(anchored, plain[:1], atol=1e-5)

    def test_context_manager_resets(self, tiny_model):
        blocks = [m for m in tiny_model.modules() if isinstance(m, AttentionBlock)]
        assert blocks
        with tiny_model.anchor_attention(0):
            assert all(b.anchor_index == 0 for b in blocks)
        assert all(b.anchor_index is None for b in blocks)

    def test_anchor_changes_non_anchor_frames(self, tiny_model, rng):
        # the fresh output conv is zero-initialized; randomize it so the
        # attention path is observable at the output
        torch.manual_seed(11)
        torch.nn.init.normal_(tiny_model.unet.out_conv.weight, std=0.2)
        conds = [random_condition_set(rng) for _ in range(3)]
        x, t, ctx = make_inputs(tiny_model, batch=3)
        # give frames distinct content so attention mixing matters
        x[1] += 0.5
        x[2] -= 0.5
        emb = tiny_model.encode_conditions(conds)
        with torch.no_grad():
            plain = tiny_model.denoise(x, t, ctx, emb)
            with tiny_model.anchor_attention(1):
                mixed = tiny_model.denoise(x, t, ctx, emb)
        assert torch.allclose(mixed[1], plain[1], atol=1e-5)
        assert not torch.allclose(mixed[0], plain[0], atol=1e-4)


class TestCheckpoints:
    def test_roundtrip_bitwise(self, tiny_model, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, tiny_model, trainer_state=None)
        loaded, state = load_checkpoint(path)
        assert state is None
        for (na, pa), (nb, pb) in zip(tiny_model.state_dict().items(),
                                      loaded.state_dict().items()):
            assert na == nb
            assert pa.numpy().tobytes() == pb.numpy().tobytes()

    def test_config_mismatch_rejected(self, tiny_model, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, tiny_model)
        other = DenoiserConfig(image_size=8, base_channels=16,
                               channel_multiples=(1,), context_dim=8)
        with pytest.raises(CheckpointError, match="config"):
            load_checkpoint(path, expect_config=other)

    def test_corruption_detected(self, tiny_model, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, tiny_model)
        blob = bytearray(path.read_bytes())
        blob[200] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="corrupt"):
            load_checkpoint(path)

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"hello world")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)


class TestPlumbing:
    def test_timestep_embedding_shape_and_determinism(self):
        t = torch.tensor([0, 1, 500])
        emb = timestep_embedding(t, 16)
        assert emb.shape == (3, 16)
        assert torch.equal(emb, timestep_embedding(t, 16))
        assert not torch.allclose(emb[0], emb[2])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DenoiserConfig(channel_multiples=())
        with pytest.raises(ValueError):
            DenoiserConfig(condition_weights=(1.0, 1.0))
        with pytest.raises(ValueError):
            DenoiserConfig(image_size=30, channel_multiples=(1, 2, 4))

    def test_config_dict_roundtrip(self):
        cfg = DenoiserConfig(image_size=16, base_channels=8,
                             channel_multiples=(1, 2), attention_levels=(1,))
        assert DenoiserConfig.from_dict(cfg.to_dict()) == cfg

    def test_decoder_parameter_names_cover_adapter_and_decoder(self, tiny_model):
        names = tiny_model.decoder_parameter_names()
        assert any(n.startswith("adapter.") for n in names)
        assert any(n.startswith("unet.dec_blocks") for n in names)
        assert not any(n.startswith("unet.enc_blocks") for n in names)
        assert not any(n.startswith("unet.time_mlp") for n in names)

    def test_hash_text_embedder(self):
        emb = HashTextEmbedder(context_dim=8, max_tokens=4)
        a = emb.embed("A hand grasping a red mug")
        b = emb.embed("a hand grasping a red mug")
        assert a.shape == (4, 8)
        np.testing.assert_array_equal(a, b)  # case-insensitive tokens
        assert np.all(emb.embed("") == 0)
        assert np.linalg.norm(a[0]) == pytest.approx(1.0, abs=1e-6)
