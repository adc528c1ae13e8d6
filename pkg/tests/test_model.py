import numpy as np
import pytest
import torch

from geofuse.model import (
    CnnBranch,
    CnnConfig,
    FusionConfig,
    GeoFuseModel,
    ModelConfig,
    build_model,
    checkpoint_from_model,
    fuse,
    load_checkpoint,
    param_count,
    pool_cnn,
    save_checkpoint,
)
from geofuse.preprocess import ChannelStats
from geofuse.vit import VitBranch, VitConfig


def small_config(mode="baseline", **vit_kwargs):
    vit = dict(image_size=64, patch_size=16, embed_dim=32, depth=1, heads=2)
    vit.update(vit_kwargs)
    return ModelConfig(mode=mode, vit=VitConfig(**vit), fusion=FusionConfig(reduced_dim=16))


class TestCnnBranch:
    def test_output_shape_224(self):
        branch = CnnBranch(CnnConfig(in_channels=1))
        out = branch(torch.randn(1, 1, 224, 224))
        assert out.shape == (1, 128, 14, 14)

    @pytest.mark.parametrize("size", [28, 33, 64, 100])
    def test_output_shape_various_sizes(self, size):
        branch = CnnBranch(CnnConfig(in_channels=3))
        out = branch(torch.randn(2, 3, size, size))
        assert out.shape == (2, 128, 14, 14)

    def test_input_below_minimum_rejected(self):
        branch = CnnBranch(CnnConfig(in_channels=3))
        with pytest.raises(ValueError, match="28"):
            branch(torch.randn(1, 3, 27, 27))

    def test_zero_input_zero_output(self):
        branch = CnnBranch(CnnConfig(in_channels=1))
        branch.init_parameters(torch.Generator().manual_seed(0))  # biases zero
        out = branch(torch.zeros(1, 1, 64, 64))
        assert torch.equal(out, torch.zeros_like(out))

    def test_output_nonnegative(self):
        branch = CnnBranch(CnnConfig(in_channels=3))
        out = branch(torch.randn(2, 3, 64, 64))
        assert out.min() >= 0  # averaged post-ReLU features

    def test_conv_matches_cross_correlation_oracle(self):
        """conv1 with a hand-set kernel equals brute-force same-padded cross-correlation."""
        branch = CnnBranch(CnnConfig(in_channels=1))
        kernel = torch.tensor([[1.0, 2.0, -1.0], [0.5, -0.25, 0.0], [3.0, 1.0, -2.0]])
        with torch.no_grad():
            branch.conv1.weight.zero_()
            branch.conv1.bias.zero_()
            branch.conv1.weight[0, 0] = kernel
        x = torch.arange(25, dtype=torch.float32).reshape(1, 1, 5, 5) / 10
        with torch.no_grad():
            out = branch.conv1(x)[0, 0]

        padded = np.zeros((7, 7), dtype=np.float64)
        padded[1:6, 1:6] = x[0, 0].numpy()
        expected = np.zeros((5, 5))
        for i in range(5):
            for j in range(5):
                for di in range(3):
                    for dj in range(3):
                        expected[i, j] += padded[i + di, j + dj] * float(kernel[di, dj])
        np.testing.assert_allclose(out.numpy(), expected, atol=1e-6)

    def test_fixed_filter_counts_enforced(self):
        with pytest.raises(ValueError):
            CnnConfig(conv1_filters=32)


class TestVitBranch:
    def test_token_count_224(self):
        config = VitConfig(image_size=224, patch_size=16, embed_dim=32, depth=1, heads=2)
        branch = VitBranch(config)
        tokens, pooled = branch(torch.randn(1, 3, 224, 224))
        assert config.n_patches == 196
        assert tokens.shape == (1, 196, 32)
        assert pooled.shape == (1, 32)

    def test_attention_rows_sum_to_one(self):
        config = VitConfig(image_size=64, patch_size=16, embed_dim=32, depth=2, heads=4)
        branch = VitBranch(config)
        _, _, attn_maps = branch(torch.randn(2, 3, 64, 64), return_attn=True)
        assert len(attn_maps) == 2
        for attn in attn_maps:
            row_sums = attn.sum(dim=-1)
            assert torch.allclose(row_sums, torch.ones_like(row_sums), atol=1e-5)

    def test_cls_pooling_mode(self):
        config = VitConfig(image_size=64, patch_size=16, embed_dim=32, depth=1, heads=2,
                           pooling="cls_token")
        branch = VitBranch(config)
        tokens, pooled = branch(torch.randn(1, 3, 64, 64))
        assert pooled.shape == (1, 32)
        assert not torch.allclose(pooled, tokens.mean(dim=1))

    def test_wrong_image_size_rejected(self):
        branch = VitBranch(VitConfig(image_size=64, patch_size=16, embed_dim=32, depth=1, heads=2))
        with pytest.raises(ValueError):
            branch(torch.randn(1, 3, 96, 96))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            VitConfig(image_size=50, patch_size=16)
        with pytest.raises(ValueError):
            VitConfig(embed_dim=30, heads=4)
        with pytest.raises(ValueError):
            VitConfig(pooling="max")


class TestPoolAndFuse:
    def test_pool_constant_map(self):
        fmap = torch.full((1, 128, 14, 14), 0.625)
        np.testing.assert_allclose(pool_cnn(fmap).numpy(), 0.625, rtol=1e-6)

    def test_pool_single_cell(self):
        fmap = torch.zeros(1, 128, 14, 14)
        fmap[0, 0, 3, 5] = 196.0
        pooled = pool_cnn(fmap)
        assert pooled.shape == (1, 128)
        assert pooled[0, 0].item() == pytest.approx(1.0)
        assert pooled[0, 1:].abs().max().item() == 0.0

    def test_fuse_dimensions(self):
        z = fuse(torch.zeros(1, 192), torch.zeros(1, 128))
        assert z.shape == (1, 320)
        assert torch.equal(z, torch.zeros(1, 320))

    def test_fuse_prefix_suffix(self):
        h_vit = torch.randn(3, 40)
        h_cnn = torch.randn(3, 128)
        z = fuse(h_vit, h_cnn)
        assert torch.equal(z[:, :40], h_vit)
        assert torch.equal(z[:, 40:], h_cnn)

    def test_fuse_order_invariant_to_cnn_perturbation(self):
        h_vit = torch.randn(1, 40)
        z_a = fuse(h_vit, torch.randn(1, 128))
        z_b = fuse(h_vit, torch.randn(1, 128))
        assert torch.equal(z_a[:, :40], z_b[:, :40])

    def test_fuse_batch_mismatch(self):
        with pytest.raises(ValueError):
            fuse(torch.zeros(2, 8), torch.zeros(3, 8))


class TestHeadAndForward:
    def test_zero_weights_zero_logits(self):
        model = GeoFuseModel(small_config())
        with torch.no_grad():
            for p in model.head.parameters():
                p.zero_()
        logits = model(torch.randn(1, 3, 64, 64))
        assert torch.equal(logits, torch.zeros(1, 5))

    def test_five_logits_both_modes_224(self):
        vit = VitConfig(image_size=224, patch_size=16, embed_dim=16, depth=1, heads=2)
        img = torch.randn(1, 3, 224, 224)
        mask = torch.randint(0, 2, (1, 1, 224, 224)).float()
        for mode in ("baseline", "kgml"):
            model = build_model(ModelConfig(mode=mode, vit=vit, fusion=FusionConfig(reduced_dim=8)), seed=0)
            assert model(img, mask).shape == (1, 5)

    def test_argmax_shift_invariance(self):
        model = build_model(small_config(), seed=3)
        logits = model(torch.randn(4, 3, 64, 64))
        shifted = logits + 7.3
        assert torch.equal(logits.argmax(dim=1), shifted.argmax(dim=1))

    def test_baseline_ignores_mask(self):
        model = build_model(small_config("baseline"), seed=1)
        img = torch.randn(2, 3, 64, 64)
        out_none = model(img, None)
        out_mask = model(img, torch.ones(2, 1, 64, 64))
        assert torch.equal(out_none, out_mask)

    def test_kgml_requires_mask(self):
        model = build_model(small_config("kgml"), seed=1)
        with pytest.raises(ValueError, match="mask"):
            model(torch.randn(1, 3, 64, 64))

    def test_branch_isolation_same_seed(self):
        """Modes share the ViT stream: h_vit identical, only the CNN branch differs."""
        img = torch.randn(2, 3, 64, 64)
        base = build_model(small_config("baseline"), seed=9)
        kgml = build_model(small_config("kgml"), seed=9)
        fb_base = base(img, None, return_features=True)
        fb_kgml = kgml(img, torch.zeros(2, 1, 64, 64), return_features=True)
        assert torch.equal(fb_base.h_vit, fb_kgml.h_vit)
        assert not torch.equal(fb_base.h_cnn, fb_kgml.h_cnn)

    def test_kgml_image_and_mask_variant(self):
        config = ModelConfig(mode="kgml", cnn_image_and_mask=True,
                             vit=small_config().vit, fusion=FusionConfig(reduced_dim=16))
        assert config.cnn_in_channels == 4
        model = build_model(config, seed=0)
        logits = model(torch.randn(1, 3, 64, 64), torch.ones(1, 1, 64, 64))
        assert logits.shape == (1, 5)

    def test_feature_bundle_shapes(self):
        model = build_model(small_config("kgml"), seed=0)
        fb = model(torch.randn(2, 3, 64, 64), torch.ones(2, 1, 64, 64), return_features=True)
        assert fb.cnn_map.shape == (2, 128, 14, 14)
        assert fb.h_cnn.shape == (2, 128)
        assert fb.h_vit.shape == (2, 32)
        assert fb.fused.shape == (2, 32 + 128)
        assert fb.logits.shape == (2, 5)
        assert torch.equal(fb.fused[:, :32], fb.h_vit)
        assert torch.equal(fb.fused[:, 32:], fb.h_cnn)


class TestParamCount:
    def test_conv_parameter_arithmetic(self):
        model = GeoFuseModel(small_config("kgml"))
        conv1 = model.cnn.conv1
        conv2 = model.cnn.conv2
        assert conv1.weight.numel() + conv1.bias.numel() == 1 * 64 * 9 + 64 == 640
        assert conv2.weight.numel() + conv2.bias.numel() == 64 * 128 * 9 + 128 == 73_856

    def test_count_matches_manual_sum(self):
        config = small_config()
        model = GeoFuseModel(config)
        assert param_count(config) == sum(p.numel() for p in model.parameters())

    def test_doubling_reduced_dim_increases_count(self):
        base = small_config()
        bigger = ModelConfig(mode=base.mode, vit=base.vit, fusion=FusionConfig(reduced_dim=32))
        assert param_count(bigger) > param_count(base)

    def test_deterministic(self):
        config = small_config()
        assert param_count(config) == param_count(config)


class TestDeterminism:
    def test_same_seed_identical_parameters_and_outputs(self):
        config = small_config("kgml")
        a = build_model(config, seed=17)
        b = build_model(config, seed=17)
        for (name_a, pa), (name_b, pb) in zip(a.state_dict().items(), b.state_dict().items()):
            assert name_a == name_b
            assert torch.equal(pa, pb), name_a
        img = torch.randn(1, 3, 64, 64)
        mask = torch.ones(1, 1, 64, 64)
        assert torch.equal(a(img, mask), b(img, mask))

    def test_different_seeds_differ(self):
        config = small_config()
        a = build_model(config, seed=0)
        b = build_model(config, seed=1)
        assert not torch.equal(a.head.fc1.weight, b.head.fc1.weight)


class TestCheckpoint:
    def make_checkpoint(self, seed=0):
        model = build_model(small_config("kgml"), seed=seed)
        stats = ChannelStats(mean=np.array([0.4, 0.5, 0.6]), std=np.array([0.1, 0.2, 0.3]))
        return model, checkpoint_from_model(model, stats, seed=seed, steps=12,
                                            train_echo={"epochs": 3})

    def test_round_trip(self, tmp_path):
        model, ckpt = self.make_checkpoint()
        path = save_checkpoint(ckpt, tmp_path / "model.ckpt")
        assert path.read_bytes().startswith(b"GEOFUSE-CKPT-1\n")

        loaded = load_checkpoint(path)
        assert loaded.seed == 0
        assert loaded.steps == 12
        assert loaded.model_config == ckpt.model_config
        assert loaded.train_echo == {"epochs": 3}
        assert set(loaded.arrays) == set(ckpt.arrays)
        for name in ckpt.arrays:
            np.testing.assert_array_equal(loaded.arrays[name], ckpt.arrays[name])
        np.testing.assert_array_equal(loaded.stats.mean, ckpt.stats.mean)

    def test_restored_model_reproduces_logits(self, tmp_path):
        model, ckpt = self.make_checkpoint(seed=5)
        path = save_checkpoint(ckpt, tmp_path / "model.ckpt")
        restored = load_checkpoint(path).restore_model()
        img = torch.randn(2, 3, 64, 64)
        mask = torch.ones(2, 1, 64, 64)
        model.eval()
        with torch.no_grad():
            assert torch.equal(model(img, mask), restored(img, mask))

    def test_save_is_byte_deterministic(self, tmp_path):
        _, ckpt = self.make_checkpoint(seed=2)
        a = save_checkpoint(ckpt, tmp_path / "a.ckpt")
        b = save_checkpoint(ckpt, tmp_path / "b.ckpt")
        assert a.read_bytes() == b.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOT-A-CHECKPOINT\nmore")
        with pytest.raises(ValueError, match="GEOFUSE-CKPT-1"):
            load_checkpoint(path)


class TestModelConfig:
    def test_mode_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(mode="hybrid")

    def test_cnn_channels_by_mode(self):
        assert ModelConfig(mode="baseline").cnn_in_channels == 3
        assert ModelConfig(mode="kgml").cnn_in_channels == 1

    def test_dict_round_trip(self):
        config = small_config("kgml")
        assert ModelConfig.from_dict(config.to_dict()) == config
