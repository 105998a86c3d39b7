"""Full enhancement network: shapes, identity init, config round trips."""

import pytest
import torch

from ctenhance.models import EnhancementNetwork, ModelConfig, SemanticEncoderConfig

from conftest import tiny_model_config


@pytest.fixture(scope="module")
def tiny_net():
    torch.manual_seed(0)
    return EnhancementNetwork(tiny_model_config())


class TestConfig:
    def test_defaults_match_contract(self):
        cfg = ModelConfig()
        assert cfg.embed_dim == 96
        assert cfg.encoder.embed_dim == 192
        assert cfg.encoder.patch_size == 16
        assert cfg.conv_kernels == (3, 5, 7)

    def test_dict_round_trip(self):
        cfg = tiny_model_config(n_groups=2, global_residual=False)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg

    def test_from_partial_dict(self):
        cfg = ModelConfig.from_dict({"embed_dim": 48, "encoder": {"depth": 3}})
        assert cfg.embed_dim == 48
        assert cfg.encoder.depth == 3
        assert cfg.n_groups == ModelConfig().n_groups

    def test_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(n_groups=0)
        with pytest.raises(ValueError):
            ModelConfig(blocks_per_group=0)
        with pytest.raises(ValueError):
            ModelConfig(local_width=0)


class TestForward:
    @pytest.mark.parametrize("hw", [(64, 64), (96, 96), (64, 96), (48, 80)])
    def test_shape_preserved(self, tiny_net, hw):
        x = torch.rand(1, 1, *hw)
        with torch.no_grad():
            assert tiny_net(x).shape == x.shape

    def test_non_multiple_of_16_supported(self, tiny_net):
        x = torch.rand(1, 1, 50, 70)
        with torch.no_grad():
            assert tiny_net(x).shape == (1, 1, 50, 70)

    def test_input_rank_handling(self, tiny_net):
        img = torch.rand(32, 32)
        with torch.no_grad():
            y2 = tiny_net(img)
            y3 = tiny_net(img[None])
            y4 = tiny_net(img[None, None])
        torch.testing.assert_close(y2, y3)
        torch.testing.assert_close(y3, y4)
        with pytest.raises(ValueError):
            tiny_net(torch.rand(1, 2, 32, 32))

    def test_non_finite_input_rejected(self, tiny_net):
        x = torch.rand(1, 1, 32, 32)
        x[0, 0, 0, 0] = torch.nan
        with pytest.raises(ValueError, match="non-finite"):
            tiny_net(x)


class TestIdentityInit:
    def test_zero_head_plus_global_residual_is_identity(self):
        torch.manual_seed(1)
        net = EnhancementNetwork(tiny_model_config())
        x = torch.rand(2, 1, 48, 48)
        with torch.no_grad():
            torch.testing.assert_close(net(x), x, rtol=0, atol=0)

    def test_without_global_residual_output_is_zero(self):
        torch.manual_seed(2)
        net = EnhancementNetwork(tiny_model_config(global_residual=False))
        x = torch.rand(1, 1, 32, 32)
        with torch.no_grad():
            torch.testing.assert_close(net(x), torch.zeros_like(x))


class TestParameters:
    def test_encoder_excluded_from_trainable_count(self, tiny_net):
        trainable = tiny_net.trainable_parameter_count()
        assert trainable > 0
        total = sum(p.numel() for p in tiny_net.parameters())
        frozen = sum(p.numel() for p in tiny_net.extractor.encoder.parameters())
        assert total == trainable + frozen

    def test_gradients_flow_to_all_trainable_parameters(self):
        torch.manual_seed(3)
        net = EnhancementNetwork(tiny_model_config())
        x = torch.rand(1, 1, 32, 32)
        (net(x) - x).square().mean().backward()
        for name, p in net.named_parameters():
            if not p.requires_grad:
                continue
            assert p.grad is not None, name
            assert torch.all(torch.isfinite(p.grad)), name


class TestLargeInputCapability:
    def test_512_via_config(self):
        # a throughput-sized config must accept 512x512 inputs
        torch.manual_seed(4)
        cfg = ModelConfig(
            embed_dim=8,
            state_dim=2,
            n_groups=1,
            blocks_per_group=1,
            local_width=4,
            encoder=SemanticEncoderConfig(depth=1, embed_dim=32, n_heads=2),
        )
        net = EnhancementNetwork(cfg)
        x = torch.rand(1, 1, 512, 512)
        with torch.no_grad():
            out = net(x)
        assert out.shape == (1, 1, 512, 512)
        torch.testing.assert_close(out, x)  # still identity at init
