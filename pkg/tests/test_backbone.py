from __future__ import annotations

import pytest
import torch

import restokit as rk
from restokit.backbones import DiTBackbone, UNetBackbone, build_backbone
from restokit.errors import ConfigError, DomainError, ShapeMismatchError
from tests.conftest import central_diff_check, perturb_trainable, tiny_model


def test_build_backbone_deterministic():
    cfg = rk.BackboneConfig(family="unet")
    a = build_backbone(cfg, seed=7)
    b = build_backbone(cfg, seed=7)
    pa = dict(a.named_parameters())
    pb = dict(b.named_parameters())
    assert pa.keys() == pb.keys()
    for name in pa:
        assert torch.equal(pa[name], pb[name]), name


def test_build_backbone_seed_changes_parameters():
    cfg = rk.BackboneConfig(family="unet", base_channels=16, image_size=16,
                            unet_block_spec=(("down", 1), ("mid", 1), ("up", 1)))
    a = build_backbone(cfg, seed=1)
    b = build_backbone(cfg, seed=2)
    assert not torch.equal(a.in_conv.weight, b.in_conv.weight)


def test_dit_block_count():
    cfg = rk.BackboneConfig(family="dit", dit_depth=24, dit_dim=128)
    net = build_backbone(cfg, seed=0)
    assert isinstance(net, DiTBackbone)
    assert len(net.blocks) == 24


def test_indivisible_image_size_rejected():
    with pytest.raises(ConfigError):
        rk.BackboneConfig(family="unet", image_size=30)  # 3 down blocks need /8


def test_mismatched_up_down_counts_rejected():
    with pytest.raises(ConfigError, match="up-block count"):
        rk.BackboneConfig(family="unet", image_size=32,
                          unet_block_spec=(("down", 1), ("down", 2), ("mid", 2), ("up", 1)))


def test_unet_default_has_seven_blocks():
    net = build_backbone(rk.BackboneConfig(family="unet"), seed=0)
    assert isinstance(net, UNetBackbone)
    assert len(net.blocks) == 7
    kinds = [type(b).__name__ for b in net.blocks]
    assert kinds == ["DownBlock"] * 3 + ["MidBlock"] + ["UpBlock"] * 3


def test_timestep_embedding_at_zero():
    emb = rk.timestep_embedding(0, 8)
    assert torch.equal(emb, torch.tensor([0.0, 0, 0, 0, 1, 1, 1, 1], dtype=torch.float64))


def test_timestep_embedding_pure():
    a = rk.timestep_embedding(37.5, 64)
    b = rk.timestep_embedding(37.5, 64)
    assert torch.equal(a, b)


def test_timestep_embedding_formula():
    import math

    dim = 16
    t = 13.0
    emb = rk.timestep_embedding(t, dim)
    half = dim // 2
    for k in range(half):
        omega = math.exp(-k * math.log(10000.0) / (half - 1))
        assert emb[k].item() == pytest.approx(math.sin(t * omega), abs=1e-12)
        assert emb[half + k].item() == pytest.approx(math.cos(t * omega), abs=1e-12)


def test_timestep_embedding_odd_dim_rejected():
    with pytest.raises(DomainError):
        rk.timestep_embedding(1.0, 7)


def test_forward_shape_preserved(tiny_unet_config, tiny_dit_config):
    for cfg in (tiny_unet_config, tiny_dit_config):
        model = tiny_model(cfg)
        z = torch.randn(2, 3, 16, 16)
        t = torch.tensor([3, 9]) if cfg.family == "unet" else torch.tensor([0.3, 0.9])
        out = model(z, t, use_adapters=False)
        assert out.shape == z.shape


def test_forward_rejects_bad_shape(tiny_unet_config):
    model = tiny_model(tiny_unet_config)
    with pytest.raises(ShapeMismatchError, match="backbone input"):
        model(torch.randn(1, 3, 8, 8), 3, use_adapters=False)


def test_forward_deterministic(tiny_unet_config):
    model = tiny_model(tiny_unet_config)
    z = torch.randn(1, 3, 16, 16)
    lq = torch.rand(1, 3, 16, 16) * 2 - 1
    lat = model.encode_lq(lq)
    a = model(z, 5, [[1, 2]], lat)
    b = model(z, 5, [[1, 2]], lat)
    assert torch.equal(a, b)


def test_param_count_single_linear():
    lin = torch.nn.Linear(4, 3)
    assert rk.param_count(lin, "all") == 4 * 3 + 3


def test_param_count_no_adapters_zero(tiny_unet_config):
    bare = build_backbone(tiny_unet_config, seed=0)
    assert rk.param_count(bare, "adapters_only") == 0
    assert rk.param_count(bare, "all") == rk.param_count(bare, "backbone_only")


def test_param_count_unknown_filter(tiny_unet_config):
    with pytest.raises(ConfigError):
        rk.param_count(build_backbone(tiny_unet_config, seed=0), "bogus")


def test_default_profiles_trainable_fraction_under_20_percent():
    for family in ("unet", "dit"):
        model = rk.build_model(rk.BackboneConfig(family=family), seed=7)
        frac = (rk.param_count(model, "adapters_only") + rk.param_count(model, "lora_only")) \
            / rk.param_count(model, "backbone_only")
        assert frac < 0.20, f"{family}: {frac:.3f}"


@pytest.mark.parametrize("family", ["unet", "dit"])
def test_backbone_gradients_match_finite_differences(family, tiny_unet_config, tiny_dit_config):
    cfg = tiny_unet_config if family == "unet" else tiny_dit_config
    model = tiny_model(cfg, dtype=torch.float64)
    perturb_trainable(model)
    for p in model.parameters():
        p.requires_grad_(True)
    z = torch.randn(1, 3, 16, 16, dtype=torch.float64, generator=torch.Generator().manual_seed(1))
    lq = torch.rand(1, 3, 16, 16, dtype=torch.float64, generator=torch.Generator().manual_seed(2)) * 2 - 1
    t = 17 if family == "unet" else 0.4
    lat = model.encode_lq(lq).detach()

    def loss_fn():
        return (model(z, t, [[1]], lat) ** 2).mean()

    named = [(n, p) for n, p in model.named_parameters()]
    worst = central_diff_check(loss_fn, named, n_probes=24)
    assert worst <= 1e-5, worst
