from __future__ import annotations

import pytest
import torch

import restokit as rk
from restokit.backbones import SelfAttention, build_backbone
from restokit.errors import ConfigError, ShapeMismatchError
from restokit.lora import LoraWeights, inject_lora, lora_sites
from tests.conftest import tiny_model


def _attention_layer_count(model) -> int:
    return sum(1 for m in model.modules() if isinstance(m, SelfAttention))


def test_injected_count_is_four_per_attention_layer():
    model = rk.build_model(rk.BackboneConfig(family="unet"), seed=7)
    assert model.lora_site_count == 4 * _attention_layer_count(model)
    model = rk.build_model(rk.BackboneConfig(family="dit"), seed=7)
    assert model.lora_site_count == 4 * _attention_layer_count(model)


def test_injection_is_exact_noop(tiny_unet_config):
    bare = build_backbone(tiny_unet_config, seed=5)
    z = torch.randn(1, 3, 16, 16)
    before = bare(z, 11)
    n = inject_lora(bare, rank=4, alpha=4.0, target=r"self_attn\.(q|k|v|out)$", seed=1)
    assert n > 0
    after = bare(z, 11)
    assert torch.equal(before, after)


def test_inject_rejects_zero_matches(tiny_unet_config):
    bare = build_backbone(tiny_unet_config, seed=5)
    with pytest.raises(ConfigError, match="matched no linear sites"):
        inject_lora(bare, rank=4, alpha=4.0, target="does_not_exist", seed=0)


def test_inject_rejects_oversized_rank(tiny_unet_config):
    bare = build_backbone(tiny_unet_config, seed=5)
    with pytest.raises(ConfigError, match="rank 256 exceeds"):
        inject_lora(bare, rank=256, alpha=1.0, target=r"self_attn\.q$", seed=0)


def test_lora_forward_hand_example():
    W = torch.eye(2)
    lora = LoraWeights("site", A=torch.tensor([[1.0, 1.0]]),
                       B=torch.tensor([[2.0], [0.0]]), rank=1, alpha=1.0)
    y = rk.lora_forward(W, lora, torch.tensor([1.0, 2.0]))
    assert torch.allclose(y, torch.tensor([7.0, 2.0]))


def test_lora_forward_zero_factor_and_zero_alpha():
    W = torch.randn(3, 4)
    x = torch.randn(4)
    zero_b = LoraWeights("s", A=torch.randn(2, 4), B=torch.zeros(3, 2), rank=2, alpha=2.0)
    assert torch.equal(rk.lora_forward(W, zero_b, x), x @ W.T)
    zero_a = LoraWeights("s", A=torch.randn(2, 4), B=torch.randn(3, 2), rank=2, alpha=0.0)
    assert torch.equal(rk.lora_forward(W, zero_a, x), x @ W.T)


def test_lora_forward_shape_mismatch():
    lora = LoraWeights("s", A=torch.randn(1, 3), B=torch.randn(2, 1), rank=1, alpha=1.0)
    with pytest.raises(ShapeMismatchError):
        rk.lora_forward(torch.eye(2), lora, torch.randn(2))


def test_merge_hand_example():
    W = torch.eye(2)
    lora = LoraWeights("site", A=torch.tensor([[1.0, 1.0]]),
                       B=torch.tensor([[2.0], [0.0]]), rank=1, alpha=1.0)
    merged = rk.merge_lora(W, lora)
    assert torch.allclose(merged, torch.tensor([[3.0, 2.0], [0.0, 1.0]]))
    assert torch.allclose(merged @ torch.tensor([1.0, 2.0]), torch.tensor([7.0, 2.0]))
    zero = LoraWeights("site", A=torch.randn(1, 2), B=torch.zeros(2, 1), rank=1, alpha=1.0)
    assert torch.equal(rk.merge_lora(W, zero), W)


def test_merge_equivalence_over_random_inputs():
    gen = torch.Generator().manual_seed(3)
    W = torch.randn(16, 24, generator=gen, dtype=torch.float64)
    lora = LoraWeights("s", A=torch.randn(4, 24, generator=gen, dtype=torch.float64),
                       B=torch.randn(16, 4, generator=gen, dtype=torch.float64),
                       rank=4, alpha=8.0)
    merged = rk.merge_lora(W, lora)
    worst = 0.0
    for _ in range(100):
        x = torch.randn(24, generator=gen, dtype=torch.float64)
        a = rk.lora_forward(W, lora, x)
        b = x @ merged.T
        worst = max(worst, float((a - b).abs().max() / b.abs().max().clamp(min=1e-12)))
    assert worst <= 1e-5


def test_site_level_merge_inside_model(tiny_unet_config):
    model = tiny_model(tiny_unet_config, rank=4)
    gen = torch.Generator().manual_seed(1)
    with torch.no_grad():
        for site in lora_sites(model):
            site.lora_B.add_(0.1 * torch.randn(site.lora_B.shape, generator=gen))
    z = torch.randn(1, 3, 16, 16)
    before = model(z, 9, use_adapters=False)
    with torch.no_grad():
        for site in lora_sites(model):
            site.merge()
    after = model(z, 9, use_adapters=False)
    rel = float((before - after).abs().max() / before.abs().max())
    assert rel <= 1e-5


def test_parameter_accounting():
    model = rk.build_model(rk.BackboneConfig(family="unet"), seed=7)
    expected = sum(s.rank * (s.lora_A.shape[1] + s.lora_B.shape[0]) for s in lora_sites(model))
    assert rk.param_count(model, "lora_only") == expected


def test_gradient_flow_reaches_lora_B(tiny_unet_config):
    from restokit.degradation import TrainSample, sample_recipe
    from restokit.training import make_train_state, train_step

    model = tiny_model(tiny_unet_config)
    assert all(torch.equal(s.lora_B, torch.zeros_like(s.lora_B)) for s in lora_sites(model))
    state = make_train_state(model, seed=0, lr=1e-2, batch_size=2)
    recipe = sample_recipe(0, "train")
    batch = [TrainSample(torch.rand(3, 16, 16), torch.rand(3, 16, 16), [], "hq", recipe)
             for _ in range(2)]
    train_step(state, batch)
    assert any(s.lora_B.abs().max() > 0 for s in lora_sites(model))
