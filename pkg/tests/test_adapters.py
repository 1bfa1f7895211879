from __future__ import annotations

import pytest
import torch

import restokit as rk
from restokit.adapters import (
    InsertionPlan,
    PlanEntry,
    build_adapter_stack,
    build_insertion_plan,
)
from restokit.backbones import seeded_init_, timestep_embedding
from restokit.errors import ConfigError, NormalizationError, ShapeMismatchError
from tests.conftest import central_diff_check, perturb_trainable, tiny_model


def test_unet_default_plan_covers_all_but_last_up_block():
    plan = build_insertion_plan(rk.BackboneConfig(family="unet"), "unet_default")
    assert [e.block_index for e in plan.entries] == [0, 1, 2, 3, 4, 5]
    assert len(plan.entries) == 6


def test_dit_stride_plan_depth_24():
    cfg = rk.BackboneConfig(family="dit", dit_depth=24)
    plan = build_insertion_plan(cfg, "dit_stride", stride=4)
    assert [e.block_index for e in plan.entries] == [3, 7, 11, 15, 19, 23]


def test_dit_stride_must_divide_depth():
    cfg = rk.BackboneConfig(family="dit", dit_depth=8)
    with pytest.raises(ConfigError, match="does not divide"):
        build_insertion_plan(cfg, "dit_stride", stride=5)


def test_explicit_plan_out_of_range():
    cfg = rk.BackboneConfig(family="unet")
    with pytest.raises(ConfigError, match="out of range"):
        build_insertion_plan(cfg, "explicit", blocks=[0, 9])


def test_plan_indices_strictly_increasing():
    with pytest.raises(ConfigError, match="strictly increasing"):
        InsertionPlan(family="unet", entries=(
            PlanEntry(2, 16, 64, 8), PlanEntry(1, 16, 64, 8),
        ))


def _single_adapter(variant="unet", res=8, ac=16, block_ch=32, emb_dim=32, seed=0,
                    dtype=torch.float32):
    from restokit.adapters import RestorationAdapter

    entry = PlanEntry(block_index=0, adapter_channels=ac, block_channels=block_ch,
                      resolution=res)
    ad = RestorationAdapter(variant, entry, lq_in_channels=ac, emb_dim=emb_dim, resample=None)
    seeded_init_(ad, seed)
    return ad.to(dtype)


def test_adapter_init_is_exact_noop():
    ad = _single_adapter()
    lq = torch.randn(2, 16, 8, 8)
    x_t = torch.randn(2, 32, 8, 8)
    emb = torch.randn(2, 32)
    x_out, lq_next = ad(lq, x_t, emb)
    assert torch.equal(x_out, x_t)
    assert lq_next.shape == (2, 16, 8, 8)


def test_adapter_preserves_shape():
    ad = _single_adapter(res=16, ac=16, block_ch=128)
    x_t = torch.randn(1, 128, 16, 16)
    x_out, _ = ad(torch.randn(1, 16, 16, 16), x_t, torch.randn(1, 32))
    assert x_out.shape == x_t.shape


def test_adapter_shape_mismatch_names_block():
    ad = _single_adapter()
    with pytest.raises(ShapeMismatchError, match="adapter at block 0"):
        ad(torch.randn(2, 16, 4, 4), torch.randn(2, 32, 8, 8), torch.randn(2, 32))


def test_adapter_gradients_match_finite_differences():
    ad = _single_adapter(dtype=torch.float64)
    perturb_trainable_adapter = lambda: None
    gen = torch.Generator().manual_seed(9)
    with torch.no_grad():
        for p in ad.parameters():
            p.add_(0.05 * torch.randn(p.shape, generator=gen, dtype=p.dtype))
    lq = torch.randn(1, 16, 8, 8, dtype=torch.float64, generator=gen)
    x_t = torch.randn(1, 32, 8, 8, dtype=torch.float64, generator=gen)
    emb = torch.randn(1, 32, dtype=torch.float64, generator=gen)

    def loss_fn():
        x_out, lq_next = ad(lq, x_t, emb)
        return (x_out ** 2).mean() + (lq_next ** 2).mean()

    worst = central_diff_check(loss_fn, list(ad.named_parameters()), n_probes=20)
    assert worst <= 1e-5, worst


def test_lq_next_independent_of_x_t_and_live():
    ad = _single_adapter()
    lq = torch.randn(2, 16, 8, 8)
    emb = torch.randn(2, 32)
    _, lq_a = ad(lq, torch.randn(2, 32, 8, 8), emb)
    _, lq_b = ad(lq, torch.randn(2, 32, 8, 8), emb)
    assert torch.equal(lq_a, lq_b)
    assert lq_a.abs().sum() > 0  # conditioning survives the zero output layer


def test_encode_lq_pure_and_shaped(tiny_unet_config):
    model = tiny_model(tiny_unet_config)
    img = torch.rand(1, 3, 16, 16) * 2 - 1
    a = model.encode_lq(img)
    b = model.encode_lq(img)
    assert torch.equal(a, b)
    first = model.stack.plan.entries[0]
    assert a.shape == (1, first.adapter_channels, first.resolution, first.resolution)


def test_encode_lq_zero_image_zero_bias_gives_zero(tiny_unet_config):
    model = tiny_model(tiny_unet_config)
    with torch.no_grad():
        for mod in model.stem.modules():
            if hasattr(mod, "bias") and mod.bias is not None:
                mod.bias.zero_()
    out = model.encode_lq(torch.zeros(1, 3, 16, 16))
    assert torch.equal(out, torch.zeros_like(out))


def test_encode_lq_rejects_unnormalized(tiny_unet_config):
    model = tiny_model(tiny_unet_config)
    with pytest.raises(NormalizationError):
        model.encode_lq(torch.full((1, 3, 16, 16), 2.0))


def test_chain_adapters_depth_and_length_check():
    cfg = rk.BackboneConfig(family="unet")
    plan = build_insertion_plan(cfg, "unet_default")
    stack = build_adapter_stack(plan, cfg)
    assert len(stack) == 6
    adapters = list(stack.adapters)
    with pytest.raises(ConfigError, match="6 entries but 5"):
        rk.chain_adapters(plan, adapters[:5])


def test_chain_adapters_detects_broken_link():
    cfg = rk.BackboneConfig(family="unet")
    plan = build_insertion_plan(cfg, "unet_default")
    stack = build_adapter_stack(plan, cfg)
    adapters = list(stack.adapters)
    adapters[1], adapters[2] = adapters[2], adapters[1]
    with pytest.raises(ConfigError):
        rk.chain_adapters(plan, adapters)


def test_stack_execution_deterministic(tiny_unet_config):
    model = tiny_model(tiny_unet_config)
    z = torch.randn(1, 3, 16, 16)
    lq = torch.rand(1, 3, 16, 16) * 2 - 1
    lat = model.encode_lq(lq)
    a = model(z, 5, None, lat)
    b = model(z, 5, None, lat)
    assert torch.equal(a, b)


def test_stack_init_transparency_full_model(tiny_unet_config, tiny_dit_config):
    for cfg in (tiny_unet_config, tiny_dit_config):
        model = tiny_model(cfg, seed=21)
        z = torch.randn(2, 3, 16, 16)
        lq = torch.rand(2, 3, 16, 16) * 2 - 1
        t = torch.tensor([7, 900]) if cfg.family == "unet" else torch.tensor([0.1, 0.9])
        with_adapters = model(z, t, [[2], []], model.encode_lq(lq))
        without = model(z, t, [[2], []], use_adapters=False)
        assert torch.equal(with_adapters, without)


def test_locality_lq_latent_influences_output_after_training(tiny_unet_config):
    from restokit.training import make_train_state, train_step
    from restokit.degradation import TrainSample, sample_recipe

    model = tiny_model(tiny_unet_config)
    recipe = sample_recipe(0, "train")
    hq = torch.rand(3, 16, 16)
    lq = torch.rand(3, 16, 16)
    state = make_train_state(model, seed=0, lr=1e-2, batch_size=2)
    batch = [TrainSample(hq, lq, [], "hq", recipe) for _ in range(2)]
    train_step(state, batch)

    z = torch.randn(1, 3, 16, 16)
    lat = model.encode_lq(torch.rand(1, 3, 16, 16) * 2 - 1).requires_grad_(True)
    out = model(z, 5, None, lat)
    out.square().mean().backward()
    assert lat.grad is not None and lat.grad.abs().max() > 0
