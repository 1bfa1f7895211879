from __future__ import annotations

import random

import pytest
import torch

import restokit as rk


@pytest.fixture(scope="session")
def tiny_unet_config() -> rk.BackboneConfig:
    return rk.BackboneConfig(
        family="unet", image_size=16, base_channels=16, time_dim=32,
        unet_block_spec=(("down", 1), ("down", 2), ("mid", 2), ("up", 1), ("up", 1)),
    )


@pytest.fixture(scope="session")
def tiny_dit_config() -> rk.BackboneConfig:
    return rk.BackboneConfig(
        family="dit", image_size=16, dit_dim=32, dit_depth=4, dit_patch=4,
        heads=2, time_dim=32,
    )


def tiny_model(config, seed=3, rank=8, dtype=torch.float32):
    return rk.build_model(config, seed=seed, lora_rank=rank, dtype=dtype)


def perturb_trainable(model, seed=11, scale=0.05):
    """Give zero-initialized layers some life so every gradient path is active."""
    from restokit.model import trainable_parameters

    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for _, p in trainable_parameters(model):
            p.add_(scale * torch.randn(p.shape, generator=gen, dtype=p.dtype))


def central_diff_check(loss_fn, named_params, n_probes=20, h=1e-4, rng_seed=5):
    """Max relative error between autograd and central finite differences.

    ``loss_fn`` must be deterministic. Gradients are taken once; probes are
    random parameter entries.
    """
    for _, p in named_params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    rnd = random.Random(rng_seed)
    worst = 0.0
    probed = 0
    while probed < n_probes:
        name, p = rnd.choice(named_params)
        if p.grad is None:
            continue
        idx = tuple(rnd.randrange(s) for s in p.shape)
        g_an = p.grad[idx].item()
        with torch.no_grad():
            orig = p[idx].item()
            p[idx] = orig + h
            lp = float(loss_fn().detach())
            p[idx] = orig - h
            lm = float(loss_fn().detach())
            p[idx] = orig
        g_fd = (lp - lm) / (2 * h)
        if abs(g_fd) < 1e-9 and abs(g_an) < 1e-9:
            probed += 1
            continue
        rel = abs(g_fd - g_an) / max(abs(g_fd), abs(g_an))
        worst = max(worst, rel)
        probed += 1
    return worst
