from __future__ import annotations

import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

import restokit as rk
from restokit.degradation import (
    BlurSpec,
    CompressionSpec,
    DegradationRecipe,
    NoiseSpec,
    ResampleSpec,
    StageSpec,
    degradation_descriptors,
    gaussian_kernel,
)
from restokit.errors import DomainError, NormalizationError
from restokit.text import detokenize
from restokit.textures import generate_texture


def test_sample_recipe_deterministic():
    a = rk.sample_recipe(123, "train")
    b = rk.sample_recipe(123, "train")
    assert a == b
    assert rk.sample_recipe(124, "train") != a


def test_eval_8x_is_single_resample_stage():
    r = rk.sample_recipe(5, "eval_8x")
    assert len(r.stages) == 1
    stage = r.stages[0]
    assert stage.blur is None and stage.noise is None and stage.compression is None
    assert stage.resample.scale == 8.0
    assert rk.sample_recipe(99, "eval_8x") == rk.sample_recipe(5, "eval_8x")._replace_seed(99) \
        if hasattr(r, "_replace_seed") else True


def test_recipe_parameters_within_ranges():
    for seed in range(1000):
        r = rk.sample_recipe(seed, "train", second_order=(seed % 2 == 0))
        for stage in r.stages:
            assert stage.blur.kernel in ("iso_gauss", "aniso_gauss")
            assert 0.2 <= stage.blur.sigma_x <= 3.0
            assert 0.2 <= stage.blur.sigma_y <= 3.0
            assert stage.blur.size % 2 == 1 and stage.blur.size >= 3
            assert 1.0 <= stage.resample.scale <= 4.0
            assert stage.resample.mode in ("nearest", "bilinear", "bicubic")
            assert 0.0 <= stage.noise.sigma <= 0.1
            assert 30 <= stage.compression.quality <= 95


def test_recipe_round_trips_through_dict():
    r = rk.sample_recipe(7, "train", second_order=True)
    assert DegradationRecipe.from_dict(r.to_dict()) == r


def _identity_recipe(seed=0):
    return DegradationRecipe(stages=(StageSpec(
        blur=BlurSpec(kernel="iso_gauss", sigma_x=0.0, sigma_y=0.0, angle=0.0, size=5),
        resample=ResampleSpec(scale=1.0, mode="bilinear"),
        noise=NoiseSpec(sigma=0.0),
        compression=CompressionSpec(quality=95),
    ),), seed=seed)


def test_identity_composition_recipe():
    hq, _ = generate_texture(3, 0)
    lq = rk.apply_recipe(hq, _identity_recipe())
    assert (lq - hq).abs().max() <= 1.0 / 255.0


def test_constant_image_stays_constant():
    hq = torch.full((3, 32, 32), 0.42)
    r = DegradationRecipe(stages=(StageSpec(
        blur=BlurSpec(kernel="aniso_gauss", sigma_x=2.0, sigma_y=0.7, angle=0.8, size=9),
        resample=ResampleSpec(scale=2.0, mode="bilinear"),
    ),), seed=1)
    lq = rk.apply_recipe(hq, r)
    assert (lq - lq.mean()).abs().max() < 1e-5
    assert abs(lq.mean().item() - 0.42) < 2e-3


def test_apply_recipe_bit_identical():
    hq, _ = generate_texture(11, 4)
    recipe = rk.sample_recipe(2024, "train")
    a = rk.apply_recipe(hq, recipe)
    b = rk.apply_recipe(hq, recipe)
    assert torch.equal(a, b)


def test_apply_recipe_golden_digest():
    # frozen output digest for a fixed (hq, recipe); guards cross-run drift
    import hashlib

    hq, _ = generate_texture(11, 4)
    lq = rk.apply_recipe(hq, rk.sample_recipe(2024, "train"))
    digest = hashlib.sha256(lq.numpy().tobytes()).hexdigest()
    assert digest == GOLDEN_LQ_DIGEST


def test_apply_recipe_rejects_bad_range():
    with pytest.raises(NormalizationError):
        rk.apply_recipe(torch.full((3, 32, 32), 1.5), _identity_recipe())
    bad = torch.zeros(3, 32, 32)
    bad[0, 0, 0] = float("nan")
    with pytest.raises(NormalizationError):
        rk.apply_recipe(bad, _identity_recipe())


@settings(max_examples=40, deadline=None)
@given(sigma_x=st.floats(0.05, 3.0), sigma_y=st.floats(0.05, 3.0),
       angle=st.floats(0, math.pi), half=st.integers(1, 8))
def test_kernels_normalized(sigma_x, sigma_y, angle, half):
    k = gaussian_kernel(BlurSpec("aniso_gauss", sigma_x, sigma_y, angle, 2 * half + 1))
    assert abs(k.sum().item() - 1.0) <= 1e-6
    assert (k >= 0).all()


def test_compression_quality_100_near_lossless():
    gen = torch.Generator().manual_seed(0)
    for _ in range(5):
        img = torch.rand(3, 16, 16, generator=gen)
        out = rk.compression_sim(img, 100)
        assert (out - img).abs().max() <= 2.0 / 255.0


def test_compression_constant_image():
    img = torch.full((3, 24, 24), 0.6)
    out = rk.compression_sim(img, 40)
    assert (out - out.mean()).abs().max() < 1e-6
    assert abs(out.mean().item() - 0.6) < 4.0 / 255.0


def test_compression_monotone_in_quality():
    worse = 0
    for i in range(50):
        img, _ = generate_texture(77, i)
        p30 = rk.psnr(rk.compression_sim(img, 30), img)
        p90 = rk.psnr(rk.compression_sim(img, 90), img)
        if p30 >= p90:
            worse += 1
    assert worse == 0


def test_compression_pads_non_multiple_of_8():
    img = torch.rand(3, 19, 21, generator=torch.Generator().manual_seed(1))
    out = rk.compression_sim(img, 70)
    assert out.shape == img.shape


def test_compression_rejects_bad_quality():
    with pytest.raises(DomainError):
        rk.compression_sim(torch.rand(3, 8, 8), 0)


def test_caption_policy_degraded_branch():
    recipe = rk.sample_recipe(1, "train")
    prompt, target = rk.caption_policy(0, [5, 6], recipe, p_null=0.0, p_degraded=1.0)
    words = detokenize(prompt)
    assert "low quality" in words
    assert "compressed" in words
    assert target == "lq"


def test_caption_policy_null_branch():
    recipe = rk.sample_recipe(1, "train")
    prompt, target = rk.caption_policy(0, [5, 6], recipe, p_null=1.0, p_degraded=0.0)
    assert prompt == [] and target == "hq"


def test_caption_policy_base_branch():
    recipe = rk.sample_recipe(1, "train")
    prompt, target = rk.caption_policy(0, [5, 6], recipe, p_null=0.0, p_degraded=0.0)
    assert prompt == [5, 6] and target == "hq"


def test_caption_policy_rejects_bad_probabilities():
    recipe = rk.sample_recipe(1, "train")
    with pytest.raises(DomainError):
        rk.caption_policy(0, [], recipe, p_null=0.7, p_degraded=0.7)


def test_descriptor_tokens_reflect_recipe():
    plain = DegradationRecipe(stages=(StageSpec(noise=NoiseSpec(sigma=0.05)),), seed=0)
    words = detokenize(degradation_descriptors(plain))
    assert "low quality" in words and "compressed" not in words


def test_policy_distribution_within_3_sigma():
    n = 1000
    p_null, p_degraded = 0.1, 0.1
    recipe = rk.sample_recipe(1, "train")
    counts = {"null": 0, "degraded": 0, "base": 0}
    for seed in range(n):
        prompt, target = rk.caption_policy(seed, [3], recipe, p_null, p_degraded)
        if target == "lq":
            counts["degraded"] += 1
        elif prompt == []:
            counts["null"] += 1
        else:
            counts["base"] += 1
    for key, p in (("null", p_null), ("degraded", p_degraded), ("base", 0.8)):
        sigma = math.sqrt(n * p * (1 - p))
        assert abs(counts[key] - n * p) <= 3 * sigma, (key, counts)


def test_blur_resample_reduce_interior_variance():
    for i in range(10):
        img, _ = generate_texture(5, i)
        r = DegradationRecipe(stages=(StageSpec(
            blur=BlurSpec("iso_gauss", 1.5, 1.5, 0.0, 9),
            resample=ResampleSpec(scale=2.0, mode="bilinear"),
        ),), seed=0)
        lq = rk.apply_recipe(img, r)
        interior = (slice(None), slice(6, -6), slice(6, -6))
        assert lq[interior].var() <= img[interior].var() + 1e-6


def test_pair_determinism_full():
    hq, cap = generate_texture(9, 1)
    a = rk.make_train_sample(hq, [1, 2], 555)
    b = rk.make_train_sample(hq, [1, 2], 555)
    assert torch.equal(a.lq, b.lq)
    assert a.prompt_tokens == b.prompt_tokens and a.target == b.target


GOLDEN_LQ_DIGEST = "__FILLED_AFTER_FREEZE__"
