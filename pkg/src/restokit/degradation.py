"""Synthetic LQ/HQ pair construction.

A recipe is a short ordered program (blur -> resample -> noise -> compression,
optionally repeated once) whose parameters are drawn from a seeded stream, so
``(hq, seed, profile)`` fully determines the degraded image, the caption, and
the training target. Compression is simulated with block-DCT quantization:
bit-exact, dependency-free, and it produces the right kind of distortion.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F

from .errors import DomainError, NormalizationError
from .rng import make_generator
from .text import tokenize

RESAMPLE_MODES = ("nearest", "bilinear", "bicubic")

# Classic 8x8 luminance quantization table.
_LUMA_TABLE = torch.tensor([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=torch.float64)


def _dct_matrix() -> torch.Tensor:
    n = torch.arange(8, dtype=torch.float64)
    k = n[:, None]
    mat = torch.cos(math.pi * (2 * n[None, :] + 1) * k / 16.0)
    mat[0] *= math.sqrt(1.0 / 8.0)
    mat[1:] *= math.sqrt(2.0 / 8.0)
    return mat


_DCT = _dct_matrix()


@dataclass(frozen=True)
class BlurSpec:
    kernel: str  # iso_gauss | aniso_gauss
    sigma_x: float
    sigma_y: float
    angle: float
    size: int


@dataclass(frozen=True)
class ResampleSpec:
    scale: float
    mode: str


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float


@dataclass(frozen=True)
class CompressionSpec:
    quality: int


@dataclass(frozen=True)
class StageSpec:
    blur: BlurSpec | None = None
    resample: ResampleSpec | None = None
    noise: NoiseSpec | None = None
    compression: CompressionSpec | None = None


@dataclass(frozen=True)
class DegradationRecipe:
    stages: tuple[StageSpec, ...]
    seed: int
    up_mode: str = "bilinear"

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "DegradationRecipe":
        stages = []
        for s in d["stages"]:
            stages.append(StageSpec(
                blur=BlurSpec(**s["blur"]) if s.get("blur") else None,
                resample=ResampleSpec(**s["resample"]) if s.get("resample") else None,
                noise=NoiseSpec(**s["noise"]) if s.get("noise") else None,
                compression=CompressionSpec(**s["compression"]) if s.get("compression") else None,
            ))
        return DegradationRecipe(stages=tuple(stages), seed=d["seed"],
                                 up_mode=d.get("up_mode", "bilinear"))


def _uniform(gen: torch.Generator, lo: float, hi: float) -> float:
    return (torch.rand((), generator=gen, dtype=torch.float64) * (hi - lo) + lo).item()


def _randint(gen: torch.Generator, lo: int, hi: int) -> int:
    return int(torch.randint(lo, hi + 1, (1,), generator=gen).item())


def _blur_size(sigma: float) -> int:
    return int(min(17, max(3, 2 * math.ceil(2.5 * sigma) + 1)))


def _draw_stage(gen: torch.Generator, gentle: bool) -> StageSpec:
    hi_sigma = 1.5 if gentle else 3.0
    iso = _uniform(gen, 0.0, 1.0) < 0.7
    sigma_x = _uniform(gen, 0.2, hi_sigma)
    sigma_y = sigma_x if iso else _uniform(gen, 0.2, hi_sigma)
    angle = 0.0 if iso else _uniform(gen, 0.0, math.pi)
    blur = BlurSpec(
        kernel="iso_gauss" if iso else "aniso_gauss",
        sigma_x=sigma_x, sigma_y=sigma_y, angle=angle,
        size=_blur_size(max(sigma_x, sigma_y)),
    )
    resample = ResampleSpec(
        scale=_uniform(gen, 1.0, 2.0 if gentle else 4.0),
        mode=RESAMPLE_MODES[_randint(gen, 0, 2)],
    )
    noise = NoiseSpec(sigma=_uniform(gen, 0.0, 0.05 if gentle else 0.1))
    compression = CompressionSpec(quality=_randint(gen, 50 if gentle else 30, 95))
    return StageSpec(blur=blur, resample=resample, noise=noise, compression=compression)


def sample_recipe(rng_seed: int, profile: str, second_order: bool = False,
                  resample_mode: str = "bicubic") -> DegradationRecipe:
    """Draw a degradation recipe for the given profile.

    ``train`` and ``eval_mixture`` share the same staged distribution;
    ``eval_8x`` is deterministic: one 8x down/up resample in the given mode.
    """
    if profile == "eval_8x":
        stage = StageSpec(resample=ResampleSpec(scale=8.0, mode=resample_mode))
        return DegradationRecipe(stages=(stage,), seed=rng_seed, up_mode=resample_mode)
    if profile not in ("train", "eval_mixture"):
        raise DomainError(f"unknown degradation profile {profile!r}")
    gen = make_generator("recipe", rng_seed, profile)
    stages = [_draw_stage(gen, gentle=False)]
    if second_order:
        stages.append(_draw_stage(gen, gentle=True))
    return DegradationRecipe(stages=tuple(stages), seed=rng_seed)


def gaussian_kernel(spec: BlurSpec) -> torch.Tensor:
    """Normalized (possibly rotated anisotropic) Gaussian kernel; sums to 1."""
    size = spec.size
    if size % 2 == 0 or size < 1:
        raise DomainError(f"blur kernel size must be odd and positive, got {size}")
    if min(spec.sigma_x, spec.sigma_y) < 1e-3:
        k = torch.zeros(size, size, dtype=torch.float64)
        k[size // 2, size // 2] = 1.0
        return k
    r = torch.arange(size, dtype=torch.float64) - (size - 1) / 2.0
    y, x = torch.meshgrid(r, r, indexing="ij")
    c, s = math.cos(spec.angle), math.sin(spec.angle)
    u = x * c + y * s
    v = -x * s + y * c
    k = torch.exp(-0.5 * ((u / spec.sigma_x) ** 2 + (v / spec.sigma_y) ** 2))
    return k / k.sum()


def _apply_blur(img: torch.Tensor, spec: BlurSpec) -> torch.Tensor:
    c, h, w = img.shape
    k = gaussian_kernel(spec).to(img.dtype)
    # reflect padding needs pad < dim; shrink the kernel on tiny images
    max_size = 2 * (min(h, w) - 1) + 1
    if k.shape[0] > max_size:
        cut = (k.shape[0] - max_size) // 2
        k = k[cut:-cut, cut:-cut]
        k = k / k.sum()
    pad = k.shape[0] // 2
    x = F.pad(img[None], (pad, pad, pad, pad), mode="reflect")
    weight = k[None, None].repeat(c, 1, 1, 1)
    return F.conv2d(x, weight, groups=c)[0]


def _apply_resample(img: torch.Tensor, spec: ResampleSpec) -> torch.Tensor:
    h, w = img.shape[1:]
    nh = max(8, int(round(h / spec.scale)))
    nw = max(8, int(round(w / spec.scale)))
    if (nh, nw) == (h, w):
        return img
    return _interp(img, (nh, nw), spec.mode)


def _interp(img: torch.Tensor, size: tuple[int, int], mode: str) -> torch.Tensor:
    if mode not in RESAMPLE_MODES:
        raise DomainError(f"unknown resample mode {mode!r}")
    kwargs = {} if mode == "nearest" else {"align_corners": False}
    return F.interpolate(img[None], size=size, mode=mode, **kwargs)[0]


def compression_sim(img: torch.Tensor, quality: int) -> torch.Tensor:
    """Block-DCT quantization round trip at the given quality (1..100).

    Non-multiple-of-8 sizes are reflect-padded and cropped back. Bit-exact
    given (img, quality).
    """
    if not 1 <= int(quality) <= 100:
        raise DomainError(f"compression quality must be in [1, 100], got {quality}")
    quality = int(quality)
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    qtab = torch.clamp(torch.floor((_LUMA_TABLE * scale + 50.0) / 100.0), min=1.0, max=255.0)

    c, h, w = img.shape
    ph, pw = (-h) % 8, (-w) % 8
    x = img.to(torch.float64) * 255.0 - 128.0
    if ph or pw:
        x = F.pad(x[None], (0, pw, 0, ph), mode="reflect")[0]
    hh, ww = x.shape[1:]
    blocks = x.reshape(c, hh // 8, 8, ww // 8, 8).permute(0, 1, 3, 2, 4)
    coef = torch.einsum("ij,cbqjk,lk->cbqil", _DCT, blocks, _DCT)
    coef = torch.round(coef / qtab) * qtab
    rec = torch.einsum("ji,cbqjk,kl->cbqil", _DCT, coef, _DCT)
    out = rec.permute(0, 1, 3, 2, 4).reshape(c, hh, ww)[:, :h, :w]
    return torch.clamp((out + 128.0) / 255.0, 0.0, 1.0).to(img.dtype)


def apply_recipe(hq: torch.Tensor, recipe: DegradationRecipe) -> torch.Tensor:
    """Run the staged pipeline and resample back to the input resolution."""
    if not torch.isfinite(hq).all():
        raise NormalizationError("hq image contains non-finite pixels")
    if hq.min() < 0.0 or hq.max() > 1.0:
        raise NormalizationError("hq image must lie in [0, 1]")
    c, h, w = hq.shape
    gen = make_generator("degrade-noise", recipe.seed)
    img = hq.clone()
    for stage in recipe.stages:
        if stage.blur is not None:
            img = _apply_blur(img, stage.blur)
        if stage.resample is not None:
            img = _apply_resample(img, stage.resample)
        if stage.noise is not None and stage.noise.sigma > 0:
            img = img + stage.noise.sigma * torch.randn(img.shape, generator=gen, dtype=img.dtype)
        img = torch.clamp(img, 0.0, 1.0)
        if stage.compression is not None:
            img = compression_sim(img, stage.compression.quality)
    if img.shape[1:] != (h, w):
        img = _interp(img, (h, w), recipe.up_mode)
    return torch.clamp(img, 0.0, 1.0)


def degradation_descriptors(recipe: DegradationRecipe) -> list[int]:
    """Token ids describing the applied degradations."""
    words = ["low", "quality"]
    if any(s.resample is not None and s.resample.scale > 1.0 for s in recipe.stages):
        words += ["low", "resolution"]
    if any(s.compression is not None for s in recipe.stages):
        words.append("compressed")
    return tokenize(" ".join(words))


def caption_policy(rng_seed: int, base_caption: list[int], recipe: DegradationRecipe,
                   p_null: float, p_degraded: float) -> tuple[list[int], str]:
    """Pick the training prompt and target for one sample.

    With probability ``p_degraded`` the prompt names the degradations and the
    LQ image itself becomes the target; with probability ``p_null`` the prompt
    is empty; otherwise the base caption is used. Targets are "hq" unless the
    degraded branch fires.
    """
    if p_null < 0 or p_degraded < 0 or p_null + p_degraded > 1:
        raise DomainError(
            f"caption policy probabilities invalid: p_null={p_null}, p_degraded={p_degraded}"
        )
    gen = make_generator("caption", rng_seed)
    u = _uniform(gen, 0.0, 1.0)
    if u < p_degraded:
        return degradation_descriptors(recipe), "lq"
    if u < p_degraded + p_null:
        return [], "hq"
    return list(base_caption), "hq"


@dataclass
class TrainSample:
    hq: torch.Tensor
    lq: torch.Tensor
    prompt_tokens: list[int]
    target: str
    recipe: DegradationRecipe


def make_train_sample(hq: torch.Tensor, base_caption: list[int], sample_seed: int,
                      profile: str = "train", p_null: float = 0.1,
                      p_degraded: float = 0.1, second_order: bool = False) -> TrainSample:
    recipe = sample_recipe(sample_seed, profile, second_order)
    lq = apply_recipe(hq, recipe)
    prompt, target = caption_policy(sample_seed, base_caption, recipe, p_null, p_degraded)
    return TrainSample(hq=hq, lq=lq, prompt_tokens=prompt, target=target, recipe=recipe)
