"""Assembly of the full restoration denoiser.

A RestorationModel owns the (frozen during training) backbone, the adapter
stack with its LQ stem, and any LoRA factors injected into the backbone's
self-attention sites. Parameter namespaces stay separable so training,
checkpointing, and parameter accounting can tell them apart by name.
"""

from __future__ import annotations

import hashlib

import torch
import torch.nn as nn
import torch.nn.functional as F

from .adapters import (
    AdapterStack,
    InsertionPlan,
    LqEncoder,
    build_adapter_stack,
    build_insertion_plan,
)
from .backbones import BackboneConfig, build_backbone, seeded_init_
from .errors import ConfigError, DomainError
from .lora import inject_lora
from .rng import derive_seed

PARAM_FILTERS = ("all", "backbone_only", "adapters_only", "lora_only")


class IdentityCodec:
    """Pixel-space diffusion: the latent is the image."""

    name = "identity"
    spatial_factor = 1

    def channels(self, image_channels: int) -> int:
        return image_channels

    def encode(self, image: torch.Tensor) -> torch.Tensor:
        return image

    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        return latent


class Patchify2xCodec:
    """Lossless fixed 2x space-to-channel codec standing in for a learned VAE."""

    name = "patchify2x"
    spatial_factor = 2

    def channels(self, image_channels: int) -> int:
        return image_channels * 4

    def encode(self, image: torch.Tensor) -> torch.Tensor:
        return F.pixel_unshuffle(image, 2)

    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        return F.pixel_shuffle(latent, 2)


def get_codec(name: str):
    if name == "identity":
        return IdentityCodec()
    if name == "patchify2x":
        return Patchify2xCodec()
    raise ConfigError(f"unknown codec {name!r}")


class RestorationModel(nn.Module):
    """Denoiser with optional adapter conditioning.

    Callable as ``model(z_t, t, prompt_tokens, lq_latent)``; with adapters
    attached the LQ latent is mandatory, and block outputs are routed through
    the adapter chain.
    """

    def __init__(self, backbone: nn.Module, stack: AdapterStack | None,
                 stem: LqEncoder | None, codec=None):
        super().__init__()
        self.backbone = backbone
        self.stack = stack
        self.stem = stem
        self.codec = codec if codec is not None else IdentityCodec()
        if stack is not None and len(stack) > 0:
            n_blocks = len(backbone.blocks)
            worst = stack.plan.entries[-1].block_index
            if worst >= n_blocks:
                raise ConfigError(
                    f"insertion plan references block {worst} but the backbone has {n_blocks} blocks"
                )

    @property
    def config(self) -> BackboneConfig:
        return self.backbone.config

    @property
    def prediction(self) -> str:
        return self.backbone.config.prediction

    @property
    def image_size_px(self) -> int:
        return self.backbone.config.image_size * self.codec.spatial_factor

    @property
    def image_channels_px(self) -> int:
        c = self.backbone.config.in_channels
        return c // (self.codec.spatial_factor ** 2)

    def encode_lq(self, image: torch.Tensor) -> torch.Tensor:
        """Map a normalized [-1, 1] LQ image to the first adapter's latent."""
        if self.stem is None:
            raise DomainError("model has no adapter stem; nothing to encode")
        return self.stem(self.codec.encode(image))

    def forward(self, z_t: torch.Tensor, t, prompt_tokens=None,
                lq_latent: torch.Tensor | None = None, use_adapters: bool = True):
        from .backbones import _broadcast_prompts  # shared prompt handling

        prompts = _broadcast_prompts(prompt_tokens, z_t.shape[0])
        emb = self.backbone.embed(t, prompts)
        hook = None
        if use_adapters and self.stack is not None and len(self.stack) > 0:
            if lq_latent is None:
                raise DomainError("adapters are attached: forward requires lq_latent")
            hook = self.stack.make_hook(lq_latent, emb)
        return self.backbone.forward_features(z_t, t, emb, hook)


def classify_param(name: str) -> str:
    """Namespace of a fully-qualified parameter name."""
    if ".lora_A" in name or ".lora_B" in name:
        return "lora"
    if name.startswith(("stack.", "stem.")):
        return "adapters"
    return "backbone"


def param_count(model: nn.Module, which: str = "all") -> int:
    """Exact scalar parameter count under the given filter."""
    if which not in PARAM_FILTERS:
        raise ConfigError(f"unknown parameter filter {which!r}; expected one of {PARAM_FILTERS}")
    total = 0
    for name, p in model.named_parameters():
        kind = classify_param(name)
        if which == "all" \
                or (which == "backbone_only" and kind == "backbone") \
                or (which == "adapters_only" and kind == "adapters") \
                or (which == "lora_only" and kind == "lora"):
            total += p.numel()
    return total


def trainable_parameters(model: RestorationModel) -> list[tuple[str, nn.Parameter]]:
    """Adapter and LoRA parameters, the only ones the optimizer may touch."""
    return [(n, p) for n, p in model.named_parameters() if classify_param(n) != "backbone"]


def base_parameters(model: RestorationModel) -> list[tuple[str, nn.Parameter]]:
    return [(n, p) for n, p in model.named_parameters() if classify_param(n) == "backbone"]


def freeze_backbone(model: RestorationModel) -> None:
    for _, p in base_parameters(model):
        p.requires_grad_(False)
    for _, p in trainable_parameters(model):
        p.requires_grad_(True)


def base_checksum(model: RestorationModel) -> str:
    """Digest over every frozen backbone parameter, order- and name-sensitive."""
    h = hashlib.sha256()
    for name, p in base_parameters(model):
        h.update(name.encode())
        h.update(p.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def build_model(
    backbone_config: BackboneConfig,
    seed: int,
    insertion_policy: str | None = "default",
    insertion_stride: int = 4,
    insertion_blocks: list[int] | None = None,
    lora_rank: int = 32,
    lora_alpha: float | None = None,
    lora_target: str | None = r"self_attn\.(q|k|v|out)$",
    codec_name: str = "identity",
    dtype: torch.dtype = torch.float32,
) -> RestorationModel:
    """Build the backbone, attach a seeded adapter stack, and inject LoRA.

    ``insertion_policy`` may be "default" (family default), "unet_default",
    "dit_stride", "explicit", or None for a bare backbone. ``lora_rank`` 0 or
    a None target skips injection. Sub-seeds are derived per namespace so the
    whole assembly is reproducible from one seed.
    """
    backbone = build_backbone(backbone_config, seed)
    stack = stem = None
    if insertion_policy is not None:
        policy = insertion_policy
        if policy == "default":
            policy = "unet_default" if backbone_config.family == "unet" else "dit_stride"
        plan = build_insertion_plan(
            backbone_config, policy, stride=insertion_stride, blocks=insertion_blocks
        )
        stack = build_adapter_stack(plan, backbone_config)
        seeded_init_(stack, derive_seed(seed, "adapters"))
        stem = LqEncoder(
            backbone_config.family,
            backbone_config.in_channels,
            backbone_config.image_size,
            plan.entries[0],
            dit_patch=backbone_config.dit_patch,
        )
        seeded_init_(stem, derive_seed(seed, "stem"))
    model = RestorationModel(backbone, stack, stem, get_codec(codec_name))
    if lora_rank and lora_target:
        alpha = float(lora_rank) if lora_alpha is None else lora_alpha
        model.lora_site_count = inject_lora(
            model.backbone, lora_rank, alpha, lora_target, derive_seed(seed, "lora")
        )
    else:
        model.lora_site_count = 0
    if dtype != torch.float32:
        model.to(dtype)
    return model
