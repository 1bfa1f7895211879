"""Restoration adapters: block-inserted modules that feed a degraded-image
feature stream into the denoiser.

Each adapter consumes the low-quality feature from the previous adapter (the
first consumes the encoded LQ latent), mixes in the timestep embedding,
refines through residual adapter blocks, and adds a zero-initialized
projection onto the block output — so a freshly built stack is an exact
no-op on the denoising path while the LQ stream stays live.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbones import BackboneConfig
from .errors import ConfigError, NormalizationError, ShapeMismatchError


@dataclass(frozen=True)
class PlanEntry:
    block_index: int
    adapter_channels: int
    block_channels: int
    resolution: int  # spatial edge (unet) or token count (dit)


@dataclass(frozen=True)
class InsertionPlan:
    family: str
    entries: tuple[PlanEntry, ...]

    def __post_init__(self) -> None:
        idx = [e.block_index for e in self.entries]
        if any(b >= a for a, b in zip(idx[1:], idx)):
            raise ConfigError(f"insertion plan block indices must be strictly increasing: {idx}")

    def entry_for_block(self, block_index: int) -> PlanEntry | None:
        for e in self.entries:
            if e.block_index == block_index:
                return e
        return None

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "entries": [
                {
                    "block": e.block_index,
                    "adapter_channels": e.adapter_channels,
                    "block_channels": e.block_channels,
                    "resolution": e.resolution,
                }
                for e in self.entries
            ],
        }


def block_specs_from_config(config: BackboneConfig) -> list[tuple[str, int, int]]:
    """Per-block (kind, output channels, output resolution/token count)."""
    if config.family == "dit":
        tokens = (config.image_size // config.dit_patch) ** 2
        return [("dit", config.dit_dim, tokens)] * config.dit_depth
    specs = []
    res = config.image_size
    ch = config.base_channels
    for kind, mult in config.unet_block_spec:
        out_ch = config.base_channels * mult
        if kind == "down":
            res //= 2
        elif kind == "mid":
            out_ch = ch
        else:
            res *= 2
        specs.append((kind, out_ch, res))
        ch = out_ch
    return specs


def default_adapter_width(block_channels: int) -> int:
    """A quarter of the block width, at least 16, rounded to a GroupNorm-friendly multiple."""
    return max(16, ((block_channels // 4 + 7) // 8) * 8)


def build_insertion_plan(
    config: BackboneConfig,
    policy: str,
    stride: int = 4,
    blocks: list[int] | None = None,
) -> InsertionPlan:
    """Choose which blocks receive adapters.

    Policies: ``unet_default`` places one adapter on every block except the
    last upsampling block; ``dit_stride`` places one after every ``stride``
    transformer blocks; ``explicit`` uses the given block indices.
    """
    specs = block_specs_from_config(config)
    n = len(specs)
    if policy == "unet_default":
        if config.family != "unet":
            raise ConfigError("unet_default insertion policy requires a unet backbone")
        indices = list(range(n - 1))
    elif policy == "dit_stride":
        if config.family != "dit":
            raise ConfigError("dit_stride insertion policy requires a dit backbone")
        if stride < 1 or n % stride != 0:
            raise ConfigError(f"dit_stride: stride {stride} does not divide depth {n}")
        indices = list(range(stride - 1, n, stride))
    elif policy == "explicit":
        if not blocks:
            raise ConfigError("explicit insertion policy requires a block index list")
        indices = list(blocks)
        for b in indices:
            if not 0 <= b < n:
                raise ConfigError(f"explicit insertion plan: block index {b} out of range 0..{n - 1}")
    else:
        raise ConfigError(f"unknown insertion policy {policy!r}")
    entries = tuple(
        PlanEntry(
            block_index=i,
            adapter_channels=default_adapter_width(specs[i][1]),
            block_channels=specs[i][1],
            resolution=specs[i][2],
        )
        for i in indices
    )
    return InsertionPlan(family=config.family, entries=entries)


class ConvAdapterBlock(nn.Module):
    """conv3x3 -> GroupNorm(8) -> SiLU, shape preserving."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.norm = nn.GroupNorm(8, out_ch)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.silu(self.norm(self.conv(x)))


class TokenAdapterBlock(nn.Module):
    """LayerNorm -> linear -> SiLU -> linear over token features."""

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(in_dim)
        self.fc1 = nn.Linear(in_dim, out_dim)
        self.fc2 = nn.Linear(out_dim, out_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(F.silu(self.fc1(self.norm(x))))


class RestorationAdapter(nn.Module):
    """One insertion point: refines the LQ stream and nudges the block output.

    ``resample`` describes how the internal stream reaches the next adapter:
    ("down"|"up"|"same", next_channels), or None for the last adapter in the
    chain (its stream passes through unchanged).
    """

    def __init__(
        self,
        variant: str,
        entry: PlanEntry,
        lq_in_channels: int,
        emb_dim: int,
        resample: tuple[str, int] | None,
    ):
        super().__init__()
        ac = entry.adapter_channels
        self.variant = variant
        self.entry = entry
        self.lq_in_channels = lq_in_channels
        self.resample_kind = resample[0] if resample else None
        self.out_channels = resample[1] if resample else ac
        if variant == "unet":
            self.in_block = ConvAdapterBlock(lq_in_channels, ac)
            self.res1 = ConvAdapterBlock(ac, ac)
            self.res2 = ConvAdapterBlock(ac, ac)
            self.zero_out = nn.Conv2d(ac, entry.block_channels, 1)
            if resample is not None:
                kind, out_ch = resample
                stride = 2 if kind == "down" else 1
                self.resampler = nn.Conv2d(ac, out_ch, 3, stride=stride, padding=1)
            else:
                self.resampler = None
        elif variant == "dit":
            self.in_block = TokenAdapterBlock(lq_in_channels, ac)
            self.res1 = TokenAdapterBlock(ac, ac)
            self.res2 = TokenAdapterBlock(ac, ac)
            self.zero_out = nn.Linear(ac, entry.block_channels)
            self.resampler = nn.Linear(ac, resample[1]) if resample is not None else None
        else:
            raise ConfigError(f"unknown adapter variant {variant!r}")
        self.emb_proj = nn.Linear(emb_dim, ac)
        self.zero_out.zero_init = True

    def forward(
        self, lq_feat: torch.Tensor, x_t: torch.Tensor, emb: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        self._check_shapes(lq_feat, x_t)
        cond = F.silu(self.emb_proj(emb))
        if self.variant == "unet":
            h0 = self.in_block(lq_feat) + cond[:, :, None, None]
        else:
            h0 = self.in_block(lq_feat) + cond[:, None, :]
        h = h0 + self.res1(h0)
        h = h + self.res2(h)
        x_out = x_t + self.zero_out(h)
        if self.resampler is None:
            lq_next = h
        elif self.resample_kind == "up":
            lq_next = self.resampler(F.interpolate(h, scale_factor=2, mode="nearest"))
        else:
            lq_next = self.resampler(h)
        return x_out, lq_next

    def _check_shapes(self, lq_feat: torch.Tensor, x_t: torch.Tensor) -> None:
        e = self.entry
        if self.variant == "unet":
            ok_lq = lq_feat.dim() == 4 and lq_feat.shape[1] == self.lq_in_channels \
                and lq_feat.shape[2] == lq_feat.shape[3] == e.resolution
            ok_xt = x_t.dim() == 4 and x_t.shape[1] == e.block_channels \
                and x_t.shape[2] == x_t.shape[3] == e.resolution
        else:
            ok_lq = lq_feat.dim() == 3 and lq_feat.shape[1] == e.resolution \
                and lq_feat.shape[2] == self.lq_in_channels
            ok_xt = x_t.dim() == 3 and x_t.shape[1] == e.resolution \
                and x_t.shape[2] == e.block_channels
        if not (ok_lq and ok_xt):
            raise ShapeMismatchError(
                f"adapter at block {e.block_index}: lq_feat {tuple(lq_feat.shape)} / "
                f"x_t {tuple(x_t.shape)} do not match declared "
                f"(channels={e.adapter_channels}, block_channels={e.block_channels}, "
                f"resolution={e.resolution})"
            )


class LqEncoder(nn.Module):
    """Stem mapping the (codec-encoded) LQ image to the first adapter's feature shape.

    For the UNet family this is a stack of strided convolutions; for the DiT
    family a patchify convolution producing tokens.
    """

    def __init__(self, family: str, in_channels: int, image_size: int, first: PlanEntry,
                 dit_patch: int = 4):
        super().__init__()
        self.family = family
        self.in_channels = in_channels
        self.image_size = image_size
        if family == "unet":
            ratio = image_size // first.resolution
            if ratio * first.resolution != image_size or ratio & (ratio - 1):
                raise ConfigError(
                    f"stem cannot map {image_size} px to adapter resolution {first.resolution}"
                )
            # full-resolution feature conv first, then strided halvings
            layers: list[nn.Module] = [nn.Conv2d(in_channels, first.adapter_channels, 3, padding=1)]
            while ratio > 1:
                layers += [nn.SiLU(), nn.Conv2d(first.adapter_channels, first.adapter_channels,
                                                3, stride=2, padding=1)]
                ratio //= 2
            self.net = nn.Sequential(*layers)
        else:
            grid = image_size // dit_patch
            if grid * grid != first.resolution:
                raise ConfigError(
                    f"stem patch grid {grid}x{grid} does not give {first.resolution} tokens"
                )
            self.net = nn.Conv2d(in_channels, first.adapter_channels, dit_patch, stride=dit_patch)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        if image.dim() != 4 or image.shape[1] != self.in_channels:
            raise ShapeMismatchError(
                f"lq encoder expects (B, {self.in_channels}, {self.image_size}, "
                f"{self.image_size}), got {tuple(image.shape)}"
            )
        lo, hi = image.min().item(), image.max().item()
        if lo < -1.0 - 1e-4 or hi > 1.0 + 1e-4:
            raise NormalizationError(
                f"lq image must be normalized to [-1, 1], got range [{lo:.3f}, {hi:.3f}]"
            )
        if self.family == "unet":
            return self.net(image)
        return self.net(image).flatten(2).transpose(1, 2)


class AdapterStack(nn.Module):
    """Executable chain of adapters matching an insertion plan."""

    def __init__(self, plan: InsertionPlan, adapters: list[RestorationAdapter]):
        super().__init__()
        if len(adapters) != len(plan.entries):
            raise ConfigError(
                f"adapter stack: plan has {len(plan.entries)} entries but {len(adapters)} adapters given"
            )
        for i, (entry, adapter) in enumerate(zip(plan.entries, adapters)):
            if adapter.entry != entry:
                raise ConfigError(f"adapter {i} does not match plan entry at block {entry.block_index}")
        for i in range(len(adapters) - 1):
            cur, nxt = adapters[i], adapters[i + 1]
            if cur.out_channels != nxt.lq_in_channels:
                raise ConfigError(
                    f"adapter chain broken between entries {i} and {i + 1}: "
                    f"stream width {cur.out_channels} != expected {nxt.lq_in_channels}"
                )
            r_cur, r_nxt = cur.entry.resolution, nxt.entry.resolution
            if cur.resampler is None and cur.out_channels != nxt.lq_in_channels:
                raise ConfigError(f"adapter {i} has no resampler but the chain continues")
            if plan.family == "unet":
                expect = {"down": r_cur // 2, "up": r_cur * 2, "same": r_cur, None: r_cur}[cur.resample_kind]
                if expect != r_nxt:
                    raise ConfigError(
                        f"adapter chain broken between entries {i} and {i + 1}: "
                        f"resampler {cur.resample_kind!r} maps {r_cur} to {expect}, next expects {r_nxt}"
                    )
            elif r_cur != r_nxt:
                raise ConfigError(
                    f"adapter chain broken between entries {i} and {i + 1}: "
                    f"token counts differ ({r_cur} vs {r_nxt})"
                )
        self.plan = plan
        self.adapters = nn.ModuleList(adapters)

    def __len__(self) -> int:
        return len(self.adapters)

    def make_hook(self, lq_latent: torch.Tensor, emb: torch.Tensor):
        """Block-output hook for one forward pass; carries the LQ stream."""
        state = {"lq": lq_latent, "next": 0}

        def hook(block_index: int, x: torch.Tensor) -> torch.Tensor:
            i = state["next"]
            if i < len(self.adapters) and self.plan.entries[i].block_index == block_index:
                x, state["lq"] = self.adapters[i](state["lq"], x, emb)
                state["next"] = i + 1
            return x

        return hook


def chain_adapters(plan: InsertionPlan, adapters: list[RestorationAdapter],
                   lq_latent: torch.Tensor | None = None) -> AdapterStack:
    """Validate and assemble the adapter chain (lq_latent is checked if given)."""
    stack = AdapterStack(plan, adapters)
    if lq_latent is not None and len(adapters) > 0:
        first = adapters[0]
        if plan.family == "unet":
            ok = lq_latent.dim() == 4 and lq_latent.shape[1] == first.lq_in_channels \
                and lq_latent.shape[2] == lq_latent.shape[3] == first.entry.resolution
        else:
            ok = lq_latent.dim() == 3 and lq_latent.shape[1] == first.entry.resolution \
                and lq_latent.shape[2] == first.lq_in_channels
        if not ok:
            raise ShapeMismatchError(
                f"lq latent {tuple(lq_latent.shape)} does not match the first adapter"
            )
    return stack


def build_adapter_stack(plan: InsertionPlan, config: BackboneConfig) -> AdapterStack:
    """Construct adapters whose stream widths and resamplers follow the plan."""
    adapters: list[RestorationAdapter] = []
    entries = plan.entries
    for i, entry in enumerate(entries):
        lq_in = entry.adapter_channels if i == 0 else adapters[-1].out_channels
        if i + 1 < len(entries):
            nxt = entries[i + 1]
            if plan.family == "unet":
                if nxt.resolution == entry.resolution // 2:
                    kind = "down"
                elif nxt.resolution == entry.resolution * 2:
                    kind = "up"
                elif nxt.resolution == entry.resolution:
                    kind = "same"
                else:
                    raise ConfigError(
                        f"plan entries {i} and {i + 1} differ by a non-2x resolution step "
                        f"({entry.resolution} -> {nxt.resolution})"
                    )
            else:
                kind = "same"
            resample = (kind, nxt.adapter_channels)
        else:
            resample = None
        adapters.append(
            RestorationAdapter(plan.family, entry, lq_in, _emb_dim(config), resample)
        )
    return AdapterStack(plan, adapters)


def _emb_dim(config: BackboneConfig) -> int:
    return config.time_dim
