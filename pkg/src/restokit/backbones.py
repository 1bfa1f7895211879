"""Micro denoising backbones: a block-sequential UNet and a DiT-style transformer.

Both networks expose an ordered list of named blocks so that restoration
adapters can be attached to block outputs, and every self-attention site has a
stable fully-qualified parameter name (``...self_attn.q`` and friends) for
LoRA injection.

Shapes and widths are desk scale: 32x32 pixel-space diffusion by default,
with the UNet keeping the three-down / one-mid / three-up block layout of its
full-size counterpart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, DomainError, ShapeMismatchError
from .text import VOCAB

UNET_DEFAULT_SPEC: tuple[tuple[str, int], ...] = (
    ("down", 1), ("down", 2), ("down", 4),
    ("mid", 4),
    ("up", 2), ("up", 1), ("up", 1),
)

# data standard deviation assumed by the prediction-head preconditioner
SIGMA_DATA = 0.5


def ddpm_linear_alpha_bars(T_train: int) -> torch.Tensor:
    """Cumulative products of (1 - beta) for the canonical linear beta schedule."""
    betas = torch.linspace(1e-4, 0.02, T_train, dtype=torch.float64)
    return torch.cumprod(1.0 - betas, dim=0)


@dataclass
class BackboneConfig:
    """Static description of a denoising backbone.

    ``prediction`` defaults per family: the UNet predicts noise (epsilon) and
    the DiT predicts velocity, matching the training objective each family is
    paired with.
    """

    family: str = "unet"
    image_size: int = 32
    in_channels: int = 3
    base_channels: int = 64
    unet_block_spec: tuple[tuple[str, int], ...] = UNET_DEFAULT_SPEC
    dit_depth: int = 8
    dit_dim: int = 128
    dit_patch: int = 4
    heads: int = 4
    time_dim: int = 128
    vocab: int = 64
    prediction: str | None = None
    ddpm_steps: int = 1000  # discrete-schedule length the epsilon head is calibrated to

    def __post_init__(self) -> None:
        if self.family not in ("unet", "dit"):
            raise ConfigError(f"family must be 'unet' or 'dit', got {self.family!r}")
        if self.prediction is None:
            self.prediction = "epsilon" if self.family == "unet" else "velocity"
        if self.prediction not in ("epsilon", "velocity"):
            raise ConfigError(f"prediction must be 'epsilon' or 'velocity', got {self.prediction!r}")
        if self.time_dim % 2 != 0:
            raise ConfigError(f"time_dim must be even, got {self.time_dim}")
        if self.vocab < len(VOCAB):
            raise ConfigError(f"vocab must cover the caption vocabulary ({len(VOCAB)}), got {self.vocab}")
        if self.ddpm_steps < 1:
            raise ConfigError(f"ddpm_steps must be >= 1, got {self.ddpm_steps}")
        self.unet_block_spec = tuple((str(k), int(m)) for k, m in self.unet_block_spec)
        if self.family == "unet":
            self._validate_unet()
        else:
            self._validate_dit()

    def _validate_unet(self) -> None:
        kinds = [k for k, _ in self.unet_block_spec]
        for k in kinds:
            if k not in ("down", "mid", "up"):
                raise ConfigError(f"unet_block_spec: unknown block kind {k!r}")
        n_down = kinds.count("down")
        n_up = kinds.count("up")
        if n_down == 0:
            raise ConfigError("unet_block_spec: need at least one down block")
        if n_up != n_down:
            raise ConfigError(
                f"unet_block_spec: up-block count ({n_up}) must equal down-block count ({n_down})"
            )
        # blocks must appear as downs, then mids, then ups
        order = "".join({"down": "d", "mid": "m", "up": "u"}[k] for k in kinds)
        if order != "d" * n_down + "m" * kinds.count("mid") + "u" * n_up:
            raise ConfigError("unet_block_spec: blocks must be ordered down*, mid*, up*")
        if self.image_size % (2 ** n_down) != 0:
            raise ConfigError(
                f"image_size: {self.image_size} is not divisible by 2^{n_down} down blocks"
            )
        if self.base_channels % 8 != 0:
            raise ConfigError(f"base_channels must be a multiple of 8, got {self.base_channels}")

    def _validate_dit(self) -> None:
        if self.dit_depth < 1:
            raise ConfigError(f"dit_depth must be positive, got {self.dit_depth}")
        if self.image_size % self.dit_patch != 0:
            raise ConfigError(
                f"image_size: {self.image_size} is not divisible by dit_patch {self.dit_patch}"
            )
        if self.dit_dim % self.heads != 0:
            raise ConfigError(f"dit_dim {self.dit_dim} must be divisible by heads {self.heads}")


def timestep_embedding(t: torch.Tensor | float | int, dim: int) -> torch.Tensor:
    """Sinusoidal embedding: sin(t*w_k) for the first dim/2 entries, cos for the rest.

    w_k = exp(-k * ln(10000) / (dim/2 - 1)), so frequencies run from 1 down
    to 1/10000. Accepts a scalar (returns ``(dim,)``) or a 1-d tensor of
    timesteps (returns ``(B, dim)``).
    """
    if dim % 2 != 0:
        raise DomainError(f"embedding dim must be even, got {dim}")
    scalar = not torch.is_tensor(t) or t.dim() == 0
    tt = torch.as_tensor(t, dtype=torch.float64).reshape(-1)
    if (tt < 0).any():
        raise DomainError("timestep must be >= 0")
    half = dim // 2
    k = torch.arange(half, dtype=torch.float64)
    denom = half - 1 if half > 1 else 1
    omega = torch.exp(-k * math.log(10000.0) / denom)
    angles = tt[:, None] * omega[None, :]
    emb = torch.cat([torch.sin(angles), torch.cos(angles)], dim=1)
    return emb[0] if scalar else emb


class SelfAttention(nn.Module):
    """Multi-head self-attention over token features with named q/k/v/out sites."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads != 0:
            raise ConfigError(f"attention dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, dim)
        for lin in (self.q, self.k, self.v, self.out):
            lin.init_gain = 1.0  # attention inputs are normalized, no activation before

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (B, L, D)
        b, l, d = x.shape
        hd = d // self.heads
        q = self.q(x).view(b, l, self.heads, hd).transpose(1, 2)
        k = self.k(x).view(b, l, self.heads, hd).transpose(1, 2)
        v = self.v(x).view(b, l, self.heads, hd).transpose(1, 2)
        a = F.scaled_dot_product_attention(q, k, v)
        a = a.transpose(1, 2).reshape(b, l, d)
        return self.out(a)


class SpatialSelfAttention(nn.Module):
    """Self-attention on a 2-d feature map, flattened to tokens internally."""

    def __init__(self, channels: int, heads: int):
        super().__init__()
        self.norm = nn.GroupNorm(8, channels)
        self.self_attn = SelfAttention(channels, heads)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        t = self.norm(x).flatten(2).transpose(1, 2)
        t = self.self_attn(t)
        return (x + t.transpose(1, 2).reshape(b, c, h, w)) * 0.7071067811865476


class ResUnit(nn.Module):
    """GN -> SiLU -> conv twice, with additive timestep embedding and a skip path."""

    def __init__(self, in_ch: int, out_ch: int, emb_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(8, in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.emb_proj = nn.Linear(emb_dim, out_ch)
        self.emb_proj.init_gain = 1.0
        self.norm2 = nn.GroupNorm(8, out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.shortcut = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()
        if isinstance(self.shortcut, nn.Conv2d):
            self.shortcut.init_gain = 1.0

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.emb_proj(emb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return (h + self.shortcut(x)) * 0.7071067811865476


class DownBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, emb_dim: int, heads: int, with_attn: bool):
        super().__init__()
        self.res = ResUnit(in_ch, out_ch, emb_dim)
        self.attn = SpatialSelfAttention(out_ch, heads) if with_attn else None
        self.down = nn.Conv2d(out_ch, out_ch, 3, stride=2, padding=1)
        self.down.init_gain = 1.0

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = self.res(x, emb)
        if self.attn is not None:
            h = self.attn(h)
        return self.down(h)


class MidBlock(nn.Module):
    def __init__(self, ch: int, emb_dim: int, heads: int):
        super().__init__()
        self.res1 = ResUnit(ch, ch, emb_dim)
        self.attn = SpatialSelfAttention(ch, heads)
        self.res2 = ResUnit(ch, ch, emb_dim)

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = self.res1(x, emb)
        h = self.attn(h)
        return self.res2(h, emb)


class UpBlock(nn.Module):
    """Nearest-neighbor upsample, additive skip from the matching down tier, res unit."""

    def __init__(self, in_ch: int, skip_ch: int, out_ch: int, emb_dim: int, heads: int, with_attn: bool):
        super().__init__()
        self.skip_proj = nn.Conv2d(skip_ch, in_ch, 1) if skip_ch != in_ch else nn.Identity()
        if isinstance(self.skip_proj, nn.Conv2d):
            self.skip_proj.init_gain = 1.0
        self.res = ResUnit(in_ch, out_ch, emb_dim)
        self.attn = SpatialSelfAttention(out_ch, heads) if with_attn else None

    def forward(self, x: torch.Tensor, emb: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = (x + self.skip_proj(skip)) * 0.7071067811865476  # keep the stream variance flat
        h = self.res(x, emb)
        if self.attn is not None:
            h = self.attn(h)
        return h


# spatial size above which self-attention is skipped inside UNet blocks
_MAX_ATTN_RES = 16


class UNetBackbone(nn.Module):
    """Block-sequential UNet denoiser with additive skip connections.

    Down blocks run a res unit at the incoming resolution and then downsample,
    so "block n output" is what the next block consumes — the tensor adapters
    intercept. Up blocks upsample first and fold in the skip from the
    matching tier.
    """

    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        cfg = config
        base = cfg.base_channels
        emb_dim = cfg.time_dim

        self.time_mlp = nn.Sequential(
            nn.Linear(cfg.time_dim, emb_dim), nn.SiLU(), nn.Linear(emb_dim, emb_dim)
        )
        self.caption_table = nn.Embedding(cfg.vocab, emb_dim)
        self.in_conv = nn.Conv2d(cfg.in_channels, base, 3, padding=1)
        self.in_conv.init_gain = 1.0
        self.register_buffer("alpha_bars", ddpm_linear_alpha_bars(cfg.ddpm_steps), persistent=False)

        downs = [(k, m) for k, m in cfg.unet_block_spec if k == "down"]
        mids = [(k, m) for k, m in cfg.unet_block_spec if k == "mid"]
        ups = [(k, m) for k, m in cfg.unet_block_spec if k == "up"]

        blocks: list[nn.Module] = []
        self._block_specs: list[tuple[int, int]] = []  # (channels, resolution) per block output
        res = cfg.image_size
        ch = base
        skip_chs = [base]
        for _, mult in downs:
            out_ch = base * mult
            blocks.append(DownBlock(ch, out_ch, emb_dim, cfg.heads, with_attn=res <= _MAX_ATTN_RES))
            res //= 2
            self._block_specs.append((out_ch, res))
            skip_chs.append(out_ch)
            ch = out_ch
        for _, mult in mids:
            out_ch = base * mult
            if out_ch != ch:
                raise ConfigError("unet_block_spec: mid block multiplier must match the last down block")
            blocks.append(MidBlock(ch, emb_dim, cfg.heads))
            self._block_specs.append((ch, res))
        skip_chs.pop()  # deepest down output feeds the mid path directly, not a skip
        for _, mult in ups:
            out_ch = base * mult
            skip_ch = skip_chs.pop()
            res *= 2
            blocks.append(UpBlock(ch, skip_ch, out_ch, emb_dim, cfg.heads, with_attn=res <= _MAX_ATTN_RES))
            self._block_specs.append((out_ch, res))
            ch = out_ch
        if res != cfg.image_size:
            raise ConfigError("unet_block_spec: up blocks do not restore the input resolution")
        self.blocks = nn.ModuleList(blocks)
        self.n_down = len(downs)

        self.out_norm = nn.GroupNorm(8, ch)
        self.out_proj = nn.Conv2d(ch, cfg.in_channels, 3, padding=1)
        self.out_proj.init_gain = 1.0

    def block_output_specs(self) -> list[tuple[int, int]]:
        """(channels, spatial size) of every block's output, in block order."""
        return list(self._block_specs)

    def embed(self, t: torch.Tensor | float | int, prompt_tokens) -> torch.Tensor:
        return _conditioning_vector(self, t, prompt_tokens, t_scale=1.0)

    def _head_coefficients(self, t, batch: int, dtype) -> tuple[torch.Tensor, torch.Tensor]:
        """Noise-prediction head: eps_hat = cz * z + cf * raw_output.

        The raw output is read as the clean-image residual after a
        signal-to-noise-dependent skip (sigma_data preconditioning), which
        keeps both coefficients bounded over the whole schedule and lets the
        trainable pathway regress toward the clean image directly.
        """
        tt = torch.as_tensor(t, dtype=torch.long).reshape(-1)
        if tt.numel() == 1:
            tt = tt.expand(batch)
        if (tt < 1).any() or (tt > self.config.ddpm_steps).any():
            raise DomainError(f"unet timestep must lie in [1, {self.config.ddpm_steps}]")
        ab = self.alpha_bars[tt - 1]
        s, n = torch.sqrt(ab), torch.sqrt(1.0 - ab)
        var = ab * SIGMA_DATA ** 2 + (1.0 - ab)
        c_skip = s * SIGMA_DATA ** 2 / var
        c_out = SIGMA_DATA * n / torch.sqrt(var)
        cz = (1.0 - s * c_skip) / n
        cf = s * c_out / n
        shape = (batch, 1, 1, 1)
        return cz.to(dtype).view(shape), cf.to(dtype).view(shape)

    def forward_features(self, z_t: torch.Tensor, t, emb: torch.Tensor, hook=None) -> torch.Tensor:
        _check_input_shape(self.config, z_t)
        h = self.in_conv(z_t)
        skips = [h]
        for i, block in enumerate(self.blocks):
            if isinstance(block, DownBlock):
                h = block(h, emb)
            elif isinstance(block, MidBlock):
                h = block(h, emb)
            else:
                h = block(h, emb, skips.pop())
            if hook is not None:
                h = hook(i, h)
            if isinstance(block, DownBlock) and len(skips) < self.n_down:
                skips.append(h)
        raw = self.out_proj(F.silu(self.out_norm(h)))
        cz, cf = self._head_coefficients(t, z_t.shape[0], z_t.dtype)
        return cz * z_t - cf * raw

    def forward(self, z_t, t, prompt_tokens=None, hook=None):
        emb = self.embed(t, _broadcast_prompts(prompt_tokens, z_t.shape[0]))
        return self.forward_features(z_t, t, emb, hook)


class DiTBlock(nn.Module):
    """Transformer block with adaLN modulation from the conditioning vector."""

    def __init__(self, dim: int, emb_dim: int, heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, elementwise_affine=False)
        self.self_attn = SelfAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim, elementwise_affine=False)
        self.mlp = nn.Sequential(nn.Linear(dim, 4 * dim), nn.GELU(), nn.Linear(4 * dim, dim))
        self.modulation = nn.Linear(emb_dim, 6 * dim)
        # bias slices that act as residual gates; seeded init sets them to 1
        self.modulation.adaln_gate_slices = (slice(2 * dim, 3 * dim), slice(5 * dim, 6 * dim))

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        mod = self.modulation(F.silu(emb))
        d = x.shape[-1]
        shift1, scale1, gate1, shift2, scale2, gate2 = mod.split(d, dim=-1)
        h = self.norm1(x) * (1 + scale1[:, None, :]) + shift1[:, None, :]
        x = x + gate1[:, None, :] * self.self_attn(h)
        h = self.norm2(x) * (1 + scale2[:, None, :]) + shift2[:, None, :]
        return x + gate2[:, None, :] * self.mlp(h)


class DiTBackbone(nn.Module):
    """Patchify-transformer denoiser; block outputs are token grids (B, L, D)."""

    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        cfg = config
        p = cfg.dit_patch
        self.grid = cfg.image_size // p
        self.tokens = self.grid * self.grid
        emb_dim = cfg.time_dim

        self.time_mlp = nn.Sequential(
            nn.Linear(cfg.time_dim, emb_dim), nn.SiLU(), nn.Linear(emb_dim, emb_dim)
        )
        self.caption_table = nn.Embedding(cfg.vocab, emb_dim)
        self.patch_in = nn.Conv2d(cfg.in_channels, cfg.dit_dim, p, stride=p)
        self.patch_in.init_gain = 1.0
        self.pos_emb = nn.Parameter(torch.zeros(1, self.tokens, cfg.dit_dim))
        self.blocks = nn.ModuleList(
            DiTBlock(cfg.dit_dim, emb_dim, cfg.heads) for _ in range(cfg.dit_depth)
        )
        self.out_norm = nn.LayerNorm(cfg.dit_dim)
        self.out_proj = nn.Linear(cfg.dit_dim, p * p * cfg.in_channels)
        self.out_proj.init_gain = 1.0

    def block_output_specs(self) -> list[tuple[int, int]]:
        """(token count, channel width) of every block's output, in block order."""
        return [(self.tokens, self.config.dit_dim)] * len(self.blocks)

    def embed(self, t, prompt_tokens) -> torch.Tensor:
        # flow time lives in (0, 1); scale into the sinusoid's useful range
        return _conditioning_vector(self, t, prompt_tokens, t_scale=1000.0)

    def _head_coefficients(self, t, batch: int, dtype) -> tuple[torch.Tensor, torch.Tensor]:
        """Velocity head: v_hat = cz * z + cf * raw_output.

        Same sigma_data preconditioning as the noise head, expressed on the
        linear interpolation path (signal 1-t, noise t); coefficients stay
        bounded for t -> 0 and t -> 1.
        """
        tt = torch.as_tensor(t, dtype=torch.float64).reshape(-1)
        if tt.numel() == 1:
            tt = tt.expand(batch)
        if (tt < 0).any() or (tt > 1).any():
            raise DomainError("flow time must lie in [0, 1]")
        tt = tt.clamp(1e-6, 1.0)
        s, n = 1.0 - tt, tt
        var = s ** 2 * SIGMA_DATA ** 2 + n ** 2
        c_skip = s * SIGMA_DATA ** 2 / var
        c_out = SIGMA_DATA * n / torch.sqrt(var)
        cz = (1.0 - c_skip) / tt
        cf = c_out / tt
        shape = (batch, 1, 1, 1)
        return cz.to(dtype).view(shape), cf.to(dtype).view(shape)

    def forward_features(self, z_t: torch.Tensor, t, emb: torch.Tensor, hook=None) -> torch.Tensor:
        _check_input_shape(self.config, z_t)
        b, c, hh, ww = z_t.shape
        x = self.patch_in(z_t).flatten(2).transpose(1, 2) + self.pos_emb
        for i, block in enumerate(self.blocks):
            x = block(x, emb)
            if hook is not None:
                x = hook(i, x)
        x = self.out_proj(self.out_norm(x))
        p = self.config.dit_patch
        raw = x.view(b, self.grid, self.grid, c, p, p).permute(0, 3, 1, 4, 2, 5).reshape(b, c, hh, ww)
        cz, cf = self._head_coefficients(t, b, z_t.dtype)
        return cz * z_t - cf * raw

    def forward(self, z_t, t, prompt_tokens=None, hook=None):
        emb = self.embed(t, _broadcast_prompts(prompt_tokens, z_t.shape[0]))
        return self.forward_features(z_t, t, emb, hook)


def _broadcast_prompts(prompt_tokens, batch: int):
    """Accept None, one token list, or one list per batch element."""
    if prompt_tokens is None:
        return [[] for _ in range(batch)]
    if len(prompt_tokens) > 0 and isinstance(prompt_tokens[0], list):
        if len(prompt_tokens) != batch:
            raise ShapeMismatchError(
                f"got {len(prompt_tokens)} prompts for batch of {batch}"
            )
        return prompt_tokens
    return [list(prompt_tokens) for _ in range(batch)]


def _conditioning_vector(backbone, t, prompts: list[list[int]], t_scale: float) -> torch.Tensor:
    dtype = backbone.caption_table.weight.dtype
    tt = torch.as_tensor(t, dtype=torch.float64).reshape(-1)
    if tt.numel() == 1 and len(prompts) > 1:
        tt = tt.expand(len(prompts))
    if tt.numel() != len(prompts):
        raise ShapeMismatchError(f"{tt.numel()} timesteps for {len(prompts)} prompts")
    emb = timestep_embedding(tt * t_scale, backbone.config.time_dim).to(dtype)
    emb = backbone.time_mlp(emb)
    pooled = torch.zeros_like(emb)
    for i, ids in enumerate(prompts):
        if ids:
            idx = torch.as_tensor(ids, dtype=torch.long)
            pooled[i] = backbone.caption_table(idx).mean(dim=0)
    return emb + pooled


def _check_input_shape(config: BackboneConfig, z_t: torch.Tensor) -> None:
    expect = (config.in_channels, config.image_size, config.image_size)
    if z_t.dim() != 4 or tuple(z_t.shape[1:]) != expect:
        raise ShapeMismatchError(
            f"backbone input: expected (B, {expect[0]}, {expect[1]}, {expect[2]}), got {tuple(z_t.shape)}"
        )


def seeded_init_(module: nn.Module, seed: int) -> None:
    """Initialize every parameter from one seeded generator, in registration order.

    Two calls with equal (module structure, seed) produce bit-identical
    parameters. Layers flagged with ``zero_init`` stay exactly zero; adaLN
    gate bias slices start at 1 so frozen transformer blocks pass signal.
    """
    gen = torch.Generator().manual_seed(seed)
    owner: dict[str, nn.Module] = {}
    for mod_name, mod in module.named_modules():
        for p_name, _ in mod.named_parameters(recurse=False):
            owner[f"{mod_name}.{p_name}" if mod_name else p_name] = mod
    with torch.no_grad():
        for name, param in module.named_parameters():
            mod = owner[name]
            if getattr(mod, "zero_init", False):
                param.zero_()
                continue
            if isinstance(mod, (nn.GroupNorm, nn.LayerNorm)):
                param.fill_(1.0 if name.endswith("weight") else 0.0)
            elif isinstance(mod, nn.Embedding) or name.endswith("pos_emb"):
                param.copy_(0.02 * _randn_like(param, gen))
            elif name.endswith("bias"):
                param.zero_()
                slices = getattr(mod, "adaln_gate_slices", None)
                if slices is not None:
                    for s in slices:
                        param[s] = 1.0
            else:
                fan_in = param[0].numel()
                gain = getattr(mod, "init_gain", math.sqrt(2.0))
                param.copy_(gain / math.sqrt(fan_in) * _randn_like(param, gen))


def _randn_like(param: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
    return torch.randn(param.shape, generator=gen, dtype=param.dtype)


def build_backbone(config: BackboneConfig, seed: int) -> nn.Module:
    """Construct and seed-initialize a backbone of the configured family."""
    net = UNetBackbone(config) if config.family == "unet" else DiTBackbone(config)
    seeded_init_(net, seed)
    return net
