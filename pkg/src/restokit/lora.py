"""Low-rank adaptation of linear sites inside a backbone.

Injection wraps matched ``nn.Linear`` layers so they compute
``y = Wx + b + (alpha/r) * B(Ax)`` with A drawn from a seeded Gaussian and B
exactly zero, making the wrapped network bit-identical to the original until
B receives a gradient update. Factors can later be merged back into the base
weight for deployment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, ShapeMismatchError


@dataclass
class LoraWeights:
    """One site's factor pair; ``delta W = (alpha/rank) * B @ A``."""

    site_name: str
    A: torch.Tensor  # (rank, d_in)
    B: torch.Tensor  # (d_out, rank)
    rank: int
    alpha: float


class LoraLinear(nn.Module):
    """A linear layer with a frozen base weight plus trainable low-rank delta."""

    def __init__(self, base: nn.Linear, rank: int, alpha: float, site_name: str):
        super().__init__()
        d_out, d_in = base.weight.shape
        if rank > min(d_in, d_out):
            raise ConfigError(
                f"lora rank {rank} exceeds min dim {min(d_in, d_out)} at site {site_name!r}"
            )
        self.site_name = site_name
        self.rank = rank
        self.alpha = float(alpha)
        self.weight = base.weight
        self.bias = base.bias
        self.lora_A = nn.Parameter(torch.zeros(rank, d_in, dtype=base.weight.dtype))
        self.lora_B = nn.Parameter(torch.zeros(d_out, rank, dtype=base.weight.dtype))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = F.linear(x, self.weight, self.bias)
        return y + (self.alpha / self.rank) * F.linear(F.linear(x, self.lora_A), self.lora_B)

    def lora_weights(self) -> LoraWeights:
        return LoraWeights(self.site_name, self.lora_A.data, self.lora_B.data, self.rank, self.alpha)

    @torch.no_grad()
    def merge(self) -> None:
        """Fold the low-rank delta into the base weight and zero the factors."""
        self.weight += (self.alpha / self.rank) * (self.lora_B @ self.lora_A)
        self.lora_B.zero_()


def inject_lora(model: nn.Module, rank: int, alpha: float, target: str, seed: int) -> int:
    """Wrap every linear site whose qualified name matches ``target`` (a regex).

    A is initialized N(0, 0.02^2) from the seeded generator, B starts zero.
    Returns the number of sites injected; zero matches is an error.
    """
    pattern = re.compile(target)
    matches: list[tuple[nn.Module, str, nn.Linear, str]] = []
    for parent_name, parent in model.named_modules():
        for child_name, child in parent.named_children():
            full = f"{parent_name}.{child_name}" if parent_name else child_name
            if isinstance(child, nn.Linear) and pattern.search(full):
                matches.append((parent, child_name, child, full))
    if not matches:
        raise ConfigError(f"lora target pattern {target!r} matched no linear sites")
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for parent, child_name, child, full in matches:
            wrapped = LoraLinear(child, rank, alpha, full)
            wrapped.lora_A.copy_(0.02 * torch.randn(wrapped.lora_A.shape, generator=gen,
                                                    dtype=wrapped.lora_A.dtype))
            setattr(parent, child_name, wrapped)
    return len(matches)


def lora_sites(model: nn.Module) -> list[LoraLinear]:
    return [m for m in model.modules() if isinstance(m, LoraLinear)]


def lora_forward(W: torch.Tensor, lora: LoraWeights, x: torch.Tensor) -> torch.Tensor:
    """y = Wx + (alpha/rank) * B(Ax) on raw matrices."""
    if W.shape[1] != x.shape[-1] or lora.A.shape[1] != x.shape[-1]:
        raise ShapeMismatchError(
            f"lora_forward: x has width {x.shape[-1]}, W expects {W.shape[1]}, A expects {lora.A.shape[1]}"
        )
    base = x @ W.T
    return base + (lora.alpha / lora.rank) * ((x @ lora.A.T) @ lora.B.T)


def merge_lora(W: torch.Tensor, lora: LoraWeights) -> torch.Tensor:
    """W' = W + (alpha/rank) * B @ A."""
    if lora.B.shape[0] != W.shape[0] or lora.A.shape[1] != W.shape[1]:
        raise ShapeMismatchError(
            f"merge_lora: delta shape {(lora.B.shape[0], lora.A.shape[1])} does not match W {tuple(W.shape)}"
        )
    return W + (lora.alpha / lora.rank) * (lora.B @ lora.A)
