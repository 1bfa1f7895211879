"""Procedural texture corpus for toy restoration runs.

Each index under a global seed yields one colorful 2-d field (waves, blobs,
stripes, cells, gradients, or ridges) with a short caption drawn from the
closed vocabulary. Fields are dominated by low and mid frequencies so the
restoration task is well posed at 32x32.
"""

from __future__ import annotations

import math

import torch

from .rng import make_generator

FAMILIES = ("waves", "blobs", "stripes", "cells", "gradient", "ridges")


def _coords(size: int) -> tuple[torch.Tensor, torch.Tensor]:
    r = torch.linspace(0.0, 1.0, size, dtype=torch.float64)
    y, x = torch.meshgrid(r, r, indexing="ij")
    return x, y


def _u(gen, lo, hi):
    return (torch.rand((), generator=gen, dtype=torch.float64) * (hi - lo) + lo).item()


def _field(family: str, gen: torch.Generator, size: int) -> tuple[torch.Tensor, float]:
    """Scalar field in roughly [-1, 1] plus its dominant frequency."""
    x, y = _coords(size)
    if family == "waves":
        f = torch.zeros_like(x)
        freq = 0.0
        for _ in range(3):
            fx, fy = _u(gen, 0.5, 3.0), _u(gen, 0.5, 3.0)
            phase = _u(gen, 0, 2 * math.pi)
            f = f + _u(gen, 0.4, 1.0) * torch.sin(2 * math.pi * (fx * x + fy * y) + phase)
            freq = max(freq, math.hypot(fx, fy))
        return f, freq
    if family == "blobs":
        f = torch.zeros_like(x)
        for _ in range(int(_u(gen, 3, 7))):
            cx, cy = _u(gen, 0, 1), _u(gen, 0, 1)
            r = _u(gen, 0.12, 0.4)
            amp = _u(gen, -1.0, 1.0)
            f = f + amp * torch.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * r * r))
        return f, 1.0 / _u(gen, 0.2, 0.5)
    if family == "stripes":
        theta = _u(gen, 0, math.pi)
        freq = _u(gen, 1.0, 4.0)
        phase = _u(gen, 0, 2 * math.pi)
        t = torch.sin(2 * math.pi * freq * (x * math.cos(theta) + y * math.sin(theta)) + phase)
        return torch.tanh(_u(gen, 1.5, 4.0) * t), freq
    if family == "cells":
        k = int(_u(gen, 4, 9))
        sites = torch.rand(k, 2, generator=gen, dtype=torch.float64)
        d = ((x[None] - sites[:, 0, None, None]) ** 2
             + (y[None] - sites[:, 1, None, None]) ** 2).sqrt()
        f = d.min(dim=0).values
        return 1.0 - 2.0 * f / f.max(), float(k)
    if family == "gradient":
        a, b = _u(gen, -1, 1), _u(gen, -1, 1)
        fx, fy = _u(gen, 0.5, 1.5), _u(gen, 0.5, 1.5)
        phase = _u(gen, 0, 2 * math.pi)
        f = a * x + b * y + 0.4 * torch.sin(2 * math.pi * (fx * x + fy * y) + phase)
        return f, 1.0
    # ridges
    fx, fy = _u(gen, 0.8, 2.5), _u(gen, 0.8, 2.5)
    phase = _u(gen, 0, 2 * math.pi)
    f = 1.0 - 2.0 * torch.abs(torch.sin(2 * math.pi * (fx * x + fy * y) + phase))
    return f, math.hypot(fx, fy)


def generate_texture(global_seed: int, index: int, size: int = 32) -> tuple[torch.Tensor, str]:
    """One (3, size, size) image in [0, 1] and its caption."""
    gen = make_generator("texture", global_seed, index)
    family = FAMILIES[int(torch.randint(len(FAMILIES), (1,), generator=gen).item())]
    f, freq = _field(family, gen, size)
    lo, hi = f.min(), f.max()
    f = (f - lo) / (hi - lo) if (hi - lo) > 1e-6 else torch.full_like(f, 0.5)

    c0 = torch.tensor([_u(gen, 0.05, 0.95) for _ in range(3)], dtype=torch.float64)
    c1 = torch.tensor([_u(gen, 0.05, 0.95) for _ in range(3)], dtype=torch.float64)
    while (c0 - c1).abs().max() < 0.25:
        c1 = torch.tensor([_u(gen, 0.05, 0.95) for _ in range(3)], dtype=torch.float64)
    img = c0[:, None, None] * (1.0 - f[None]) + c1[:, None, None] * f[None]

    # faint fine detail so deblurring has something to recover
    x, y = _coords(size)
    dfx, dfy = _u(gen, 4.0, 8.0), _u(gen, 4.0, 8.0)
    img = img + _u(gen, 0.01, 0.05) * torch.sin(2 * math.pi * (dfx * x + dfy * y))[None]
    img = torch.clamp(img, 0.0, 1.0)

    words = [family]
    mean = img.mean().item()
    if mean > 0.58:
        words.append("bright")
    elif mean < 0.42:
        words.append("dark")
    warmth = (img[0].mean() - img[2].mean()).item()
    if warmth > 0.08:
        words.append("warm")
    elif warmth < -0.08:
        words.append("cool")
    words.append("coarse" if freq < 2.0 else "fine")
    return img.to(torch.float32), " ".join(words)
