"""Full-reference image quality metrics."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F

from .errors import DomainError, ShapeMismatchError

_LUMA = (0.299, 0.587, 0.114)


def psnr(a: torch.Tensor, b: torch.Tensor, max_value: float = 1.0) -> float:
    """10 * log10(max_value^2 / MSE); identical inputs give +inf."""
    if a.shape != b.shape:
        raise ShapeMismatchError(f"psnr: shapes differ, {tuple(a.shape)} vs {tuple(b.shape)}")
    if max_value <= 0:
        raise DomainError(f"psnr max_value must be > 0, got {max_value}")
    mse = torch.mean((a.double() - b.double()) ** 2).item()
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_value * max_value / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> torch.Tensor:
    r = torch.arange(size, dtype=torch.float64) - (size - 1) / 2.0
    g = torch.exp(-0.5 * (r / sigma) ** 2)
    k = g[:, None] * g[None, :]
    return k / k.sum()


_WINDOW = _gaussian_window()


def _to_luma(img: torch.Tensor) -> torch.Tensor:
    if img.dim() == 2:
        return img.double()
    if img.dim() == 3 and img.shape[0] == 3:
        w = torch.tensor(_LUMA, dtype=torch.float64).view(3, 1, 1)
        return (img.double() * w).sum(dim=0)
    if img.dim() == 3 and img.shape[0] == 1:
        return img[0].double()
    raise ShapeMismatchError(f"ssim expects (H, W), (1, H, W) or (3, H, W); got {tuple(img.shape)}")


def ssim(a: torch.Tensor, b: torch.Tensor) -> float:
    """Structural similarity on luma: 11x11 Gaussian window (sigma 1.5),
    K1=0.01, K2=0.03, dynamic range 1.0, averaged over valid windows."""
    if a.shape != b.shape:
        raise ShapeMismatchError(f"ssim: shapes differ, {tuple(a.shape)} vs {tuple(b.shape)}")
    x = _to_luma(a)[None, None]
    y = _to_luma(b)[None, None]
    if x.shape[-1] < 11 or x.shape[-2] < 11:
        raise DomainError(f"ssim needs images at least 11x11, got {tuple(x.shape[-2:])}")
    w = _WINDOW[None, None]
    c1 = (0.01 * 1.0) ** 2
    c2 = (0.03 * 1.0) ** 2

    mu_x = F.conv2d(x, w)
    mu_y = F.conv2d(y, w)
    xx = F.conv2d(x * x, w) - mu_x * mu_x
    yy = F.conv2d(y * y, w) - mu_y * mu_y
    xy = F.conv2d(x * y, w) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (xx + yy + c2)
    return float((num / den).mean())
