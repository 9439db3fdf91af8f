"""Spatial pyramid pooling for sparse depth: stride-1 max pools at several
kernel sizes, concatenated with the input and re-weighted by 1x1 convolutions."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

KITTI_KERNELS = (5, 7, 9, 11)
VOID_KERNELS = (5, 7, 9, 11, 13)


@dataclass
class SppConfig:
    kernel_sizes: tuple = VOID_KERNELS
    conv_channels: tuple = (32, 32, 32)
    negative_slope: float = 0.1

    def __post_init__(self):
        ks = tuple(int(k) for k in self.kernel_sizes)
        if any(k < 3 or k % 2 == 0 for k in ks):
            raise ValueError(f"kernel sizes must be odd and >= 3, got {ks}")
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError(f"kernel sizes must be strictly increasing, got {ks}")
        self.kernel_sizes = ks
        self.conv_channels = tuple(int(c) for c in self.conv_channels)

    @property
    def pyramid_channels(self) -> int:
        return 2 * (1 + len(self.kernel_sizes))


def sparse_input(values: torch.Tensor) -> torch.Tensor:
    """Stack sparse depth ``(N, 1, H, W)`` with its validity mask -> ``(N, 2, H, W)``."""
    return torch.cat([values, (values > 0).to(values.dtype)], dim=1)


def pool_pyramid(x: torch.Tensor, kernel_sizes=VOID_KERNELS) -> torch.Tensor:
    """``[x, maxpool_k1(x), maxpool_k2(x), ...]`` with stride 1 and same padding.

    Inputs are non-negative, so torch's implicit -inf padding acts exactly like
    zero padding: an absent measurement never wins the max.
    """
    levels = [x]
    prev, level = 1, x
    # Window maxima compose: pooling a k1-level with k2 gives the (k1 + k2 - 1)
    # level, so each level is grown from the previous one.
    for k in kernel_sizes:
        level = _max_pool_square(level, k - prev + 1)
        prev = k
        levels.append(level)
    return torch.cat(levels, dim=1)


def _max_pool_square(x: torch.Tensor, k: int) -> torch.Tensor:
    if k == 1:
        return x
    if k <= 3:
        return F.max_pool2d(x, kernel_size=k, stride=1, padding=k // 2)
    x = F.max_pool2d(x, kernel_size=(1, k), stride=1, padding=(0, k // 2))
    return F.max_pool2d(x, kernel_size=(k, 1), stride=1, padding=(k // 2, 0))


class SPP(nn.Module):
    def __init__(self, config: SppConfig | None = None):
        super().__init__()
        self.config = config or SppConfig()
        chans = (self.config.pyramid_channels,) + self.config.conv_channels
        n = len(self.config.conv_channels)
        names = [f"conv{i + 1}" for i in range(n - 1)] + ["output_spp"]
        self.layers = nn.ModuleDict(
            {name: nn.Conv2d(cin, cout, 1) for name, cin, cout in zip(names, chans, chans[1:])})
        self.act = nn.LeakyReLU(self.config.negative_slope)

    @property
    def out_channels(self) -> int:
        return self.config.conv_channels[-1]

    def fuse(self, pyramid: torch.Tensor) -> torch.Tensor:
        first = next(iter(self.layers.values()))
        if pyramid.shape[1] != first.in_channels:
            raise ValueError(
                f"pyramid has {pyramid.shape[1]} channels, fuse layers expect {first.in_channels}")
        x = pyramid
        for layer in self.layers.values():
            x = self.act(layer(x))
        return x

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fuse(pool_pyramid(x, self.config.kernel_sizes))
