"""ScaffNet (sparse depth -> dense topology), FusionNet (image + sparse depth +
topology -> scale/residual refinement) and a small pose regressor."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from . import geometry
from .spp import SPP, SppConfig

HEADS = ("alpha-beta", "alpha", "beta", "direct")


@dataclass
class ScaffNetConfig:
    spp: SppConfig = field(default_factory=SppConfig)
    use_spp: bool = True
    encoder_channels: tuple = (32, 64, 96, 128, 196)
    decoder_channels: tuple = (128, 96, 64, 64, 32)
    min_depth: float = 0.1
    init_depth: float = 3.0
    depth_norm: float = 10.0
    negative_slope: float = 0.1

    def __post_init__(self):
        if isinstance(self.spp, dict):
            self.spp = SppConfig(**self.spp)
        self.encoder_channels = tuple(int(c) for c in self.encoder_channels)
        self.decoder_channels = tuple(int(c) for c in self.decoder_channels)
        if not self.encoder_channels or len(self.decoder_channels) != len(self.encoder_channels):
            raise ValueError("need one decoder stage per encoder stage")

    @property
    def stride(self) -> int:
        return 2 ** len(self.encoder_channels)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FusionNetConfig:
    image_channels: tuple = (48, 96, 192, 384, 384)
    depth_channels: tuple = (16, 32, 64, 128, 128)
    decoder_channels: tuple = (256, 128, 128, 64)
    # 3x3 convs after each skip concatenation (the last stage uses the head)
    decoder_conv_channels: tuple = (256, 128, 64)
    head: str = "alpha-beta"
    min_depth: float = 0.1
    max_depth: float = 100.0
    depth_norm: float = 10.0
    negative_slope: float = 0.1

    def __post_init__(self):
        self.image_channels = tuple(int(c) for c in self.image_channels)
        self.depth_channels = tuple(int(c) for c in self.depth_channels)
        self.decoder_channels = tuple(int(c) for c in self.decoder_channels)
        self.decoder_conv_channels = tuple(int(c) for c in self.decoder_conv_channels)
        if len(self.decoder_conv_channels) != len(self.decoder_channels) - 1:
            raise ValueError("need one decoder conv per decoder stage except the last")
        if len(self.image_channels) != len(self.depth_channels):
            raise ValueError("image and depth branches need the same number of stages")
        if len(self.decoder_channels) != len(self.image_channels) - 1:
            raise ValueError("FusionNet decoder has one stage fewer than the encoders")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}; expected one of {HEADS}")

    @property
    def stride(self) -> int:
        return 2 ** len(self.image_channels)

    @property
    def head_channels(self) -> int:
        return 2 if self.head == "alpha-beta" else 1

    def to_dict(self) -> dict:
        return asdict(self)


def scaffnet_preset(name: str = "paper", kernels=None, **overrides) -> ScaffNetConfig:
    """``paper`` is the full-size reference architecture; ``tiny`` uses a quarter of the channels."""
    spp = SppConfig(kernel_sizes=kernels) if kernels is not None else SppConfig()
    if name == "paper":
        return ScaffNetConfig(spp=spp, **overrides)
    if name == "tiny":
        spp.conv_channels = (8, 8, 8)
        return ScaffNetConfig(spp=spp, encoder_channels=(8, 16, 24, 32, 48),
                              decoder_channels=(32, 24, 16, 16, 8), **overrides)
    raise ValueError(f"unknown preset {name!r}")


def fusionnet_preset(name: str = "paper", **overrides) -> FusionNetConfig:
    if name == "paper":
        return FusionNetConfig(**overrides)
    if name == "tiny":
        return FusionNetConfig(image_channels=(12, 24, 48, 96, 96), depth_channels=(4, 8, 16, 32, 32),
                               decoder_channels=(64, 32, 32, 16), decoder_conv_channels=(64, 32, 16),
                               **overrides)
    raise ValueError(f"unknown preset {name!r}")


def check_resolution(height: int, width: int, stride: int):
    if height % stride or width % stride:
        pad_h = (-height) % stride
        pad_w = (-width) % stride
        raise ValueError(
            f"resolution {width}x{height} must be divisible by {stride}; "
            f"pad by {pad_w} columns and {pad_h} rows (e.g. to {width + pad_w}x{height + pad_h})")


def _conv(cin, cout, k, stride, slope):
    return nn.Sequential(nn.Conv2d(cin, cout, k, stride, padding=k // 2), nn.LeakyReLU(slope))


def _deconv(cin, cout, slope):
    return nn.Sequential(nn.ConvTranspose2d(cin, cout, 3, 2, padding=1, output_padding=1),
                         nn.LeakyReLU(slope))


def _stage_names(n: int, suffix: str = "") -> list:
    return [f"conv{i + 1}{suffix}" for i in range(n - 1)] + [f"latent{suffix}"]


def _encoder(cin, channels, slope, suffix=""):
    layers = {}
    for name, c, i in zip(_stage_names(len(channels), suffix), channels, range(len(channels))):
        layers[name] = _conv(cin, c, 5 if i == 0 else 3, 2, slope)
        cin = c
    return nn.ModuleDict(layers)


def _run_encoder(layers, x):
    skips = []
    for layer in layers.values():
        x = layer(x)
        skips.append(x)
    return skips


class ScaffNet(nn.Module):
    """SPP followed by a strided encoder and a deconvolution decoder with skips.

    Layer names: ``spp.layers.conv1``, ``encoder.latent``,
    ``decoder.deconv5``, ``decoder.conv5``, ..., ``output``.
    """

    def __init__(self, config: ScaffNetConfig | None = None):
        super().__init__()
        self.config = cfg = config or ScaffNetConfig()
        slope = cfg.negative_slope
        if cfg.use_spp:
            self.spp = SPP(cfg.spp)
        else:
            # same 1x1 stack applied to the raw 2-channel input (no pooling)
            self.spp = SPP(SppConfig(kernel_sizes=(), conv_channels=cfg.spp.conv_channels,
                                     negative_slope=cfg.spp.negative_slope))
        self.encoder = _encoder(self.spp.out_channels, cfg.encoder_channels, slope)
        enc, dec = cfg.encoder_channels, cfg.decoder_channels
        n = len(enc)
        self.decoder = nn.ModuleDict()
        cin = enc[-1]
        for i, c in enumerate(dec):
            level = n - i
            self.decoder[f"deconv{level}"] = _deconv(cin, c, slope)
            if i < n - 1:
                # skip from the encoder stage at the same resolution
                self.decoder[f"conv{level}"] = _conv(c + enc[n - 2 - i], c, 3, 1, slope)
            cin = c
        self.output = nn.Conv2d(dec[-1], 1, 3, padding=1)
        with torch.no_grad():
            self.output.bias.fill_(_softplus_inv(cfg.init_depth - cfg.min_depth))

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        """``z`` is ``(N, 2, H, W)``: sparse depth in meters and its validity."""
        cfg = self.config
        check_resolution(z.shape[-2], z.shape[-1], cfg.stride)
        x = torch.cat([z[:, :1] / cfg.depth_norm, z[:, 1:]], dim=1)
        skips = _run_encoder(self.encoder, self.spp(x))
        x = skips[-1]
        n = len(skips)
        for i in range(n):
            level = n - i
            x = self.decoder[f"deconv{level}"](x)
            if i < n - 1:
                x = self.decoder[f"conv{level}"](torch.cat([x, skips[-2 - i]], dim=1))
        return cfg.min_depth + F.softplus(self.output(x))


class FusionNet(nn.Module):
    """Late-fusion image/depth encoders; the decoder emits per-pixel scale and residual
    at half resolution, upsampled by nearest neighbor."""

    def __init__(self, config: FusionNetConfig | None = None):
        super().__init__()
        self.config = cfg = config or FusionNetConfig()
        slope = cfg.negative_slope
        self.image_encoder = _encoder(3, cfg.image_channels, slope, "_image")
        self.depth_encoder = _encoder(2, cfg.depth_channels, slope, "_depth")
        ic, dc = cfg.image_channels, cfg.depth_channels
        n = len(ic)
        self.decoder = nn.ModuleDict()
        cin = ic[-1] + dc[-1]
        for i, c in enumerate(cfg.decoder_channels):
            level = n - i
            self.decoder[f"deconv{level}"] = _deconv(cin, c, slope)
            skip = ic[n - 2 - i] + dc[n - 2 - i]
            if i < len(cfg.decoder_channels) - 1:
                cout = cfg.decoder_conv_channels[i]
                self.decoder[f"conv{level}"] = _conv(c + skip, cout, 3, 1, slope)
                cin = cout
            else:
                self.decoder[f"conv{level}"] = nn.Conv2d(c + skip, cfg.head_channels, 3, padding=1)
        self.reset_head()

    @property
    def head(self) -> nn.Conv2d:
        return list(self.decoder.values())[-1]

    def reset_head(self):
        """Zero weights with biases so the initial output is alpha=1, beta=0."""
        with torch.no_grad():
            nn.init.zeros_(self.head.weight)
            bias = {"alpha-beta": [1.0, 0.0], "alpha": [1.0], "beta": [0.0],
                    "direct": [_softplus_inv(3.0 - self.config.min_depth)]}[self.config.head]
            self.head.bias.copy_(torch.tensor(bias))

    def refinement(self, image, z, d0):
        """Raw head output at full resolution."""
        cfg = self.config
        check_resolution(image.shape[-2], image.shape[-1], cfg.stride)
        if not (image.shape[-2:] == z.shape[-2:] == d0.shape[-2:]):
            raise ValueError(f"shape mismatch: image {tuple(image.shape)}, z {tuple(z.shape)}, "
                             f"d0 {tuple(d0.shape)}")
        depth_in = torch.cat([z[:, :1], d0], dim=1) / cfg.depth_norm
        si = _run_encoder(self.image_encoder, image)
        sd = _run_encoder(self.depth_encoder, depth_in)
        x = torch.cat([si[-1], sd[-1]], dim=1)
        layers = list(self.decoder.values())
        for i in range(len(layers) // 2):
            x = torch.cat([layers[2 * i](x), si[-2 - i], sd[-2 - i]], dim=1)
            x = layers[2 * i + 1](x)
        return F.interpolate(x, scale_factor=2, mode="nearest")

    def compose(self, out, d0):
        """Map the head output to (alpha, beta, unclamped depth)."""
        head = self.config.head
        if head == "alpha-beta":
            alpha, beta = out[:, :1], out[:, 1:2]
        elif head == "alpha":
            alpha, beta = out, torch.zeros_like(out)
        elif head == "beta":
            alpha, beta = torch.ones_like(out), out
        else:
            d = self.config.min_depth + F.softplus(out)
            return torch.ones_like(d), torch.zeros_like(d), d
        return alpha, beta, alpha * d0 + beta

    def forward(self, image, z, d0):
        """Returns ``(alpha, beta, depth)``; depth is clamped to the configured range."""
        alpha, beta, d = self.compose(self.refinement(image, z, d0), d0)
        return alpha, beta, d.clamp(self.config.min_depth, self.config.max_depth)


class PoseNet(nn.Module):
    """Two-frame encoder regressing a 6-DoF motion target -> adjacent frame."""

    def __init__(self, channels=(16, 32, 64, 128, 256), scale: float = 0.01):
        super().__init__()
        self.encoder = _encoder(6, channels, 0.1, "_pose")
        self.head = nn.Conv2d(channels[-1], 6, 1)
        self.scale = scale
        with torch.no_grad():
            nn.init.zeros_(self.head.weight)
            nn.init.zeros_(self.head.bias)

    def vector(self, image_t, image_tau):
        x = torch.cat([image_t, image_tau], dim=1)
        x = _run_encoder(self.encoder, x)[-1]
        return self.scale * self.head(x).mean(dim=(2, 3))

    def forward(self, image_t, image_tau):
        """``(N, 4, 4)`` transforms mapping target-camera points into the adjacent camera."""
        return geometry.pose_from_vector(self.vector(image_t, image_tau))


def _softplus_inv(y: float) -> float:
    return y + math.log(-math.expm1(-y))


def conv_params(cin: int, cout: int, k: int, bias: bool = True) -> int:
    return cin * cout * k * k + (cout if bias else 0)


def param_count(config) -> int:
    """Trainable parameters implied by a network config, counted layer by layer."""
    if isinstance(config, ScaffNetConfig):
        spp = config.spp
        pyramid = spp.pyramid_channels if config.use_spp else 2
        chans = (pyramid,) + spp.conv_channels
        total = sum(conv_params(a, b, 1) for a, b in zip(chans, chans[1:]))
        enc, dec = config.encoder_channels, config.decoder_channels
        cin = chans[-1]
        for i, c in enumerate(enc):
            total += conv_params(cin, c, 5 if i == 0 else 3)
            cin = c
        n = len(enc)
        for i, c in enumerate(dec):
            total += conv_params(cin, c, 3)
            if i < n - 1:
                total += conv_params(c + enc[n - 2 - i], c, 3)
            cin = c
        return total + conv_params(dec[-1], 1, 3)
    if isinstance(config, FusionNetConfig):
        total = 0
        for cin, chans in ((3, config.image_channels), (2, config.depth_channels)):
            for i, c in enumerate(chans):
                total += conv_params(cin, c, 5 if i == 0 else 3)
                cin = c
        ic, dc = config.image_channels, config.depth_channels
        n = len(ic)
        cin = ic[-1] + dc[-1]
        for i, c in enumerate(config.decoder_channels):
            total += conv_params(cin, c, 3)
            skip = ic[n - 2 - i] + dc[n - 2 - i]
            if i < len(config.decoder_channels) - 1:
                cin = config.decoder_conv_channels[i]
                total += conv_params(c + skip, cin, 3)
            else:
                total += conv_params(c + skip, config.head_channels, 3)
        return total
    raise TypeError(f"unsupported config type {type(config).__name__}")


def count_trainable(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)
