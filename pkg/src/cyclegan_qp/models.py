"""Generators (encoder -> residual transformer -> decoder) and fully convolutional critics.

The decoder upsamples with nearest-neighbour interpolation followed by a
stride-1 convolution ("resize-convolution") by default; a strided transpose
convolution decoder is kept for comparison.  Every convolution weight is
drawn from a Glorot-uniform distribution and every bias starts at zero.
"""

import math
from dataclasses import dataclass, field
from typing import Literal

import torch
import torch.nn.functional as F
from torch import nn

__all__ = [
    "GeneratorSpec",
    "CriticSpec",
    "ParameterSet",
    "Generator",
    "Critic",
    "ResidualBlock",
    "ResizeConv",
    "glorot_uniform_init",
    "glorot_limit",
    "resize_conv_block",
    "build_generator",
    "build_critic",
    "build_decoder",
]

UPSAMPLE_MODES = ("nearest_neighbor_conv", "transpose_conv")
NORMS = ("instance", "none")


@dataclass(frozen=True)
class GeneratorSpec:
    base_width: int = 64
    n_residual_blocks: int = 9
    n_down: int = 2
    upsample_mode: Literal["nearest_neighbor_conv", "transpose_conv"] = "nearest_neighbor_conv"
    norm: Literal["instance", "none"] = "instance"
    channels: int = 3

    def __post_init__(self):
        for name in ("base_width", "n_residual_blocks", "n_down", "channels"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.upsample_mode not in UPSAMPLE_MODES:
            raise ValueError(f"upsample_mode must be one of {UPSAMPLE_MODES}")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}")

    @property
    def size_multiple(self):
        return 2 ** self.n_down


@dataclass(frozen=True)
class CriticSpec:
    base_width: int = 64
    n_layers: int = 4
    norm: Literal["instance", "none"] = "instance"
    channels: int = 3

    def __post_init__(self):
        for name in ("base_width", "n_layers", "channels"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}")

    @property
    def min_size(self):
        # Instance norm needs >1 spatial element after the last normalised stage.
        if self.norm == "instance" and self.n_layers > 1:
            return 2 ** (self.n_layers + 1)
        return 2 ** self.n_layers


@dataclass
class ParameterSet:
    """Named parameter arrays of one network plus how they were initialised."""

    arrays: dict
    seed: int
    scheme: str = "glorot_uniform"
    bias_init: str = "zeros"
    count: int = field(init=False)

    def __post_init__(self):
        self.count = sum(t.numel() for t in self.arrays.values())

    @classmethod
    def of(cls, module, seed):
        return cls({k: v for k, v in module.named_parameters()}, seed)


def glorot_limit(fan_in, fan_out):
    return math.sqrt(6.0 / (fan_in + fan_out))


def _torch_generator(seed):
    if isinstance(seed, torch.Generator):
        return seed
    g = torch.Generator()
    g.manual_seed(int(seed))
    return g


def glorot_uniform_init(fan_in, fan_out, seed=0, shape=None, dtype=torch.float32):
    """Sample ``U(-L, L)`` with ``L = sqrt(6 / (fan_in + fan_out))``.

    ``shape`` defaults to ``(fan_out, fan_in)``.  ``seed`` may be an int or a
    ``torch.Generator`` (which is advanced).
    """
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fans must be >= 1, got fan_in={fan_in}, fan_out={fan_out}")
    limit = glorot_limit(fan_in, fan_out)
    shape = (fan_out, fan_in) if shape is None else tuple(shape)
    u = torch.rand(shape, generator=_torch_generator(seed), dtype=dtype)
    return (2.0 * u - 1.0) * limit


def conv_fans(conv):
    """Glorot fans of a (transpose) convolution: channels times receptive field."""
    w = conv.weight
    receptive = w[0, 0].numel()
    if isinstance(conv, nn.ConvTranspose2d):
        in_ch, out_ch = w.shape[0], w.shape[1] * conv.groups
    else:
        out_ch, in_ch = w.shape[0], w.shape[1] * conv.groups
    return in_ch * receptive, out_ch * receptive


def init_glorot_(module, seed):
    """Re-initialise every convolution in ``module`` in registration order."""
    gen = _torch_generator(seed)
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                fan_in, fan_out = conv_fans(m)
                m.weight.copy_(glorot_uniform_init(fan_in, fan_out, gen, m.weight.shape, m.weight.dtype))
                if m.bias is not None:
                    m.bias.zero_()
    return module


def _norm(kind, channels):
    if kind == "instance":
        return nn.InstanceNorm2d(channels)
    return nn.Identity()


def resize_conv_block(x, weight, bias=None, padding_mode="reflect"):
    """Nearest-neighbour 2x upsampling followed by a stride-1 'same' convolution.

    ``weight`` has shape ``(C_out, C_in, k, k)`` with odd ``k``.
    """
    k = weight.shape[-1]
    if k % 2 != 1:
        raise ValueError("resize-convolution needs an odd kernel size")
    up = F.interpolate(x, scale_factor=2, mode="nearest")
    p = k // 2
    if p:
        if padding_mode == "zeros":
            up = F.pad(up, (p, p, p, p))
        else:
            up = F.pad(up, (p, p, p, p), mode=padding_mode)
    return F.conv2d(up, weight, bias)


class ResizeConv(nn.Module):
    def __init__(self, in_ch, out_ch, kernel_size=3, padding_mode="reflect"):
        super().__init__()
        self.padding_mode = padding_mode
        self.conv = nn.Conv2d(in_ch, out_ch, kernel_size, padding=0)

    def forward(self, x):
        return resize_conv_block(x, self.conv.weight, self.conv.bias, self.padding_mode)


class ResidualBlock(nn.Module):
    def __init__(self, channels, norm="instance"):
        super().__init__()
        self.body = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            _norm(norm, channels),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            _norm(norm, channels),
        )

    def forward(self, x):
        return x + self.body(x)


def _upsample(kind, in_ch, out_ch):
    if kind == "nearest_neighbor_conv":
        return ResizeConv(in_ch, out_ch, 3)
    return nn.ConvTranspose2d(in_ch, out_ch, 3, stride=2, padding=1, output_padding=1)


def build_decoder(spec):
    """Upsampling stack from ``base_width * 2**n_down`` channels back to ``base_width``."""
    layers = []
    width = spec.base_width * 2 ** spec.n_down
    for _ in range(spec.n_down):
        layers += [_upsample(spec.upsample_mode, width, width // 2),
                   _norm(spec.norm, width // 2),
                   nn.ReLU(inplace=True)]
        width //= 2
    return nn.Sequential(*layers)


class Generator(nn.Module):
    def __init__(self, spec=GeneratorSpec()):
        super().__init__()
        self.spec = spec
        w = spec.base_width

        enc = [nn.ReflectionPad2d(3), nn.Conv2d(spec.channels, w, 7), _norm(spec.norm, w), nn.ReLU(inplace=True)]
        for _ in range(spec.n_down):
            enc += [nn.Conv2d(w, 2 * w, 3, stride=2, padding=1, padding_mode="reflect"),
                    _norm(spec.norm, 2 * w), nn.ReLU(inplace=True)]
            w *= 2
        self.encoder = nn.Sequential(*enc)
        self.transformer = nn.Sequential(*[ResidualBlock(w, spec.norm) for _ in range(spec.n_residual_blocks)])
        self.decoder = build_decoder(spec)
        self.head = nn.Sequential(nn.ReflectionPad2d(3), nn.Conv2d(spec.base_width, spec.channels, 7), nn.Tanh())

    def forward(self, x):
        m = self.spec.size_multiple
        if x.dim() != 4 or x.shape[-1] % m or x.shape[-2] % m:
            raise ValueError(
                f"expected (N, C, H, W) with H and W divisible by {m}, got {tuple(x.shape)}")
        return self.head(self.decoder(self.transformer(self.encoder(x))))


class Critic(nn.Module):
    """PatchGAN-style score network; the score map is averaged to one value per sample."""

    def __init__(self, spec=CriticSpec()):
        super().__init__()
        self.spec = spec
        layers = []
        in_ch, out_ch = spec.channels, spec.base_width
        for i in range(spec.n_layers):
            layers.append(nn.Conv2d(in_ch, out_ch, 4, stride=2, padding=1))
            if i > 0:
                layers.append(_norm(spec.norm, out_ch))
            layers.append(nn.LeakyReLU(0.2, inplace=True))
            in_ch, out_ch = out_ch, min(2 * out_ch, 8 * spec.base_width)
        layers.append(nn.Conv2d(in_ch, 1, 3, padding=1))
        self.net = nn.Sequential(*layers)

    def score_map(self, x):
        m = self.spec.min_size
        if x.dim() != 4 or x.shape[-1] < m or x.shape[-2] < m:
            raise ValueError(f"critic needs (N, C, H, W) with H, W >= {m}, got {tuple(x.shape)}")
        return self.net(x)

    def forward(self, x):
        return self.score_map(x).mean(dim=(1, 2, 3))


def build_generator(spec=GeneratorSpec(), seed=0):
    net = init_glorot_(Generator(spec), seed)
    return net, ParameterSet.of(net, seed)


def build_critic(spec=CriticSpec(), seed=0):
    net = init_glorot_(Critic(spec), seed)
    return net, ParameterSet.of(net, seed)
