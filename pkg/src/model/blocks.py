"""
U-shaped building blocks.

Every block follows the same residual form: a projection unit maps the input
to `out_channels` and an internal U operates on that projection; the block
returns `U(project(x)) + project(x)`. Only the `project` submodule belongs to
the projection branch, so zeroing every other parameter leaves the block
equal to its projection.

  RSU        non-dilated U of depth L: L encoder units with L-1 max-pool steps,
             a dilation-2 bottom unit and L decoder units. `unit="conv"` uses
             conv/norm/LeakyReLU units, `unit="residual"` residual basic blocks.
  RSU4F      resolution-preserving U: dilated units replace pooling and
             upsampling entirely.
  ResUNetpp  nested dense-skip U (UNet++ pattern) built from residual basic
             blocks; used as the first encoder level.
"""

from typing import Callable, Dict, List, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from ..schemas import RSUConfig


def receptive_field(dilation_rates: Sequence[int], kernel_size: int = 3) -> int:
    """Receptive field of a chain of stride-1 convolutions with the given dilations."""
    if kernel_size < 1:
        raise ValueError(f"kernel_size must be >= 1, got {kernel_size}")
    if any(d < 1 for d in dilation_rates):
        raise ValueError(f"dilation rates must be >= 1, got {list(dilation_rates)}")
    return 1 + sum((kernel_size - 1) * d for d in dilation_rates)


def make_norm(normalization: str, channels: int) -> nn.Module:
    if normalization == "instance":
        return nn.InstanceNorm2d(channels, affine=True, eps=1e-5)
    if normalization == "batch":
        return nn.BatchNorm2d(channels, eps=1e-5)
    raise ValueError(f"Unknown normalization: {normalization!r}. Expected 'instance' or 'batch'.")


def apply_norm(norm: nn.Module, x: torch.Tensor) -> torch.Tensor:
    # Instance statistics are undefined on a single pixel.
    if isinstance(norm, nn.InstanceNorm2d) and x.shape[2] * x.shape[3] <= 1:
        return x
    return norm(x)


def pool2(x: torch.Tensor) -> torch.Tensor:
    """2x2 max pool; odd sizes are padded right/bottom by one first."""
    h, w = x.shape[2], x.shape[3]
    if h % 2 or w % 2:
        x = F.pad(x, (0, w % 2, 0, h % 2), mode="replicate")
    return F.max_pool2d(x, kernel_size=2, stride=2)


def upsample_like(x: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
    """Bilinear x2 upsample, cropped to the spatial size of `ref`."""
    x = F.interpolate(x, scale_factor=2.0, mode="bilinear", align_corners=False)
    return x[:, :, : ref.shape[2], : ref.shape[3]]


class ConvNormAct(nn.Module):
    """3x3 convolution (with bias), normalization, LeakyReLU."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        dilation: int = 1,
        normalization: str = "instance",
        negative_slope: float = 0.01,
    ):
        super().__init__()
        self.conv = nn.Conv2d(
            in_channels, out_channels, kernel_size=3, padding=dilation, dilation=dilation, bias=True
        )
        self.norm = make_norm(normalization, out_channels)
        self.act = nn.LeakyReLU(negative_slope)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.act(apply_norm(self.norm, self.conv(x)))


class ResidualBasicBlock(nn.Module):
    """Two 3x3 convolutions plus an identity shortcut (1x1 projection when channels change)."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        dilation: int = 1,
        normalization: str = "instance",
        negative_slope: float = 0.01,
    ):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=dilation, dilation=dilation, bias=True)
        self.norm1 = make_norm(normalization, out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=dilation, dilation=dilation, bias=True)
        self.norm2 = make_norm(normalization, out_channels)
        self.act = nn.LeakyReLU(negative_slope)
        if in_channels != out_channels:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, kernel_size=1, bias=True),
                make_norm(normalization, out_channels),
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.act(apply_norm(self.norm1, self.conv1(x)))
        out = apply_norm(self.norm2, self.conv2(out))
        if isinstance(self.shortcut, nn.Sequential):
            identity = apply_norm(self.shortcut[1], self.shortcut[0](x))
        else:
            identity = x
        return self.act(out + identity)


UnitFactory = Callable[[int, int, int], nn.Module]


def _unit_factory(kind: str, normalization: str, negative_slope: float) -> UnitFactory:
    cls = ResidualBasicBlock if kind == "residual" else ConvNormAct

    def make(in_channels: int, out_channels: int, dilation: int = 1) -> nn.Module:
        return cls(in_channels, out_channels, dilation, normalization, negative_slope)

    return make


class _UBlock(nn.Module):
    """Shared input checks for all U-shaped blocks."""

    def __init__(self, config: RSUConfig):
        super().__init__()
        self.config = config

    @property
    def min_size(self) -> int:
        return 1

    def _check_input(self, x: torch.Tensor) -> None:
        if x.ndim != 4:
            raise ValueError(f"expected a [N, C, H, W] tensor, got shape {tuple(x.shape)}")
        if x.shape[1] != self.config.in_channels:
            raise ValueError(
                f"channel mismatch: block expects {self.config.in_channels} input channels, got {x.shape[1]}"
            )
        h, w = x.shape[2], x.shape[3]
        if min(h, w) < self.min_size:
            raise ValueError(
                f"spatial size {h}x{w} too small for depth {self.config.depth} (needs >= {self.min_size})"
            )


class RSU(_UBlock):
    def __init__(self, config: RSUConfig, normalization: str = "instance", unit: str = "conv"):
        super().__init__(config)
        if config.dilated:
            raise ValueError("dilated blocks are built by RSU4F")
        make = _unit_factory(unit, normalization, config.negative_slope)
        depth, mid, out = config.depth, config.mid_channels, config.out_channels

        self.project = ConvNormAct(config.in_channels, out, 1, normalization, config.negative_slope)
        self.encoders = nn.ModuleList([make(out if i == 0 else mid, mid) for i in range(depth)])
        self.bottom = make(mid, mid, 2)
        # decoders[i] consumes cat(deeper, encoder i); decoders[0] produces the block output
        self.decoders = nn.ModuleList([make(2 * mid, out if i == 0 else mid) for i in range(depth)])

    @property
    def min_size(self) -> int:
        return 2 ** (self.config.depth - 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        self._check_input(x)
        hx_in = self.project(x)

        skips: List[torch.Tensor] = []
        hx = hx_in
        for i, enc in enumerate(self.encoders):
            if i > 0:
                hx = pool2(hx)
            hx = enc(hx)
            skips.append(hx)

        hx = self.bottom(hx)
        for i in reversed(range(len(self.decoders))):
            skip = skips[i]
            if hx.shape[2:] != skip.shape[2:]:
                hx = upsample_like(hx, skip)
            hx = self.decoders[i](torch.cat([hx, skip], dim=1))

        return hx + hx_in


class RSU4F(_UBlock):
    def __init__(self, config: RSUConfig, normalization: str = "instance"):
        super().__init__(config)
        problems = config.problems("RSU4F")
        if not config.dilated or problems:
            raise ValueError("; ".join(problems) or "RSU4F requires dilated=True")
        make = _unit_factory("conv", normalization, config.negative_slope)
        rates, mid, out = config.dilation_rates, config.mid_channels, config.out_channels
        levels = config.depth - 1

        self.project = ConvNormAct(config.in_channels, out, 1, normalization, config.negative_slope)
        self.encoders = nn.ModuleList([make(out if i == 0 else mid, mid, rates[i]) for i in range(levels)])
        self.bottom = make(mid, mid, rates[-1])
        self.decoders = nn.ModuleList(
            [make(2 * mid, out if i == 0 else mid, rates[i]) for i in range(levels)]
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        self._check_input(x)
        hx_in = self.project(x)

        skips: List[torch.Tensor] = []
        hx = hx_in
        for enc in self.encoders:
            hx = enc(hx)
            skips.append(hx)

        hx = self.bottom(hx)
        for i in reversed(range(len(self.decoders))):
            hx = self.decoders[i](torch.cat([hx, skips[i]], dim=1))

        return hx + hx_in


class ResUNetpp(_UBlock):
    """
    Nested U with dense skips over residual basic blocks.

    Node (i, j) sits at level i (scale 2^-i) and column j. Column 0 is the
    pooled backbone; node (i, j>0) sees every earlier node on its level plus
    the upsampled node (i+1, j-1). The top-right node (0, depth-1) feeds a
    final unit that restores `out_channels`.
    """

    def __init__(self, config: RSUConfig, normalization: str = "instance"):
        super().__init__(config)
        make = _unit_factory("residual", normalization, config.negative_slope)
        depth, mid, out = config.depth, config.mid_channels, config.out_channels

        self.project = ConvNormAct(config.in_channels, out, 1, normalization, config.negative_slope)
        nodes: Dict[str, nn.Module] = {}
        for i in range(depth):
            for j in range(depth - i):
                if j == 0:
                    nodes[f"x{i}_0"] = make(out if i == 0 else mid, mid)
                else:
                    nodes[f"x{i}_{j}"] = make((j + 1) * mid, mid)
        self.nodes = nn.ModuleDict(nodes)
        self.final = make(mid, out)

    @property
    def min_size(self) -> int:
        return 2 ** (self.config.depth - 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        self._check_input(x)
        hx_in = self.project(x)
        depth = self.config.depth

        grid: Dict[tuple, torch.Tensor] = {}
        hx = hx_in
        for i in range(depth):
            if i > 0:
                hx = pool2(hx)
            hx = self.nodes[f"x{i}_0"](hx)
            grid[(i, 0)] = hx

        for j in range(1, depth):
            for i in range(depth - j):
                same_level = [grid[(i, c)] for c in range(j)]
                below = upsample_like(grid[(i + 1, j - 1)], same_level[0])
                grid[(i, j)] = self.nodes[f"x{i}_{j}"](torch.cat(same_level + [below], dim=1))

        return self.final(grid[(0, depth - 1)]) + hx_in


def build_block(config: RSUConfig, normalization: str = "instance") -> nn.Module:
    if config.dilated:
        return RSU4F(config, normalization)
    if config.block == "resunetpp":
        return ResUNetpp(config, normalization)
    if config.block == "resunet":
        return RSU(config, normalization, unit="residual")
    return RSU(config, normalization, unit="conv")
