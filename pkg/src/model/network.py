"""
The outer U: six encoder levels, four decoder blocks and a task head.

Encoder levels E1..E5 run at scales 1, 1/2, 1/4, 1/8, 1/16 joined by 2x2
max-pooling; E6 (the dilated RSU-4F) consumes E5 at 1/16. Decoder block Dk
receives the bilinear x2 upsampling of the incoming tensor (E6 for D1)
concatenated with the same-scale encoder output (E4, E3, E2, E1), so D4
ends at full input resolution. A 3x3 convolution maps D4 to the logits.
"""

import logging
from typing import List, Optional

import torch
import torch.nn.functional as F
from torch import nn

from ..schemas import ModelConfig, RSUConfig
from .blocks import build_block, upsample_like

logger = logging.getLogger(__name__)


ENCODER_LEVELS = 6
DECODER_BLOCKS = 4
# decoder block k concatenates the encoder level at this index as its skip
SKIP_LEVELS = (3, 2, 1, 0)


class ConfigError(ValueError):
    """Raised when a ModelConfig violates one or more structural invariants.

    `problems` lists every violation found, not just the first one.
    """

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("invalid model config: " + "; ".join(self.problems))


# ---------------------------------------------------------------------------
# Config construction and validation
# ---------------------------------------------------------------------------
ENCODER_OUT = (64, 128, 256, 512, 512, 512)
ENCODER_DEPTH = (3, 5, 4, 3, 2, 4)
ENCODER_BLOCK = ("resunetpp", "resunet", "resunet", "resunet", "resunet", "rsu")
DECODER_OUT = (256, 128, 64, 64)
DECODER_DEPTH = (3, 4, 5, 5)


def default_model_config(num_classes: int, width: float = 1.0, normalization: str = "instance") -> ModelConfig:
    """Default channel/depth schedule; `width` scales every channel count (min 1)."""
    if not 0.0 < width <= 1.0:
        raise ValueError(f"width must lie in (0, 1], got {width}")

    def ch(c: int) -> int:
        return max(1, int(round(c * width)))

    stages: List[RSUConfig] = []
    in_ch = 3
    for level, (out, depth, block) in enumerate(zip(ENCODER_OUT, ENCODER_DEPTH, ENCODER_BLOCK)):
        out_ch = ch(out)
        stages.append(
            RSUConfig(
                block=block,
                depth=depth,
                in_channels=in_ch,
                mid_channels=max(1, out_ch // 2),
                out_channels=out_ch,
                dilated=level == ENCODER_LEVELS - 1,
            )
        )
        in_ch = out_ch

    decoder: List[RSUConfig] = []
    incoming = stages[-1].out_channels
    for k, (out, depth) in enumerate(zip(DECODER_OUT, DECODER_DEPTH)):
        out_ch = ch(out)
        skip = stages[SKIP_LEVELS[k]].out_channels
        decoder.append(
            RSUConfig(
                depth=depth,
                in_channels=incoming + skip,
                mid_channels=max(1, out_ch // 2),
                out_channels=out_ch,
            )
        )
        incoming = out_ch

    return ModelConfig(
        num_classes=num_classes,
        stage_configs=stages,
        decoder_configs=decoder,
        normalization=normalization,
    )


def validate_config(config: ModelConfig) -> ModelConfig:
    """Return a copy with `scales` filled in, or raise ConfigError listing every violation."""
    problems: List[str] = []
    stages, decoder = config.stage_configs, config.decoder_configs

    if len(stages) != ENCODER_LEVELS:
        problems.append(f"encoder level count must be {ENCODER_LEVELS}, got {len(stages)}")
    if len(decoder) != DECODER_BLOCKS:
        problems.append(f"decoder count must be {DECODER_BLOCKS}, got {len(decoder)}")
    if config.downsample_factor != 2:
        problems.append(f"downsample_factor must be 2, got {config.downsample_factor}")

    for i, stage in enumerate(stages):
        name = f"stages[{i}]"
        problems.extend(stage.problems(name))
        is_bottom = i == len(stages) - 1
        if is_bottom and not stage.dilated:
            problems.append(f"{name}: the last encoder level must be a dilated RSU-4F block")
        if not is_bottom and stage.dilated:
            problems.append(f"{name}: only the last encoder level may be dilated")
        if i > 0 and stage.in_channels != stages[i - 1].out_channels:
            problems.append(
                f"{name}: in={stage.in_channels} does not chain from stages[{i - 1}].out={stages[i - 1].out_channels}"
            )

    for k, block in enumerate(decoder):
        name = f"decoder[{k}]"
        problems.extend(block.problems(name))
        if block.dilated:
            problems.append(f"{name}: decoder blocks must not be dilated")
        if block.block != "rsu":
            problems.append(f"{name}: decoder blocks must be 'rsu', got {block.block!r}")
        if len(stages) != ENCODER_LEVELS or k >= DECODER_BLOCKS:
            continue
        incoming = stages[-1].out_channels if k == 0 else decoder[k - 1].out_channels
        skip = stages[SKIP_LEVELS[k]].out_channels
        if block.in_channels != incoming + skip:
            problems.append(
                f"{name}: in={block.in_channels} must equal incoming {incoming} + skip {skip} = {incoming + skip}"
            )

    scales = [1.0, 0.5, 0.25, 0.125, 0.0625, 0.0625]
    if len(stages) == ENCODER_LEVELS and len(decoder) == DECODER_BLOCKS:
        decoder_scales = [0.125, 0.25, 0.5, 1.0]
        levels = [(f"stages[{i}]", s, scales[i]) for i, s in enumerate(stages)]
        levels += [(f"decoder[{k}]", d, decoder_scales[k]) for k, d in enumerate(decoder)]
        for name, block, scale in levels:
            if block.dilated:
                continue
            smallest = config.input_divisor * scale
            needed = 2 ** (block.depth - 1)
            if smallest < needed:
                problems.append(
                    f"{name}: depth {block.depth} needs >= {needed} pixels but the smallest legal input "
                    f"gives {smallest:g} at this level (input_divisor={config.input_divisor})"
                )
        min_divisor = 2 ** (ENCODER_LEVELS - 2)
        if config.input_divisor % min_divisor:
            problems.append(f"input_divisor must be a multiple of {min_divisor}, got {config.input_divisor}")

    if problems:
        raise ConfigError(problems)
    return config.model_copy(update={"scales": scales})


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------
class NestedUNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = validate_config(config)
        norm = self.config.normalization
        self.stages = nn.ModuleList([build_block(c, norm) for c in self.config.stage_configs])
        self.decoders = nn.ModuleList([build_block(c, norm) for c in self.config.decoder_configs])
        self.head = nn.Conv2d(self.config.decoder_configs[-1].out_channels, self.config.num_classes, 3, padding=1)

    @property
    def in_channels(self) -> int:
        return self.config.stage_configs[0].in_channels

    def check_input(self, x: torch.Tensor) -> None:
        if x.ndim != 4:
            raise ValueError(f"expected a [N, C, H, W] image batch, got shape {tuple(x.shape)}")
        if x.shape[1] != self.in_channels:
            raise ValueError(f"channel mismatch: model expects {self.in_channels} input channels, got {x.shape[1]}")
        d = self.config.input_divisor
        h, w = x.shape[2], x.shape[3]
        if h % d:
            raise ValueError(f"H={h} not divisible by {d}")
        if w % d:
            raise ValueError(f"W={w} not divisible by {d}")

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        self.check_input(x)
        encoded: List[torch.Tensor] = []
        hx = x
        for level, stage in enumerate(self.stages):
            if 0 < level < ENCODER_LEVELS - 1:
                hx = F.max_pool2d(hx, kernel_size=2, stride=2)
            hx = stage(hx)
            encoded.append(hx)

        hx = encoded[-1]
        for k, dec in enumerate(self.decoders):
            skip = encoded[SKIP_LEVELS[k]]
            hx = dec(torch.cat([upsample_like(hx, skip), skip], dim=1))

        return self.head(hx)


def init_parameters(model: nn.Module) -> None:
    """Kaiming fan-in for convolutions, zero biases, unit/zero norm affine."""
    for module in model.modules():
        if isinstance(module, nn.Conv2d):
            slope = 0.01
            nn.init.kaiming_normal_(module.weight, a=slope, mode="fan_in", nonlinearity="leaky_relu")
            if module.bias is not None:
                nn.init.zeros_(module.bias)
        elif isinstance(module, (nn.InstanceNorm2d, nn.BatchNorm2d)):
            if module.weight is not None:
                nn.init.ones_(module.weight)
            if module.bias is not None:
                nn.init.zeros_(module.bias)


def build_model(config: ModelConfig, seed: int = 0) -> NestedUNet:
    """Validate, construct and deterministically initialize. The global RNG is left untouched."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = NestedUNet(config)
        init_parameters(model)
    logger.debug(f"built model with {parameter_count(model)} parameters (seed={seed})")
    return model


def parameter_count(model: Optional[nn.Module]) -> int:
    if model is None:
        return 0
    return sum(p.numel() for p in model.parameters())
