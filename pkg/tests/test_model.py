"""
Tests for src.model (blocks, network, config validation).

Covers:
  - Output shape and head channel count per task
  - Input checks: divisibility by 32 and channel mismatch
  - Residual zero-check: RSU / RSU-4F reduce to their projection branch
  - RSU-4F keeps full resolution at every internal level
  - receptive_field arithmetic
  - validate_config: default schedule, scales, every violation reported
  - build_model determinism and global RNG isolation
  - parameter_count arithmetic
  - ModelConfig file-format key names
"""

import unittest

import torch
from torch import nn

from src.model import (
    RSU,
    RSU4F,
    ConfigError,
    NestedUNet,
    ResUNetpp,
    build_model,
    default_model_config,
    parameter_count,
    receptive_field,
    validate_config,
)
from src.schemas import ModelConfig, RSUConfig


TINY_WIDTH = 0.125


def tiny_model(num_classes: int = 1, seed: int = 0) -> NestedUNet:
    return build_model(default_model_config(num_classes, width=TINY_WIDTH), seed=seed)


def zero_internal_u(block: nn.Module) -> None:
    with torch.no_grad():
        for name, param in block.named_parameters():
            if not name.startswith("project."):
                param.zero_()


class TestForwardShapes(unittest.TestCase):
    def test_binary_parts_type_heads(self):
        x = torch.randn(1, 3, 32, 32)
        for num_classes in (1, 4, 8):
            model = tiny_model(num_classes).eval()
            with torch.no_grad():
                out = model(x)
            self.assertEqual(tuple(out.shape), (1, num_classes, 32, 32))

    def test_preserves_non_square_sizes(self):
        model = tiny_model(1).eval()
        for h, w in [(32, 64), (64, 32), (96, 64)]:
            with torch.no_grad():
                out = model(torch.randn(2, 3, h, w))
            self.assertEqual(tuple(out.shape), (2, 1, h, w))

    def test_indivisible_height_names_divisor(self):
        model = tiny_model(1)
        with self.assertRaises(ValueError) as ctx:
            model(torch.randn(1, 3, 70, 70))
        self.assertIn("H=70 not divisible by 32", str(ctx.exception))

    def test_indivisible_width_names_divisor(self):
        model = tiny_model(1)
        with self.assertRaises(ValueError) as ctx:
            model(torch.randn(1, 3, 64, 48))
        self.assertIn("W=48 not divisible by 32", str(ctx.exception))

    def test_channel_mismatch(self):
        model = tiny_model(1)
        with self.assertRaises(ValueError) as ctx:
            model(torch.randn(1, 4, 32, 32))
        self.assertIn("channel mismatch", str(ctx.exception))


class TestResidualZeroCheck(unittest.TestCase):
    def _check(self, block: nn.Module, size: int):
        block.eval()
        zero_internal_u(block)
        x = torch.randn(2, block.config.in_channels, size, size)
        with torch.no_grad():
            diff = (block(x) - block.project(x)).abs().max().item()
        self.assertLess(diff, 1e-6)

    def test_rsu_reduces_to_projection(self):
        torch.manual_seed(0)
        self._check(RSU(RSUConfig(depth=4, in_channels=3, mid_channels=4, out_channels=6)), 16)

    def test_rsu4f_reduces_to_projection(self):
        torch.manual_seed(0)
        cfg = RSUConfig(depth=4, in_channels=5, mid_channels=3, out_channels=5, dilated=True)
        self._check(RSU4F(cfg), 8)


class TestRSU4F(unittest.TestCase):
    def test_every_internal_level_keeps_resolution(self):
        cfg = RSUConfig(depth=4, in_channels=4, mid_channels=2, out_channels=4, dilated=True, dilation_rates=[1, 2, 4, 8])
        block = RSU4F(cfg).eval()
        seen = []
        hooks = [
            m.register_forward_hook(lambda _m, _i, out: seen.append(tuple(out.shape[2:])))
            for m in list(block.encoders) + [block.bottom] + list(block.decoders)
        ]
        with torch.no_grad():
            out = block(torch.randn(1, 4, 12, 20))
        for h in hooks:
            h.remove()
        self.assertEqual(len(seen), 7)
        self.assertTrue(all(shape == (12, 20) for shape in seen))
        self.assertEqual(tuple(out.shape), (1, 4, 12, 20))

    def test_one_pixel_input_is_legal(self):
        cfg = RSUConfig(depth=4, in_channels=2, mid_channels=2, out_channels=2, dilated=True)
        with torch.no_grad():
            out = RSU4F(cfg).eval()(torch.randn(1, 2, 1, 1))
        self.assertEqual(tuple(out.shape), (1, 2, 1, 1))

    def test_default_rates_double(self):
        cfg = RSUConfig(depth=4, in_channels=2, mid_channels=2, out_channels=2, dilated=True)
        self.assertEqual(cfg.dilation_rates, [1, 2, 4, 8])

    def test_malformed_rates_rejected(self):
        cfg = RSUConfig(depth=4, in_channels=2, mid_channels=2, out_channels=2, dilated=True, dilation_rates=[1, 2, 4])
        with self.assertRaises(ValueError) as ctx:
            RSU4F(cfg)
        self.assertIn("dilation_rates malformed", str(ctx.exception))


class TestBlocks(unittest.TestCase):
    def test_rsu_too_small_input(self):
        block = RSU(RSUConfig(depth=5, in_channels=3, mid_channels=2, out_channels=4))
        with self.assertRaises(ValueError) as ctx:
            block(torch.randn(1, 3, 8, 8))
        self.assertIn("too small", str(ctx.exception))

    def test_rsu_odd_size_round_trips(self):
        block = RSU(RSUConfig(depth=3, in_channels=3, mid_channels=2, out_channels=4)).eval()
        with torch.no_grad():
            out = block(torch.randn(1, 3, 13, 9))
        self.assertEqual(tuple(out.shape), (1, 4, 13, 9))

    def test_resunetpp_shape(self):
        cfg = RSUConfig(block="resunetpp", depth=3, in_channels=3, mid_channels=2, out_channels=4)
        block = ResUNetpp(cfg).eval()
        with torch.no_grad():
            out = block(torch.randn(1, 3, 16, 16))
        self.assertEqual(tuple(out.shape), (1, 4, 16, 16))
        self.assertEqual(len(block.nodes), 6)

    def test_block_channel_mismatch(self):
        block = RSU(RSUConfig(depth=2, in_channels=3, mid_channels=2, out_channels=4))
        with self.assertRaises(ValueError):
            block(torch.randn(1, 5, 8, 8))


class TestReceptiveField(unittest.TestCase):
    def test_single_dilated_conv(self):
        for d in (1, 2, 4, 8):
            self.assertEqual(receptive_field([d]), 2 * d + 1)

    def test_stacked_rates(self):
        self.assertEqual(receptive_field([1, 2, 4, 8]), 31)

    def test_invalid_rate(self):
        with self.assertRaises(ValueError):
            receptive_field([0, 1])


class TestValidateConfig(unittest.TestCase):
    def test_default_config_is_valid_with_scales(self):
        cfg = validate_config(default_model_config(1))
        self.assertEqual(cfg.scales, [1.0, 0.5, 0.25, 0.125, 0.0625, 0.0625])
        self.assertEqual([s.out_channels for s in cfg.stage_configs], [64, 128, 256, 512, 512, 512])
        self.assertEqual([d.out_channels for d in cfg.decoder_configs], [256, 128, 64, 64])
        self.assertTrue(cfg.stage_configs[-1].dilated)
        self.assertEqual(cfg.stage_configs[-1].dilation_rates, [1, 2, 4, 8])

    def test_three_decoders_rejected(self):
        base = default_model_config(1)
        cfg = base.model_copy(update={"decoder_configs": base.decoder_configs[:3]})
        with self.assertRaises(ConfigError) as ctx:
            validate_config(cfg)
        self.assertIn("decoder count", str(ctx.exception))

    def test_every_violation_is_reported(self):
        base = default_model_config(1)
        stages = list(base.stage_configs)
        stages[2] = stages[2].model_copy(update={"in_channels": 7})
        decoder = list(base.decoder_configs)
        decoder[1] = decoder[1].model_copy(update={"in_channels": 9})
        cfg = base.model_copy(update={"stage_configs": stages, "decoder_configs": decoder})
        with self.assertRaises(ConfigError) as ctx:
            validate_config(cfg)
        problems = ctx.exception.problems
        self.assertTrue(any(p.startswith("stages[2]") for p in problems))
        self.assertTrue(any(p.startswith("decoder[1]") for p in problems))

    def test_decoders_must_be_rsu(self):
        base = default_model_config(1)
        for kind in ("resunet", "resunetpp"):
            decoder = list(base.decoder_configs)
            decoder[2] = decoder[2].model_copy(update={"block": kind})
            with self.assertRaises(ConfigError) as ctx:
                validate_config(base.model_copy(update={"decoder_configs": decoder}))
            self.assertIn("decoder[2]: decoder blocks must be 'rsu'", str(ctx.exception))

    def test_bottom_must_be_dilated(self):
        base = default_model_config(1)
        stages = list(base.stage_configs)
        stages[-1] = RSUConfig(depth=4, in_channels=512, mid_channels=256, out_channels=512)
        with self.assertRaises(ConfigError) as ctx:
            validate_config(base.model_copy(update={"stage_configs": stages}))
        self.assertIn("dilated", str(ctx.exception))

    def test_depth_too_deep_for_level(self):
        base = default_model_config(1)
        stages = list(base.stage_configs)
        stages[4] = stages[4].model_copy(update={"depth": 4})
        with self.assertRaises(ConfigError) as ctx:
            validate_config(base.model_copy(update={"stage_configs": stages}))
        self.assertIn("stages[4]: depth 4", str(ctx.exception))

    def test_file_keys(self):
        data = default_model_config(4).to_file_dict()
        self.assertEqual(set(data), {"num_classes", "stages", "decoder", "downsample_factor", "normalization", "input_divisor"})
        self.assertEqual({"in", "mid", "out", "depth", "dilated", "dilation_rates"} - set(data["stages"][0]), set())
        self.assertEqual(ModelConfig.model_validate(data), default_model_config(4))


class TestBuildModel(unittest.TestCase):
    def test_same_seed_same_parameters(self):
        a, b = tiny_model(4, seed=3), tiny_model(4, seed=3)
        for (name_a, pa), (name_b, pb) in zip(a.state_dict().items(), b.state_dict().items()):
            self.assertEqual(name_a, name_b)
            self.assertTrue(torch.equal(pa, pb), name_a)

    def test_different_seed_different_parameters(self):
        a, b = tiny_model(1, seed=0), tiny_model(1, seed=1)
        self.assertFalse(torch.equal(a.head.weight, b.head.weight))

    def test_global_rng_untouched(self):
        before = torch.get_rng_state()
        tiny_model(1)
        self.assertTrue(torch.equal(before, torch.get_rng_state()))

    def test_biases_start_at_zero(self):
        model = tiny_model(1)
        for module in model.modules():
            if isinstance(module, nn.Conv2d):
                self.assertEqual(float(module.bias.abs().sum()), 0.0)


class TestParameterCount(unittest.TestCase):
    def test_single_conv(self):
        self.assertEqual(parameter_count(nn.Conv2d(3, 4, 3, bias=True)), 112)

    def test_none_is_zero(self):
        self.assertEqual(parameter_count(None), 0)

    def test_rebuild_gives_identical_count(self):
        self.assertEqual(parameter_count(tiny_model(8)), parameter_count(tiny_model(8, seed=5)))

    def test_width_shrinks_model(self):
        self.assertLess(parameter_count(tiny_model(1)), parameter_count(build_model(default_model_config(1, width=0.25))))
