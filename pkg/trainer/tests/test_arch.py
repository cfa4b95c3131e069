import pytest
import torch
from torch import nn

from conftest import skip_arch
from trainer_worker import build_network, learnable_parameter_count


def arch_from_blocks(blocks, in_features, num_classes=10, input_shape=(32, 32, 3)):
    return {
        "input_shape": list(input_shape),
        "blocks": blocks,
        "head": {
            "pool": "global_average",
            "in_features": in_features,
            "num_classes": num_classes,
            "activation": "softmax",
        },
        "num_classes": num_classes,
    }


class TestParameterCounts:
    # expected totals hand-counted per layer: 3x3 conv = 9*Cin*Cout + Cout,
    # batch norm = 2*C, 1x1 adapter = Cin*Cout + Cout, head = C*k + k

    def test_single_skip_with_adapter(self):
        arch = arch_from_blocks(
            [{"kind": "skip", "in_channels": 3, "conv1_out": 64, "conv2_out": 128, "adapter_out": 128}],
            in_features=128,
        )
        assert learnable_parameter_count(build_network(arch)) == 77_834

    def test_single_skip_without_adapter(self):
        arch = arch_from_blocks(
            [{"kind": "skip", "in_channels": 64, "conv1_out": 64, "conv2_out": 64, "adapter_out": None}],
            in_features=64,
            input_shape=(32, 32, 64),
        )
        assert learnable_parameter_count(build_network(arch)) == 74_762

    def test_three_block_network(self):
        arch = arch_from_blocks(
            [
                {"kind": "skip", "in_channels": 3, "conv1_out": 64, "conv2_out": 128, "adapter_out": 128},
                {"kind": "pool", "pool_type": "max"},
                {"kind": "skip", "in_channels": 128, "conv1_out": 128, "conv2_out": 128, "adapter_out": None},
            ],
            in_features=128,
        )
        assert learnable_parameter_count(build_network(arch)) == 373_514

    def test_batch_norm_running_stats_not_counted(self):
        arch = skip_arch(channels=16, blocks=1)
        net = build_network(arch)
        buffers = sum(b.numel() for b in net.buffers())
        assert buffers > 0  # running mean/var exist
        # learnable total excludes them: conv1 448 + bn 32 + conv2 2320 + bn 32
        # + adapter 64 + head 170
        assert learnable_parameter_count(net) == 448 + 32 + 2320 + 32 + 64 + 170


class TestStructure:
    def test_forward_shape(self, tiny_arch):
        net = build_network(tiny_arch)
        out = net(torch.randn(4, 3, 32, 32))
        assert out.shape == (4, 10)

    def test_adapter_presence(self):
        with_adapter = build_network(skip_arch(channels=16, in_channels=3))
        without = build_network(skip_arch(channels=16, in_channels=16))
        assert with_adapter.blocks[0].adapter is not None
        assert without.blocks[0].adapter is None

    def test_adapter_is_1x1_biased_conv(self):
        net = build_network(skip_arch(channels=16, in_channels=3))
        adapter = net.blocks[0].adapter
        assert adapter.kernel_size == (1, 1)
        assert adapter.stride == (1, 1)
        assert adapter.bias is not None

    def test_pool_kinds(self):
        arch = arch_from_blocks(
            [
                {"kind": "pool", "pool_type": "max"},
                {"kind": "pool", "pool_type": "mean"},
            ],
            in_features=3,
        )
        net = build_network(arch)
        assert isinstance(net.blocks[0], nn.MaxPool2d)
        assert isinstance(net.blocks[1], nn.AvgPool2d)

    def test_spatial_collapse_raises_on_forward(self):
        arch = arch_from_blocks(
            [{"kind": "pool", "pool_type": "max"} for _ in range(6)], in_features=3
        )
        net = build_network(arch)  # construction succeeds
        with pytest.raises(RuntimeError):
            net(torch.randn(1, 3, 32, 32))

    def test_unknown_block_kind(self):
        with pytest.raises(ValueError, match="kind"):
            build_network(arch_from_blocks([{"kind": "dense"}], in_features=3))

    def test_unknown_pool_type(self):
        with pytest.raises(ValueError, match="pool_type"):
            build_network(
                arch_from_blocks([{"kind": "pool", "pool_type": "median"}], in_features=3)
            )

    def test_missing_top_level_key(self):
        with pytest.raises(ValueError, match="head"):
            build_network({"input_shape": [32, 32, 3], "blocks": [], "num_classes": 10})

    def test_skip_add_happens(self):
        # zero out the conv path: output must equal the shortcut exactly
        net = build_network(skip_arch(channels=16, in_channels=16))
        unit = net.blocks[0]
        nn.init.zeros_(unit.conv2.weight)
        nn.init.zeros_(unit.conv2.bias)
        nn.init.zeros_(unit.bn2.weight)
        nn.init.zeros_(unit.bn2.bias)
        unit.eval()
        x = torch.randn(2, 16, 8, 8)
        assert torch.allclose(unit(x), x)
