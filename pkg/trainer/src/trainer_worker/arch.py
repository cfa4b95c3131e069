"""Materialize an architecture-JSON description as a trainable network.

The description arrives on the wire as a plain dict:

    {"input_shape": [h, w, c],
     "blocks": [{"kind": "skip", "in_channels": ..., "conv1_out": ...,
                 "conv2_out": ..., "adapter_out": ... | null},
                {"kind": "pool", "pool_type": "max" | "mean"}, ...],
     "head": {"pool": "global_average", "in_features": ...,
              "num_classes": ..., "activation": "softmax"},
     "num_classes": n}

Every conv is 3x3, stride 1, zero same-padding, with bias, followed by a
batch norm and a rectifier; the skip path goes through a biased 1x1 conv
(no batch norm) exactly when ``adapter_out`` is set, and joins by
elementwise addition with no activation after the add.  Pools are 2x2,
stride 2.  The head is a global average pool and a single linear layer;
its softmax is realized by the loss and accuracy computations, so the
module's forward returns logits.
"""

from __future__ import annotations

import torch
from torch import nn


class SkipUnit(nn.Module):
    def __init__(self, in_channels: int, conv1_out: int, conv2_out: int,
                 adapter_out: int | None):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, conv1_out, 3, stride=1, padding=1, bias=True)
        self.bn1 = nn.BatchNorm2d(conv1_out)
        self.conv2 = nn.Conv2d(conv1_out, conv2_out, 3, stride=1, padding=1, bias=True)
        self.bn2 = nn.BatchNorm2d(conv2_out)
        self.relu = nn.ReLU(inplace=True)
        if adapter_out is not None:
            self.adapter = nn.Conv2d(in_channels, adapter_out, 1, stride=1, bias=True)
        else:
            self.adapter = None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.relu(self.bn1(self.conv1(x)))
        y = self.relu(self.bn2(self.conv2(y)))
        shortcut = x if self.adapter is None else self.adapter(x)
        return y + shortcut


class EvolvedNet(nn.Module):
    def __init__(self, arch: dict):
        super().__init__()
        blocks: list[nn.Module] = []
        for block in arch["blocks"]:
            kind = block["kind"]
            if kind == "skip":
                blocks.append(
                    SkipUnit(
                        block["in_channels"],
                        block["conv1_out"],
                        block["conv2_out"],
                        block["adapter_out"],
                    )
                )
            elif kind == "pool":
                if block["pool_type"] == "max":
                    blocks.append(nn.MaxPool2d(2, stride=2))
                elif block["pool_type"] == "mean":
                    blocks.append(nn.AvgPool2d(2, stride=2))
                else:
                    raise ValueError(f"unknown pool_type {block['pool_type']!r}")
            else:
                raise ValueError(f"unknown block kind {kind!r}")
        self.blocks = nn.Sequential(*blocks)
        head = arch["head"]
        self.global_pool = nn.AdaptiveAvgPool2d(1)
        self.classifier = nn.Linear(head["in_features"], head["num_classes"], bias=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.blocks(x)
        y = self.global_pool(y).flatten(1)
        return self.classifier(y)


def init_weights(net: nn.Module) -> str:
    """Rectifier-aware initialization; returns a tag recorded in responses."""
    for module in net.modules():
        if isinstance(module, nn.Conv2d):
            nn.init.kaiming_normal_(module.weight, mode="fan_out", nonlinearity="relu")
            nn.init.zeros_(module.bias)
        elif isinstance(module, nn.BatchNorm2d):
            nn.init.ones_(module.weight)
            nn.init.zeros_(module.bias)
        elif isinstance(module, nn.Linear):
            nn.init.normal_(module.weight, std=0.01)
            nn.init.zeros_(module.bias)
    return "kaiming_normal(relu)"


def build_network(arch: dict) -> nn.Module:
    """Validate the description minimally and construct the network."""
    for key in ("input_shape", "blocks", "head", "num_classes"):
        if key not in arch:
            raise ValueError(f"architecture description is missing {key!r}")
    net = EvolvedNet(arch)
    init_weights(net)
    return net


def learnable_parameter_count(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters() if p.requires_grad)
