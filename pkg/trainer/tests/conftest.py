import pytest


def skip_arch(channels=16, blocks=1, in_channels=3, num_classes=10):
    """Architecture dict with `blocks` skip units at a fixed width."""
    out = []
    current = in_channels
    for _ in range(blocks):
        out.append(
            {
                "kind": "skip",
                "in_channels": current,
                "conv1_out": channels,
                "conv2_out": channels,
                "adapter_out": channels if current != channels else None,
            }
        )
        current = channels
    return {
        "input_shape": [32, 32, in_channels],
        "blocks": out,
        "head": {
            "pool": "global_average",
            "in_features": current,
            "num_classes": num_classes,
            "activation": "softmax",
        },
        "num_classes": num_classes,
    }


@pytest.fixture
def tiny_arch():
    arch = skip_arch(channels=16, blocks=1)
    arch["blocks"].append({"kind": "pool", "pool_type": "max"})
    return arch
