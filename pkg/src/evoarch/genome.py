"""Genome representation for evolved CNN architectures.

A genome is an ordered, variable-length sequence of layer genes.  Two gene
kinds exist:

* skip gene -- a block of two 3x3 convolutions (feature-map counts f1, f2)
  with an identity connection from the block input to the block output,
* pooling gene -- a 2x2, stride-2 pooling layer (max or mean).

This module owns the canonical text serialization of genomes, the SHA-224
identifier derived from it (the fitness-cache key), structural validation,
decoding into an explicit layer-by-layer architecture description, and
exact learnable-parameter counting.

Canonical text format: one token per gene, tokens joined by ``-``.
Skip genes serialize as ``S:<f1>:<f2>``, pooling genes as ``P:max`` or
``P:mean``.  Example: ``S:64:128-P:max-S:128:128``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator


class PoolType(Enum):
    MAX = "max"
    MEAN = "mean"


@dataclass(frozen=True)
class SkipGene:
    """Two stacked 3x3 convolutions plus an identity skip connection."""

    f1: int
    f2: int

    TAG = 1

    def __post_init__(self):
        if self.f1 < 1 or self.f2 < 1:
            raise ValueError(f"feature-map counts must be positive, got ({self.f1}, {self.f2})")


@dataclass(frozen=True)
class PoolGene:
    """A 2x2, stride-2 pooling layer; halves the spatial size."""

    pool_type: PoolType

    TAG = 2


LayerGene = SkipGene | PoolGene


@dataclass(frozen=True)
class Genome:
    """Ordered, non-empty sequence of layer genes.

    Genomes are immutable; operators produce new genomes rather than
    editing in place.  Equality is element-wise over the gene sequence.
    """

    layers: tuple[LayerGene, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.layers) == 0:
            raise ValueError("genome must contain at least one gene")

    def __len__(self) -> int:
        return len(self.layers)

    def __iter__(self) -> Iterator[LayerGene]:
        return iter(self.layers)

    def __getitem__(self, index):
        return self.layers[index]


class GenomeParseError(ValueError):
    """Raised when a genome string does not follow the canonical format."""

    def __init__(self, message: str, token: str, offset: int):
        super().__init__(f"{message} (token {token!r} at byte offset {offset})")
        self.token = token
        self.offset = offset


class GenomeValidationError(ValueError):
    """Raised when decoding a genome that fails structural validation."""

    def __init__(self, report: "ValidationReport"):
        super().__init__("; ".join(report.messages) or "genome failed validation")
        self.report = report


def canonical_serialize(genome: Genome) -> bytes:
    """Serialize a genome to its canonical ASCII byte form.

    The encoding is total and deterministic: structurally equal genomes
    produce identical bytes, which makes the byte form suitable as the
    preimage of the genome identifier.
    """
    tokens = []
    for gene in genome:
        if isinstance(gene, SkipGene):
            tokens.append(f"S:{gene.f1}:{gene.f2}")
        else:
            tokens.append(f"P:{gene.pool_type.value}")
    return "-".join(tokens).encode("ascii")


def parse_genome(text: str | bytes) -> Genome:
    """Parse the canonical text format back into a Genome.

    Inverse of :func:`canonical_serialize`; errors carry the offending
    token and its byte offset.
    """
    if isinstance(text, bytes):
        text = text.decode("ascii", errors="replace")
    text = text.strip()
    if not text:
        raise GenomeParseError("empty genome string", token="", offset=0)

    genes: list[LayerGene] = []
    offset = 0
    for token in text.split("-"):
        if token.startswith("S:"):
            parts = token.split(":")
            if len(parts) != 3:
                raise GenomeParseError("skip gene needs two feature-map counts", token, offset)
            try:
                f1, f2 = int(parts[1]), int(parts[2])
            except ValueError:
                raise GenomeParseError("feature-map counts must be integers", token, offset) from None
            if f1 < 1 or f2 < 1:
                raise GenomeParseError("feature-map counts must be positive", token, offset)
            genes.append(SkipGene(f1, f2))
        elif token.startswith("P:"):
            name = token[2:]
            if name not in ("max", "mean"):
                raise GenomeParseError("pool type must be 'max' or 'mean'", token, offset)
            genes.append(PoolGene(PoolType(name)))
        else:
            raise GenomeParseError("gene token must start with 'S:' or 'P:'", token, offset)
        offset += len(token) + 1  # account for the joining '-'
    return Genome(tuple(genes))


def identifier(genome: Genome) -> str:
    """SHA-224 digest of the canonical serialization, lowercase hex.

    Serves as the genome's identity for caching and parent-distinctness
    checks: equal genomes share one identifier.
    """
    return hashlib.sha224(canonical_serialize(genome)).hexdigest()


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    pool_count: int
    max_pools_allowed: int
    messages: tuple[str, ...] = ()


def validate(genome: Genome, input_spatial: int) -> ValidationReport:
    """Check that a genome decodes to a runnable network at the given input size.

    Each pooling gene halves the spatial size, so at most
    ``floor(log2(input_spatial))`` pools fit before the feature map would
    shrink below 1x1.  Always returns a report, never raises.
    """
    if input_spatial < 1:
        raise ValueError(f"input_spatial must be >= 1, got {input_spatial}")
    max_pools = int(math.floor(math.log2(input_spatial)))
    pool_count = sum(1 for g in genome if isinstance(g, PoolGene))
    messages = []
    if pool_count > max_pools:
        messages.append(
            f"{pool_count} pooling layers exceed the maximum of {max_pools} "
            f"for input size {input_spatial}"
        )
    for i, gene in enumerate(genome):
        if isinstance(gene, SkipGene) and (gene.f1 < 1 or gene.f2 < 1):
            messages.append(f"gene {i} has non-positive feature-map count")
    return ValidationReport(
        valid=not messages,
        pool_count=pool_count,
        max_pools_allowed=max_pools,
        messages=tuple(messages),
    )


@dataclass(frozen=True)
class SkipBlock:
    """Decoded skip gene: conv1 -> bn -> relu -> conv2 -> bn -> relu, plus
    the identity path (through a 1x1 adapter conv when channel counts differ),
    joined by elementwise addition with no activation after the add."""

    in_channels: int
    conv1_out: int
    conv2_out: int
    adapter_out: int | None  # None when in_channels == conv2_out


@dataclass(frozen=True)
class PoolBlock:
    pool_type: PoolType


@dataclass(frozen=True)
class ClassifierHead:
    """Global average pool, then a single linear projection to class logits,
    interpreted through softmax."""

    in_features: int
    num_classes: int


@dataclass(frozen=True)
class ArchitectureIR:
    """Fully explicit network description decoded from a genome.

    Serializes to a documented JSON layout consumed by external trainers;
    see :meth:`to_json_dict`.
    """

    input_shape: tuple[int, int, int]  # (height, width, channels)
    blocks: tuple[SkipBlock | PoolBlock, ...]
    head: ClassifierHead
    num_classes: int

    def to_json_dict(self) -> dict:
        blocks = []
        for b in self.blocks:
            if isinstance(b, SkipBlock):
                blocks.append(
                    {
                        "kind": "skip",
                        "in_channels": b.in_channels,
                        "conv1_out": b.conv1_out,
                        "conv2_out": b.conv2_out,
                        "adapter_out": b.adapter_out,
                    }
                )
            else:
                blocks.append({"kind": "pool", "pool_type": b.pool_type.value})
        return {
            "input_shape": list(self.input_shape),
            "blocks": blocks,
            "head": {
                "pool": "global_average",
                "in_features": self.head.in_features,
                "num_classes": self.head.num_classes,
                "activation": "softmax",
            },
            "num_classes": self.num_classes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, data: dict) -> "ArchitectureIR":
        blocks: list[SkipBlock | PoolBlock] = []
        for b in data["blocks"]:
            if b["kind"] == "skip":
                blocks.append(
                    SkipBlock(b["in_channels"], b["conv1_out"], b["conv2_out"], b["adapter_out"])
                )
            elif b["kind"] == "pool":
                blocks.append(PoolBlock(PoolType(b["pool_type"])))
            else:
                raise ValueError(f"unknown block kind {b['kind']!r}")
        head = ClassifierHead(data["head"]["in_features"], data["head"]["num_classes"])
        return cls(
            input_shape=tuple(data["input_shape"]),
            blocks=tuple(blocks),
            head=head,
            num_classes=data["num_classes"],
        )


def decode(genome: Genome, input_shape: tuple[int, int, int], num_classes: int) -> ArchitectureIR:
    """Decode a genome into an explicit architecture for the given input.

    Every conv is 3x3, stride 1, same-padding; every pool is 2x2, stride 2.
    A skip block gains a 1x1 adapter conv on its identity path exactly when
    its input channel count differs from conv2's output count.  The head is
    a global average pool followed by one linear layer to ``num_classes``.

    Raises :class:`GenomeValidationError` for genomes that fail
    :func:`validate` at the input height, and ``ValueError`` for
    ``num_classes < 2``.
    """
    report = validate(genome, input_shape[0])
    if not report.valid:
        raise GenomeValidationError(report)
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")

    channels = input_shape[2]
    blocks: list[SkipBlock | PoolBlock] = []
    for gene in genome:
        if isinstance(gene, SkipGene):
            adapter = gene.f2 if channels != gene.f2 else None
            blocks.append(SkipBlock(channels, gene.f1, gene.f2, adapter))
            channels = gene.f2
        else:
            blocks.append(PoolBlock(gene.pool_type))
    return ArchitectureIR(
        input_shape=tuple(input_shape),
        blocks=tuple(blocks),
        head=ClassifierHead(in_features=channels, num_classes=num_classes),
        num_classes=num_classes,
    )


def count_parameters(arch: ArchitectureIR) -> int:
    """Exact learnable-parameter count of a decoded architecture.

    Per 3x3 conv: 9*C_in*C_out weights + C_out biases, followed by a
    batch norm contributing 2*C_out (scale and shift; running statistics
    are not learnable).  The 1x1 adapter contributes C_in*C_out + C_out
    and carries no batch norm.  Pools are parameter-free.  The head linear
    layer contributes C*num_classes + num_classes.
    """
    total = 0
    for b in arch.blocks:
        if isinstance(b, SkipBlock):
            total += 9 * b.in_channels * b.conv1_out + b.conv1_out  # conv1
            total += 2 * b.conv1_out  # bn1
            total += 9 * b.conv1_out * b.conv2_out + b.conv2_out  # conv2
            total += 2 * b.conv2_out  # bn2
            if b.adapter_out is not None:
                total += b.in_channels * b.adapter_out + b.adapter_out
    total += arch.head.in_features * arch.head.num_classes + arch.head.num_classes
    return total
