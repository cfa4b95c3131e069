# Genome encoding walkthrough: how a variable-length gene sequence turns
# into an explicit CNN description with an exact parameter count.

import json

from evoarch import (
    Genome,
    PoolGene,
    PoolType,
    SkipGene,
    canonical_serialize,
    count_parameters,
    decode,
    identifier,
    parse_genome,
    validate,
)

# A genome is just an ordered list of genes: skip layers carry the two
# feature-map counts of their convolutions, pool layers carry max/mean.
genome = Genome(
    (
        SkipGene(64, 128),
        PoolGene(PoolType.MAX),
        SkipGene(128, 128),
        PoolGene(PoolType.MEAN),
        SkipGene(128, 256),
    )
)

# The canonical text form is what goes into files and over the wire, and
# its SHA-224 digest is the identity used by the fitness cache.
text = canonical_serialize(genome).decode()
print("canonical form:", text)
print("identifier:    ", identifier(genome))
assert parse_genome(text) == genome  # the format round-trips exactly

# Each pooling layer halves the spatial size, so a 32x32 input supports at
# most floor(log2(32)) = 5 pools.
report = validate(genome, input_spatial=32)
print(f"pools used: {report.pool_count} of {report.max_pools_allowed} allowed -> valid={report.valid}")

# Decoding makes every layer explicit: adapters appear automatically
# wherever the skip path's channel counts disagree.
arch = decode(genome, input_shape=(32, 32, 3), num_classes=10)
print("\ndecoded architecture:")
print(json.dumps(arch.to_json_dict(), indent=2))

# The parameter count is exact (convs with bias, affine batch norms,
# 1x1 adapters, linear head) - the first skip block alone is
# 1792 + 128 + 73856 + 256 + 512 = 76544 of these.
print("\nlearnable parameters:", count_parameters(arch))
