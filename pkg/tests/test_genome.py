import hashlib
import json

import pytest

from conftest import random_genome
from evoarch import (
    ArchitectureIR,
    Genome,
    GenomeParseError,
    GenomeValidationError,
    PoolBlock,
    PoolGene,
    PoolType,
    SkipBlock,
    SkipGene,
    canonical_serialize,
    count_parameters,
    decode,
    identifier,
    parse_genome,
    validate,
)

S = SkipGene
P = PoolGene
MAX = PoolType.MAX
MEAN = PoolType.MEAN


class TestSerialization:
    def test_single_skip(self):
        assert canonical_serialize(Genome((S(64, 128),))) == b"S:64:128"

    def test_skip_then_pool(self):
        assert canonical_serialize(Genome((S(64, 64), P(MAX)))) == b"S:64:64-P:max"

    def test_mean_pool(self):
        assert canonical_serialize(Genome((P(MEAN),))) == b"P:mean"

    def test_equal_genomes_equal_bytes(self):
        a = Genome((S(64, 128), P(MAX)))
        b = Genome((S(64, 128), P(MAX)))
        assert a == b
        assert canonical_serialize(a) == canonical_serialize(b)

    def test_round_trip_random(self, rng):
        for _ in range(1000):
            g = random_genome(rng, max_len=12)
            assert parse_genome(canonical_serialize(g)) == g

    def test_parse_empty(self):
        with pytest.raises(GenomeParseError):
            parse_genome("")

    def test_parse_bad_token_names_token_and_offset(self):
        with pytest.raises(GenomeParseError) as err:
            parse_genome("S:64:128-X:1")
        assert err.value.token == "X:1"
        assert err.value.offset == 9

    def test_parse_rejects_nonpositive_feature_maps(self):
        with pytest.raises(GenomeParseError):
            parse_genome("S:0:64")

    def test_parse_rejects_bad_pool_type(self):
        with pytest.raises(GenomeParseError):
            parse_genome("P:median")

    def test_parse_rejects_malformed_skip(self):
        with pytest.raises(GenomeParseError):
            parse_genome("S:64")


class TestIdentifier:
    def test_matches_independent_sha224(self):
        # digest of the raw bytes b"S:64:128", computed with a standalone tool
        expected = "7f694b8b21cc61e12a4d5653004d5d2c845cbbcb673397f948a0af27"
        assert identifier(Genome((S(64, 128),))) == expected

    def test_equal_genomes_equal_identifier(self, rng):
        for _ in range(50):
            g = random_genome(rng)
            copy = Genome(tuple(g.layers))
            assert identifier(g) == identifier(copy)

    def test_pure_function(self):
        g = Genome((S(64, 128), P(MEAN)))
        digests = {identifier(g) for _ in range(1000)}
        assert len(digests) == 1

    def test_distinct_serializations_distinct_digests(self, rng):
        # collision check against hashlib as the reference implementation
        seen: dict[bytes, str] = {}
        for _ in range(1000):
            g = random_genome(rng, max_len=6)
            serialized = canonical_serialize(g)
            reference = hashlib.sha224(serialized).hexdigest()
            assert identifier(g) == reference
            seen[serialized] = reference
        digests = set(seen.values())
        assert len(digests) == len(seen), "SHA-224 collision among distinct serializations"

    def test_format(self):
        digest = identifier(Genome((P(MAX),)))
        assert len(digest) == 56
        assert digest == digest.lower()
        int(digest, 16)  # hex

    def test_one_field_difference_changes_identifier(self):
        assert identifier(Genome((S(64, 128),))) != identifier(Genome((S(64, 256),)))
        assert identifier(Genome((P(MAX),))) != identifier(Genome((P(MEAN),)))


class TestGenomeType:
    def test_empty_genome_unrepresentable(self):
        with pytest.raises(ValueError):
            Genome(())

    def test_nonpositive_feature_maps_rejected(self):
        with pytest.raises(ValueError):
            SkipGene(0, 64)

    def test_tags(self):
        assert SkipGene.TAG == 1
        assert PoolGene.TAG == 2

    def test_sequence_behavior(self):
        g = Genome((S(64, 64), P(MAX)))
        assert len(g) == 2
        assert list(g) == [S(64, 64), P(MAX)]
        assert g[1] == P(MAX)


class TestValidate:
    def test_three_pools_at_32(self):
        g = Genome((P(MAX),) * 3)
        report = validate(g, 32)
        assert report.valid
        assert report.pool_count == 3
        assert report.max_pools_allowed == 5

    def test_six_pools_at_32_invalid(self):
        report = validate(Genome((P(MAX),) * 6), 32)
        assert not report.valid
        assert report.messages

    def test_five_pools_at_32_boundary(self):
        # spatial size reaches exactly 1
        assert validate(Genome((P(MEAN),) * 5), 32).valid

    def test_never_raises_on_genomes(self, rng):
        for _ in range(200):
            validate(random_genome(rng, max_len=16), 32)

    def test_valid_implies_decode_succeeds(self, rng):
        for _ in range(200):
            g = random_genome(rng, max_len=16)
            if validate(g, 32).valid:
                for channels in (1, 3):
                    for classes in (2, 10):
                        decode(g, (32, 32, channels), classes)


class TestDecode:
    def test_adapter_on_channel_mismatch(self):
        arch = decode(Genome((S(64, 128),)), (32, 32, 3), 10)
        assert arch.blocks == (SkipBlock(3, 64, 128, 128),)
        assert arch.head.in_features == 128
        assert arch.head.num_classes == 10

    def test_no_adapter_on_channel_match(self):
        arch = decode(Genome((S(64, 64),)), (32, 32, 64), 10)
        assert arch.blocks[0].adapter_out is None

    def test_channel_propagation_with_pool(self):
        # hand trace: 3 -> [skip 64,128] -> 128 -> pool (spatial 32 -> 16) -> [skip 128,128]
        g = Genome((S(64, 128), P(MAX), S(128, 128)))
        arch = decode(g, (32, 32, 3), 10)
        assert isinstance(arch.blocks[1], PoolBlock)
        second = arch.blocks[2]
        assert second.in_channels == 128
        assert second.adapter_out is None
        assert arch.head.in_features == 128

    def test_invalid_genome_rejected_with_report(self):
        with pytest.raises(GenomeValidationError) as err:
            decode(Genome((P(MAX),) * 6), (32, 32, 3), 10)
        assert err.value.report.pool_count == 6
        assert not err.value.report.valid

    def test_num_classes_must_be_at_least_two(self):
        with pytest.raises(ValueError):
            decode(Genome((S(64, 64),)), (32, 32, 3), 1)

    def test_channels_track_latest_skip(self, rng):
        for _ in range(100):
            g = random_genome(rng, max_len=10, max_pools=5)
            arch = decode(g, (32, 32, 3), 10)
            channels = 3
            for gene, block in zip(g, arch.blocks):
                if isinstance(gene, SkipGene):
                    assert block.in_channels == channels
                    assert block.adapter_out == (gene.f2 if channels != gene.f2 else None)
                    channels = gene.f2
            assert arch.head.in_features == channels

    def test_json_round_trip(self, rng):
        for _ in range(50):
            g = random_genome(rng, max_pools=5)
            arch = decode(g, (32, 32, 3), 10)
            assert ArchitectureIR.from_json_dict(arch.to_json_dict()) == arch

    def test_json_layout_fields(self):
        data = decode(Genome((S(64, 128), P(MEAN))), (32, 32, 3), 10).to_json_dict()
        assert set(data) == {"input_shape", "blocks", "head", "num_classes"}
        assert data["input_shape"] == [32, 32, 3]
        assert data["blocks"][0] == {
            "kind": "skip",
            "in_channels": 3,
            "conv1_out": 64,
            "conv2_out": 128,
            "adapter_out": 128,
        }
        assert data["blocks"][1] == {"kind": "pool", "pool_type": "mean"}
        assert data["head"]["in_features"] == 128
        json.dumps(data)  # must be JSON-serializable as-is


class TestCountParameters:
    def test_worked_example(self):
        # independent hand count: 1792 + 128 + 73856 + 256 + 512 + 1290
        arch = decode(Genome((S(64, 128),)), (32, 32, 3), 10)
        assert count_parameters(arch) == 77_834

    def test_pool_only_genome_contributes_head_only(self):
        arch = decode(Genome((P(MAX),)), (32, 32, 3), 10)
        assert count_parameters(arch) == 3 * 10 + 10

    def test_doubling_classes_changes_only_head(self):
        g = Genome((S(64, 128), P(MAX)))
        n10 = count_parameters(decode(g, (32, 32, 3), 10))
        n20 = count_parameters(decode(g, (32, 32, 3), 20))
        assert n20 - n10 == 128 * 10 + 10

    def test_monotone_in_appended_skips(self, rng):
        for _ in range(50):
            g = random_genome(rng, max_len=6, max_pools=4)
            extended = Genome(g.layers + (SkipGene(64, 64),))
            before = count_parameters(decode(g, (32, 32, 3), 10))
            after = count_parameters(decode(extended, (32, 32, 3), 10))
            assert after > before
