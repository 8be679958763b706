import pytest

from stripekit.codec import (
    AceSequence,
    EmptySequence,
    ParseError,
    Side,
    TokenBudgetExceeded,
    angle_bucket,
    cull,
    decode,
    encode,
    fold_invariant,
    permute_anchor,
    regions_in_scan_order,
    render_prose,
    sequences_equivalent,
    token_view,
)
from stripekit.minutiae import MinutiaKind, RegionId

from conftest import make_minutia, make_sequence, random_valid_sequence


class TestGrammar:
    def test_single_ridge_token(self):
        seq = make_sequence([(MinutiaKind.RIDGE, RegionId.FORE, 30.0, 0)])
        assert encode(seq) == "R0a1F"

    def test_decode_single_token(self):
        seq = decode("R0a1F")
        assert len(seq) == 1
        m = seq.minutiae[0]
        assert m.kind is MinutiaKind.RIDGE
        assert seq.ridge_counts == (0,)
        assert angle_bucket(m.orientation_deg) == 1
        assert m.region is RegionId.FORE

    def test_multi_digit_ridge_count(self):
        seq = make_sequence([(MinutiaKind.BIFURCATION, RegionId.MID, 100.0, 12)])
        text = encode(seq)
        assert text == "B12a3M"
        assert decode(text).ridge_counts == (12,)

    def test_angle_buckets(self):
        for bucket, orientation in enumerate([0.0, 45.0, 90.0, 135.0, 180.0, 225.0, 270.0, 315.0], 1):
            assert angle_bucket(orientation) == bucket
        assert angle_bucket(44.999) == 1
        assert angle_bucket(359.999) == 8

    def test_malformed_kind_letter(self):
        with pytest.raises(ParseError) as exc:
            decode("X9")
        assert exc.value.offset == 0

    def test_parse_error_positions(self):
        with pytest.raises(ParseError) as exc:
            decode("R0a9F")
        assert exc.value.offset == 3
        with pytest.raises(ParseError) as exc:
            decode("R0a1Q")
        assert exc.value.offset == 4
        with pytest.raises(ParseError) as exc:
            decode("R0a1F;")
        assert exc.value.offset == 6
        with pytest.raises(ParseError):
            decode("")
        with pytest.raises(ParseError) as exc:
            decode("Ra1F")
        assert exc.value.offset == 1

    def test_token_budget(self):
        seq = make_sequence(
            [(MinutiaKind.RIDGE, RegionId.FORE, 10.0, 0)] * 80
        )
        with pytest.raises(TokenBudgetExceeded):
            encode(seq)

    def test_budget_boundary(self):
        seq = make_sequence([(MinutiaKind.RIDGE, RegionId.FORE, 10.0, 0)] * 77)
        assert len(encode(seq).split(";")) == 77


class TestRoundtrip:
    def test_anchor_rotation_semantics(self):
        specs = [
            (MinutiaKind.RIDGE, RegionId.FORE, 10.0, 1),
            (MinutiaKind.BIFURCATION, RegionId.MID, 100.0, 2),
            (MinutiaKind.ENCLOSURE, RegionId.HIND, 300.0, 0),
        ]
        seq = make_sequence(specs, anchor=1)
        back = decode(encode(seq), side=seq.side)
        assert back.anchor_index == 0
        view = token_view(seq)
        assert token_view(back) == view[1:] + view[:1]
        assert sequences_equivalent(seq, back)

    def test_encode_decode_encode_identity(self, rng):
        for _ in range(200):
            seq = random_valid_sequence(rng)
            text = encode(seq)
            assert encode(decode(text, side=seq.side)) == text

    def test_roundtrip_property(self, rng):
        for _ in range(1000):
            seq = random_valid_sequence(rng)
            back = decode(encode(seq), side=seq.side)
            assert sequences_equivalent(seq, back)
            assert back.side == seq.side

    def test_cyclic_invariance(self, rng):
        # any anchor rotation of s decodes into the same equivalence class
        seq = random_valid_sequence(rng, min_len=5)
        decoded = [
            decode(encode(AceSequence(seq.minutiae, seq.ridge_counts, anchor_index=a, side=seq.side)))
            for a in range(len(seq))
        ]
        for d in decoded[1:]:
            assert sequences_equivalent(decoded[0], d)


class TestProse:
    def test_bifurcation_clause(self):
        seq = make_sequence([(MinutiaKind.BIFURCATION, RegionId.MID, 10.0, 2)])
        assert render_prose(seq) == "after 2 ridges, a bifurcation in the mid region"

    def test_zero_count_omits_after_phrase(self):
        seq = make_sequence([(MinutiaKind.RIDGE, RegionId.FORE, 10.0, 0)])
        assert render_prose(seq) == "a ridge in the fore region"

    def test_three_clauses_joined_by_semicolons(self):
        seq = make_sequence(
            [
                (MinutiaKind.RIDGE, RegionId.FORE, 10.0, 0),
                (MinutiaKind.CONVERGENCE, RegionId.MID, 200.0, 1),
                (MinutiaKind.ENCLOSURE, RegionId.HIND, 10.0, 3),
            ]
        )
        prose = render_prose(seq)
        assert prose.count(";") == 2
        assert "after 1 ridge," in prose
        assert "enclosure in the hind region" in prose

    def test_custom_region_labels(self):
        seq = make_sequence([(MinutiaKind.RIDGE, RegionId.FORE, 10.0, 0)])
        prose = render_prose(seq, region_labels={RegionId.FORE: "shoulder", RegionId.MID: "m", RegionId.HIND: "h"})
        assert "shoulder region" in prose


class TestPermuteAnchor:
    def test_k1_is_original(self, rng):
        seq = random_valid_sequence(rng, min_len=8)
        out = permute_anchor(seq, 1, 5, seed=0)
        assert out == [seq]

    def test_k6_window5(self):
        seq = make_sequence(
            [(MinutiaKind.RIDGE, RegionId.FORE, 10.0, i % 3) for i in range(20)], anchor=10
        )
        out = permute_anchor(seq, 6, 5, seed=3)
        assert len(out) == 6
        anchors = [s.anchor_index for s in out]
        assert len(set(anchors)) == 6
        for a in anchors:
            d = min((a - 10) % 20, (10 - a) % 20)
            assert d <= 5

    def test_window_exhausts(self):
        seq = make_sequence(
            [(MinutiaKind.RIDGE, RegionId.FORE, 10.0, 0)] * 12, anchor=5
        )
        out = permute_anchor(seq, 10, 3, seed=0)
        assert len(out) == 7  # the window holds 2*3+1 candidate anchors

    def test_deterministic(self, rng):
        seq = random_valid_sequence(rng, min_len=10)
        a = permute_anchor(seq, 4, 4, seed=99)
        b = permute_anchor(seq, 4, 4, seed=99)
        assert a == b

    def test_window_must_be_smaller_than_length(self):
        seq = make_sequence([(MinutiaKind.RIDGE, RegionId.FORE, 10.0, 0)] * 3)
        with pytest.raises(ValueError):
            permute_anchor(seq, 2, 3, seed=0)

    def test_outputs_pairwise_distinct(self, rng):
        for _ in range(20):
            seq = random_valid_sequence(rng, min_len=9)
            out = permute_anchor(seq, 5, 4, seed=int(rng.integers(1 << 30)))
            assert len({s.anchor_index for s in out}) == len(out)


class TestCull:
    def test_fraction_zero_identity(self, rng):
        seq = random_valid_sequence(rng, min_len=5)
        assert cull(seq, 0.0, seed=1) == seq

    def test_fold_rule_hand_case(self):
        # removing a ridge (rc=1) ahead of a bifurcation (rc=2) folds to 2+1+1
        seq = make_sequence(
            [
                (MinutiaKind.RIDGE, RegionId.FORE, 10.0, 1),
                (MinutiaKind.BIFURCATION, RegionId.MID, 100.0, 2),
                (MinutiaKind.ENCLOSURE, RegionId.HIND, 10.0, 0),
            ]
        )
        for seed in range(50):
            culled = cull(seq, 1 / 3, seed=seed)
            if culled.minutiae[0].kind is MinutiaKind.BIFURCATION:
                assert culled.ridge_counts[0] == 4
                break
        else:
            pytest.fail("no seed removed the leading ridge")

    def test_length_reduction(self, rng):
        for _ in range(50):
            seq = random_valid_sequence(rng, min_len=4)
            f = float(rng.uniform(0, 0.99))
            culled = cull(seq, f, seed=int(rng.integers(1 << 30)))
            assert len(culled) == len(seq) - int(f * len(seq))

    def test_conservation_single_removal(self, rng):
        # sum(ridge_counts) + #ridge minutiae is invariant per removal
        for _ in range(100):
            seq = random_valid_sequence(rng, min_len=2, max_len=12)
            n = len(seq)
            fraction = 1.0 / n + 1e-9  # removes exactly one
            if int(fraction * n) != 1:
                continue
            culled = cull(seq, fraction, seed=int(rng.integers(1 << 30)))
            assert fold_invariant(culled) == fold_invariant(seq)

    def test_conservation_bulk(self, rng):
        for _ in range(50):
            seq = random_valid_sequence(rng, min_len=5)
            culled = cull(seq, 0.5, seed=int(rng.integers(1 << 30)))
            assert fold_invariant(culled) == fold_invariant(seq)

    def test_anchor_remapped_to_survivor(self, rng):
        for _ in range(50):
            seq = random_valid_sequence(rng, min_len=5)
            culled = cull(seq, 0.6, seed=int(rng.integers(1 << 30)))
            assert 0 <= culled.anchor_index < len(culled)

    def test_fraction_validation(self, rng):
        seq = random_valid_sequence(rng, min_len=3)
        with pytest.raises(ValueError):
            cull(seq, 1.0, seed=0)
        with pytest.raises(ValueError):
            cull(seq, -0.1, seed=0)

    def test_deterministic(self, rng):
        seq = random_valid_sequence(rng, min_len=8)
        assert cull(seq, 0.4, seed=7) == cull(seq, 0.4, seed=7)

    def test_region_order_preserved(self, rng):
        for _ in range(20):
            seq = random_valid_sequence(rng, min_len=6)
            assert regions_in_scan_order(seq)
            culled = cull(seq, 0.5, seed=int(rng.integers(1 << 30)))
            assert regions_in_scan_order(culled)


class TestSequenceValidation:
    def test_empty_rejected(self):
        with pytest.raises(EmptySequence):
            AceSequence((), (), 0, Side.LEFT)

    def test_mismatched_counts(self):
        m = make_minutia(MinutiaKind.RIDGE)
        with pytest.raises(ValueError):
            AceSequence((m,), (0, 1), 0, Side.LEFT)

    def test_negative_counts(self):
        m = make_minutia(MinutiaKind.RIDGE)
        with pytest.raises(ValueError):
            AceSequence((m,), (-1,), 0, Side.LEFT)

    def test_anchor_out_of_range(self):
        m = make_minutia(MinutiaKind.RIDGE)
        with pytest.raises(ValueError):
            AceSequence((m,), (0,), 1, Side.LEFT)
