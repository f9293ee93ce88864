"""Vocabulary parsing, overlap computation, and ratio arithmetic."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import oracle_set_overlap
from tokengraft import (
    CanonicalizationPolicy,
    NumericsError,
    ParseError,
    Vocabulary,
    compute_overlap,
    detect_convention,
    load_vocab,
    overlap_ratio,
)
from tokengraft.vocab import (
    CONVENTION_GPT2,
    CONVENTION_SENTENCEPIECE,
    CONVENTION_UNKNOWN,
)

from testkit import descriptor_vocab, flat_map_vocab, lines_vocab


class TestLoadVocab:
    def test_lines_format_assigns_line_numbers(self, tmp_path):
        path = lines_vocab(tmp_path / "v.vocab", ["a", "b", "c"])
        vocab = load_vocab(path, format="lines")
        assert len(vocab) == 3
        assert vocab.index["b"] == 1
        assert [t.surface for t in vocab.tokens] == ["a", "b", "c"]

    def test_flat_map_parses_and_orders_by_id(self, tmp_path):
        path = tmp_path / "v.json"
        path.write_text('{"b": 1, "a": 0, "c": 2}', encoding="utf-8")
        vocab = load_vocab(path, format="flat-map")
        assert [t.surface for t in vocab.tokens] == ["a", "b", "c"]

    def test_descriptor_nested_vocab(self, tmp_path):
        path = descriptor_vocab(tmp_path / "tok.json", ["x", "y"])
        vocab = load_vocab(path, format="tokenizer-descriptor")
        assert vocab.index == {"x": 0, "y": 1}

    def test_descriptor_merges_added_tokens(self, tmp_path):
        path = descriptor_vocab(tmp_path / "tok.json", ["x", "y"], added=[("<pad>", 2)])
        vocab = load_vocab(path)
        assert vocab.index["<pad>"] == 2
        assert len(vocab) == 3

    def test_descriptor_conflicting_added_token_rejected(self, tmp_path):
        path = descriptor_vocab(tmp_path / "tok.json", ["x", "y"], added=[("x", 5)])
        with pytest.raises(ParseError, match="conflicts"):
            load_vocab(path)

    def test_format_sniffing(self, tmp_path):
        lines = lines_vocab(tmp_path / "a.vocab", ["q", "r"])
        flat = flat_map_vocab(tmp_path / "b.json", ["q", "r"])
        desc = descriptor_vocab(tmp_path / "c.json", ["q", "r"])
        assert load_vocab(lines).index == load_vocab(flat).index == load_vocab(desc).index

    def test_non_dense_ids_rejected(self, tmp_path):
        path = tmp_path / "v.json"
        path.write_text('{"a": 0, "b": 2}', encoding="utf-8")
        with pytest.raises(ParseError, match="non-dense"):
            load_vocab(path, format="flat-map")

    def test_id_assigned_twice_rejected(self, tmp_path):
        path = tmp_path / "v.json"
        path.write_text('{"a": 0, "b": 0}', encoding="utf-8")
        with pytest.raises(ParseError, match="twice"):
            load_vocab(path)

    def test_non_integer_id_rejected(self, tmp_path):
        path = tmp_path / "v.json"
        path.write_text('{"a": "zero"}', encoding="utf-8")
        with pytest.raises(ParseError, match="not an integer"):
            load_vocab(path)

    def test_duplicate_surface_rejected(self, tmp_path):
        path = lines_vocab(tmp_path / "v.vocab", ["a", "b", "a"])
        with pytest.raises(ParseError, match="duplicate surface"):
            load_vocab(path)

    def test_empty_surface_rejected(self, tmp_path):
        path = (tmp_path / "v.vocab")
        path.write_text("a\n\nb\n", encoding="utf-8")
        with pytest.raises(ParseError, match="empty token surface"):
            load_vocab(path)

    def test_missing_file_error_names_the_file(self, tmp_path):
        with pytest.raises(ParseError, match="nowhere.vocab"):
            load_vocab(tmp_path / "nowhere.vocab")

    def test_invalid_json_error_names_the_file(self, tmp_path):
        path = tmp_path / "v.json"
        path.write_text("{broken", encoding="utf-8")
        with pytest.raises(ParseError, match="v.json"):
            load_vocab(path, format="flat-map")

    def test_unknown_format_rejected(self, tmp_path):
        path = lines_vocab(tmp_path / "v.vocab", ["a"])
        with pytest.raises(ValueError, match="unknown vocabulary format"):
            load_vocab(path, format="parquet")

    def test_convention_detection(self):
        assert detect_convention(["Ġhello", "world"]) == CONVENTION_GPT2
        assert detect_convention(["▁hello", "world"]) == CONVENTION_SENTENCEPIECE
        assert detect_convention(["hello", "world"]) == CONVENTION_UNKNOWN
        assert detect_convention(["Ġa", "▁b"]) == CONVENTION_UNKNOWN

    def test_convention_override(self, tmp_path):
        path = lines_vocab(tmp_path / "v.vocab", ["plain"])
        vocab = load_vocab(path, convention=CONVENTION_GPT2)
        assert vocab.convention == CONVENTION_GPT2


class TestComputeOverlap:
    def test_basic_intersection(self):
        source = Vocabulary.from_surfaces(["a", "b", "c"])
        target = Vocabulary.from_surfaces(["b", "c", "d"])
        overlap = compute_overlap(source, target)
        assert overlap.pairs.tolist() == [[0, 1], [1, 2]]
        assert overlap.missing_target_ids.tolist() == [2]

    def test_whitespace_marker_unification(self):
        source = Vocabulary.from_surfaces(["Ġhund"])
        target = Vocabulary.from_surfaces(["▁hund"])
        policy = CanonicalizationPolicy(mode="unify-whitespace-marker")
        assert compute_overlap(source, target, policy).n_pairs == 1

    def test_exact_mode_keeps_markers_distinct(self):
        source = Vocabulary.from_surfaces(["Ġhund"])
        target = Vocabulary.from_surfaces(["▁hund"])
        assert compute_overlap(source, target).n_pairs == 0

    def test_seeded_fixture_matches_hash_set_oracle(self):
        # 1000-token vocabularies built around a 137-surface intersection.
        rng = np.random.default_rng(137)
        shared = [f"sh{i}" for i in range(137)]
        source_only = [f"s{i}" for i in range(863)]
        target_only = [f"t{i}" for i in range(863)]
        source_surfaces = shared + source_only
        target_surfaces = shared + target_only
        rng.shuffle(source_surfaces)
        rng.shuffle(target_surfaces)
        source = Vocabulary.from_surfaces(source_surfaces)
        target = Vocabulary.from_surfaces(target_surfaces)

        overlap = compute_overlap(source, target)
        oracle_pairs, oracle_missing = oracle_set_overlap(source_surfaces, target_surfaces)
        assert overlap.n_pairs == oracle_pairs == 137
        assert overlap.missing_target_ids.size == oracle_missing == 863

    def test_pairs_align_matching_surfaces(self):
        source = Vocabulary.from_surfaces(["z", "q", "m"])
        target = Vocabulary.from_surfaces(["m", "z"])
        overlap = compute_overlap(source, target)
        for target_id, source_id in overlap.pairs.tolist():
            assert target.surface(target_id) == source.surface(source_id)

    def test_collision_first_wins_with_warning(self):
        # Both target surfaces canonicalize to "␣x"; the lower id keeps
        # the source pairing and the other token is declared missing.
        source = Vocabulary.from_surfaces(["Ġx"])
        target = Vocabulary.from_surfaces(["Ġx", "▁x"])
        policy = CanonicalizationPolicy(mode="unify-whitespace-marker")
        with pytest.warns(UserWarning, match="collided"):
            overlap = compute_overlap(source, target, policy)
        assert overlap.pairs.tolist() == [[0, 0]]
        assert overlap.missing_target_ids.tolist() == [1]

    def test_source_collision_warns_and_keeps_lowest_id(self):
        source = Vocabulary.from_surfaces(["Ġx", "▁x"])
        target = Vocabulary.from_surfaces(["▁x"])
        policy = CanonicalizationPolicy(mode="unify-whitespace-marker")
        with pytest.warns(UserWarning, match="source vocabulary"):
            overlap = compute_overlap(source, target, policy)
        assert overlap.pairs.tolist() == [[0, 0]]

    def test_empty_vocabulary_rejected(self):
        empty = Vocabulary.from_surfaces([])
        other = Vocabulary.from_surfaces(["a"])
        with pytest.raises(NumericsError, match="non-empty"):
            compute_overlap(empty, other)

    def test_deterministic_repeat(self):
        source = Vocabulary.from_surfaces([f"s{i}" for i in range(50)])
        target = Vocabulary.from_surfaces([f"s{i}" for i in range(25, 75)])
        first = compute_overlap(source, target)
        second = compute_overlap(source, target)
        assert np.array_equal(first.pairs, second.pairs)
        assert np.array_equal(first.missing_target_ids, second.missing_target_ids)

    @given(
        source=st.lists(st.text(min_size=1, max_size=4), min_size=1, max_size=30, unique=True),
        target=st.lists(st.text(min_size=1, max_size=4), min_size=1, max_size=30, unique=True),
    )
    @settings(max_examples=60, deadline=None)
    def test_partition_property(self, source, target):
        overlap = compute_overlap(
            Vocabulary.from_surfaces(source), Vocabulary.from_surfaces(target)
        )
        combined = np.concatenate([overlap.target_ids, overlap.missing_target_ids])
        assert np.array_equal(np.sort(combined), np.arange(len(target)))

    @given(
        source=st.lists(st.text(min_size=1, max_size=4), min_size=1, max_size=30, unique=True),
        target=st.lists(st.text(min_size=1, max_size=4), min_size=1, max_size=30, unique=True),
    )
    @settings(max_examples=60, deadline=None)
    def test_pair_count_symmetric_under_exact_matching(self, source, target):
        vs = Vocabulary.from_surfaces(source)
        vt = Vocabulary.from_surfaces(target)
        assert compute_overlap(vs, vt).n_pairs == compute_overlap(vt, vs).n_pairs

    @given(
        source=st.lists(st.text(min_size=1, max_size=4), min_size=1, max_size=30, unique=True),
        target=st.lists(st.text(min_size=1, max_size=4), min_size=1, max_size=30, unique=True),
        extra=st.text(min_size=1, max_size=4),
    )
    @settings(max_examples=60, deadline=None)
    def test_growing_source_never_loses_pairs(self, source, target, extra):
        vs = Vocabulary.from_surfaces(source)
        vt = Vocabulary.from_surfaces(target)
        before = compute_overlap(vs, vt).n_pairs
        if extra in source:
            grown = vs
        else:
            grown = Vocabulary.from_surfaces(source + [extra])
        assert compute_overlap(grown, vt).n_pairs >= before


class TestOverlapRatio:
    def test_two_of_three(self):
        source = Vocabulary.from_surfaces(["a", "b", "c"])
        target = Vocabulary.from_surfaces(["b", "c", "d"])
        overlap = compute_overlap(source, target)
        assert overlap_ratio(overlap, "source", 3, 3) == pytest.approx(2 / 3)

    def test_identical_vocabularies_hit_one_for_every_denominator(self):
        vocab = Vocabulary.from_surfaces(["a", "b", "c", "d"])
        overlap = compute_overlap(vocab, vocab)
        for denominator in ("source", "target", "union"):
            assert overlap_ratio(overlap, denominator, 4, 4) == 1.0

    def test_union_counts_each_token_once(self):
        source = Vocabulary.from_surfaces(["a", "b", "c"])
        target = Vocabulary.from_surfaces(["b", "c", "d"])
        overlap = compute_overlap(source, target)
        # union size = 3 + 3 - 2 = 4
        assert overlap_ratio(overlap, "union", 3, 3) == pytest.approx(2 / 4)

    def test_ratio_times_source_size_recovers_pair_count(self):
        rng = np.random.default_rng(9)
        for trial in range(20):
            n_shared = int(rng.integers(1, 20))
            n_source = n_shared + int(rng.integers(0, 20))
            n_target = n_shared + int(rng.integers(0, 20))
            source = Vocabulary.from_surfaces(
                [f"sh{i}" for i in range(n_shared)]
                + [f"s{i}" for i in range(n_source - n_shared)]
            )
            target = Vocabulary.from_surfaces(
                [f"sh{i}" for i in range(n_shared)]
                + [f"t{i}" for i in range(n_target - n_shared)]
            )
            overlap = compute_overlap(source, target)
            ratio = overlap_ratio(overlap, "source", n_source, n_target)
            assert ratio * n_source == pytest.approx(overlap.n_pairs, abs=1e-9)

    def test_inconsistent_target_size_rejected(self):
        source = Vocabulary.from_surfaces(["a", "b"])
        overlap = compute_overlap(source, source)
        with pytest.raises(ValueError, match="inconsistent"):
            overlap_ratio(overlap, "source", 2, 5)

    def test_zero_denominator_rejected(self):
        from testkit import overlap_map

        degenerate = overlap_map([], [0])
        with pytest.raises(NumericsError, match="zero"):
            overlap_ratio(degenerate, "source", 0, 1)

    def test_unknown_denominator_rejected(self):
        vocab = Vocabulary.from_surfaces(["a"])
        overlap = compute_overlap(vocab, vocab)
        with pytest.raises(ValueError, match="denominator"):
            overlap_ratio(overlap, "intersection", 1, 1)
