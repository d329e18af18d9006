import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from analogylab.containers import read_visual_dataset
from analogylab.errors import UnsatisfiableQuestionError
from analogylab.relations import compatible_relations, holds
from analogylab.scene import (ALL_VALUES, DomainKind, ProvenanceKind, Regime,
                              SplitKind, SplitRole, SplitSpec,
                              validate_question)
from analogylab.visual import (ALL_PAIRS, build_split, generate_dataset,
                               question_rng, sample_question, verify_dataset)


def completing_candidates(q):
    prefix = (q.target_panels[0].values, q.target_panels[1].values)
    return [i for i, c in enumerate(q.candidates)
            if holds(q.relation, q.target_domain,
                     prefix + (c.content.values,))]


class TestBuildSplit:
    def test_novel_transfer_counts(self):
        train, test = build_split(SplitKind.NOVEL_TRANSFER, 7)
        assert len(train.allowed_transfer_pairs) == 42
        assert len(test.allowed_transfer_pairs) == 7
        assert not train.allowed_transfer_pairs & test.allowed_transfer_pairs

    def test_novel_transfer_holdout_shape(self):
        for seed in range(6):
            _, test = build_split(SplitKind.NOVEL_TRANSFER, seed)
            targets = [t for _, t in test.allowed_transfer_pairs]
            assert sorted(targets) == sorted(DomainKind)
            assert all(s != t for s, t in test.allowed_transfer_pairs)

    def test_novel_transfer_train_coverage(self):
        for seed in range(6):
            train, _ = build_split(SplitKind.NOVEL_TRANSFER, seed)
            assert {s for s, _ in train.allowed_transfer_pairs} \
                == set(DomainKind)
            assert {t for _, t in train.allowed_transfer_pairs} \
                == set(DomainKind)

    def test_novel_transfer_seed_dependence(self):
        picks = {build_split(SplitKind.NOVEL_TRANSFER, s)[1]
                 .allowed_transfer_pairs for s in range(12)}
        assert len(picks) > 1
        assert build_split(SplitKind.NOVEL_TRANSFER, 3) \
            == build_split(SplitKind.NOVEL_TRANSFER, 3)

    def test_novel_target_domain(self):
        train, test = build_split(SplitKind.NOVEL_TARGET_DOMAIN, 0)
        held = {DomainKind.LINE_TYPE, DomainKind.SHAPE_COLOUR}
        assert train.held_out_domains == held
        assert all(t not in held for _, t in train.allowed_transfer_pairs)
        assert all(t in held for _, t in test.allowed_transfer_pairs)
        assert train.allowed_transfer_pairs | test.allowed_transfer_pairs \
            == frozenset(ALL_PAIRS)

    def test_value_splits(self):
        train, test = build_split(SplitKind.INTERPOLATION, 0)
        assert train.allowed_values == {2, 4, 6, 8, 10}
        assert test.allowed_values == {1, 3, 5, 7, 9}
        train, test = build_split(SplitKind.EXTRAPOLATION, 0)
        assert train.allowed_values == {1, 2, 3, 4, 5}
        assert test.allowed_values == {6, 7, 8, 9, 10}

    def test_neutral_no_restriction(self):
        train, test = build_split(SplitKind.NEUTRAL, 0)
        for split in (train, test):
            assert not split.allowed_transfer_pairs
            assert not split.held_out_domains
            assert split.allowed_values == ALL_VALUES


class TestSampleQuestion:
    @settings(max_examples=120, deadline=None)
    @given(st.integers(0, 10 ** 6),
           st.sampled_from([Regime.LABC, Regime.NORMAL, Regime.MIXED]),
           st.sampled_from(list(SplitKind)),
           st.sampled_from([SplitRole.TRAIN, SplitRole.TEST]))
    def test_sampled_questions_are_valid(self, seed, regime, kind, role):
        splits = build_split(kind, 3)
        split = splits[0] if role == SplitRole.TRAIN else splits[1]
        q = sample_question(regime, split, question_rng(seed, 0))
        assert validate_question(q) == []
        assert completing_candidates(q) == [q.answer_index]
        values = set().union(*(p.values for p in q.panels))
        assert values <= split.allowed_values
        if split.allowed_transfer_pairs:
            assert (q.source_domain, q.target_domain) \
                in split.allowed_transfer_pairs
        incorrect = [c for i, c in enumerate(q.candidates)
                     if i != q.answer_index]
        if q.regime == Regime.LABC:
            for c in incorrect:
                assert c.provenance == ProvenanceKind.SEMANTIC_DECOY
                assert holds(c.decoy_relation, q.target_domain,
                             (q.target_panels[0].values,
                              q.target_panels[1].values, c.content.values))
        else:
            assert all(c.provenance == ProvenanceKind.RANDOM
                       for c in incorrect)

    def test_deterministic_in_rng(self):
        train, _ = build_split(SplitKind.NEUTRAL, 7)
        a = sample_question(Regime.LABC, train, question_rng(5, 3))
        b = sample_question(Regime.LABC, train, question_rng(5, 3))
        assert a == b

    def test_mixed_produces_both_kinds(self):
        train, _ = build_split(SplitKind.NEUTRAL, 7)
        regimes = {sample_question(Regime.MIXED, train,
                                   question_rng(9, i)).regime
                   for i in range(60)}
        assert regimes == {Regime.LABC, Regime.NORMAL}

    def test_contrasting_never_targets_quantity(self):
        train, _ = build_split(SplitKind.NEUTRAL, 7)
        seen = set()
        for i in range(300):
            q = sample_question(Regime.LABC, train, question_rng(2, i))
            assert q.target_domain != DomainKind.SHAPE_QUANTITY
            seen.add(q.target_domain)
        assert len(seen) == 6

    def test_plain_regime_reaches_quantity_targets(self):
        train, _ = build_split(SplitKind.NEUTRAL, 7)
        assert any(sample_question(Regime.NORMAL, train,
                                   question_rng(2, i)).target_domain
                   == DomainKind.SHAPE_QUANTITY for i in range(200))

    def test_answer_index_spreads(self):
        train, _ = build_split(SplitKind.NEUTRAL, 7)
        indices = {sample_question(Regime.LABC, train,
                                   question_rng(4, i)).answer_index
                   for i in range(100)}
        assert indices == {0, 1, 2, 3}

    def test_impossible_constraints_fail_loudly(self):
        starved = SplitSpec(kind=SplitKind.NEUTRAL, role=SplitRole.TRAIN,
                            allowed_values=frozenset({1}))
        with pytest.raises(UnsatisfiableQuestionError,
                           match="unsatisfiable question constraints"):
            sample_question(Regime.LABC, starved, question_rng(0, 0))

    def test_value_starved_split_still_works_when_possible(self):
        train, _ = build_split(SplitKind.INTERPOLATION, 0)
        q = sample_question(Regime.LABC, train, question_rng(1, 0))
        assert validate_question(q) == []


class TestGenerateAndVerify:
    def test_zero_count_rejected(self, tmp_path):
        train, _ = build_split(SplitKind.NEUTRAL, 7)
        with pytest.raises(ValueError, match="count"):
            generate_dataset(train, Regime.LABC, 0, 1, tmp_path / "d.bin")

    def test_fresh_contrasting_dataset_verifies_clean(self, tmp_path):
        train, _ = build_split(SplitKind.NEUTRAL, 7)
        path = tmp_path / "d.bin"
        generate_dataset(train, Regime.LABC, 40, 21, path, image_side=40)
        report = verify_dataset(path)
        assert report == {"total": 40, "labc_ok": 40, "normal_ok": 0,
                          "uniqueness_violations": 0}

    def test_fresh_plain_dataset_verifies_clean(self, tmp_path):
        train, _ = build_split(SplitKind.NEUTRAL, 7)
        path = tmp_path / "d.bin"
        generate_dataset(train, Regime.NORMAL, 40, 21, path, image_side=40)
        report = verify_dataset(path)
        assert report["normal_ok"] == 40
        assert report["uniqueness_violations"] == 0

    def test_mixed_dataset_partitions(self, tmp_path):
        train, _ = build_split(SplitKind.NEUTRAL, 7)
        path = tmp_path / "d.bin"
        generate_dataset(train, Regime.MIXED, 60, 21, path, image_side=40)
        report = verify_dataset(path)
        assert report["labc_ok"] + report["normal_ok"] == 60
        assert report["labc_ok"] > 0 and report["normal_ok"] > 0

    def test_corrupted_answer_index_counts_once(self, tmp_path):
        train, _ = build_split(SplitKind.NEUTRAL, 7)
        path = tmp_path / "d.bin"
        generate_dataset(train, Regime.LABC, 30, 21, path, image_side=40)
        ds = read_visual_dataset(path)
        from analogylab.containers import visual_record_size
        raw = bytearray(path.read_bytes())
        header_len = struct.unpack_from("<I", raw, 8)[0]
        target = 17
        base = 12 + header_len + target * visual_record_size(4, 40)
        old = ds.questions[target].answer_index
        raw[base + 3] = (old + 1) % 4
        path.write_bytes(bytes(raw))
        report = verify_dataset(path)
        assert report["uniqueness_violations"] == 1
        assert report["labc_ok"] == 29

    def test_read_back_questions_validate(self, tmp_path):
        train, _ = build_split(SplitKind.EXTRAPOLATION, 7)
        path = tmp_path / "d.bin"
        generate_dataset(train, Regime.MIXED, 25, 8, path, image_side=40)
        for q in read_visual_dataset(path).questions:
            assert validate_question(q) == []


class TestPairFeasibility:
    def test_position_quantity_pairs_share_no_relation(self):
        a = set(compatible_relations(DomainKind.SHAPE_POSITION))
        b = set(compatible_relations(DomainKind.SHAPE_QUANTITY))
        assert not a & b

    def test_novel_transfer_holdout_avoids_infeasible_pairs(self):
        for seed in range(8):
            _, test = build_split(SplitKind.NOVEL_TRANSFER, seed)
            for s, t in test.allowed_transfer_pairs:
                assert set(compatible_relations(s)) \
                    & set(compatible_relations(t))
