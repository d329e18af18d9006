"""Scene vocabulary: validation, digests, provenance encoding."""

import pytest

from analogylab.scene import (CandidateRecord, DomainKind, PanelContent,
                              ProvenanceKind, QuestionSpec, Regime,
                              RelationKind, mask_values, parse_provenance,
                              provenance_byte, question_digest,
                              validate_question, values_mask)

R = RelationKind
D = DomainKind
f = frozenset


def make_question(**overrides):
    src = tuple(PanelContent(D.SHAPE_COLOUR, f({v})) for v in (2, 3, 4))
    tgt = (PanelContent(D.SHAPE_SIZE, f({5})), PanelContent(D.SHAPE_SIZE, f({6})))
    cands = (
        CandidateRecord(PanelContent(D.SHAPE_SIZE, f({7})),
                        ProvenanceKind.CORRECT),
        CandidateRecord(PanelContent(D.SHAPE_SIZE, f({5, 6})),
                        ProvenanceKind.SEMANTIC_DECOY, R.XOR),
        CandidateRecord(PanelContent(D.SHAPE_SIZE, f({1})),
                        ProvenanceKind.RANDOM),
        CandidateRecord(PanelContent(D.SHAPE_SIZE, f({9})),
                        ProvenanceKind.RANDOM),
    )
    fields = dict(relation=R.PROGRESSION, source_domain=D.SHAPE_COLOUR,
                  target_domain=D.SHAPE_SIZE, source_panels=src,
                  target_panels=tgt, candidates=cands, answer_index=0,
                  regime=Regime.LABC)
    fields.update(overrides)
    return QuestionSpec(**fields)


class TestMasks:
    def test_round_trip(self):
        for mask in (1, 0x3FF, 0b1010101010, 0b0000010000):
            assert values_mask(mask_values(mask)) == mask

    def test_examples(self):
        assert values_mask({1, 3}) == 0b101
        assert mask_values(0b101) == f({1, 3})


class TestValidateQuestion:
    def test_valid_question_is_clean(self):
        assert validate_question(make_question()) == []

    def test_candidate_domain_mismatch(self):
        bad = make_question()
        cands = list(bad.candidates)
        cands[2] = CandidateRecord(PanelContent(D.LINE_TYPE, f({1})),
                                   ProvenanceKind.RANDOM)
        got = validate_question(make_question(candidates=tuple(cands)))
        assert any("domain mismatch" in v for v in got)

    def test_two_correct_candidates(self):
        cands = list(make_question().candidates)
        cands[1] = CandidateRecord(PanelContent(D.SHAPE_SIZE, f({5, 6})),
                                   ProvenanceKind.CORRECT)
        got = validate_question(make_question(candidates=tuple(cands)))
        assert any("multiplicity" in v for v in got)

    def test_answer_index_out_of_range(self):
        got = validate_question(make_question(answer_index=7))
        assert any("answer index" in v for v in got)

    def test_empty_values_flagged(self):
        src = (PanelContent(D.SHAPE_COLOUR, f()),) + \
            make_question().source_panels[1:]
        got = validate_question(make_question(source_panels=src))
        assert any("empty value set" in v for v in got)

    def test_quantity_must_be_singleton(self):
        q = make_question(
            source_domain=D.SHAPE_QUANTITY,
            source_panels=tuple(PanelContent(D.SHAPE_QUANTITY, v)
                                for v in (f({2}), f({3}), f({4, 5}))))
        got = validate_question(q)
        assert any("single value" in v for v in got)

    def test_decoy_relation_rules(self):
        cands = list(make_question().candidates)
        cands[1] = CandidateRecord(PanelContent(D.SHAPE_SIZE, f({5, 6})),
                                   ProvenanceKind.SEMANTIC_DECOY, None)
        got = validate_question(make_question(candidates=tuple(cands)))
        assert any("semantic decoy without relation" in v for v in got)
        cands[1] = CandidateRecord(PanelContent(D.SHAPE_SIZE, f({5, 6})),
                                   ProvenanceKind.SEMANTIC_DECOY,
                                   R.PROGRESSION)
        got = validate_question(make_question(candidates=tuple(cands)))
        assert any("decoy relation equals" in v for v in got)
        cands[1] = CandidateRecord(PanelContent(D.SHAPE_SIZE, f({5, 6})),
                                   ProvenanceKind.RANDOM, R.XOR)
        got = validate_question(make_question(candidates=tuple(cands)))
        assert any("non-semantic" in v for v in got)


class TestDigest:
    def test_stable_across_object_identity(self):
        assert question_digest(make_question()) == \
            question_digest(make_question())

    def test_sensitive_to_content(self):
        a = question_digest(make_question())
        b = question_digest(make_question(answer_index=0, regime=Regime.LABC,
                                          relation=R.PROGRESSION))
        assert a == b
        src = tuple(PanelContent(D.SHAPE_COLOUR, f({v})) for v in (2, 3, 5))
        c = question_digest(make_question(source_panels=src))
        assert a != c

    def test_sensitive_to_decoration(self):
        src = (PanelContent(D.SHAPE_COLOUR, f({2}), decoration_seed=9),) + \
            make_question().source_panels[1:]
        assert question_digest(make_question()) != \
            question_digest(make_question(source_panels=src))

    def test_invalid_question_raises(self):
        with pytest.raises(ValueError, match="invalid question"):
            question_digest(make_question(answer_index=9))

    def test_digest_is_64_bit(self):
        assert 0 <= question_digest(make_question()) < 2 ** 64


class TestProvenanceBytes:
    def test_round_trip(self):
        for c in make_question().candidates:
            kind, rel = parse_provenance(provenance_byte(c))
            assert kind == c.provenance
            assert rel == c.decoy_relation

    def test_rejects_relation_on_plain_kind(self):
        with pytest.raises(ValueError):
            parse_provenance((int(ProvenanceKind.RANDOM) << 4) | 2)
