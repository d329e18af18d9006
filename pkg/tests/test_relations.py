"""Relation engine: semantics, completions, decoys, error contracts."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from analogylab.errors import (IncompatibleRelationError,
                               InsufficientDecoysError, NoInstanceError)
from analogylab.relations import (COMPATIBILITY, PROGRESSION_STEPS,
                                  compatible_relations, complete, holds,
                                  perceptual_decoys, random_decoys,
                                  sample_instance, semantic_decoys)
from analogylab.scene import (ALL_VALUES, DomainKind, RelationKind,
                              mask_values)

import oracles

R = RelationKind
D = DomainKind
f = frozenset

value_sets = st.frozensets(st.integers(1, 10), min_size=1)
set_domains = st.sampled_from([d for d in D if d != D.SHAPE_QUANTITY])


class TestCompatibility:
    def test_progression_excludes_position(self):
        assert D.SHAPE_POSITION not in COMPATIBILITY[R.PROGRESSION]
        assert len(COMPATIBILITY[R.PROGRESSION]) == 6

    def test_logical_exclude_quantity(self):
        for r in (R.XOR, R.OR, R.AND):
            assert D.SHAPE_QUANTITY not in COMPATIBILITY[r]
            assert len(COMPATIBILITY[r]) == 6

    def test_every_domain_has_a_relation(self):
        for d in D:
            assert compatible_relations(d)

    def test_incompatible_pairs_raise(self):
        with pytest.raises(IncompatibleRelationError,
                           match="relation-domain incompatibility"):
            holds(R.XOR, D.SHAPE_QUANTITY, (f({1}), f({2}), f({3})))
        with pytest.raises(IncompatibleRelationError,
                           match="relation-domain incompatibility"):
            complete(R.PROGRESSION, D.SHAPE_POSITION, (f({1}), f({2})))


class TestHolds:
    def test_xor_example(self):
        assert holds(R.XOR, D.SHAPE_POSITION, (f({1, 3}), f({3, 5}), f({1, 5})))

    def test_and_example(self):
        assert not holds(R.AND, D.SHAPE_COLOUR,
                         (f({1, 2}), f({2, 3}), f({1, 2, 3})))

    def test_and_accepts_subset_of_intersection(self):
        assert holds(R.AND, D.SHAPE_COLOUR, (f({1, 2}), f({2, 3}), f({2})))

    def test_or_accepts_superset_of_union(self):
        assert holds(R.OR, D.SHAPE_COLOUR, (f({1}), f({3}), f({1, 3})))
        assert holds(R.OR, D.SHAPE_COLOUR, (f({1}), f({3}), f({1, 3, 7})))
        assert not holds(R.OR, D.SHAPE_COLOUR, (f({1}), f({3}), f({1})))

    def test_progression(self):
        assert holds(R.PROGRESSION, D.SHAPE_QUANTITY, (f({3}), f({5}), f({7})))
        assert holds(R.PROGRESSION, D.SHAPE_SIZE, (f({1}), f({2}), f({3})))
        assert not holds(R.PROGRESSION, D.SHAPE_SIZE, (f({3}), f({5}), f({6})))
        assert not holds(R.PROGRESSION, D.SHAPE_SIZE, (f({5}), f({3}), f({1})))
        assert not holds(R.PROGRESSION, D.SHAPE_SIZE,
                         (f({1, 2}), f({3}), f({5})))

    def test_sampled_agreement_with_mask_oracle(self):
        rng = np.random.default_rng(11)
        for code, rel in [(0, R.PROGRESSION), (1, R.XOR), (2, R.OR),
                          (3, R.AND)]:
            m = rng.integers(1, 1024, size=(3000, 3))
            got = np.array([holds(rel, D.SHAPE_COLOUR,
                                  tuple(mask_values(int(x)) for x in row))
                            for row in m])
            want = oracles.holds_masks(code, m[:, 0], m[:, 1], m[:, 2])
            assert (got == want).all()


class TestComplete:
    def test_xor_is_a_function(self):
        assert complete(R.XOR, D.SHAPE_POSITION, (f({1, 3}), f({3, 5}))) \
            == {f({1, 5})}

    def test_progression_examples(self):
        assert complete(R.PROGRESSION, D.SHAPE_SIZE, (f({3}), f({5}))) \
            == {f({7})}
        assert complete(R.PROGRESSION, D.SHAPE_SIZE, (f({3}), f({9}))) == set()

    def test_progression_respects_value_cap(self):
        assert complete(R.PROGRESSION, D.SHAPE_SIZE, (f({8}), f({9}))) \
            == {f({10})}
        assert complete(R.PROGRESSION, D.SHAPE_SIZE, (f({9}), f({10}))) \
            == set()

    def test_or_enumerates_supersets(self):
        got = complete(R.OR, D.SHAPE_COLOUR, (f({1, 9}), f({9, 10})),
                       allowed_values=f({1, 2, 9, 10}))
        assert got == {f({1, 9, 10}), f({1, 2, 9, 10})}

    def test_and_enumerates_subsets(self):
        got = complete(R.AND, D.SHAPE_COLOUR, (f({1, 2, 3}), f({2, 3, 4})))
        assert got == {f({2}), f({3}), f({2, 3})}

    def test_allowed_values_filter(self):
        assert complete(R.XOR, D.SHAPE_COLOUR, (f({1}), f({2})),
                        allowed_values=f({1, 2})) == {f({1, 2})}
        assert complete(R.XOR, D.SHAPE_COLOUR, (f({1}), f({3})),
                        allowed_values=f({1, 2})) == set()

    @given(p1=value_sets, p2=value_sets, d=set_domains)
    @settings(max_examples=200, deadline=None)
    def test_completions_satisfy_holds(self, p1, p2, d):
        for r in compatible_relations(d):
            for c in complete(r, d, (p1, p2)):
                assert holds(r, d, (p1, p2, c))

    @given(p1=value_sets, p2=value_sets)
    @settings(max_examples=100, deadline=None)
    def test_domain_independent_given_compatibility(self, p1, p2):
        for r in RelationKind:
            results = [complete(r, d, (p1, p2)) for d in COMPATIBILITY[r]
                       if d not in (D.SHAPE_QUANTITY,)]
            assert all(res == results[0] for res in results)


class TestSampleInstance:
    def test_progression_unsatisfiable(self):
        with pytest.raises(NoInstanceError, match="no instance exists"):
            sample_instance(R.PROGRESSION, D.SHAPE_QUANTITY, f({1, 2}),
                            np.random.default_rng(0))

    def test_logical_needs_two_values(self):
        with pytest.raises(NoInstanceError, match="no instance exists"):
            sample_instance(R.XOR, D.SHAPE_COLOUR, f({4}),
                            np.random.default_rng(0))

    @pytest.mark.parametrize("r", list(RelationKind))
    def test_instances_satisfy_holds(self, r):
        d = D.SHAPE_COLOUR
        rng = np.random.default_rng(5)
        for _ in range(50):
            triple = sample_instance(r, d, ALL_VALUES, rng)
            assert holds(r, d, triple)
            assert triple[0] != triple[1]

    def test_canonical_completions(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            p1, p2, p3 = sample_instance(R.OR, D.SHAPE_COLOUR, ALL_VALUES, rng)
            assert p3 == p1 | p2
            q1, q2, q3 = sample_instance(R.AND, D.SHAPE_COLOUR, ALL_VALUES,
                                         rng)
            assert q3 == q1 & q2

    def test_restricted_values_stay_inside(self):
        rng = np.random.default_rng(3)
        allowed = f({2, 4, 6, 8, 10})
        for r in RelationKind:
            for _ in range(20):
                for p in sample_instance(r, D.SHAPE_COLOUR, allowed, rng):
                    assert p <= allowed

    def test_deterministic_under_seed(self):
        a = sample_instance(R.XOR, D.LINE_TYPE, ALL_VALUES,
                            np.random.default_rng(42))
        b = sample_instance(R.XOR, D.LINE_TYPE, ALL_VALUES,
                            np.random.default_rng(42))
        assert a == b


class TestSemanticDecoys:
    PREFIX = (f({1, 3}), f({3, 5}))

    def test_worked_example_postconditions(self):
        rng = np.random.default_rng(0)
        got = semantic_decoys(D.SHAPE_POSITION, self.PREFIX, R.XOR, 2,
                              ALL_VALUES, rng)
        assert len(got) == 2
        for content, rival in got:
            assert rival != R.XOR
            assert holds(rival, D.SHAPE_POSITION, self.PREFIX + (content,))
            assert content not in complete(R.XOR, D.SHAPE_POSITION,
                                           self.PREFIX)

    def test_contents_distinct_and_not_completing_question(self):
        rng = np.random.default_rng(1)
        for r in (R.XOR, R.OR, R.AND):
            prefix = sample_instance(r, D.SHAPE_COLOUR, ALL_VALUES, rng)[:2]
            try:
                got = semantic_decoys(D.SHAPE_COLOUR, prefix, r, 3,
                                      ALL_VALUES, rng)
            except InsufficientDecoysError:
                continue
            contents = [c for c, _ in got]
            assert len(set(contents)) == 3
            correct_family = complete(r, D.SHAPE_COLOUR, prefix)
            for content, rival in got:
                assert content not in correct_family
                assert content in complete(rival, D.SHAPE_COLOUR, prefix)

    def test_round_robin_spreads_over_rivals(self):
        # a progression prefix supports XOR and OR rivals; two decoys must
        # use two distinct rivals rather than exhausting one family
        rng = np.random.default_rng(2)
        got = semantic_decoys(D.SHAPE_COLOUR, (f({2}), f({3})),
                              R.PROGRESSION, 2, ALL_VALUES, rng)
        assert len({rival for _, rival in got}) == 2

    def test_quantity_has_no_rivals(self):
        with pytest.raises(InsufficientDecoysError,
                           match="insufficient decoys"):
            semantic_decoys(D.SHAPE_QUANTITY, (f({2}), f({3})),
                            R.PROGRESSION, 1, ALL_VALUES,
                            np.random.default_rng(0))

    def test_insufficient_reports_error(self):
        # an AND prefix with a single shared value and the whole value space
        # already in the union leaves no OR rivals beyond the union itself
        with pytest.raises(InsufficientDecoysError,
                           match="insufficient decoys"):
            semantic_decoys(D.SHAPE_COLOUR, (f({1}), f({1, 2})), R.AND, 5,
                            f({1, 2}), np.random.default_rng(0))

    def test_deterministic_under_seed(self):
        a = semantic_decoys(D.LINE_TYPE, self.PREFIX, R.XOR, 3, ALL_VALUES,
                            np.random.default_rng(7))
        b = semantic_decoys(D.LINE_TYPE, self.PREFIX, R.XOR, 3, ALL_VALUES,
                            np.random.default_rng(7))
        assert a == b


class TestOtherDecoys:
    def test_perceptual_complete_nothing(self):
        rng = np.random.default_rng(4)
        prefix = (f({1, 3}), f({3, 5}))
        got = perceptual_decoys(D.SHAPE_POSITION, prefix, R.XOR, 4,
                                ALL_VALUES, rng)
        assert len(set(got)) == 4
        for content in got:
            for r in compatible_relations(D.SHAPE_POSITION):
                assert not holds(r, D.SHAPE_POSITION, prefix + (content,))

    def test_random_avoid_correct_and_question_relation(self):
        rng = np.random.default_rng(6)
        prefix = (f({1, 3}), f({3, 5}))
        correct = f({1, 5})
        got = random_decoys(D.SHAPE_POSITION, prefix, R.XOR, correct, 5,
                            ALL_VALUES, rng)
        assert len(set(got)) == 5
        for content in got:
            assert content != correct
            assert not holds(R.XOR, D.SHAPE_POSITION, prefix + (content,))

    def test_quantity_random_decoys_are_singletons(self):
        rng = np.random.default_rng(8)
        got = random_decoys(D.SHAPE_QUANTITY, (f({2}), f({3})),
                            R.PROGRESSION, f({4}), 5, ALL_VALUES, rng)
        assert all(len(c) == 1 for c in got)
