"""Question assembly: regimes, generalization splits, dataset files.

A question instantiates one relation twice, in a source domain (three panels)
and in a target domain (two panels plus the correct candidate). The regime
decides what the incorrect candidates are: contrasting questions use decoys
that each complete a rival relation on the same target prefix, plain ones use
random contents that complete nothing relevant.
"""

from __future__ import annotations

import numpy as np

from .containers import VisualDatasetWriter, read_visual_dataset
from .errors import (InsufficientDecoysError, NoInstanceError,
                     UnsatisfiableQuestionError)
from .relations import (compatible_relations, holds, random_decoys,
                        sample_instance, semantic_decoys)
from .scene import (ALL_VALUES, CandidateRecord, DomainKind, PanelContent,
                    ProvenanceKind, QuestionSpec, Regime, RelationKind,
                    SplitKind, SplitRole, SplitSpec)

RETRY_CAP = 32
NOVEL_TARGET_HOLDOUT = frozenset({DomainKind.LINE_TYPE,
                                  DomainKind.SHAPE_COLOUR})
INTERPOLATION_TRAIN = frozenset({2, 4, 6, 8, 10})
EXTRAPOLATION_TRAIN = frozenset(range(1, 6))

ALL_PAIRS = tuple((s, t) for s in DomainKind for t in DomainKind)


def _pair_feasible(source: DomainKind, target: DomainKind) -> bool:
    return bool(set(compatible_relations(source))
                & set(compatible_relations(target)))


def build_split(kind: SplitKind, master_seed: int):
    """Returns (train, test) SplitSpecs for one generalization axis."""
    if kind == SplitKind.NEUTRAL:
        return (SplitSpec(kind=kind, role=SplitRole.TRAIN),
                SplitSpec(kind=kind, role=SplitRole.TEST))
    if kind == SplitKind.NOVEL_TRANSFER:
        rng = np.random.default_rng(
            np.random.SeedSequence([master_seed, 0x7a125]))
        domains = list(DomainKind)
        # one held pair per target domain, source drawn among the feasible
        # non-identity sources so the test split is never empty on a pair
        held = []
        for target in domains:
            sources = [s for s in domains
                       if s != target and _pair_feasible(s, target)]
            held.append((sources[rng.integers(len(sources))], target))
        held = frozenset(held)
        train_pairs = frozenset(p for p in ALL_PAIRS if p not in held)
        return (SplitSpec(kind=kind, role=SplitRole.TRAIN,
                          allowed_transfer_pairs=train_pairs),
                SplitSpec(kind=kind, role=SplitRole.TEST,
                          allowed_transfer_pairs=held))
    if kind == SplitKind.NOVEL_TARGET_DOMAIN:
        train_pairs = frozenset((s, t) for s, t in ALL_PAIRS
                                if t not in NOVEL_TARGET_HOLDOUT)
        test_pairs = frozenset((s, t) for s, t in ALL_PAIRS
                               if t in NOVEL_TARGET_HOLDOUT)
        return (SplitSpec(kind=kind, role=SplitRole.TRAIN,
                          allowed_transfer_pairs=train_pairs,
                          held_out_domains=NOVEL_TARGET_HOLDOUT),
                SplitSpec(kind=kind, role=SplitRole.TEST,
                          allowed_transfer_pairs=test_pairs,
                          held_out_domains=NOVEL_TARGET_HOLDOUT))
    if kind == SplitKind.INTERPOLATION:
        return (SplitSpec(kind=kind, role=SplitRole.TRAIN,
                          allowed_values=INTERPOLATION_TRAIN),
                SplitSpec(kind=kind, role=SplitRole.TEST,
                          allowed_values=ALL_VALUES - INTERPOLATION_TRAIN))
    if kind == SplitKind.EXTRAPOLATION:
        return (SplitSpec(kind=kind, role=SplitRole.TRAIN,
                          allowed_values=EXTRAPOLATION_TRAIN),
                SplitSpec(kind=kind, role=SplitRole.TEST,
                          allowed_values=ALL_VALUES - EXTRAPOLATION_TRAIN))
    raise ValueError(f"unknown split kind {kind!r}")


def _split_pairs(split: SplitSpec, contrasting: bool):
    pairs = split.allowed_transfer_pairs or frozenset(ALL_PAIRS)
    out = [p for p in sorted(pairs) if _pair_feasible(*p)]
    if contrasting:
        # contrasting decoys need a rival relation in the target domain
        out = [(s, t) for s, t in out
               if len(compatible_relations(t)) >= 2]
    return out


def _decorated(domain: DomainKind, values, rng) -> PanelContent:
    seed = int(rng.integers(0, 2 ** 64, dtype=np.uint64))
    return PanelContent(domain=domain, values=values, decoration_seed=seed)


def sample_question(regime: Regime, split: SplitSpec, rng,
                    candidate_count: int = 4) -> QuestionSpec:
    """One complete question under the split's constraints.

    Retries bounded; raises when the constraints keep rejecting samples.
    """
    if regime == Regime.MIXED:
        effective = Regime.LABC if rng.integers(2) else Regime.NORMAL
    else:
        effective = regime
    contrasting = effective == Regime.LABC
    pairs = _split_pairs(split, contrasting)
    last = "no feasible transfer pair"
    for _ in range(RETRY_CAP):
        if not pairs:
            break
        source_domain, target_domain = pairs[rng.integers(len(pairs))]
        options = [r for r in compatible_relations(source_domain)
                   if r in compatible_relations(target_domain)]
        relation = options[rng.integers(len(options))]
        try:
            source = sample_instance(relation, source_domain,
                                     split.allowed_values, rng)
            target = sample_instance(relation, target_domain,
                                     split.allowed_values, rng)
            if contrasting:
                decoys = [
                    (values, ProvenanceKind.SEMANTIC_DECOY, rival)
                    for values, rival in semantic_decoys(
                        target_domain, target[:2], relation,
                        candidate_count - 1, split.allowed_values, rng)]
            else:
                decoys = [
                    (values, ProvenanceKind.RANDOM, None)
                    for values in random_decoys(
                        target_domain, target[:2], relation, target[2],
                        candidate_count - 1, split.allowed_values, rng)]
        except (NoInstanceError, InsufficientDecoysError) as exc:
            last = str(exc)
            continue
        answer_index = int(rng.integers(candidate_count))
        slots = list(decoys)
        slots.insert(answer_index, (target[2], ProvenanceKind.CORRECT, None))
        candidates = tuple(
            CandidateRecord(content=_decorated(target_domain, values, rng),
                            provenance=kind, decoy_relation=rival)
            for values, kind, rival in slots)
        return QuestionSpec(
            relation=relation, source_domain=source_domain,
            target_domain=target_domain,
            source_panels=tuple(_decorated(source_domain, v, rng)
                                for v in source),
            target_panels=tuple(_decorated(target_domain, v, rng)
                                for v in target[:2]),
            candidates=candidates, answer_index=answer_index,
            regime=effective)
    raise UnsatisfiableQuestionError(
        f"unsatisfiable question constraints: {last}")


def question_rng(master_seed: int, index: int):
    return np.random.default_rng(np.random.SeedSequence([master_seed, index]))


def generate_dataset(split: SplitSpec, regime: Regime, count: int,
                     master_seed: int, path, *, candidate_count: int = 4,
                     image_side: int = 80) -> None:
    """Writes ``count`` questions; question i depends only on (seed, i)."""
    with VisualDatasetWriter(path, split=split.kind.value, regime=regime,
                             count=count, seed=master_seed,
                             candidate_count=candidate_count,
                             image_side=image_side) as writer:
        for i in range(count):
            writer.add(sample_question(regime, split,
                                       question_rng(master_seed, i),
                                       candidate_count))


def verify_dataset(path) -> dict:
    """Re-derives every candidate's status from the relation semantics alone.

    A question is counted as a uniqueness violation unless exactly one
    candidate completes the question relation on the target prefix and that
    candidate sits at answer_index.
    """
    dataset = read_visual_dataset(path)
    report = {"total": len(dataset), "labc_ok": 0, "normal_ok": 0,
              "uniqueness_violations": 0}
    for q in dataset.questions:
        prefix = (q.target_panels[0].values, q.target_panels[1].values)
        completing = [
            i for i, c in enumerate(q.candidates)
            if holds(q.relation, q.target_domain, prefix + (c.content.values,))]
        if completing != [q.answer_index]:
            report["uniqueness_violations"] += 1
            continue
        incorrect = [c for i, c in enumerate(q.candidates)
                     if i != q.answer_index]
        if all(c.provenance == ProvenanceKind.SEMANTIC_DECOY
               and c.decoy_relation is not None
               and c.decoy_relation != q.relation
               and holds(c.decoy_relation, q.target_domain,
                         prefix + (c.content.values,))
               for c in incorrect):
            report["labc_ok"] += 1
        elif all(c.provenance in (ProvenanceKind.PERCEPTUAL_DECOY,
                                  ProvenanceKind.RANDOM)
                 for c in incorrect):
            report["normal_ok"] += 1
    return report
