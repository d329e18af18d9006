"""Relation semantics over value sets, plus decoy construction.

A relation instance is a triple of value sets (panel1, panel2, panel3) on one
domain. Progression works on ordered single values; the logical relations
work on whole sets:

  Progression  three singletons {a}, {a+s}, {a+2s} with step s in {1, 2}
  XOR          panel3 equals the symmetric difference of panel1 and panel2
  OR           panel3 covers the union of panel1 and panel2
  AND          panel3 is a non-empty subset of their intersection

OR and AND accept any completion consistent with the covering/subset reading;
``sample_instance`` always emits the canonical one (exact union, full
intersection). The loose reading is what gives a two-panel prefix several
distinct completions per relation, which the decoy machinery depends on.

All functions take and return plain value sets. Wrapping into panel objects
(with decoration seeds) is the question generator's job.
"""

from __future__ import annotations

import numpy as np

from .errors import (IncompatibleRelationError, InsufficientDecoysError,
                     NoInstanceError)
from .scene import (ALL_VALUES, SINGLETON_ONLY_DOMAINS, DomainKind,
                    RelationKind, mask_values, values_mask)


PROGRESSION_STEPS = (1, 2)

COMPATIBILITY = {
    RelationKind.PROGRESSION:
        frozenset(d for d in DomainKind if d != DomainKind.SHAPE_POSITION),
    RelationKind.XOR:
        frozenset(d for d in DomainKind if d != DomainKind.SHAPE_QUANTITY),
    RelationKind.OR:
        frozenset(d for d in DomainKind if d != DomainKind.SHAPE_QUANTITY),
    RelationKind.AND:
        frozenset(d for d in DomainKind if d != DomainKind.SHAPE_QUANTITY),
}


def compatible_relations(domain: DomainKind) -> tuple:
    """Relations defined on this domain, in code order."""
    return tuple(r for r in RelationKind if domain in COMPATIBILITY[r])


def check_compatible(relation: RelationKind, domain: DomainKind) -> None:
    if domain not in COMPATIBILITY[relation]:
        raise IncompatibleRelationError(
            f"relation-domain incompatibility: {relation.name} on "
            f"{domain.name}")


def _progression_step(p1, p2):
    """Step of a singleton prefix, or None when no progression fits."""
    if len(p1) != 1 or len(p2) != 1:
        return None
    (a,), (b,) = p1, p2
    return b - a if b - a in PROGRESSION_STEPS else None


def holds(relation: RelationKind, domain: DomainKind, triple) -> bool:
    """Whether the triple satisfies the relation on the domain."""
    check_compatible(relation, domain)
    p1, p2, p3 = (frozenset(p) for p in triple)
    if not (p1 and p2 and p3):
        return False
    if relation == RelationKind.PROGRESSION:
        step = _progression_step(p1, p2)
        return step is not None and _progression_step(p2, p3) == step
    if relation == RelationKind.XOR:
        return p3 == p1 ^ p2
    if relation == RelationKind.OR:
        return p3 >= p1 | p2
    return p3 <= p1 & p2


def _subsets_of(mask: int, allowed_mask: int) -> list:
    """Non-empty subsets of ``mask & allowed_mask`` in ascending mask order."""
    base = mask & allowed_mask
    # the standard submask walk visits each submask of base exactly once
    out, sub = [], base
    while sub:
        out.append(sub)
        sub = (sub - 1) & base
    out.reverse()
    return out


def complete(relation: RelationKind, domain: DomainKind, prefix,
             allowed_values=ALL_VALUES):
    """All third-panel value sets finishing the prefix under the relation,
    restricted to allowed_values. May be empty."""
    check_compatible(relation, domain)
    p1, p2 = (frozenset(p) for p in prefix)
    allowed = frozenset(allowed_values)
    if relation == RelationKind.PROGRESSION:
        step = _progression_step(p1, p2)
        if step is None:
            return set()
        (b,) = p2
        c = b + step
        return {frozenset({c})} if c in allowed else set()
    if relation == RelationKind.XOR:
        x = p1 ^ p2
        return {x} if x and x <= allowed else set()
    if relation == RelationKind.OR:
        union = p1 | p2
        if not union <= allowed:
            return set()
        extras = _subsets_of(values_mask(allowed - union), 0x3FF)
        return {union} | {union | mask_values(m) for m in extras}
    inter = values_mask(p1 & p2)
    return {mask_values(m) for m in _subsets_of(inter, values_mask(allowed))}


def _sorted_sets(sets):
    return sorted(sets, key=lambda s: (len(s), sorted(s)))


def sample_instance(relation: RelationKind, domain: DomainKind,
                    allowed_values, rng) -> tuple:
    """One canonical relation instance with values drawn from allowed_values.

    Progressions are drawn uniformly over the valid (start, step) pairs. The
    logical relations draw sparse random panels (one to four values each) and
    finish with the canonical completion, retrying until the panels differ
    and the completion is non-empty.
    """
    check_compatible(relation, domain)
    allowed = tuple(sorted(frozenset(allowed_values) & ALL_VALUES))
    if relation == RelationKind.PROGRESSION:
        starts = [(a, s) for s in PROGRESSION_STEPS for a in allowed
                  if a + s in allowed and a + 2 * s in allowed]
        if not starts:
            raise NoInstanceError(
                f"no instance exists: {relation.name} on {domain.name} "
                f"within {sorted(allowed)}")
        a, s = starts[int(rng.integers(len(starts)))]
        return (frozenset({a}), frozenset({a + s}), frozenset({a + 2 * s}))
    if len(allowed) < 2:
        raise NoInstanceError(
            f"no instance exists: {relation.name} on {domain.name} "
            f"within {sorted(allowed)}")
    values = np.array(allowed)
    for _ in range(200):
        sizes = rng.integers(1, min(4, len(allowed)) + 1, size=2)
        p1 = frozenset(int(v) for v in
                       rng.choice(values, size=sizes[0], replace=False))
        p2 = frozenset(int(v) for v in
                       rng.choice(values, size=sizes[1], replace=False))
        if p1 == p2:
            continue
        if relation == RelationKind.XOR:
            p3 = p1 ^ p2
        elif relation == RelationKind.OR:
            p3 = p1 | p2
        else:
            p3 = p1 & p2
        if p3:
            return (p1, p2, p3)
    raise NoInstanceError(
        f"no instance exists: {relation.name} on {domain.name} "
        f"within {sorted(allowed)}")


def semantic_decoys(domain: DomainKind, prefix, relation: RelationKind,
                    n: int, allowed_values, rng) -> list:
    """n distinct decoy contents, each completing some other relation on the
    prefix while not completing the question relation.

    Decoy relations are visited round-robin in a seeded random order, so the
    decoys spread over as many rival relations as the prefix supports.
    Returns (content, decoy_relation) pairs.
    """
    check_compatible(relation, domain)
    allowed = frozenset(allowed_values)
    correct_family = complete(relation, domain, prefix, allowed)
    rivals = [r for r in compatible_relations(domain) if r != relation]
    pools = {}
    for rival in rivals:
        family = complete(rival, domain, prefix, allowed) - correct_family
        if domain in SINGLETON_ONLY_DOMAINS:
            family = {c for c in family if len(c) == 1}
        pool = _sorted_sets(family)
        rng.shuffle(pool)
        if pool:
            pools[rival] = pool
    order = [r for r in rivals if r in pools]
    rng.shuffle(order)
    out, used = [], set()
    while len(out) < n:
        progressed = False
        for rival in order:
            if len(out) == n:
                break
            pool = pools[rival]
            while pool:
                content = pool.pop()
                if content not in used:
                    out.append((content, rival))
                    used.add(content)
                    progressed = True
                    break
        if not progressed:
            raise InsufficientDecoysError(
                f"insufficient decoys: {len(out)} of {n} for "
                f"{relation.name} on {domain.name}")
    return out


def perceptual_decoys(domain: DomainKind, prefix, relation: RelationKind,
                      n: int, allowed_values, rng) -> list:
    """n distinct contents completing no compatible relation on the prefix."""
    check_compatible(relation, domain)
    allowed = frozenset(allowed_values)
    taken = set()
    for r in compatible_relations(domain):
        taken |= complete(r, domain, prefix, allowed)
    candidates = [mask_values(m) for m in
                  _subsets_of(values_mask(allowed), 0x3FF)]
    if domain in SINGLETON_ONLY_DOMAINS:
        candidates = [c for c in candidates if len(c) == 1]
    pool = _sorted_sets(c for c in candidates if c not in taken)
    rng.shuffle(pool)
    if len(pool) < n:
        raise InsufficientDecoysError(
            f"insufficient decoys: {len(pool)} of {n} for "
            f"{relation.name} on {domain.name}")
    return pool[:n]


def random_decoys(domain: DomainKind, prefix, relation: RelationKind,
                  correct, n: int, allowed_values, rng) -> list:
    """n distinct random contents, none equal to ``correct`` and none
    completing the question relation on the prefix."""
    check_compatible(relation, domain)
    allowed = frozenset(allowed_values)
    exclude = complete(relation, domain, prefix, allowed) | {frozenset(correct)}
    candidates = [mask_values(m) for m in
                  _subsets_of(values_mask(allowed), 0x3FF)]
    if domain in SINGLETON_ONLY_DOMAINS:
        candidates = [c for c in candidates if len(c) == 1]
    pool = _sorted_sets(c for c in candidates if c not in exclude)
    rng.shuffle(pool)
    if len(pool) < n:
        raise InsufficientDecoysError(
            f"insufficient decoys: {len(pool)} of {n} for "
            f"{relation.name} on {domain.name}")
    return pool[:n]
