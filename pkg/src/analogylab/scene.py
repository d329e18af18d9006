"""Domain vocabulary and validated container types for visual questions.

Everything here is plain data: relation and domain codes, panel contents,
candidate records with provenance, whole questions, and split descriptions.
Relation semantics live in the relation engine; rendering in the rasterizer.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from enum import Enum, IntEnum


VALUE_MIN = 1
VALUE_MAX = 10
ALL_VALUES = frozenset(range(VALUE_MIN, VALUE_MAX + 1))


class RelationKind(IntEnum):
    PROGRESSION = 0
    XOR = 1
    OR = 2
    AND = 3


class DomainKind(IntEnum):
    LINE_TYPE = 0
    LINE_COLOUR = 1
    SHAPE_TYPE = 2
    SHAPE_COLOUR = 3
    SHAPE_SIZE = 4
    SHAPE_QUANTITY = 5
    SHAPE_POSITION = 6


# domains whose panels carry exactly one value (a count renders as that many
# shapes, so a panel cannot show two counts at once)
SINGLETON_ONLY_DOMAINS = frozenset({DomainKind.SHAPE_QUANTITY})


class Regime(Enum):
    NORMAL = "normal"
    LABC = "labc"
    MIXED = "mixed"


class ProvenanceKind(IntEnum):
    CORRECT = 0
    SEMANTIC_DECOY = 1
    PERCEPTUAL_DECOY = 2
    RANDOM = 3


class SplitKind(Enum):
    NEUTRAL = "neutral"
    NOVEL_TRANSFER = "novel-transfer"
    NOVEL_TARGET_DOMAIN = "novel-target-domain"
    INTERPOLATION = "interpolation"
    EXTRAPOLATION = "extrapolation"


class SplitRole(Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


def values_mask(values) -> int:
    """Value set -> 10-bit mask (bit v-1 for value v)."""
    mask = 0
    for v in values:
        mask |= 1 << (v - 1)
    return mask


def mask_values(mask: int) -> frozenset:
    return frozenset(v for v in range(VALUE_MIN, VALUE_MAX + 1)
                     if mask >> (v - 1) & 1)


@dataclass(frozen=True)
class PanelContent:
    domain: DomainKind
    values: frozenset
    decoration_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", frozenset(self.values))


@dataclass(frozen=True)
class CandidateRecord:
    content: PanelContent
    provenance: ProvenanceKind
    decoy_relation: RelationKind | None = None


@dataclass(frozen=True)
class QuestionSpec:
    relation: RelationKind
    source_domain: DomainKind
    target_domain: DomainKind
    source_panels: tuple
    target_panels: tuple
    candidates: tuple
    answer_index: int
    regime: Regime

    @property
    def panels(self) -> tuple:
        return self.source_panels + self.target_panels


@dataclass(frozen=True)
class SplitSpec:
    kind: SplitKind
    role: SplitRole
    allowed_transfer_pairs: frozenset = field(default_factory=frozenset)
    held_out_domains: frozenset = field(default_factory=frozenset)
    allowed_values: frozenset = ALL_VALUES


def _panel_violations(panel, slot: str, domain: DomainKind, out: list) -> None:
    if not isinstance(panel, PanelContent):
        out.append(f"{slot}: not a panel")
        return
    if panel.domain != domain:
        out.append(f"{slot}: domain mismatch")
    if not panel.values:
        out.append(f"{slot}: empty value set")
    elif not panel.values <= ALL_VALUES:
        out.append(f"{slot}: values outside {VALUE_MIN}..{VALUE_MAX}")
    elif panel.domain in SINGLETON_ONLY_DOMAINS and len(panel.values) != 1:
        out.append(f"{slot}: domain requires a single value")
    if not 0 <= panel.decoration_seed < 2 ** 64:
        out.append(f"{slot}: decoration seed out of range")


def validate_question(q: QuestionSpec) -> list:
    """Every violated invariant, as strings; a valid question yields []."""
    out: list = []
    if not isinstance(q.relation, RelationKind):
        out.append("unknown relation")
    if not isinstance(q.source_domain, DomainKind):
        out.append("unknown source domain")
    if not isinstance(q.target_domain, DomainKind):
        out.append("unknown target domain")
        return out
    if len(q.source_panels) != 3:
        out.append("source panel count")
    if len(q.target_panels) != 2:
        out.append("target panel count")
    for i, p in enumerate(q.source_panels):
        _panel_violations(p, f"source panel {i}", q.source_domain, out)
    for i, p in enumerate(q.target_panels):
        _panel_violations(p, f"target panel {i}", q.target_domain, out)
    if len(q.candidates) < 2:
        out.append("candidate count below 2")
    if not 0 <= q.answer_index < len(q.candidates):
        out.append("answer index out of range")
    correct = []
    for i, c in enumerate(q.candidates):
        if not isinstance(c, CandidateRecord):
            out.append(f"candidate {i}: not a candidate record")
            continue
        _panel_violations(c.content, f"candidate {i}", q.target_domain, out)
        if c.provenance == ProvenanceKind.CORRECT:
            correct.append(i)
        if c.provenance == ProvenanceKind.SEMANTIC_DECOY:
            if c.decoy_relation is None:
                out.append(f"candidate {i}: semantic decoy without relation")
            elif c.decoy_relation == q.relation:
                out.append(f"candidate {i}: decoy relation equals the "
                           "question relation")
        elif c.decoy_relation is not None:
            out.append(f"candidate {i}: decoy relation on a non-semantic "
                       "candidate")
    if correct != [q.answer_index]:
        if len(correct) != 1:
            out.append("correct-candidate multiplicity")
        else:
            out.append("correct candidate not at answer index")
    if not isinstance(q.regime, Regime):
        out.append("unknown regime")
    return out


_PANEL_STRUCT = struct.Struct("<BHQ")
_HEAD_STRUCT = struct.Struct("<BBBB")


def provenance_byte(c: CandidateRecord) -> int:
    """Candidate provenance packed into one byte: kind in the high nibble,
    the decoy relation code (semantic decoys only) in the low nibble."""
    detail = 0 if c.decoy_relation is None else int(c.decoy_relation)
    return (int(c.provenance) << 4) | detail


def parse_provenance(byte: int):
    """Byte -> (provenance kind, decoy relation or None)."""
    kind = ProvenanceKind(byte >> 4)
    detail = byte & 0x0F
    if kind == ProvenanceKind.SEMANTIC_DECOY:
        return kind, RelationKind(detail)
    if detail:
        raise ValueError(f"provenance byte {byte:#x} carries a relation "
                         "for a non-semantic candidate")
    return kind, None


def encode_semantic_record(q: QuestionSpec) -> bytes:
    """Canonical byte encoding of a question's semantic content.

    Shared by the content digest and the dataset container, so the digest is
    a pure function of what gets stored.
    """
    parts = [_HEAD_STRUCT.pack(int(q.relation), int(q.source_domain),
                               int(q.target_domain), q.answer_index)]
    parts.append(bytes(provenance_byte(c) for c in q.candidates))
    for panel in q.panels + tuple(c.content for c in q.candidates):
        parts.append(_PANEL_STRUCT.pack(int(panel.domain),
                                        values_mask(panel.values),
                                        panel.decoration_seed))
    return b"".join(parts)


def question_digest(q: QuestionSpec) -> int:
    """64-bit content hash; equal questions hash equal regardless of how
    their objects were built."""
    violations = validate_question(q)
    if violations:
        raise ValueError(f"invalid question: {violations[0]}")
    h = hashlib.blake2b(encode_semantic_record(q), digest_size=8)
    return int.from_bytes(h.digest(), "little")
