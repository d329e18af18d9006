"""Binary dataset containers and JSONL sidecar exports.

Both formats share one little-endian framing: a 4-byte magic, a u32 format
version, a u32 header length, a UTF-8 JSON header, then fixed-size records.
Visual files use magic "LABC" and store each panel twice, as a semantic
triple (domain, value bitmask, decoration seed) and as raw greyscale bytes.
Symbolic files use magic "LSYM" and store integer matrices.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ContainerFormatError
from .raster import SIDES, render_panel
from .scene import (CandidateRecord, DomainKind, PanelContent, QuestionSpec,
                    Regime, RelationKind, encode_semantic_record, mask_values,
                    parse_provenance)
from .symbolic import (SetFunction, SymbolicProblem, SymbolicProvenance)

VISUAL_MAGIC = b"LABC"
SYMBOLIC_MAGIC = b"LSYM"
FORMAT_VERSION = 1

_FRAME = struct.Struct("<4sII")
_PANEL = struct.Struct("<BHQ")


def _read_exact(f, n: int, what: str):
    data = f.read(n)
    if len(data) != n:
        raise ContainerFormatError(f"truncated {what}: wanted {n} bytes, "
                                   f"got {len(data)}", offset=f.tell() - len(data))
    return data


def _read_frame(f, magic: bytes) -> dict:
    head = _read_exact(f, _FRAME.size, "file header")
    got_magic, version, header_len = _FRAME.unpack(head)
    if got_magic != magic:
        raise ContainerFormatError(f"bad magic {got_magic!r}, "
                                   f"expected {magic!r}", offset=0)
    if version != FORMAT_VERSION:
        raise ContainerFormatError(f"unsupported format version {version}",
                                   offset=4)
    raw = _read_exact(f, header_len, "JSON header")
    try:
        header = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerFormatError(f"unreadable header: {exc}",
                                   offset=_FRAME.size) from None
    if not isinstance(header, dict):
        raise ContainerFormatError("header is not a JSON object",
                                   offset=_FRAME.size)
    return header


def _write_frame(f, magic: bytes, header: dict) -> None:
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    f.write(_FRAME.pack(magic, FORMAT_VERSION, len(raw)))
    f.write(raw)


def _require(header: dict, key: str, kind, offset: int):
    if key not in header or not isinstance(header[key], kind):
        raise ContainerFormatError(f"header field {key!r} missing or invalid",
                                   offset=offset)
    return header[key]


# ---------------------------------------------------------------- visual

def visual_record_size(candidate_count: int, image_side: int) -> int:
    panels = 5 + candidate_count
    return 4 + candidate_count + panels * (_PANEL.size + image_side * image_side)


class VisualDatasetWriter:
    """Streams questions into an LABC file, rendering panels as it goes."""

    def __init__(self, path, *, split: str, regime: Regime, count: int,
                 seed: int, candidate_count: int = 4, image_side: int = 80):
        if count < 1:
            raise ValueError("count must be >= 1")
        if image_side not in SIDES:
            raise ValueError(f"unsupported side {image_side}")
        self.header = {
            "split": split,
            "regime": regime.value,
            "count": count,
            "seed": seed,
            "candidate_count": candidate_count,
            "image_side": image_side,
        }
        self._f = open(path, "wb")
        self._written = 0
        _write_frame(self._f, VISUAL_MAGIC, self.header)

    def add(self, question: QuestionSpec) -> None:
        cc = self.header["candidate_count"]
        side = self.header["image_side"]
        if len(question.candidates) != cc:
            raise ValueError(f"expected {cc} candidates, "
                             f"got {len(question.candidates)}")
        if self._written >= self.header["count"]:
            raise ValueError("writer already holds the declared count")
        self._f.write(encode_semantic_record(question))
        for p in question.panels + tuple(c.content for c in question.candidates):
            self._f.write(render_panel(p, side=side).tobytes())
        self._written += 1

    def close(self) -> None:
        if self._written != self.header["count"]:
            self._f.close()
            raise ValueError(f"wrote {self._written} of "
                             f"{self.header['count']} declared questions")
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self._f.close()
        return False


def _parse_visual_record(buf: bytes, base: int, candidate_count: int,
                         image_side: int, regime: Regime):
    """Decode one record; returns (QuestionSpec, raster bytes offset)."""
    pos = 0
    relation, source_domain, target_domain, answer_index = \
        struct.unpack_from("<BBBB", buf, pos)
    pos += 4
    try:
        relation = RelationKind(relation)
        source_domain = DomainKind(source_domain)
        target_domain = DomainKind(target_domain)
    except ValueError as exc:
        raise ContainerFormatError(f"bad record field: {exc}",
                                   offset=base) from None
    provenances = []
    for i in range(candidate_count):
        byte = buf[pos]
        pos += 1
        try:
            provenances.append(parse_provenance(byte))
        except ValueError as exc:
            raise ContainerFormatError(f"candidate {i}: {exc}",
                                       offset=base + 4 + i) from None
    panels = []
    for i in range(5 + candidate_count):
        domain, mask, seed = _PANEL.unpack_from(buf, pos)
        try:
            panels.append(PanelContent(domain=DomainKind(domain),
                                       values=mask_values(mask),
                                       decoration_seed=seed))
        except ValueError as exc:
            raise ContainerFormatError(f"panel {i}: {exc}",
                                       offset=base + pos) from None
        pos += _PANEL.size
    candidates = tuple(
        CandidateRecord(content=panels[5 + i], provenance=kind,
                        decoy_relation=detail)
        for i, (kind, detail) in enumerate(provenances))
    question = QuestionSpec(
        relation=relation, source_domain=source_domain,
        target_domain=target_domain,
        source_panels=tuple(panels[:3]), target_panels=tuple(panels[3:5]),
        candidates=candidates, answer_index=answer_index, regime=regime)
    return question, pos


@dataclass
class VisualDataset:
    """Parsed LABC file; rasters stay memory-mapped until asked for."""

    path: str
    header: dict
    questions: list
    _rasters: np.ndarray    # (count, panels, side, side) uint8 memmap view

    def __len__(self) -> int:
        return len(self.questions)

    @property
    def image_side(self) -> int:
        return self.header["image_side"]

    def rasters(self, index: int) -> np.ndarray:
        return np.asarray(self._rasters[index])

    def raster_batch(self, indices) -> np.ndarray:
        return np.asarray(self._rasters[np.asarray(indices)])


def read_visual_dataset(path) -> VisualDataset:
    with open(path, "rb") as f:
        header = _read_frame(f, VISUAL_MAGIC)
        body_start = f.tell()
        count = _require(header, "count", int, _FRAME.size)
        cc = _require(header, "candidate_count", int, _FRAME.size)
        side = _require(header, "image_side", int, _FRAME.size)
        regime_name = _require(header, "regime", str, _FRAME.size)
        try:
            regime = Regime(regime_name)
        except ValueError:
            raise ContainerFormatError(f"unknown regime {regime_name!r}",
                                       offset=_FRAME.size) from None
        if side not in SIDES:
            raise ContainerFormatError(f"unsupported image side {side}",
                                       offset=_FRAME.size)
        record = visual_record_size(cc, side)
        panels = 5 + cc
        semantic = record - panels * side * side
        f.seek(0, 2)
        actual = f.tell()
        expected = body_start + count * record
        if actual < expected:
            done = (actual - body_start) // record
            raise ContainerFormatError(
                f"truncated record {done}: file ends {expected - actual} "
                "bytes early", offset=body_start + done * record)
        if actual > expected:
            raise ContainerFormatError("trailing bytes after last record",
                                       offset=expected)
        f.seek(body_start)
        questions = []
        for i in range(count):
            base = body_start + i * record
            buf = _read_exact(f, semantic, f"record {i}")
            question, _ = _parse_visual_record(buf, base, cc, side, regime)
            questions.append(question)
            f.seek(panels * side * side, 1)
    raster_view = np.memmap(path, dtype=np.uint8, mode="r",
                            offset=body_start, shape=(count, record))
    rasters = raster_view[:, semantic:].reshape(count, panels, side, side)
    return VisualDataset(path=str(path), header=header, questions=questions,
                         _rasters=rasters)


def export_visual_jsonl(dataset: VisualDataset, path) -> None:
    """One question per line, semantic form only."""
    with open(path, "w", encoding="utf-8") as f:
        for q in dataset.questions:
            row = {
                "relation": q.relation.name,
                "source_domain": q.source_domain.name,
                "target_domain": q.target_domain.name,
                "answer_index": q.answer_index,
                "panels": [{"domain": p.domain.name,
                            "values": sorted(p.values),
                            "decoration_seed": p.decoration_seed}
                           for p in q.panels],
                "candidates": [{"provenance": c.provenance.name,
                                "decoy_relation": None if c.decoy_relation is None
                                else c.decoy_relation.name,
                                "values": sorted(c.content.values)}
                               for c in q.candidates],
            }
            f.write(json.dumps(row) + "\n")


# -------------------------------------------------------------- symbolic

def _symbolic_record_size(dims: int, set_size: int, candidate_count: int) -> int:
    return 4 + 2 * candidate_count + 2 * dims * (2 * set_size + 1 + candidate_count)


def write_symbolic_dataset(path, problems, *, split: str, seed: int) -> None:
    if not problems:
        raise ValueError("count must be >= 1")
    first = problems[0]
    dims = first.dims
    set_size = first.source_set.shape[0]
    cc = first.candidates.shape[0]
    header = {
        "split": split,
        "count": len(problems),
        "seed": seed,
        "candidate_count": cc,
        "dims": dims,
        "set_size": set_size,
    }
    with open(path, "wb") as f:
        _write_frame(f, SYMBOLIC_MAGIC, header)
        for p in problems:
            if p.dims != dims or p.candidates.shape[0] != cc \
                    or p.source_set.shape[0] != set_size:
                raise ValueError("problems in one file must share shapes")
            f.write(struct.pack("<BBBB", int(p.function), p.source_dim,
                                p.target_dim, p.answer_index))
            for kind, detail in zip(p.provenances, p.decoy_functions):
                f.write(struct.pack("<BB", int(kind),
                                    0 if detail is None else int(detail) + 1))
            for block in (p.source_set, p.source_answer.reshape(1, -1),
                          p.target_set, p.candidates):
                arr = np.asarray(block)
                if not np.issubdtype(arr.dtype, np.integer):
                    raise ValueError("only integer-valued problems can be stored")
                f.write(arr.astype("<i2").tobytes())


def read_symbolic_dataset(path):
    """Returns (header, list of SymbolicProblem)."""
    with open(path, "rb") as f:
        header = _read_frame(f, SYMBOLIC_MAGIC)
        body_start = f.tell()
        count = _require(header, "count", int, _FRAME.size)
        cc = _require(header, "candidate_count", int, _FRAME.size)
        dims = _require(header, "dims", int, _FRAME.size)
        set_size = _require(header, "set_size", int, _FRAME.size)
        record = _symbolic_record_size(dims, set_size, cc)
        problems = []
        for i in range(count):
            base = body_start + i * record
            buf = _read_exact(f, record, f"record {i}")
            function, source_dim, target_dim, answer_index = \
                struct.unpack_from("<BBBB", buf, 0)
            try:
                function = SetFunction(function)
            except ValueError:
                raise ContainerFormatError(
                    f"bad set function code {function}", offset=base) from None
            provenances = []
            decoys = []
            pos = 4
            for j in range(cc):
                kind, detail = struct.unpack_from("<BB", buf, pos)
                pos += 2
                try:
                    provenances.append(SymbolicProvenance(kind))
                    decoys.append(None if detail == 0
                                  else SetFunction(detail - 1))
                except ValueError as exc:
                    raise ContainerFormatError(f"candidate {j}: {exc}",
                                               offset=base + 4 + 2 * j) from None
            flat = np.frombuffer(buf, dtype="<i2", offset=pos).astype(np.int64)
            m = set_size * dims
            problems.append(SymbolicProblem(
                function=function, source_dim=source_dim,
                target_dim=target_dim,
                source_set=flat[:m].reshape(set_size, dims),
                source_answer=flat[m:m + dims],
                target_set=flat[m + dims:2 * m + dims].reshape(set_size, dims),
                candidates=flat[2 * m + dims:].reshape(cc, dims),
                provenances=tuple(provenances), decoy_functions=tuple(decoys),
                answer_index=answer_index))
        if f.read(1):
            raise ContainerFormatError("trailing bytes after last record",
                                       offset=body_start + count * record)
    return header, problems


def export_symbolic_jsonl(problems, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in problems:
            row = {
                "function": p.function.name,
                "source_dim": p.source_dim,
                "target_dim": p.target_dim,
                "answer_index": p.answer_index,
                "source_set": np.asarray(p.source_set).tolist(),
                "source_answer": np.asarray(p.source_answer).tolist(),
                "target_set": np.asarray(p.target_set).tolist(),
                "candidates": np.asarray(p.candidates).tolist(),
                "provenances": [k.name for k in p.provenances],
                "decoy_functions": [None if d is None else d.name
                                    for d in p.decoy_functions],
            }
            f.write(json.dumps(row) + "\n")
