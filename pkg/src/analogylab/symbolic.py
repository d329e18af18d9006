"""Symbolic analogy problems over sets of sparse integer vectors.

A problem presents a source set of ``set_size`` vectors that are zero except
in one dimension, the answer a set function produces on that dimension, a
target set on a different dimension, and candidate answer vectors. Exactly
one candidate is the function's value on the target dimension; the rest are
decoys whose construction strategy is the experimental variable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import UnsatisfiableQuestionError

VALUE_RANGE = 64      # stimulus entries are integers in [0, VALUE_RANGE)
SET_SIZE = 8
INPUT_SCALE = 1.0 / VALUE_RANGE


class SetFunction(enum.IntEnum):
    MIN = 0
    MAX = 1
    ARGMIN = 2
    ARGMAX = 3
    SUM = 4
    RANGE = 5


class SymbolicProvenance(enum.IntEnum):
    CORRECT = 0
    FUNCTION_DECOY = 1
    RANDOM = 2
    GENERATED = 3


class CandidateStrategy(enum.Enum):
    """How incorrect candidates are built when sampling a problem."""
    EXPLICIT = "explicit"    # value of a rival set function on the target set
    RANDOM = "random"        # uniform values, optionally avoiding all functions


def apply_set_function(function: SetFunction, values: np.ndarray, dim: int) -> int:
    """Evaluate one set function on column ``dim`` of an (m, D) value matrix.

    ARGMIN/ARGMAX return the 0-based row index of the first occurrence.
    """
    col = values[:, dim]
    if function == SetFunction.MIN:
        return int(col.min())
    if function == SetFunction.MAX:
        return int(col.max())
    if function == SetFunction.ARGMIN:
        return int(col.argmin())
    if function == SetFunction.ARGMAX:
        return int(col.argmax())
    if function == SetFunction.SUM:
        return int(col.sum())
    if function == SetFunction.RANGE:
        return int(col.max() - col.min())
    raise ValueError(f"unknown set function {function!r}")


def make_answer_vector(function: SetFunction, values: np.ndarray, dim: int,
                       dims: int) -> np.ndarray:
    """A D-vector that is zero everywhere except the function value at ``dim``."""
    out = np.zeros(dims, dtype=np.int64)
    out[dim] = apply_set_function(function, values, dim)
    return out


@dataclass(eq=False)
class SymbolicProblem:
    function: SetFunction
    source_dim: int
    target_dim: int
    source_set: np.ndarray        # (set_size, dims) ints
    source_answer: np.ndarray     # (dims,) ints
    target_set: np.ndarray        # (set_size, dims) ints
    candidates: np.ndarray        # (candidate_count, dims); ints unless generated
    provenances: tuple
    decoy_functions: tuple        # per candidate: SetFunction or None
    answer_index: int

    @property
    def dims(self) -> int:
        return self.source_set.shape[1]


@dataclass(frozen=True)
class TransferSplit:
    """Partition of the ordered dimension pairs (source != target)."""
    dims: int
    train_pairs: tuple
    test_pairs: tuple


def build_symbolic_split(dims: int, holdout_fraction: float,
                         master_seed: int) -> TransferSplit:
    """Hold out a fraction of the ordered (source, target) dimension pairs.

    Every dimension keeps at least one training pair as source and one as
    target; the holdout is resampled (seeded) until that coverage holds.
    """
    if not 0.0 <= holdout_fraction < 1.0:
        raise ValueError("holdout_fraction must be in [0, 1)")
    pairs = [(s, t) for s in range(dims) for t in range(dims) if s != t]
    n_hold = round(holdout_fraction * len(pairs))
    if len(pairs) - n_hold < 2 * dims and n_hold > 0:
        raise ValueError("holdout_fraction too large to keep per-dimension coverage")
    rng = np.random.default_rng(np.random.SeedSequence([master_seed, 0x5eed]))
    for _ in range(1000):
        idx = rng.choice(len(pairs), size=n_hold, replace=False)
        held = {pairs[i] for i in idx}
        train = [p for p in pairs if p not in held]
        sources = {s for s, _ in train}
        targets = {t for _, t in train}
        if len(sources) == dims and len(targets) == dims:
            return TransferSplit(dims, tuple(sorted(train)), tuple(sorted(held)))
    raise UnsatisfiableQuestionError("could not sample a covering holdout")


def _explicit_candidates(function: SetFunction, target_set: np.ndarray,
                         target_dim: int, n: int, rng: np.random.Generator):
    """Decoy values from rival set functions, or None when too many collide."""
    correct = apply_set_function(function, target_set, target_dim)
    rivals = [f for f in SetFunction if f != function]
    order = rng.permutation(len(rivals))
    values, used = [], []
    seen = {correct}
    for i in order:
        f = rivals[i]
        v = apply_set_function(f, target_set, target_dim)
        if v in seen:
            continue
        seen.add(v)
        values.append(v)
        used.append(f)
        if len(values) == n:
            return values, used
    return None


def _random_values(n: int, rng: np.random.Generator, excluded: set) -> list:
    values: list = []
    tries = 0
    while len(values) < n:
        v = int(rng.integers(0, VALUE_RANGE))
        tries += 1
        if tries > 1000:
            raise UnsatisfiableQuestionError("candidate value space exhausted")
        if v in excluded or v in values:
            continue
        values.append(v)
    return values


def all_function_values(target_set: np.ndarray, target_dim: int) -> set:
    return {apply_set_function(f, target_set, target_dim) for f in SetFunction}


def sample_problem(pairs, rng: np.random.Generator, *, dims: int = 16,
                   set_size: int = SET_SIZE, candidate_count: int = 4,
                   strategy: CandidateStrategy = CandidateStrategy.EXPLICIT,
                   exclude_known_functions: bool = False,
                   max_retries: int = 32) -> SymbolicProblem:
    """Draw one problem whose (source, target) dimension pair comes from ``pairs``."""
    function = SetFunction(int(rng.integers(0, len(SetFunction))))
    s_dim, t_dim = pairs[int(rng.integers(0, len(pairs)))]
    source_set = np.zeros((set_size, dims), dtype=np.int64)
    source_set[:, s_dim] = rng.integers(0, VALUE_RANGE, size=set_size)
    source_answer = make_answer_vector(function, source_set, s_dim, dims)

    for _ in range(max_retries):
        target_set = np.zeros((set_size, dims), dtype=np.int64)
        target_set[:, t_dim] = rng.integers(0, VALUE_RANGE, size=set_size)
        correct_value = apply_set_function(function, target_set, t_dim)
        n_decoys = candidate_count - 1
        if strategy == CandidateStrategy.EXPLICIT:
            got = _explicit_candidates(function, target_set, t_dim, n_decoys, rng)
            if got is None:
                continue
            decoy_values, decoy_functions = got
            provs = [SymbolicProvenance.FUNCTION_DECOY] * n_decoys
        else:
            excluded = {correct_value}
            if exclude_known_functions:
                excluded |= all_function_values(target_set, t_dim)
            decoy_values = _random_values(n_decoys, rng, excluded)
            decoy_functions = [None] * n_decoys
            provs = [SymbolicProvenance.RANDOM] * n_decoys
        answer_index = int(rng.integers(0, candidate_count))
        candidates = np.zeros((candidate_count, dims), dtype=np.int64)
        provenances = []
        functions: list = []
        di = 0
        for slot in range(candidate_count):
            if slot == answer_index:
                candidates[slot, t_dim] = correct_value
                provenances.append(SymbolicProvenance.CORRECT)
                functions.append(None)
            else:
                candidates[slot, t_dim] = decoy_values[di]
                provenances.append(provs[di])
                functions.append(decoy_functions[di])
                di += 1
        return SymbolicProblem(
            function=function, source_dim=s_dim, target_dim=t_dim,
            source_set=source_set, source_answer=source_answer,
            target_set=target_set, candidates=candidates,
            provenances=tuple(provenances), decoy_functions=tuple(functions),
            answer_index=answer_index)
    raise UnsatisfiableQuestionError(
        f"no candidate assignment for {function.name} after {max_retries} retries")


def generate_problems(pairs, count: int, master_seed: int, **kwargs) -> list:
    """Independently seeded problems; problem i depends only on (seed, i)."""
    out = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([master_seed, i]))
        out.append(sample_problem(pairs, rng, **kwargs))
    return out


# Angular frequency of the fine value features: one full turn per 8 integer
# steps at the 1/64 value scale. Adjacent integers land a quarter turn apart,
# so sub-1/64 value differences become order-one feature differences.
FINE_OMEGA = 16.0 * np.pi


def value_features(scaled: np.ndarray):
    """(sin, cos-1) of the fine angle; both blocks are zero at value zero."""
    angle = FINE_OMEGA * scaled
    return np.sin(angle), np.cos(angle) - 1.0


def value_feature_grad(scaled: np.ndarray, dsin: np.ndarray,
                       dcos: np.ndarray) -> np.ndarray:
    """Chain upstream gradients on both feature blocks back to the values."""
    angle = FINE_OMEGA * scaled
    return FINE_OMEGA * (dsin * np.cos(angle) - dcos * np.sin(angle))


# Gain of the coarse value copy: one eighth per integer step, so magnitude
# order stays numerically prominent next to the order-one periodic features
# while the bare 1/64 block keeps the absolute scale available.
COARSE_GAIN = 8.0


def object_dim(dims: int) -> int:
    """Columns per encoded object row; see ``problem_objects``."""
    return 4 * dims + 5


def write_value_block(rows: np.ndarray, scaled: np.ndarray, dims: int) -> None:
    rows[..., :dims] = scaled
    rows[..., dims:2 * dims] = COARSE_GAIN * scaled
    sin, cos = value_features(scaled)
    rows[..., 2 * dims:3 * dims] = sin
    rows[..., 3 * dims:4 * dims] = cos


def problem_objects(problem: SymbolicProblem):
    """Encode one problem as model objects.

    Context rows: the 8 source vectors, the source answer, then the 8 target
    vectors. Each row is laid out as

        [0:D)     values scaled by 1/64
        [D:2D)    the same values on an eightfold coarser gain
        [2D:4D)   fine periodic features (sin, cos-1) of the values
        4D        row position within its set, on the same 1/64 scale
        4D+1,4D+2 the same periodic features of the position
        4D+3      side marker (0 source, 1 target)
        4D+4      role marker (0 set member, 1 answer slot)

    Candidates are encoded like answer slots on the target side. The role
    marker separates a MIN or MAX answer from the value-identical set row it
    duplicates; the position columns share the value scale so index-valued
    answers can be checked against row positions directly; the periodic
    features give neighbouring integers order-one separation that the bare
    1/64 scale does not, and the coarse copy keeps value order visible at
    the same magnitude.
    """
    dims = problem.dims
    m = problem.source_set.shape[0]
    d4 = 4 * dims
    pos = np.arange(m, dtype=np.float32) * INPUT_SCALE
    pos_sin, pos_cos = value_features(pos)
    ctx = np.zeros((2 * m + 1, object_dim(dims)), dtype=np.float32)
    for rows, block in ((ctx[:m], problem.source_set),
                        (ctx[m + 1:], problem.target_set)):
        write_value_block(rows, np.asarray(block, dtype=np.float32)
                           * INPUT_SCALE, dims)
        rows[:, d4] = pos
        rows[:, d4 + 1] = pos_sin
        rows[:, d4 + 2] = pos_cos
    write_value_block(ctx[m], np.asarray(problem.source_answer,
                                          dtype=np.float32) * INPUT_SCALE, dims)
    ctx[m, d4 + 4] = 1.0
    ctx[m + 1:, d4 + 3] = 1.0
    cands = np.zeros((problem.candidates.shape[0], object_dim(dims)),
                     dtype=np.float32)
    write_value_block(cands, np.asarray(problem.candidates, dtype=np.float32)
                       * INPUT_SCALE, dims)
    cands[:, d4 + 3] = 1.0
    cands[:, d4 + 4] = 1.0
    return ctx, cands


def batch_arrays(problems: list):
    """Stack encoded problems -> (ctx (B,n,d), cands (B,K,d), answers (B,))."""
    encoded = [problem_objects(p) for p in problems]
    ctx = np.stack([e[0] for e in encoded])
    cands = np.stack([e[1] for e in encoded])
    answers = np.array([p.answer_index for p in problems], dtype=np.int64)
    return ctx, cands, answers
