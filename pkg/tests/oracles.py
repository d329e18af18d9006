"""Independent brute-force reference implementations used by the tests.

Everything here works on 10-bit value masks with vectorized integer ops, a
deliberately different representation and algorithm from the product code's
set arithmetic, so agreement between the two is meaningful.
"""

import numpy as np

# every non-empty value set as a mask, ascending
MASKS = np.arange(1, 1024, dtype=np.int64)


def holds_masks(code: int, m1, m2, m3):
    """Vectorized relation truth over mask triples.

    code: 0 progression, 1 xor, 2 or, 3 and. Arguments broadcast lazily, so
    column-against-row calls stay cheap.
    """
    m1 = np.asarray(m1, dtype=np.int64)
    m2 = np.asarray(m2, dtype=np.int64)
    m3 = np.asarray(m3, dtype=np.int64)
    nonempty = (m1 != 0) & (m2 != 0) & (m3 != 0)
    if code == 0:
        single = ((np.bitwise_count(m1) == 1) & (np.bitwise_count(m2) == 1)
                  & (np.bitwise_count(m3) == 1))
        # for a power of two, popcount(m - 1) is the bit index; non-single
        # masks produce garbage indices that `single` masks out
        a = np.bitwise_count(m1 - 1).astype(np.int16)
        b = np.bitwise_count(m2 - 1).astype(np.int16)
        c = np.bitwise_count(m3 - 1).astype(np.int16)
        step = b - a
        return (nonempty & single & (step == c - b)
                & ((step == 1) | (step == 2)))
    if code == 1:
        return nonempty & (m3 == (m1 ^ m2))
    if code == 2:
        union = m1 | m2
        return nonempty & ((m3 & union) == union)
    if code == 3:
        inter = m1 & m2
        return nonempty & ((m3 | inter) == inter)
    raise ValueError(f"unknown relation code {code}")


def completion_matrix(code: int, m1, m2, allowed_mask: int = 0x3FF):
    """Boolean matrix (prefixes, 1023): which masks finish each prefix."""
    m1 = np.asarray(m1, dtype=np.int64)[:, None]
    m2 = np.asarray(m2, dtype=np.int64)[:, None]
    ok = holds_masks(code, m1, m2, MASKS[None, :])
    ok &= (MASKS[None, :] & ~allowed_mask) == 0
    return ok


def set_to_mask(values) -> int:
    mask = 0
    for v in values:
        mask |= 1 << (v - 1)
    return mask


def sorted_completion_masks(completions) -> np.ndarray:
    return np.sort(np.array([set_to_mask(c) for c in completions],
                            dtype=np.int64))


def exhaustive_completion_mismatches(relation, domain, complete_fn,
                                     allowed_mask: int = 0x3FF,
                                     chunk: int = 16) -> int:
    """Count prefixes where complete_fn disagrees with the mask oracle,
    over every ordered pair of non-empty value sets."""
    from analogylab.scene import mask_values, values_mask

    sets = [mask_values(int(m)) for m in MASKS]
    allowed = mask_values(allowed_mask)
    bad = 0
    for lo in range(0, len(MASKS), chunk):
        block = MASKS[lo:lo + chunk]
        m1 = np.repeat(block, len(MASKS))
        m2 = np.tile(MASKS, len(block))
        ok = completion_matrix(int(relation), m1, m2, allowed_mask)
        counts = ok.sum(axis=1)
        starts = np.concatenate(([0], np.cumsum(counts)))
        # nonzero walks row-major, so each row's completion masks sit
        # contiguously in flat, already ascending
        flat = MASKS[np.nonzero(ok)[1]]
        for row in range(ok.shape[0]):
            got = complete_fn(relation, domain,
                              (sets[int(m1[row]) - 1], sets[int(m2[row]) - 1]),
                              allowed)
            if len(got) != counts[row]:
                bad += 1
                continue
            if not counts[row]:
                continue
            expected = flat[starts[row]:starts[row + 1]]
            got_masks = np.sort(np.fromiter(
                (values_mask(c) for c in got), dtype=np.int64, count=len(got)))
            if not np.array_equal(expected, got_masks):
                bad += 1
    return bad
