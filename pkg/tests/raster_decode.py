"""Test-side decoder: reads a panel's value set back out of its bitmap.

Lives with the tests on purpose; production code never decodes pixels.
"""

import numpy as np

from analogylab.raster import (BACKGROUND, INK, TYPE_GLYPHS, anchor_box,
                               anchor_center, line_band)
from analogylab.scene import DomainKind


def _anchor_window(pixels, index, side, h, w):
    cy, cx = anchor_center(index, side)
    return pixels[cy - h // 2:cy - h // 2 + h, cx - w // 2:cx - w // 2 + w]


def decode_values(domain: DomainKind, bitmap) -> frozenset:
    side = bitmap.side
    px = bitmap.pixels
    out = set()

    if domain == DomainKind.SHAPE_POSITION:
        for k in range(1, 11):
            if (_anchor_window(px, k - 1, side, 6, 6) == INK).all():
                out.add(k)
    elif domain == DomainKind.SHAPE_QUANTITY:
        n = sum((px[anchor_center(i, side)] == INK) for i in range(10))
        out.add(int(n))
    elif domain == DomainKind.SHAPE_COLOUR:
        for i in range(10):
            window = _anchor_window(px, i, side, 6, 6)
            g = window[0, 0]
            if g != BACKGROUND and (window == g).all():
                out.add((255 - int(g)) // 25)
    elif domain == DomainKind.LINE_COLOUR:
        for k in range(1, 11):
            y0, band_h = line_band(k, side)
            mid = y0 + band_h // 2
            row = px[mid, 2:side - 2]
            if (row != BACKGROUND).all():
                assert (row == 255 - 25 * k).all()
                out.add(k)
    elif domain == DomainKind.SHAPE_SIZE:
        for i in range(10):
            y, x, h, w = anchor_box(i, side)
            ys = np.nonzero(px[y:y + h, x:x + w] == INK)[0]
            if ys.size:
                out.add(int(ys.max() - ys.min() + 1) - 2)
    elif domain == DomainKind.SHAPE_TYPE:
        for i in range(10):
            window = _anchor_window(px, i, side, 5, 5)
            if (window == BACKGROUND).all():
                continue
            for k, glyph in enumerate(TYPE_GLYPHS, start=1):
                if (window == np.where(glyph, INK, BACKGROUND)).all():
                    out.add(k)
                    break
            else:
                raise AssertionError(f"anchor {i}: unrecognized glyph")
    elif domain == DomainKind.LINE_TYPE:
        for k in range(1, 11):
            y0, band_h = line_band(k, side)
            if (px[y0:y0 + band_h] == INK).any():
                out.add(k)
    else:
        raise ValueError(f"unknown domain {domain!r}")
    return frozenset(out)


def count_blobs(bitmap) -> int:
    """4-connected components of ink, by flood fill."""
    ink = bitmap.pixels != BACKGROUND
    seen = np.zeros_like(ink)
    count = 0
    for sy, sx in zip(*np.nonzero(ink)):
        if seen[sy, sx]:
            continue
        count += 1
        stack = [(sy, sx)]
        seen[sy, sx] = True
        while stack:
            y, x = stack.pop()
            for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                if 0 <= ny < ink.shape[0] and 0 <= nx < ink.shape[1] \
                        and ink[ny, nx] and not seen[ny, nx]:
                    seen[ny, nx] = True
                    stack.append((ny, nx))
    return count
