"""Deterministic panel rendering to square greyscale bitmaps.

Geometry is anchored to a 5x2 cell grid (10 anchor cells, one per value).
Each domain realizes its value set so that a test-side decoder can read the
values back exactly:

  ShapePosition   6x6 black square in each occupied anchor cell
  ShapeQuantity   n discs on the first n anchors (value = count)
  ShapeColour     one 6x6 square per value, interior grey 255-25k
  LineColour      one full-width 2px line per value at band k, grey 255-25k
  ShapeSize       one 5px-wide black rect per value, height k+2
  ShapeType       one 5x5 glyph stamp per value (10 fixed patterns)
  LineType        one stroke style per value, confined to horizontal band k
                  (horizontal, vertical ticks, rising, falling, cross,
                  zig-zag, arc-up, arc-down, dashed, dotted)

Where the domain leaves placement free (colour, size, type), the panel's
decoration seed picks the anchors; every other attribute is fixed so the
same content always renders the same image. No anti-aliasing anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import DomainKind, PanelContent, SINGLETON_ONLY_DOMAINS

SIDES = (40, 80)
BACKGROUND = 255
INK = 0
GRID_COLS = 5
GRID_ROWS = 2


def grey_level(k: int) -> int:
    return 255 - 25 * k


def anchor_box(index: int, side: int):
    """Top-left corner and size of anchor cell ``index`` (0-based)."""
    cell_w = side // GRID_COLS
    cell_h = side // GRID_ROWS
    row, col = divmod(index, GRID_COLS)
    return row * cell_h, col * cell_w, cell_h, cell_w


def anchor_center(index: int, side: int):
    y, x, h, w = anchor_box(index, side)
    return y + h // 2, x + w // 2


_GLYPH_ROWS = (
    ("#####", "#...#", "#...#", "#...#", "#####"),
    ("#####", "#####", "#####", "#####", "#####"),
    ("..#..", "..#..", "#####", "..#..", "..#.."),
    ("#...#", ".#.#.", "..#..", ".#.#.", "#...#"),
    ("#####", "..#..", "..#..", "..#..", "..#.."),
    ("#....", "#....", "#....", "#....", "#####"),
    ("#...#", "#...#", "#####", "#...#", "#...#"),
    ("..#..", ".#.#.", "#...#", ".#.#.", "..#.."),
    ("#####", ".....", "#####", ".....", "#####"),
    ("#.#.#", ".#.#.", "#.#.#", ".#.#.", "#.#.#"),
)

# glyph k-1 stamps shape type k; patterns are pairwise distinct
TYPE_GLYPHS = tuple(
    np.array([[c == "#" for c in row] for row in rows], dtype=bool)
    for rows in _GLYPH_ROWS)

def _disc_mask(radius: int) -> np.ndarray:
    span = np.arange(-radius, radius + 1)
    yy, xx = np.meshgrid(span, span, indexing="ij")
    return (yy * yy + xx * xx) <= radius * radius


_DISC = _disc_mask(3)


@dataclass(frozen=True)
class Bitmap:
    side: int
    pixels: np.ndarray      # (side, side) uint8, 0 ink, 255 background

    @classmethod
    def blank(cls, side: int) -> "Bitmap":
        return cls(side, np.full((side, side), BACKGROUND, dtype=np.uint8))

    def background_fraction(self) -> float:
        return float((self.pixels == BACKGROUND).mean())

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()


def bitmap_from_bytes(buffer: bytes, side: int) -> Bitmap:
    if len(buffer) != side * side:
        raise ValueError(f"buffer length {len(buffer)} != {side}x{side}")
    return Bitmap(side, np.frombuffer(buffer, dtype=np.uint8)
                  .reshape(side, side).copy())


def _check_panel(p: PanelContent) -> None:
    if not p.values or not all(1 <= v <= 10 for v in p.values):
        raise ValueError(f"invalid panel values {sorted(p.values)}")
    if p.domain in SINGLETON_ONLY_DOMAINS and len(p.values) != 1:
        raise ValueError(f"{p.domain.name} panel needs a single value")


def _decoration_anchors(p: PanelContent, count: int) -> list:
    """Anchor indices for the panel's glyphs, chosen by decoration seed."""
    rng = np.random.default_rng(
        np.random.SeedSequence([p.decoration_seed, int(p.domain)]))
    return [int(i) for i in rng.choice(10, size=count, replace=False)]


def _stamp(canvas: np.ndarray, mask: np.ndarray, cy: int, cx: int,
           value: int = INK) -> None:
    h, w = mask.shape
    y0, x0 = cy - h // 2, cx - w // 2
    region = canvas[y0:y0 + h, x0:x0 + w]
    region[mask] = value


def line_band(k: int, side: int):
    """Row span of value k's horizontal band (1-based k)."""
    band_h = side // 10
    y0 = (k - 1) * band_h
    return y0, band_h


def line_type_mask(k: int, side: int) -> np.ndarray:
    """Ink mask of stroke style k (1-based) inside its own band."""
    y0, band_h = line_band(k, side)
    t = max(1, band_h // 4)
    margin = 2
    mask = np.zeros((side, side), dtype=bool)
    xs = np.arange(margin, side - margin)
    mid = y0 + band_h // 2
    span = band_h - 2 - t            # vertical travel for slanted styles
    u = (xs - xs[0]) / max(1, xs[-1] - xs[0])

    def draw_curve(y_off):
        for x, yo in zip(xs, y_off):
            yy = y0 + 1 + int(yo)
            mask[yy:yy + t, x] = True

    if k == 1:                                        # horizontal
        mask[mid:mid + t, xs] = True
    elif k == 2:                                      # vertical ticks
        cols = xs[(xs % (2 * band_h)) < t]
        mask[y0 + 1:y0 + band_h - 1, cols] = True
    elif k == 3:                                      # rising diagonal
        draw_curve(span * (1.0 - u))
    elif k == 4:                                      # falling diagonal
        draw_curve(span * u)
    elif k == 5:                                      # cross
        draw_curve(span * (1.0 - u))
        draw_curve(span * u)
    elif k == 6:                                      # zig-zag
        period = 2 * band_h
        tri = np.abs((xs % period) - period / 2) / (period / 2)
        draw_curve(span * tri)
    elif k == 7:                                      # arc up
        draw_curve(span * (1.0 - 4.0 * u * (1.0 - u)))
    elif k == 8:                                      # arc down
        draw_curve(span * 4.0 * u * (1.0 - u))
    elif k == 9:                                      # dashed
        cols = xs[(xs // band_h) % 2 == 0]
        mask[mid:mid + t, cols] = True
    elif k == 10:                                     # dotted
        cols = xs[(xs % (3 * t + 1)) < t]
        mask[mid:mid + t, cols] = True
    else:
        raise ValueError(f"no stroke style {k}")
    return mask


def render_panel(p: PanelContent, side: int = 80) -> Bitmap:
    """Render one panel; pure in (panel, side)."""
    if side not in SIDES:
        raise ValueError(f"unsupported side {side}; choose from {SIDES}")
    _check_panel(p)
    canvas = np.full((side, side), BACKGROUND, dtype=np.uint8)
    values = sorted(p.values)
    d = p.domain

    if d == DomainKind.SHAPE_POSITION:
        square = np.ones((6, 6), dtype=bool)
        for k in values:
            _stamp(canvas, square, *anchor_center(k - 1, side))
    elif d == DomainKind.SHAPE_QUANTITY:
        (n,) = values
        for i in range(n):
            _stamp(canvas, _DISC, *anchor_center(i, side))
    elif d == DomainKind.SHAPE_COLOUR:
        square = np.ones((6, 6), dtype=bool)
        for k, a in zip(values, _decoration_anchors(p, len(values))):
            _stamp(canvas, square, *anchor_center(a, side), grey_level(k))
    elif d == DomainKind.LINE_COLOUR:
        for k in values:
            y0, band_h = line_band(k, side)
            mid = y0 + band_h // 2
            canvas[mid:mid + 2, 2:side - 2] = grey_level(k)
    elif d == DomainKind.SHAPE_SIZE:
        for k, a in zip(values, _decoration_anchors(p, len(values))):
            rect = np.ones((k + 2, 5), dtype=bool)
            _stamp(canvas, rect, *anchor_center(a, side))
    elif d == DomainKind.SHAPE_TYPE:
        for k, a in zip(values, _decoration_anchors(p, len(values))):
            _stamp(canvas, TYPE_GLYPHS[k - 1], *anchor_center(a, side))
    elif d == DomainKind.LINE_TYPE:
        for k in values:
            canvas[line_type_mask(k, side)] = INK
    else:
        raise ValueError(f"unknown domain {d!r}")
    return Bitmap(side, canvas)


def export_graymap(b: Bitmap, path) -> None:
    """Write a binary portable graymap (P5, maxval 255)."""
    with open(path, "wb") as fh:
        fh.write(f"P5 {b.side} {b.side} 255\n".encode("ascii"))
        fh.write(b.tobytes())


def import_graymap(path) -> Bitmap:
    import re

    with open(path, "rb") as fh:
        data = fh.read()
    # exactly one whitespace byte separates the header from the pixels, and
    # pixel bytes may themselves look like whitespace, so never split those
    head = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)[ \t\r\n]", data)
    if head is None:
        raise ValueError(f"{path}: not a P5 graymap")
    width, height, maxval = (int(x) for x in head.groups())
    if width != height or width not in SIDES or maxval != 255:
        raise ValueError(f"{path}: unsupported graymap geometry")
    buffer = data[head.end():]
    if len(buffer) != width * height:
        raise ValueError(f"{path}: truncated pixel data")
    return bitmap_from_bytes(buffer, width)
