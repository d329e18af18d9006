import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from analogylab.raster import (BACKGROUND, INK, SIDES, Bitmap,
                               bitmap_from_bytes, export_graymap, grey_level,
                               import_graymap, line_band, line_type_mask,
                               render_panel)
from analogylab.scene import VALUE_MAX, VALUE_MIN, DomainKind, PanelContent
from raster_decode import count_blobs, decode_values

MULTI_DOMAINS = [d for d in DomainKind if d != DomainKind.SHAPE_QUANTITY]


def panels(domain=None):
    domains = st.sampled_from(MULTI_DOMAINS if domain is None else [domain])

    def build(d, seed, draw_values):
        if d == DomainKind.SHAPE_QUANTITY:
            values = frozenset({draw_values[0]})
        else:
            values = frozenset(draw_values)
        return PanelContent(domain=d, values=values, decoration_seed=seed)

    return st.builds(
        build,
        domains,
        st.integers(min_value=0, max_value=2**64 - 1),
        st.lists(st.integers(VALUE_MIN, VALUE_MAX), min_size=1, max_size=10,
                 unique=True),
    )


class TestRoundTrip:
    @settings(max_examples=150, deadline=None)
    @given(panels(), st.sampled_from(SIDES))
    def test_decode_recovers_values(self, panel, side):
        bitmap = render_panel(panel, side=side)
        assert decode_values(panel.domain, bitmap) == panel.values

    @settings(max_examples=60, deadline=None)
    @given(st.integers(VALUE_MIN, VALUE_MAX),
           st.integers(min_value=0, max_value=2**64 - 1),
           st.sampled_from(SIDES))
    def test_quantity_round_trip(self, n, seed, side):
        panel = PanelContent(domain=DomainKind.SHAPE_QUANTITY,
                             values=frozenset({n}), decoration_seed=seed)
        bitmap = render_panel(panel, side=side)
        assert decode_values(panel.domain, bitmap) == frozenset({n})

    @settings(max_examples=100, deadline=None)
    @given(panels(), st.sampled_from(SIDES))
    def test_background_dominates(self, panel, side):
        assert render_panel(panel, side=side).background_fraction() > 0.30

    def test_background_holds_at_full_load(self):
        # every value present is the worst case for ink coverage
        for side in SIDES:
            for domain in MULTI_DOMAINS:
                panel = PanelContent(domain=domain,
                                     values=frozenset(range(1, 11)),
                                     decoration_seed=3)
                frac = render_panel(panel, side=side).background_fraction()
                assert frac > 0.30, (domain, side, frac)

    @settings(max_examples=60, deadline=None)
    @given(panels(), st.sampled_from(SIDES))
    def test_rendering_is_pure(self, panel, side):
        a = render_panel(panel, side=side)
        b = render_panel(panel, side=side)
        assert np.array_equal(a.pixels, b.pixels)

    @settings(max_examples=60, deadline=None)
    @given(panels(), st.integers(min_value=0, max_value=2**64 - 1))
    def test_decoration_never_changes_decoded_values(self, panel, seed):
        redecorated = PanelContent(domain=panel.domain, values=panel.values,
                                   decoration_seed=seed)
        bitmap = render_panel(redecorated, side=40)
        assert decode_values(panel.domain, bitmap) == panel.values


class TestQuantity:
    def test_three_discs_make_three_blobs(self):
        panel = PanelContent(domain=DomainKind.SHAPE_QUANTITY,
                             values=frozenset({3}), decoration_seed=0)
        assert count_blobs(render_panel(panel, side=80)) == 3

    @settings(max_examples=30, deadline=None)
    @given(st.integers(VALUE_MIN, VALUE_MAX))
    def test_blob_count_matches_value(self, n):
        panel = PanelContent(domain=DomainKind.SHAPE_QUANTITY,
                             values=frozenset({n}), decoration_seed=9)
        assert count_blobs(render_panel(panel, side=80)) == n

    def test_multi_value_quantity_rejected(self):
        panel = PanelContent(domain=DomainKind.SHAPE_QUANTITY,
                             values=frozenset({2, 5}), decoration_seed=0)
        with pytest.raises(ValueError):
            render_panel(panel, side=80)


class TestGreys:
    def test_grey_formula(self):
        assert grey_level(1) == 230
        assert grey_level(10) == 5

    def test_shape_colour_pixels_carry_value(self):
        panel = PanelContent(domain=DomainKind.SHAPE_COLOUR,
                             values=frozenset({4}), decoration_seed=1)
        pixels = render_panel(panel, side=80).pixels
        assert set(np.unique(pixels)) == {grey_level(4), BACKGROUND}

    def test_line_colour_pixels_carry_value(self):
        panel = PanelContent(domain=DomainKind.LINE_COLOUR,
                             values=frozenset({7}), decoration_seed=1)
        pixels = render_panel(panel, side=40).pixels
        assert set(np.unique(pixels)) == {grey_level(7), BACKGROUND}


class TestLineStrokes:
    @pytest.mark.parametrize("side", SIDES)
    def test_strokes_stay_inside_their_band(self, side):
        for k in range(1, 11):
            mask = line_type_mask(k, side)
            ys = np.nonzero(mask)[0]
            assert ys.size > 0
            y0, band_h = line_band(k, side)
            assert ys.min() >= y0
            assert ys.max() < y0 + band_h

    @pytest.mark.parametrize("side", SIDES)
    def test_strokes_are_pairwise_distinct(self, side):
        # compare shapes band-locally so band offsets cannot hide equality
        local = []
        for k in range(1, 11):
            y0, band_h = line_band(k, side)
            local.append(line_type_mask(k, side)[y0:y0 + band_h])
        for i in range(10):
            for j in range(i + 1, 10):
                assert not np.array_equal(local[i], local[j]), (i + 1, j + 1)


class TestBitmapFormat:
    def test_unsupported_side_rejected(self):
        panel = PanelContent(domain=DomainKind.SHAPE_POSITION,
                             values=frozenset({1}), decoration_seed=0)
        with pytest.raises(ValueError, match="unsupported side"):
            render_panel(panel, side=64)

    def test_graymap_round_trip(self, tmp_path):
        panel = PanelContent(domain=DomainKind.SHAPE_TYPE,
                             values=frozenset({2, 9}), decoration_seed=11)
        bitmap = render_panel(panel, side=80)
        path = tmp_path / "panel.pgm"
        export_graymap(bitmap, path)
        assert path.read_bytes().startswith(b"P5 80 80 255\n")
        again = import_graymap(path)
        assert again.side == 80
        assert np.array_equal(again.pixels, bitmap.pixels)

    def test_graymap_rejects_truncation(self, tmp_path):
        panel = PanelContent(domain=DomainKind.SHAPE_POSITION,
                             values=frozenset({5}), decoration_seed=0)
        path = tmp_path / "panel.pgm"
        export_graymap(render_panel(panel, side=40), path)
        path.write_bytes(path.read_bytes()[:-7])
        with pytest.raises(ValueError):
            import_graymap(path)

    def test_bytes_round_trip(self):
        panel = PanelContent(domain=DomainKind.LINE_TYPE,
                             values=frozenset({3, 6}), decoration_seed=4)
        bitmap = render_panel(panel, side=40)
        assert bitmap_from_bytes(bitmap.tobytes(), 40).pixels.tolist() \
            == bitmap.pixels.tolist()

    def test_ink_and_background_codes(self):
        assert INK == 0
        assert BACKGROUND == 255
        panel = PanelContent(domain=DomainKind.SHAPE_POSITION,
                             values=frozenset({1, 10}), decoration_seed=0)
        pixels = render_panel(panel, side=40).pixels
        assert set(np.unique(pixels)) == {INK, BACKGROUND}
        assert pixels.dtype == np.uint8

    def test_blank_bitmap_is_all_background(self):
        bitmap = Bitmap.blank(40)
        assert (bitmap.pixels == BACKGROUND).all()
        assert bitmap.background_fraction() == 1.0
