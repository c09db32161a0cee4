import math

import pytest
from hypothesis import given, strategies as st

from metasense.geometry import (
    BeamProfile,
    CellGeometry,
    PlateGeometry,
    beam_profile,
    cell_stroke,
    sample_profile,
)


class TestBeamProfile:
    @pytest.mark.parametrize("s, expected", [(0.0, 0.0), (4.5, 4.0), (9.0, 8.0)])
    def test_examples(self, s, expected):
        assert beam_profile(BeamProfile(), s) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("s", [-0.1, 9.01])
    def test_out_of_domain(self, s):
        with pytest.raises(ValueError):
            beam_profile(BeamProfile(), s)

    @pytest.mark.parametrize("kw", [dict(h=0), dict(l=-1), dict(s_max=0), dict(s_max=19)])
    def test_invalid_profile(self, kw):
        with pytest.raises(ValueError):
            BeamProfile(**kw)

    def test_apex_at_half_wavelength(self):
        p = BeamProfile(h=3.0, l=10.0, s_max=5.0)
        assert beam_profile(p, 5.0) == 3.0

    @given(st.floats(0, 9), st.floats(0, 9))
    def test_monotone_on_default_domain(self, a, b):
        lo, hi = sorted((a, b))
        p = BeamProfile()
        assert beam_profile(p, lo) <= beam_profile(p, hi) + 1e-12


class TestSampleProfile:
    def test_two_points(self):
        assert sample_profile(BeamProfile(), 2) == [(0.0, 0.0), (9.0, 8.0)]

    def test_three_points(self):
        pts = sample_profile(BeamProfile(), 3)
        assert pts[1][0] == 4.5
        assert pts[1][1] == pytest.approx(4.0)

    def test_too_few(self):
        with pytest.raises(ValueError):
            sample_profile(BeamProfile(), 1)

    @given(st.integers(2, 400))
    def test_ordered_and_bounded(self, n):
        pts = sample_profile(BeamProfile(), n)
        assert len(pts) == n and pts[0] == (0.0, 0.0)
        s = [p[0] for p in pts]
        assert all(b > a for a, b in zip(s, s[1:]))
        assert s[-1] == 9.0
        assert all(0.0 <= p[1] <= 8.0 for p in pts)


class TestPlates:
    def test_stroke_default(self):
        assert cell_stroke(PlateGeometry()) == pytest.approx(14.8)

    def test_unit_stroke(self):
        assert cell_stroke(PlateGeometry(gap_closed=0.5, gap_open=1.5)) == pytest.approx(1.0)

    def test_area(self):
        assert PlateGeometry().area == pytest.approx(3.8 * 7.3)

    @pytest.mark.parametrize("kw", [dict(gap_open=0.4), dict(gap_open=0.5), dict(width=0.0),
                                    dict(plate_thickness=-1.0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            PlateGeometry(**kw)

    def test_cell_geometry(self):
        assert CellGeometry().thickness == 7.0
        with pytest.raises(ValueError):
            CellGeometry(thickness=0.0)

    def test_profile_formula(self):
        p = BeamProfile()
        s = 2.0
        assert beam_profile(p, s) == pytest.approx(4.0 * (1 - math.cos(2 * math.pi * s / 18)))
