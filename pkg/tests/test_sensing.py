import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_cells
from metasense.geometry import PlateGeometry
from metasense.mechanics import Direction, initial_state, run_load_program
from metasense.sensing import (
    EPS0,
    G_MIN,
    CapacitorModel,
    channel_capacitance,
    gap_from_displacement,
    ideal_capacitance,
    plate_capacitance,
    sensor_frame,
)

PG = PlateGeometry()
CM = CapacitorModel()


def parallel_plate_pF(gap_mm, area_mm2=3.8 * 7.3):
    """Oracle in SI units."""
    return EPS0 * (area_mm2 * 1e-6) / (gap_mm * 1e-3) * 1e12


class TestGap:
    @pytest.mark.parametrize("x, gap", [(0.0, 0.5), (14.8, 15.3), (-1.0, 0.1)])
    def test_examples(self, x, gap):
        assert gap_from_displacement(PG, x) == pytest.approx(gap)

    def test_model_floor_defaults_to_closed_gap(self):
        assert CM.gap_floor == PG.gap_closed
        assert ideal_capacitance(CM, -1.0) == pytest.approx(ideal_capacitance(CM, 0.0))

    def test_explicit_floor(self):
        cm = CapacitorModel(gap_floor=G_MIN)
        assert ideal_capacitance(cm, -1.0) == pytest.approx(plate_capacitance(cm, 0.1))

    @pytest.mark.parametrize("floor", [0.05, 16.0])
    def test_floor_range(self, floor):
        with pytest.raises(ValueError):
            CapacitorModel(gap_floor=floor)


class TestPlateCapacitance:
    def test_endpoints(self):
        assert plate_capacitance(CM, 0.5) == pytest.approx(0.491, abs=5e-4)
        assert plate_capacitance(CM, 15.3) == pytest.approx(0.0161, abs=5e-5)
        # two-decimal rounding: closed 0.49 pF, open 0.02 pF
        assert round(plate_capacitance(CM, 0.5), 2) == 0.49
        assert round(plate_capacitance(CM, 15.3), 2) == 0.02

    @given(st.floats(0.1, 100.0))
    def test_matches_si_oracle(self, g):
        assert plate_capacitance(CM, g) == pytest.approx(parallel_plate_pF(g), rel=1e-12)

    @given(st.floats(0.1, 50.0))
    def test_doubling_gap_halves(self, g):
        assert plate_capacitance(CM, 2 * g) == pytest.approx(0.5 * plate_capacitance(CM, g), rel=1e-12)

    @given(st.floats(0.1, 50.0), st.floats(0.1, 50.0))
    def test_strictly_decreasing(self, a, b):
        if a != b:
            lo, hi = sorted((a, b))
            assert plate_capacitance(CM, lo) > plate_capacitance(CM, hi)

    def test_below_floor(self):
        with pytest.raises(ValueError):
            plate_capacitance(CM, 0.05)

    def test_permittivity(self):
        assert plate_capacitance(CapacitorModel(eps_r=3.0), 1.0) == pytest.approx(
            3.0 * plate_capacitance(CM, 1.0))


class TestChannels:
    def test_identity_coupling(self):
        cm = CapacitorModel(alpha=0.0, parasitic=0.0)
        x = np.array([0.0, 3.0, 14.8])
        assert channel_capacitance(cm, x) == pytest.approx(ideal_capacitance(cm, x))

    def test_all_closed(self):
        c0 = parallel_plate_pF(0.5)
        frame = sensor_frame(CM, initial_state(make_cells([0, 0, 0, 0])))
        assert frame.capacitance == pytest.approx(np.full(4, c0 + 0.02 * 3 * c0 + 0.05))
        assert np.all(frame.capacitance > 0)

    def test_full_matrix(self):
        m = np.array([[1.0, 0.1], [0.05, 1.0]])
        cm = CapacitorModel(coupling=m, parasitic=0.0)
        x = np.array([0.0, 14.8])
        ideal = ideal_capacitance(cm, x)
        assert channel_capacitance(cm, x) == pytest.approx(m @ ideal)
        with pytest.raises(ValueError):
            channel_capacitance(cm, np.zeros(3))

    @pytest.mark.parametrize("m", [np.eye(2)[:1], [[1.0, 0.5], [0.5, 1.0]], [[0.9, 0.0], [0.0, 1.0]]])
    def test_invalid_matrix(self, m):
        with pytest.raises(ValueError):
            CapacitorModel(coupling=m)

    @pytest.mark.parametrize("kw", [dict(eps_r=0.5), dict(parasitic=-0.1), dict(alpha=0.3)])
    def test_invalid_model(self, kw):
        with pytest.raises(ValueError):
            CapacitorModel(**kw)

    @settings(max_examples=30)
    @given(st.lists(st.floats(-1.0, 16.0), min_size=4, max_size=4),
           st.lists(st.floats(-1.0, 16.0), min_size=4, max_size=4), st.floats(0.0, 3.0))
    def test_linear_in_ideal_values(self, xa, xb, s):
        cm = CapacitorModel(alpha=0.05)
        M = cm.coupling_matrix(4)
        ca, cb = ideal_capacitance(cm, np.array(xa)), ideal_capacitance(cm, np.array(xb))
        lin = lambda c: M @ c + cm.parasitic
        assert lin(ca + s * cb) - cm.parasitic == pytest.approx(
            (lin(ca) - cm.parasitic) + s * (lin(cb) - cm.parasitic))
        assert channel_capacitance(cm, np.array(xa)) == pytest.approx(lin(ca))

    def test_broadcast_over_steps(self):
        x = np.random.default_rng(0).uniform(0, 14.8, (20, 4))
        C = channel_capacitance(CM, x)
        assert C.shape == (20, 4)
        assert C[7] == pytest.approx(channel_capacitance(CM, x[7]))


def test_snapping_channel_has_largest_decrease():
    # at each deployment the snapping cell's plates separate while every other
    # cell is compressed (its channel rises, or stays put on the spacer), so
    # the snapping channel shows the most negative frame-to-frame change
    rng = np.random.default_rng(5)
    for _ in range(3):
        cells = make_cells(rng.normal(0, 0.05, 4))
        trace, events = run_load_program(cells, [4 * 14.8 + 2])
        for alpha in (0.0, 0.02, 0.05, 0.1, 0.2):
            C = channel_capacitance(CapacitorModel(alpha=alpha), trace.x)
            for e in events:
                assert e.direction is Direction.DEPLOY
                dC = C[e.step_index] - C[e.step_index - 1]
                j = e.cell_id - 1
                assert np.argmin(dC) == j
                if alpha <= 0.02:
                    assert dC[j] < 0 < np.min(np.delete(dC, j)) + 1e-12
