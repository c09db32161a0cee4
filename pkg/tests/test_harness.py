import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from metasense import harness
from metasense.harness import ConfigError, LoadProgram, ProgramKind

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="module")
def replica_cfg():
    return harness.load_config(CONFIGS / "replica.json")


@pytest.fixture(scope="module")
def mc_cfg():
    return harness.load_config(CONFIGS / "monte_carlo.json")


def with_program(cfg, **kw):
    return replace(cfg, program=LoadProgram(**kw), output_dir=None)


def noiseless(cfg):
    return replace(cfg, converter=replace(cfg.converter, noise_sigma=0.0))


class TestConfig:
    def test_defaults(self):
        cfg = harness.config_from_dict({})
        assert cfg.chain.n_cells == 4 and cfg.program.kind is ProgramKind.SINGLE_PULL
        assert cfg.x_max == pytest.approx(4 * 14.8 + 2)

    def test_roundtrip(self, replica_cfg):
        assert harness.config_from_dict(harness.config_to_dict(replica_cfg)) == replica_cfg

    def test_json_serializable(self, replica_cfg):
        json.dumps(harness.config_to_dict(replica_cfg))

    @pytest.mark.parametrize("data", [
        {"bogus": 1},
        {"chain": {"n_cell": 4}},
        {"chain": {"n_cells": 0}},
        {"chain": {"n_cells": 3, "imperfections": [0.0, 0.1]}},
        {"seed": -1},
        {"seed": "x"},
        {"program": {"kind": "wiggle"}},
        {"program": {"kind": "single_pull", "n_cycles": 3}},
        {"program": {"rate": 0}},
        {"detection": {"window": 4}},
        {"capacitor": {"alpha": 0.02, "coupling": [[1, 0], [0, 1]]}},
        {"chain": []},
    ])
    def test_invalid(self, data):
        with pytest.raises(ConfigError):
            harness.config_from_dict(data)

    def test_load_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            harness.load_config(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError):
            harness.load_config(bad)


class TestPath:
    def test_single_pull_rows(self, replica_cfg):
        X, cycles = harness.build_path(replica_cfg)
        assert len(X) == math.ceil(replica_cfg.x_max / 0.01 - 1e-9) + 1
        assert X[0] == 0.0 and X[-1] == replica_cfg.x_max
        assert np.all(np.diff(X) > 0) and cycles == [(0, len(X) - 1, len(X) - 1)]

    def test_cyclic(self):
        cfg = harness.config_from_dict({"program": {"kind": "cyclic", "n_cycles": 3, "x_max": 1.0,
                                                    "rate": 0.1, "dt": 1.0}})
        X, cycles = harness.build_path(cfg)
        assert len(X) == 3 * 20 + 1
        assert cycles == [(0, 10, 20), (20, 30, 40), (40, 50, 60)]
        assert harness.loading_strokes(X) == [(0, 10), (20, 30), (40, 50)]

    def test_hold(self):
        cfg = harness.config_from_dict({"program": {"kind": "hold", "x_max": 0.0, "hold_time": 0.5}})
        X, _ = harness.build_path(cfg)
        assert len(X) == 51 and np.all(X == 0)


class TestSubstreams:
    def test_noise_does_not_change_imperfections(self, replica_cfg):
        quiet = noiseless(replica_cfg)
        assert harness.sample_imperfections(quiet) == harness.sample_imperfections(replica_cfg)

    def test_seed_changes_imperfections(self, replica_cfg):
        other = replace(replica_cfg, seed=replica_cfg.seed + 1)
        assert harness.sample_imperfections(other) != harness.sample_imperfections(replica_cfg)

    def test_sigma_eta_zero_gives_identical_cells(self):
        cfg = harness.config_from_dict({"chain": {"sigma_eta": 0.0}})
        assert harness.sample_imperfections(cfg) == (0.0,) * 4

    def test_explicit_imperfections_win(self):
        cfg = harness.config_from_dict({"chain": {"imperfections": [0.01, 0.02, 0.03, 0.04]}})
        assert harness.sample_imperfections(cfg) == (0.01, 0.02, 0.03, 0.04)


class TestScenario:
    def test_replica(self, replica_cfg):
        report = harness.run_scenario(replica_cfg, write=False)
        (cycle,) = report.cycles
        assert cycle.truth_sequence == [2, 3, 1, 4]
        assert cycle.detected_sequence == [2, 3, 1, 4] and report.all_match
        assert cycle.force_drops == 4
        assert 5.6 <= report.peak_force <= 8.4

    def test_hold_at_rest(self, replica_cfg):
        cfg = noiseless(with_program(replica_cfg, kind="hold", x_max=0.0, hold_time=0.5))
        report = harness.run_scenario(cfg, write=False)
        assert report.events == []
        F = report.trace.F
        assert np.all(F == F[0]) and abs(F[0]) < 1e-9 and np.all(report.codes == report.codes[0])
        assert report.cycles[0].detected == [] and report.cycles[0].match

    def test_cyclic_repeats(self, replica_cfg):
        cfg = noiseless(with_program(replica_cfg, kind="cyclic", n_cycles=2))
        report = harness.run_scenario(cfg, write=False)
        a, b = report.cycles
        strip = lambda c: [(e.cell_id, e.direction, e.X_at_event) for e in c.truth]
        assert strip(a) == strip(b)
        assert a.detected_sequence == b.detected_sequence == [2, 3, 1, 4]
        # each cycle deploys and collapses every cell once
        assert sorted(e.direction.name for e in a.truth) == ["COLLAPSE"] * 4 + ["DEPLOY"] * 4
        # the area enclosed by the force loop is the energy lost in snaps
        for c in report.cycles:
            assert c.work == pytest.approx(c.dissipated_energy, rel=0.01)

    def test_outputs(self, replica_cfg, tmp_path):
        names = ("trace.csv", "events.csv", "detected.csv", "report.json")
        cfg = replace(replica_cfg, output_dir=str(tmp_path / "a"))
        report = harness.run_scenario(cfg)
        first = {n: (tmp_path / "a" / n).read_bytes() for n in names}
        harness.run_scenario(cfg)
        assert all((tmp_path / "a" / n).read_bytes() == first[n] for n in names)

        trace = harness.read_trace_csv(tmp_path / "a" / "trace.csv")
        header = (tmp_path / "a" / "trace.csv").read_text().splitlines()[0].split(",")
        assert header == (["step", "X_mm", "F_N"] + [f"x{i}_mm" for i in range(1, 5)]
                          + [f"C{i}_pF" for i in range(1, 5)] + [f"code{i}" for i in range(1, 5)])
        assert np.array_equal(trace["X"], report.trace.X)
        assert np.array_equal(trace["F"], report.trace.F)
        assert np.array_equal(trace["C"], report.capacitance)
        assert np.array_equal(trace["codes"], report.codes)

        events = harness.read_events_csv(tmp_path / "a" / "events.csv")
        assert [(e.cell_id, e.step_index, e.X_at_event, e.F_before) for e in events] == \
            [(e.cell_id, e.step_index, e.X_at_event, e.F_before) for e in report.events]

        data = json.loads((tmp_path / "a" / "report.json").read_text())
        assert data["cycles"][0]["detected_sequence"] == [2, 3, 1, 4]
        assert "wall_time" not in json.dumps(data)


class TestSweeps:
    def test_noise_sweep_validation(self, mc_cfg):
        assert harness.noise_sweep(mc_cfg, []) == []
        with pytest.raises(ConfigError):
            harness.noise_sweep(mc_cfg, [0.001], k=5)

    def test_noise_sweep_extremes(self, mc_cfg):
        rows = harness.noise_sweep(mc_cfg, [0.0, 0.5])
        assert [r.sigma for r in rows] == [0.0, 0.5] and all(r.runs == 20 for r in rows)
        assert rows[0].accuracy == 1.0
        assert rows[1].accuracy <= 0.05
        assert harness.critical_sigma(rows) == 0.5

    def test_critical_sigma(self):
        rows = [harness.NoiseSweepRow(s, a, 20) for s, a in [(0.002, 0.4), (0.0, 1.0), (0.001, 0.95)]]
        assert harness.critical_sigma(rows) == 0.002
        assert harness.critical_sigma(rows[1:]) is None

    def test_mc_identical_cells(self, mc_cfg):
        cfg = noiseless(replace(mc_cfg, chain=replace(mc_cfg.chain, sigma_eta=0.0)))
        (row,) = harness.imperfection_mc(cfg, 1)
        # equal peaks deploy in id order
        assert row.true_sequence == [1, 2, 3, 4] and row.match

    def test_mc_rows_follow_seeds(self, mc_cfg):
        rows = harness.imperfection_mc(mc_cfg, 2)
        assert [r.seed for r in rows] == [mc_cfg.seed, mc_cfg.seed + 1]
        assert rows[0].imperfections != rows[1].imperfections

    def test_mc_validation(self, mc_cfg):
        with pytest.raises(ConfigError):
            harness.imperfection_mc(mc_cfg, 0)
        fixed = replace(mc_cfg, chain=replace(mc_cfg.chain, imperfections=(0.0,) * 4))
        with pytest.raises(ConfigError):
            harness.imperfection_mc(fixed, 3)


def test_count_force_drops():
    assert harness.count_force_drops(np.array([0.0, 5.0, 3.5, 3.6, 3.0])) == 1


def test_geometry_csv(tmp_path):
    path = tmp_path / "g.csv"
    harness.write_geometry_csv(path, n=11)
    lines = path.read_text().splitlines()
    assert lines[0] == "s_mm,B_mm" and len(lines) == 12
    s0, b0 = map(float, lines[1].split(","))
    assert s0 == 0.0 and b0 == 0.0
