import os

import numpy as np
import pytest

from terraplan.cli import main
from terraplan.config import ConfigError, apply_pairs, dump_task, load_task, parse_pairs
from terraplan.sim import MetricsReport, task_preset
from terraplan.terrain import read_ascii_grid

FAST = ["--set", "task.duration=4", "--set", "terrain.extent=60"]


class TestGenTerrain:
    def test_incline_grid(self, tmp_path):
        out = tmp_path / "hill.grid"
        rc = main(["gen-terrain", "--kind", "incline", "--angle-deg", "10",
                   "--azimuth-deg", "0", "--size", "200", "--res", "0.5",
                   "--out", str(out)])
        assert rc == 0
        emap = read_ascii_grid(str(out))
        assert (emap.n_cols, emap.n_rows) == (400, 400)

    def test_flat_all_zero(self, tmp_path):
        out = tmp_path / "f.grid"
        assert main(["gen-terrain", "--kind", "flat", "--size", "20",
                     "--res", "0.5", "--out", str(out)]) == 0
        assert np.all(read_ascii_grid(str(out)).heights == 0.0)

    def test_invalid_angle_exits_2(self, tmp_path):
        rc = main(["gen-terrain", "--kind", "incline", "--angle-deg", "95",
                   "--out", str(tmp_path / "x.grid")])
        assert rc == 2

    def test_unwritable_path_exits_3(self, tmp_path):
        rc = main(["gen-terrain", "--kind", "flat",
                   "--out", str(tmp_path / "no" / "dir" / "x.grid")])
        assert rc == 3


class TestSimulate:
    def test_deterministic_artifacts(self, tmp_path):
        for d in ("r1", "r2"):
            rc = main(["simulate", "--task", "flat-circle", "--seed", "7",
                       "--out", str(tmp_path / d)] + FAST)
            assert rc == 0
        log1 = (tmp_path / "r1" / "log.csv").read_bytes()
        log2 = (tmp_path / "r2" / "log.csv").read_bytes()
        assert log1 == log2
        met1 = (tmp_path / "r1" / "metrics.txt").read_bytes()
        met2 = (tmp_path / "r2" / "metrics.txt").read_bytes()
        assert met1 == met2

    def test_set_override_changes_run(self, tmp_path):
        main(["simulate", "--task", "flat-circle", "--seed", "7",
              "--out", str(tmp_path / "a")] + FAST)
        main(["simulate", "--task", "flat-circle", "--seed", "7",
              "--out", str(tmp_path / "b"), "--set", "constraints.rr_max=2.0"] + FAST)
        ma = MetricsReport.read(str(tmp_path / "a" / "metrics.txt"))
        mb = MetricsReport.read(str(tmp_path / "b" / "metrics.txt"))
        assert ma.values != mb.values

    def test_bad_config_exits_2(self, tmp_path):
        rc = main(["simulate", "--task", "flat-circle", "--set", "nope.key=1",
                   "--out", str(tmp_path / "x")])
        assert rc == 2

    def test_incompatible_dt_exits_2(self, tmp_path):
        rc = main(["simulate", "--task", "flat-circle",
                   "--set", "plant.dt=0.03", "--out", str(tmp_path / "x")])
        assert rc == 2

    def test_invalid_bound_exits_2(self, tmp_path):
        rc = main(["simulate", "--task", "flat-circle",
                   "--set", "constraints.rr_max=50", "--out", str(tmp_path / "x")])
        assert rc == 2

    def test_episode_failure_exits_4_with_logs(self, tmp_path):
        rc = main(["simulate", "--task", "ditch-cross", "--seed", "1",
                   "--out", str(tmp_path / "fail"),
                   "--set", "terrain.kind=flat", "--set", "terrain.extent=14",
                   "--set", "terrain.cell_size=0.5",
                   "--set", "task.start_offset=0", "--set", "task.v0=10",
                   "--set", "task.v_ref=10", "--set", "task.duration=6",
                   "--set", "limits.v_cap=12"])
        assert rc == 4
        assert (tmp_path / "fail" / "log.csv").exists()
        assert (tmp_path / "fail" / "metrics.txt").exists()


class TestEval:
    def test_reproduces_simulate_max_rr(self, tmp_path):
        main(["simulate", "--task", "flat-circle", "--seed", "9",
              "--out", str(tmp_path / "run")] + FAST)
        rc = main(["eval", "--task", "flat-circle", "--log",
                   str(tmp_path / "run" / "log.csv"),
                   "--out", str(tmp_path / "ev")] + FAST)
        assert rc == 0
        sim_m = MetricsReport.read(str(tmp_path / "run" / "metrics.txt"))
        ev_m = MetricsReport.read(str(tmp_path / "ev" / "metrics.txt"))
        assert ev_m.values["max_rr"] == sim_m.values["max_rr"]
        assert ev_m.values["tau_band_violations"] == sim_m.values["tau_band_violations"]

    def test_heading_bins_written(self, tmp_path):
        main(["simulate", "--task", "flat-circle", "--seed", "9",
              "--out", str(tmp_path / "run")] + FAST)
        main(["eval", "--task", "flat-circle", "--log",
              str(tmp_path / "run" / "log.csv"), "--out", str(tmp_path / "ev")] + FAST)
        lines = (tmp_path / "ev" / "heading_bins.csv").read_text().splitlines()
        assert lines[0] == "bin_start_deg,count,mean_speed,max_speed,mean_rr,max_rr"
        assert len(lines) == 25
        assert (tmp_path / "ev" / "tau_profile.csv").exists()

    def test_truncated_log_exits_2(self, tmp_path):
        main(["simulate", "--task", "flat-circle", "--seed", "9",
              "--out", str(tmp_path / "run")] + FAST)
        text = (tmp_path / "run" / "log.csv").read_text().splitlines()
        broken = "\n".join(text[:10] + [text[10].rsplit(",", 3)[0]]) + "\n"
        (tmp_path / "run" / "log.csv").write_text(broken)
        rc = main(["eval", "--task", "flat-circle", "--log",
                   str(tmp_path / "run" / "log.csv"), "--out", str(tmp_path / "ev")])
        assert rc == 2

    def test_missing_log_exits_3(self, tmp_path):
        rc = main(["eval", "--task", "flat-circle", "--log",
                   str(tmp_path / "nope.csv"), "--out", str(tmp_path / "ev")])
        assert rc == 3


class TestBench:
    def test_small_bench_runs(self, capsys):
        rc = main(["bench", "--n", "64", "--horizon", "10", "--iters", "3",
                   "--workers", "1"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "median" in out


class TestConfig:
    def test_round_trip(self, tmp_path):
        spec = task_preset("ditch_cross", seed=4)
        text = dump_task(spec)
        path = tmp_path / "cfg.txt"
        path.write_text(text)
        again = load_task(path=str(path))
        assert dump_task(again) == text

    def test_unknown_key_rejected(self):
        spec = task_preset("flat_circle")
        with pytest.raises(ConfigError):
            apply_pairs(spec, [("mppi", "bogus", "1")])
        with pytest.raises(ConfigError):
            apply_pairs(spec, [("nosection", "x", "1")])

    def test_parse_pairs_syntax(self):
        pairs = parse_pairs(["a.b = 1", "# comment", "", "c.d=2.5 # trailing"])
        assert pairs == [("a", "b", "1"), ("c", "d", "2.5")]
        with pytest.raises(ConfigError):
            parse_pairs(["novalue"])
        with pytest.raises(ConfigError):
            parse_pairs(["nodot = 3"])

    def test_override_priority(self, tmp_path):
        path = tmp_path / "c.txt"
        path.write_text("task.kind = hill_circle\nconstraints.rr_max = 2.0\n")
        spec = load_task(path=str(path), overrides=["constraints.rr_max=2.7"],
                         seed=42)
        assert spec.kind == "hill_circle"
        assert spec.constraints.rr_max == 2.7
        assert spec.mppi.rng_seed == 42

    def test_waypoints_parse(self):
        spec = task_preset("slalom")
        out = apply_pairs(spec, [("task", "waypoints", "0,0;10,2;20,-2")])
        assert out.waypoints == (0.0, 0.0, 10.0, 2.0, 20.0, -2.0)
