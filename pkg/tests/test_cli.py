import json
import os

import numpy as np
import pytest

from nlstefan import cli
from nlstefan.config import parse_config_dict, serialize_config
from nlstefan.recordio import load_record, save_record
from nlstefan.stepper import run


def line_yaml(t_end=2.0, pin=False):
    raw = {
        "variant": "line1fb",
        "kernel": {"kind": "triangle", "d": 1.0},
        "grid": {"h": 0.05},
        "time": {"t_end": t_end, "dt": 0.05, "record_every": 0.05,
                 "snapshot_times": [t_end]},
        "initial": {"kind": "bump", "amplitude": 1.0, "center": 0.0,
                    "width": 1.0, "s0": 1.0},
    }
    if pin:
        raw["grid"].update({"x_min": -5.0, "x_max": 4.0})
    return serialize_config(parse_config_dict(raw))


@pytest.fixture
def line_config(tmp_path):
    path = tmp_path / "scenario.yaml"
    path.write_text(line_yaml())
    return str(path)


class TestRecordIO:
    def test_round_trip_is_exact(self, tmp_path):
        cfg = parse_config_dict({
            "variant": "radial",
            "kernel": {"kind": "triangle", "d": 1.0},
            "grid": {"h": 0.05},
            "time": {"t_end": 1.0, "dt": 0.05, "snapshot_times": [0.5, 1.0]},
            "initial": {"kind": "bump", "amplitude": 1.0, "center": 0.0,
                        "width": 0.5, "R0": 1.0},
            "radial": {"N": 2},
        })
        rec = run(cfg)
        paths = save_record(rec, str(tmp_path))
        back = load_record(paths["series"])
        assert back.variant == rec.variant
        np.testing.assert_array_equal(back.times, rec.times)
        assert set(back.series) == set(rec.series)
        for key in rec.series:
            np.testing.assert_array_equal(back.series[key], rec.series[key])
        assert len(back.snapshots) == 2
        for sa, sb in zip(back.snapshots, rec.snapshots):
            assert sa.t == sb.t
            np.testing.assert_array_equal(sa.u, sb.u)
        assert back.meta["config_hash"] == rec.meta["config_hash"]
        assert back.meta["N"] == rec.meta["N"]

    def test_series_header_is_self_describing(self, tmp_path):
        cfg = parse_config_dict({
            "variant": "line1fb",
            "kernel": {"kind": "triangle", "d": 1.0},
            "grid": {"h": 0.05},
            "time": {"t_end": 0.5, "dt": 0.05},
            "initial": {"kind": "bump", "amplitude": 1.0, "center": 0.0,
                        "width": 1.0, "s0": 1.0},
        })
        paths = save_record(run(cfg), str(tmp_path))
        text = open(paths["series"]).read()
        assert text.startswith("# variant=line1fb\n")
        assert "# config_hash=" in text
        assert "# version=" in text
        header = [l for l in text.splitlines() if not l.startswith("#")][0]
        assert header.split(",")[0] == "t"


class TestRunCommand:
    def test_writes_record_config_and_figures(self, line_config, tmp_path, capsys):
        out = tmp_path / "out"
        assert cli.main(["run", line_config, "--outdir", str(out)]) == 0
        for name in ("series.csv", "config.yaml", "series.png",
                     "snapshots.png", "snapshot_t2.csv"):
            assert (out / name).exists(), name
        tail = capsys.readouterr().out
        assert "line1fb: t_end=2" in tail
        assert "mass=" in tail and "s=" in tail

    def test_no_figures_flag(self, line_config, tmp_path):
        out = tmp_path / "out"
        assert cli.main(["run", line_config, "--no-figures", "--outdir", str(out)]) == 0
        assert not (out / "series.png").exists()
        assert (out / "series.csv").exists()

    def test_outdir_from_environment(self, line_config, tmp_path, monkeypatch):
        out = tmp_path / "env-out"
        monkeypatch.setenv("NLSTEFAN_OUTDIR", str(out))
        assert cli.main(["run", line_config, "--no-figures"]) == 0
        assert (out / "series.csv").exists()

    def test_trivial_scenario_stays_put(self, tmp_path):
        path = tmp_path / "trivial.yaml"
        path.write_text(serialize_config(parse_config_dict({
            "variant": "halfline",
            "kernel": {"kind": "triangle", "d": 1.0},
            "grid": {"h": 0.05},
            "time": {"t_end": 1.0, "dt": 0.05},
            "initial": {"kind": "trivial", "s0": 1.0},
            "halfline": {"A": 0.0},
        })))
        out = tmp_path / "out"
        assert cli.main(["run", str(path), "--no-figures", "--outdir", str(out)]) == 0
        rec = load_record(str(out / "series.csv"))
        assert np.all(rec.series["s"] == 1.0)
        assert np.all(rec.series["mass"] == 0.0)

    def test_margin_violation_is_a_numerical_failure(self, tmp_path, capsys):
        path = tmp_path / "tight.yaml"
        path.write_text(serialize_config(parse_config_dict({
            "variant": "line1fb",
            "kernel": {"kind": "triangle", "d": 1.0},
            "grid": {"h": 0.05, "x_min": -3.0, "x_max": 1.5},
            "time": {"t_end": 1.0, "dt": 0.05},
            "initial": {"kind": "bump", "amplitude": 1.0, "center": 0.0,
                        "width": 1.0, "s0": 1.0},
        })))
        assert cli.main(["run", str(path), "--outdir", str(tmp_path / "o")]) == 2
        assert "numerical failure" in capsys.readouterr().err


class TestUsageErrors:
    def test_missing_config(self, tmp_path, capsys):
        assert cli.main(["run", str(tmp_path / "nope.yaml")]) == 1
        assert "error:" in capsys.readouterr().err

    def test_unknown_key_names_the_field(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text("variant: line1fb\nkernle: {kind: triangle}\n")
        assert cli.main(["run", str(path), "--outdir", str(tmp_path)]) == 1
        assert "kernle" in capsys.readouterr().err

    def test_dimension_check_names_the_field(self, tmp_path, capsys):
        path = tmp_path / "flat.yaml"
        path.write_text(
            "variant: radial\n"
            "kernel: {kind: triangle, d: 1.0}\n"
            "grid: {h: 0.05}\n"
            "time: {t_end: 1.0}\n"
            "initial: {kind: bump, amplitude: 1.0, center: 0.0, width: 0.5, R0: 1.0}\n"
            "radial: {N: 1}\n"
        )
        assert cli.main(["run", str(path), "--outdir", str(tmp_path)]) == 1
        assert "radial.N" in capsys.readouterr().err

    def test_rates_on_directory(self, tmp_path, capsys):
        assert cli.main(["rates", str(tmp_path)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_version_flag(self, capsys):
        assert cli.main(["--version"]) == 0
        assert "nlstefan" in capsys.readouterr().out


@pytest.fixture(scope="module")
def saved_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("rates-in")
    cfg = parse_config_dict({
        "variant": "line1fb",
        "kernel": {"kind": "triangle", "d": 1.0},
        "grid": {"h": 0.05},
        "time": {"t_end": 20.0, "dt": 0.05, "record_every": 0.1},
        "initial": {"kind": "bump", "amplitude": 1.0, "center": 0.0,
                    "width": 1.0, "s0": 1.0},
    })
    save_record(run(cfg), str(out))
    return str(out / "series.csv")


class TestRatesCommand:
    def test_fits_and_checks_written(self, saved_run, tmp_path, capsys):
        out = tmp_path / "rates"
        code = cli.main(["rates", saved_run, "--outdir", str(out)])
        # short horizon, so band checks may flag the transient; both
        # verdicts use the same JSON contract
        assert code in (0, 3)
        payload = json.load(open(out / "rates.json"))
        assert payload["variant"] == "line1fb"
        for key in ("sup_u", "mass", "boundary_gap"):
            assert "exponent" in payload["fits"][key]
        assert "conservation" in payload["checks"]
        assert payload["checks"]["conservation"]["passed"] is True
        assert (out / "rates.png").exists()
        assert "conservation" in capsys.readouterr().out

    def test_kernel_rebuilt_from_header(self, saved_run, tmp_path):
        # no --config: kernel facts come from the series header, so the
        # moment-limit and speed entries must still appear
        out = tmp_path / "rates"
        cli.main(["rates", saved_run, "--outdir", str(out)])
        payload = json.load(open(out / "rates.json"))
        assert "moment_limit" in payload["fits"]
        assert "speed" in payload["fits"]


class TestCorrectorsCommand:
    def test_constants_and_profiles(self, tmp_path, capsys):
        path = tmp_path / "cs.yaml"
        path.write_text(serialize_config(parse_config_dict({
            "variant": "linecs",
            "kernel": {"kind": "triangle", "d": 1.0},
            "grid": {"h": 0.05},
            "time": {"t_end": 2.0, "dt": 0.05},
            "initial": {"kind": "bump", "amplitude": 1.0, "center": 0.0,
                        "width": 1.0, "s0_minus": -1.0, "s0_plus": 1.0},
        })))
        out = tmp_path / "out"
        assert cli.main(["correctors", str(path), "--outdir", str(out)]) == 0
        payload = json.load(open(out / "correctors.json"))
        assert payload["q"] == pytest.approx(0.083125)
        assert payload["alpha"] == pytest.approx(0.30732, abs=1e-4)
        assert payload["C0"] == payload["C1"] > 0
        assert 0.0 < payload["lambda"] < 1.0
        for name in ("corrector_phi.csv", "corrector_psi.csv", "correctors.png"):
            assert (out / name).exists(), name
        assert "alpha" in capsys.readouterr().out


class TestOracleCheck:
    def test_suite_directory(self, tmp_path, capsys):
        suite = tmp_path / "suite"
        suite.mkdir()
        (suite / "line.yaml").write_text(line_yaml(t_end=0.5, pin=True))
        out = tmp_path / "out"
        code = cli.main(["oracle-check", "--suite", str(suite), "--outdir", str(out)])
        assert code == 0
        payload = json.load(open(out / "oracle_check.json"))
        assert payload["passed"] is True
        (entry,) = payload["results"]
        assert entry["boundary_gap"] < entry["gap_bound"]
        assert entry["ordered"] is True
        assert "pass" in capsys.readouterr().out

    def test_empty_suite_is_usage_error(self, tmp_path):
        suite = tmp_path / "empty"
        suite.mkdir()
        assert cli.main(["oracle-check", "--suite", str(suite)]) == 1

    def test_builtin_suite_covers_all_variants(self):
        names = [name for name, _ in cli.desk_suite()]
        variants = {cfg.variant for _, cfg in cli.desk_suite()}
        assert len(names) == len(set(names)) == 4
        assert variants == {"line1fb", "linecs", "halfline", "radial"}
