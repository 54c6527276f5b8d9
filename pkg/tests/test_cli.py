"""Configuration parsing, data writers, and end-to-end CLI behavior."""

import json
import math
import os

import numpy as np
import pytest

from biphoton.cli import main
from biphoton.config import (
    ConfigError,
    RunConfig,
    build_config,
    parse_config,
    parse_quantity,
)
from biphoton.writers import (
    WriteError,
    read_grd,
    write_csv,
    write_grd,
    write_pgm,
)


class TestParseQuantity:
    def test_lengths(self):
        assert parse_quantity("355nm", "length") == pytest.approx(355e-9)
        assert parse_quantity("507um", "length") == pytest.approx(507e-6)
        assert parse_quantity("507µm", "length") == pytest.approx(507e-6)
        assert parse_quantity("5mm", "length") == pytest.approx(5e-3)
        assert parse_quantity("2cm", "length") == pytest.approx(2e-2)
        assert parse_quantity("1.5m", "length") == pytest.approx(1.5)

    def test_angles(self):
        assert parse_quantity("32.9deg", "angle") == \
            pytest.approx(math.radians(32.9))
        assert parse_quantity("0.5rad", "angle") == pytest.approx(0.5)

    def test_bare_numbers_are_si(self):
        assert parse_quantity(5e-3, "length") == 5e-3
        assert parse_quantity("0.005", "length") == 5e-3

    def test_garbage_rejected(self):
        with pytest.raises(ConfigError, match="lightyears"):
            parse_quantity("3lightyears", "length", key="lightyears")
        with pytest.raises(ConfigError):
            parse_quantity("abc", "angle")


class TestConfig:
    def test_empty_config_is_paper_defaults(self):
        cfg = build_config({})
        assert cfg.pump.wavelength == pytest.approx(355e-9)
        assert cfg.pump.waist == pytest.approx(507e-6)
        assert cfg.setup.kind == "single"
        assert cfg.setup.length == pytest.approx(5e-3)
        assert cfg.setup.theta_p == pytest.approx(math.radians(32.9))
        assert cfg.z == pytest.approx(5e-3)
        assert cfg.grid.n == 64

    def test_flag_overrides_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(
            {"crystal": {"theta_p": "32.90deg"}}))
        cfg = parse_config(str(path),
                           {"crystal": {"theta_p": "32.96deg"}})
        assert cfg.setup.theta_p == pytest.approx(math.radians(32.96))

    def test_gap_without_double_rejected(self):
        with pytest.raises(ConfigError):
            build_config({"crystal": {"gap": "2mm"}})

    def test_unknown_key_names_path(self):
        with pytest.raises(ConfigError, match="waistt"):
            build_config({"pump": {"waistt": "507um"}})

    def test_fingerprint_stable_and_sensitive(self):
        a = build_config({})
        b = build_config({})
        c = build_config({"z": "6mm"})
        assert a.fingerprint() == b.fingerprint()
        assert a.fingerprint() != c.fingerprint()
        assert len(a.fingerprint()) == 16

    def test_double_crystal_config(self):
        cfg = build_config({"crystal": {"kind": "double", "length": "1mm",
                                        "gap": "4mm"}})
        assert cfg.setup.kind == "double"
        assert cfg.setup.gap == pytest.approx(4e-3)


class TestWriters:
    def test_grd_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        values = rng.random((5, 7))
        path = tmp_path / "a.grd"
        write_grd(values, path, ("x_s", "x_i"), (1e-5, 1e-5), "m",
                  fingerprint="f00d")
        back, header = read_grd(path)
        np.testing.assert_array_equal(back, values)  # bit-exact
        assert header["magic"] == "GRD1"
        assert header["axes"] == ["x_s", "x_i"]
        assert header["fingerprint"] == "f00d"

    def test_grd_refuses_non_finite(self, tmp_path):
        values = np.array([[1.0, np.nan]])
        with pytest.raises(WriteError):
            write_grd(values, tmp_path / "bad.grd", ("a", "b"),
                      (1.0, 1.0), "m")
        values[0, 1] = np.inf
        with pytest.raises(WriteError):
            write_grd(values, tmp_path / "bad.grd", ("a", "b"),
                      (1.0, 1.0), "m")
        assert not (tmp_path / "bad.grd").exists()

    def test_pgm_max_normalized(self, tmp_path):
        values = np.random.default_rng(1).random((9, 9)) * 0.3
        path = tmp_path / "a.pgm"
        write_pgm(values, path)
        raw = path.read_bytes()
        assert raw.startswith(b"P5")
        payload = raw[raw.index(b"255\n") + 4:]
        pixels = np.frombuffer(payload, dtype=np.uint8)
        assert pixels.size == values.size
        assert pixels.max() == 255

    def test_csv_shape(self, tmp_path):
        values = np.arange(9.0).reshape(3, 3)
        path = tmp_path / "a.csv"
        write_csv(values, path, ("x_s", "x_i"), fingerprint="f00d")
        lines = path.read_text().strip().splitlines()
        data = [ln for ln in lines if not ln.startswith("#")]
        assert len(data) == 4  # header row + 3 data rows
        assert "x_s" in data[0]
        assert len(data[1].split(",")) == len(values[0])


class TestCliCommands:
    def run(self, *args, outdir):
        return main(["--out", str(outdir), *args])

    def test_collinear_angle_exit0(self, tmp_path, capsys):
        assert self.run("collinear-angle", outdir=tmp_path) == 0
        out = capsys.readouterr().out
        assert "32.9" in out

    def test_simulate_mom_writes_outputs(self, tmp_path):
        code = self.run("--n", "16", "simulate", "mom", outdir=tmp_path)
        assert code == 0
        assert (tmp_path / "joint_mom_av.grd").exists()
        assert (tmp_path / "joint_mom_av.csv").exists()
        assert (tmp_path / "joint_mom_av.pgm").exists()
        _, header = read_grd(tmp_path / "joint_mom_av.grd")
        assert header["fingerprint"]

    def test_byte_identical_reruns(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            out.mkdir()
            assert self.run("--n", "16", "simulate", "pos", outdir=out) == 0
        assert (a / "joint_pos_av.grd").read_bytes() == \
            (b / "joint_pos_av.grd").read_bytes()

    def test_config_error_exit2(self, tmp_path, capsys):
        code = self.run("--d", "2mm", "simulate", "pos", outdir=tmp_path)
        assert code == 2
        assert "config" in capsys.readouterr().err

    def test_conflicting_kind_flags_exit2(self, tmp_path):
        code = self.run("--single", "--double", "collinear-angle",
                        outdir=tmp_path)
        assert code == 2

    def test_compute_error_exit3(self, tmp_path, capsys):
        # Deliberately undersized momentum extent trips the truncation guard.
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"grid": {"n": 8, "c1": 0.2, "c2": 0.05}}))
        code = main(["--out", str(tmp_path), "--config", str(cfg),
                     "simulate", "pos"])
        assert code == 3
        err = capsys.readouterr().err
        assert "fields" in err

    def test_ef_report(self, tmp_path):
        assert self.run("--n", "16", "ef", outdir=tmp_path) == 0
        report = json.loads((tmp_path / "ef_report.json").read_text())
        assert report["ef_min_ebits"] > 0
        assert report["m"] == 16

    def test_scan_theta_csv(self, tmp_path):
        code = self.run("--n", "16", "scan", "theta",
                        "--values", "32.9deg,32.94deg", outdir=tmp_path)
        assert code == 0
        lines = (tmp_path / "scan_theta.csv").read_text().strip().splitlines()
        data = [ln for ln in lines if not ln.startswith("#")]
        assert len(data) == 3  # header + 2 points

    def test_frames_pipeline(self, tmp_path):
        code = self.run("--n", "16", "--frames", "50", "--seed", "5",
                        "frames", "synth", outdir=tmp_path)
        assert code == 0
        stack = tmp_path / "frames.bpfs"
        assert stack.exists()
        code = self.run("frames", "coincide", "--stack", str(stack),
                        outdir=tmp_path)
        assert code == 0
        assert (tmp_path / "coincidence_xx.grd").exists()

    def test_outdir_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BIPHOTON_OUTDIR", str(tmp_path))
        assert main(["--n", "16", "simulate", "mom"]) == 0
        assert (tmp_path / "joint_mom_av.grd").exists()
