import csv
import json

import numpy as np
import pytest

from scatterlab import GaussianSpec, Grid, free_gaussian_exact
from scatterlab import cli
from scatterlab.errors import FrameFormatError
from scatterlab.frames import decode_frame, encode_frame, iter_frames, read_manifest
from scatterlab.report import COLUMNS
from scatterlab.sde import read_ensemble_binary

from conftest import rows_named

FREE1D_SPEC = GaussianSpec([0.0], [2.0], 1.0)


def _cfg_file(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# exit codes ---------------------------------------------------------------------------


def test_propagate_exit_zero_and_frames_written(tmp_path, capsys):
    out = tmp_path / "prop"
    assert cli.main(["propagate", "--preset", "free-1d", "--out", str(out)]) == cli.EXIT_OK
    assert "checks passed" in capsys.readouterr().out
    entries = read_manifest(out / "frames")
    assert len(entries) == 111 and entries[0]["t"] == 1.0 and entries[-1]["t"] == pytest.approx(12.0)
    g = Grid(1, 1024, 200.0)
    worst = max(float(np.max(np.abs(psi.values - free_gaussian_exact(FREE1D_SPEC, psi.t, g).values)))
                for psi in iter_frames(out / "frames"))
    assert worst <= 1e-8
    # `report` reads the stored rows back instead of recomputing
    assert cli.main(["report", "--preset", "free-1d", "--out", str(out)]) == cli.EXIT_OK
    assert str(out / "report.json") in capsys.readouterr().out


def test_validation_error_exit_one_without_outputs(tmp_path, capsys):
    path = _cfg_file(tmp_path, 'preset = "free-2d-cone"\ntimes.T = 80.0\n')
    out = tmp_path / "never"
    assert cli.main(["verify", "--config", path, "--out", str(out)]) == cli.EXIT_CONFIG
    assert "box sizing" in capsys.readouterr().err
    assert not out.exists()


def test_unparseable_config_exit_one(tmp_path, capsys):
    path = _cfg_file(tmp_path, "grid.n 64\n")
    assert cli.main(["verify", "--config", path]) == cli.EXIT_CONFIG
    assert "line 1" in capsys.readouterr().err


def test_missing_config_file_exit_one(tmp_path):
    assert cli.main(["verify", "--config", str(tmp_path / "absent.cfg")]) == cli.EXIT_CONFIG


@pytest.mark.parametrize("seed", ["-1", str(2**64)])
def test_seed_outside_u64_exit_one(seed):
    assert cli.main(["sample", "--preset", "free-1d", "--seed", seed]) == cli.EXIT_CONFIG


def test_failed_check_exit_two(tmp_path):
    path = _cfg_file(tmp_path, 'preset = "free-1d"\ntolerances.oracle = 1e-30\n')
    out = tmp_path / "strict"
    assert cli.main(["propagate", "--config", path, "--out", str(out)]) == cli.EXIT_FAIL
    stored = json.loads((out / "report.json").read_text())
    assert stored["passed"] is False
    assert [r["estimator"] for r in stored["rows"] if r["passed"] is False] == ["free_oracle_max_error"]
    assert cli.main(["report", "--config", path, "--out", str(out)]) == cli.EXIT_FAIL


def test_runtime_error_exit_three(tmp_path, monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise FloatingPointError("overflow in drift")

    monkeypatch.setattr(cli, "run", boom)
    assert cli.main(["flux", "--preset", "free-1d", "--out", str(tmp_path)]) == cli.EXIT_RUNTIME
    assert "runtime error during flux: FloatingPointError" in capsys.readouterr().err


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SCATTERLAB_OUT", str(tmp_path / "root"))
    assert cli.main(["propagate", "--preset", "free-3d-small"]) == cli.EXIT_OK
    assert (tmp_path / "root" / "free-3d-small" / "report.json").exists()


# determinism ---------------------------------------------------------------------------


def test_same_seed_gives_identical_bytes(tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert cli.main(["sample", "--preset", "free-1d", "--seed", "77", "--out", str(out)]) == cli.EXIT_OK
    for name in ("ensemble.bin", "report.json", "report.csv", "series.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
    dump = read_ensemble_binary(outs[0] / "ensemble.bin")
    assert dump["seed"] == 77 and dump["positions"].shape == (20000, 551, 1)


def test_different_seed_still_passes(tmp_path):
    out = tmp_path / "seed2"
    assert cli.main(["verify", "--preset", "free-1d", "--seed", "20260101", "--out", str(out)]) == cli.EXIT_OK
    assert read_ensemble_binary(out / "ensemble.bin")["seed"] == 20260101


# report contents -----------------------------------------------------------------------


def test_verify_free_1d_report(preset_run):
    report, res, out = preset_run("free-1d")
    assert report.passed, [r.estimator for r in report.failures]
    assert {r.tag for r in report.rows} <= {"[PAPER]", "[DERIVED]", "[TRIVIAL]"}
    assert all(r.band for r in report.rows if r.passed is not None)
    with open(out / "report.csv", newline="") as fh:
        table = list(csv.DictReader(fh))
    assert list(table[0]) == COLUMNS and len(table) == len(report.rows)
    stored = json.loads((out / "report.json").read_text())
    assert stored["config_sha256"] == report.config_hash
    assert stored["config"]["seed"] == 1729
    assert not any(k.startswith("wall") for k in stored["diagnostics"])
    assert "wall_total" in json.loads((out / "timing.json").read_text())


def test_series_and_crossing_tables(preset_run):
    report, res, out = preset_run("free-1d")
    with open(out / "series.csv", newline="") as fh:
        series = list(csv.DictReader(fh))
    assert len(series) == res.times.size
    assert max(abs(float(r["norm"]) - 1) for r in series) <= 1e-10
    with open(out / "crossings.csv", newline="") as fh:
        cross = list(csv.DictReader(fh))
    R4 = [r for r in cross if r["R"] == "4"]
    assert len(R4) == res.ensemble.N
    # telescoping, row by row
    assert all(int(r["N_total"]) == int(r["end_in_D"]) - int(r["start_in_D"]) for r in R4)
    assert all(int(r["N_total"]) == int(r["N_cap"]) + int(r["N_lat"]) for r in R4)


def test_verify_rows_cover_every_check(preset_run):
    report, _, _ = preset_run("free-1d")
    for name in ("norm_drift", "free_oracle_max_error", "h2_free_identity", "density_tracking_half",
                 "telescoping", "telescoping_random_polylines"):
        assert rows_named(report, name), name


# frames --------------------------------------------------------------------------------


def test_frame_round_trip_is_exact():
    g = Grid(2, 64, 24.0)
    psi = free_gaussian_exact(GaussianSpec([0.5, -1.0], [1.0, 0.5], 1.1), 0.7, g)
    back = decode_frame(encode_frame(psi))
    assert back.t == psi.t and back.grid.shape == g.shape
    np.testing.assert_array_equal(back.values, psi.values)


def test_frame_format_errors():
    psi = free_gaussian_exact(FREE1D_SPEC, 0.0, Grid(1, 64, 40.0))
    data = encode_frame(psi)
    with pytest.raises(FrameFormatError, match="magic"):
        decode_frame(b"XXXX" + data[4:])
    with pytest.raises(FrameFormatError, match="complex values"):
        decode_frame(data[:-16])
    with pytest.raises(FrameFormatError, match="header"):
        decode_frame(data[:10])
