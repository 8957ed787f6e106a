import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from specrecon.cli import main
from specrecon.cube_io import read_cube, read_header
from specrecon.metrics_eval import CSV_FIELDS
from specrecon.pipeline import METHODS


@pytest.fixture
def simulated(tmp_path):
    path = tmp_path / "m.cube"
    assert main(["simulate", "--scene", "demo", "--size", "24", "--intensity", "10", "--seed", "1",
                 "--out", str(path), "--truth-out", str(tmp_path / "t.cube")]) == 0
    return path


def test_simulate_then_spre(simulated, tmp_path, capsys):
    out = tmp_path / "s.cube"
    z = tmp_path / "z.csv"
    guide = tmp_path / "g.cube"
    code = main(["reconstruct", "--method", "spre", "--in", str(simulated), "--out", str(out),
                 "--dump-z", str(z), "--dump-guide", str(guide)])
    assert code == 0
    cube = read_cube(out, kind="hyper")
    assert cube.data.shape == (24, 24, 49)
    rows = list(csv.reader(z.open()))
    assert rows[0] == ["band", "z"] and len(rows) == 50
    g = read_cube(guide)
    assert g.data.shape == (24, 24, 1)
    assert abs(sum(read_header(guide)["extra"]["guide_weights"]) - 1) < 1e-10


def test_default_output_path(simulated, capsys):
    assert main(["reconstruct", "--method", "sp", "--in", str(simulated)]) == 0
    printed = capsys.readouterr().out.strip()
    assert printed.endswith("m.sp.cube")
    assert read_cube(printed).data.shape == (24, 24, 49)


def test_simulate_records_noise_and_truth(simulated, tmp_path):
    header = read_header(simulated)
    assert len(header["extra"]["noise_sigma"]) == 9
    assert header["extra"]["levels"] == [10.0] * 9
    truth = read_cube(tmp_path / "t.cube", kind="hyper")
    assert truth.data.shape == (24, 24, 49)


def test_simulate_cap_schedule_and_inf(tmp_path):
    a = tmp_path / "a.cube"
    assert main(["simulate", "--size", "16", "--intensity-min", "10", "--intensity-max", "100",
                 "--out", str(a)]) == 0
    levels = read_header(a)["extra"]["levels"]
    assert levels[0] == pytest.approx(10) and levels[4] == pytest.approx(100)
    b = tmp_path / "b.cube"
    assert main(["simulate", "--size", "16", "--intensity", "inf", "--out", str(b)]) == 0
    assert read_header(b)["extra"]["noise_sigma"] == [0.0] * 9


def test_simulate_is_reproducible(tmp_path):
    for name in ("x", "y"):
        assert main(["simulate", "--size", "16", "--intensity", "50", "--seed", "7",
                     "--out", str(tmp_path / f"{name}.cube")]) == 0
    assert (tmp_path / "x.cube").read_bytes() == (tmp_path / "y.cube").read_bytes()


@pytest.mark.parametrize("method", METHODS)
def test_every_method(simulated, tmp_path, method):
    assert main(["reconstruct", "--method", method, "--in", str(simulated),
                 "--out", str(tmp_path / f"{method}.cube"), "--noise-source", "oracle"]) == 0


def test_unknown_method_lists_choices(simulated, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["reconstruct", "--method", "magic", "--in", str(simulated)])
    assert exc.value.code == 1
    err = capsys.readouterr().err
    assert all(m in err for m in METHODS)


def test_bench_unknown_method(tmp_path, capsys):
    assert main(["bench", "--methods", "sp,magic", "--out", str(tmp_path / "r.csv")]) == 1
    assert "spre" in capsys.readouterr().err


def test_missing_subcommand():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1


def test_missing_input_is_data_error(tmp_path):
    assert main(["reconstruct", "--method", "sp", "--in", str(tmp_path / "nope.cube")]) == 2


def test_channel_mismatch_is_data_error(tmp_path):
    path = tmp_path / "m.cube"
    spec = {"filters": [{"breakpoints": [450, 470, 520, 540]}, {"breakpoints": [600, 620, 700, 720]}]}
    (tmp_path / "t.json").write_text(json.dumps(spec))
    assert main(["simulate", "--size", "16", "--trapezoids", str(tmp_path / "t.json"), "--out", str(path)]) == 0
    assert main(["reconstruct", "--method", "sp", "--in", str(path)]) == 2


def test_rank_deficient_filters_are_numerical_failure(tmp_path, capsys):
    wl = np.linspace(440, 920, 49)
    rows = [wl, np.r_[np.ones(10), np.zeros(39)], np.r_[2 * np.ones(10), np.zeros(39)]]
    filt = tmp_path / "f.csv"
    filt.write_text("\n".join(",".join(repr(float(v)) for v in r) for r in rows) + "\n")
    cube = tmp_path / "m.cube"
    assert main(["simulate", "--size", "16", "--filters", str(filt), "--out", str(cube)]) == 0
    assert main(["reconstruct", "--method", "sp", "--filters", str(filt), "--in", str(cube)]) == 3
    assert "[1]" in capsys.readouterr().err


def test_conflicting_bank_options(simulated, tmp_path):
    assert main(["reconstruct", "--method", "sp", "--in", str(simulated),
                 "--filters", "a.csv", "--trapezoids", "b.json"]) == 1


def test_oracle_without_recorded_sigma(tmp_path, rng):
    from specrecon.cube_io import write_cube
    from specrecon.spectral_model import MultiCube

    path = tmp_path / "bare.cube"
    write_cube(MultiCube(rng.uniform(size=(8, 8, 9))), path)
    assert main(["reconstruct", "--method", "wf", "--in", str(path), "--noise-source", "oracle"]) == 2


def test_estimate_noise(simulated, capsys):
    assert main(["estimate-noise", "--in", str(simulated)]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0] == ["channel", "sigma"] and len(rows) == 10
    assert all(float(r[1]) > 0 for r in rows[1:])


def test_scale_factor(simulated, capsys):
    assert main(["scale-factor", "--in", str(simulated)]) == 0
    assert float(capsys.readouterr().out) > 0


def test_fixed_scale_factor(simulated, tmp_path):
    out = tmp_path / "w.cube"
    assert main(["reconstruct", "--method", "wf", "--in", str(simulated), "--out", str(out),
                 "--scale-factor", "0.5"]) == 0
    assert read_header(out)["extra"]["scale_d"] == 0.5


def test_bench_csv(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["bench", "--levels", "10,inf", "--scenarios", "10:100", "--methods", "sp,wf",
                 "--scenes", "1", "--size", "16", "--seeds", "2", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_FIELDS)
    assert len(lines) == 1 + 3 * 2 * 2


def test_bench_no_timing_is_byte_identical(tmp_path):
    args = ["bench", "--levels", "10", "--scenarios", "table1", "--methods", "all", "--scenes", "1",
            "--size", "12", "--block", "3", "--no-timing"]
    assert main(args + ["--out", str(tmp_path / "a.csv")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_bench_bad_scenarios(tmp_path):
    assert main(["bench", "--scenarios", "10-100", "--out", str(tmp_path / "r.csv")]) == 1


def test_help_documents_flags():
    out = subprocess.run([sys.executable, "-m", "specrecon.cli", "reconstruct", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    for flag in ("--method", "--prior-order", "--alpha", "--block", "--decay", "--spatial-var",
                 "--range-var", "--guide-block", "--theta", "--dump-guide", "--dump-z", "--noise-source"):
        assert flag in out.stdout
