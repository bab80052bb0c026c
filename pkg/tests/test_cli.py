import csv
import hashlib

import numpy as np
import pytest

from sibf.cli import EXIT_ARGS, EXIT_IO, EXIT_NUMERIC, main, parse_grid, read_config, CliError
from sibf.maxsnr import write_mask_csv
from sibf.sim import load_scene


def digest(directory):
    h = hashlib.sha256()
    for p in sorted(directory.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(directory).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("scene")
    assert main(["simulate", "--mics", "3", "--sources", "2", "--seed", "7", "--duration", "1.5",
                 "--out", str(d)]) == 0
    return d


def test_simulate_deterministic(tmp_path):
    args = ["simulate", "--mics", "3", "--sources", "3", "--seed", "7", "--multiplier", "1.0",
            "--duration", "1"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert digest(tmp_path / "a") == digest(tmp_path / "b")
    assert (tmp_path / "a" / "source_3.wav").exists()


def test_simulate_suite(tmp_path):
    assert main(["simulate", "--suite", "--seed", "7", "--duration", "1", "--out", str(tmp_path)]) == 0
    dirs = sorted(p.name for p in tmp_path.iterdir() if p.is_dir())
    assert len(dirs) == 4
    assert all((tmp_path / d / "mixture.wav").exists() for d in dirs)


def test_simulate_bad_args(tmp_path):
    assert main(["simulate", "--mics", "2", "--sources", "3", "--out", str(tmp_path)]) == EXIT_ARGS


def test_extract_oracle_beats_best_channel(scene_dir, tmp_path):
    assert main(["extract", str(scene_dir), "--casts", "1", "--generator", "oracle",
                 "--out", str(tmp_path)]) == 0
    (row,) = rows(tmp_path / "metrics.csv")
    assert list(row) == ["run_id", "cast", "model", "si_sdr", "sdr", "snr", "correlation",
                         "best_input_si_sdr", "flagged_bins"]
    assert float(row["si_sdr"]) > float(row["best_input_si_sdr"])
    assert row["model"] == "laplace" and row["cast"] == "1"
    assert (tmp_path / "output.wav").exists()


def test_extract_lf_line_endings(scene_dir, tmp_path):
    main(["extract", str(scene_dir), "--generator", "identity", "--out", str(tmp_path)])
    data = (tmp_path / "metrics.csv").read_bytes()
    assert b"\r" not in data and data.endswith(b"\n")


def test_gauss_closed_form_ignores_iters(scene_dir, tmp_path):
    for it in ("1", "20"):
        assert main(["extract", str(scene_dir), "--model", "gauss", "--beta", "8", "--iters", it,
                     "--generator", "oracle", "--out", str(tmp_path / it)]) == 0
    assert (tmp_path / "1" / "output.wav").read_bytes() == (tmp_path / "20" / "output.wav").read_bytes()


def test_extract_casts_and_extras(scene_dir, tmp_path):
    assert main(["extract", str(scene_dir), "--casts", "3", "--generator", "blend",
                 "--blend-lambda", "0.5", "--save-casts", "--dump-magnitude", "--band-zero",
                 "62.5,7812.5", "--out", str(tmp_path)]) == 0
    r = rows(tmp_path / "metrics.csv")
    assert [x["cast"] for x in r] == ["1", "2", "3"]
    assert len({x["run_id"] for x in r}) == 1
    assert all((tmp_path / f"output_cast{k}.wav").exists() for k in (1, 2, 3))
    mag = np.loadtxt(tmp_path / "output_magnitude.csv", delimiter=",")
    scene, _ = load_scene(scene_dir)
    assert mag.shape == scene.spec.shape[1:]


def test_extract_file_generator(scene_dir, tmp_path):
    scene, _ = load_scene(scene_dir)
    np.savetxt(tmp_path / "ref.csv", np.abs(scene.spec[0]), delimiter=",")
    assert main(["extract", str(scene_dir), "--generator", "file", "--ref-file",
                 str(tmp_path / "ref.csv"), "--out", str(tmp_path / "o")]) == 0
    np.savetxt(tmp_path / "bad.csv", np.ones((3, 3)), delimiter=",")
    assert main(["extract", str(scene_dir), "--generator", "file", "--ref-file",
                 str(tmp_path / "bad.csv"), "--out", str(tmp_path / "o")]) == EXIT_IO
    assert main(["extract", str(scene_dir), "--generator", "file", "--ref-file",
                 str(tmp_path / "none.csv"), "--out", str(tmp_path / "o")]) == EXIT_IO


def test_oracle_without_ground_truth(scene_dir, tmp_path):
    bare = tmp_path / "bare"
    bare.mkdir()
    (bare / "mixture.wav").write_bytes((scene_dir / "mixture.wav").read_bytes())
    assert main(["extract", str(bare), "--generator", "oracle", "--out", str(tmp_path)]) == EXIT_ARGS
    # wiener needs no ground truth; metrics are NaN
    assert main(["extract", str(bare), "--out", str(tmp_path / "w")]) == 0
    assert rows(tmp_path / "w" / "metrics.csv")[0]["si_sdr"] == "nan"


def test_io_and_argument_errors(scene_dir, tmp_path):
    assert main(["extract", str(tmp_path / "missing")]) == EXIT_IO
    assert main(["extract", str(scene_dir), "--mic", "9", "--out", str(tmp_path)]) == EXIT_ARGS
    assert main(["extract", str(scene_dir), "--band-zero", "100", "--out", str(tmp_path)]) == EXIT_ARGS
    assert main(["extract", str(scene_dir), "--eps", "0", "--out", str(tmp_path)]) == EXIT_ARGS
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["extract", str(scene_dir), "--out", str(blocker / "sub")]) == EXIT_IO
    with pytest.raises(SystemExit) as info:
        main(["extract", str(scene_dir), "--model", "cauchy"])
    assert info.value.code == 2


def test_config_file_and_override(scene_dir, tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# oracle run\nmodel = gauss\nbeta = 2\ngenerator = oracle  # inline\n",
                    encoding="utf-8")
    assert main(["extract", str(scene_dir), "--config", str(conf), "--out", str(tmp_path / "a")]) == 0
    assert rows(tmp_path / "a" / "metrics.csv")[0]["model"] == "gauss"
    assert main(["extract", str(scene_dir), "--config", str(conf), "--model", "student-t",
                 "--out", str(tmp_path / "b")]) == 0
    assert rows(tmp_path / "b" / "metrics.csv")[0]["model"] == "student-t"
    assert main(["extract", str(scene_dir), "--config", str(conf), "--model", "gauss", "--beta", "2",
                 "--generator", "oracle", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "a" / "output.wav").read_bytes() == (tmp_path / "c" / "output.wav").read_bytes()


def test_config_rejects_unknown_keys(scene_dir, tmp_path):
    conf = tmp_path / "bad.conf"
    conf.write_text("model = laplace\nlearning_rate = 3\n")
    assert main(["extract", str(scene_dir), "--config", str(conf), "--out", str(tmp_path)]) == EXIT_ARGS
    conf.write_text("just words\n")
    assert main(["extract", str(scene_dir), "--config", str(conf), "--out", str(tmp_path)]) == EXIT_ARGS
    assert main(["extract", str(scene_dir), "--config", str(tmp_path / "nope.conf")]) == EXIT_IO


def test_read_config_parsing(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("\n# comment\nbeta-best = 4 # trailing\n  nu=3\n")
    assert read_config(conf) == {"beta_best": "4", "nu": "3"}
    with pytest.raises(CliError):
        read_config(tmp_path / "missing")


def test_env_output_dir(scene_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("SIBF_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["extract", str(scene_dir), "--generator", "identity"]) == 0
    assert (tmp_path / "env" / "metrics.csv").exists()


def test_parse_grid():
    assert parse_grid("1..4", int) == [1, 2, 3, 4]
    assert parse_grid("0.125,0.5, 8") == [0.125, 0.5, 8.0]
    assert parse_grid("1,3..5", int) == [1, 3, 4, 5]
    assert parse_grid("") == []


def test_sweep_beta_grid(scene_dir, tmp_path):
    args = ["sweep", str(scene_dir), "--model", "gauss", "--beta", "0.125,0.5,1,2,8,32",
            "--generator", "oracle"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    r = rows(tmp_path / "a" / "sweep.csv")
    assert len(r) == 6
    assert [float(x["beta"]) for x in r] == [0.125, 0.5, 1, 2, 8, 32]
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()


def test_sweep_alpha_by_iterations(scene_dir, tmp_path):
    assert main(["sweep", str(scene_dir), "--alpha", "0.01,1,100,1e4", "--iters", "1..20",
                 "--generator", "oracle", "--out", str(tmp_path)]) == 0
    r = rows(tmp_path / "sweep.csv")
    assert len(r) == 80
    assert {float(x["alpha"]) for x in r} == {0.01, 1, 100, 1e4}
    assert sorted({int(x["iters"]) for x in r}) == list(range(1, 21))


def test_sweep_empty_grid(scene_dir, tmp_path):
    assert main(["sweep", str(scene_dir), "--beta", ",", "--out", str(tmp_path)]) == EXIT_ARGS


def test_maxsnr_ideal_masks(scene_dir, tmp_path, capsys):
    code = main(["maxsnr", str(scene_dir), "--ideal-masks", "--verify-unified", "--out", str(tmp_path)])
    assert code == 0
    (row,) = rows(tmp_path / "metrics.csv")
    assert float(row["si_sdr"]) > float(row["best_input_si_sdr"])
    out = capsys.readouterr().out
    dev = float(out.split("max_rel_deviation=")[1].split()[0])
    assert dev < 1e-6
    assert (tmp_path / "flagged_bins.csv").exists()


def test_maxsnr_empty_interference_mask_strict(scene_dir, tmp_path, capsys):
    scene, _ = load_scene(scene_dir)
    shape = scene.spec.shape[1:]
    write_mask_csv(tmp_path / "t.csv", np.ones(shape))
    write_mask_csv(tmp_path / "i.csv", np.zeros(shape))
    base = ["maxsnr", str(scene_dir), "--target-mask", str(tmp_path / "t.csv"),
            "--interference-mask", str(tmp_path / "i.csv"), "--out", str(tmp_path / "o")]
    assert main(base) == 0
    assert main(base + ["--strict"]) == EXIT_NUMERIC
    report = rows(tmp_path / "o" / "flagged_bins.csv")
    assert len(report) == shape[0]
    assert report[0]["reason"] == "empty_interference_mask"
    assert "flagged bins: %d" % shape[0] in capsys.readouterr().out


def test_maxsnr_mask_errors(scene_dir, tmp_path):
    write_mask_csv(tmp_path / "small.csv", np.ones((4, 4)))
    assert main(["maxsnr", str(scene_dir), "--target-mask", str(tmp_path / "small.csv"),
                 "--interference-mask", str(tmp_path / "small.csv"), "--out", str(tmp_path)]) == EXIT_ARGS
    assert main(["maxsnr", str(scene_dir), "--out", str(tmp_path)]) == EXIT_ARGS
    assert main(["maxsnr", str(scene_dir), "--target-mask", str(tmp_path / "x.csv"),
                 "--interference-mask", str(tmp_path / "x.csv"), "--out", str(tmp_path)]) == EXIT_IO


@pytest.mark.parametrize("argv", [
    ["extract", "{scene}", "--casts", "2", "--generator", "blend"],
    ["sweep", "{scene}", "--beta", "1,8", "--model", "gauss", "--generator", "oracle"],
    ["maxsnr", "{scene}", "--ideal-masks"],
])
def test_commands_byte_reproducible(scene_dir, tmp_path, argv):
    argv = [a.format(scene=scene_dir) for a in argv]
    main(argv + ["--out", str(tmp_path / "a")])
    main(argv + ["--out", str(tmp_path / "b")])
    assert digest(tmp_path / "a") == digest(tmp_path / "b")
