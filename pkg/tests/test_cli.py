import pytest

from qdhyper import runner
from qdhyper.cli import main
from qdhyper.metrics import werner_state
from qdhyper.qlin import read_density_matrix, write_density_matrix


def test_simulate_writes_histograms(tmp_path, capsys):
    code = main(["simulate", "--campaign", "tb-at-HH", "--pairs", "500", "--out", str(tmp_path)])
    assert code == runner.EXIT_OK
    assert len(list((tmp_path / "histograms").glob("*.csv"))) == 4
    assert (tmp_path / "counts.tsv").exists()
    assert "wrote 4 histograms" in capsys.readouterr().out


def test_simulate_then_tomo_then_metrics(tmp_path, capsys):
    sim = tmp_path / "sim"
    assert main(["simulate", "--campaign", "pol-only", "--pairs", "20000", "--out", str(sim)]) == 0
    rec = tmp_path / "rec"
    assert main(["tomo", str(sim / "counts.tsv"), "--out", str(rec)]) == 0
    rho = read_density_matrix(rec / "rho.json")
    assert rho.dim == 4
    assert "rank 16" in (rec / "reconstruction.txt").read_text()
    capsys.readouterr()
    assert main(["metrics", str(rec / "rho.json"), "--out", str(tmp_path / "m.txt")]) == 0
    text = capsys.readouterr().out
    assert text.startswith("fidelity: ") and "concurrence: " in text
    assert (tmp_path / "m.txt").read_text() == text


def test_metrics_on_werner_file(tmp_path, capsys):
    write_density_matrix(tmp_path / "w.json", werner_state(0.5))
    assert main(["metrics", str(tmp_path / "w.json")]) == 0
    out = capsys.readouterr().out
    assert "fidelity: 0.625000" in out
    assert "concurrence: 0.250000" in out


def test_run_with_config_file(tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("source.preset = ideal\nrun.campaign = pol-only\nrun.pairs = 100000\n")
    code = main(["run", "--config", str(conf), "--seed", "4", "--out", str(tmp_path / "out")])
    assert code == runner.EXIT_OK
    echo = runner.load_config(tmp_path / "out" / "config.txt")
    assert echo.seed == 4 and echo.n_pairs_per_setting == 100_000
    assert "campaign: pol-only" in capsys.readouterr().out


def test_run_nonconvergence_exit_code(tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("run.campaign = pol-only\nrun.pairs = 1000\nmle.max_iterations = 2\n")
    assert main(["run", "--config", str(conf), "--out", str(tmp_path)]) == runner.EXIT_CONVERGENCE
    assert "did not converge" in capsys.readouterr().err


def test_unknown_config_key_is_usage_error(tmp_path, capsys):
    conf = tmp_path / "bad.conf"
    conf.write_text("run.colour = red\n")
    assert main(["run", "--config", str(conf), "--out", str(tmp_path)]) == runner.EXIT_USAGE
    assert "run.colour" in capsys.readouterr().err


def test_missing_matrix_is_usage_error(tmp_path, capsys):
    assert main(["metrics", str(tmp_path / "absent.json")]) == runner.EXIT_USAGE


def test_bad_flag_exits_with_usage(capsys):
    with pytest.raises(SystemExit) as info:
        main(["run", "--campaign", "hyper-512"])
    assert info.value.code == 2


def test_sweep_exact(tmp_path, capsys):
    code = main(["sweep", "--points", "8", "--exact", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "sweep.tsv").read_text().count("\n") == 9
    assert "visibility:" in (tmp_path / "sweep_fit.txt").read_text()


def test_sweep_too_few_points(capsys):
    assert main(["sweep", "--points", "2", "--exact"]) == runner.EXIT_USAGE
