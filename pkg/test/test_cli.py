import pytest

from lgdm.cli import build_parser, cli_main
from lgdm.config import ConfigIni, parse_config

ELASTIC = "[Material]\nkappa0 1e9\n\n[Load]\nsteps 5\n"


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "elastic.ini"
    path.write_text(ELASTIC)
    return path


class TestUsage:
    def test_no_command(self, capsys):
        assert cli_main([]) == 2
        assert "usage" in capsys.readouterr().err

    def test_help(self, capsys):
        assert cli_main(["--help"]) == 0
        assert "bench" in capsys.readouterr().out

    def test_unknown_command(self):
        assert cli_main(["plot"]) == 2

    def test_unknown_problem(self):
        assert cli_main(["run", "--problem", "sen4d"]) == 2

    def test_backend_list(self):
        args = build_parser().parse_args(["bench", "--backends", "batched, loop"])
        assert args.backends == ["batched", "loop"]
        with pytest.raises(SystemExit):
            build_parser().parse_args(["bench", "--backends", "gpu"])


class TestRun:
    def test_writes_results(self, config, tmp_path):
        out = tmp_path / "out"
        code = cli_main(
            f"-q run --problem bar1d --divisions 10 --config {config} --out {out}".split()
        )
        assert code == 0
        assert sorted(p.name for p in out.iterdir()) == [
            "config.ini",
            "fields_000005.vtk",
            "load_displacement.csv",
            "timing.ini",
        ]
        assert len((out / "load_displacement.csv").read_text().splitlines()) == 6
        spec, newton, output = parse_config((out / "config.ini").read_text())
        assert spec.problem == "bar1d"
        assert spec.divisions == (10,)
        assert spec.steps == 5
        assert spec.material.kappa0 == 1e9

    def test_backend_option(self, config, tmp_path):
        code = cli_main(
            f"-q run --problem bar1d --divisions 10 --config {config} --backend loop "
            f"--snapshot-interval 2 --out {tmp_path}".split()
        )
        assert code == 0
        _, newton, output = parse_config((tmp_path / "config.ini").read_text())
        assert newton.backend == "loop"
        assert output.snapshot_interval == 2
        assert sorted(p.name for p in tmp_path.glob("fields_*.vtk")) == [
            "fields_000002.vtk",
            "fields_000004.vtk",
            "fields_000005.vtk",
        ]

    def test_without_vtk(self, tmp_path):
        path = tmp_path / "novtk.ini"
        path.write_text(ELASTIC + "\n[Output]\nwrite_vtk no\n")
        out = tmp_path / "out"
        code = cli_main(
            f"-q run --problem bar1d --divisions 10 --config {path} --out {out}".split()
        )
        assert code == 0
        assert not list(out.glob("fields_*.vtk"))
        _, _, output = parse_config((out / "config.ini").read_text())
        assert output.write_vtk is False

    def test_config_error(self, tmp_path, capsys):
        path = tmp_path / "bad.ini"
        path.write_text("[Material]\nnu 0.7\n")
        code = cli_main(f"run --problem sen2d --config {path} --out {tmp_path}".split())
        assert code == 1
        assert "Material/nu" in capsys.readouterr().err

    def test_missing_problem(self, tmp_path, capsys):
        assert cli_main(["run", "--out", str(tmp_path)]) == 1
        assert "Problem/problem" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert cli_main(["run", "--config", str(tmp_path / "missing.ini")]) == 1


def test_bench(config, tmp_path, capsys):
    code = cli_main(
        f"-q bench --problem bar1d --divisions 10 --config {config} "
        f"--backends loop,batched --out {tmp_path}".split()
    )
    assert code == 0
    report = ConfigIni(tmp_path / "benchmark.ini")
    assert report["Benchmark/problem"] == "bar1d"
    assert report["Backend loop/repeats"] == "1"
    assert report["Speedup/loop"] == "1.0000"
    assert (tmp_path / "config.ini").exists()
    assert "bar1d: 10 elements" in capsys.readouterr().out
