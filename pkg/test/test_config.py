from textwrap import dedent

import pytest

from lgdm.config import ConfigIni, OutputOptions, echo_config, load_config, parse_config
from lgdm.exceptions import ConfigError
from lgdm.problems import DEFAULTS
from lgdm.solver import NewtonConfig

EXAMPLE = dedent(
    """
    # single edge notched plate, finer mesh
    [Problem]

    schema_version  1
    problem         sen2d

    [Geometry]

    divisions  80  80

    [Material]

    kappa0  1e-4
    nu      0.25

    [Solver]

    backend         loop
    tol             1e-6

    [Output]

    write_vtk  no
    """
)


class TestConfigIni:
    @pytest.fixture
    def ini(self):
        return ConfigIni.from_text(EXAMPLE)

    def test_access(self, ini):
        assert ini["Problem"]["problem"] == "sen2d"
        assert ini["Geometry", "divisions"] == ["80", "80"]
        assert ini["Material/kappa0"] == "1e-4"
        assert ini.get_value("Load", "steps") is None

    def test_set(self, ini):
        ini["Load/steps"] = "5"
        ini["Material", "E"] = "3e4"
        assert ini["Load"]["steps"] == "5"
        assert ini["Material"]["E"] == "3e4"
        assert ini["Load"].name == "Load"

    def test_aligned_output(self, ini):
        text = str(ini)
        assert "[Solver]\n\nbackend  loop\ntol      1e-6\n" in text
        assert ConfigIni.from_text(text) == ini

    def test_file_round_trip(self, ini, tmp_path):
        path = tmp_path / "run.ini"
        ini.write(path)
        assert ConfigIni(path) == ini

    def test_key_outside_section(self):
        with pytest.raises(ConfigError, match="line 1"):
            ConfigIni.from_text("problem bar1d\n")

    def test_missing_value(self):
        with pytest.raises(ConfigError) as err:
            ConfigIni.from_text("[Load]\nsteps\n")
        assert err.value.key == "Load/steps"

    def test_section_assignment(self, ini):
        with pytest.raises(KeyError):
            ini["Load"] = "5"
        assert "Load" not in ini


class TestParseConfig:
    def test_defaults(self):
        spec, newton, output = parse_config("[Problem]\nproblem bar1d\n")
        assert spec == DEFAULTS["bar1d"]
        assert newton == NewtonConfig()
        assert output == OutputOptions()

    def test_values(self):
        spec, newton, output = parse_config(EXAMPLE)
        assert spec.divisions == (80, 80)
        assert spec.material.kappa0 == 1e-4
        assert spec.material.nu == 0.25
        assert spec.material.E == DEFAULTS["sen2d"].material.E
        assert newton.backend == "loop" and newton.tol == 1e-6
        assert output.write_vtk is False

    @pytest.mark.parametrize(
        "text, key",
        [
            ("[Problem]\nproblem sen2d\n[Material]\nnu 0.6\n", "Material/nu"),
            ("[Problem]\nproblem sen2d\n[Material]\nmu 0.3\n", "Material/mu"),
            ("[Problem]\nproblem sen2d\n[Mesh]\nsize 1\n", "Mesh"),
            ("[Geometry]\ndivisions 10 10\n", "Problem/problem"),
            ("[Problem]\nproblem sen2d\n[Load]\nsteps many\n", "Load/steps"),
            ("[Problem]\nproblem sen2d\n[Load]\nsteps 3 4\n", "Load/steps"),
            ("[Problem]\nproblem sen2d\nschema_version 2\n", "Problem/schema_version"),
            ("[Problem]\nproblem sen2d\n[Solver]\nbackend gpu\n", "Solver/backend"),
            ("[Problem]\nproblem sen2d\n[Output]\nwrite_vtk maybe\n", "Output/write_vtk"),
            ("[Problem]\nproblem sen5d\n", "Problem/problem"),
        ],
    )
    def test_errors_name_key(self, text, key):
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        assert err.value.key == key
        assert str(err.value).startswith(key)

    @pytest.mark.parametrize("problem", ["bar1d", "sen2d", "sen3d"])
    def test_echo_round_trip(self, problem):
        resolved = parse_config(f"[Problem]\nproblem {problem}\n[Material]\nkappa0 1.234e-4\n")
        echoed = str(echo_config(*resolved))
        assert parse_config(echoed) == resolved
        assert str(echo_config(*parse_config(echoed))) == echoed

    @pytest.mark.parametrize("flag, expected", [("yes", True), ("No", False), ("1", True)])
    def test_bool_values(self, flag, expected):
        resolved = parse_config(f"[Problem]\nproblem bar1d\n[Output]\nwrite_vtk {flag}\n")
        assert resolved[2].write_vtk is expected
        assert parse_config(str(echo_config(*resolved)))[2].write_vtk is expected

    def test_echo_is_complete(self):
        ini = echo_config(*parse_config(EXAMPLE))
        assert ini["Problem/schema_version"] == "1"
        assert ini["Material/kappa0"] == "0.0001"
        assert ini["Geometry/divisions"] == ["80", "80"]
        assert ini["Solver/backend"] == "loop"
        assert ini["Output/write_vtk"] == "no"


class TestLoadConfig:
    def test_overrides_win(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text(EXAMPLE)
        spec, newton, output = load_config(
            path,
            {
                "Problem/problem": None,
                "Geometry/divisions": [20, 20],
                "Solver/backend": "batched",
                "Output/snapshot_interval": 3,
            },
        )
        assert spec.problem == "sen2d"
        assert spec.divisions == (20, 20)
        assert spec.material.kappa0 == 1e-4
        assert newton.backend == "batched"
        assert output.snapshot_interval == 3

    def test_without_file(self):
        spec, _, _ = load_config(None, {"Problem/problem": "bar1d", "Geometry/divisions": [40]})
        assert spec.divisions == (40,)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_config(tmp_path / "missing.ini")
