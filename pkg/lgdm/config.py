"""Run configuration files

- :obj:`ConfigIni` reads and writes sectioned `key value [value ...]` files
- :func:`parse_config` resolves a configuration against the problem defaults

Example file::

    [Problem]

    schema_version  1
    problem         sen2d

    [Geometry]

    divisions  80  80

    [Material]

    kappa0  1e-4
"""
from collections import OrderedDict
from dataclasses import dataclass
from itertools import zip_longest
from pathlib import Path
from typing import Dict, List, Tuple

from .constitutive import MaterialParams
from .exceptions import ConfigError
from .problems import ProblemSpec, build_problem
from .solver import NewtonConfig

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class OutputOptions:
    """Output settings

    Attributes:
        snapshot_interval (int): write fields every n steps (and at the last step)
        write_vtk (bool): write field snapshots
    """

    snapshot_interval: int = 10
    write_vtk: bool = True


class ConfigIni(OrderedDict):
    """Sectioned configuration file

    Values are strings, or lists of strings for multi-valued keys. Read access
    with `ini["section"]["key"]`, `ini["section", "key"]` or `ini["section/key"]`,
    the last two also assign.

    Example:
        >>> ini = ConfigIni("run.ini")
        >>> ini["Material/E"]
    """

    sections = OrderedDict.values

    class Section(OrderedDict):
        """Named group of `key value [value ...]` lines"""

        def __init__(self, name: str, *args, **kwargs):
            super().__init__(*args, **kwargs)
            self.name = name

        def _columns(self) -> List[int]:
            rows = [[key, *_as_list(value)] for key, value in self.items()]
            columns = zip_longest(*rows, fillvalue="")
            return [max(len(cell) for cell in column) for column in columns]

        def __str__(self) -> str:
            """Section with aligned value columns"""
            widths = self._columns()
            lines = [f"[{self.name}]", ""]
            for key, value in self.items():
                cells = [f"{key:<{widths[0]}}"]
                cells += [f"{v:>{w}}" for w, v in zip(widths[1:], _as_list(value))]
                lines.append("  ".join(cells).rstrip())
            return "\n".join(lines) + "\n"

    def __init__(self, path: Path = None):
        """Empty configuration, or the contents of `path`"""
        super().__init__()
        self.path = None if path is None else Path(path)
        if self.path is not None:
            self.parse(self.path.read_text())

    @classmethod
    def from_text(cls, txt: str) -> "ConfigIni":
        ini = cls()
        ini.parse(txt)
        return ini

    def parse(self, txt: str) -> None:
        """Add the sections and keys of `txt`, `#` starts a comment line"""
        section = None
        for number, line in enumerate(txt.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                name = line[1:-1].strip()
                if name not in self:
                    super().__setitem__(name, self.Section(name))
                section = super().__getitem__(name)
                continue
            if section is None:
                raise ConfigError(None, f"line {number}: key outside of any section")
            key, *values = line.split()
            if not values:
                raise ConfigError(f"{section.name}/{key}", "missing value")
            section[key] = values[0] if len(values) == 1 else values

    def __repr__(self) -> str:
        return f"{type(self).__name__}('{self.path}')"

    def __str__(self) -> str:
        return "\n".join(str(section) for section in self.sections())

    @staticmethod
    def _split_key(key) -> tuple:
        if isinstance(key, tuple):
            return key
        section, _, name = key.partition("/")
        return (section, name) if name else (section,)

    def __getitem__(self, key):
        section, *name = self._split_key(key)
        found = super().__getitem__(section)
        return found[name[0]] if name else found

    def __setitem__(self, key, value):
        section, *name = self._split_key(key)
        if not name:
            raise KeyError(f"'{key}' names a section, assign keys as 'section/key'")
        if section in self:
            self[section][name[0]] = value
        else:
            super().__setitem__(section, self.Section(section, {name[0]: value}))

    def get_value(self, section: str, key: str, default=None):
        """Raw value or `default` if section or key are missing"""
        if section in self and key in self[section]:
            return self[section][key]
        return default

    def write(self, path: Path) -> None:
        Path(path).write_text(str(self))


def _as_list(value) -> list:
    return value if isinstance(value, list) else [value]


# section -> key -> (type, target)
# types: float, int, str, bool, floats, ints; targets: problem, material, newton, output
SCHEMA: Dict[str, Dict[str, Tuple[str, str]]] = {
    "Problem": {"schema_version": ("int", None), "problem": ("str", None)},
    "Geometry": {
        "extents": ("floats", "problem"),
        "divisions": ("ints", "problem"),
        "section": ("float", "problem"),
        "notch_type": ("str", "problem"),
        "notch_anchor": ("floats", "problem"),
        "notch_direction": ("ints", "problem"),
        "notch_length": ("float", "problem"),
        "band_width": ("float", "problem"),
        "band_reduction": ("float", "problem"),
        "defect_center": ("float", "problem"),
        "defect_width": ("float", "problem"),
        "defect_reduction": ("float", "problem"),
    },
    "Material": {name: ("float", "material") for name in MaterialParams.names()},
    "Load": {
        "total_displacement": ("float", "problem"),
        "steps": ("int", "problem"),
        "driven": ("str", "problem"),
        "fixed": ("str", "problem"),
    },
    "Solver": {
        "backend": ("str", "newton"),
        "tol": ("float", "newton"),
        "max_iterations": ("int", "newton"),
        "divergence_factor": ("float", "newton"),
        "workers": ("int", "newton"),
        "tangent": ("str", "newton"),
    },
    "Output": {"snapshot_interval": ("int", "output"), "write_vtk": ("bool", "output")},
}

_BOOLS = {"yes": True, "true": True, "1": True, "no": False, "false": False, "0": False}


def _convert(key: str, kind: str, raw):
    values = raw if isinstance(raw, list) else [raw]
    scalar = kind in ("float", "int", "str", "bool")
    if scalar and len(values) != 1:
        raise ConfigError(key, f"expects a single value, got {' '.join(values)}")
    try:
        if kind in ("float", "floats"):
            converted = [float(v) for v in values]
        elif kind in ("int", "ints"):
            converted = [int(v) for v in values]
        elif kind == "bool":
            converted = [_BOOLS[values[0].lower()]]
        else:
            converted = values
    except (ValueError, KeyError):
        raise ConfigError(key, f"invalid {kind.rstrip('s')} value '{' '.join(values)}'") from None
    return converted[0] if scalar else tuple(converted)


def _format(kind: str, value):
    if kind in ("floats", "ints"):
        return [repr(float(v)) if kind == "floats" else str(int(v)) for v in value]
    if kind == "float":
        return repr(float(value))
    if kind == "bool":
        return "yes" if value else "no"
    return str(value)


def resolve_config(ini: ConfigIni) -> Tuple[ProblemSpec, NewtonConfig, OutputOptions]:
    """Resolve a parsed configuration against the problem defaults

    Args:
        ini (ConfigIni): parsed configuration

    Returns:
        tuple: (ProblemSpec, NewtonConfig, OutputOptions)

    Raises:
        ConfigError: for unknown or missing keys and invalid values, naming the key path
    """
    groups = {"problem": {}, "material": {}, "newton": {}, "output": {}}
    for section in ini.sections():
        if section.name not in SCHEMA:
            raise ConfigError(
                section.name, f"unknown section, expected one of {', '.join(SCHEMA)}"
            )
        for key, raw in section.items():
            path = f"{section.name}/{key}"
            if key not in SCHEMA[section.name]:
                raise ConfigError(path, "unknown key")
            kind, target = SCHEMA[section.name][key]
            value = _convert(path, kind, raw)
            if target is not None:
                groups[target][key] = value

    version = ini.get_value("Problem", "schema_version", str(SCHEMA_VERSION))
    if _convert("Problem/schema_version", "int", version) != SCHEMA_VERSION:
        raise ConfigError("Problem/schema_version", f"unsupported version {version}")
    problem_id = ini.get_value("Problem", "problem")
    if problem_id is None:
        raise ConfigError("Problem/problem", "required key is missing")

    problem_id = _convert("Problem/problem", "str", problem_id)
    spec = build_problem(problem_id, {**groups["problem"], **groups["material"]})

    newton = NewtonConfig(**groups["newton"])
    for key, message in newton.violations():
        raise ConfigError(key, message)
    output = OutputOptions(**groups["output"])
    if output.snapshot_interval < 0:
        raise ConfigError("Output/snapshot_interval", "must be >= 0")
    return spec, newton, output


def parse_config(text: str) -> Tuple[ProblemSpec, NewtonConfig, OutputOptions]:
    """Parse and resolve configuration text

    Args:
        text (str): configuration in :obj:`ConfigIni` format

    Returns:
        tuple: (ProblemSpec, NewtonConfig, OutputOptions)
    """
    return resolve_config(ConfigIni.from_text(text))


def load_config(path: Path = None, overrides: dict = None):
    """Read a configuration file and apply overrides

    Args:
        path (Path, optional): configuration file, defaults are used without
        overrides (dict, optional): raw values by key path, e.g.
            `{"Problem/problem": "bar1d", "Geometry/divisions": ["40"]}`

    Returns:
        tuple: (ProblemSpec, NewtonConfig, OutputOptions)
    """
    ini = ConfigIni(path) if path is not None else ConfigIni()
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if isinstance(value, (list, tuple)):
            value = [str(v) for v in value]
            value = value[0] if len(value) == 1 else value
        ini[key] = str(value) if not isinstance(value, list) else value
    return resolve_config(ini)


def echo_config(spec: ProblemSpec, newton: NewtonConfig, output: OutputOptions) -> ConfigIni:
    """Fully resolved configuration, parsing it reproduces the same objects"""
    ini = ConfigIni()
    ini["Problem/schema_version"] = str(SCHEMA_VERSION)
    ini["Problem/problem"] = spec.problem
    sources = {
        "problem": spec,
        "material": spec.material,
        "newton": newton,
        "output": output,
    }
    for section, keys in SCHEMA.items():
        for key, (kind, target) in keys.items():
            if target is None:
                continue
            value = getattr(sources[target], key)
            if kind in ("floats", "ints") and len(value) == 0:
                continue
            ini[section, key] = _format(kind, value)
    return ini


__all__ = [
    "ConfigIni",
    "OutputOptions",
    "SCHEMA",
    "echo_config",
    "load_config",
    "parse_config",
    "resolve_config",
]
