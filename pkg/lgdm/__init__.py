try:
    import importlib.metadata

    __version__ = importlib.metadata.version("lgdm")
    del importlib
except ImportError:  # Python <3.8
    import pkg_resources

    __version__ = pkg_resources.get_distribution("lgdm").version
    del pkg_resources


from . import misc
from .benchmark import run_benchmark
from .config import ConfigIni, parse_config
from .constitutive import MaterialParams
from .mesh import Mesh, build_structured_mesh, carve_notch
from .output import write_load_displacement_csv, write_vtk_fields
from .problems import build_model, build_problem
from .solver import NewtonConfig, run_simulation
