"""Result files

- `load_displacement.csv`: one row per accepted load step
- `fields_NNNNNN.vtk`: legacy ASCII unstructured grids of field snapshots
- `timing.ini` / `benchmark.ini`: phase timings
- `config.ini`: resolved configuration
"""
import csv
import logging
from pathlib import Path

import meshio
import numpy as np

from .benchmark import BackendTiming, TimingReport, peak_rss_mb
from .elements import ElementFamily
from .exceptions import InvalidArgumentError
from .geometry import model_geometry
from .mesh import Mesh

logger = logging.getLogger(__name__)

CSV_HEADER = ("step", "displacement", "reaction", "iterations")
VTK_CELL_TYPES = {
    ElementFamily.LINE2: "line",
    ElementFamily.QUAD4: "quad",
    ElementFamily.HEX8: "hexahedron",
}


def write_load_displacement_csv(result, path: Path) -> None:
    """Write the load-displacement history

    Floats are written with `repr`, reading them back gives identical values.

    Args:
        result (SimulationResult): completed run
        path (Path): output file
    """
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for record in result.steps:
            writer.writerow(
                (
                    record.step,
                    repr(float(record.displacement)),
                    repr(float(record.reaction)),
                    record.iterations,
                )
            )


def _pad3(array: np.ndarray) -> np.ndarray:
    array = np.asarray(array, dtype=float)
    out = np.zeros((len(array), 3))
    out[:, : array.shape[1]] = array
    return out


def snapshot_mesh(mesh: Mesh, snapshot) -> meshio.Mesh:
    """Field snapshot on the corner-node grid of the micro-strain field"""
    try:
        cell_type = VTK_CELL_TYPES[mesh.family_e]
    except KeyError:
        raise InvalidArgumentError(f"No VTK cell type for {mesh.family_e.value}") from None
    geometry = model_geometry(mesh)
    u = np.asarray(snapshot.u).reshape(-1, mesh.dim)[mesh.corner_nodes_u]
    return meshio.Mesh(
        points=_pad3(mesh.node_coords_e),
        cells=[(cell_type, np.asarray(mesh.conn_e))],
        point_data={"u": _pad3(u), "ebar": np.asarray(snapshot.ebar, dtype=float)},
        cell_data={
            "D": [geometry.element_mean(snapshot.D)],
            "kappa": [geometry.element_mean(snapshot.kappa)],
            "psi": [geometry.element_mean(snapshot.psi)],
        },
    )


def write_vtk_fields(mesh: Mesh, snapshot, path: Path) -> None:
    """Write a snapshot as legacy ASCII VTK unstructured grid

    Args:
        mesh (Mesh): mesh of the run
        snapshot (Snapshot): fields of one step
        path (Path): output file
    """
    meshio.vtk.write(path, snapshot_mesh(mesh, snapshot), binary=False, fmt_version="4.2")


def snapshot_filename(step: int) -> str:
    return f"fields_{step:06d}.vtk"


def write_results(result, directory: Path, config_ini=None, timer=None, write_vtk=True) -> list:
    """Write all result files of a run into `directory`

    Args:
        result (SimulationResult): completed run
        directory (Path): output directory, created if missing
        config_ini (ConfigIni, optional): resolved configuration to echo
        timer (PhaseTimer, optional): phase timings of the run
        write_vtk (bool): write field snapshots

    Returns:
        list of Path: written files
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    if config_ini is not None:
        config_ini.write(directory / "config.ini")
        written.append(directory / "config.ini")
    write_load_displacement_csv(result, directory / "load_displacement.csv")
    written.append(directory / "load_displacement.csv")
    if write_vtk:
        for snapshot in result.snapshots:
            path = directory / snapshot_filename(snapshot.step)
            write_vtk_fields(result.model.mesh, snapshot, path)
            written.append(path)
    if timer is not None:
        write_timing(result, timer, directory / "timing.ini")
        written.append(directory / "timing.ini")
    logger.info(f"Wrote {len(written)} files to {directory}")
    return written


def write_timing(result, timer, path: Path) -> None:
    """Phase totals of a single run as :obj:`BackendTiming` report"""
    timing = BackendTiming(
        result.backend,
        iterations=list(timer.iterations),
        repeat_totals=[timer.totals()["total"]],
        repeat_iterations=[len(timer.iterations)],
        peak_rss_mb=peak_rss_mb(),
    )
    report = TimingReport(result.model.spec.problem, result.model.mesh.element_count, [timing])
    report.to_ini().write(path)
