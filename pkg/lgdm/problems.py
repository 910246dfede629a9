"""Benchmark problem definitions

- `bar1d`: bar in tension with a weakened central defect
- `sen2d`: plane strain single edge notched plate in tension
- `sen3d`: `sen2d` extruded in thickness direction

Default geometry and material values are representative, they are not taken
from any reference result. Everything can be overridden.
"""
import logging
from dataclasses import dataclass, field, fields, replace
from typing import Dict, Optional, Tuple

import numpy as np

from .constitutive import MaterialParams, virgin_kappa
from .exceptions import ConfigError
from .geometry import model_geometry
from .mesh import (
    AXES,
    Constraint,
    DofMap,
    Mesh,
    NotchSpec,
    build_dof_map,
    build_structured_mesh,
    carve_notch,
)
from .misc import frozen

logger = logging.getLogger(__name__)

NOTCH_TYPES = ("slit", "band", "none")


@dataclass(frozen=True)
class ProblemSpec:
    """Fully resolved benchmark definition

    Attributes:
        problem (str): problem id
        dim (int): spatial dimension
        extents (tuple of float): box lengths, mm
        divisions (tuple of int): elements per axis
        section (float): cross section (1D, mm^2) or thickness (2D, mm), 1 in 3D
        material (MaterialParams): material parameters
        total_displacement (float): prescribed displacement at the end of loading, mm
        steps (int): number of load steps
        driven (str): boundary with prescribed displacement
        fixed (str): supported boundary
        notch_type (str): `slit`, `band` or `none`
        notch_anchor (tuple of float): notch start, mm
        notch_direction (tuple of int): notch direction (axis-aligned unit vector)
        notch_length (float): notch length, mm
        band_width (float): width of the weakened band notch, mm
        band_reduction (float): fraction of kappa0 removed inside the band
        defect_center (float): center of the bar defect, mm
        defect_width (float): length of the bar defect, mm (0 disables it)
        defect_reduction (float): fraction of kappa0 removed inside the defect
    """

    problem: str
    dim: int
    extents: Tuple[float, ...]
    divisions: Tuple[int, ...]
    section: float
    material: MaterialParams
    total_displacement: float
    steps: int
    driven: str
    fixed: str
    notch_type: str = "none"
    notch_anchor: Tuple[float, ...] = ()
    notch_direction: Tuple[int, ...] = ()
    notch_length: float = 0.0
    band_width: float = 0.0
    band_reduction: float = 0.0
    defect_center: float = 0.0
    defect_width: float = 0.0
    defect_reduction: float = 0.0

    @property
    def increment(self) -> float:
        """Prescribed displacement per load step, mm"""
        return self.total_displacement / self.steps

    @property
    def element_count(self) -> int:
        return int(np.prod(self.divisions))

    @property
    def notch(self) -> Optional[NotchSpec]:
        if self.notch_type == "none" or self.notch_length == 0:
            return None
        return NotchSpec(self.notch_anchor, self.notch_direction, self.notch_length)

    def violations(self):
        """List of (key path, message) for every violated invariant"""
        out = [(f"Material/{name}", msg) for name, msg in self.material.violations()]
        dim = self.dim
        if len(self.extents) != dim or any(not L > 0 for L in self.extents):
            out.append(("Geometry/extents", f"need {dim} positive values, got {self.extents}"))
        if len(self.divisions) != dim or any(n < 1 for n in self.divisions):
            out.append(("Geometry/divisions", f"need {dim} values >= 1, got {self.divisions}"))
        if not self.section > 0:
            out.append(("Geometry/section", f"must be > 0, got {self.section!r}"))
        if self.notch_type not in NOTCH_TYPES:
            out.append(("Geometry/notch_type", f"must be one of {NOTCH_TYPES}"))
        elif self.notch_type != "none" and dim == 1:
            out.append(("Geometry/notch_type", "notches need a 2D or 3D problem"))
        elif self.notch_type != "none" and (
            len(self.notch_anchor) != dim or len(self.notch_direction) != dim
        ):
            out.append(("Geometry/notch_anchor", f"anchor and direction need {dim} values"))
        if self.notch_length < 0:
            out.append(("Geometry/notch_length", "must be >= 0"))
        if self.notch_type == "band" and not self.band_width > 0:
            out.append(("Geometry/band_width", "must be > 0 for a band notch"))
        for key in ("band_reduction", "defect_reduction"):
            if not 0 <= getattr(self, key) < 1:
                out.append((f"Geometry/{key}", "must be in [0, 1)"))
        if self.defect_width < 0:
            out.append(("Geometry/defect_width", "must be >= 0"))
        if self.steps < 1:
            out.append(("Load/steps", f"must be >= 1, got {self.steps}"))
        for key in ("driven", "fixed"):
            name = getattr(self, key)
            if len(name) != 2 or name[0] not in AXES[:dim] or name[1] not in "+-":
                out.append((f"Load/{key}", f"unknown boundary '{name}'"))
        if self.driven == self.fixed:
            out.append(("Load/driven", "driven and fixed boundary must differ"))
        return out

    def validate(self) -> "ProblemSpec":
        for key, message in self.violations():
            raise ConfigError(key, message)
        return self


_SEN_MATERIAL = MaterialParams(
    E=20000.0,
    nu=0.2,
    k=10.0,
    kappa0=2e-3,
    alpha=0.99,
    beta=10.0,
    h=2000.0,
    c=4.0,
    R=0.005,
    n=5.0,
)

DEFAULTS: Dict[str, ProblemSpec] = {
    "bar1d": ProblemSpec(
        problem="bar1d",
        dim=1,
        extents=(100.0,),
        divisions=(1000,),
        section=1.0,
        material=MaterialParams(
            E=20000.0,
            nu=0.0,
            k=1.0,
            kappa0=1e-6,
            alpha=0.99,
            beta=5000.0,
            h=2000.0,
            c=4.0,
            R=0.005,
            n=5.0,
        ),
        total_displacement=0.02,
        steps=1000,
        driven="x+",
        fixed="x-",
        defect_center=50.0,
        defect_width=10.0,
        defect_reduction=0.1,
    ),
    "sen2d": ProblemSpec(
        problem="sen2d",
        dim=2,
        extents=(100.0, 100.0),
        divisions=(50, 50),
        section=1.0,
        material=_SEN_MATERIAL,
        total_displacement=0.8,
        steps=80,
        driven="y+",
        fixed="y-",
        notch_type="slit",
        notch_anchor=(0.0, 50.0),
        notch_direction=(1, 0),
        notch_length=50.0,
        band_width=2.0,
        band_reduction=0.5,
    ),
    "sen3d": ProblemSpec(
        problem="sen3d",
        dim=3,
        extents=(100.0, 100.0, 10.0),
        divisions=(50, 50, 5),
        section=1.0,
        material=_SEN_MATERIAL,
        total_displacement=0.8,
        steps=80,
        driven="y+",
        fixed="y-",
        notch_type="slit",
        notch_anchor=(0.0, 50.0, 0.0),
        notch_direction=(1, 0, 0),
        notch_length=50.0,
        band_width=2.0,
        band_reduction=0.5,
    ),
}

PROBLEMS = tuple(DEFAULTS)
_SPEC_KEYS = {f.name for f in fields(ProblemSpec)} - {"problem", "dim", "material"}


def build_problem(problem_id: str, overrides: dict = None) -> ProblemSpec:
    """Problem definition with defaults, updated by `overrides`

    Args:
        problem_id (str): `bar1d`, `sen2d` or `sen3d`
        overrides (dict, optional): values by :obj:`ProblemSpec` field name or
            :obj:`MaterialParams` parameter name

    Returns:
        ProblemSpec: validated definition

    Raises:
        ConfigError: for unknown ids/keys or violated invariants
    """
    if problem_id not in DEFAULTS:
        raise ConfigError(
            "Problem/problem", f"unknown problem '{problem_id}', valid: {', '.join(PROBLEMS)}"
        )
    spec = DEFAULTS[problem_id]
    overrides = dict(overrides or {})
    material = {k: overrides.pop(k) for k in list(overrides) if k in MaterialParams.names()}
    unknown = set(overrides) - _SPEC_KEYS
    if unknown:
        raise ConfigError(None, f"Unknown problem parameters: {', '.join(sorted(unknown))}")
    for key in ("extents", "notch_anchor"):
        if key in overrides:
            overrides[key] = tuple(float(x) for x in overrides[key])
    for key in ("divisions", "notch_direction"):
        if key in overrides:
            overrides[key] = tuple(int(x) for x in overrides[key])
    if material:
        overrides["material"] = replace(spec.material, **{k: float(v) for k, v in material.items()})
    return replace(spec, **overrides).validate()


@dataclass(frozen=True, eq=False)
class Model:
    """Discretized problem ready for the solver

    Attributes:
        spec (ProblemSpec): problem definition
        mesh (Mesh): mesh, notched if requested
        dofmap (DofMap): global DOF numbering
        constraints (tuple of Constraint): prescribed displacement DOFs
        kappa0 (numpy.ndarray): damage threshold per Gauss point
    """

    spec: ProblemSpec
    mesh: Mesh
    dofmap: DofMap
    constraints: Tuple[Constraint, ...]
    kappa0: np.ndarray = field(repr=False)

    @property
    def params(self) -> MaterialParams:
        return self.spec.material


def boundary_constraints(mesh: Mesh, driven: str, fixed: str, increment: float):
    """Displacement control and supports without rigid body motion

    The normal component of all nodes on `fixed` is held, the remaining
    components are held at the boundary's corner node with the smallest
    coordinates, and in 3D the first in-plane component is also held at the
    corner opposite in the last in-plane axis. The normal component of all
    nodes on `driven` moves by `increment` per step.

    Returns:
        tuple of Constraint
    """
    dim = mesh.dim
    coords = mesh.node_coords_u
    constraints = []

    fixed_axis = AXES.index(fixed[0])
    fixed_nodes = mesh.boundary_nodes(fixed)
    constraints += [Constraint(dim * a + fixed_axis) for a in fixed_nodes]

    others = [i for i in range(dim) if i != fixed_axis]
    if others:
        local = coords[fixed_nodes]
        corner = fixed_nodes[np.lexsort(local.T[::-1])[0]]
        constraints += [Constraint(dim * corner + i) for i in others]
        if dim == 3:
            first, last = others
            on_edge = np.isclose(local[:, first], local[:, first].min())
            candidates = fixed_nodes[on_edge]
            opposite = candidates[np.argmax(coords[candidates, last])]
            constraints.append(Constraint(dim * opposite + first))

    driven_axis = AXES.index(driven[0])
    constraints += [
        Constraint(dim * a + driven_axis, increment, "driven") for a in mesh.boundary_nodes(driven)
    ]
    return tuple(constraints)


def kappa0_field(spec: ProblemSpec, points: np.ndarray) -> np.ndarray:
    """Damage threshold at Gauss points, reduced in defects and band notches"""
    kappa0 = virgin_kappa(None, spec.material, len(points))
    if spec.defect_width > 0:
        inside = np.abs(points[:, 0] - spec.defect_center) <= spec.defect_width / 2
        kappa0[inside] *= 1 - spec.defect_reduction
    if spec.notch_type == "band" and spec.notch is not None:
        kappa0[spec.notch.band(points, spec.band_width)] *= 1 - spec.band_reduction
    return kappa0


def build_model(spec: ProblemSpec) -> Model:
    """Mesh, DOF map, constraints and threshold field of a problem

    Raises:
        UnsupportedGeometryError: for notches not aligned with the mesh
    """
    mesh = build_structured_mesh(spec.dim, spec.extents, spec.divisions)
    if spec.notch_type == "slit" and spec.notch is not None:
        mesh = carve_notch(mesh, spec.notch)
    dofmap = build_dof_map(mesh, spec.dim)
    constraints = boundary_constraints(mesh, spec.driven, spec.fixed, spec.increment)
    points = model_geometry(mesh).points
    logger.debug(f"{spec.problem}: {mesh}")
    return Model(
        spec=spec,
        mesh=mesh,
        dofmap=dofmap,
        constraints=constraints,
        kappa0=frozen(kappa0_field(spec, points)),
    )


def describe(spec: ProblemSpec) -> str:
    """One line summary of a problem"""
    divisions = "x".join(str(n) for n in spec.divisions)
    notch = "" if spec.notch is None else f", {spec.notch_type} notch {spec.notch_length} mm"
    return (
        f"{spec.problem}: {divisions} elements{notch}, "
        f"{spec.total_displacement} mm at {spec.driven} in {spec.steps} steps"
    )

