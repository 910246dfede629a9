"""Incremental-iterative Newton solver

Each load step applies the displacement increment and iterates
assemble -> constrain -> solve -> update until the relative increments of both
fields drop below the tolerance. The damage history is measured against the
value committed at the start of the step and committed on acceptance only.
"""
import logging
from contextlib import nullcontext
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np
from scipy.sparse.linalg import splu

from .assembly import (
    BACKENDS,
    TANGENTS,
    SparseSystem,
    apply_dirichlet,
    assemble,
    reaction_force,
)
from .constitutive import (
    MaterialParams,
    PointState,
    elasticity_matrix,
    free_energy_density,
    point_update,
)
from .elements import gauss_rule
from .exceptions import (
    InvalidArgumentError,
    InvalidStateError,
    SolverError,
    StepFailureError,
)
from .geometry import element_geometry, model_geometry
from .mesh import DofMap, Mesh
from .misc import chunks, frozen, map_ordered
from .problems import Model, ProblemSpec, build_model

logger = logging.getLogger(__name__)

CONVERGENCE_FLOOR = 1e-16
PIVOT_RATIO_LIMIT = 1e-13
RESIDUAL_CHECK = 1e-9
DIVERGENCE_WINDOW = 3


@dataclass(frozen=True)
class NewtonConfig:
    """Newton iteration settings

    Attributes:
        tol (float): tolerance on the relative increment norms
        max_iterations (int): iteration budget per load step
        steps (int, optional): overrides the problem's number of load steps
        divergence_factor (float): residual growth factor counted as divergence
        backend (str): `loop` or `batched`
        workers (int): worker processes of the loop backend
        tangent (str): `convex` or `consistent`, see :obj:`lgdm.assembly.TANGENTS`
    """

    tol: float = 1e-4
    max_iterations: int = 25
    steps: Optional[int] = None
    divergence_factor: float = 10.0
    backend: str = "batched"
    workers: int = 1
    tangent: str = "convex"

    def violations(self):
        out = []
        if not self.tol > 0:
            out.append(("Solver/tol", f"must be > 0, got {self.tol!r}"))
        if self.max_iterations < 1:
            out.append(("Solver/max_iterations", f"must be >= 1, got {self.max_iterations}"))
        if self.steps is not None and self.steps < 1:
            out.append(("Load/steps", f"must be >= 1, got {self.steps}"))
        if not self.divergence_factor > 1:
            out.append(("Solver/divergence_factor", "must be > 1"))
        if self.backend not in BACKENDS:
            out.append(("Solver/backend", f"must be one of {BACKENDS}, got '{self.backend}'"))
        if self.workers < 1:
            out.append(("Solver/workers", f"must be >= 1, got {self.workers}"))
        if self.tangent not in TANGENTS:
            out.append(("Solver/tangent", f"must be one of {TANGENTS}, got '{self.tangent}'"))
        return out


@dataclass(frozen=True)
class GpState(PointState):
    """Gauss point state of the whole model, flat over `nel * ngp` points

    Adds the per point damage threshold `kappa0` to :obj:`PointState`.
    All arrays are read-only.
    """

    kappa0: np.ndarray = None

    @property
    def point_count(self) -> int:
        return len(self.eeq)


@dataclass(frozen=True)
class StepRecord:
    step: int
    displacement: float
    reaction: float
    iterations: int


@dataclass(frozen=True)
class IterationRecord:
    """Convergence log entry

    Attributes:
        step (int): load step
        iteration (int): Newton iteration (1-based)
        du (float): relative displacement increment
        de (float): relative micro-strain increment
        residual (float): norm of the constrained right-hand side at free DOFs
    """

    step: int
    iteration: int
    du: float
    de: float
    residual: float


@dataclass(frozen=True)
class Snapshot:
    """Field snapshot after an accepted step

    Attributes:
        step (int): load step
        displacement (float): applied displacement, mm
        u (numpy.ndarray): nodal displacements, shape (nnode_u, dim)
        ebar (numpy.ndarray): nodal micro-equivalent strain, shape (nnode_e,)
        D (numpy.ndarray): damage per Gauss point
        kappa (numpy.ndarray): history per Gauss point
        psi (numpy.ndarray): free energy density per Gauss point, MPa
        energy (float): total stored energy, N mm (per unit section)
    """

    step: int
    displacement: float
    u: np.ndarray = field(repr=False)
    ebar: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)
    kappa: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    energy: float = 0.0


@dataclass
class SimulationResult:
    """Outcome of :func:`run_simulation`

    Attributes:
        model (Model): solved model
        backend (str): assembly backend used
        steps (list of StepRecord): one record per accepted load step
        snapshots (list of Snapshot): periodic and final field snapshots
        log (list of IterationRecord): all Newton iterations
        state (GpState): final Gauss point state
    """

    model: Model
    backend: str
    steps: List[StepRecord] = field(default_factory=list)
    snapshots: List[Snapshot] = field(default_factory=list)
    log: List[IterationRecord] = field(default_factory=list)
    state: Optional[GpState] = None

    @property
    def displacements(self) -> np.ndarray:
        return np.array([r.displacement for r in self.steps])

    @property
    def reactions(self) -> np.ndarray:
        return np.array([r.reaction for r in self.steps])

    @property
    def iterations(self) -> np.ndarray:
        return np.array([r.iterations for r in self.steps], dtype=int)

    @property
    def peak_reaction(self) -> float:
        return float(self.reactions.max()) if self.steps else 0.0

    def __str__(self) -> str:
        return (
            f"{self.model.spec.problem} ({self.backend}): {len(self.steps)} steps, "
            f"{int(self.iterations.sum())} iterations, peak reaction {self.peak_reaction:.6g}"
        )


def check_convergence(du, u, de, e, tol: float) -> bool:
    """Relative increment criterion on both fields

    `|du| / max(|u|, 1e-16) <= tol` and the same for the micro-strain field.
    """
    return relative_norm(du, u) <= tol and relative_norm(de, e) <= tol


def relative_norm(delta, total) -> float:
    return float(np.linalg.norm(delta) / max(np.linalg.norm(total), CONVERGENCE_FLOOR))


def linear_solve(system: SparseSystem) -> np.ndarray:
    """Sparse direct LU solve of `K dx = F`

    Args:
        system (SparseSystem): constrained system

    Returns:
        numpy.ndarray: solution `dx`

    Raises:
        SolverError: on singular or ill-conditioned factorization and on
            inaccurate solutions
    """
    K = system.matrix.tocsc()
    F = system.rhs
    try:
        lu = splu(K)
    except RuntimeError as err:
        raise SolverError(f"LU factorization failed: {err}", 0.0) from None
    pivots = np.abs(lu.U.diagonal())
    ratio = float(pivots.min() / pivots.max()) if pivots.size and pivots.max() > 0 else 0.0
    if ratio < PIVOT_RATIO_LIMIT:
        raise SolverError("Tangent is singular or ill-conditioned", ratio)

    dx = lu.solve(F)
    if not np.all(np.isfinite(dx)):
        raise SolverError("Solution is not finite", ratio)
    residual = np.abs(K @ dx - F).max(initial=0.0)
    K_norm = np.asarray(abs(K).sum(axis=1)).max(initial=0.0)
    bound = RESIDUAL_CHECK * (K_norm * np.abs(dx).max(initial=0.0) + np.abs(F).max(initial=0.0))
    if residual > bound:
        raise SolverError(f"Inaccurate solution, residual {residual:.3e} > {bound:.3e}", ratio)
    return dx


def _gp_fields(state: PointState) -> dict:
    return {name: getattr(state, name) for name in PointState.__dataclass_fields__}


def _to_gp_state(fields: dict, kappa0) -> GpState:
    return GpState(
        **{name: frozen(np.ascontiguousarray(value)) for name, value in fields.items()},
        kappa0=frozen(np.asarray(kappa0, dtype=float)),
    )


def _update_chunk(task):
    """Gauss point state of a contiguous element range, point by point"""
    coords_u, coords_e, u_el, e_el, committed, kappa0, params, family_u, family_e, first = task
    dim = coords_u.shape[-1]
    C = elasticity_matrix(params.E, params.nu, dim)
    points = []
    for i in range(len(coords_u)):
        geo = element_geometry(coords_u[i], coords_e[i], family_u, family_e, first + i)
        for q in range(len(geo.wdetJ)):
            p = i * len(geo.wdetJ) + q
            points.append(
                point_update(
                    geo.B[q] @ u_el[i],
                    geo.N_e[q] @ e_el[i],
                    geo.dN_e[q].T @ e_el[i],
                    committed[p],
                    kappa0[p],
                    params,
                    C,
                    dim,
                )
            )
    return {
        name: np.stack([getattr(p, name) for p in points])
        for name in PointState.__dataclass_fields__
    }


def update_state(
    u_total,
    ebar_total,
    mesh: Mesh,
    dofmap: DofMap,
    state_prev: GpState,
    committed_kappa,
    params: MaterialParams,
    backend: str = "batched",
    workers: int = 1,
) -> GpState:
    """Recompute all Gauss point variables from the current solution

    Args:
        u_total (array_like): displacement DOFs, shape (ndof_u,)
        ebar_total (array_like): micro-strain DOFs, shape (ndof_e,)
        mesh (Mesh): mesh
        dofmap (DofMap): DOF numbering
        state_prev (GpState): previous state, provides the `kappa0` field
        committed_kappa (array_like): history of the last accepted step
        params (MaterialParams): material parameters
        backend (str): `loop` or `batched`
        workers (int): worker processes of the loop backend

    Returns:
        GpState
    """
    x = np.concatenate([np.asarray(u_total, dtype=float), np.asarray(ebar_total, dtype=float)])
    if len(x) != dofmap.size:
        raise InvalidStateError(f"Solution has {len(x)} entries, expected {dofmap.size}")
    ngp = gauss_rule(mesh.family_u).ngp
    npts = mesh.element_count * ngp
    kappa0 = np.asarray(state_prev.kappa0, dtype=float)
    committed = np.asarray(committed_kappa, dtype=float)
    if len(kappa0) != npts or len(committed) != npts:
        raise InvalidStateError(f"History arrays must have {npts} entries")
    u_el = x[dofmap.gather_u]
    e_el = x[dofmap.gather_e]

    if backend == "batched":
        geo = model_geometry(mesh)
        C = elasticity_matrix(params.E, params.nu, mesh.dim)
        per = geo.per_element
        strain = np.einsum("eqvi,ei->eqv", per(geo.B), u_el).reshape(npts, -1)
        ebar = np.einsum("eqa,ea->eq", per(geo.N_e), e_el).reshape(npts)
        grad = np.einsum("eqad,ea->eqd", per(geo.dN_e), e_el).reshape(npts, -1)
        fields = _gp_fields(point_update(strain, ebar, grad, committed, kappa0, params, C, mesh.dim))
    elif backend == "loop":
        tasks = [
            (
                mesh.element_coords_u[part],
                mesh.element_coords_e[part],
                u_el[part],
                e_el[part],
                committed[part.start * ngp : part.stop * ngp],
                kappa0[part.start * ngp : part.stop * ngp],
                params,
                mesh.family_u,
                mesh.family_e,
                part.start,
            )
            for part in chunks(mesh.element_count, workers)
        ]
        results = map_ordered(_update_chunk, tasks, workers)
        fields = {name: np.concatenate([r[name] for r in results]) for name in results[0]}
    else:
        raise InvalidArgumentError(f"Unknown backend '{backend}', expected one of {BACKENDS}")
    return _to_gp_state(fields, kappa0)


def initial_state(model: Model, backend: str = "batched") -> GpState:
    """Virgin state: zero fields, history at the threshold"""
    dofmap = model.dofmap
    seed = GpState(**{name: None for name in PointState.__dataclass_fields__}, kappa0=model.kappa0)
    return update_state(
        np.zeros(dofmap.ndof_u),
        np.zeros(dofmap.ndof_e),
        model.mesh,
        dofmap,
        seed,
        model.kappa0,
        model.params,
        backend,
    )


def _snapshot(model: Model, step: int, displacement: float, x: np.ndarray, state: GpState):
    mesh, dofmap, params = model.mesh, model.dofmap, model.params
    C = elasticity_matrix(params.E, params.nu, mesh.dim)
    psi = free_energy_density(
        state.strain, state.D, state.eeq, state.ebar, state.grad_ebar, state.g, params, C
    )
    u, ebar = dofmap.split(x)
    return Snapshot(
        step=step,
        displacement=displacement,
        u=frozen(u.reshape(-1, mesh.dim).copy()),
        ebar=frozen(ebar.copy()),
        D=state.D,
        kappa=state.kappa,
        psi=frozen(psi),
        energy=model_geometry(mesh).integrate(psi) * model.spec.section,
    )


def run_simulation(
    problem: Union[ProblemSpec, Model],
    config: NewtonConfig = None,
    backend: str = None,
    snapshot_interval: int = 10,
    timer=None,
) -> SimulationResult:
    """Solve a displacement controlled problem step by step

    Args:
        problem (ProblemSpec or Model): problem definition or prepared model
        config (NewtonConfig, optional): iteration settings
        backend (str, optional): overrides `config.backend`
        snapshot_interval (int): record fields every n steps (and at the last step),
            0 records only the last step
        timer (optional): phase timer with `phase(name)` context manager and
            `end_iteration()`, see :obj:`lgdm.benchmark.PhaseTimer`

    Returns:
        SimulationResult

    Raises:
        StepFailureError: if a step diverges or exhausts the iteration budget
        InvalidStateError: if the history decreases between accepted steps
    """
    config = config or NewtonConfig()
    backend = backend or config.backend
    for key, message in config.violations():
        raise InvalidArgumentError(f"{key}: {message}")
    model = problem if isinstance(problem, Model) else build_model(problem)
    mesh, dofmap, params = model.mesh, model.dofmap, model.params
    constraints = model.constraints
    steps = config.steps or model.spec.steps
    workers = config.workers if backend == "loop" else 1

    def phase(name):
        return timer.phase(name) if timer is not None else nullcontext()

    free = np.ones(dofmap.size, dtype=bool)
    free[[c.dof for c in constraints]] = False
    driven = [c for c in constraints if c.kind == "driven"]
    increment = driven[0].increment if driven else 0.0

    x = np.zeros(dofmap.size)
    state = initial_state(model, backend)
    committed = state.kappa
    result = SimulationResult(model=model, backend=backend)
    logger.info(
        f"{model.spec.problem}: {mesh.element_count} elements, {dofmap.size} DOFs, "
        f"{steps} steps, {backend} backend"
    )

    for step in range(1, steps + 1):
        previous_residual = None
        growth = 0
        norms = []
        converged = False
        for iteration in range(1, config.max_iterations + 1):
            with phase("assembly"):
                system = assemble(mesh, dofmap, state, params, backend, workers, config.tangent)
                system = apply_dirichlet(
                    system, constraints, "first" if iteration == 1 else "subsequent"
                )
            residual = float(np.linalg.norm(system.rhs[free]))
            with phase("solve"):
                try:
                    dx = linear_solve(system)
                except SolverError as err:
                    raise StepFailureError(step, str(err), norms) from err
            x += dx
            with phase("update"):
                u, ebar = dofmap.split(x)
                state = update_state(
                    u, ebar, mesh, dofmap, state, committed, params, backend, workers
                )
            if timer is not None:
                timer.end_iteration()

            du, de = dofmap.split(dx)
            record = IterationRecord(
                step, iteration, relative_norm(du, u), relative_norm(de, ebar), residual
            )
            result.log.append(record)
            norms.append((record.du, record.de, record.residual))
            logger.debug(
                f"step {step} iteration {iteration}: du {record.du:.3e}, "
                f"de {record.de:.3e}, residual {residual:.3e}"
            )
            if check_convergence(du, u, de, ebar, config.tol):
                converged = True
                break

            diverging = (
                previous_residual is not None
                and residual > config.divergence_factor * previous_residual
            )
            growth = growth + 1 if diverging else 0
            if growth >= DIVERGENCE_WINDOW:
                raise StepFailureError(step, "residual diverges", norms)
            previous_residual = residual

        if not converged:
            raise StepFailureError(
                step, f"no convergence in {config.max_iterations} iterations", norms
            )

        if np.any(state.kappa < committed) or (
            result.state is not None and np.any(state.D < result.state.D)
        ):
            raise InvalidStateError(f"Damage history decreased in step {step}")
        committed = state.kappa
        result.state = state

        displacement = step * increment
        reaction = reaction_force(mesh, dofmap, state, constraints, model.spec.section)
        result.steps.append(StepRecord(step, displacement, reaction, iteration))
        logger.info(
            f"step {step}/{steps}: u = {displacement:.6g} mm, "
            f"reaction = {reaction:.6g}, {iteration} iterations"
        )
        if step == steps or (snapshot_interval and step % snapshot_interval == 0):
            result.snapshots.append(_snapshot(model, step, displacement, x, state))

    return result
