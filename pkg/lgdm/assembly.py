"""Global tangent and residual of the coupled displacement / micro-strain system

Two interchangeable backends build the same :obj:`SparseSystem`:

- `loop`: element by element and Gauss point by Gauss point, each element's
  geometry computed on the fly. Optionally spread over worker processes.
- `batched`: all Gauss points of the model at once on flat arrays, using the
  cached :obj:`~lgdm.geometry.ModelGeometry`.

Both emit the element matrix entries in the same order (element-major,
row-major within the element matrix `[[k_uu, k_ue], [k_eu, k_ee]]`), so the
triplet lists are interchangeable.

Sign convention: `R` is the residual (internal minus external forces),
`F = -R` and `K = dR/dx`. A Newton iteration solves `K dx = F`.
"""
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .constitutive import (
    MaterialParams,
    elasticity_matrix,
    equivalent_strain_hessian,
    micro_stresses,
)
from .elements import gauss_rule
from .exceptions import InvalidArgumentError, InvalidStateError, UnsupportedConstraintError
from .geometry import element_geometry, model_geometry
from .mesh import Constraint, DofMap, Mesh
from .misc import cached_property, chunks, map_ordered

logger = logging.getLogger(__name__)

BACKENDS = ("loop", "batched")

# consistent: exact derivative of the residual
# convex: drops the negative part of the equivalent strain curvature term
TANGENTS = ("consistent", "convex")

# Gauss point fields read by the assembly
STATE_FIELDS = (
    "strain",
    "eeq",
    "deeq",
    "ebar",
    "grad_ebar",
    "D",
    "dD",
    "g",
    "dg",
    "sigma",
    "loading",
)


@dataclass(frozen=True)
class ElementBlocks:
    """Element tangent blocks and right-hand sides

    Attributes:
        k_uu (numpy.ndarray): shape (ndof_u, ndof_u)
        k_ue (numpy.ndarray): shape (ndof_u, ndof_e)
        k_eu (numpy.ndarray): shape (ndof_e, ndof_u)
        k_ee (numpy.ndarray): shape (ndof_e, ndof_e)
        f_u (numpy.ndarray): shape (ndof_u,)
        f_e (numpy.ndarray): shape (ndof_e,)
    """

    k_uu: np.ndarray
    k_ue: np.ndarray
    k_eu: np.ndarray
    k_ee: np.ndarray
    f_u: np.ndarray
    f_e: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return np.block([[self.k_uu, self.k_ue], [self.k_eu, self.k_ee]])

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.f_u, self.f_e])


class SparseSystem:
    """Global system `K dx = F`

    Either built from coordinate triplets (duplicates are summed) or from an
    existing sparse matrix.

    Attributes:
        size (int): number of unknowns
        ndof_u (int): number of displacement unknowns (leading block)
        rhs (numpy.ndarray): right-hand side `F`
    """

    def __init__(self, rows, cols, values, rhs, size: int, ndof_u: int):
        self.rows = rows
        self.cols = cols
        self.values = values
        self.rhs = np.asarray(rhs, dtype=float)
        self.size = size
        self.ndof_u = ndof_u
        if len(self.rhs) != size:
            raise InvalidArgumentError(f"rhs has {len(self.rhs)} entries, expected {size}")

    @classmethod
    def from_matrix(cls, matrix, rhs, ndof_u: int) -> "SparseSystem":
        matrix = sparse.csr_matrix(matrix)
        system = cls(None, None, None, rhs, matrix.shape[0], ndof_u)
        system._matrix = matrix
        return system

    @cached_property
    def matrix(self) -> sparse.csr_matrix:
        """Tangent `K` in CSR format"""
        return sparse.coo_matrix(
            (self.values, (self.rows, self.cols)), shape=(self.size, self.size)
        ).tocsr()

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def __repr__(self) -> str:
        return f"{type(self).__name__}(size={self.size}, nnz={self.matrix.nnz})"


def _check_state(state, npts: int):
    for name in STATE_FIELDS:
        value = getattr(state, name, None)
        if value is None:
            raise InvalidStateError(f"Gauss point state lacks '{name}'")
        if len(value) != npts:
            raise InvalidStateError(
                f"Gauss point field '{name}' has {len(value)} entries, mesh needs {npts}"
            )


def _state_slice(state, index) -> dict:
    return {name: getattr(state, name)[index] for name in STATE_FIELDS}


def _material_tangents(
    st: dict, params: MaterialParams, C: np.ndarray, dim: int, tangent: str = "consistent"
) -> dict:
    """Gauss point coefficients of the element matrices

    Works on a single point as well as on flat arrays of points. Where the
    micro-strain exceeds the equivalent strain the curvature term
    `h (eeq - ebar) d2eeq` is negative semi-definite and grows like `1/|strain|`
    near zero strain. The `convex` tangent clips it at zero. The clipped term
    vanishes along the current strain since `eeq` is homogeneous of degree one.
    """
    h, c = params.h, params.c
    deeq = st["deeq"]
    mismatch = st["eeq"] - st["ebar"]
    if tangent == "convex":
        mismatch = np.maximum(mismatch, 0.0)
    hess = equivalent_strain_hessian(st["strain"], params, dim)
    # d sigma / d strain
    Ct = (
        (1 - st["D"])[..., None, None] * C
        + h * deeq[..., :, None] * deeq[..., None, :]
        + (h * mismatch)[..., None, None] * hess
    )
    dD_debar = st["dD"] * st["loading"]
    # d sigma / d ebar
    s_ue = -dD_debar[..., None] * np.einsum("ij,...j->...i", C, st["strain"]) - h * deeq
    return {
        "Ct": Ct,
        "s_ue": s_ue,
        "ghc": st["g"] * h * c,
        "dghc": h * c * st["dg"] * dD_debar,
    }


def element_blocks(
    coords_u,
    coords_e,
    el_state: dict,
    params: MaterialParams,
    family_u,
    family_e,
    element: int = None,
    tangent: str = "consistent",
) -> ElementBlocks:
    """Tangent blocks and right-hand sides of a single element

    Integrates Gauss point by Gauss point on the displacement field's rule.

    Args:
        coords_u (array_like): displacement nodes, shape (nen_u, dim)
        coords_e (array_like): micro-strain nodes, shape (nen_e, dim)
        el_state (dict): Gauss point fields of this element (see `STATE_FIELDS`),
            each with leading axis ngp
        params (MaterialParams): material parameters
        family_u, family_e (ElementFamily): element types
        element (int, optional): element index for error messages
        tangent (str): `consistent` or `convex`, see `TANGENTS`

    Returns:
        ElementBlocks

    Raises:
        InvertedElementError: for non-positive Jacobians
    """
    coords_u = np.asarray(coords_u, dtype=float)
    dim = coords_u.shape[-1]
    C = elasticity_matrix(params.E, params.nu, dim)
    geo = element_geometry(coords_u, coords_e, family_u, family_e, element)
    nu_el, ne_el = geo.B.shape[-1], geo.N_e.shape[-1]

    k_uu = np.zeros((nu_el, nu_el))
    k_ue = np.zeros((nu_el, ne_el))
    k_eu = np.zeros((ne_el, nu_el))
    k_ee = np.zeros((ne_el, ne_el))
    f_u = np.zeros(nu_el)
    f_e = np.zeros(ne_el)
    for q in range(len(geo.wdetJ)):
        st = {name: value[q] for name, value in el_state.items()}
        mt = _material_tangents(st, params, C, dim, tangent)
        B, N, dN, w = geo.B[q], geo.N_e[q], geo.dN_e[q], geo.wdetJ[q]
        flux = dN @ st["grad_ebar"]
        sbar, xi = micro_stresses(st["eeq"], st["ebar"], st["grad_ebar"], st["g"], params)

        k_uu += B.T @ mt["Ct"] @ B * w
        k_ue += np.outer(B.T @ mt["s_ue"], N) * w
        k_eu -= params.h * np.outer(N, B.T @ st["deeq"]) * w
        k_ee += (
            params.h * np.outer(N, N) + mt["ghc"] * dN @ dN.T + mt["dghc"] * np.outer(flux, N)
        ) * w
        f_u -= B.T @ st["sigma"] * w
        f_e += (sbar * N - dN @ xi) * w
    return ElementBlocks(k_uu, k_ue, k_eu, k_ee, f_u, f_e)


def _loop_chunk(task):
    """Element blocks of a contiguous element range, flattened in triplet order"""
    coords_u, coords_e, state, params, family_u, family_e, first, tangent = task
    values, vectors = [], []
    for i in range(len(coords_u)):
        el_state = {name: value[i] for name, value in state.items()}
        blocks = element_blocks(
            coords_u[i], coords_e[i], el_state, params, family_u, family_e, first + i, tangent
        )
        values.append(blocks.matrix.ravel())
        vectors.append(blocks.vector)
    return np.concatenate(values), np.stack(vectors)


def _assemble_loop(
    mesh: Mesh, state, params: MaterialParams, ngp: int, workers: int, tangent: str
):
    tasks = []
    for part in chunks(mesh.element_count, workers):
        gp = slice(part.start * ngp, part.stop * ngp)
        count = part.stop - part.start
        state_part = {
            name: value.reshape(count, ngp, *value.shape[1:])
            for name, value in _state_slice(state, gp).items()
        }
        tasks.append(
            (
                mesh.element_coords_u[part],
                mesh.element_coords_e[part],
                state_part,
                params,
                mesh.family_u,
                mesh.family_e,
                part.start,
                tangent,
            )
        )
    results = map_ordered(_loop_chunk, tasks, workers)
    values = np.concatenate([r[0] for r in results])
    vectors = np.concatenate([r[1] for r in results])
    return values, vectors


def _assemble_batched(mesh: Mesh, state, params: MaterialParams, tangent: str):
    geo = model_geometry(mesh)
    dim = mesh.dim
    C = elasticity_matrix(params.E, params.nu, dim)
    st = _state_slice(state, slice(None))
    mt = _material_tangents(st, params, C, dim, tangent)
    h, w = params.h, geo.wdetJ

    per = geo.per_element
    B, N, dN = per(geo.B), per(geo.N_e), per(geo.dN_e)
    flux = np.einsum("pad,pd->pa", geo.dN_e, st["grad_ebar"])

    CB = np.einsum("pvw,pwj->pvj", mt["Ct"] * w[:, None, None], geo.B)
    k_uu = np.einsum("eqvi,eqvj->eij", B, per(CB))
    k_ue = np.einsum("eqvi,eqv,eqa->eia", B, per(mt["s_ue"] * w[:, None]), N)
    k_eu = np.einsum("eqa,eqvi,eqv->eai", N, B, per(-h * w[:, None] * st["deeq"]))
    k_ee = (
        np.einsum("eqa,eqb->eab", per(h * w[:, None] * geo.N_e), N)
        + np.einsum("eqad,eqbd->eab", per((mt["ghc"] * w)[:, None, None] * geo.dN_e), dN)
        + np.einsum("eqa,eqb->eab", per((mt["dghc"] * w)[:, None] * flux), N)
    )
    f_u = -np.einsum("eqvi,eqv->ei", B, per(st["sigma"] * w[:, None]))
    sbar, xi = micro_stresses(st["eeq"], st["ebar"], st["grad_ebar"], st["g"], params)
    micro = (sbar * w)[:, None] * geo.N_e - w[:, None] * np.einsum("pad,pd->pa", geo.dN_e, xi)
    f_e = per(micro).sum(axis=1)

    matrices = np.concatenate(
        [np.concatenate([k_uu, k_ue], axis=2), np.concatenate([k_eu, k_ee], axis=2)], axis=1
    )
    return matrices.ravel(), np.concatenate([f_u, f_e], axis=1)


def assemble(
    mesh: Mesh,
    dofmap: DofMap,
    state,
    params: MaterialParams,
    backend: str = "batched",
    workers: int = 1,
    tangent: str = "consistent",
) -> SparseSystem:
    """Assemble tangent and right-hand side of the coupled system

    Args:
        mesh (Mesh): mesh
        dofmap (DofMap): global DOF numbering of `mesh`
        state: Gauss point state with the fields in `STATE_FIELDS`, flat over
            `nel * ngp` points
        params (MaterialParams): material parameters
        backend (str): `loop` or `batched`
        workers (int): worker processes of the loop backend
        tangent (str): `consistent` (exact derivative of the right-hand side) or
            `convex`, see `TANGENTS`

    Returns:
        SparseSystem: unconstrained system

    Raises:
        InvalidStateError: if the state does not match the mesh
    """
    ngp = gauss_rule(mesh.family_u).ngp
    _check_state(state, mesh.element_count * ngp)
    if tangent not in TANGENTS:
        raise InvalidArgumentError(f"Unknown tangent '{tangent}', expected one of {TANGENTS}")
    if backend == "loop":
        values, vectors = _assemble_loop(mesh, state, params, ngp, workers, tangent)
    elif backend == "batched":
        values, vectors = _assemble_batched(mesh, state, params, tangent)
    else:
        raise InvalidArgumentError(f"Unknown backend '{backend}', expected one of {BACKENDS}")

    logger.debug(f"{backend} assembly: {mesh.element_count} elements, {len(values)} triplets")
    rows, cols = dofmap.triplet_index
    rhs = np.bincount(
        dofmap.element_dofs.ravel(), weights=vectors.ravel(), minlength=dofmap.size
    )
    return SparseSystem(rows, cols, values, rhs, dofmap.size, dofmap.ndof_u)


def apply_dirichlet(
    system: SparseSystem, constraints: Sequence[Constraint], phase: str = "subsequent"
) -> SparseSystem:
    """Symmetric elimination of prescribed displacement increments

    Constrained rows and columns are zeroed with a unit diagonal, their column
    contributions are moved to the right-hand side. The prescribed value is the
    step increment in the `first` iteration of a step and zero afterwards.

    Args:
        system (SparseSystem): unconstrained system
        constraints (sequence of Constraint): prescribed DOFs
        phase (str): `first` or `subsequent`

    Returns:
        SparseSystem: new constrained system

    Raises:
        UnsupportedConstraintError: for DOFs outside the displacement block or
            contradicting constraints on the same DOF
    """
    if phase not in ("first", "subsequent"):
        raise InvalidArgumentError(f"Unknown iteration phase '{phase}'")
    if not constraints:
        return system

    prescribed = {}
    for c in constraints:
        if not 0 <= c.dof < system.ndof_u:
            raise UnsupportedConstraintError(
                f"DOF {c.dof} is not a displacement DOF (ndof_u = {system.ndof_u})"
            )
        value = c.increment if phase == "first" else 0.0
        if prescribed.get(c.dof, value) != value:
            raise UnsupportedConstraintError(f"Contradicting constraints on DOF {c.dof}")
        prescribed[c.dof] = value

    dofs = np.fromiter(prescribed.keys(), dtype=np.int64, count=len(prescribed))
    values = np.fromiter(prescribed.values(), dtype=float, count=len(prescribed))
    increment = np.zeros(system.size)
    increment[dofs] = values

    K = system.matrix
    rhs = system.rhs - K @ increment
    rhs[dofs] = values

    free = np.ones(system.size)
    free[dofs] = 0.0
    keep = sparse.diags(free)
    K = (keep @ K @ keep + sparse.diags(1.0 - free)).tocsr()
    return SparseSystem.from_matrix(K, rhs, system.ndof_u)


def internal_forces(mesh: Mesh, dofmap: DofMap, state) -> np.ndarray:
    """Assembled `int B^T sigma` over the displacement DOFs, shape (ndof_u,)"""
    geo = model_geometry(mesh)
    sigma = np.asarray(state.sigma)
    if len(sigma) != geo.point_count:
        raise InvalidStateError(
            f"Stress has {len(sigma)} entries, mesh needs {geo.point_count}"
        )
    forces = np.einsum(
        "eqvi,eqv->ei", geo.per_element(geo.B), geo.per_element(sigma * geo.wdetJ[:, None])
    )
    return np.bincount(dofmap.gather_u.ravel(), weights=forces.ravel(), minlength=dofmap.ndof_u)


def reaction_force(
    mesh: Mesh,
    dofmap: DofMap,
    state,
    constraints: Iterable[Constraint],
    section: float = 1.0,
) -> float:
    """Reaction force at the driven boundary

    Sum of the internal forces over all driven DOFs, scaled by the cross
    section (1D) or thickness (2D).

    Args:
        mesh (Mesh): mesh
        dofmap (DofMap): DOF numbering
        state: converged Gauss point state
        constraints (iterable of Constraint): constraints, only `driven` ones count
        section (float): cross section area or thickness

    Returns:
        float: reaction force, N
    """
    driven = sorted({c.dof for c in constraints if c.kind == "driven"})
    if not driven:
        return 0.0
    forces = internal_forces(mesh, dofmap, state)
    return float(forces[driven].sum() * section)
