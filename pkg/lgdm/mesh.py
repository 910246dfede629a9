"""Structured meshes carrying two coincident interpolation fields

- :obj:`Mesh` holds node coordinates and connectivity of the displacement (u)
  and the micro-equivalent strain (ebar) field
- :func:`build_structured_mesh` creates regular 1D/2D/3D lattices
- :func:`carve_notch` duplicates nodes along an axis-aligned slit
- :obj:`DofMap` maps element DOFs to the global system (u block first)
"""
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .elements import ElementFamily
from .exceptions import InvalidArgumentError, UnsupportedGeometryError
from .misc import cached_property, frozen

FAMILIES = {
    1: (ElementFamily.LINE3, ElementFamily.LINE2),
    2: (ElementFamily.QUAD8, ElementFamily.QUAD4),
    3: (ElementFamily.HEX8, ElementFamily.HEX8),
}

AXES = "xyz"


class Mesh:
    """Mesh with a displacement field and a micro-strain field on the same elements

    Element `i` of both connectivities covers the same geometric domain, the
    micro-strain nodes coincide with corner nodes of the displacement field.

    Attributes:
        dim (int): spatial dimension
        node_coords_u (numpy.ndarray): displacement field nodes, shape (nnode_u, dim), mm
        node_coords_e (numpy.ndarray): micro-strain field nodes, shape (nnode_e, dim), mm
        conn_u (numpy.ndarray): displacement connectivity, shape (nel, nen_u)
        conn_e (numpy.ndarray): micro-strain connectivity, shape (nel, nen_e)
        family_u (ElementFamily): displacement element type
        family_e (ElementFamily): micro-strain element type
        extents (tuple of float): box lengths per axis (structured meshes only)
        divisions (tuple of int): element counts per axis (structured meshes only)
        slits (tuple of NotchSpec): slits carved into the mesh
    """

    def __init__(
        self,
        dim: int,
        node_coords_u,
        node_coords_e,
        conn_u,
        conn_e,
        family_u: ElementFamily,
        family_e: ElementFamily,
        extents: Tuple[float, ...] = None,
        divisions: Tuple[int, ...] = None,
        slits: tuple = (),
    ):
        self.dim = dim
        self.node_coords_u = frozen(np.asarray(node_coords_u, dtype=float).reshape(-1, dim))
        self.node_coords_e = frozen(np.asarray(node_coords_e, dtype=float).reshape(-1, dim))
        self.conn_u = frozen(np.asarray(conn_u, dtype=np.int64))
        self.conn_e = frozen(np.asarray(conn_e, dtype=np.int64))
        self.family_u = ElementFamily(family_u)
        self.family_e = ElementFamily(family_e)
        self.extents = None if extents is None else tuple(float(x) for x in extents)
        self.divisions = None if divisions is None else tuple(int(n) for n in divisions)
        self.slits = tuple(slits)

        if len(self.conn_u) != len(self.conn_e):
            raise InvalidArgumentError(
                f"Connectivities differ in element count: {len(self.conn_u)} != {len(self.conn_e)}"
            )
        for name, conn, family, nodes in (
            ("u", self.conn_u, self.family_u, self.node_coords_u),
            ("e", self.conn_e, self.family_e, self.node_coords_e),
        ):
            if conn.ndim != 2 or conn.shape[1] != family.node_count:
                raise InvalidArgumentError(
                    f"conn_{name} must have {family.node_count} nodes per element"
                )
            if conn.size and (conn.min() < 0 or conn.max() >= len(nodes)):
                raise InvalidArgumentError(f"conn_{name} index out of range")

    @property
    def element_count(self) -> int:
        return len(self.conn_u)

    @property
    def node_count_u(self) -> int:
        return len(self.node_coords_u)

    @property
    def node_count_e(self) -> int:
        return len(self.node_coords_e)

    @cached_property
    def element_coords_u(self) -> np.ndarray:
        """Node coordinates per element, shape (nel, nen_u, dim)"""
        return frozen(self.node_coords_u[self.conn_u])

    @cached_property
    def element_coords_e(self) -> np.ndarray:
        """Node coordinates per element, shape (nel, nen_e, dim)"""
        return frozen(self.node_coords_e[self.conn_e])

    @cached_property
    def centroids(self) -> np.ndarray:
        """Element centroids (mean of corner nodes), shape (nel, dim)"""
        corners = self.element_coords_u[:, list(self.family_u.corners)]
        return frozen(corners.mean(axis=1))

    @cached_property
    def corner_nodes_u(self) -> np.ndarray:
        """Displacement node coinciding with each micro-strain node, shape (nnode_e,)"""
        mapping = np.empty(self.node_count_e, dtype=np.int64)
        corners = list(self.family_u.corners)
        mapping[self.conn_e] = self.conn_u[:, corners]
        return frozen(mapping)

    def boundary_nodes(self, name: str, field: str = "u") -> np.ndarray:
        """Nodes on a face of the bounding box

        Args:
            name (str): `x-`, `x+`, `y-`, `y+`, `z-` or `z+`
            field (str): `u` or `e`

        Returns:
            numpy.ndarray: sorted node indices
        """
        axis, side = _parse_boundary(name, self.dim)
        coords = self.node_coords_u if field == "u" else self.node_coords_e
        lo, hi = coords[:, axis].min(), coords[:, axis].max()
        target = lo if side == "-" else hi
        tol = 1e-9 * max(hi - lo, 1.0)
        return np.flatnonzero(np.abs(coords[:, axis] - target) < tol)

    def __str__(self) -> str:
        shape = "x".join(str(n) for n in self.divisions) if self.divisions else "?"
        return (
            f"{self.dim}D mesh {shape}: {self.element_count} elements, "
            f"u: {self.node_count_u} {self.family_u.value} nodes, "
            f"ebar: {self.node_count_e} {self.family_e.value} nodes"
            + (f", {len(self.slits)} slit(s)" if self.slits else "")
        )

    def __repr__(self) -> str:
        return (
            f"{type(self).__name__}(dim={self.dim}, extents={self.extents}, "
            f"divisions={self.divisions}, slits={len(self.slits)})"
        )


def _parse_boundary(name: str, dim: int):
    if len(name) != 2 or name[0] not in AXES[:dim] or name[1] not in "+-":
        raise InvalidArgumentError(
            f"Unknown boundary '{name}', expected one of "
            + ", ".join(a + s for a in AXES[:dim] for s in "-+")
        )
    return AXES.index(name[0]), name[1]


def _lattice(divisions: Sequence[int], extents: Sequence[float], refine: int) -> np.ndarray:
    """Regular lattice points, x varying fastest"""
    axes = [np.linspace(0.0, L, refine * n + 1) for n, L in zip(divisions, extents)]
    grids = np.meshgrid(*axes[::-1], indexing="ij")
    return np.stack([g.ravel() for g in reversed(grids)], axis=1)


def _element_indices(divisions: Sequence[int]):
    """Lattice indices of all elements, x varying fastest"""
    grids = np.meshgrid(*[np.arange(n) for n in divisions[::-1]], indexing="ij")
    return [g.ravel() for g in reversed(grids)]


def build_structured_mesh(dim: int, extents, divisions) -> Mesh:
    """Generate a regular box mesh

    Element types: 1D line3/line2, 2D quad8/quad4, 3D hex8/hex8.

    Args:
        dim (int): spatial dimension (1, 2 or 3)
        extents (sequence of float): box lengths per axis, mm
        divisions (sequence of int): element counts per axis

    Returns:
        Mesh

    Raises:
        InvalidArgumentError: for non-positive extents/divisions or mismatching lengths
    """
    if dim not in FAMILIES:
        raise InvalidArgumentError(f"Dimension {dim} not supported")
    extents = tuple(float(x) for x in np.atleast_1d(extents))
    divisions = tuple(int(n) for n in np.atleast_1d(divisions))
    if len(extents) != dim or len(divisions) != dim:
        raise InvalidArgumentError(f"Need {dim} extents and divisions, got {extents}, {divisions}")
    if any(n < 1 for n in divisions):
        raise InvalidArgumentError(f"Divisions must be >= 1, got {divisions}")
    if any(not L > 0 for L in extents):
        raise InvalidArgumentError(f"Extents must be > 0, got {extents}")

    family_u, family_e = FAMILIES[dim]
    corner_coords = _lattice(divisions, extents, 1)
    ids = _element_indices(divisions)

    if dim == 1:
        (ix,) = ids
        coords_u = _lattice(divisions, extents, 2)
        conn_u = np.stack([2 * ix, 2 * ix + 1, 2 * ix + 2], axis=1)
        conn_e = np.stack([ix, ix + 1], axis=1)
    elif dim == 2:
        nx, ny = divisions
        ix, iy = ids
        corner = lambda i, j: i + (nx + 1) * j  # noqa: E731
        conn_e = np.stack(
            [corner(ix, iy), corner(ix + 1, iy), corner(ix + 1, iy + 1), corner(ix, iy + 1)],
            axis=1,
        )
        # half-step lattice without the element centres
        half = _lattice(divisions, extents, 2)
        hx, hy = np.meshgrid(np.arange(2 * nx + 1), np.arange(2 * ny + 1), indexing="xy")
        keep = ~((hx.ravel() % 2 == 1) & (hy.ravel() % 2 == 1))
        renumber = np.cumsum(keep) - 1
        coords_u = half[keep]
        hid = lambda i, j: renumber[i + (2 * nx + 1) * j]  # noqa: E731
        i2, j2 = 2 * ix, 2 * iy
        conn_u = np.stack(
            [
                hid(i2, j2),
                hid(i2 + 2, j2),
                hid(i2 + 2, j2 + 2),
                hid(i2, j2 + 2),
                hid(i2 + 1, j2),
                hid(i2 + 2, j2 + 1),
                hid(i2 + 1, j2 + 2),
                hid(i2, j2 + 1),
            ],
            axis=1,
        )
    else:
        nx, ny, nz = divisions
        ix, iy, iz = ids
        corner = lambda i, j, k: i + (nx + 1) * (j + (ny + 1) * k)  # noqa: E731
        bottom = [(0, 0), (1, 0), (1, 1), (0, 1)]
        conn_e = np.stack(
            [corner(ix + a, iy + b, iz + c) for c in (0, 1) for a, b in bottom], axis=1
        )
        coords_u, conn_u = corner_coords, conn_e

    return Mesh(
        dim,
        coords_u,
        corner_coords,
        conn_u,
        conn_e,
        family_u,
        family_e,
        extents=extents,
        divisions=divisions,
    )


@dataclass(frozen=True)
class NotchSpec:
    """Axis-aligned slit

    The slit starts at `anchor` and runs `length` mm along `direction`. In 3D it
    spans the full extent of the remaining (thickness) axis.

    Attributes:
        anchor (tuple of float): start point, mm
        direction (tuple of int): axis-aligned unit vector, e.g. (1, 0)
        length (float): slit length, mm
        normal_axis (int, optional): axis normal to the slit faces. Defaults to the
            other in-plane axis in 2D and to y for slits along x in 3D.
    """

    anchor: Tuple[float, ...]
    direction: Tuple[int, ...]
    length: float
    normal_axis: Optional[int] = None

    def axes(self, dim: int) -> Tuple[int, int, int]:
        """(propagation axis, sign, normal axis)"""
        direction = np.asarray(self.direction, dtype=float)
        nonzero = np.flatnonzero(direction)
        if (
            len(direction) != dim
            or len(nonzero) != 1
            or abs(direction[nonzero[0]]) != 1.0
        ):
            raise UnsupportedGeometryError(
                f"Notch direction {self.direction} is not an axis-aligned unit vector"
            )
        axis = int(nonzero[0])
        sign = int(direction[axis])
        normal = self.normal_axis
        if normal is None:
            candidates = [i for i in range(min(dim, 2)) if i != axis]
            if not candidates:
                raise UnsupportedGeometryError("Notch along z needs an explicit normal_axis")
            normal = candidates[0]
        if normal == axis or not 0 <= normal < dim:
            raise UnsupportedGeometryError(f"Invalid notch normal axis {normal}")
        return axis, sign, normal

    def band(self, points, width: float) -> np.ndarray:
        """Mask of points within `width / 2` of the slit face (weakened band notch)

        Args:
            points (array_like): shape (npts, dim)
            width (float): band width, mm

        Returns:
            numpy.ndarray: boolean mask, shape (npts,)
        """
        points = np.asarray(points, dtype=float)
        axis, sign, normal = self.axes(points.shape[1])
        lo, hi = sorted((self.anchor[axis], self.anchor[axis] + sign * self.length))
        s = points[:, axis]
        return (np.abs(points[:, normal] - self.anchor[normal]) <= width / 2) & (
            (s >= lo) & (s <= hi)
        )


def carve_notch(mesh: Mesh, notch: NotchSpec) -> Mesh:
    """Cut a sharp slit into a structured mesh by duplicating nodes

    Nodes on the slit (both fields) are duplicated, elements on the positive side
    of the slit normal reference the copies. Slit tips in the interior of the
    domain stay shared, slit ends on the domain boundary are opened.

    Args:
        mesh (Mesh): structured mesh
        notch (NotchSpec): slit geometry, along element edges

    Returns:
        Mesh: new mesh with the same element count

    Raises:
        UnsupportedGeometryError: if the slit is not aligned with mesh lines,
            lies on the boundary or would disconnect the mesh
    """
    if notch.length == 0:
        return mesh
    if mesh.dim == 1:
        raise UnsupportedGeometryError("Slits are not supported in 1D meshes")
    if mesh.divisions is None:
        raise UnsupportedGeometryError("Slits need a structured mesh")
    if notch.length < 0:
        raise UnsupportedGeometryError(f"Negative notch length {notch.length}")

    axis, sign, normal = notch.axes(mesh.dim)
    extents = np.array(mesh.extents)
    spacing = extents / np.array(mesh.divisions)
    tol = 1e-9 * extents.max()

    def on_lattice(value, ax):
        r = value / spacing[ax]
        return abs(r - round(r)) * spacing[ax] < tol and -tol <= value <= extents[ax] + tol

    c = float(notch.anchor[normal])
    if not on_lattice(c, normal):
        raise UnsupportedGeometryError(f"Notch at {AXES[normal]}={c} is not on a mesh line")
    if c < tol or c > extents[normal] - tol:
        raise UnsupportedGeometryError("Notch lies on the domain boundary")
    s0 = float(notch.anchor[axis])
    lo, hi = sorted((s0, s0 + sign * notch.length))
    if not (on_lattice(lo, axis) and on_lattice(hi, axis)):
        raise UnsupportedGeometryError(
            f"Notch ends {lo}..{hi} along {AXES[axis]} are not on mesh lines"
        )
    open_lo, open_hi = lo < tol, hi > extents[axis] - tol
    if open_lo and open_hi:
        raise UnsupportedGeometryError("Notch would disconnect the mesh")

    upper = mesh.centroids[:, normal] > c

    def split(coords, conn):
        s = coords[:, axis]
        on_slit = (np.abs(coords[:, normal] - c) < tol) & (
            ((s > lo + tol) & (s < hi - tol))
            | (open_lo & (np.abs(s - lo) < tol))
            | (open_hi & (np.abs(s - hi) < tol))
        )
        slit_nodes = np.flatnonzero(on_slit)
        copy_of = np.full(len(coords), -1, dtype=np.int64)
        copy_of[slit_nodes] = len(coords) + np.arange(len(slit_nodes))
        conn = conn.copy()
        rows = conn[upper]
        dup = copy_of[rows]
        rows[dup >= 0] = dup[dup >= 0]
        conn[upper] = rows
        return np.vstack([coords, coords[slit_nodes]]), conn

    coords_u, conn_u = split(mesh.node_coords_u, mesh.conn_u)
    coords_e, conn_e = split(mesh.node_coords_e, mesh.conn_e)
    return Mesh(
        mesh.dim,
        coords_u,
        coords_e,
        conn_u,
        conn_e,
        mesh.family_u,
        mesh.family_e,
        extents=mesh.extents,
        divisions=mesh.divisions,
        slits=mesh.slits + (notch,),
    )


class DofMap:
    """Global DOF numbering

    All displacement DOFs come first (`dim * node + component`), followed by all
    micro-strain DOFs (`ndof_u + node`).

    Attributes:
        dim (int): spatial dimension
        ndof_u (int): number of displacement DOFs
        ndof_e (int): number of micro-strain DOFs
        gather_u (numpy.ndarray): global u DOFs per element, shape (nel, dim * nen_u)
        gather_e (numpy.ndarray): global ebar DOFs per element, shape (nel, nen_e)
    """

    def __init__(self, dim: int, ndof_u: int, ndof_e: int, gather_u, gather_e):
        self.dim = dim
        self.ndof_u = ndof_u
        self.ndof_e = ndof_e
        self.gather_u = frozen(gather_u)
        self.gather_e = frozen(gather_e)

    @property
    def size(self) -> int:
        return self.ndof_u + self.ndof_e

    @cached_property
    def element_dofs(self) -> np.ndarray:
        """Combined element DOF list [u..., ebar...], shape (nel, ndof_el)"""
        return frozen(np.hstack([self.gather_u, self.gather_e]))

    @cached_property
    def triplet_index(self):
        """Row and column indices of all element matrix entries

        Element-major, row-major within the combined element block.
        """
        dofs = self.element_dofs
        n = dofs.shape[1]
        rows = np.repeat(dofs, n, axis=1).ravel()
        cols = np.tile(dofs, (1, n)).ravel()
        return frozen(rows), frozen(cols)

    def split(self, vector: np.ndarray):
        """Split a global vector into (u part, ebar part)"""
        return vector[: self.ndof_u], vector[self.ndof_u : self.size]

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dim={self.dim}, ndof_u={self.ndof_u}, ndof_e={self.ndof_e})"


def build_dof_map(mesh: Mesh, dim: int = None) -> DofMap:
    """Build the global DOF map of a mesh

    Args:
        mesh (Mesh): mesh
        dim (int, optional): spatial dimension, must match `mesh.dim`

    Returns:
        DofMap
    """
    if dim is None:
        dim = mesh.dim
    if dim != mesh.dim:
        raise InvalidArgumentError(f"DOF map dimension {dim} does not match {mesh.dim}D mesh")
    ndof_u = dim * mesh.node_count_u
    gather_u = (dim * mesh.conn_u[:, :, None] + np.arange(dim)).reshape(mesh.element_count, -1)
    gather_e = ndof_u + mesh.conn_e
    return DofMap(dim, ndof_u, mesh.node_count_e, gather_u, gather_e)


@dataclass(frozen=True)
class Constraint:
    """Prescribed displacement DOF

    Attributes:
        dof (int): global DOF index (displacement block)
        increment (float): prescribed displacement per load step, mm
        kind (str): `fixed` (increment 0) or `driven`
    """

    dof: int
    increment: float = 0.0
    kind: str = "fixed"

    def __post_init__(self):
        if self.kind not in ("fixed", "driven"):
            raise InvalidArgumentError(f"Unknown constraint kind '{self.kind}'")
        if self.kind == "fixed" and self.increment != 0.0:
            raise InvalidArgumentError("Fixed constraints can't have an increment")

    def value(self, step: int) -> float:
        """Prescribed total displacement after `step` load steps"""
        return step * self.increment
