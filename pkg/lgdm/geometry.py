"""Gauss point geometry of single elements and of whole meshes"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .elements import ElementFamily, b_matrix, gauss_rule, geometry_map, reference_shapes
from .misc import frozen


@dataclass(frozen=True)
class ElementGeometry:
    """Shape operators at the Gauss points of one element or a stack of elements

    Leading axes are (..., ngp).

    Attributes:
        B (numpy.ndarray): displacement strain operator, shape (..., ngp, voigt, dim * nen_u)
        N_e (numpy.ndarray): micro-strain shape functions, shape (..., ngp, nen_e)
        dN_e (numpy.ndarray): micro-strain shape gradients, shape (..., ngp, nen_e, dim)
        wdetJ (numpy.ndarray): integration weight times det J, shape (..., ngp)
        points (numpy.ndarray): Gauss point coordinates, shape (..., ngp, dim)
    """

    B: np.ndarray
    N_e: np.ndarray
    dN_e: np.ndarray
    wdetJ: np.ndarray
    points: np.ndarray


def element_geometry(
    coords_u,
    coords_e,
    family_u: ElementFamily,
    family_e: ElementFamily,
    element: int = None,
) -> ElementGeometry:
    """Evaluate shape operators on the displacement field's Gauss rule

    Args:
        coords_u (array_like): displacement nodes, shape (..., nen_u, dim)
        coords_e (array_like): micro-strain nodes, shape (..., nen_e, dim)
        family_u (ElementFamily): displacement element type
        family_e (ElementFamily): micro-strain element type
        element (int, optional): element index reported for inverted elements

    Returns:
        ElementGeometry
    """
    coords_u = np.asarray(coords_u, dtype=float)
    coords_e = np.asarray(coords_e, dtype=float)
    dim = coords_u.shape[-1]
    rule = gauss_rule(family_u)
    ref_u = reference_shapes(family_u, family_u)
    ref_e = reference_shapes(family_e, family_u)

    dNu_dx, detJ = geometry_map(coords_u[..., None, :, :], ref_u.dN_dxi, element)
    dNe_dx, _ = geometry_map(coords_e[..., None, :, :], ref_e.dN_dxi, element)
    points = np.einsum("qa,...ai->...qi", ref_u.N, coords_u)
    N_e = np.broadcast_to(ref_e.N, dNe_dx.shape[:-1])
    return ElementGeometry(
        B=b_matrix(dNu_dx, dim),
        N_e=N_e,
        dN_e=dNe_dx,
        wdetJ=detJ * rule.weights,
        points=points,
    )


class ModelGeometry:
    """Flat Gauss point geometry of a whole mesh

    All arrays are flat over `nel * ngp` points (element-major) and read-only.

    Attributes:
        ngp (int): Gauss points per element
        B (numpy.ndarray): shape (nel * ngp, voigt, dim * nen_u)
        N_e (numpy.ndarray): shape (nel * ngp, nen_e)
        dN_e (numpy.ndarray): shape (nel * ngp, nen_e, dim)
        wdetJ (numpy.ndarray): shape (nel * ngp,)
        points (numpy.ndarray): shape (nel * ngp, dim)
    """

    def __init__(self, mesh):
        self.ngp = gauss_rule(mesh.family_u).ngp
        self.element_count = mesh.element_count
        geo = element_geometry(
            mesh.element_coords_u, mesh.element_coords_e, mesh.family_u, mesh.family_e
        )
        npts = self.element_count * self.ngp
        self.B = frozen(geo.B.reshape(npts, *geo.B.shape[2:]))
        self.N_e = frozen(np.ascontiguousarray(geo.N_e).reshape(npts, -1))
        self.dN_e = frozen(geo.dN_e.reshape(npts, *geo.dN_e.shape[2:]))
        self.wdetJ = frozen(geo.wdetJ.reshape(npts))
        self.points = frozen(geo.points.reshape(npts, -1))

    @property
    def point_count(self) -> int:
        return len(self.wdetJ)

    def per_element(self, array: np.ndarray) -> np.ndarray:
        """Reshape a flat Gauss point array to (nel, ngp, ...)"""
        return array.reshape(self.element_count, self.ngp, *array.shape[1:])

    def element_mean(self, values) -> np.ndarray:
        """Volume-weighted element mean of a scalar Gauss point field, shape (nel,)"""
        values = self.per_element(np.asarray(values, dtype=float))
        w = self.per_element(self.wdetJ)
        return (values * w).sum(axis=1) / w.sum(axis=1)

    def integrate(self, values) -> float:
        """Integral of a scalar Gauss point field over the mesh"""
        return float(np.dot(np.asarray(values, dtype=float), self.wdetJ))

    def __repr__(self) -> str:
        return f"{type(self).__name__}(elements={self.element_count}, ngp={self.ngp})"


@lru_cache(maxsize=8)
def model_geometry(mesh) -> ModelGeometry:
    """Cached :obj:`ModelGeometry` of a mesh (meshes are immutable)"""
    return ModelGeometry(mesh)
