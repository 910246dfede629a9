"""Element kernels: shape functions, Gauss rules, isoparametric mapping and
strain-displacement matrices in Voigt notation.

All functions work on single points as well as on stacks of points/elements,
the leading dimensions are broadcast. The batched backend evaluates the whole
model with the same kernels the loop backend calls per element.

Voigt ordering with engineering shear:

- 1D: (e11,)
- 2D: (e11, e22, g12)
- 3D: (e11, e22, e33, g12, g23, g13)
"""
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from itertools import product
from typing import Optional, Tuple

import numpy as np

from .exceptions import InvalidArgumentError, InvertedElementError
from .misc import frozen

VOIGT_SIZE = {1: 1, 2: 3, 3: 6}


class ElementFamily(str, Enum):
    """Supported element types"""

    LINE2 = "line2"
    LINE3 = "line3"
    QUAD4 = "quad4"
    QUAD8 = "quad8"
    HEX8 = "hex8"

    @property
    def dim(self) -> int:
        return _DIM[self]

    @property
    def node_count(self) -> int:
        return len(_REFERENCE_NODES[self])

    @property
    def corners(self) -> Tuple[int, ...]:
        """Local indices of the corner (vertex) nodes"""
        return _CORNERS[self]

    @property
    def reference_nodes(self) -> np.ndarray:
        return _REFERENCE_NODES[self]


_DIM = {
    ElementFamily.LINE2: 1,
    ElementFamily.LINE3: 1,
    ElementFamily.QUAD4: 2,
    ElementFamily.QUAD8: 2,
    ElementFamily.HEX8: 3,
}

_QUAD4_NODES = [[-1, -1], [1, -1], [1, 1], [-1, 1]]
_REFERENCE_NODES = {
    ElementFamily.LINE2: frozen(np.array([[-1.0], [1.0]])),
    ElementFamily.LINE3: frozen(np.array([[-1.0], [0.0], [1.0]])),
    ElementFamily.QUAD4: frozen(np.array(_QUAD4_NODES, dtype=float)),
    ElementFamily.QUAD8: frozen(
        np.array(_QUAD4_NODES + [[0, -1], [1, 0], [0, 1], [-1, 0]], dtype=float)
    ),
    ElementFamily.HEX8: frozen(
        np.array(
            [xy + [-1] for xy in _QUAD4_NODES] + [xy + [1] for xy in _QUAD4_NODES],
            dtype=float,
        )
    ),
}

_CORNERS = {
    ElementFamily.LINE2: (0, 1),
    ElementFamily.LINE3: (0, 2),
    ElementFamily.QUAD4: (0, 1, 2, 3),
    ElementFamily.QUAD8: (0, 1, 2, 3),
    ElementFamily.HEX8: tuple(range(8)),
}

# Gauss points per axis, full integration of the highest order field
_GAUSS_ORDER = {
    ElementFamily.LINE2: 2,
    ElementFamily.LINE3: 3,
    ElementFamily.QUAD4: 2,
    ElementFamily.QUAD8: 3,
    ElementFamily.HEX8: 2,
}


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss quadrature on the reference element

    Attributes:
        points (numpy.ndarray): local coordinates, shape (ngp, dim)
        weights (numpy.ndarray): weights, shape (ngp,)
    """

    points: np.ndarray
    weights: np.ndarray

    @property
    def ngp(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class ShapeEval:
    """Shape functions evaluated at one or several points

    `dN_dx` and `detJ` are only set after :func:`geometry_map`.

    Attributes:
        N (numpy.ndarray): shape (..., nn)
        dN_dxi (numpy.ndarray): shape (..., nn, dim)
        dN_dx (numpy.ndarray, optional): shape (..., nn, dim)
        detJ (numpy.ndarray, optional): shape (...)
    """

    N: np.ndarray
    dN_dxi: np.ndarray
    dN_dx: Optional[np.ndarray] = None
    detJ: Optional[np.ndarray] = None


def shape_functions(family: ElementFamily, local_coord) -> ShapeEval:
    """Evaluate shape functions and their local derivatives

    Args:
        family (ElementFamily): element type
        local_coord (array_like): point(s) in the reference element,
            shape (dim,) or (npts, dim)

    Returns:
        ShapeEval: with `N` and `dN_dxi` set
    """
    family = ElementFamily(family)
    xi = np.asarray(local_coord, dtype=float)
    single = xi.ndim == 1
    xi = np.atleast_2d(xi).reshape(-1, family.dim)

    if family is ElementFamily.LINE2:
        x = xi[:, 0]
        N = np.stack([(1 - x) / 2, (1 + x) / 2], axis=-1)
        dN = np.stack([np.full_like(x, -0.5), np.full_like(x, 0.5)], axis=-1)[..., None]
    elif family is ElementFamily.LINE3:
        x = xi[:, 0]
        N = np.stack([x * (x - 1) / 2, 1 - x * x, x * (x + 1) / 2], axis=-1)
        dN = np.stack([x - 0.5, -2 * x, x + 0.5], axis=-1)[..., None]
    elif family is ElementFamily.QUAD8:
        N, dN = _serendipity8(xi)
    else:
        N, dN = _multilinear(xi, family.reference_nodes)

    if single:
        N, dN = N[0], dN[0]
    return ShapeEval(N=N, dN_dxi=dN)


def _multilinear(xi: np.ndarray, nodes: np.ndarray):
    """Bi/trilinear Lagrange functions, N_a = prod_i (1 + xi_i xi_ai) / 2"""
    dim = nodes.shape[1]
    # factors, shape (npts, nn, dim)
    factors = (1 + xi[:, None, :] * nodes[None, :, :]) / 2
    N = np.prod(factors, axis=-1)
    dN = np.empty(factors.shape)
    for i in range(dim):
        others = [j for j in range(dim) if j != i]
        dN[..., i] = nodes[None, :, i] / 2 * np.prod(factors[..., others], axis=-1)
    return N, dN


def _serendipity8(xi: np.ndarray):
    nodes = _REFERENCE_NODES[ElementFamily.QUAD8]
    x, y = xi[:, 0:1], xi[:, 1:2]
    xa, ya = nodes[None, :, 0], nodes[None, :, 1]
    N = np.empty((len(xi), 8))
    dN = np.empty((len(xi), 8, 2))

    c = slice(0, 4)
    xx, yy = x * xa[:, c], y * ya[:, c]
    N[:, c] = (1 + xx) * (1 + yy) * (xx + yy - 1) / 4
    dN[:, c, 0] = xa[:, c] * (1 + yy) * (2 * xx + yy) / 4
    dN[:, c, 1] = ya[:, c] * (1 + xx) * (xx + 2 * yy) / 4

    # mid-side nodes on eta = +-1
    m = [4, 6]
    yy = y * ya[:, m]
    N[:, m] = (1 - x * x) * (1 + yy) / 2
    dN[:, m, 0] = -x * (1 + yy)
    dN[:, m, 1] = ya[:, m] * (1 - x * x) / 2

    # mid-side nodes on xi = +-1
    m = [5, 7]
    xx = x * xa[:, m]
    N[:, m] = (1 + xx) * (1 - y * y) / 2
    dN[:, m, 0] = xa[:, m] * (1 - y * y) / 2
    dN[:, m, 1] = -y * (1 + xx)
    return N, dN


@lru_cache()
def gauss_rule(family: ElementFamily) -> QuadratureRule:
    """Tensor product Gauss-Legendre rule for an element family

    Points are ordered with the first local axis varying fastest.

    Args:
        family (ElementFamily): element type

    Returns:
        QuadratureRule
    """
    try:
        family = ElementFamily(family)
    except ValueError:
        raise InvalidArgumentError(f"Unknown element family '{family}'") from None
    order = _GAUSS_ORDER[family]
    pts, wts = np.polynomial.legendre.leggauss(order)
    points, weights = [], []
    for combo in product(range(order), repeat=family.dim):
        # last index of the product varies fastest -> map it to the first axis
        idx = combo[::-1]
        points.append([pts[i] for i in idx])
        weights.append(np.prod([wts[i] for i in idx]))
    return QuadratureRule(points=frozen(np.array(points)), weights=frozen(np.array(weights)))


@lru_cache()
def reference_shapes(family: ElementFamily, rule_family: ElementFamily) -> ShapeEval:
    """Shape functions of `family` at the Gauss points of `rule_family`"""
    shapes = shape_functions(family, gauss_rule(rule_family).points)
    return ShapeEval(N=frozen(shapes.N), dN_dxi=frozen(shapes.dN_dxi))


def geometry_map(node_coords, dN_dxi, element: int = None):
    """Isoparametric mapping of shape function derivatives

    `J[i, j] = d x_i / d xi_j`, `dN_dx = dN_dxi . J^-1`.

    Args:
        node_coords (array_like): shape (..., nn, dim)
        dN_dxi (array_like): shape (..., nn, dim), broadcast against `node_coords`
        element (int, optional): element index reported on failure. For stacked
            input without this argument the index along the first axis is reported.

    Returns:
        tuple: `dN_dx` with shape (..., nn, dim) and `detJ` with shape (...)

    Raises:
        InvertedElementError: if any `detJ <= 0`
    """
    X = np.asarray(node_coords, dtype=float)
    dN = np.asarray(dN_dxi, dtype=float)
    J = np.einsum("...ai,...aj->...ij", X, dN)
    detJ = np.linalg.det(J)
    bad = ~(detJ > 0)
    if np.any(bad):
        first = np.argwhere(bad)[0] if detJ.ndim else ()
        if element is None and detJ.ndim >= 2:
            element = int(first[0])
        raise InvertedElementError(element, float(detJ[tuple(first)]))
    dN_dx = np.einsum("...aj,...ji->...ai", dN, np.linalg.inv(J))
    return dN_dx, detJ


def b_matrix(dN_dx, dim: int) -> np.ndarray:
    """Strain-displacement matrix in Voigt notation

    Local displacement DOFs are ordered node-major (`dim * a + i`).

    Args:
        dN_dx (array_like): shape (..., nn, dim)
        dim (int): spatial dimension

    Returns:
        numpy.ndarray: shape (..., voigt, dim * nn)
    """
    if dim not in VOIGT_SIZE:
        raise InvalidArgumentError(f"Dimension {dim} not supported")
    dN = np.asarray(dN_dx, dtype=float)
    nn = dN.shape[-2]
    B = np.zeros(dN.shape[:-2] + (VOIGT_SIZE[dim], dim * nn))
    if dim == 1:
        B[..., 0, :] = dN[..., 0]
    elif dim == 2:
        B[..., 0, 0::2] = dN[..., 0]
        B[..., 1, 1::2] = dN[..., 1]
        B[..., 2, 0::2] = dN[..., 1]
        B[..., 2, 1::2] = dN[..., 0]
    elif dim == 3:
        for i in range(3):
            B[..., i, i::3] = dN[..., i]
        # shear rows: (row, (i, j)) -> g_ij = du_i/dx_j + du_j/dx_i
        for row, (i, j) in ((3, (0, 1)), (4, (1, 2)), (5, (0, 2))):
            B[..., row, i::3] = dN[..., j]
            B[..., row, j::3] = dN[..., i]
    return B
