"""Pointwise material laws of the localizing gradient damage model

All functions are vectorized: scalars broadcast against arrays of Gauss points,
Voigt vectors carry the component axis last.
"""
from dataclasses import asdict, dataclass, fields
from typing import List, Optional, Tuple

import numpy as np

from .elements import VOIGT_SIZE
from .exceptions import InvalidArgumentError

# strict increase needed to grow the history variable
HISTORY_TOLERANCE = 1e-10
# radicand of the equivalent strain below which the root term has no derivative
SQRT_REGULARIZATION = 1e-30

_NORMAL = {1: [0], 2: [0, 1], 3: [0, 1, 2]}
_SHEAR = {1: [], 2: [2], 3: [3, 4, 5]}


@dataclass(frozen=True)
class MaterialParams:
    """Material parameters

    Attributes:
        E (float): Young's modulus, MPa
        nu (float): Poisson's ratio
        k (float): ratio of compressive to tensile strength
        kappa0 (float): damage threshold strain
        alpha (float): residual damage parameter
        beta (float): softening rate
        h (float): coupling modulus, MPa
        c (float): gradient parameter, mm^2
        R (float): residual interaction
        n (float): interaction decay exponent
    """

    E: float
    nu: float
    k: float
    kappa0: float
    alpha: float
    beta: float
    h: float
    c: float
    R: float
    n: float

    def violations(self) -> List[Tuple[str, str]]:
        """List of (parameter, message) for every violated admissible range"""
        checks = [
            ("E", self.E > 0, "must be > 0"),
            ("nu", 0 <= self.nu < 0.5, "must be in [0, 0.5)"),
            ("k", self.k >= 1, "must be >= 1"),
            ("kappa0", self.kappa0 > 0, "must be > 0"),
            ("alpha", 0 < self.alpha <= 1, "must be in (0, 1]"),
            ("beta", self.beta > 0, "must be > 0"),
            ("h", self.h > 0, "must be > 0"),
            ("c", self.c > 0, "must be > 0"),
            ("R", 0 < self.R < 1, "must be in (0, 1)"),
            ("n", self.n > 0, "must be > 0"),
        ]
        return [
            (name, f"{message}, got {getattr(self, name)!r}")
            for name, ok, message in checks
            if not ok
        ]

    def validate(self) -> "MaterialParams":
        """Raise InvalidArgumentError for the first violated range, else return self"""
        for name, message in self.violations():
            raise InvalidArgumentError(f"{name} {message}")
        return self

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def names(cls) -> List[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class PointState:
    """Solution dependent variables of one or several Gauss points

    Attributes:
        strain (numpy.ndarray): Voigt strain
        eeq (numpy.ndarray): local equivalent strain
        deeq (numpy.ndarray): derivative of `eeq` w.r.t. the Voigt strain
        ebar (numpy.ndarray): micro-equivalent strain interpolated to the point
        grad_ebar (numpy.ndarray): gradient of `ebar`, 1/mm
        kappa (numpy.ndarray): history variable
        D (numpy.ndarray): damage
        dD (numpy.ndarray): dD/dkappa
        g (numpy.ndarray): interaction function
        dg (numpy.ndarray): dg/dD
        sigma (numpy.ndarray): Voigt stress, MPa
        loading (numpy.ndarray): 1 where kappa follows ebar, else 0
    """

    strain: np.ndarray
    eeq: np.ndarray
    deeq: np.ndarray
    ebar: np.ndarray
    grad_ebar: np.ndarray
    kappa: np.ndarray
    D: np.ndarray
    dD: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    sigma: np.ndarray
    loading: np.ndarray


def elasticity_matrix(E: float, nu: float, dim: int) -> np.ndarray:
    """Isotropic elasticity matrix in Voigt notation (engineering shear)

    2D is plane strain, 1D is the uniaxial modulus.

    Args:
        E (float): Young's modulus
        nu (float): Poisson's ratio
        dim (int): spatial dimension

    Returns:
        numpy.ndarray: shape (voigt, voigt)
    """
    if dim == 1:
        return np.array([[float(E)]])
    if dim not in (2, 3):
        raise InvalidArgumentError(f"Dimension {dim} not supported")
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    C = np.zeros((6, 6))
    C[:3, :3] = lam
    C[:3, :3] += 2 * mu * np.eye(3)
    C[3:, 3:] = mu * np.eye(3)
    if dim == 2:
        keep = [0, 1, 3]
        C = C[np.ix_(keep, keep)]
    return C


def _mises_constants(params: MaterialParams):
    k, nu = params.k, params.nu
    a = (k - 1) / (2 * k * (1 - 2 * nu))
    b = (k - 1) / (1 - 2 * nu)
    d = 2 * k / (1 - nu) ** 2
    return a, b, d


def strain_invariants(strain, dim: int):
    """First and second (deviatoric) invariant of a Voigt strain

    The full 3x3 tensor is diag-padded (uniaxial 1D, plane strain 2D).

    Returns:
        tuple: `I1`, `J2` and `dJ2/dstrain` (Voigt)
    """
    strain = np.asarray(strain, dtype=float)
    normal, shear = _NORMAL[dim], _SHEAR[dim]
    diag = np.zeros(strain.shape[:-1] + (3,))
    diag[..., : len(normal)] = strain[..., normal]
    I1 = np.asarray(diag.sum(axis=-1))
    dev = diag - I1[..., None] / 3
    gamma = strain[..., shear]
    J2 = np.asarray(0.5 * np.sum(dev**2, axis=-1) + np.sum((gamma / 2) ** 2, axis=-1))
    dJ2 = np.empty_like(strain)
    dJ2[..., normal] = dev[..., : len(normal)]
    dJ2[..., shear] = gamma / 2
    return I1, J2, dJ2


def _mises_terms(strain, params: MaterialParams, dim: int):
    a, b, d = _mises_constants(params)
    I1, J2, dJ2 = strain_invariants(strain, dim)
    g1 = np.zeros(VOIGT_SIZE[dim])
    g1[_NORMAL[dim]] = 1.0
    S = b * b * I1 * I1 + d * J2
    regular = S >= SQRT_REGULARIZATION
    root = np.sqrt(np.where(regular, S, 1.0))
    dS = 2 * b * b * I1[..., None] * g1 + d * dJ2
    return a, b, d, I1, g1, S, regular, root, dS


def equivalent_strain(strain, params: MaterialParams, dim: int):
    """Modified von Mises equivalent strain and its derivative

    `eeq = a I1 + sqrt(b^2 I1^2 + d J2) / (2k)` with
    `a = (k-1)/(2k(1-2nu))`, `b = (k-1)/(1-2nu)`, `d = 2k/(1-nu)^2`.
    Below a radicand of 1e-30 only the `I1` term contributes to the derivative.

    Args:
        strain (array_like): Voigt strain, shape (..., voigt)
        params (MaterialParams): material parameters
        dim (int): spatial dimension

    Returns:
        tuple: `eeq` with shape (...), `deeq` with shape (..., voigt)
    """
    a, _, _, I1, g1, S, regular, root, dS = _mises_terms(strain, params, dim)
    k = params.k
    eeq = a * I1 + np.sqrt(np.maximum(S, 0.0)) / (2 * k)
    deeq = a * g1 + np.where(regular[..., None], dS / (4 * k * root[..., None]), 0.0)
    return eeq, deeq


def equivalent_strain_hessian(strain, params: MaterialParams, dim: int) -> np.ndarray:
    """Second derivative of the equivalent strain, shape (..., voigt, voigt)

    Zero below the radicand regularization threshold.
    """
    _, b, d, _, g1, _, regular, root, dS = _mises_terms(strain, params, dim)
    nv = VOIGT_SIZE[dim]
    HJ = np.zeros((nv, nv))
    normal, shear = _NORMAL[dim], _SHEAR[dim]
    HJ[np.ix_(normal, normal)] = np.eye(len(normal)) - 1 / 3
    HJ[shear, shear] = 0.5
    d2S = 2 * b * b * np.outer(g1, g1) + d * HJ
    r = root[..., None, None]
    hess = (d2S / r - dS[..., :, None] * dS[..., None, :] / (2 * r**3)) / (4 * params.k)
    return np.where(regular[..., None, None], hess, 0.0)


def loading_indicator(ebar, kappa_committed) -> np.ndarray:
    """1.0 where the micro-equivalent strain exceeds the committed history"""
    return (np.asarray(ebar) - np.asarray(kappa_committed) > HISTORY_TOLERANCE).astype(float)


def update_history(ebar, kappa_prev, kappa0=None) -> np.ndarray:
    """History variable as running maximum of the micro-equivalent strain

    Args:
        ebar (array_like): micro-equivalent strain at the points
        kappa_prev (array_like): history of the last accepted step
        kappa0 (array_like, optional): threshold, lower bound of the result

    Returns:
        numpy.ndarray: updated history, never below `kappa_prev`
    """
    ebar = np.asarray(ebar, dtype=float)
    kappa_prev = np.asarray(kappa_prev, dtype=float)
    kappa = np.where(ebar - kappa_prev > HISTORY_TOLERANCE, ebar, kappa_prev)
    if kappa0 is not None:
        kappa = np.maximum(kappa, kappa0)
    return kappa


def damage(kappa, params: MaterialParams, kappa0=None):
    """Exponential softening damage law

    `D = 1 - kappa0/kappa (1 - alpha + alpha exp(-beta (kappa - kappa0)))`
    for `kappa > kappa0`, zero otherwise.

    Args:
        kappa (array_like): history variable
        params (MaterialParams): material parameters
        kappa0 (array_like, optional): per point threshold, defaults to `params.kappa0`

    Returns:
        tuple: `D` and `dD/dkappa`
    """
    kappa = np.asarray(kappa, dtype=float)
    k0 = params.kappa0 if kappa0 is None else np.asarray(kappa0, dtype=float)
    alpha, beta = params.alpha, params.beta
    active = kappa > k0
    kk = np.where(active, kappa, k0)
    decay = np.exp(-beta * (kk - k0))
    f = 1 - alpha + alpha * decay
    D = np.where(active, 1 - k0 / kk * f, 0.0)
    dD = np.where(active, k0 / kk**2 * f + k0 / kk * alpha * beta * decay, 0.0)
    return D, dD


def interaction(D, params: MaterialParams):
    """Damage dependent interaction function

    `g = ((1-R) exp(-n D) + R - exp(-n)) / (1 - exp(-n))`, decays from 1 to R.

    Returns:
        tuple: `g` and `dg/dD`
    """
    D = np.asarray(D, dtype=float)
    R, n = params.R, params.n
    en = np.exp(-n)
    decay = np.exp(-n * D)
    g = ((1 - R) * decay + R - en) / (1 - en)
    dg = -n * (1 - R) * decay / (1 - en)
    return g, dg


def stress(strain, D, eeq, deeq, ebar, params: MaterialParams, C) -> np.ndarray:
    """Cauchy stress `(1-D) C:strain + h (eeq - ebar) deeq/dstrain` (Voigt)"""
    strain = np.asarray(strain, dtype=float)
    elastic = np.einsum("ij,...j->...i", C, strain)
    mismatch = params.h * (np.asarray(eeq) - np.asarray(ebar))
    return (1 - np.asarray(D))[..., None] * elastic + mismatch[..., None] * deeq


def micro_stresses(eeq, ebar, grad_ebar, g, params: MaterialParams):
    """Micro stress `h (eeq - ebar)` and micro stress vector `g h c grad(ebar)`"""
    sbar = params.h * (np.asarray(eeq) - np.asarray(ebar))
    xi = (np.asarray(g) * params.h * params.c)[..., None] * np.asarray(grad_ebar)
    return sbar, xi


def free_energy_density(strain, D, eeq, ebar, grad_ebar, g, params: MaterialParams, C):
    """Stored energy density, MPa

    `1/2 (1-D) strain:C:strain + 1/2 h (eeq - ebar)^2 + 1/2 g h c |grad(ebar)|^2`
    """
    strain = np.asarray(strain, dtype=float)
    grad_ebar = np.asarray(grad_ebar, dtype=float)
    elastic = 0.5 * np.einsum("...i,ij,...j->...", strain, C, strain)
    coupling = 0.5 * params.h * (np.asarray(eeq) - np.asarray(ebar)) ** 2
    gradient = 0.5 * np.asarray(g) * params.h * params.c * np.sum(grad_ebar**2, axis=-1)
    return (1 - np.asarray(D)) * elastic + coupling + gradient


def point_update(
    strain,
    ebar,
    grad_ebar,
    kappa_committed,
    kappa0,
    params: MaterialParams,
    C,
    dim: int,
) -> PointState:
    """Evaluate all solution dependent variables at Gauss points

    The history is measured against `kappa_committed` (start of the load step).

    Args:
        strain (array_like): Voigt strain, shape (..., voigt)
        ebar (array_like): interpolated micro-equivalent strain, shape (...)
        grad_ebar (array_like): gradient of ebar, shape (..., dim)
        kappa_committed (array_like): history of the last accepted step
        kappa0 (array_like): damage threshold per point
        params (MaterialParams): material parameters
        C (numpy.ndarray): elasticity matrix
        dim (int): spatial dimension

    Returns:
        PointState
    """
    strain = np.asarray(strain, dtype=float)
    ebar = np.asarray(ebar, dtype=float)
    eeq, deeq = equivalent_strain(strain, params, dim)
    kappa = update_history(ebar, kappa_committed)
    D, dD = damage(kappa, params, kappa0)
    g, dg = interaction(D, params)
    return PointState(
        strain=strain,
        eeq=eeq,
        deeq=deeq,
        ebar=ebar,
        grad_ebar=np.asarray(grad_ebar, dtype=float),
        kappa=kappa,
        D=D,
        dD=dD,
        g=g,
        dg=dg,
        sigma=stress(strain, D, eeq, deeq, ebar, params, C),
        loading=loading_indicator(ebar, kappa_committed),
    )


def virgin_kappa(kappa0: Optional[np.ndarray], params: MaterialParams, size: int) -> np.ndarray:
    """Initial history: the per point threshold or the uniform `params.kappa0`"""
    if kappa0 is None:
        return np.full(size, params.kappa0)
    kappa0 = np.asarray(kappa0, dtype=float)
    if kappa0.shape != (size,):
        raise InvalidArgumentError(f"kappa0 field must have shape ({size},), got {kappa0.shape}")
    return kappa0.copy()
