"""Exceptions raised by lgdm

All errors derive from :obj:`LGDMError` and from the closest builtin exception,
so `except ValueError` keeps working for callers that don't know about lgdm.
"""


class LGDMError(Exception):
    """Base class of all lgdm errors"""


class InvalidArgumentError(LGDMError, ValueError):
    """Argument outside of its admissible range"""


class UnsupportedGeometryError(LGDMError, ValueError):
    """Geometry that the structured mesh tools can't represent"""


class InvertedElementError(LGDMError, ValueError):
    """Non-positive Jacobian determinant

    Attributes:
        element (int): index of the offending element (None if unknown)
        detj (float): offending determinant
    """

    def __init__(self, element, detj):
        self.element = element
        self.detj = detj
        where = "" if element is None else f" in element {element}"
        super().__init__(f"Inverted element{where}: det J = {detj:.3e}")


class InvalidStateError(LGDMError, ValueError):
    """Gauss point state inconsistent with the mesh"""


class UnsupportedConstraintError(LGDMError, ValueError):
    """Constraint on a DOF that can't be prescribed"""


class ConfigError(LGDMError, ValueError):
    """Invalid configuration

    Attributes:
        key (str): key path, e.g. `Material/nu`
    """

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class SolverError(LGDMError, RuntimeError):
    """Linear solve failed

    Attributes:
        pivot_ratio (float): min/max absolute pivot of the LU factorization, if known
    """

    def __init__(self, message, pivot_ratio=None):
        self.pivot_ratio = pivot_ratio
        if pivot_ratio is not None:
            message = f"{message} (pivot ratio {pivot_ratio:.3e})"
        super().__init__(message)


class StepFailureError(LGDMError, RuntimeError):
    """Load step did not converge

    Attributes:
        step (int): load step index (1-based)
        norms (list of tuple): last (du ratio, de ratio, residual norm) records
    """

    def __init__(self, step, reason, norms=()):
        self.step = step
        self.norms = list(norms)
        last = ""
        if self.norms:
            du, de, res = self.norms[-1]
            last = f"; last |du|/|u|={du:.3e}, |de|/|e|={de:.3e}, |r|={res:.3e}"
        super().__init__(f"Load step {step} failed: {reason}{last}")


class BackendMismatchError(LGDMError, RuntimeError):
    """Backends produced different physics"""
