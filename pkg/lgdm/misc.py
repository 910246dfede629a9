"""Miscellaneous tools"""
import multiprocessing
from typing import List

import numpy as np


def cached_property(func):
    """Cache class property decorator

    Caches attribute under `_attr_`.
    """

    def wrapper(self):
        cached_name = "_" + func.__name__
        try:
            return getattr(self, cached_name)
        except AttributeError:
            setattr(self, cached_name, func(self))
        return getattr(self, cached_name)

    return property(wrapper)


def map_ordered(func, tasks, processes: int = 1) -> list:
    """Apply `func` to all `tasks`, in a process pool if `processes > 1`

    Results are returned in task order regardless of completion order.

    Args:
        func (function): picklable module level function
        tasks (iterable): arguments, one per call
        processes (int): number of worker processes

    Returns:
        list: `[func(task) for task in tasks]`
    """
    if processes <= 1:
        return [func(task) for task in tasks]
    with multiprocessing.Pool(processes) as p:
        return list(p.imap(func, tasks))


def chunks(count: int, parts: int) -> List[slice]:
    """Split `range(count)` into at most `parts` contiguous slices"""
    bounds = np.linspace(0, count, min(max(parts, 1), max(count, 1)) + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


def frozen(array) -> np.ndarray:
    """Return `array` as a read-only numpy array

    Used for everything that is shared between phases or workers
    (meshes, dof maps, Gauss point state).
    """
    array = np.asarray(array)
    array.flags.writeable = False
    return array
