"""Backend timing and mesh convergence runs"""
import logging
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .assembly import BACKENDS, assemble
from .config import ConfigIni
from .exceptions import BackendMismatchError, InvalidArgumentError, StepFailureError
from .problems import ProblemSpec, build_model, build_problem
from .solver import NewtonConfig, SimulationResult, run_simulation

try:
    import resource
except ImportError:  # not available on Windows
    resource = None

logger = logging.getLogger(__name__)

PHASES = ("assembly", "solve", "update")
REACTION_RTOL = 1e-6
SYSTEM_RTOL = 1e-12


class PhaseTimer:
    """Accumulates wall times of solver phases per Newton iteration

    Each finished iteration records the time spent in every phase and the
    total time since the previous iteration ended. The remainder of the
    total is driver overhead.
    """

    def __init__(self):
        self.iterations: List[Dict[str, float]] = []
        self._reset()

    def _reset(self):
        self._current = dict.fromkeys(PHASES, 0.0)
        self._start = time.perf_counter()

    @contextmanager
    def phase(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self._current[name] = self._current.get(name, 0.0) + time.perf_counter() - start

    def end_iteration(self) -> None:
        self.iterations.append({**self._current, "total": time.perf_counter() - self._start})
        self._reset()

    def totals(self) -> Dict[str, float]:
        return {
            name: sum(it[name] for it in self.iterations) for name in (*PHASES, "total")
        }


def peak_rss_mb() -> Optional[float]:
    """Peak resident set size of this process in MiB, `None` if unknown"""
    if resource is None:
        return None
    peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    # bytes on macOS, KiB elsewhere
    return peak / 2**20 if sys.platform == "darwin" else peak / 2**10


@dataclass
class BackendTiming:
    """Phase timings of one backend over all repeats

    Attributes:
        backend (str): backend id
        iterations (list of dict): per iteration phase times of all repeats
        repeat_totals (list of float): wall time per repeat, s
        repeat_iterations (list of int): Newton iterations per repeat
        peak_rss_mb (float): peak resident memory after the runs, if available
        error (str): failure message if a step failed
    """

    backend: str
    iterations: List[Dict[str, float]] = field(default_factory=list, repr=False)
    repeat_totals: List[float] = field(default_factory=list)
    repeat_iterations: List[int] = field(default_factory=list)
    peak_rss_mb: Optional[float] = None
    error: Optional[str] = None

    @property
    def repeats(self) -> int:
        return len(self.repeat_totals)

    @property
    def ok(self) -> bool:
        return self.error is None and self.repeats > 0

    def mean(self, phase: str) -> float:
        """Mean time per iteration of `phase` (or `total`) over all repeats"""
        if not self.iterations:
            return float("nan")
        return float(np.mean([it[phase] for it in self.iterations]))


@dataclass
class TimingReport:
    """Result of :func:`run_benchmark`

    Attributes:
        problem (str): problem id
        elements (int): element count
        timings (list of BackendTiming): one entry per backend, in run order
    """

    problem: str
    elements: int
    timings: List[BackendTiming] = field(default_factory=list)

    def __getitem__(self, backend: str) -> BackendTiming:
        for timing in self.timings:
            if timing.backend == backend:
                return timing
        raise KeyError(backend)

    @property
    def speedups(self) -> Dict[str, float]:
        """Mean iteration time of the first backend divided by each backend's"""
        if not self.timings or not self.timings[0].ok:
            return {}
        reference = self.timings[0].mean("total")
        return {
            t.backend: reference / t.mean("total")
            for t in self.timings
            if t.ok and t.mean("total") > 0
        }

    def to_ini(self) -> ConfigIni:
        ini = ConfigIni()
        ini["Benchmark/problem"] = self.problem
        ini["Benchmark/elements"] = str(self.elements)
        for t in self.timings:
            section = f"Backend {t.backend}"
            ini[section, "repeats"] = str(t.repeats)
            ini[section, "iterations"] = str(len(t.iterations))
            for name in (*PHASES, "total"):
                ini[section, f"mean_{name}"] = f"{t.mean(name):.6e}"
            if t.repeat_totals:
                ini[section, "repeat_totals"] = [f"{x:.6e}" for x in t.repeat_totals]
            if t.peak_rss_mb is not None:
                ini[section, "peak_rss_mb"] = f"{t.peak_rss_mb:.1f}"
            if t.error is not None:
                ini[section, "error"] = t.error.split()
        for backend, ratio in self.speedups.items():
            ini["Speedup", backend] = f"{ratio:.4f}"
        return ini

    def __str__(self) -> str:
        lines = [f"{self.problem}: {self.elements} elements"]
        for t in self.timings:
            if not t.ok:
                lines.append(f"  {t.backend}: failed ({t.error})")
                continue
            phases = ", ".join(f"{name} {t.mean(name):.3e} s" for name in PHASES)
            lines.append(f"  {t.backend}: {phases}, total {t.mean('total'):.3e} s per iteration")
        return "\n".join(lines)


def system_difference(model, state) -> float:
    """Relative max-abs difference between loop and batched assembly at `state`"""
    loop = assemble(model.mesh, model.dofmap, state, model.params, "loop")
    batched = assemble(model.mesh, model.dofmap, state, model.params, "batched")
    dK = abs(loop.matrix - batched.matrix).max()
    dF = np.abs(loop.rhs - batched.rhs).max(initial=0.0)
    scale_K = max(abs(batched.matrix).max(), 1e-300)
    scale_F = max(np.abs(batched.rhs).max(initial=0.0), 1e-300)
    return float(max(dK / scale_K, dF / scale_F if dF > 0 else 0.0))


def _check_equivalence(results: Dict[str, SimulationResult]) -> None:
    reference_backend, reference = next(iter(results.items()))
    for backend, result in results.items():
        if len(result.steps) != len(reference.steps) or not np.allclose(
            result.reactions,
            reference.reactions,
            rtol=REACTION_RTOL,
            atol=REACTION_RTOL * max(np.abs(reference.reactions).max(initial=0.0), 1e-300),
        ):
            raise BackendMismatchError(
                f"Reaction history of backend '{backend}' differs from '{reference_backend}'"
            )
    if set(results) >= {"loop", "batched"}:
        difference = system_difference(reference.model, reference.state)
        if difference > SYSTEM_RTOL:
            raise BackendMismatchError(
                f"Assembled systems differ between backends, relative {difference:.3e}"
            )


def run_benchmark(
    problem: ProblemSpec,
    backends: Sequence[str] = BACKENDS,
    repeats: int = 1,
    config: NewtonConfig = None,
) -> TimingReport:
    """Time a problem with every backend

    Repeats run sequentially. A failing step ends that backend's runs and is
    recorded in the report, the other backends still run.

    Args:
        problem (ProblemSpec): problem definition
        backends (sequence of str): backends in report order, the first one is
            the reference of the speedup ratios
        repeats (int): runs per backend
        config (NewtonConfig, optional): iteration settings

    Returns:
        TimingReport

    Raises:
        InvalidArgumentError: for unknown backends or `repeats < 1`
        BackendMismatchError: if successful backends disagree on the results
    """
    if repeats < 1:
        raise InvalidArgumentError(f"repeats must be >= 1, got {repeats}")
    unknown = [b for b in backends if b not in BACKENDS]
    if unknown or not backends:
        raise InvalidArgumentError(f"Unknown backends {unknown}, expected some of {BACKENDS}")
    config = config or NewtonConfig()
    model = build_model(problem)
    report = TimingReport(problem.problem, model.mesh.element_count)
    results: Dict[str, SimulationResult] = {}

    for backend in backends:
        timing = BackendTiming(backend)
        report.timings.append(timing)
        for repeat in range(1, repeats + 1):
            timer = PhaseTimer()
            start = time.perf_counter()
            try:
                result = run_simulation(
                    model, config, backend, snapshot_interval=0, timer=timer
                )
            except StepFailureError as err:
                logger.error(f"{backend} repeat {repeat}: {err}")
                timing.error = str(err)
                break
            timing.repeat_totals.append(time.perf_counter() - start)
            timing.repeat_iterations.append(len(timer.iterations))
            timing.iterations += timer.iterations
            logger.info(
                f"{backend} repeat {repeat}/{repeats}: {timing.repeat_totals[-1]:.3f} s, "
                f"{len(timer.iterations)} iterations"
            )
        timing.peak_rss_mb = peak_rss_mb()
        if timing.ok:
            # identical backend listed twice compares against its own first run
            results.setdefault(backend, result)

    if len(results) > 1:
        _check_equivalence(results)
    return report


def peak_reactions(
    problem_id: str,
    divisions_list: Sequence[Sequence[int]],
    overrides: dict = None,
    config: NewtonConfig = None,
) -> List[float]:
    """Peak reaction force for several mesh sizes

    Args:
        problem_id (str): problem id
        divisions_list (sequence): `divisions` per run, e.g. `[(500,), (800,), (1000,)]`
        overrides (dict, optional): further problem overrides
        config (NewtonConfig, optional): iteration settings

    Returns:
        list of float: peak reaction per mesh
    """
    peaks = []
    base = build_problem(problem_id, overrides)
    for divisions in divisions_list:
        spec = replace(base, divisions=tuple(int(n) for n in divisions)).validate()
        result = run_simulation(spec, config, snapshot_interval=0)
        logger.info(f"{problem_id} {spec.divisions}: peak reaction {result.peak_reaction:.6g}")
        peaks.append(result.peak_reaction)
    return peaks
