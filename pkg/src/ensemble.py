"""
Deterministic Monte Carlo ensemble over growth trajectories.

Every realization (m, r) owns the stream `derive_stream(seed, m, r)`; it
grows one full trajectory and evaluates all observables at the grid bond
counts n. Results are gathered in realization order (ProcessPoolExecutor.map
preserves order) and folded into Welford accumulators sequentially, so the
output does not depend on the number of workers.
"""
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from tenacity import Retrying, before_sleep_log, retry_if_exception_type, stop_after_attempt
from tqdm import tqdm

from src.eigenstats import AMPLITUDE_TOL, EigenstatsAccumulator, EigenstatsCurves, profile_arrays
from src.errors import ConfigError, EnsembleAbortError, InvalidArgumentError, NumericalError
from src.lattice import LatticeTopology, build_lattice
from src.percolation import grow_trajectory, replay_states
from src.spectral import eig_by_component, laplacian
from src.transport import (
    TransportProblem,
    coherent_survival,
    connectivity_oracle,
    dark_subspace,
    incoherent_survival,
    source_survival_profile,
)
from src.utils.rng import derive_stream, stream_key
from src.utils.stats import RunningMoments

logger = logging.getLogger(__name__)

DEFAULT_M = (1, 2, 4, 8, 16, 32, 84)
DEFAULT_REALIZATIONS = 4000
DEFAULT_SEED = 20160104
ORACLE_TOL = 1e-9

SCALAR_FAMILIES = ("mu_c", "mu_c_single", "mu_i", "zeta", "wrapping", "gamma", "xi_avg")
EIGENSTATE_FAMILIES = ("xi_l", "nu_l")


@dataclass(frozen=True)
class EnsembleConfig:
    side_length: int = 7
    m_values: Tuple[int, ...] = DEFAULT_M
    realizations: int = DEFAULT_REALIZATIONS
    seed: int = DEFAULT_SEED
    grid: Optional[Tuple[int, ...]] = None
    grid_stride: int = 1
    threads: int = 0
    coherent: bool = True
    incoherent: bool = True
    cluster: bool = True
    eigenstats: bool = True
    oracle_check: bool = True
    amplitude_tol: float = AMPLITUDE_TOL
    max_failure_rate: float = 0.001
    progress: bool = False

    def __post_init__(self):
        if self.side_length < 2:
            raise InvalidArgumentError("side length must be >= 2")
        if self.realizations < 1:
            raise InvalidArgumentError("at least one realization is required")
        if not self.m_values or any(m < 1 for m in self.m_values):
            raise InvalidArgumentError("m values must be >= 1")
        if self.grid_stride < 1:
            raise InvalidArgumentError("grid stride must be >= 1")
        if self.grid is not None:
            bonds = 2 * self.side_length * (self.side_length - 1)
            if list(self.grid) != sorted(set(self.grid)) or self.grid[0] < 0 or self.grid[-1] > bonds:
                raise InvalidArgumentError(f"grid must be sorted, unique and inside [0, {bonds}]")

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "EnsembleConfig":
        try:
            ensemble = config['ensemble']
            observables = config['observables']
            m_values = ensemble['m']
            if isinstance(m_values, int):
                m_values = [m_values]
            return cls(
                side_length=int(config['lattice']['side_length']),
                m_values=tuple(int(m) for m in m_values),
                realizations=int(ensemble['realizations']),
                seed=int(ensemble['seed']),
                grid=tuple(int(n) for n in ensemble['grid']) if ensemble.get('grid') else None,
                grid_stride=int(ensemble.get('grid_stride', 1)),
                threads=int(ensemble.get('threads', 0)),
                coherent=bool(observables.get('coherent', True)),
                incoherent=bool(observables.get('incoherent', True)),
                cluster=bool(observables.get('cluster', True)),
                eigenstats=bool(observables.get('eigenstats', True)),
                oracle_check=bool(ensemble.get('oracle_check', True)),
                amplitude_tol=float(config.get('numerics', {}).get('amplitude_tol', AMPLITUDE_TOL)),
                max_failure_rate=float(ensemble.get('max_failure_rate', 0.001)),
                progress=bool(config.get('output', {}).get('progress', False)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid ensemble configuration: {e}") from e

    @property
    def bond_count(self) -> int:
        return 2 * self.side_length * (self.side_length - 1)

    @property
    def site_count(self) -> int:
        return self.side_length * self.side_length

    def grid_points(self) -> Tuple[int, ...]:
        """Bond counts n at which observables are evaluated; always includes 0 and B."""
        if self.grid is not None:
            return self.grid
        points = list(range(0, self.bond_count + 1, self.grid_stride))
        if points[-1] != self.bond_count:
            points.append(self.bond_count)
        return tuple(points)

    def worker_count(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'side_length': self.side_length,
            'm': list(self.m_values),
            'realizations': self.realizations,
            'seed': self.seed,
            'grid': list(self.grid_points()),
            'grid_stride': self.grid_stride,
            'coherent': self.coherent,
            'incoherent': self.incoherent,
            'cluster': self.cluster,
            'eigenstats': self.eigenstats,
            'oracle_check': self.oracle_check,
            'amplitude_tol': self.amplitude_tol,
            'max_failure_rate': self.max_failure_rate,
        }


@dataclass(frozen=True)
class CurveEstimate:
    p: float
    mean: float
    stderr: float
    count: int


@dataclass
class Curve:
    """Ensemble mean of one observable against bond fraction, for one m."""

    family: str
    m: int
    p: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    count: np.ndarray

    def estimates(self) -> List[CurveEstimate]:
        return [
            CurveEstimate(float(p), float(mean), float(se), int(c))
            for p, mean, se, c in zip(self.p, self.mean, self.stderr, self.count)
        ]

    @classmethod
    def from_estimates(cls, family: str, m: int, estimates: Sequence[CurveEstimate]) -> "Curve":
        return cls(
            family=family,
            m=m,
            p=np.array([e.p for e in estimates], dtype=float),
            mean=np.array([e.mean for e in estimates], dtype=float),
            stderr=np.array([e.stderr for e in estimates], dtype=float),
            count=np.array([e.count for e in estimates], dtype=int),
        )


@dataclass(frozen=True)
class ScalarEstimate:
    mean: float
    stderr: float
    count: int


@dataclass
class RealizationResult:
    m: int
    r: int
    reseeded: bool
    wrap_fraction: float
    scalars: Dict[str, np.ndarray]
    xi: Optional[np.ndarray] = None
    nu: Optional[np.ndarray] = None


@dataclass
class RealizationFailure:
    m: int
    r: int
    message: str
    matrix_dump: Optional[str] = field(default=None, repr=False)


@dataclass
class EnsembleResult:
    config: EnsembleConfig
    p: np.ndarray
    curves: Dict[str, Dict[int, Curve]] = field(default_factory=dict)
    eigenstats: Dict[int, EigenstatsCurves] = field(default_factory=dict)
    wrap_fraction: Dict[int, ScalarEstimate] = field(default_factory=dict)
    failures: List[RealizationFailure] = field(default_factory=list)
    reseeded: List[Tuple[int, int]] = field(default_factory=list)


@lru_cache(maxsize=None)
def _topology(side_length: int) -> LatticeTopology:
    return build_lattice(side_length)


def simulate_realization(config: EnsembleConfig, m: int, r: int, reseeded: bool = False) -> RealizationResult:
    """Grow one trajectory and evaluate every selected observable on the grid."""
    topology = _topology(config.side_length)
    rng = derive_stream(config.seed, m, r, reseeded)
    trajectory = grow_trajectory(topology, m, rng, seed=(config.seed,) + stream_key(config.seed, m, r, reseeded))

    grid = config.grid_points()
    G, N = len(grid), topology.site_count
    sources = sorted(topology.sources)
    sinks = sorted(topology.sinks)
    scalars = {name: np.full(G, np.nan) for name in SCALAR_FAMILIES}
    xi = np.empty((G, N)) if config.eigenstats else None
    nu = np.empty((G, N)) if config.eigenstats else None
    need_spectrum = config.coherent or config.eigenstats

    for k, (n, state) in enumerate(replay_states(trajectory, grid)):
        scalars["zeta"][k] = trajectory.zeta[n]
        scalars["wrapping"][k] = float(trajectory.wrapping[n])
        problem = TransportProblem.from_lattice(topology, state.occupied)

        decomposition = None
        if need_spectrum:
            decomposition = eig_by_component(laplacian(topology, state.occupied), state.component_labels())

        oracle = connectivity_oracle(problem, state)
        if config.incoherent:
            if config.oracle_check:
                spectral = incoherent_survival(problem).survival
                if abs(spectral - oracle) > ORACLE_TOL:
                    raise NumericalError(
                        f"incoherent survival {spectral!r} disagrees with connectivity {oracle!r} at n={n}"
                    )
            scalars["mu_i"][k] = 1.0 - oracle

        if config.coherent:
            dark = dark_subspace(decomposition, sinks)
            survival = coherent_survival(problem, dark=dark).survival
            if survival < oracle - ORACLE_TOL:
                raise NumericalError(f"coherent survival {survival!r} below the classical floor {oracle!r} at n={n}")
            scalars["mu_c"][k] = 1.0 - survival
            single, _ = source_survival_profile(problem, state=state, dark=dark)
            scalars["mu_c_single"][k] = 1.0 - float(single.mean())

        if config.eigenstats:
            xi[k], nu[k] = profile_arrays(decomposition, sources, sinks, config.amplitude_tol)
            if xi[k].min() < 1.0 - 1e-9 or xi[k].max() > N + 1e-9:
                raise NumericalError(f"participation ratio outside [1, {N}] at n={n}")
            scalars["gamma"][k] = nu[k].sum()
            scalars["xi_avg"][k] = xi[k].mean()

    return RealizationResult(
        m=m,
        r=r,
        reseeded=reseeded,
        wrap_fraction=float(trajectory.wrap_fraction),
        scalars=scalars,
        xi=xi,
        nu=nu,
    )


def run_realization(task: Tuple[EnsembleConfig, int, int]) -> Union[RealizationResult, RealizationFailure]:
    """Worker entry point; a failing realization is retried once on its flagged stream."""
    config, m, r = task
    try:
        for attempt in Retrying(
            stop=stop_after_attempt(2),
            retry=retry_if_exception_type(NumericalError),
            before_sleep=before_sleep_log(logger, logging.WARNING),
            reraise=True,
        ):
            with attempt:
                reseeded = attempt.retry_state.attempt_number > 1
                return simulate_realization(config, m, r, reseeded)
    except NumericalError as e:
        logger.error("realization m=%d r=%d failed after re-seeding: %s", m, r, e)
        return RealizationFailure(m=m, r=r, message=str(e), matrix_dump=e.matrix_dump)


def _realizations(config: EnsembleConfig, m: int) -> Iterator[Union[RealizationResult, RealizationFailure]]:
    tasks = ((config, m, r) for r in range(config.realizations))
    workers = min(config.worker_count(), config.realizations)
    if workers == 1:
        yield from map(run_realization, tasks)
        return
    chunksize = max(1, config.realizations // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as executor:
        yield from executor.map(run_realization, tasks, chunksize=chunksize)


class _FamilyAccumulator:
    def __init__(self, config: EnsembleConfig, p: np.ndarray):
        G = len(p)
        self.p = p
        self.scalars = {name: RunningMoments(G) for name in SCALAR_FAMILIES}
        self.wrap = RunningMoments()
        self.eigen = EigenstatsAccumulator(p, config.site_count) if config.eigenstats else None

    def add(self, result: RealizationResult) -> None:
        for name, values in result.scalars.items():
            self.scalars[name].add(values)
        self.wrap.add(result.wrap_fraction)
        if self.eigen is not None:
            self.eigen.add(result.xi, result.nu)


def _selected_families(config: EnsembleConfig) -> List[str]:
    families = []
    if config.coherent:
        families += ["mu_c", "mu_c_single"]
    if config.incoherent:
        families.append("mu_i")
    if config.cluster:
        families += ["zeta", "wrapping"]
    if config.eigenstats:
        families += ["gamma", "xi_avg"]
    return families


def run_ensemble(config: EnsembleConfig) -> EnsembleResult:
    grid = config.grid_points()
    p = np.array(grid, dtype=float) / config.bond_count
    result = EnsembleResult(config=config, p=p)
    families = _selected_families(config)
    allowed_failures = math.floor(config.max_failure_rate * config.realizations)

    for m in config.m_values:
        logger.info("m=%d: %d realizations on %d grid points (L=%d)",
                    m, config.realizations, len(grid), config.side_length)
        accumulator = _FamilyAccumulator(config, p)
        failures: List[RealizationFailure] = []
        stream = tqdm(_realizations(config, m), total=config.realizations,
                      desc=f"m={m}", disable=not config.progress)
        for outcome in stream:
            if isinstance(outcome, RealizationFailure):
                failures.append(outcome)
                if len(failures) > allowed_failures:
                    raise EnsembleAbortError(
                        f"m={m}: {len(failures)} of {config.realizations} realizations failed "
                        f"(limit {allowed_failures}); last error: {outcome.message}"
                    )
                continue
            if outcome.reseeded:
                result.reseeded.append((outcome.m, outcome.r))
            accumulator.add(outcome)

        result.failures.extend(failures)
        count = accumulator.wrap.count
        if count < config.realizations:
            logger.warning("m=%d: curves average %d of %d realizations after %d tolerated failures",
                           m, count, config.realizations, len(failures))
        for name in families:
            moments = accumulator.scalars[name]
            result.curves.setdefault(name, {})[m] = Curve(
                family=name,
                m=m,
                p=p,
                mean=moments.mean.copy(),
                stderr=moments.stderr.copy(),
                count=np.full(len(p), count),
            )
        result.wrap_fraction[m] = ScalarEstimate(
            mean=float(accumulator.wrap.mean),
            stderr=float(accumulator.wrap.stderr),
            count=count,
        )
        if accumulator.eigen is not None:
            result.eigenstats[m] = accumulator.eigen.curves()
        logger.info("m=%d done: <p_w>=%.4f, %d re-seeded, %d failed",
                    m, accumulator.wrap.mean, sum(1 for mm, _ in result.reseeded if mm == m), len(failures))

    return result
