"""
Self-check suite behind `validate`.

Every check compares independent routes to the same quantity (dark-state
vs complex spectrum vs time evolution, spectral vs connectivity) or an
analytic fixture, and reports the largest deviation it saw against its
tolerance.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.eigenstats import profile_arrays
from src.errors import NumericalError
from src.lattice import LatticeTopology, build_lattice
from src.percolation import new_state
from src.spectral import (
    classify_real_eigenvalues,
    coherent_hamiltonian,
    eig_by_component,
    eig_complex,
    eig_hermitian,
    laplacian,
    residual_norms,
    sink_leakage,
)
from src.transport import (
    TransportProblem,
    coherent_survival,
    coherent_survival_complex_check,
    coherent_survival_timeseries,
    connectivity_oracle,
    dark_subspace,
    incoherent_survival,
    settle_time,
)
from src.utils.rng import derive_stream

logger = logging.getLogger(__name__)

ANALYTIC_TOL = 1e-10
CROSS_METHOD_TOL = 1e-6
ORACLE_TOL = 1e-9
RESIDUAL_TOL = 1e-10
LEAKAGE_TOL = 1e-8
PARTICIPATION_TOL = 1e-8
EVOLUTION_STEP = 200.0
RANDOM_CONFIGURATIONS = ((3, 200), (4, 100))
FAULT_SIZE = 1e-3
FULL_LATTICE_MIN_GAMMA = 45

ProgressCallback = Callable[[str, float], None]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    max_deviation: float
    tolerance: float
    detail: str = ""


@dataclass
class ValidationReport:
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failed(self) -> List[str]:
        return [check.name for check in self.checks if not check.passed]

    def render(self) -> str:
        lines = []
        for check in self.checks:
            status = "PASS" if check.passed else "FAIL"
            line = f"{status} {check.name}: max deviation {check.max_deviation:.3e} (tol {check.tolerance:.0e})"
            if check.detail:
                line += f" [{check.detail}]"
            lines.append(line)
        lines.append(f"{len(self.checks) - len(self.failed)}/{len(self.checks)} checks passed")
        return "\n".join(lines)


def _result(name: str, deviation: float, tolerance: float, detail: str = "") -> CheckResult:
    passed = bool(np.isfinite(deviation)) and deviation <= tolerance
    return CheckResult(name=name, passed=passed, max_deviation=float(deviation), tolerance=tolerance, detail=detail)


def two_site_chain() -> TransportProblem:
    return TransportProblem(site_count=2, edges=((0, 1),), sources=(0,), sinks=(1,))


def lambda_graph() -> TransportProblem:
    """Sources 0 and 1, each bonded to the sink 2."""
    return TransportProblem(site_count=3, edges=((0, 2), (1, 2)), sources=(0, 1), sinks=(2,))


def check_two_site_chain() -> CheckResult:
    problem = two_site_chain()
    survival = coherent_survival(problem).survival
    eigenvalues = eig_complex(coherent_hamiltonian(problem.h0())).eigenvalues
    expected = np.array([(2 - 1j) - math.sqrt(3), (2 - 1j) + math.sqrt(3)]) / 2
    deviation = max(abs(survival), float(np.abs(eigenvalues - expected).max()))
    return _result("two_site_chain", deviation, ANALYTIC_TOL, f"Pi={survival:.3e}")


def check_lambda_graph() -> CheckResult:
    problem = lambda_graph()
    symmetric = coherent_survival(problem).survival
    single = coherent_survival(problem.with_site(0)).survival
    real = classify_real_eigenvalues(eig_complex(coherent_hamiltonian(problem.h0())))
    deviation = max(abs(symmetric), abs(single - 0.5))
    detail = f"Pi_sym={symmetric:.3e}, Pi_a={single:.12g}, real eigenvalues={len(real)}"
    if len(real) != 1:
        deviation = math.inf
    return _result("lambda_graph", deviation, ANALYTIC_TOL, detail)


def exhaustive_configurations(topology: LatticeTopology) -> Iterator[Tuple[int, ...]]:
    bonds = range(topology.bond_count)
    for size in range(topology.bond_count + 1):
        yield from itertools.combinations(bonds, size)


def random_configurations(topology: LatticeTopology, count: int, seed: int) -> Iterator[Tuple[int, ...]]:
    """Bond subsets with a uniformly drawn occupation probability per configuration."""
    rng = derive_stream(seed, topology.side_length, 0)
    for _ in range(count):
        p = rng.random()
        mask = rng.random(topology.bond_count) < p
        yield tuple(int(b) for b in np.flatnonzero(mask))


def time_evolved_survival(problem: TransportProblem, minimum: float = EVOLUTION_STEP) -> float:
    horizon = settle_time(problem, minimum=minimum)
    steps = int(math.ceil(horizon / EVOLUTION_STEP))
    times = EVOLUTION_STEP * np.arange(1, steps + 1)
    return coherent_survival_timeseries(problem, times)[-1][1]


def compare_methods(problem: TransportProblem, minimum_time: float = EVOLUTION_STEP) -> Tuple[float, float]:
    """(largest coherent cross-method gap, incoherent-vs-oracle gap)."""
    dark = coherent_survival(problem).survival
    complex_value = coherent_survival_complex_check(problem, fallback=False).survival
    evolved = time_evolved_survival(problem, minimum_time)
    coherent_gap = max(abs(dark - complex_value), abs(dark - evolved), abs(complex_value - evolved))
    incoherent_gap = abs(incoherent_survival(problem).survival - connectivity_oracle(problem))
    return coherent_gap, incoherent_gap


def _configurations(seed: int, random_counts: Sequence[Tuple[int, int]]) -> List[Tuple[LatticeTopology, Tuple[int, ...]]]:
    small = build_lattice(2)
    configurations = [(small, occupied) for occupied in exhaustive_configurations(small)]
    for side_length, count in random_counts:
        topology = build_lattice(side_length)
        configurations += [(topology, occupied) for occupied in random_configurations(topology, count, seed)]
    return configurations


def check_cross_methods(
    seed: int,
    random_counts: Sequence[Tuple[int, int]],
    progress_callback: Optional[ProgressCallback] = None,
    minimum_time: float = EVOLUTION_STEP,
) -> List[CheckResult]:
    configurations = _configurations(seed, random_counts)
    coherent_worst = 0.0
    oracle_worst = 0.0
    ill_conditioned = 0
    for i, (topology, occupied) in enumerate(configurations):
        problem = TransportProblem.from_lattice(topology, occupied)
        for variant in (problem, problem.with_site(problem.sources[0])):
            try:
                coherent_gap, incoherent_gap = compare_methods(variant, minimum_time)
            except NumericalError as e:
                if "ill-conditioned" not in str(e):
                    raise
                ill_conditioned += 1
                logger.warning("L=%d bonds %s: %s", topology.side_length, occupied, e)
                incoherent_gap = abs(incoherent_survival(variant).survival - connectivity_oracle(variant))
                coherent_gap = 0.0
            coherent_worst = max(coherent_worst, coherent_gap)
            oracle_worst = max(oracle_worst, incoherent_gap)
        if progress_callback and (i + 1) % 25 == 0:
            progress_callback(f"cross-method {i + 1}/{len(configurations)}", (i + 1) / len(configurations))

    detail = f"{len(configurations)} configurations"
    if ill_conditioned:
        detail += f", {ill_conditioned} without a biorthonormal basis"
    return [
        _result("coherent_cross_method", coherent_worst, CROSS_METHOD_TOL, detail),
        _result("incoherent_oracle", oracle_worst, ORACLE_TOL, f"{len(configurations)} configurations"),
    ]


def check_residuals(seed: int, count: int = 50, inject_fault: bool = False) -> List[CheckResult]:
    topology = build_lattice(4)
    residual_worst = 0.0
    leakage_worst = 0.0
    for occupied in random_configurations(topology, count, seed + 1):
        h0 = laplacian(topology, occupied)
        hermitian = eig_hermitian(h0)
        vectors = hermitian.vectors
        if inject_fault:
            vectors = vectors.copy()
            vectors[0, -1] += FAULT_SIZE
        residuals = residual_norms(h0.matrix, hermitian.eigenvalues.real, vectors)
        residual_worst = max(residual_worst, float(residuals.max()) / max(1.0, hermitian.norm))

        decomposition = eig_complex(coherent_hamiltonian(h0))
        residual_worst = max(residual_worst, float(decomposition.residuals.max()) / max(1.0, decomposition.norm))

        real = classify_real_eigenvalues(decomposition)
        leakage_worst = max(leakage_worst, sink_leakage(decomposition, real, topology.sinks))
        dark = dark_subspace(hermitian, sorted(topology.sinks))
        if dark.shape[1]:
            leakage_worst = max(leakage_worst, float(np.linalg.norm(dark[sorted(topology.sinks), :], axis=0).max()))

    detail = "perturbed eigenvector injected" if inject_fault else f"{count} L=4 configurations"
    return [
        _result("eigenpair_residuals", residual_worst, RESIDUAL_TOL, detail),
        _result("dark_state_sink_leakage", leakage_worst, LEAKAGE_TOL, f"{count} L=4 configurations"),
    ]


def check_eigenstats() -> CheckResult:
    """Empty and full L=7 lattices."""
    topology = build_lattice(7)
    sources, sinks = sorted(topology.sources), sorted(topology.sinks)
    N = topology.site_count

    empty = new_state(topology)
    xi_empty, nu_empty = profile_arrays(
        eig_by_component(laplacian(topology, ()), empty.component_labels()), sources, sinks
    )

    full = new_state(topology)
    for bond in range(topology.bond_count):
        full.add(bond)
    xi_full, nu_full = profile_arrays(
        eig_by_component(laplacian(topology, full.occupied), full.component_labels()), sources, sinks
    )

    deviation = max(float(np.abs(xi_empty - 1.0).max()), float(nu_empty.sum()), abs(xi_full[0] - N))
    gamma_full = float(nu_full.sum())
    if gamma_full < FULL_LATTICE_MIN_GAMMA:
        deviation = math.inf
    detail = f"xi_1(p=1)={xi_full[0]:.12g}, gamma(p=1)={gamma_full:.0f}"
    return _result("eigenstats_fixtures", deviation, PARTICIPATION_TOL, detail)


def check_sink_free_gap() -> CheckResult:
    """Sources cut off from the sinks keep everything in both pictures."""
    topology = build_lattice(3)
    column = tuple(b for b, (a, c) in enumerate(topology.bonds) if topology.column(a) == 0 and topology.column(c) == 0)
    problem = TransportProblem.from_lattice(topology, column)
    gap = abs(coherent_survival(problem).survival - incoherent_survival(problem).survival)
    return _result("sink_free_gap", gap, ANALYTIC_TOL)


def run_validation(
    seed: int = 20160104,
    inject_fault: bool = False,
    random_counts: Sequence[Tuple[int, int]] = RANDOM_CONFIGURATIONS,
    progress_callback: Optional[ProgressCallback] = None,
    minimum_time: float = EVOLUTION_STEP,
) -> ValidationReport:
    report = ValidationReport()
    report.checks.append(check_two_site_chain())
    report.checks.append(check_lambda_graph())
    report.checks.append(check_sink_free_gap())
    report.checks.extend(check_cross_methods(seed, random_counts, progress_callback, minimum_time))
    report.checks.extend(check_residuals(seed, inject_fault=inject_fault))
    report.checks.append(check_eigenstats())
    for check in report.checks:
        log = logger.info if check.passed else logger.error
        log("%s %s: max deviation %.3e", "passed" if check.passed else "FAILED", check.name, check.max_deviation)
    return report
