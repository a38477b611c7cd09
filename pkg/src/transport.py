"""
Infinite-time survival probabilities of coherent and incoherent walkers.

The coherent survival is evaluated through the dark subspace of H0: inside
every (degenerate) eigenspace of the Laplacian, the vectors that vanish on
all sinks are exactly the eigenvectors of H = H0 - i*Gamma with a real
eigenvalue, so Pi = ||P_dark psi||^2 without any non-Hermitian solve. The
literal route through the complex spectrum of H, the time-resolved
propagators and the connectivity oracle are kept as independent checks.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from src.errors import InvalidArgumentError, NumericalError
from src.lattice import LatticeTopology
from src.percolation import ClusterState
from src.spectral import (
    LatticeOperator,
    SpectralDecomposition,
    classify_real_eigenvalues,
    coherent_hamiltonian,
    decay_rates,
    degenerate_groups,
    eig_complex,
    eig_hermitian,
    laplacian_from_edges,
    transfer_matrix,
)

logger = logging.getLogger(__name__)

UNIFORM = "uniform"
SINGLE_SITE = "site"

DARK_STATE = "dark-state"
COMPLEX_SPECTRAL = "complex-spectral"
ORACLE = "oracle"
TIME_EVOLUTION = "time-evolution"

NULL_SPACE_REL_TOL = 1e-8
NULL_SPACE_ABS_TOL = 1e-12
ZERO_EIGENVALUE_TOL = 1e-9
SURVIVAL_SLACK = 1e-9
MONOTONE_SLACK = 1e-8
MIN_SETTLE_TIME = 200.0
MAX_SETTLE_TIME = 1e5


@dataclass(frozen=True)
class TransportProblem:
    """A graph with source and sink sites plus the walker's initial state."""

    site_count: int
    edges: Tuple[Tuple[int, int], ...]
    sources: Tuple[int, ...]
    sinks: Tuple[int, ...]
    initial: str = UNIFORM
    site: Optional[int] = None

    def __post_init__(self):
        if not self.sources or not self.sinks:
            raise InvalidArgumentError("sources and sinks must be non-empty")
        if set(self.sources) & set(self.sinks):
            raise InvalidArgumentError("sources and sinks must be disjoint")
        for s in (*self.sources, *self.sinks):
            if not 0 <= s < self.site_count:
                raise InvalidArgumentError(f"site {s} outside the graph")
        if self.initial == SINGLE_SITE:
            if self.site not in self.sources:
                raise InvalidArgumentError("a single-site initial state must start on a source")
        elif self.initial != UNIFORM:
            raise InvalidArgumentError(f"unknown initial state kind {self.initial!r}")

    @classmethod
    def from_lattice(
        cls,
        topology: LatticeTopology,
        occupied: Iterable[int],
        initial: str = UNIFORM,
        site: Optional[int] = None,
    ) -> "TransportProblem":
        edges = tuple(topology.bonds[bond] for bond in sorted(occupied))
        return cls(
            site_count=topology.site_count,
            edges=edges,
            sources=tuple(sorted(topology.sources)),
            sinks=tuple(sorted(topology.sinks)),
            initial=initial,
            site=site,
        )

    def with_site(self, site: int) -> "TransportProblem":
        return TransportProblem(self.site_count, self.edges, self.sources, self.sinks, SINGLE_SITE, site)

    def h0(self) -> LatticeOperator:
        return laplacian_from_edges(self.site_count, self.edges, self.sinks)

    def coherent_state(self) -> np.ndarray:
        psi = np.zeros(self.site_count, dtype=complex)
        if self.initial == SINGLE_SITE:
            psi[self.site] = 1.0
        else:
            psi[list(self.sources)] = 1.0 / math.sqrt(len(self.sources))
        return psi

    def incoherent_state(self) -> np.ndarray:
        p = np.zeros(self.site_count)
        if self.initial == SINGLE_SITE:
            p[self.site] = 1.0
        else:
            p[list(self.sources)] = 1.0 / len(self.sources)
        return p

    def cluster_state(self) -> ClusterState:
        state = ClusterState(self.site_count, self.edges, self.sources, self.sinks)
        for bond in range(len(self.edges)):
            state.add(bond)
        return state


@dataclass(frozen=True)
class TransportResult:
    survival: float
    method: str
    dark_dimension: int = 0

    @property
    def efficiency(self) -> float:
        return 1.0 - self.survival


def _checked(survival: float, method: str, dark_dimension: int = 0) -> TransportResult:
    if survival < -SURVIVAL_SLACK or survival > 1.0 + SURVIVAL_SLACK:
        raise NumericalError(f"{method} survival {survival!r} outside [0, 1]")
    survival = min(max(float(survival), 0.0), 1.0)
    return TransportResult(survival=survival, method=method, dark_dimension=dark_dimension)


def dark_subspace(decomposition: SpectralDecomposition, sinks: Sequence[int]) -> np.ndarray:
    """
    Orthonormal basis (columns) of the H0 eigenvectors vanishing on the sinks.

    For every degenerate group the eigenspace basis is restricted to the sink
    rows; right singular vectors with sigma <= 1e-8 * sigma_max (all of them
    when sigma_max < 1e-12) span the dark part of that eigenspace.
    """
    vectors = decomposition.vectors
    sinks = list(sinks)
    blocks: List[np.ndarray] = []
    for group in degenerate_groups(decomposition.eigenvalues, decomposition.norm):
        basis = vectors[:, group]
        restricted = basis[sinks, :]
        if restricted.size == 0:
            blocks.append(basis)
            continue
        if len(group) == 1:
            if np.linalg.norm(restricted) < NULL_SPACE_ABS_TOL:
                blocks.append(basis)
            continue
        _, sigma, vh = linalg.svd(restricted, full_matrices=True)
        sigma_max = sigma.max(initial=0.0)
        if sigma_max < NULL_SPACE_ABS_TOL:
            blocks.append(basis)
            continue
        rank = int(np.count_nonzero(sigma > NULL_SPACE_REL_TOL * sigma_max))
        if rank < len(group):
            blocks.append(basis @ vh[rank:].conj().T)
    if not blocks:
        return np.zeros((vectors.shape[0], 0), dtype=vectors.dtype)
    return np.hstack(blocks)


def coherent_survival(
    problem: TransportProblem,
    decomposition: Optional[SpectralDecomposition] = None,
    dark: Optional[np.ndarray] = None,
) -> TransportResult:
    if dark is None:
        if decomposition is None:
            decomposition = eig_hermitian(problem.h0())
        dark = dark_subspace(decomposition, problem.sinks)
    overlaps = dark.conj().T @ problem.coherent_state()
    return _checked(float(np.vdot(overlaps, overlaps).real), DARK_STATE, dark.shape[1])


def incoherent_survival(
    problem: TransportProblem, decomposition: Optional[SpectralDecomposition] = None
) -> TransportResult:
    """P = sum over zero modes of T of (1^T phi)(phi^T p0)."""
    if decomposition is None:
        decomposition = eig_hermitian(transfer_matrix(problem.h0()))
    tol = ZERO_EIGENVALUE_TOL * max(1.0, decomposition.norm)
    zero = np.flatnonzero(decomposition.zero_mask(tol))
    modes = decomposition.vectors[:, zero].real
    survival = float(modes.sum(axis=0) @ (modes.T @ problem.incoherent_state()))
    return _checked(survival, DARK_STATE, len(zero))


def connectivity_oracle(problem: TransportProblem, state: Optional[ClusterState] = None) -> float:
    """Weight of the initial distribution on sources whose cluster holds no sink."""
    if state is None:
        state = problem.cluster_state()
    if problem.initial == SINGLE_SITE:
        return 0.0 if state.touches_right[state.find(problem.site)] else 1.0
    free = sum(1 for s in problem.sources if not state.touches_right[state.find(s)])
    return free / len(problem.sources)


def source_survival_profile(
    problem: TransportProblem,
    decomposition: Optional[SpectralDecomposition] = None,
    state: Optional[ClusterState] = None,
    dark: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Coherent and incoherent survival for a walker started on each source alone."""
    if dark is None:
        if decomposition is None:
            decomposition = eig_hermitian(problem.h0())
        dark = dark_subspace(decomposition, problem.sinks)
    if state is None:
        state = problem.cluster_state()
    sources = list(problem.sources)
    coherent = np.clip((np.abs(dark[sources, :]) ** 2).sum(axis=1), 0.0, 1.0)
    incoherent = np.array(
        [0.0 if state.touches_right[state.find(s)] else 1.0 for s in sources]
    )
    return coherent, incoherent


def coherent_survival_complex_check(
    problem: TransportProblem, fallback: bool = True
) -> TransportResult:
    """
    Pi from the complex spectrum of H with biorthonormal left vectors.

    Pi = sum over real E_l of <psi|R_l><L_l|psi>, with W^H V = I. On
    failure the dark-state value is returned (and a warning logged) unless
    `fallback` is False.
    """
    try:
        decomposition = eig_complex(coherent_hamiltonian(problem.h0()))
        if decomposition.left_vectors is None:
            raise NumericalError(
                f"right eigenvectors are ill-conditioned (cond={decomposition.condition:.3e})"
            )
        real = classify_real_eigenvalues(decomposition)
        psi = problem.coherent_state()
        right = decomposition.vectors[:, real].conj().T @ psi
        left = decomposition.left_vectors[:, real].conj().T @ psi
        value = complex(np.sum(right.conj() * left))
        if abs(value.imag) > 1e-8:
            raise NumericalError(f"complex survival has imaginary part {value.imag:.3e}")
        return _checked(value.real, COMPLEX_SPECTRAL, len(real))
    except NumericalError as e:
        if not fallback:
            raise
        logger.warning("complex-spectral survival failed (%s); using the dark-state value", e)
        return coherent_survival(problem)


def settle_time(problem: TransportProblem, tol: float = 1e-8, minimum: float = MIN_SETTLE_TIME) -> float:
    """Time after which every decaying coherent mode has fallen below `tol` in probability."""
    decomposition = eig_complex(coherent_hamiltonian(problem.h0()))
    rates = decay_rates(decomposition)
    decaying = rates[rates > decomposition.default_tolerance()]
    if decaying.size == 0:
        return minimum
    needed = math.log(1.0 / tol) / (2.0 * float(decaying.min()))
    if needed > MAX_SETTLE_TIME:
        logger.warning("slowest decay rate %.3e needs t=%.3e; capping at %.0e",
                       decaying.min(), needed, MAX_SETTLE_TIME)
        needed = MAX_SETTLE_TIME
    return max(minimum, needed)


def _time_order(times: Sequence[float]) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise InvalidArgumentError("times must be non-negative")
    return times


def _check_monotone(times: np.ndarray, values: np.ndarray, label: str) -> None:
    order = np.argsort(times, kind="stable")
    rises = np.diff(values[order])
    if rises.size and rises.max() > MONOTONE_SLACK:
        raise NumericalError(f"{label} survival increased by {rises.max():.3e}")


def coherent_survival_timeseries(
    problem: TransportProblem, times: Sequence[float]
) -> List[Tuple[float, float]]:
    """pi(t) = ||exp(-iHt) psi||^2, stepping through the sorted grid with expm propagators."""
    times = _time_order(times)
    hamiltonian = coherent_hamiltonian(problem.h0()).matrix
    psi = problem.coherent_state()
    propagators: Dict[float, np.ndarray] = {}

    values = np.empty(len(times))
    current_t = 0.0
    for idx in np.argsort(times, kind="stable"):
        dt = float(times[idx]) - current_t
        if dt > 0.0:
            if dt not in propagators:
                propagators[dt] = linalg.expm(-1j * dt * hamiltonian)
            psi = propagators[dt] @ psi
            current_t = float(times[idx])
        values[idx] = float(np.vdot(psi, psi).real)

    if values.size and values.max() > 1.0 + SURVIVAL_SLACK:
        raise NumericalError(f"coherent norm grew to {values.max():.12g}")
    _check_monotone(times, values, "coherent")
    return list(zip(times.tolist(), values.tolist()))


def incoherent_survival_timeseries(
    problem: TransportProblem, times: Sequence[float]
) -> List[Tuple[float, float]]:
    """p(t) = 1^T exp(T t) p0 via the symmetric eigendecomposition of T."""
    times = _time_order(times)
    decomposition = eig_hermitian(transfer_matrix(problem.h0()))
    rates = np.minimum(decomposition.eigenvalues.real, 0.0)
    modes = decomposition.vectors.real
    weights = modes.sum(axis=0) * (modes.T @ problem.incoherent_state())
    values = np.exp(np.outer(times, rates)) @ weights

    _check_monotone(times, values, "incoherent")
    return list(zip(times.tolist(), values.tolist()))
