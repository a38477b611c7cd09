"""
Localization measures of the sink-free Hamiltonian H0.

Eigenstates are indexed l = 1..N by ascending eigenvalue. Inside a
degenerate group the order is fixed by (first site carrying amplitude,
sign-fixed vector compared lexicographically after rounding to 1e-9),
where "sign-fixed" means the first amplitude above tolerance is positive.
"""
import logging
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from src.errors import InvalidArgumentError
from src.spectral import SpectralDecomposition, degenerate_groups
from src.utils.stats import RunningMoments

logger = logging.getLogger(__name__)

AMPLITUDE_TOL = 1e-10
NORM_TOL = 1e-8


@dataclass(frozen=True)
class EigenstateProfile:
    index: int
    eigenvalue: float
    participation: float
    contributes: int
    support: int


def _check_normalized(vectors: np.ndarray) -> None:
    norms = np.linalg.norm(vectors, axis=0)
    if norms.size and np.abs(norms - 1.0).max() > NORM_TOL:
        raise InvalidArgumentError("eigenvector is not normalized")


def participation_ratio(eigvec) -> float:
    """xi = 1 / sum_i |v_i|^4; 1 for a single site, N for a uniform vector."""
    v = np.asarray(eigvec)
    _check_normalized(v.reshape(-1, 1))
    return float(1.0 / np.sum(np.abs(v) ** 4))


def contributes(eigvec, sources: Iterable[int], sinks: Iterable[int], tol: float = AMPLITUDE_TOL) -> int:
    v = np.abs(np.asarray(eigvec))
    on_source = v[sorted(sources)].max(initial=0.0) > tol
    on_sink = v[sorted(sinks)].max(initial=0.0) > tol
    return int(on_source and on_sink)


def _first_support(vector: np.ndarray, tol: float) -> int:
    hits = np.flatnonzero(np.abs(vector) > tol)
    return int(hits[0]) if hits.size else len(vector)


def profile_order(decomposition: SpectralDecomposition, tol: float = AMPLITUDE_TOL) -> np.ndarray:
    """Permutation of eigenpair indices into profile order."""
    vectors = decomposition.vectors
    order: List[int] = []
    for group in degenerate_groups(decomposition.eigenvalues, decomposition.norm):
        if len(group) == 1:
            order.append(int(group[0]))
            continue
        keyed = []
        for idx in group:
            v = np.real_if_close(vectors[:, idx])
            first = _first_support(v, tol)
            if first < len(v) and np.real(v[first]) < 0:
                v = -v
            keyed.append(((first, tuple(np.round(np.real(v), 9))), int(idx)))
        keyed.sort(key=lambda item: item[0])
        order.extend(idx for _, idx in keyed)
    return np.array(order, dtype=int)


def profile_arrays(
    decomposition: SpectralDecomposition,
    sources: Sequence[int],
    sinks: Sequence[int],
    tol: float = AMPLITUDE_TOL,
) -> Tuple[np.ndarray, np.ndarray]:
    """(xi_l, nu_l) for l in profile order, vectorized over all eigenstates."""
    order = profile_order(decomposition, tol)
    vectors = decomposition.vectors[:, order]
    _check_normalized(vectors)
    magnitude = np.abs(vectors)
    xi = 1.0 / np.sum(magnitude ** 4, axis=0)
    on_source = magnitude[sorted(sources), :].max(axis=0) > tol
    on_sink = magnitude[sorted(sinks), :].max(axis=0) > tol
    return xi, (on_source & on_sink).astype(float)


def eigenstate_profiles(
    decomposition: SpectralDecomposition,
    sources: Sequence[int],
    sinks: Sequence[int],
    tol: float = AMPLITUDE_TOL,
) -> List[EigenstateProfile]:
    order = profile_order(decomposition, tol)
    xi, nu = profile_arrays(decomposition, sources, sinks, tol)
    support = (np.abs(decomposition.vectors[:, order]) > tol).sum(axis=0)
    values = np.real(decomposition.eigenvalues[order])
    return [
        EigenstateProfile(
            index=l + 1,
            eigenvalue=float(values[l]),
            participation=float(xi[l]),
            contributes=int(nu[l]),
            support=int(support[l]),
        )
        for l in range(len(order))
    ]


@dataclass
class EigenstatsCurves:
    p: np.ndarray
    xi_mean: np.ndarray
    xi_stderr: np.ndarray
    nu_mean: np.ndarray
    nu_stderr: np.ndarray
    gamma_mean: np.ndarray
    gamma_stderr: np.ndarray
    xi_avg_mean: np.ndarray
    xi_avg_stderr: np.ndarray
    count: int


class EigenstatsAccumulator:
    """Per-(p, l) running means of xi and nu plus gamma and <xi>_avg per p."""

    def __init__(self, p: Sequence[float], site_count: int):
        self.p = np.asarray(p, dtype=float)
        shape = (len(self.p), site_count)
        self.xi = RunningMoments(shape)
        self.nu = RunningMoments(shape)
        self.gamma = RunningMoments(len(self.p))
        self.xi_avg = RunningMoments(len(self.p))

    def add(self, xi: np.ndarray, nu: np.ndarray) -> None:
        """Add one realization: arrays of shape (grid points, N)."""
        self.xi.add(xi)
        self.nu.add(nu)
        self.gamma.add(nu.sum(axis=1))
        self.xi_avg.add(xi.mean(axis=1))

    def curves(self) -> EigenstatsCurves:
        return EigenstatsCurves(
            p=self.p,
            xi_mean=self.xi.mean,
            xi_stderr=self.xi.stderr,
            nu_mean=self.nu.mean,
            nu_stderr=self.nu.stderr,
            gamma_mean=self.gamma.mean,
            gamma_stderr=self.gamma.stderr,
            xi_avg_mean=self.xi_avg.mean,
            xi_avg_stderr=self.xi_avg.stderr,
            count=self.xi.count,
        )


def aggregate_eigenstats(
    p: Sequence[float],
    realizations: Iterable[Sequence[Sequence[EigenstateProfile]]],
) -> EigenstatsCurves:
    """
    Ensemble means from per-realization profile lists.

    Each realization supplies one profile list per grid point in `p`.
    """
    accumulator = None
    for profiles_per_point in realizations:
        xi = np.array([[prof.participation for prof in profiles] for profiles in profiles_per_point])
        nu = np.array([[prof.contributes for prof in profiles] for profiles in profiles_per_point], dtype=float)
        if accumulator is None:
            accumulator = EigenstatsAccumulator(p, xi.shape[1])
        accumulator.add(xi, nu)
    if accumulator is None:
        raise InvalidArgumentError("at least one realization is required")
    return accumulator.curves()
