"""
Lattice operators and verified eigendecompositions.

    H0 = Laplacian (degree on the diagonal, -1 per occupied bond)
    H  = H0 - i*Gamma          coherent walk with absorbing sinks
    T  = -H0 - Gamma           incoherent walk with absorbing sinks

Gamma is the 0/1 diagonal projector on the sink sites. Matrices are dense;
the lattices handled here have at most a few hundred sites.

Residuals are checked as ||A v - E v||_2 <= 1e-10 * max(1, ||A||_F).
"""
import logging
from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from src.errors import InvalidArgumentError, NumericalError
from src.lattice import LatticeTopology

logger = logging.getLogger(__name__)

LAPLACIAN = "laplacian"
COHERENT = "coherent"
TRANSFER = "transfer"

MAX_DIMENSION = 400
RESIDUAL_TOL = 1e-10
ORTHONORMAL_TOL = 1e-10
REAL_TOL = 1e-12
DEGENERACY_TOL = 1e-9


@dataclass(frozen=True)
class LatticeOperator:
    variant: str
    matrix: np.ndarray
    laplacian: np.ndarray
    sinks: FrozenSet[int] = frozenset()

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix))


@dataclass
class SpectralDecomposition:
    eigenvalues: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    norm: float
    hermitian: bool
    left_vectors: Optional[np.ndarray] = field(default=None, repr=False)
    condition: float = 1.0

    @property
    def dimension(self) -> int:
        return len(self.eigenvalues)

    def default_tolerance(self) -> float:
        return REAL_TOL * max(1.0, self.norm)

    def real_mask(self, tol: Optional[float] = None) -> np.ndarray:
        tol = self.default_tolerance() if tol is None else tol
        return np.abs(np.imag(self.eigenvalues)) <= tol

    def zero_mask(self, tol: Optional[float] = None) -> np.ndarray:
        tol = self.default_tolerance() if tol is None else tol
        return np.abs(self.eigenvalues) <= tol


def graph_laplacian(site_count: int, edges: Iterable[Tuple[int, int]]) -> np.ndarray:
    matrix = np.zeros((site_count, site_count))
    for a, b in edges:
        if a == b:
            raise InvalidArgumentError(f"self-loop on site {a}")
        matrix[a, b] -= 1.0
        matrix[b, a] -= 1.0
        matrix[a, a] += 1.0
        matrix[b, b] += 1.0
    return matrix


def laplacian(topology: LatticeTopology, occupied: Iterable[int]) -> LatticeOperator:
    edges = [topology.bonds[bond] for bond in occupied]
    return laplacian_from_edges(topology.site_count, edges, topology.sinks)


def laplacian_from_edges(
    site_count: int, edges: Iterable[Tuple[int, int]], sinks: Iterable[int] = ()
) -> LatticeOperator:
    if site_count > MAX_DIMENSION:
        raise InvalidArgumentError(f"dense operators are capped at {MAX_DIMENSION} sites")
    matrix = graph_laplacian(site_count, edges)
    return LatticeOperator(LAPLACIAN, matrix, matrix, frozenset(sinks))


def sink_projector(site_count: int, sinks: Iterable[int]) -> np.ndarray:
    gamma = np.zeros((site_count, site_count))
    for s in sinks:
        gamma[s, s] = 1.0
    return gamma


def coherent_hamiltonian(h0: LatticeOperator, sinks: Optional[Iterable[int]] = None) -> LatticeOperator:
    sinks = h0.sinks if sinks is None else frozenset(sinks)
    gamma = sink_projector(h0.dimension, sinks)
    return LatticeOperator(COHERENT, h0.laplacian - 1j * gamma, h0.laplacian, sinks)


def transfer_matrix(h0: LatticeOperator, sinks: Optional[Iterable[int]] = None) -> LatticeOperator:
    sinks = h0.sinks if sinks is None else frozenset(sinks)
    gamma = sink_projector(h0.dimension, sinks)
    return LatticeOperator(TRANSFER, -h0.laplacian - gamma, h0.laplacian, sinks)


def residual_norms(matrix: np.ndarray, eigenvalues: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    return np.linalg.norm(matrix @ vectors - vectors * eigenvalues[np.newaxis, :], axis=0)


def dump_matrix(matrix: np.ndarray) -> str:
    """Row-per-line text dump of `re,im` pairs separated by spaces."""
    matrix = np.asarray(matrix, dtype=complex)
    rows = (" ".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in row) for row in matrix)
    return "\n".join(rows) + "\n"


def _check_residuals(matrix: np.ndarray, decomposition: SpectralDecomposition, label: str) -> None:
    bound = RESIDUAL_TOL * max(1.0, decomposition.norm)
    worst = float(decomposition.residuals.max()) if decomposition.dimension else 0.0
    if worst > bound:
        raise NumericalError(
            f"{label}: eigenpair residual {worst:.3e} exceeds {bound:.3e}",
            matrix_dump=dump_matrix(matrix),
        )


def _real_symmetric(operator: LatticeOperator) -> np.ndarray:
    matrix = operator.matrix
    if np.iscomplexobj(matrix):
        if np.abs(matrix.imag).max(initial=0.0) > 0.0:
            raise InvalidArgumentError(f"{operator.variant} operator is not real")
        matrix = matrix.real
    if not np.array_equal(matrix, matrix.T):
        raise InvalidArgumentError(f"{operator.variant} operator is not symmetric")
    return matrix


def eig_hermitian(operator: LatticeOperator) -> SpectralDecomposition:
    """Full decomposition of a real symmetric operator, eigenvalues ascending."""
    matrix = _real_symmetric(operator)
    try:
        values, vectors = linalg.eigh(matrix)
    except linalg.LinAlgError as e:
        raise NumericalError(f"eigh failed: {e}", matrix_dump=dump_matrix(matrix)) from e

    decomposition = SpectralDecomposition(
        eigenvalues=values.astype(complex),
        vectors=vectors,
        residuals=residual_norms(matrix, values, vectors),
        norm=float(np.linalg.norm(matrix)),
        hermitian=True,
    )
    _check_residuals(matrix, decomposition, "eig_hermitian")
    _check_orthonormal(matrix, vectors)
    return decomposition


def eig_by_component(operator: LatticeOperator, labels: Sequence[int]) -> SpectralDecomposition:
    """
    Hermitian decomposition assembled from the connected components.

    `labels[i]` names the component of site i (any hashable int, e.g. a
    union-find root). No bond crosses components, so the operator is block
    diagonal and every eigenvector returned is supported on one component.
    Eigenvalues are sorted ascending with a stable sort, ties keep component
    order (components ordered by their smallest site).
    """
    matrix = _real_symmetric(operator)
    N = matrix.shape[0]
    labels = np.asarray(labels)
    if labels.shape != (N,):
        raise InvalidArgumentError("one component label per site is required")

    values = np.empty(N)
    vectors = np.zeros((N, N))
    column = 0
    _, first_index = np.unique(labels, return_index=True)
    for label in labels[np.sort(first_index)]:
        sites = np.flatnonzero(labels == label)
        block = matrix[np.ix_(sites, sites)]
        if len(sites) == 1:
            block_values, block_vectors = block.diagonal().copy(), np.ones((1, 1))
        else:
            try:
                block_values, block_vectors = linalg.eigh(block)
            except linalg.LinAlgError as e:
                raise NumericalError(f"eigh failed on a component: {e}", matrix_dump=dump_matrix(block)) from e
        k = len(sites)
        values[column:column + k] = block_values
        vectors[sites, column:column + k] = block_vectors
        column += k

    order = np.argsort(values, kind="stable")
    values = values[order]
    vectors = vectors[:, order]
    decomposition = SpectralDecomposition(
        eigenvalues=values.astype(complex),
        vectors=vectors,
        residuals=residual_norms(matrix, values, vectors),
        norm=float(np.linalg.norm(matrix)),
        hermitian=True,
    )
    _check_residuals(matrix, decomposition, "eig_by_component")
    return decomposition


def eig_complex(operator: LatticeOperator) -> SpectralDecomposition:
    """
    General dense eigendecomposition with unit-norm right eigenvectors.

    Eigenpairs are sorted by (real part, imaginary part). When the right
    eigenvector matrix V is invertible, `left_vectors` holds the
    biorthonormal partners W = inv(V)^H, so that W^H V = I.
    """
    matrix = np.asarray(operator.matrix, dtype=complex)
    if matrix.shape[0] > MAX_DIMENSION:
        raise InvalidArgumentError(f"dense operators are capped at {MAX_DIMENSION} sites")
    try:
        values, vectors = linalg.eig(matrix)
    except linalg.LinAlgError as e:
        raise NumericalError(f"eig failed: {e}", matrix_dump=dump_matrix(matrix)) from e

    order = np.lexsort((values.imag, values.real))
    values = values[order]
    vectors = vectors[:, order]
    vectors = vectors / np.linalg.norm(vectors, axis=0)[np.newaxis, :]

    condition = float(np.linalg.cond(vectors)) if len(values) else 1.0
    left = None
    if np.isfinite(condition) and condition < 1e12:
        left = np.linalg.inv(vectors).conj().T

    decomposition = SpectralDecomposition(
        eigenvalues=values,
        vectors=vectors,
        residuals=residual_norms(matrix, values, vectors),
        norm=float(np.linalg.norm(matrix)),
        hermitian=False,
        left_vectors=left,
        condition=condition,
    )
    _check_residuals(matrix, decomposition, "eig_complex")
    return decomposition


def classify_real_eigenvalues(
    decomposition: SpectralDecomposition, tol: Optional[float] = None
) -> np.ndarray:
    """Indices l with |Im E_l| <= tol (default 1e-12 * max(1, ||H||_F))."""
    return np.flatnonzero(decomposition.real_mask(tol))


def degenerate_groups(eigenvalues: np.ndarray, norm: float = 1.0) -> List[np.ndarray]:
    """
    Split ascending real eigenvalues into runs of (near-)equal values.

    Consecutive eigenvalues closer than 1e-9 * max(1, norm) share a group.
    """
    values = np.real(eigenvalues)
    if len(values) == 0:
        return []
    tol = DEGENERACY_TOL * max(1.0, norm)
    breaks = np.flatnonzero(np.diff(values) > tol) + 1
    return np.split(np.arange(len(values)), breaks)


def decay_rates(decomposition: SpectralDecomposition) -> np.ndarray:
    """gamma_l = -Im E_l for a decomposition of the coherent Hamiltonian."""
    return -np.imag(decomposition.eigenvalues)


def sink_leakage(decomposition: SpectralDecomposition, indices: Sequence[int], sinks: Iterable[int]) -> float:
    """Largest norm, restricted to the sinks, of the selected eigenvectors."""
    sinks = sorted(sinks)
    if len(indices) == 0 or not sinks:
        return 0.0
    block = decomposition.vectors[np.ix_(sinks, list(indices))]
    return float(np.linalg.norm(block, axis=0).max())


def _check_orthonormal(matrix: np.ndarray, vectors: np.ndarray) -> None:
    gram = vectors.conj().T @ vectors
    deviation = float(np.abs(gram - np.eye(gram.shape[0])).max(initial=0.0))
    if deviation > ORTHONORMAL_TOL:
        raise NumericalError(
            f"eigenvectors deviate from orthonormality by {deviation:.3e}",
            matrix_dump=dump_matrix(matrix),
        )
