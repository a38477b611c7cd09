"""
Bond percolation growth under the best-of-m product rule.

`ClusterState` is a union-find over the sites (path halving + union by
size) that also tracks, per root, whether the cluster touches the left
(source) or right (sink) edge. It keeps the unoccupied bonds in a pool
with O(1) removal so candidate sampling never scans occupied bonds.

RNG protocol of `select_bond_best_of_m`, fixed so trajectories are
reproducible from a stream:
  1. one call `rng.random(c)` with c = min(m, #unoccupied); draw i picks
     pool position i + floor(u_i * (K - i)) (partial Fisher-Yates);
  2. one more `rng.random()` only if several candidates share the
     minimal weight; it picks among them uniformly.
"""
import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np

from src.errors import GrowthCompleteError, InvalidArgumentError
from src.lattice import Bond, LatticeTopology

logger = logging.getLogger(__name__)


class ClusterState:
    """Union-find snapshot of a partially occupied bond configuration."""

    def __init__(
        self,
        site_count: int,
        bonds: Sequence[Bond],
        left_sites: Iterable[int],
        right_sites: Iterable[int],
    ):
        self.site_count = site_count
        self.bonds = tuple(bonds)
        self.left_sites = frozenset(left_sites)
        self.right_sites = frozenset(right_sites)

        self.parent = list(range(site_count))
        self.size = [1] * site_count
        self.touches_left = [site in self.left_sites for site in range(site_count)]
        self.touches_right = [site in self.right_sites for site in range(site_count)]
        self.occupied: Set[int] = set()
        self.n = 0
        self.largest = 1 if site_count else 0
        self.wrapping = any(
            self.touches_left[s] and self.touches_right[s] for s in range(site_count)
        )

        self._pool = list(range(len(self.bonds)))
        self._pool_pos = list(range(len(self.bonds)))

    @property
    def unoccupied_count(self) -> int:
        return len(self._pool)

    def find(self, site: int) -> int:
        parent = self.parent
        while parent[site] != site:
            parent[site] = parent[parent[site]]
            site = parent[site]
        return site

    def roots(self) -> List[int]:
        return [s for s in range(self.site_count) if self.parent[s] == s]

    def component_labels(self) -> np.ndarray:
        """Root id of every site."""
        return np.array([self.find(s) for s in range(self.site_count)], dtype=int)

    def weight(self, bond: int) -> int:
        a, b = self.bonds[bond]
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return self.size[ra] * self.size[ra]
        return self.size[ra] * self.size[rb]

    def add(self, bond: int) -> None:
        if bond < 0 or bond >= len(self.bonds):
            raise InvalidArgumentError(f"unknown bond id {bond}")
        if bond in self.occupied:
            raise InvalidArgumentError(f"bond {bond} is already occupied")

        self._remove_from_pool(bond)
        self.occupied.add(bond)
        self.n += 1

        a, b = self.bonds[bond]
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.touches_left[ra] = self.touches_left[ra] or self.touches_left[rb]
        self.touches_right[ra] = self.touches_right[ra] or self.touches_right[rb]
        if self.size[ra] > self.largest:
            self.largest = self.size[ra]
        if self.touches_left[ra] and self.touches_right[ra]:
            self.wrapping = True

    def sink_free_sources(self) -> int:
        return sum(1 for s in self.left_sites if not self.touches_right[self.find(s)])

    def _remove_from_pool(self, bond: int) -> None:
        pos = self._pool_pos[bond]
        last = self._pool[-1]
        self._pool[pos] = last
        self._pool_pos[last] = pos
        self._pool.pop()
        self._pool_pos[bond] = -1

    def _swap_pool(self, i: int, j: int) -> None:
        pool = self._pool
        pool[i], pool[j] = pool[j], pool[i]
        self._pool_pos[pool[i]] = i
        self._pool_pos[pool[j]] = j


@dataclass
class GrowthTrajectory:
    topology: LatticeTopology
    m: int
    order: Tuple[int, ...]
    zeta: np.ndarray
    wrap_step: Optional[int]
    seed: Optional[Tuple[int, ...]] = None
    wrapping: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def wrap_fraction(self) -> Optional[float]:
        if self.wrap_step is None:
            return None
        return self.wrap_step / self.topology.bond_count

    def wraps_at(self, n: int) -> bool:
        return self.wrap_step is not None and n >= self.wrap_step


def new_state(topology: LatticeTopology) -> ClusterState:
    return ClusterState(topology.site_count, topology.bonds, topology.sources, topology.sinks)


def candidate_weight(state: ClusterState, bond: int) -> int:
    """Product of the sizes of the clusters the bond would merge (size^2 inside one cluster)."""
    return state.weight(bond)


def select_bond_best_of_m(state: ClusterState, m: int, rng: np.random.Generator) -> int:
    if m < 1:
        raise InvalidArgumentError(f"m must be >= 1, got {m}")
    K = state.unoccupied_count
    if K == 0:
        raise GrowthCompleteError("every bond is already occupied")

    c = min(m, K)
    draws = rng.random(c)
    for i in range(c):
        j = i + int(draws[i] * (K - i))
        state._swap_pool(i, min(j, K - 1))
    candidates = state._pool[:c]

    weights = [state.weight(bond) for bond in candidates]
    best = min(weights)
    minima = [bond for bond, w in zip(candidates, weights) if w == best]
    if len(minima) == 1:
        return minima[0]
    pick = int(rng.random() * len(minima))
    return minima[min(pick, len(minima) - 1)]


def add_bond(state: ClusterState, bond: int) -> ClusterState:
    state.add(bond)
    return state


def grow_trajectory(
    topology: LatticeTopology,
    m: int,
    rng: np.random.Generator,
    seed: Optional[Tuple[int, ...]] = None,
) -> GrowthTrajectory:
    """Occupy every bond of the lattice one at a time under the best-of-m rule."""
    if m < 1:
        raise InvalidArgumentError(f"m must be >= 1, got {m}")

    state = new_state(topology)
    B = topology.bond_count
    N = topology.site_count
    order: List[int] = []
    zeta = np.empty(B + 1)
    wrapping = np.zeros(B + 1, dtype=bool)
    zeta[0] = state.largest / N
    wrapping[0] = state.wrapping
    wrap_step = 0 if state.wrapping else None

    for n in range(1, B + 1):
        bond = select_bond_best_of_m(state, m, rng)
        state.add(bond)
        order.append(bond)
        zeta[n] = state.largest / N
        wrapping[n] = state.wrapping
        if wrap_step is None and state.wrapping:
            wrap_step = n

    logger.debug("grew L=%d m=%d trajectory, wrap step %s", topology.side_length, m, wrap_step)
    return GrowthTrajectory(
        topology=topology,
        m=m,
        order=tuple(order),
        zeta=zeta,
        wrap_step=wrap_step,
        seed=seed,
        wrapping=wrapping,
    )


def sink_free_source_count(state: ClusterState, topology: LatticeTopology) -> int:
    """Number of source sites whose cluster contains no sink site."""
    return sum(1 for s in topology.sources if not state.touches_right[state.find(s)])


def wrapping_source_count(state: ClusterState, topology: LatticeTopology) -> int:
    """Number of source sites that belong to a cluster reaching the sink edge."""
    return len(topology.sources) - sink_free_source_count(state, topology)


def replay_states(
    trajectory: GrowthTrajectory, grid: Sequence[int]
) -> Iterator[Tuple[int, ClusterState]]:
    """
    Regrow the recorded bond order and yield (n, state) at each grid point.

    The same ClusterState object is yielded every time and keeps mutating;
    callers that need a snapshot must read what they need before advancing.
    """
    targets = sorted(set(grid))
    if targets and (targets[0] < 0 or targets[-1] > trajectory.topology.bond_count):
        raise InvalidArgumentError("grid points must lie in [0, B]")

    state = new_state(trajectory.topology)
    step = 0
    for n in targets:
        while step < n:
            state.add(trajectory.order[step])
            step += 1
        yield n, state
