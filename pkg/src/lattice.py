"""
Square-lattice geometry with open boundaries.

Sites are numbered row-major, `site = row * L + col`, 0-based internally.
Everything written to disk uses 1-based site and bond ids.
"""
from dataclasses import dataclass
from typing import FrozenSet, List, Tuple

from src.errors import InvalidArgumentError

Bond = Tuple[int, int]


@dataclass(frozen=True)
class LatticeTopology:
    side_length: int
    site_count: int
    bonds: Tuple[Bond, ...]
    sources: FrozenSet[int]
    sinks: FrozenSet[int]

    @property
    def bond_count(self) -> int:
        return len(self.bonds)

    def column(self, site: int) -> int:
        return site % self.side_length

    def row(self, site: int) -> int:
        return site // self.side_length

    def degrees(self) -> List[int]:
        """Site degrees in the fully occupied lattice."""
        degree = [0] * self.site_count
        for a, b in self.bonds:
            degree[a] += 1
            degree[b] += 1
        return degree


def total_bonds(side_length: int) -> int:
    return 2 * side_length * (side_length - 1)


def build_lattice(side_length: int) -> LatticeTopology:
    """
    Build an L x L square lattice.

    Bonds are enumerated row by row; inside a row every horizontal bond
    (site, site + 1) comes first, followed by the vertical bonds
    (site, site + L) that leave that row downwards. Bond ids are positions
    in this tuple and are therefore stable across runs.
    """
    if not isinstance(side_length, int) or isinstance(side_length, bool) or side_length < 2:
        raise InvalidArgumentError(f"side length must be an integer >= 2, got {side_length!r}")

    L = side_length
    bonds: List[Bond] = []
    for row in range(L):
        base = row * L
        for col in range(L - 1):
            bonds.append((base + col, base + col + 1))
        if row < L - 1:
            for col in range(L):
                bonds.append((base + col, base + col + L))

    sources = frozenset(row * L for row in range(L))
    sinks = frozenset(row * L + L - 1 for row in range(L))
    return LatticeTopology(
        side_length=L,
        site_count=L * L,
        bonds=tuple(bonds),
        sources=sources,
        sinks=sinks,
    )


def bond_fraction(n: int, topology: LatticeTopology) -> float:
    """p = n / B(L) with B(L) = 2L(L-1)."""
    if n < 0 or n > topology.bond_count:
        raise InvalidArgumentError(
            f"occupied bond count {n} outside [0, {topology.bond_count}]"
        )
    return n / topology.bond_count


def dump_topology(topology: LatticeTopology) -> str:
    """Plain-text edge list, one `bond_id site_a site_b` per line, 1-based."""
    lines = [f"{bond_id + 1} {a + 1} {b + 1}" for bond_id, (a, b) in enumerate(topology.bonds)]
    return "\n".join(lines) + "\n"
