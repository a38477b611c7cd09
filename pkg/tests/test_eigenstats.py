import math

import numpy as np
import pytest

from src.eigenstats import (
    EigenstatsAccumulator,
    aggregate_eigenstats,
    contributes,
    eigenstate_profiles,
    participation_ratio,
    profile_arrays,
    profile_order,
)
from src.errors import InvalidArgumentError
from src.lattice import build_lattice
from src.percolation import grow_trajectory, new_state, replay_states
from src.spectral import eig_by_component, laplacian
from src.utils.rng import derive_stream


def _decomposition(topology, occupied):
    state = new_state(topology)
    for bond in occupied:
        state.add(bond)
    return eig_by_component(laplacian(topology, state.occupied), state.component_labels())


def test_participation_ratio_bounds():
    assert participation_ratio([0.0, 1.0, 0.0]) == pytest.approx(1.0)
    assert participation_ratio(np.full(4, 0.5)) == pytest.approx(4.0)
    with pytest.raises(InvalidArgumentError):
        participation_ratio([1.0, 1.0])


def test_contribution_indicator():
    v = np.array([1.0, 0.0, 1.0, 0.0]) / math.sqrt(2)
    assert contributes(v, sources=[0], sinks=[2]) == 1
    assert contributes(v, sources=[1], sinks=[2]) == 0
    assert contributes(np.array([1.0, 1e-12, 0.0]), sources=[0], sinks=[1]) == 0


def test_empty_lattice_profiles(lattice7):
    decomposition = _decomposition(lattice7, ())
    xi, nu = profile_arrays(decomposition, sorted(lattice7.sources), sorted(lattice7.sinks))
    assert np.all(xi == 1.0)
    assert nu.sum() == 0
    assert profile_order(decomposition).tolist() == list(range(49))


def test_full_lattice_profiles(lattice7):
    decomposition = _decomposition(lattice7, range(lattice7.bond_count))
    xi, nu = profile_arrays(decomposition, sorted(lattice7.sources), sorted(lattice7.sinks))
    assert xi[0] == pytest.approx(49.0, abs=1e-8)
    assert nu.sum() >= 45
    assert xi.min() >= 1.0 and xi.max() <= 49.0 + 1e-9


def test_profiles_carry_index_and_support(lattice3):
    decomposition = _decomposition(lattice3, [0, 1])
    profiles = eigenstate_profiles(decomposition, sorted(lattice3.sources), sorted(lattice3.sinks))
    assert [p.index for p in profiles] == list(range(1, 10))
    assert np.all(np.diff([p.eigenvalue for p in profiles]) >= -1e-9)
    assert profiles[0].support == 3
    assert profiles[0].participation == pytest.approx(3.0)
    assert profiles[0].contributes == 1


def test_accumulator_means():
    accumulator = EigenstatsAccumulator([0.0, 1.0], site_count=2)
    accumulator.add(np.array([[1.0, 1.0], [2.0, 1.0]]), np.array([[0.0, 0.0], [1.0, 0.0]]))
    accumulator.add(np.array([[1.0, 1.0], [2.0, 2.0]]), np.array([[0.0, 0.0], [1.0, 1.0]]))
    curves = accumulator.curves()
    assert curves.count == 2
    assert curves.xi_mean.tolist() == [[1.0, 1.0], [2.0, 1.5]]
    assert curves.gamma_mean.tolist() == [0.0, 1.5]
    assert curves.xi_avg_mean.tolist() == [1.0, 1.75]
    assert curves.gamma_stderr[0] == 0.0


def test_aggregate_from_profiles(lattice3):
    empty = eigenstate_profiles(_decomposition(lattice3, ()), sorted(lattice3.sources), sorted(lattice3.sinks))
    full = eigenstate_profiles(
        _decomposition(lattice3, range(lattice3.bond_count)), sorted(lattice3.sources), sorted(lattice3.sinks)
    )
    curves = aggregate_eigenstats([0.0, 1.0], [[empty, full], [empty, full]])
    assert curves.count == 2
    assert curves.gamma_mean[0] == 0.0
    assert curves.xi_mean[1, 0] == pytest.approx(9.0)
    with pytest.raises(InvalidArgumentError):
        aggregate_eigenstats([0.0], [])


@pytest.mark.slow
@pytest.mark.parametrize("m", [1, 2])
def test_contributing_states_live_on_spanning_clusters(m):
    topology = build_lattice(7)
    sources, sinks = sorted(topology.sources), sorted(topology.sinks)
    grid = list(range(0, topology.bond_count + 1, 6))
    contributing = 0
    for r in range(30):
        trajectory = grow_trajectory(topology, m, derive_stream(2016, m, r))
        for n, state in replay_states(trajectory, grid):
            decomposition = eig_by_component(laplacian(topology, state.occupied), state.component_labels())
            vectors = decomposition.vectors[:, profile_order(decomposition)]
            _, nu = profile_arrays(decomposition, sources, sinks)
            for l in np.flatnonzero(nu == 1.0):
                support = np.flatnonzero(np.abs(vectors[:, l]) > 1e-10)
                roots = {state.find(int(site)) for site in support}
                assert len(roots) == 1
                root = roots.pop()
                assert state.touches_left[root] and state.touches_right[root], (r, n, l)
                contributing += 1
    assert contributing > 0
