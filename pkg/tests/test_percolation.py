import numpy as np
import pytest
from scipy import stats

from src.errors import GrowthCompleteError, InvalidArgumentError
from src.lattice import build_lattice
from src.percolation import (
    add_bond,
    candidate_weight,
    grow_trajectory,
    new_state,
    replay_states,
    select_bond_best_of_m,
    sink_free_source_count,
    wrapping_source_count,
)
from src.utils.rng import derive_stream


def test_union_by_size_and_edge_flags():
    topology = build_lattice(2)
    state = new_state(topology)
    add_bond(state, 0)  # 0-1
    assert state.find(0) == state.find(1)
    assert state.largest == 2
    assert state.wrapping
    root = state.find(0)
    assert state.touches_left[root] and state.touches_right[root]
    assert state.n == 1
    assert state.unoccupied_count == 3


def test_add_rejects_occupied_and_unknown(lattice3):
    state = new_state(lattice3)
    state.add(3)
    with pytest.raises(InvalidArgumentError):
        state.add(3)
    with pytest.raises(InvalidArgumentError):
        state.add(lattice3.bond_count)


def test_weight_inside_and_across_clusters():
    topology = build_lattice(2)
    state = new_state(topology)
    assert candidate_weight(state, 0) == 1
    for bond in (0, 1, 2):
        state.add(bond)
    assert candidate_weight(state, 3) == 16


@pytest.mark.parametrize("m", [1, 4])
def test_uniform_selection_on_empty_lattice(lattice3, m):
    # all candidates weigh 1 on an empty lattice
    state = new_state(lattice3)
    rng = derive_stream(7, m, 0)
    draws = 12000
    counts = np.bincount(
        [select_bond_best_of_m(state, m, rng) for _ in range(draws)], minlength=lattice3.bond_count
    )
    assert counts.sum() == draws
    assert stats.chisquare(counts).pvalue > 1e-3


def test_product_rule_picks_minimal_weight(lattice3):
    state = new_state(lattice3)
    state.add(0)
    rng = derive_stream(3, 1, 0)
    for _ in range(20):
        bond = select_bond_best_of_m(state, state.unoccupied_count, rng)
        assert candidate_weight(state, bond) == 1


def test_rng_consumption_without_ties(lattice3):
    state = new_state(lattice3)
    rng, reference = derive_stream(1, 1, 0), derive_stream(1, 1, 0)
    select_bond_best_of_m(state, 1, rng)
    reference.random(1)
    assert rng.random() == reference.random()


def test_rng_consumption_with_ties(lattice3):
    state = new_state(lattice3)
    rng, reference = derive_stream(1, 3, 0), derive_stream(1, 3, 0)
    select_bond_best_of_m(state, 3, rng)
    reference.random(3)
    reference.random()
    assert rng.random() == reference.random()


def test_select_argument_errors(lattice3, rng):
    state = new_state(lattice3)
    with pytest.raises(InvalidArgumentError):
        select_bond_best_of_m(state, 0, rng)
    for bond in range(lattice3.bond_count):
        state.add(bond)
    with pytest.raises(GrowthCompleteError):
        select_bond_best_of_m(state, 2, rng)


@pytest.mark.parametrize("m", [1, 2, 24])
def test_trajectory_is_a_permutation(m):
    topology = build_lattice(4)
    trajectory = grow_trajectory(topology, m, derive_stream(5, m, 0))
    assert sorted(trajectory.order) == list(range(topology.bond_count))
    assert trajectory.zeta[0] == pytest.approx(1 / 16)
    assert trajectory.zeta[-1] == 1.0
    assert np.all(np.diff(trajectory.zeta) >= 0)
    step = trajectory.wrap_step
    assert step is not None
    assert trajectory.wrapping[step] and not trajectory.wrapping[step - 1]
    assert np.all(trajectory.wrapping[step:])
    assert trajectory.wraps_at(step) and not trajectory.wraps_at(step - 1)
    assert 0 < trajectory.wrap_fraction <= 1


def test_trajectory_is_reproducible():
    topology = build_lattice(5)
    first = grow_trajectory(topology, 4, derive_stream(99, 4, 3))
    second = grow_trajectory(topology, 4, derive_stream(99, 4, 3))
    other = grow_trajectory(topology, 4, derive_stream(99, 4, 4))
    assert first.order == second.order
    assert np.array_equal(first.zeta, second.zeta)
    assert first.order != other.order


def test_replay_matches_prefix(lattice3):
    trajectory = grow_trajectory(lattice3, 2, derive_stream(11, 2, 0))
    seen = []
    for n, state in replay_states(trajectory, [0, 5, 12]):
        assert state.occupied == set(trajectory.order[:n])
        assert state.largest / lattice3.site_count == trajectory.zeta[n]
        assert sink_free_source_count(state, lattice3) + wrapping_source_count(state, lattice3) == 3
        seen.append(n)
    assert seen == [0, 5, 12]


def test_replay_rejects_out_of_range_grid(lattice3):
    trajectory = grow_trajectory(lattice3, 1, derive_stream(11, 1, 0))
    with pytest.raises(InvalidArgumentError):
        list(replay_states(trajectory, [0, 13]))


def test_full_lattice_has_every_source_wrapping(lattice3):
    state = new_state(lattice3)
    for bond in range(lattice3.bond_count):
        state.add(bond)
    assert wrapping_source_count(state, lattice3) == 3
    assert sink_free_source_count(state, lattice3) == 0


@pytest.mark.slow
def test_correlated_growth_wraps_later(lattice7):
    def mean_wrap(m):
        return np.mean([grow_trajectory(lattice7, m, derive_stream(2016, m, r)).wrap_fraction for r in range(100)])

    assert mean_wrap(84) > mean_wrap(1)


SMOKE_REALIZATIONS = 400
SMOKE_TOL = 0.03
REFERENCE_WRAP = {1: 0.49, 2: 0.54, 84: 0.64}


@pytest.fixture(scope="module")
def smoke_trajectories():
    topology = build_lattice(7)
    return {
        m: [grow_trajectory(topology, m, derive_stream(20160104, m, r)) for r in range(SMOKE_REALIZATIONS)]
        for m in REFERENCE_WRAP
    }


@pytest.mark.slow
@pytest.mark.parametrize("m", sorted(REFERENCE_WRAP))
def test_mean_wrap_fraction_matches_reference(smoke_trajectories, m):
    mean = np.mean([t.wrap_fraction for t in smoke_trajectories[m]])
    assert mean == pytest.approx(REFERENCE_WRAP[m], abs=SMOKE_TOL)


@pytest.mark.slow
def test_correlated_growth_suppresses_largest_cluster(smoke_trajectories):
    n = round(0.45 * 84)
    zeta = {m: np.mean([t.zeta[n] for t in smoke_trajectories[m]]) for m in smoke_trajectories}
    assert zeta[84] < zeta[2] < zeta[1]
