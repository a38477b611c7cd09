import numpy as np
import pytest

from src.errors import InvalidArgumentError
from src.lattice import build_lattice
from src.transport import (
    COMPLEX_SPECTRAL,
    DARK_STATE,
    TransportProblem,
    coherent_survival,
    coherent_survival_complex_check,
    coherent_survival_timeseries,
    connectivity_oracle,
    dark_subspace,
    incoherent_survival,
    incoherent_survival_timeseries,
    settle_time,
    source_survival_profile,
    _checked,
)
from src.spectral import eig_hermitian
from src.utils.rng import derive_stream


@pytest.fixture
def chain():
    return TransportProblem(site_count=2, edges=((0, 1),), sources=(0,), sinks=(1,))


@pytest.fixture
def lambda_graph():
    return TransportProblem(site_count=3, edges=((0, 2), (1, 2)), sources=(0, 1), sinks=(2,))


def test_two_site_chain_loses_everything(chain):
    result = coherent_survival(chain)
    assert result.survival == pytest.approx(0.0, abs=1e-12)
    assert result.efficiency == pytest.approx(1.0)
    assert result.method == DARK_STATE
    assert incoherent_survival(chain).survival == pytest.approx(0.0, abs=1e-12)


def test_lambda_graph_dark_state(lambda_graph):
    assert coherent_survival(lambda_graph).survival == pytest.approx(0.0, abs=1e-12)
    assert coherent_survival(lambda_graph.with_site(0)).survival == pytest.approx(0.5, abs=1e-12)
    assert coherent_survival(lambda_graph.with_site(1)).survival == pytest.approx(0.5, abs=1e-12)
    dark = dark_subspace(eig_hermitian(lambda_graph.h0()), lambda_graph.sinks)
    assert dark.shape == (3, 1)
    assert incoherent_survival(lambda_graph.with_site(0)).survival == pytest.approx(0.0, abs=1e-12)


def test_lambda_graph_complex_spectrum_agrees(lambda_graph):
    single = coherent_survival_complex_check(lambda_graph.with_site(0), fallback=False)
    assert single.method == COMPLEX_SPECTRAL
    assert single.survival == pytest.approx(0.5, abs=1e-10)
    assert coherent_survival_complex_check(lambda_graph, fallback=False).survival == pytest.approx(0.0, abs=1e-10)


def test_source_profile(lambda_graph):
    coherent, incoherent = source_survival_profile(lambda_graph)
    assert coherent == pytest.approx([0.5, 0.5], abs=1e-12)
    assert incoherent.tolist() == [0.0, 0.0]


def test_sink_free_sources_keep_everything():
    topology = build_lattice(3)
    column = [b for b, (a, c) in enumerate(topology.bonds) if c - a == 3 and topology.column(a) == 0]
    problem = TransportProblem.from_lattice(topology, column)
    assert coherent_survival(problem).survival == pytest.approx(1.0, abs=1e-12)
    assert incoherent_survival(problem).survival == pytest.approx(1.0, abs=1e-12)
    assert connectivity_oracle(problem) == 1.0


def test_empty_lattice_survives(lattice3):
    problem = TransportProblem.from_lattice(lattice3, ())
    assert coherent_survival(problem).survival == pytest.approx(1.0, abs=1e-12)
    assert connectivity_oracle(problem) == 1.0


def test_rounding_overshoot_is_clamped():
    assert _checked(1.0 + 2.2e-16, DARK_STATE).survival == 1.0
    assert _checked(-1e-15, DARK_STATE).survival == 0.0
    assert _checked(1.0 + 2.2e-16, DARK_STATE).efficiency == 0.0


def test_survival_and_efficiency_stay_in_unit_interval(random_occupation, lattice3):
    topology = build_lattice(4)
    configurations = [()] + random_occupation(topology, derive_stream(10, 1, 0), 30)
    for occupied in configurations:
        problem = TransportProblem.from_lattice(topology, occupied)
        result = coherent_survival(problem)
        assert 0.0 <= result.survival <= 1.0
        assert 0.0 <= result.efficiency <= 1.0
        coherent, _ = source_survival_profile(problem)
        assert np.all((coherent >= 0.0) & (coherent <= 1.0))
    empty = coherent_survival(TransportProblem.from_lattice(lattice3, ()))
    assert empty.efficiency >= 0.0


def test_problem_validation():
    with pytest.raises(InvalidArgumentError):
        TransportProblem(site_count=2, edges=(), sources=(), sinks=(1,))
    with pytest.raises(InvalidArgumentError):
        TransportProblem(site_count=2, edges=(), sources=(0, 1), sinks=(1,))
    with pytest.raises(InvalidArgumentError):
        TransportProblem(site_count=2, edges=(), sources=(0,), sinks=(2,))
    with pytest.raises(InvalidArgumentError):
        TransportProblem(site_count=3, edges=(), sources=(0,), sinks=(2,)).with_site(1)
    with pytest.raises(InvalidArgumentError):
        TransportProblem(site_count=2, edges=(), sources=(0,), sinks=(1,), initial="gaussian")


def test_initial_states_are_normalized(lambda_graph):
    psi = lambda_graph.coherent_state()
    assert np.vdot(psi, psi).real == pytest.approx(1.0)
    assert lambda_graph.incoherent_state().sum() == pytest.approx(1.0)


def test_incoherent_matches_connectivity(random_occupation):
    topology = build_lattice(4)
    for occupied in random_occupation(topology, derive_stream(8, 1, 0), 40):
        problem = TransportProblem.from_lattice(topology, occupied)
        oracle = connectivity_oracle(problem)
        assert incoherent_survival(problem).survival == pytest.approx(oracle, abs=1e-9)
        single = problem.with_site(problem.sources[-1])
        assert incoherent_survival(single).survival == pytest.approx(connectivity_oracle(single), abs=1e-9)


def test_coherent_survival_never_below_classical(random_occupation):
    topology = build_lattice(4)
    for occupied in random_occupation(topology, derive_stream(9, 1, 0), 40):
        problem = TransportProblem.from_lattice(topology, occupied)
        assert coherent_survival(problem).survival >= connectivity_oracle(problem) - 1e-9


def test_complex_check_falls_back_on_failure(chain, monkeypatch):
    from src import transport
    from src.errors import NumericalError

    def broken(operator):
        raise NumericalError("eig failed")

    monkeypatch.setattr(transport, "eig_complex", broken)
    result = coherent_survival_complex_check(chain)
    assert result.method == DARK_STATE
    with pytest.raises(NumericalError):
        coherent_survival_complex_check(chain, fallback=False)


def test_timeseries_decay(chain):
    series = coherent_survival_timeseries(chain, [0.0, 1.0, 5.0, 200.0])
    values = [value for _, value in series]
    assert values[0] == pytest.approx(1.0)
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert values[-1] < 1e-12

    classical = incoherent_survival_timeseries(chain, [200.0, 0.0])
    assert classical[1][1] == pytest.approx(1.0)
    assert classical[0][1] < 1e-12


def test_timeseries_rejects_negative_times(chain):
    with pytest.raises(InvalidArgumentError):
        coherent_survival_timeseries(chain, [-1.0])


def test_settle_time(chain, lambda_graph):
    assert settle_time(chain) == 200.0
    assert settle_time(lambda_graph) >= 200.0
