import numpy as np
import pandas as pd
import pytest
from scipy.stats import chi2_contingency

from source.algorithms import dynamics, gibbs, montecarlo
from source.algorithms.montecarlo import InitialLaw, SimulationRun
from source.commons.errors import CapacityError, InsufficientDataError
from source.commons.lattice import Torus


def _ising(n, beta=0.3):
    pot = gibbs.ising_potential(1.0, 0.0, beta=beta)
    torus = Torus(n)
    spec = gibbs.build_specification(pot, torus)
    return torus, spec, gibbs.exact_gibbs(pot, torus), dynamics.make_heat_bath(spec)


def test_zero_horizon_returns_copy():
    """ test T=0 keeps the configuration and fires nothing"""
    torus, _, _, rates = _ising(5)
    eta0 = np.array([1, 0, 1, 1, 0])
    result = montecarlo.gillespie_run(SimulationRun(rates, torus, InitialLaw(), 0.0), eta0)
    assert result.final.tolist() == eta0.tolist()
    assert result.final is not eta0
    assert result.events == 0 and result.event_log.empty


def test_fixed_seed_reproduces_the_event_log():
    """ test identical seeds give identical logs and another seed differs"""
    torus, _, _, rates = _ising(8)
    eta0 = np.zeros(8, dtype=np.int64)
    run = SimulationRun(rates, torus, InitialLaw(), 5.0, log_events=40)
    first = montecarlo.gillespie_run(run, eta0, seed=7)
    second = montecarlo.gillespie_run(run, eta0, seed=7)
    pd.testing.assert_frame_equal(first.event_log, second.event_log)
    np.testing.assert_array_equal(first.final, second.final)
    other = montecarlo.gillespie_run(run, eta0, seed=8)
    assert not other.event_log.equals(first.event_log)
    log = first.event_log
    assert list(log.columns) == ['time', 'site', 'spin']
    assert log['time'].is_monotonic_increasing
    assert log['time'].max() <= 5.0
    assert len(log) == min(40, first.events)


def test_absorbing_state():
    """ test a family without positive rates stops at once"""
    torus = Torus(4)
    rule = dynamics.make_rule(2, ((0,),), ((0,),), np.zeros((2, 2)))
    run = SimulationRun(dynamics.RateFamily(2, 1, (rule,)), torus, InitialLaw(), 3.0)
    result = montecarlo.gillespie_run(run, np.zeros(4, dtype=np.int64))
    assert result.absorbed
    assert result.events == 0
    assert montecarlo.total_rate(run, result.final) == 0.0


def test_occupation_measure_converges():
    """ test the time average of one long path approaches the Gibbs measure"""
    torus, _, mu, rates = _ising(4)
    run = SimulationRun(rates, torus, InitialLaw(), 50000.0, seed=3)
    occupation = montecarlo.occupation_measure(run, np.zeros(4, dtype=np.int64))
    tv = 0.5 * np.abs(occupation.probs - mu.probs).sum()
    assert tv < 0.02
    with pytest.raises(CapacityError):
        big = Torus(17)
        montecarlo.occupation_measure(SimulationRun(rates, big, InitialLaw(), 1.0), np.zeros(17, dtype=np.int64))


def test_ensemble_frequencies():
    """ test pooled counts cover every translate and frequencies sum to 1"""
    torus, _, _, rates = _ising(6)
    run = SimulationRun(rates, torus, InitialLaw('uniform'), 1.0, replicas=50, seed=11)
    emp = montecarlo.ensemble_window_marginal(run, torus.box(1), 1.0, pool_translations=True)
    assert emp.samples == 50 * 6
    assert emp.replicas == 50
    assert emp.frequencies.sum() == pytest.approx(1.0)
    assert not emp.exact


def test_point_mass_at_time_zero():
    """ test a point initial law is seen unchanged at t=0"""
    torus, _, _, rates = _ising(5)
    law = InitialLaw('point', spins=(1, 0, 1, 0, 0))
    run = SimulationRun(rates, torus, law, 1.0, replicas=10)
    emp = montecarlo.ensemble_window_marginal(run, (0, 1, 2), 0.0)
    # little-endian index of (1, 0, 1)
    assert emp.counts[5] == 10
    assert emp.counts.sum() == 10


def test_replica_streams_do_not_depend_on_workers():
    """ test per-replica event counts with one and two worker processes"""
    torus, _, _, rates = _ising(6)
    run = SimulationRun(rates, torus, InitialLaw('uniform'), 2.0, replicas=6, seed=42)
    serial = montecarlo.replica_event_counts(run)
    parallel = montecarlo.replica_event_counts(SimulationRun(rates, torus, InitialLaw('uniform'), 2.0,
                                                             replicas=6, seed=42, workers=2))
    assert len(serial) == 6
    assert serial == parallel
    assert montecarlo.replica_event_counts(run, t=0.0) == [0] * 6


def test_attractor_residual_of_exact_samples():
    """ test exact Gibbs draws satisfy the single-site conditional ratios"""
    torus, spec, mu, rates = _ising(6)
    run = SimulationRun(rates, torus, InitialLaw('exact', measure=mu), 0.0, replicas=5000, seed=5)
    emp = montecarlo.ensemble_window_marginal(run, torus.box(1), 0.0, pool_translations=True)
    assert montecarlo.attractor_residual(emp, spec) < 0.03


def test_attractor_residual_needs_data():
    """ test too few samples raise instead of reporting a residual"""
    torus, spec, _, rates = _ising(6)
    run = SimulationRun(rates, torus, InitialLaw('uniform'), 0.0, replicas=3)
    emp = montecarlo.ensemble_window_marginal(run, torus.box(1), 0.0)
    with pytest.raises(InsufficientDataError):
        montecarlo.attractor_residual(emp, spec)


def test_distant_sites_are_independent():
    """ test chi-square independence of two sites under free spin flips"""
    torus = Torus(6)
    spec = gibbs.build_specification(gibbs.zero_potential(2), torus)
    run = SimulationRun(dynamics.make_heat_bath(spec), torus, InitialLaw('uniform'), 0.5, replicas=2000, seed=9)
    emp = montecarlo.ensemble_window_marginal(run, (0, 3), 0.5)
    # little-endian counts: rows are site 3, columns site 0
    table = emp.counts.reshape(2, 2)
    _, p_value, _, _ = chi2_contingency(table)
    assert p_value > 1e-3


def test_window_translates():
    """ test translates of a window on a ring"""
    translates = montecarlo.window_translates(Torus(4), (0, 1))
    assert translates.tolist() == [[0, 1], [1, 2], [2, 3], [3, 0]]


def test_run_validation():
    """ test horizons and replica counts are validated"""
    torus, _, _, rates = _ising(5)
    with pytest.raises(ValueError):
        SimulationRun(rates, torus, InitialLaw(), -1.0)
    with pytest.raises(ValueError):
        SimulationRun(rates, torus, InitialLaw(), 1.0, replicas=0)
    with pytest.raises(ValueError):
        InitialLaw('gibbs').sample(torus, 2, np.random.default_rng(0))


@pytest.mark.parametrize('residuals, passed', [
    ([0.5, 0.3, 0.2, 0.1, 0.05], True),
    ([0.5, 0.3, 0.32, 0.1, 0.05], True),
    ([0.5, 0.4, 0.3, 0.2, 0.15], False),
    ([0.5, 0.3, 0.4, 0.1, 0.05], False),
    ([0.5, 0.3, 0.31, 0.1, 0.105], False),
    ([0.5, 0.3, np.nan, 0.1, 0.05], False),
])
def test_attractor_trend(residuals, passed):
    """ test the residual sequence tolerates one small rise and must end below a fifth of its start"""
    assert montecarlo.attractor_trend(residuals).passed == passed


def test_attractor_trend_reports_its_terms():
    """ test the counted rises, the worst relative rise and the last/first ratio"""
    trend = montecarlo.attractor_trend([0.4, 0.2, 0.21, 0.05])
    assert trend.rises == 1
    assert trend.worst_rise == pytest.approx(0.05)
    assert trend.ratio == pytest.approx(0.125)
    assert montecarlo.attractor_trend([0.4, 0.2, 0.21, 0.05], noise=0.01).passed is False
    assert montecarlo.attractor_trend([0.4, 0.2, 0.21, 0.05], factor=10.0).passed is False
