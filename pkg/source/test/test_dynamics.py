import numpy as np
import pytest

from source.algorithms import dynamics, gibbs
from source.commons.errors import ContractViolation, DegenerateInputError
from source.commons.lattice import Torus, digit_table


def _indicator_pairs(rng, states, count):
    for _ in range(count):
        yield (rng.random(states) < 0.5).astype(float), (rng.random(states) < 0.5).astype(float)


def test_update_rule_validation():
    """ test the neighborhood must start with the shape"""
    with pytest.raises(ValueError):
        dynamics.make_rule(2, ((0,),), ((1,), (0,)), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        dynamics.make_rule(2, ((1,),), ((1,),), np.zeros((2, 2)))


def test_noop_entries_are_zero():
    """ test xi = eta_Delta never carries a rate"""
    rule = dynamics.make_rule(2, ((0,),), ((0,), (1,)), np.ones((4, 2)))
    assert rule.rate([0, 1], [0]) == 0.0
    assert rule.rate([0, 1], [1]) == 1.0


def test_heat_bath_zero_potential():
    """ test heat-bath rates of the zero potential are 1/q"""
    spec = gibbs.build_specification(gibbs.zero_potential(2), Torus(4))
    rates = dynamics.make_heat_bath(spec)
    rule = rates.rules[0]
    assert rule.table.max() == pytest.approx(0.5)
    assert rates.kappa == pytest.approx(0.5)
    assert rates.l1_sum() == pytest.approx(1.0)
    assert rates.l2_sum() == pytest.approx(0.0)


def test_mix_weights():
    """ test degenerate mixtures and dropped zero-weight families"""
    spec = gibbs.build_specification(gibbs.potts_potential(3, 1.0, beta=0.5), Torus(5))
    hb, cyc = dynamics.make_heat_bath(spec), dynamics.make_cyclic(spec, 1.0)
    with pytest.raises(DegenerateInputError):
        dynamics.mix(0.0, hb, 0.0, cyc)
    assert len(dynamics.mix(1.0, hb, 0.0, cyc).rules) == 1
    both = dynamics.mix(0.5, hb, 2.0, cyc)
    assert both.sup_rate == pytest.approx(max(0.5 * hb.sup_rate, 2.0 * cyc.sup_rate))


def test_generator_rows_sum_to_zero(potts_ring):
    """ test the diagonal is minus the exit rate"""
    _, torus, _, _, rates = potts_ring
    gen = dynamics.assemble_generator(rates, torus)
    assert gen.n == 3 ** 5
    assert gen.row_sum_residual() < 1e-12
    assert gen.is_irreducible()


def test_generator_rejects_negative_rates():
    """ test a negative table entry is a contract violation"""
    table = np.array([[0.0, -1.0], [1.0, 0.0]])
    rule = dynamics.make_rule(2, ((0,),), ((0,),), table)
    rates = dynamics.RateFamily(2, 1, (rule,))
    with pytest.raises(ContractViolation):
        dynamics.assemble_generator(rates, Torus(3))


def test_heat_bath_is_reversible(ising_ring):
    """ test heat-bath rates satisfy detailed balance and are their own reversal"""
    _, torus, spec, mu, rates = ising_ring
    assert dynamics.detailed_balance_residual(rates, mu, torus) < 1e-12
    assert dynamics.rate_distance(dynamics.time_reversal(rates, spec), rates) < 1e-12


def test_cyclic_is_stationary_but_irreversible(potts_ring):
    """ test the cyclic family keeps the Gibbs measure without detailed balance"""
    _, torus, _, mu, rates = potts_ring
    gen = dynamics.assemble_generator(rates, torus)
    assert dynamics.stationarity_residual(mu, gen) < 1e-10
    assert dynamics.detailed_balance_residual(rates, mu, torus) > 1e-2


def test_cyclic_reversal_is_backward_cycle(potts_ring):
    """ test c_hat(eta, eta_x - 1) = kappa / gamma(eta_x | .)"""
    _, _, spec, _, rates = potts_ring
    rhat = dynamics.time_reversal(rates, spec)
    assert rhat.rules[0].neighborhood == rates.rules[0].neighborhood
    _, kernel = spec.local_kernel(((0,),))
    expected = np.zeros_like(rates.rules[0].table)
    for row in range(expected.shape[0]):
        own, b = row % 3, row // 3
        expected[row, (own - 1) % 3] = 1.0 / kernel[b, own]
    np.testing.assert_allclose(rhat.rules[0].table, expected, rtol=1e-12)


def test_reversal_involution(potts_ring):
    """ test reversing twice gives back the rates"""
    _, _, spec, _, rates = potts_ring
    mixture = dynamics.mix(0.7, rates, 1.3, dynamics.make_heat_bath(spec))
    for family in (rates, mixture):
        twice = dynamics.time_reversal(dynamics.time_reversal(family, spec), spec)
        assert dynamics.rate_distance(twice, family) < 1e-12


def test_reversal_bound(potts_ring):
    """ test ||c_hat|| <= e^R ||c|| / delta"""
    _, _, spec, _, rates = potts_ring
    rhat = dynamics.time_reversal(rates, spec)
    assert all(c.holds for c in dynamics.reversal_bound_check(rates, rhat, spec))


@pytest.mark.parametrize('family', ['cyclic', 'mixture'])
def test_switching_identity(potts_ring, rng, family):
    """ test sum c f g(xi .) dmu = sum c_hat f(xi .) g dmu for random indicators"""
    _, torus, spec, mu, rates = potts_ring
    if family == 'mixture':
        rates = dynamics.mix(1.0, rates, 1.0, dynamics.make_heat_bath(spec))
    rhat = dynamics.time_reversal(rates, spec)
    for f, g in _indicator_pairs(rng, 3 ** 5, 50):
        for shape in rates.shapes():
            window = torus.window(shape, 2)
            assert dynamics.switching_residual(rates, spec, mu, f, g, window, rhat) < 1e-10


def test_oscillation_equations():
    """ test the oscillation identity and its negative control"""
    torus = Torus(4)
    pot = gibbs.potts_potential(3, 1.0, beta=0.5)
    spec = gibbs.build_specification(pot, torus)
    rates = dynamics.make_cyclic(spec, 1.0)
    rhat = dynamics.time_reversal(rates, spec)
    assert dynamics.max_oscillation_residual(rates, rhat, torus) < 1e-10
    eta = np.array([0, 1, 2, 1])
    assert dynamics.oscillation_residual(rates, rhat, 1, 2, eta, torus) < 1e-10
    assert dynamics.oscillation_residual_window(rates, rhat, (1, 2), eta, torus) < 1e-10
    # rates of another temperature reversed against this specification
    perturbed = dynamics.make_cyclic(gibbs.build_specification(pot.with_beta(1.0), torus), 1.0)
    rhat_bad = dynamics.time_reversal(perturbed, spec)
    assert dynamics.max_oscillation_residual(perturbed, rhat_bad, torus) > 1e-3


def test_duality_and_oscillation_pair(potts_ring, rng):
    """ test the reversed process is the mu-adjoint and keeps mu stationary"""
    _, torus, spec, mu, rates = potts_ring
    rhat, forward, backward = dynamics.build_from_oscillation_pair(rates, spec, torus, mu)
    assert forward < 1e-10 and backward < 1e-10
    gen, gen_hat = dynamics.assemble_generator(rates, torus), dynamics.assemble_generator(rhat, torus)
    f, g = rng.random(gen.n), rng.random(gen.n)
    assert dynamics.duality_residual(gen, gen_hat, mu, f, g, 0.7) < 1e-10


def test_beta_tail_vanishes_beyond_range(ising_ring):
    """ test beta(n) = 0 once the box covers the dependence neighborhood"""
    _, _, spec, _, rates = ising_ring
    rhat = dynamics.time_reversal(rates, spec)
    assert dynamics.beta_tail(rates, rhat, 0) > 0
    for n in range(1, 4):
        assert dynamics.beta_tail(rates, rhat, n) == 0.0


def test_condition_report_zero_potential():
    """ test every condition passes for heat-bath dynamics of the zero potential"""
    torus = Torus(4)
    spec = gibbs.build_specification(gibbs.zero_potential(2), torus)
    report = dynamics.check_rate_conditions(dynamics.make_heat_bath(spec), spec, torus)
    assert report.passed
    assert report.checks['R6'].note == 'strongly connected'
    assert {r['check'] for r in report.rows()} >= {'R1', 'R6', 'S2', 'L1', 'L2'}


def test_condition_report_failures(ising_ring):
    """ test witnesses for null rates and the single-site certificate"""
    _, torus, spec, _, rates = ising_ring
    frozen = dynamics.RateFamily(2, 1, (dynamics.make_rule(2, ((0,),), ((0,),), np.zeros((2, 2))),))
    report = dynamics.check_rate_conditions(frozen, spec, torus)
    assert not report.checks['R6'].passed
    certified = dynamics.check_rate_conditions(rates, spec, torus, exact_limit=0)
    assert certified.checks['R6'].passed
    assert certified.checks['R6'].note == 'single-site certificate'


def test_gradient_norms_shape(potts_ring):
    """ test gradient norms are indexed by position, spin and xi"""
    _, _, _, _, rates = potts_ring
    norms = rates.gradient_norms(0)
    assert norms.shape == (3, 3, 3)
    assert np.all(norms >= 0)
    assert digit_table(3, 3).shape == (27, 3)
