import itertools

import numpy as np
import pytest

from source.algorithms import gibbs
from source.algorithms.measures import ProductMarginals, TransferMarginals
from source.commons.errors import GeometryError, ZeroMarginalError
from source.commons.lattice import Torus


def test_torus_energy_of_two_site_ring():
    """ test that every bond translate is counted, so N=2 doubles the bond"""
    pot = gibbs.ising_potential(1.0, 0.0, beta=1.0)
    energy = gibbs.torus_energies(pot, Torus(2))
    np.testing.assert_allclose(energy, [-2.0, 2.0, 2.0, -2.0])


def test_exact_gibbs_zero_potential_is_uniform():
    """ test the zero potential gives the uniform measure"""
    mu = gibbs.exact_gibbs(gibbs.zero_potential(3), Torus(4))
    np.testing.assert_allclose(mu.probs, np.full(81, 1 / 81))


def test_build_specification_range_guard():
    """ test the half-side guard and the dimension check"""
    pot = gibbs.ising_potential(1.0, 0.0, beta=0.5)
    with pytest.raises(GeometryError):
        gibbs.build_specification(pot, Torus(2))
    with pytest.raises(GeometryError):
        gibbs.build_specification(pot, Torus((4, 4)))


def test_nonnull_delta_of_ising():
    """ test delta = min single-site conditional = 1 / (1 + e^{4K})"""
    k = 0.3
    spec = gibbs.build_specification(gibbs.ising_potential(1.0, 0.0, beta=k), Torus(6))
    assert gibbs.nonnull_delta(spec) == pytest.approx(1.0 / (1.0 + np.exp(4 * k)), rel=1e-12)
    zero = gibbs.build_specification(gibbs.zero_potential(3), Torus(4))
    assert gibbs.nonnull_delta(zero) == pytest.approx(1 / 3)


@pytest.mark.parametrize('window', [(0,), (2,), (1, 2), (0, 3)])
def test_dlr_residual_of_exact_gibbs(ising_ring, window):
    """ test the torus Gibbs measure solves the DLR equations"""
    _, _, spec, mu, _ = ising_ring
    assert gibbs.dlr_residual(mu, spec, window) < 1e-12


def test_dlr_residual_detects_wrong_beta(ising_ring):
    """ test a measure at another temperature fails the DLR equations"""
    pot, torus, spec, _, _ = ising_ring
    other = gibbs.exact_gibbs(pot.with_beta(0.9), torus)
    assert gibbs.dlr_residual(other, spec, (0,)) > 1e-3


def test_dlr_residual_zero_marginal():
    """ test a measure vanishing on a cylinder raises"""
    torus = Torus(4)
    spec = gibbs.build_specification(gibbs.zero_potential(2), torus)
    point = ProductMarginals([1.0, 0.0]).on_torus(torus)
    with pytest.raises(ZeroMarginalError):
        gibbs.dlr_residual(point, spec, (0,))


def test_specification_axioms(potts_ring):
    """ test normalization and consistency of the kernels"""
    _, _, spec, _, _ = potts_ring
    assert gibbs.normalization_residual(spec, (1,)) < 1e-12
    assert gibbs.normalization_residual(spec, (1, 2, 3)) < 1e-12
    assert gibbs.consistency_residual(spec, (2,), (1, 2)) < 1e-12
    assert gibbs.consistency_residual(spec, (1, 2), (1, 2, 3)) < 1e-12


def _ring_window_pairs(n):
    for length in range(1, n + 1):
        for start in range(n if length < n else 1):
            lam = tuple((start + k) % n for k in range(length))
            for size in range(1, length + 1):
                for delta_w in itertools.combinations(lam, size):
                    yield delta_w, lam


@pytest.mark.parametrize('ring', ['ising_ring', 'potts_ring'])
def test_log_ratio_bound(request, ring):
    """ test |log mu(xi eta) / mu(eta)| <= |Delta| log(1/delta) for every Delta inside every ring window"""
    _, torus, _, mu, _ = request.getfixturevalue(ring)
    worst = 0.0
    for delta_w, lam in _ring_window_pairs(torus.size):
        check = gibbs.log_ratio_bound_check(mu, delta_w, lam)
        assert check.holds, (delta_w, lam)
        worst = max(worst, check.value)
    assert worst > 0


def test_pushforward_density(potts_ring):
    """ test the density of mu under the map forcing xi on Delta"""
    _, _, spec, mu, _ = potts_ring
    for xi in range(3):
        assert gibbs.pushforward_density_residual(mu, spec, (1,), (xi,)) < 1e-12


def test_transfer_marginal_matches_long_ring():
    """ test the transfer-matrix marginal against a long ring"""
    pot = gibbs.ising_potential(1.0, 0.0, beta=0.3)
    torus = Torus(14)
    mu = gibbs.exact_gibbs(pot, torus)
    exact = mu.marginal((6, 7, 8))
    np.testing.assert_allclose(gibbs.transfer_marginal_1d(pot, (0, 1, 2)), exact, atol=1e-6)
    np.testing.assert_allclose(gibbs.transfer_marginal_1d(pot, (0,)), [0.5, 0.5], atol=1e-12)


def test_transfer_marginal_of_product():
    """ test a field-only potential gives independent sites"""
    pot = gibbs.field_potential(0.7, beta=1.0)
    source = TransferMarginals(pot)
    single = gibbs.transfer_marginal_1d(pot, (0,))
    np.testing.assert_allclose(source.marginal((0, 3)), np.kron(single, single), atol=1e-12)


def test_beta_mixing_bound():
    """ test beta-mixing is 0 for products and nonincreasing in n for Gibbs"""
    torus = Torus(8)
    product = ProductMarginals([0.3, 0.7]).on_torus(torus)
    assert gibbs.beta_mixing_bound(product, (4,), 1) == pytest.approx(0.0, abs=1e-14)
    mu = gibbs.exact_gibbs(gibbs.ising_potential(1.0, 0.0, beta=0.5), torus)
    values = [gibbs.beta_mixing_bound(mu, (4,), n) for n in range(0, 4)]
    assert all(b <= a + 1e-14 for a, b in zip(values, values[1:]))
    assert values[0] > 0
    assert gibbs.beta_mixing_bound(mu, (4,), 4) == 0.0


def test_exact_sample_frequencies(ising_ring, rng):
    """ test exact sampling reproduces single-site marginals"""
    _, _, _, mu, _ = ising_ring
    draws = gibbs.exact_sample(mu, 4000, rng)
    assert draws.shape == (4000, 6)
    assert abs(draws[:, 0].mean() - 0.5) < 0.05
