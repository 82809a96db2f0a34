import os

import numpy as np
import pytest

from source.algorithms import dynamics, gibbs
from source.commons.lattice import Torus
from source.commons.model_loader import (CannotResolveError, read_potential, read_rate_family, write_potential,
                                         write_rate_family)

MODELS = ('ising_chain.pot', 'potts3_chain.pot', 'ising_field_square.pot')


@pytest.mark.parametrize('name', MODELS)
def test_read_shipped_models(data_dir, name):
    """ test the potentials under data/models parse"""
    pot = read_potential(os.path.join(data_dir, 'models', name))
    assert pot.name == name.split('.')[0]
    assert pot.terms
    assert pot.range == 1


def test_ising_chain_matches_preset(data_dir):
    """ test the shipped Ising chain against the built-in Ising potential"""
    pot = read_potential(os.path.join(data_dir, 'models', 'ising_chain.pot'))
    preset = gibbs.ising_potential(1.0, 0.0, beta=0.3)
    assert pot.beta == 0.3
    np.testing.assert_allclose(gibbs.torus_energies(pot, Torus(4)), gibbs.torus_energies(preset, Torus(4)))


def test_potential_round_trip(tmp_path):
    """ test writing and reading back a potential keeps every number"""
    pot = gibbs.potts_potential(3, 1.0, beta=0.123456789012345678)
    path = write_potential(pot, str(tmp_path / 'potts.pot'))
    back = read_potential(path)
    assert (back.q, back.dimension, back.beta) == (pot.q, pot.dimension, pot.beta)
    for a, b in zip(back.terms, pot.terms):
        assert a.offsets == b.offsets
        np.testing.assert_array_equal(a.table, b.table)


def test_rate_family_round_trip(tmp_path, potts_ring):
    """ test reversed rates reload bit for bit"""
    _, _, spec, _, rates = potts_ring
    rhat = dynamics.time_reversal(dynamics.mix(1.0, rates, 0.5, dynamics.make_heat_bath(spec)), spec)
    back = read_rate_family(write_rate_family(rhat, str(tmp_path / 'reversed.rates')))
    assert len(back.rules) == len(rhat.rules)
    for a, b in zip(back.rules, rhat.rules):
        assert (a.shape, a.neighborhood) == (b.shape, b.neighborhood)
        np.testing.assert_array_equal(a.table, b.table)
    assert dynamics.rate_distance(back, rhat) == 0.0


def _write(tmp_path, text):
    path = tmp_path / 'model.txt'
    path.write_text(text)
    return str(path)


def test_wrong_type(tmp_path):
    """ test a rate file is not read as a potential"""
    path = _write(tmp_path, 'NAME : x\nTYPE : RATES\nQ : 2\nDIMENSION : 1\nRULE_SECTION\nEOF\n')
    with pytest.raises(CannotResolveError) as info:
        read_potential(path)
    assert info.value.error_msg.startswith('LINE[2]')


def test_energy_count_is_checked(tmp_path):
    """ test a term with too few energies reports its line"""
    text = 'NAME : x\nTYPE : POTENTIAL\nQ : 2\nDIMENSION : 1\nTERM_SECTION\n0 ; 1 | -1 1 1\n-1\nEOF\n'
    with pytest.raises(CannotResolveError) as info:
        read_potential(_write(tmp_path, text))
    assert info.value.error_msg.startswith('LINE[6]')
    assert info.value.exit_code == 2


def test_unterminated_sections(tmp_path):
    """ test missing -1 and END_RULE lines"""
    text = 'NAME : x\nTYPE : POTENTIAL\nQ : 2\nDIMENSION : 1\nTERM_SECTION\n0 | 0 1\n'
    with pytest.raises(CannotResolveError):
        read_potential(_write(tmp_path, text))
    text = ('NAME : r\nTYPE : RATES\nQ : 2\nDIMENSION : 1\nRULE_SECTION\nRULE flip\nSHAPE 0\n'
            'NEIGHBORHOOD 0\nTABLE 2 2\n0 1\n1 0\nEOF\n')
    with pytest.raises(CannotResolveError):
        read_rate_family(_write(tmp_path, text))


def test_bad_neighborhood(tmp_path):
    """ test a neighborhood not starting with its shape is rejected"""
    text = ('NAME : r\nTYPE : RATES\nQ : 2\nDIMENSION : 1\nRULE_SECTION\nRULE flip\nSHAPE 0\n'
            'NEIGHBORHOOD 1 ; 0\nTABLE 4 2\n0 1\n1 0\n0 1\n1 0\nEND_RULE\nEOF\n')
    with pytest.raises(CannotResolveError):
        read_rate_family(_write(tmp_path, text))


def test_missing_header(tmp_path):
    """ test Q is required before the data section"""
    text = 'NAME : x\nTYPE : POTENTIAL\nDIMENSION : 1\nTERM_SECTION\n0 | 0 1\n-1\nEOF\n'
    with pytest.raises(CannotResolveError):
        read_potential(_write(tmp_path, text))
