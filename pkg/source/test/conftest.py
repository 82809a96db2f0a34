import os.path as osp
import sys

import numpy as np
import pytest

# enable to import the package and the ips script from the repository root
ROOT = osp.dirname(osp.dirname(osp.dirname(osp.abspath(__file__))))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from source.algorithms import dynamics, gibbs
from source.commons.lattice import Torus

DATA_DIR = osp.join(ROOT, 'data')


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


@pytest.fixture
def ising_ring():
    """Ising K=0.3 on a ring of 6 sites, with its exact Gibbs measure and heat-bath rates"""
    pot = gibbs.ising_potential(1.0, 0.0, beta=0.3)
    torus = Torus(6)
    spec = gibbs.build_specification(pot, torus)
    return pot, torus, spec, gibbs.exact_gibbs(pot, torus), dynamics.make_heat_bath(spec)


@pytest.fixture
def potts_ring():
    """Three-state Potts K=0.5 on a ring of 5 sites, with cyclic rates"""
    pot = gibbs.potts_potential(3, 1.0, beta=0.5)
    torus = Torus(5)
    spec = gibbs.build_specification(pot, torus)
    return pot, torus, spec, gibbs.exact_gibbs(pot, torus), dynamics.make_cyclic(spec, 1.0)


@pytest.fixture
def data_dir():
    return DATA_DIR
