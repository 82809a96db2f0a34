import logging

import numpy as np

from source.commons import model_loader as loader
from source.commons.errors import ConfigError, DegenerateInputError
from source.commons.lattice import Torus
from . import dynamics, gibbs
from .measures import ProductMarginals, TorusMeasure, TransferMarginals
from .montecarlo import InitialLaw

logger = logging.getLogger(__name__)


class BaseExperiment:
    """The model of a config, loaded once; derived objects are built on first use"""

    def __init__(self, config):
        self.config = config
        self.potential, self.torus = self.load_model(config)
        self.q = self.potential.q
        self._spec = self._rates = self._mu = None

    @staticmethod
    def load_model(config):
        model = config.model
        if 'potential' in model:
            pot = loader.read_potential(config.path(model['potential']))
        else:
            preset, q, d = model['preset'], model.get('q'), len(model['torus'])
            if preset == 'zero':
                pot = gibbs.zero_potential(q or 2, d)
            elif preset == 'ising':
                pot = gibbs.ising_potential(model.get('coupling', 1.0), model.get('field', 0.0), d=d)
            elif preset == 'potts':
                pot = gibbs.potts_potential(q or 3, model.get('coupling', 1.0), d=d)
            else:
                pot = gibbs.field_potential(model.get('field', 1.0), q=q or 2, d=d)
        if 'beta' in model:
            pot = pot.with_beta(model['beta'])
        if 'q' in model and model['q'] != pot.q:
            raise ConfigError('model.q: {} does not match the potential (q={})'.format(model['q'], pot.q))
        torus = Torus(model['torus'])
        if torus.dimension != pot.dimension:
            raise ConfigError('model.torus: dimension {} does not match the potential (d={})'
                              .format(torus.dimension, pot.dimension))
        logger.info('model %s: q=%d, beta=%g on %r', pot.name, pot.q, pot.beta, torus)
        return pot, torus

    @property
    def mode(self):
        return self.config.model.get('mode', 'torus')

    @property
    def spec(self):
        if self._spec is None:
            self._spec = gibbs.build_specification(self.potential, self.torus)
        return self._spec

    @property
    def rates(self):
        if self._rates is None:
            family = None
            for entry in self.config.dynamics:
                weight = entry.get('weight', 1.0)
                if entry['family'] == 'heat_bath':
                    part = dynamics.make_heat_bath(self.spec)
                elif entry['family'] == 'cyclic':
                    part = dynamics.make_cyclic(self.spec, entry.get('kappa', 1.0))
                else:
                    part = loader.read_rate_family(self.config.path(entry['path']))
                if weight == 0:
                    continue
                family = part.scaled(weight) if family is None else dynamics.mix(1.0, family, weight, part)
            if family is None:
                raise DegenerateInputError('Every dynamics weight is zero')
            self._rates = family
        return self._rates

    @property
    def mu(self):
        """Reference Gibbs measure: exact on the torus, or transfer-matrix marginals"""
        if self._mu is None:
            if self.mode == 'transfer':
                self._mu = TransferMarginals(self.potential, self.torus)
            else:
                self._mu = gibbs.exact_gibbs(self.potential, self.torus)
        return self._mu

    def marginal_source(self, law):
        """Exact marginal source of an initial-law descriptor"""
        law = law or {'kind': 'uniform'}
        kind = law.get('kind', 'uniform')
        if kind == 'uniform':
            return ProductMarginals(np.full(self.q, 1.0 / self.q))
        if kind == 'product':
            return ProductMarginals(law['single_site'])
        if kind == 'point':
            probs = np.zeros(self.q ** self.torus.size)
            probs[int(np.asarray(law['spins']) @ self.q ** np.arange(self.torus.size))] = 1.0
            return TorusMeasure(self.torus, self.q, probs)
        if kind == 'transfer':
            return TransferMarginals(self.potential.with_beta(law['beta']), self.torus)
        return gibbs.exact_gibbs(self.potential.with_beta(law['beta']), self.torus)

    def torus_law(self, law):
        """Full probability vector of an initial law on the torus"""
        source = self.marginal_source(law)
        if isinstance(source, TorusMeasure):
            return source
        return TorusMeasure(self.torus, self.q, source.marginal(tuple(range(self.torus.size))))

    def initial_law(self, law):
        """Sampler descriptor of an initial law"""
        law = law or {'kind': 'uniform'}
        kind = law.get('kind', 'uniform')
        if kind in ('uniform', 'product', 'point'):
            return InitialLaw(kind, tuple(law.get('spins', ())), tuple(law.get('single_site', ())))
        return InitialLaw('exact', measure=self.torus_law(law))
