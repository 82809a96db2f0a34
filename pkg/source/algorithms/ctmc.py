import logging

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve
from scipy.special import rel_entr, xlogy
from scipy.stats import poisson

from source.commons.errors import ContractViolation, NonUniqueStationaryError
from source.commons.utils import flow_log_pairing

"""
Finite-state engine: generators, stationary laws, relative entropy, the generator and
Phi representations of the entropy loss, and exact evolution by uniformization.

Probability vectors are plain float arrays indexed by state; measures carrying a
`probs` attribute (TorusMeasure) are accepted wherever a vector is expected.
"""
logger = logging.getLogger(__name__)

PROB_TOL = 1e-12
ROUNDOFF = np.finfo(float).eps
STATIONARITY_TOL = 1e-10


def as_prob_vector(nu, tol=PROB_TOL * 100):
    nu = np.asarray(getattr(nu, 'probs', nu), dtype=float)
    if nu.ndim != 1 or nu.min() < 0 or abs(nu.sum() - 1.0) > tol:
        raise ContractViolation('Not a probability vector (min={:.3g}, sum={:.17g})'
                                .format(nu.min(), nu.sum()))
    return nu


class SparseGenerator:
    """
    Q-matrix stored as a scipy csr matrix: off-diagonal rates >= 0 and the diagonal
    equal to minus the row sum.
    """

    def __init__(self, matrix):
        matrix = sp.csr_matrix(matrix, dtype=float)
        if matrix.shape[0] != matrix.shape[1]:
            raise ValueError('A generator is square, got shape {}'.format(matrix.shape))
        self.matrix = matrix
        self.matrix.sum_duplicates()

    @classmethod
    def from_transitions(cls, rows, cols, rates, n):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        rates = np.asarray(rates, dtype=float)
        if rates.size and rates.min() < 0:
            raise ContractViolation('Negative transition rate {:.6g}'.format(rates.min()))
        keep = (rows != cols) & (rates > 0)
        off = sp.csr_matrix((rates[keep], (rows[keep], cols[keep])), shape=(n, n))
        off.sum_duplicates()
        exits = np.asarray(off.sum(axis=1)).ravel()
        return cls(off - sp.diags(exits))

    @classmethod
    def from_dense(cls, dense):
        dense = np.array(dense, dtype=float)
        np.fill_diagonal(dense, 0.0)
        rows, cols = np.nonzero(dense)
        return cls.from_transitions(rows, cols, dense[rows, cols], dense.shape[0])

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def exit_rates(self):
        return -self.matrix.diagonal()

    @property
    def off_diagonal(self):
        off = self.matrix - sp.diags(self.matrix.diagonal())
        off.eliminate_zeros()
        return off.tocoo()

    def dense(self):
        return self.matrix.toarray()

    def apply(self, f):
        # (L f)(x)
        return self.matrix @ np.asarray(f, dtype=float)

    def adjoint_apply(self, nu):
        # (nu L)(x), the net probability flow into x
        return self.matrix.T @ np.asarray(getattr(nu, 'probs', nu), dtype=float)

    def row_sum_residual(self):
        return float(np.abs(np.asarray(self.matrix.sum(axis=1)).ravel()).max())

    def is_irreducible(self):
        count, _ = connected_components(self.off_diagonal, directed=True, connection='strong')
        return count == 1


def random_generator(n, rng, density=0.5, scale=1.0):
    """Random irreducible generator: a random cycle plus independent extra edges"""
    dense = np.where(rng.random((n, n)) < density, rng.exponential(scale, (n, n)), 0.0)
    order = rng.permutation(n)
    for a, b in zip(order, np.roll(order, -1)):
        if a != b:
            dense[a, b] += rng.exponential(scale) + 1e-3
    return SparseGenerator.from_dense(dense)


# ====================================================================
# API
# ====================================================================
def stationary(gen):
    """
    Return the unique stationary law of an irreducible generator.
    ----------
    Parameters:
        gen: SparseGenerator
    ----------
    Returns:
        mu: probability vector with mu L = 0
    """
    n = gen.n
    if n == 1:
        return np.ones(1)
    count, labels = connected_components(gen.off_diagonal, directed=True, connection='strong')
    if count != 1:
        raise NonUniqueStationaryError('Generator is reducible: {} strong components'.format(count))
    # L^T mu = 0 with the last equation replaced by normalization
    system = gen.matrix.T.tolil()
    system[n - 1, :] = np.ones(n)
    rhs = np.zeros(n)
    rhs[n - 1] = 1.0
    mu = spsolve(system.tocsc(), rhs)
    mu = np.clip(mu, 0.0, None)
    mu /= mu.sum()
    logger.debug('stationary law on %d states, residual %.3g', n, np.abs(gen.adjoint_apply(mu)).max())
    return mu


def relative_entropy(nu, mu):
    """h(nu | mu) with 0 log 0 = 0; +inf when nu charges a mu-null state"""
    nu = np.asarray(getattr(nu, 'probs', nu), dtype=float)
    mu = np.asarray(getattr(mu, 'probs', mu), dtype=float)
    return float(rel_entr(nu, mu).sum())


def phi(u):
    """
    Phi(u) = u - u log u - 1 for u > 0, and -1 otherwise; concave, non-positive,
    vanishing only at u = 1. Shared with the F_0 of the lattice functionals.
    """
    u = np.asarray(u, dtype=float)
    positive = u > 0
    out = np.where(positive, u - xlogy(u, np.where(positive, u, 1.0)) - 1.0, -1.0)
    return float(out) if out.ndim == 0 else out


F0 = phi


def entropy_loss_generator_form(nu, mu, gen):
    """sum_x (nu L)(x) log(nu(x) / mu(x)); -inf when a nu-null state receives flow"""
    nu = as_prob_vector(nu)
    mu = as_prob_vector(mu)
    if mu.min() <= 0:
        raise ContractViolation('The entropy loss needs a strictly positive reference law')
    return flow_log_pairing(gen.adjoint_apply(nu), nu, mu)


def entropy_loss_phi_form(nu, mu, gen, tol=STATIONARITY_TOL):
    """
    sum_x sum_{y != x} nu(x) L_yx (mu(y) / mu(x)) Phi((mu(x) / nu(x)) (nu(y) / mu(y)));
    the identity with the generator form needs mu stationary, which is enforced.
    """
    nu = as_prob_vector(nu)
    mu = as_prob_vector(mu)
    if mu.min() <= 0:
        raise ContractViolation('The entropy loss needs a strictly positive reference law')
    residual = float(np.abs(gen.adjoint_apply(mu)).max())
    if residual > tol * max(1.0, float(gen.exit_rates.max())):
        raise ContractViolation('Reference law is not stationary (residual {:.3g})'.format(residual))
    off = gen.off_diagonal
    y, x, rate = off.row, off.col, off.data
    nux, nuy = nu[x], nu[y]
    if np.any((nux == 0) & (nuy > 0) & (rate > 0)):
        return -np.inf
    charged = nux > 0
    arg = np.where(charged, mu[x] * nuy / np.where(charged, nux, 1.0) / mu[y], 1.0)
    terms = np.where(charged, nux * rate * mu[y] / mu[x] * phi(arg), 0.0)
    return float(terms.sum())


def evolve(nu, gen, t, tol=PROB_TOL):
    """
    nu exp(t L) by uniformization: Poisson(lambda t)-weighted powers of P = I + L / lambda,
    lambda the largest exit rate, truncated once the Poisson tail mass drops below tol.
    """
    nu = as_prob_vector(nu)
    if t < 0:
        raise ValueError('Evolution time must be non-negative, got {}'.format(t))
    lam = float(gen.exit_rates.max()) if gen.n else 0.0
    if t == 0 or lam <= 0:
        return nu.copy()
    step = (sp.identity(gen.n, format='csr') + gen.matrix / lam).T.tocsr()
    lam_t = lam * t
    k_max = int(poisson.isf(tol, lam_t)) + 1
    weights = poisson.pmf(np.arange(k_max + 1), lam_t)
    vec, out = nu.copy(), weights[0] * nu
    for k in range(1, k_max + 1):
        vec = step @ vec
        out += weights[k] * vec
    # the truncated tail mass is spread proportionally
    clipped = float(-out[out < 0].sum())
    out = np.clip(out, 0.0, None)
    missing = 1.0 - float(out.sum())
    if clipped + abs(missing) > ROUNDOFF * gen.n:
        logger.debug('uniformization: clipped %.3g negative mass, renormalized %.3g missing mass',
                     clipped, missing)
    out /= out.sum()
    logger.debug('uniformization: lambda=%.6g t=%.6g, %d terms', lam, t, k_max + 1)
    return out


def entropy_trajectory(nu, mu, gen, times):
    """Rows (t, h, g_generator_form, g_phi_form) along the exact trajectory"""
    rows, current, last = [], as_prob_vector(nu), 0.0
    for t in sorted(float(t) for t in times):
        current = evolve(current, gen, t - last)
        last = t
        rows.append({'t': t,
                     'h': relative_entropy(current, mu),
                     'g_generator_form': entropy_loss_generator_form(current, mu, gen),
                     'g_phi_form': entropy_loss_phi_form(current, mu, gen)})
    return rows
