import logging
from functools import reduce

import numpy as np

from source.commons.errors import CapacityError, ContractViolation
from source.commons.lattice import MAX_ENUMERATION, Window, decode_config, radix_weights

"""
Window-marginal sources: every measure the entropy functionals integrate against
answers `marginal(window)` with a flat array over the window's configurations in
little-endian order (first window site least significant).

    TorusMeasure       full probability vector over a finite torus (exact)
    ProductMarginals   i.i.d. single-site law (exact)
    TransferMarginals  d=1 nearest-neighbor infinite-volume Gibbs measure (exact)
    EmpiricalMarginal  Monte Carlo counts on one window (not exact)
"""
logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-10


def flatten_window_axes(joint):
    """
    `joint` has one axis per window position (axis i <-> position i); return the flat
    little-endian array. C-order flattening makes the last axis least significant.
    """
    if joint.ndim == 0:
        return joint.reshape(1)
    return np.ascontiguousarray(np.transpose(joint, list(range(joint.ndim))[::-1])).reshape(-1)


def window_axes(flat, q, k):
    """Inverse of flatten_window_axes: axis i <-> window position i"""
    if k == 0:
        return flat.reshape(())
    return np.transpose(flat.reshape((q,) * k), list(range(k))[::-1])


class MarginalSource:
    provenance = 'abstract'
    exact = True

    def __init__(self, q):
        self.q = int(q)

    def marginal(self, window):
        raise NotImplementedError

    def nonnull_delta(self):
        raise NotImplementedError

    def probability(self, window, spins):
        # nu(eta_window) of one partial configuration
        window = Window(window)
        if not len(window):
            return 1.0
        return float(self.marginal(window)[int(np.dot(spins, radix_weights(self.q, len(window))))])


def _sub_marginal(joint_axes, positions):
    """Marginalize an axis-per-position array onto the given positions, in that order"""
    k = joint_axes.ndim
    drop = tuple(a for a in range(k) if a not in set(positions))
    summed = joint_axes.sum(axis=drop) if drop else joint_axes
    remaining = sorted(positions)
    return np.transpose(summed, [remaining.index(p) for p in positions])


# ====================================================================
# Torus (exact)
# ====================================================================
class TorusMeasure(MarginalSource):
    provenance = 'torus-exact'

    def __init__(self, torus, q, probs):
        super().__init__(q)
        probs = np.array(probs, dtype=float)
        if probs.shape != (q ** torus.size,):
            raise ValueError('Probability vector of length {} does not match {}^{}'
                             .format(probs.size, q, torus.size))
        if probs.min() < 0 or abs(probs.sum() - 1.0) > NORMALIZATION_TOL:
            raise ContractViolation('Not a probability vector (min={:.3g}, sum={:.17g})'
                                    .format(probs.min(), probs.sum()))
        self.torus = torus
        self.probs = probs
        self.probs.setflags(write=False)
        self._cache = {}

    @property
    def positive(self):
        return bool(self.probs.min() > 0)

    def marginal(self, window):
        window = Window(window)
        if not len(window):
            return np.ones(1)
        if window not in self._cache:
            full = window_axes(self.probs, self.q, self.torus.size)
            self._cache[window] = flatten_window_axes(_sub_marginal(full, list(window)))
        return self._cache[window]

    def nonnull_delta(self):
        # min over sites and configurations of the full single-site conditional
        delta = 1.0
        p = window_axes(self.probs, self.q, self.torus.size)
        for axis in range(self.torus.size):
            total = p.sum(axis=axis, keepdims=True)
            with np.errstate(invalid='ignore', divide='ignore'):
                cond = np.where(total > 0, p / total, 1.0)
            delta = min(delta, float(cond.min()))
        return delta

    def sample(self, size, rng):
        """Exact draws by inversion of the cumulative table; rows are configurations"""
        cdf = np.cumsum(self.probs)
        idx = np.searchsorted(cdf, rng.random(size) * cdf[-1], side='right')
        idx = np.minimum(idx, self.probs.size - 1)
        rows = [decode_config(int(k), self.q, self.torus.size) for k in idx]
        return np.array(rows, dtype=np.int64).reshape(size, self.torus.size)


# ====================================================================
# Product
# ====================================================================
class ProductMarginals(MarginalSource):
    provenance = 'product'

    def __init__(self, single_site):
        single_site = np.asarray(single_site, dtype=float)
        super().__init__(single_site.size)
        if single_site.min() < 0 or abs(single_site.sum() - 1.0) > NORMALIZATION_TOL:
            raise ContractViolation('Single-site law {} is not a probability vector'.format(single_site))
        self.single_site = single_site

    def marginal(self, window):
        window = Window(window)
        if not len(window):
            return np.ones(1)
        if self.q ** len(window) > MAX_ENUMERATION:
            raise CapacityError('Window of {} sites is too large to enumerate'.format(len(window)))
        # the last kron factor is the least significant digit
        return reduce(np.kron, [self.single_site] * len(window))

    def nonnull_delta(self):
        return float(self.single_site.min())

    def on_torus(self, torus):
        return TorusMeasure(torus, self.q, self.marginal(Window(range(torus.size))))


# ====================================================================
# Transfer matrix (d=1, nearest neighbor, infinite volume)
# ====================================================================
class TransferMarginals(MarginalSource):
    """
    Infinite-volume Gibbs marginals of a one-dimensional nearest-neighbor potential.
    Sites are integer positions on Z; with a torus attached, torus sites are read
    through their coordinate, without wrap.
    """
    provenance = 'transfer'

    def __init__(self, potential, torus=None):
        super().__init__(potential.q)
        if potential.dimension != 1:
            raise ValueError('Transfer-matrix marginals need d=1, got d={}'.format(potential.dimension))
        if potential.q > 8:
            raise CapacityError('Transfer-matrix marginals support q <= 8')
        self.potential = potential
        self.torus = torus
        self.stationary, self.transition, self.eigenvalue = transfer_chain(potential)
        self._powers = {}
        self._cache = {}

    def _power(self, gap):
        if gap not in self._powers:
            self._powers[gap] = np.linalg.matrix_power(self.transition, gap)
        return self._powers[gap]

    def _position(self, site):
        return int(self.torus.coordinates[site][0]) if self.torus is not None else int(site)

    def marginal(self, window):
        window = Window(window)
        k = len(window)
        if not k:
            return np.ones(1)
        if window in self._cache:
            return self._cache[window]
        if k > 20 or self.q ** k > MAX_ENUMERATION:
            raise CapacityError('Transfer marginal window of {} sites is too large'.format(k))
        positions = [self._position(s) for s in window]
        if len(set(positions)) != k:
            raise ValueError('Window sites must have distinct positions on the line')
        ordered = sorted(range(k), key=lambda i: positions[i])
        joint = self.stationary.copy()
        for a, b in zip(ordered, ordered[1:]):
            joint = joint[..., None] * self._power(positions[b] - positions[a])
        # joint axis j belongs to window position ordered[j]
        joint = np.transpose(joint, [ordered.index(i) for i in range(k)])
        result = flatten_window_axes(joint)
        if len(self._cache) < 4096:
            self._cache[window] = result
        return result

    def nonnull_delta(self):
        # three consecutive sites carry the full single-site conditional of a Markov chain
        p = self.stationary[:, None, None] * self.transition[:, :, None] * self.transition[None, :, :]
        return float((p / p.sum(axis=1, keepdims=True)).min())


def transfer_chain(potential):
    """
    Markov-chain form of the transfer matrix
        T_ab = exp(-beta (phi1(a)/2 + phi2(a, b) + phi1(b)/2))
    ----------
    Returns:
        stationary: l_a r_a / <l, r> from the Perron eigenvectors
        transition: T_ab r_b / (lambda r_a)
        eigenvalue: Perron root of the shifted matrix
    """
    q = potential.q
    single, pair = np.zeros(q), np.zeros((q, q))
    for term in potential.terms:
        offs = [o[0] for o in term.offsets]
        if len(offs) == 1:
            single += term.table
        elif len(offs) == 2 and abs(offs[0] - offs[1]) == 1:
            # table index s_first + q * s_second
            tab = term.table.reshape(q, q).T
            pair += tab if offs[1] > offs[0] else tab.T
        else:
            raise ValueError('Transfer-matrix marginals need nearest-neighbor terms, got shape {}'
                             .format(term.offsets))
    log_t = -potential.beta * (single[:, None] / 2 + pair + single[None, :] / 2)
    t = np.exp(log_t - log_t.max())
    values, right = np.linalg.eig(t)
    lead = int(np.argmax(values.real))
    lam = float(values[lead].real)
    r = np.abs(right[:, lead].real)
    values_l, left = np.linalg.eig(t.T)
    l_vec = np.abs(left[:, int(np.argmax(values_l.real))].real)
    if lam <= 0 or r.min() <= 0 or l_vec.min() <= 0:
        raise ArithmeticError('Degenerate transfer matrix (leading eigenvalue {})'.format(lam))
    stationary = l_vec * r
    stationary /= stationary.sum()
    transition = t * r[None, :] / (lam * r[:, None])
    transition /= transition.sum(axis=1, keepdims=True)
    return stationary, transition, lam


# ====================================================================
# Empirical
# ====================================================================
class EmpiricalMarginal(MarginalSource):
    provenance = 'empirical'
    exact = False

    def __init__(self, window, counts, q, replicas):
        super().__init__(q)
        self.window = Window(window)
        self.counts = np.asarray(counts, dtype=np.int64)
        if self.counts.shape != (q ** len(self.window),):
            raise ValueError('Counts do not match window {} with q={}'.format(self.window, q))
        self.replicas = int(replicas)
        # samples exceed replicas when torus translates are pooled
        self.samples = int(self.counts.sum())

    @property
    def frequencies(self):
        return self.counts / max(self.samples, 1)

    def counts_on(self, window):
        # integer counts marginalized onto a sub-window
        window = Window(window)
        if not window.issubset(self.window):
            raise ValueError('Window {} is not inside the sampled window {}'.format(window, self.window))
        if not len(window):
            return np.array([self.samples], dtype=np.int64)
        joint = window_axes(self.counts, self.q, len(self.window))
        return flatten_window_axes(_sub_marginal(joint, list(self.window.positions(window))))

    def marginal(self, window):
        return self.counts_on(window) / max(self.samples, 1)

    def nonnull_delta(self):
        raise ContractViolation('Empirical marginals do not define a non-nullness constant')
