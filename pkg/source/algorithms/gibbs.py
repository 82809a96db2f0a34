import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax

from source.commons.errors import CapacityError, GeometryError, ZeroMarginalError
from source.commons.lattice import MAX_ENUMERATION, Window, digit_table, radix_weights
from .measures import TorusMeasure, TransferMarginals

"""
Potentials, specifications and exact Gibbs measures.

Energy convention: H(eta) = sum over torus translations x of sum over terms B of
Phi_B(eta_{B+x}); mu(eta) is proportional to exp(-beta H(eta)). Tables are flat arrays
over the configurations of a term's offsets, first offset least significant.

Ising presets use sigma(s) = 1 - 2s, so spin 0 is "+1".
"""
logger = logging.getLogger(__name__)

MAX_ATOMS = 2 ** 20
CHUNK = 2 ** 18


@dataclass(frozen=True, eq=False)
class Term:
    offsets: tuple
    table: np.ndarray

    @property
    def size(self):
        return len(self.offsets)


@dataclass(frozen=True, eq=False)
class Potential:
    q: int
    dimension: int
    beta: float
    terms: tuple = ()
    name: str = field(default='potential')

    def __post_init__(self):
        if self.q < 2:
            raise ValueError('A potential needs q >= 2 local states, got {}'.format(self.q))
        origin = (0,) * self.dimension
        for term in self.terms:
            if any(len(o) != self.dimension for o in term.offsets):
                raise ValueError('Term offsets {} do not match d={}'.format(term.offsets, self.dimension))
            if origin not in term.offsets or len(set(term.offsets)) != len(term.offsets):
                raise ValueError('Term shape {} must contain the origin exactly once'.format(term.offsets))
            if np.asarray(term.table).shape != (self.q ** term.size,):
                raise ValueError('Term table for {} needs {} entries'.format(term.offsets, self.q ** term.size))

    @property
    def range(self):
        # largest sup-norm diameter of a shape
        diam = 0
        for term in self.terms:
            offs = np.asarray(term.offsets)
            diam = max(diam, int(np.abs(offs[:, None, :] - offs[None, :, :]).max()))
        return diam

    def with_beta(self, beta):
        return Potential(self.q, self.dimension, float(beta), self.terms, self.name)


# ------------ Presets ------------ #
def zero_potential(q=2, d=1):
    return Potential(q, d, 0.0, (), 'zero')


def ising_potential(coupling=1.0, field=0.0, beta=1.0, d=1):
    sigma = np.array([1.0, -1.0])
    terms = []
    origin = (0,) * d
    for axis in range(d):
        unit = tuple(1 if k == axis else 0 for k in range(d))
        # index s0 + 2 s1
        table = -coupling * np.array([sigma[s0] * sigma[s1] for s1 in range(2) for s0 in range(2)])
        terms.append(Term((origin, unit), table))
    if field:
        terms.append(Term((origin,), -field * sigma))
    return Potential(2, d, float(beta), tuple(terms), 'ising')


def potts_potential(q=3, coupling=1.0, beta=1.0, d=1):
    terms = []
    origin = (0,) * d
    for axis in range(d):
        unit = tuple(1 if k == axis else 0 for k in range(d))
        table = -coupling * np.array([float(s0 == s1) for s1 in range(q) for s0 in range(q)])
        terms.append(Term((origin, unit), table))
    return Potential(q, d, float(beta), tuple(terms), 'potts')


def field_potential(field=1.0, beta=1.0, q=2, d=1):
    sigma = 1.0 - 2.0 * np.arange(q) / max(q - 1, 1)
    return Potential(q, d, float(beta), (Term(((0,) * d,), -field * sigma),), 'field')


# ====================================================================
# Specification
# ====================================================================
class Specification:
    """
    gamma_Delta(xi | eta_{Delta^c}) of a finite-range potential.

    `kernel(window)` works on torus windows and sees the torus (exact torus conditionals);
    `local_kernel(offsets)` works on Z^d-relative windows and is what rate builders use.
    Both return (boundary, table) with table[b, xi] over boundary / window configurations.
    """

    def __init__(self, potential, torus):
        self.potential = potential
        self.torus = torus
        self.q = potential.q
        self._kernels = {}
        self._local = {}
        origin = ((0,) * potential.dimension,)
        self.delta = float(self.local_kernel(origin)[1].min())

    def _energy_table(self, window, add, sub):
        q, touched = self.q, {}
        for t, term in enumerate(self.potential.terms):
            for w in window:
                for b in term.offsets:
                    anchor = sub(w, b)
                    touched[(t, anchor)] = tuple(add(anchor, o) for o in term.offsets)
        inside = set(window)
        boundary = tuple(sorted({s for sites in touched.values() for s in sites if s not in inside}))
        pos = {s: i for i, s in enumerate(tuple(window) + boundary)}
        n = len(pos)
        if q ** n > MAX_ENUMERATION:
            raise CapacityError('Kernel on {} sites is too large to enumerate'.format(n))
        digits = digit_table(q, n)
        energy = np.zeros(q ** n)
        for (t, _), sites in touched.items():
            cols = [pos[s] for s in sites]
            energy += self.potential.terms[t].table[digits[:, cols] @ radix_weights(q, len(cols))]
        # window digits are the least significant
        energy = energy.reshape(q ** len(boundary), q ** len(window))
        return boundary, softmax(-self.potential.beta * energy, axis=1)

    def local_kernel(self, offsets):
        offsets = tuple(tuple(int(c) for c in o) for o in offsets)
        if offsets not in self._local:
            self._local[offsets] = self._energy_table(
                offsets,
                lambda a, b: tuple(x + y for x, y in zip(a, b)),
                lambda a, b: tuple(x - y for x, y in zip(a, b)))
        return self._local[offsets]

    def kernel(self, window):
        window = Window(window)
        if window not in self._kernels:
            torus = self.torus
            self._kernels[window] = self._energy_table(
                window,
                lambda a, b: torus.shift(a, b),
                lambda a, b: torus.shift(a, tuple(-c for c in b)))
        return self._kernels[window]

    def conditional(self, window, spins):
        """gamma_window(. | spins outside), a vector over the window configurations"""
        boundary, table = self.kernel(window)
        b = np.asarray(spins)[list(boundary)] if boundary else np.zeros(0, dtype=np.int64)
        return table[int(np.dot(b, radix_weights(self.q, len(boundary))))]


def build_specification(pot, geom):
    """
    Return the specification of a finite-range potential on a torus.
    ----------
    Parameters:
        pot: Potential
        geom: Torus; every side must exceed twice the interaction range
    ----------
    Returns:
        spec: Specification, spec.delta the single-site non-nullness constant
    """
    if pot.dimension != geom.dimension:
        raise GeometryError('Potential has d={} but torus has d={}'.format(pot.dimension, geom.dimension))
    if any(2 * pot.range >= side for side in geom.sides):
        raise GeometryError('Interaction range {} is not below half the torus side {}'
                            .format(pot.range, geom.sides))
    spec = Specification(pot, geom)
    logger.debug('specification %s on %r: delta=%.6g', pot.name, geom, spec.delta)
    return spec


def nonnull_delta(spec):
    return spec.delta


# ====================================================================
# Exact measures
# ====================================================================
def _check_enumerable(q, n, limit=MAX_ENUMERATION):
    if q ** n > limit:
        raise CapacityError('State space {}^{} exceeds the enumeration guard {}'.format(q, n, limit))


def torus_energies(pot, geom):
    q, n = pot.q, geom.size
    _check_enumerable(q, n)
    translated = [(term, [geom.shift(x, o) for o in term.offsets]) for term in pot.terms for x in range(n)]
    weights = radix_weights(q, n)
    energy = np.zeros(q ** n)
    for start in range(0, q ** n, CHUNK):
        idx = np.arange(start, min(start + CHUNK, q ** n), dtype=np.int64)
        digits = (idx[:, None] // weights[None, :]) % q
        for term, sites in translated:
            energy[start:start + idx.size] += term.table[digits[:, sites] @ radix_weights(q, len(sites))]
    return energy


def exact_gibbs(pot, geom):
    """Torus Boltzmann measure; no range guard, so tiny tori count wrapped bonds twice"""
    log_w = -pot.beta * torus_energies(pot, geom)
    probs = np.exp(log_w - log_w.max())
    probs /= probs.sum()
    logger.info('exact Gibbs measure of %s on %r: %d states', pot.name, geom, probs.size)
    return TorusMeasure(geom, pot.q, probs)


def transfer_marginal_1d(pot, w):
    """Infinite-volume marginal on integer positions w (d=1, nearest neighbor)"""
    return TransferMarginals(pot).marginal(Window(w))


def _full_digits(mu):
    q, n = mu.q, mu.torus.size
    _check_enumerable(q, n, MAX_ATOMS)
    return digit_table(q, n)


def _window_index(digits, window, q):
    window = list(window)
    if not window:
        return np.zeros(len(digits), dtype=np.int64)
    return digits[:, window] @ radix_weights(q, len(window))


# ====================================================================
# Residuals
# ====================================================================
def dlr_residual(mu, spec, delta_w):
    """max over eta of |mu(eta_Delta | eta_{Delta^c}) - gamma_Delta(eta_Delta | eta_{Delta^c})|"""
    delta_w = Window(delta_w)
    if not len(delta_w):
        return 0.0
    q = mu.q
    digits = _full_digits(mu)
    outside = Window(range(mu.torus.size)).minus(delta_w)
    out_idx = _window_index(digits, outside, q)
    out_marg = mu.marginal(outside)[out_idx]
    if out_marg.min() <= 0:
        bad = int(np.argmin(out_marg))
        raise ZeroMarginalError(outside, digits[bad, list(outside)])
    conditional = mu.probs / out_marg
    boundary, table = spec.kernel(delta_w)
    gamma = table[_window_index(digits, boundary, q), _window_index(digits, delta_w, q)]
    return float(np.abs(conditional - gamma).max())


def normalization_residual(spec, delta_w):
    _, table = spec.kernel(delta_w)
    return float(np.abs(table.sum(axis=1) - 1.0).max())


def consistency_residual(spec, delta_w, lam):
    """
    max |gamma_Lambda(gamma_Delta(a_Delta | .) 1_{a_{Lambda \\ Delta}} | eta) - gamma_Lambda(a | eta)|
    over atoms a of Lambda and boundary conditions eta, for Delta inside Lambda
    """
    delta_w, lam = Window(delta_w), Window(lam)
    if not delta_w.issubset(lam):
        raise ValueError('Consistency needs Delta inside Lambda')
    q = spec.q
    lam_boundary, lam_table = spec.kernel(lam)
    delta_boundary, delta_table = spec.kernel(delta_w)
    sites = lam.union(lam_boundary)
    if not Window(delta_boundary).issubset(sites):
        raise ValueError('Boundary of Delta leaves Lambda and its boundary')
    _check_enumerable(q, len(sites), MAX_ATOMS)
    digits = digit_table(q, len(sites))
    pos = sites.positions
    g_lam = lam_table[_window_index(digits, pos(lam_boundary), q), _window_index(digits, pos(lam), q)]
    g_delta = delta_table[_window_index(digits, pos(delta_boundary), q), _window_index(digits, pos(delta_w), q)]
    # gamma_Lambda marginal on Lambda \ Delta given the boundary
    rest = lam.minus(delta_w)
    key = _window_index(digits, pos(rest), q) + q ** len(rest) * _window_index(digits, pos(lam_boundary), q)
    marg = np.bincount(key, weights=g_lam, minlength=q ** (len(rest) + len(lam_boundary)))
    # each (rest, boundary) pattern is hit once per Delta configuration
    lhs = g_delta * marg[key]
    return float(np.abs(lhs - g_lam).max())


def log_ratio_bound_check(mu, delta_w, lam):
    """
    Verify |log(mu(xi_Delta eta_{Lambda \\ Delta}) / mu(eta_Lambda))| <= |Delta| log(1/delta)
    ----------
    Returns:
        BoundCheck with the maximal attained left-hand side and the bound
    """
    delta_w, lam = Window(delta_w), Window(lam)
    if not delta_w.issubset(lam):
        raise ValueError('The log-ratio bound needs Delta inside Lambda')
    delta = mu.nonnull_delta()
    bound = len(delta_w) * np.log(1.0 / delta) if delta > 0 else np.inf
    if not len(delta_w):
        return BoundCheck(True, 0.0, 0.0)
    q = mu.q
    marg = mu.marginal(lam)
    digits = digit_table(q, len(lam))
    pos = lam.positions(delta_w)
    w = radix_weights(q, len(lam))[pos]
    base = np.arange(q ** len(lam)) - digits[:, pos] @ w
    worst = 0.0
    for xi in digit_table(q, len(delta_w)):
        ratio = marg[base + xi @ w] / marg
        worst = max(worst, float(np.abs(np.log(ratio)).max()))
    return BoundCheck(bool(worst <= bound * (1 + 1e-12) + 1e-12), worst, float(bound))


@dataclass(frozen=True)
class BoundCheck:
    holds: bool
    value: float
    bound: float


def pushforward_density_residual(mu, spec, delta_w, xi):
    """
    Residual of the density of mu under G_xi: eta -> xi_Delta eta_{Delta^c}, i.e.
    |mu(G_xi^{-1}(eta)) - 1_{[xi]}(eta) mu(eta) / gamma_Delta(xi | eta)| over atoms eta
    (sum over zeta_Delta of gamma(zeta | .) is one).
    """
    delta_w = Window(delta_w)
    q = mu.q
    digits = _full_digits(mu)
    if not len(delta_w):
        return 0.0
    xi = np.asarray(xi, dtype=np.int64)
    d_idx = _window_index(digits, delta_w, q)
    target = int(xi @ radix_weights(q, len(delta_w)))
    outside = Window(range(mu.torus.size)).minus(delta_w)
    on_xi = d_idx == target
    lhs = np.where(on_xi, mu.marginal(outside)[_window_index(digits, outside, q)], 0.0)
    boundary, table = spec.kernel(delta_w)
    gamma_xi = table[_window_index(digits, boundary, q), target]
    rhs = np.where(on_xi, mu.probs / gamma_xi, 0.0)
    return float(np.abs(lhs - rhs).max())


def beta_mixing_bound(mu, lam, n, center=None):
    """
    (1/2) sum_{a, b} |mu(a and b) - mu(a) mu(b)| over atoms a of F_Lambda and b of the
    sigma-field outside the box Delta_n around `center` (default: torus center);
    an upper bound for the strong-mixing coefficient alpha_mu(Lambda, n).
    """
    lam = Window(lam)
    torus, q = mu.torus, mu.q
    center = torus.center if center is None else center
    if any(2 * n + 1 > side for side in torus.sides):
        return 0.0
    outer = Window(range(torus.size)).minus(torus.box(n, center))
    if not len(outer) or not len(lam):
        return 0.0
    if q ** (len(lam) + len(outer)) > MAX_ATOMS:
        raise CapacityError('Atom count {}^{} exceeds {}'.format(q, len(lam) + len(outer), MAX_ATOMS))
    union = lam.union(outer)
    joint_w = mu.marginal(union)
    digits = digit_table(q, len(union))
    a_idx = _window_index(digits, union.positions(lam), q)
    b_idx = _window_index(digits, union.positions(outer), q)
    joint = np.zeros((q ** len(lam), q ** len(outer)))
    np.add.at(joint, (a_idx, b_idx), joint_w)
    prod = np.outer(joint.sum(axis=1), joint.sum(axis=0))
    return 0.5 * float(np.abs(joint - prod).sum())


def exact_sample(mu, size, rng):
    """i.i.d. configurations from a torus measure, one row each"""
    if not hasattr(mu, 'sample'):
        raise ValueError('Exact sampling needs a torus measure, got {}'.format(type(mu).__name__))
    return mu.sample(size, rng)
