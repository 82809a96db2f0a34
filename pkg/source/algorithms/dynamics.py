import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import expm_multiply

from source.commons.errors import CapacityError, ContractViolation, DegenerateInputError, GeometryError
from source.commons.lattice import Window, digit_table, radix_weights
from .ctmc import SparseGenerator, stationary
from .gibbs import BoundCheck

"""
Local rate families and everything built on them: generator assembly on tori,
time reversal with respect to a specification, condition reports and the
switching / oscillation / detailed-balance verifiers.

An update rule is stored per translation class: a shape (offsets containing the origin),
a dependence neighborhood listing the shape offsets first, and a table
    table[row, col] = c_Delta(eta, xi_Delta)
with `row` the little-endian index of eta on the neighborhood and `col` the index of
xi on the shape. Entries with xi = eta_Delta are kept at zero (no transition).
"""
logger = logging.getLogger(__name__)

MAX_STATES = 2 ** 20
CHUNK = 2 ** 16


@dataclass(frozen=True, eq=False)
class UpdateRule:
    q: int
    shape: tuple
    neighborhood: tuple
    table: np.ndarray
    name: str = 'rule'

    def __post_init__(self):
        k = len(self.shape)
        if tuple(self.neighborhood[:k]) != tuple(self.shape):
            raise ValueError('Neighborhood must list the shape offsets first')
        if len(set(self.neighborhood)) != len(self.neighborhood):
            raise ValueError('Neighborhood offsets must be distinct')
        if not any(all(c == 0 for c in o) for o in self.shape):
            raise ValueError('Shape {} must contain the origin'.format(self.shape))

    def rate(self, nbhd_spins, xi_spins):
        q = self.q
        row = int(np.dot(nbhd_spins, radix_weights(q, len(self.neighborhood))))
        col = int(np.dot(xi_spins, radix_weights(q, len(self.shape))))
        return float(self.table[row, col])


def noop_mask(q, shape_size, nbhd_size):
    # True where xi equals the current spins on the shape
    rows = np.arange(q ** nbhd_size) % (q ** shape_size)
    return rows[:, None] == np.arange(q ** shape_size)[None, :]


def make_rule(q, shape, neighborhood, table, name='rule'):
    shape = tuple(tuple(int(c) for c in o) for o in shape)
    neighborhood = tuple(tuple(int(c) for c in o) for o in neighborhood)
    table = np.array(table, dtype=float).reshape(q ** len(neighborhood), q ** len(shape))
    table[noop_mask(q, len(shape), len(neighborhood))] = 0.0
    table.setflags(write=False)
    return UpdateRule(int(q), shape, neighborhood, table, name)


@dataclass(frozen=True)
class Placement:
    rule: int
    anchor: int
    sites: np.ndarray
    shape_sites: tuple


@dataclass(eq=False)
class RateFamily:
    q: int
    dimension: int
    rules: tuple
    name: str = 'rates'
    _placements: dict = field(default_factory=dict, repr=False)

    @property
    def R(self):
        return max((len(r.shape) for r in self.rules), default=0)

    @property
    def kappa(self):
        positive = [float(r.table[r.table > 0].min()) for r in self.rules if (r.table > 0).any()]
        return min(positive) if positive else np.inf

    @property
    def sup_rate(self):
        return max((float(r.table.max()) for r in self.rules), default=0.0)

    @property
    def range(self):
        offs = [o for r in self.rules for o in r.neighborhood]
        return int(np.abs(np.asarray(offs)).max()) if offs else 0

    def shapes(self):
        return sorted({r.shape for r in self.rules})

    def placements(self, torus):
        """Every rule translate on the torus; sites list the translated neighborhood"""
        if torus.sides not in self._placements:
            out = []
            for k, rule in enumerate(self.rules):
                for x in range(torus.size):
                    sites = np.array([torus.shift(x, o) for o in rule.neighborhood], dtype=np.int64)
                    if len(set(sites.tolist())) != len(sites):
                        raise GeometryError('Rule neighborhood wraps onto itself on {!r}'.format(torus))
                    out.append(Placement(k, x, sites, tuple(sites[:len(rule.shape)].tolist())))
            self._placements[torus.sides] = out
        return self._placements[torus.sides]

    def gradient_norms(self, k):
        """
        norms[p, i, xi] = sup_eta |c(eta^{z,i}, xi) - c(eta, xi)| for z the neighborhood
        offset at position p
        """
        rule, q = self.rules[k], self.q
        n = len(rule.neighborhood)
        digits = digit_table(q, n)
        rows = np.arange(q ** n)
        norms = np.zeros((n, q, rule.table.shape[1]))
        for p in range(n):
            for i in range(q):
                moved = rows + (i - digits[:, p]) * q ** p
                norms[p, i] = np.abs(rule.table[moved] - rule.table).max(axis=0)
        return norms

    def l1_sum(self):
        # total rate at a site: sum over rules containing it of sum_xi sup_eta c
        return float(sum(len(r.shape) * r.table.max(axis=0).sum() for r in self.rules))

    def l2_sum(self):
        # total influence of a single coordinate, oscillation form
        total = 0.0
        for k, rule in enumerate(self.rules):
            norms = self.gradient_norms(k).max(axis=1)
            for s in rule.shape:
                total += sum(norms[p].sum() for p, z in enumerate(rule.neighborhood) if z != s)
        return float(total)

    def influence_sum(self):
        # sum_{z != y} sum_{Delta containing y} sum_xi sum_i ||grad^i_z c_Delta||
        total = 0.0
        for k, rule in enumerate(self.rules):
            norms = self.gradient_norms(k).sum(axis=(1, 2))
            for s in rule.shape:
                total += sum(norms[p] for p, z in enumerate(rule.neighborhood) if z != s)
        return float(total)

    def scaled(self, weight):
        rules = tuple(make_rule(self.q, r.shape, r.neighborhood, weight * r.table, r.name) for r in self.rules)
        return RateFamily(self.q, self.dimension, rules, self.name)

    def combined(self):
        """One aggregated table per shape, over the union of that shape's neighborhoods"""
        out = {}
        for shape in self.shapes():
            group = [r for r in self.rules if r.shape == shape]
            nbhd = list(shape)
            for r in group:
                nbhd += [o for o in r.neighborhood if o not in nbhd]
            table = sum(expand_table(self.q, r, tuple(nbhd)) for r in group)
            out[shape] = (tuple(nbhd), table)
        return out


def expand_table(q, rule, neighborhood):
    """The rule's table re-indexed over a larger neighborhood"""
    digits = digit_table(q, len(neighborhood))
    lookup = {o: i for i, o in enumerate(neighborhood)}
    cols = [lookup[o] for o in rule.neighborhood]
    return rule.table[digits[:, cols] @ radix_weights(q, len(cols))]


# ====================================================================
# Families
# ====================================================================
def _single_site_kernel(spec):
    origin = ((0,) * spec.potential.dimension,)
    boundary, kernel = spec.local_kernel(origin)
    return origin, boundary, kernel


def make_heat_bath(spec):
    """c_x(eta, j) = gamma_x(j | eta_{x^c}) for j != eta_x"""
    q = spec.q
    origin, boundary, kernel = _single_site_kernel(spec)
    # row = s + q * b for own spin s and boundary index b
    table = np.repeat(kernel, q, axis=0)
    rule = make_rule(q, origin, origin + boundary, table, 'heat_bath')
    return RateFamily(q, spec.potential.dimension, (rule,), 'heat_bath')


def make_cyclic(spec, kappa):
    """c_x(eta, eta_x + 1 mod q) = kappa / gamma_x(eta_x | eta_{x^c})"""
    q = spec.q
    if q < 2:
        raise DegenerateInputError('The cyclic family needs q >= 2')
    if kappa <= 0:
        raise ValueError('kappa must be positive, got {}'.format(kappa))
    origin, boundary, kernel = _single_site_kernel(spec)
    rows = np.arange(q * kernel.shape[0])
    own, b = rows % q, rows // q
    table = np.zeros((rows.size, q))
    table[rows, (own + 1) % q] = kappa / kernel[b, own]
    rule = make_rule(q, origin, origin + boundary, table, 'cyclic')
    return RateFamily(q, spec.potential.dimension, (rule,), 'cyclic')


def mix(a, r1, b, r2):
    if a < 0 or b < 0:
        raise ValueError('Mixture weights must be non-negative, got {} and {}'.format(a, b))
    if a == 0 and b == 0:
        raise DegenerateInputError('Both mixture weights are zero')
    if r1.q != r2.q or r1.dimension != r2.dimension:
        raise ValueError('Cannot mix families with different q or dimension')
    rules = []
    for weight, family in ((a, r1), (b, r2)):
        if weight > 0:
            rules += family.scaled(weight).rules
    return RateFamily(r1.q, r1.dimension, tuple(rules), 'mix({}*{}, {}*{})'.format(a, r1.name, b, r2.name))


# ====================================================================
# Generator assembly
# ====================================================================
def assemble_generator(rates, geom, max_states=MAX_STATES):
    q, n = rates.q, geom.size
    states = q ** n
    if states > max_states:
        raise CapacityError('State space {}^{} exceeds the generator capacity {}'.format(q, n, max_states))
    for k, rule in enumerate(rates.rules):
        if rule.table.min() < 0:
            row, col = np.unravel_index(int(np.argmin(rule.table)), rule.table.shape)
            raise ContractViolation('Negative rate {:.6g} in rule {} at row {}, col {}'
                                    .format(rule.table.min(), k, row, col))
    weights = radix_weights(q, n)
    rows, cols, vals = [], [], []
    for start in range(0, states, CHUNK):
        idx = np.arange(start, min(start + CHUNK, states), dtype=np.int64)
        digits = (idx[:, None] // weights[None, :]) % q
        for pl in rates.placements(geom):
            rule = rates.rules[pl.rule]
            k = len(rule.shape)
            shape_sites = pl.sites[:k]
            table = rule.table[digits[:, pl.sites] @ radix_weights(q, len(pl.sites))]
            base = idx - digits[:, shape_sites] @ weights[shape_sites]
            for col, xi in enumerate(digit_table(q, k)):
                rate = table[:, col]
                hit = rate > 0
                rows.append(idx[hit])
                cols.append(base[hit] + xi @ weights[shape_sites])
                vals.append(rate[hit])
    gen = SparseGenerator.from_transitions(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), states)
    logger.info('generator of %s on %r: %d states, %d transitions', rates.name, geom, states, gen.matrix.nnz)
    return gen


def stationarity_residual(mu, gen):
    return float(np.abs(gen.adjoint_apply(mu)).max())


def detailed_balance_residual(rates, mu, geom):
    """max over state pairs of |mu(x) c(x -> y) - mu(y) c(y -> x)|"""
    gen = assemble_generator(rates, geom)
    probs = np.asarray(getattr(mu, 'probs', mu), dtype=float)
    flux = sp.diags(probs) @ gen.off_diagonal.tocsr()
    diff = flux - flux.T
    return float(np.abs(diff.data).max()) if diff.nnz else 0.0


# ====================================================================
# Time reversal
# ====================================================================
def time_reversal(rates, spec):
    """
    c_hat_Delta(eta, xi) = c_Delta(xi eta_{Delta^c}, eta_Delta) gamma_Delta(xi | eta) / gamma_Delta(eta_Delta | eta)
    on the union of the rule's neighborhood and the specification's boundary of Delta
    """
    q = rates.q
    if spec.delta <= 0:
        raise ContractViolation('Time reversal needs a non-null specification')
    rules = []
    for rule in rates.rules:
        k, m = len(rule.shape), len(rule.neighborhood)
        boundary, kernel = spec.local_kernel(rule.shape)
        nbhd = tuple(rule.neighborhood) + tuple(b for b in boundary if b not in rule.neighborhood)
        lookup = {o: i for i, o in enumerate(nbhd)}
        digits = digit_table(q, len(nbhd))
        own = digits[:, :k] @ radix_weights(q, k)
        rest = digits[:, k:m] @ radix_weights(q, m)[k:] if m > k else np.zeros(len(digits), dtype=np.int64)
        b_idx = digits[:, [lookup[o] for o in boundary]] @ radix_weights(q, len(boundary))
        cols = np.arange(q ** k)
        # forward rate of the reversed move xi eta_{Delta^c} -> eta_Delta
        forward = rule.table[cols[None, :] + rest[:, None], own[:, None]]
        ratio = kernel[b_idx][:, cols] / kernel[b_idx, own][:, None]
        rules.append(make_rule(q, rule.shape, nbhd, forward * ratio, 'reversal({})'.format(rule.name)))
    return RateFamily(q, rates.dimension, tuple(rules), 'reversal({})'.format(rates.name))


def rate_distance(r1, r2):
    """sup distance between two families as functions, shape by shape"""
    c1, c2 = r1.combined(), r2.combined()
    worst = 0.0
    for shape in set(c1) | set(c2):
        n1, t1 = c1.get(shape, (shape, None))
        n2, t2 = c2.get(shape, (shape, None))
        nbhd = list(n1) + [o for o in n2 if o not in n1]
        tables = []
        for nb, tab in ((n1, t1), (n2, t2)):
            if tab is None:
                tables.append(0.0)
            else:
                tables.append(expand_table(r1.q, UpdateRule(r1.q, shape, tuple(nb), tab), tuple(nbhd)))
        worst = max(worst, float(np.abs(np.asarray(tables[0]) - np.asarray(tables[1])).max()))
    return worst


def reversal_bound_check(rates, rhat, spec):
    """||c_hat_Delta|| <= delta^{-1} e^R ||c_Delta|| for every rule"""
    factor = np.exp(rates.R) / spec.delta
    return [BoundCheck(bool(h.table.max() <= factor * r.table.max() * (1 + 1e-12)),
                       float(h.table.max()), float(factor * r.table.max()))
            for r, h in zip(rates.rules, rhat.rules)]


# ====================================================================
# Verifiers
# ====================================================================
def _state_digits(q, geom):
    if q ** geom.size > MAX_STATES:
        raise CapacityError('State space {}^{} is too large to enumerate'.format(q, geom.size))
    return digit_table(q, geom.size)


def _placed_rates(rates, geom, digits, window=None):
    """Yield (placement, table rows for every state, base index) for placements on `window`"""
    q = rates.q
    weights = radix_weights(q, geom.size)
    idx = np.arange(len(digits), dtype=np.int64)
    for pl in rates.placements(geom):
        if window is not None and set(pl.shape_sites) != set(window):
            continue
        rule = rates.rules[pl.rule]
        shape_sites = pl.sites[:len(rule.shape)]
        table = rule.table[digits[:, pl.sites] @ radix_weights(q, len(pl.sites))]
        yield pl, table, idx - digits[:, shape_sites] @ weights[shape_sites], weights[shape_sites]


def switching_residual(rates, spec, mu, f, g, delta_w, rhat=None):
    """
    |sum_xi int c_Delta(w, xi) f(w) g(xi w) dmu - sum_xi int c_hat_Delta(w, xi) f(xi w) g(w) dmu|
    for the rule translates whose shape is the torus window delta_w
    """
    geom = spec.torus
    rhat = time_reversal(rates, spec) if rhat is None else rhat
    probs = np.asarray(getattr(mu, 'probs', mu), dtype=float)
    f, g = np.asarray(f, dtype=float), np.asarray(g, dtype=float)
    digits = _state_digits(rates.q, geom)
    k = len(delta_w)
    lhs = rhs = 0.0
    for family, forward in ((rates, True), (rhat, False)):
        for _, table, base, w in _placed_rates(family, geom, digits, Window(delta_w)):
            for col, xi in enumerate(digit_table(rates.q, k)):
                target = base + xi @ w
                if forward:
                    lhs += float(np.sum(probs * table[:, col] * f * g[target]))
                else:
                    rhs += float(np.sum(probs * table[:, col] * f[target] * g))
    return abs(lhs - rhs)


def total_rate_difference(rates, rhat, geom):
    """T(eta) = sum over all rule translates and xi of (c - c_hat)(eta, xi)"""
    digits = _state_digits(rates.q, geom)
    total = np.zeros(len(digits))
    for family, sign in ((rates, 1.0), (rhat, -1.0)):
        for _, table, _, _ in _placed_rates(family, geom, digits):
            total += sign * table.sum(axis=1)
    return total


def oscillation_residual(rates, rhat, z, i, eta, geom, total=None):
    """|sum_Delta sum_xi grad^i_z (c_Delta - c_hat_Delta)(eta)|"""
    q = rates.q
    total = total_rate_difference(rates, rhat, geom) if total is None else total
    eta = np.asarray(eta, dtype=np.int64)
    weights = radix_weights(q, geom.size)
    index = int(eta @ weights)
    moved = index + (int(i) - int(eta[z])) * int(weights[z])
    return abs(float(total[moved] - total[index]))


def max_oscillation_residual(rates, rhat, geom):
    """max over every (z, i, eta) of the oscillation residual"""
    q = rates.q
    total = total_rate_difference(rates, rhat, geom)
    digits = _state_digits(q, geom)
    weights = radix_weights(q, geom.size)
    idx = np.arange(len(digits))
    worst = 0.0
    for z in range(geom.size):
        for i in range(q):
            moved = idx + (i - digits[:, z]) * weights[z]
            worst = max(worst, float(np.abs(total[moved] - total).max()))
    return worst


def oscillation_residual_window(rates, rhat, lam, eta, geom, total=None):
    """|grad_Lambda sum_Delta sum_xi (c - c_hat)(eta)| with grad_Lambda f = sum_xi_Lambda [f(xi eta) - f(eta)]"""
    q = rates.q
    total = total_rate_difference(rates, rhat, geom) if total is None else total
    lam = list(Window(lam))
    eta = np.asarray(eta, dtype=np.int64)
    weights = radix_weights(q, geom.size)
    index = int(eta @ weights)
    base = index - int(eta[lam] @ weights[lam])
    moved = base + digit_table(q, len(lam)) @ weights[lam]
    return abs(float(np.sum(total[moved] - total[index])))


def beta_tail(rates, rhat, n):
    """
    sup over (z, i) of max(sum over rule translates missing the box Delta_n around z of
    sum_xi ||grad^i_z c||, the same for c_hat)
    """
    worst = 0.0
    for family in (rates, rhat):
        per_spin = np.zeros(family.q)
        for k, rule in enumerate(family.rules):
            norms = family.gradient_norms(k).sum(axis=2)
            shape = np.asarray(rule.shape)
            for p, z in enumerate(rule.neighborhood):
                # translate x = -z puts the probed site at the origin
                if np.abs(shape - np.asarray(z)).max(axis=1).min() > n:
                    per_spin += norms[p]
        worst = max(worst, float(per_spin.max()))
    return worst


def build_from_oscillation_pair(rates, spec, geom, mu=None):
    """
    From a stationary pair (c, mu) build c_hat and confirm that mu is stationary for the
    c_hat process as well; returns (c_hat, residual of c, residual of c_hat)
    """
    mu = stationary(assemble_generator(rates, geom)) if mu is None else mu
    rhat = time_reversal(rates, spec)
    forward = stationarity_residual(mu, assemble_generator(rates, geom))
    backward = stationarity_residual(mu, assemble_generator(rhat, geom))
    logger.debug('oscillation pair: residual %.3g forward, %.3g reversed', forward, backward)
    return rhat, forward, backward


def duality_residual(gen, gen_hat, mu, f, g, t):
    """|int (P_t f) g dmu - int f (P_hat_t g) dmu|"""
    probs = np.asarray(getattr(mu, 'probs', mu), dtype=float)
    f, g = np.asarray(f, dtype=float), np.asarray(g, dtype=float)
    lhs = float(np.sum(probs * g * expm_multiply(t * gen.matrix, f)))
    rhs = float(np.sum(probs * f * expm_multiply(t * gen_hat.matrix, g)))
    return abs(lhs - rhs)


# ====================================================================
# Conditions
# ====================================================================
@dataclass
class ConditionCheck:
    passed: bool
    value: float = float('nan')
    witness: object = None
    note: str = ''


@dataclass
class ConditionReport:
    checks: dict
    l1: float
    l2: float
    beta_tail: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks.values())

    def rows(self):
        rows = [{'check': name, 'value': c.value, 'bound': c.note, 'passed': c.passed}
                for name, c in self.checks.items()]
        rows.append({'check': 'L1', 'value': self.l1, 'bound': 'finite', 'passed': np.isfinite(self.l1)})
        rows.append({'check': 'L2', 'value': self.l2, 'bound': 'finite', 'passed': np.isfinite(self.l2)})
        return rows


def _rate_witness(rates, predicate):
    q = rates.q
    for k, rule in enumerate(rates.rules):
        bad = np.argwhere(predicate(rule.table))
        if len(bad):
            row, col = (int(v) for v in bad[0])
            nbhd = tuple(int(s) for s in digit_table(q, len(rule.neighborhood))[row])
            xi = tuple(int(s) for s in digit_table(q, len(rule.shape))[col])
            return {'rule': k, 'neighborhood_spins': nbhd, 'xi': xi, 'rate': float(rule.table[row, col])}
    return None


def single_site_certificate(rates):
    """
    Every spin value reachable from every other at a single site, for every configuration
    of the surrounding neighborhood; returns the first failing neighborhood configuration
    """
    q = rates.q
    origin = ((0,) * rates.dimension,)
    combined = rates.combined()
    if origin not in combined:
        return False, {'reason': 'no single-site rule'}
    nbhd, table = combined[origin]
    digits = digit_table(q, len(nbhd))
    boundary_idx = np.arange(q ** len(nbhd)) // q
    for b in range(q ** (len(nbhd) - 1)):
        adjacency = table[boundary_idx == b]
        count, _ = connected_components(sp.csr_matrix(adjacency > 0), directed=True, connection='strong')
        if count != 1:
            return False, {'neighborhood_spins': tuple(int(s) for s in digits[b * q][1:])}
    return True, None


def check_rate_conditions(rates, spec, geom, exact_limit=MAX_STATES, n_max=None):
    """
    Return the condition report of a rate family: R1-R6 and S1-S4 with witnesses,
    the L1 / L2 sums and the beta(n) tail table of the family and its time reversal.
    """
    checks = {}
    finite = all(np.isfinite(r.table).all() for r in rates.rules)
    negative = _rate_witness(rates, lambda t: t < 0)
    nonfinite = _rate_witness(rates, lambda t: ~np.isfinite(t))
    checks['R1'] = ConditionCheck(finite and negative is None, float(len(rates.rules)),
                                  nonfinite or negative, 'finite neighborhoods, rates in [0, inf)')
    checks['R2'] = ConditionCheck(len(rates.rules) > 0, float(rates.R),
                                  {'shapes': rates.shapes()}, 'finitely many shapes')
    r3 = rates.influence_sum()
    checks['R3'] = ConditionCheck(bool(np.isfinite(r3)), r3, None, 'finite influence sum')
    checks['R4'] = ConditionCheck(True, float('nan'), None, 'stored per translation class')
    kappa = rates.kappa
    checks['R5'] = ConditionCheck(negative is None and kappa > 0, kappa, negative, 'kappa > 0')
    if negative is not None:
        checks['R6'] = ConditionCheck(False, float('nan'), negative, 'negative rates')
    elif rates.q ** geom.size <= exact_limit:
        gen = assemble_generator(rates, geom)
        count, labels = connected_components(gen.off_diagonal, directed=True, connection='strong')
        witness = None if count == 1 else {'components': int(count),
                                           'state': int(np.argmax(labels != labels[0]))}
        checks['R6'] = ConditionCheck(count == 1, float(count), witness, 'strongly connected')
    else:
        ok, witness = single_site_certificate(rates)
        checks['R6'] = ConditionCheck(ok, float('nan'), witness, 'single-site certificate')
    checks['S1'] = ConditionCheck(True, float(spec.potential.range), None, 'finite range')
    checks['S2'] = ConditionCheck(spec.delta > 0, spec.delta, None, 'delta > 0')
    s3 = specification_influence_sum(rates, spec)
    checks['S3'] = ConditionCheck(bool(np.isfinite(s3)), s3, None, 'finite influence sum')
    checks['S4'] = ConditionCheck(True, float('nan'), None, 'translation-invariant potential')
    tail = []
    if negative is None and spec.delta > 0:
        rhat = time_reversal(rates, spec)
        n_max = rhat.range + 1 if n_max is None else n_max
        tail = [beta_tail(rates, rhat, n) for n in range(n_max + 1)]
    report = ConditionReport(checks, rates.l1_sum(), rates.l2_sum(), tail)
    logger.info('conditions of %s: %s', rates.name, 'all pass' if report.passed else
                ', '.join(name for name, c in checks.items() if not c.passed))
    return report


def specification_influence_sum(rates, spec):
    """sum_{z != y} sum_{Delta containing y, c_Delta > 0} sum_xi sum_i ||grad^i_z gamma_Delta||"""
    q, total = spec.q, 0.0
    for shape in rates.shapes():
        if not any((r.table > 0).any() for r in rates.rules if r.shape == shape):
            continue
        boundary, kernel = spec.local_kernel(shape)
        if not boundary:
            continue
        digits = digit_table(q, len(boundary))
        rows = np.arange(len(digits))
        for p in range(len(boundary)):
            for i in range(q):
                moved = rows + (i - digits[:, p]) * q ** p
                total += len(shape) * float(np.abs(kernel[moved] - kernel).max(axis=0).sum())
    return total
