import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import rel_entr

from source.commons.errors import CapacityError, ContractViolation, GeometryError, UnsupportedSourceError
from source.commons.lattice import Window, digit_table, radix_weights
from source.commons.utils import ext_sum, flow_log_pairing
from .ctmc import F0

"""
Windowed entropy functionals of lattice measures.

    h_window         relative entropy on a window
    g_n, g_tilde_n   finite-volume entropy loss in Lambda_n (all updates meeting Lambda_n,
                     or updates confined to Lambda_tilde_n)
    S_n, s_n         the bulk rewriting with truncated rates c^(n), and its monotone
                     truncation counterpart
    corrected_sequence   G_n s_n / |Lambda_n|

All functionals integrate against exact marginal sources only.
"""
logger = logging.getLogger(__name__)

MAX_FRAME = 2 ** 20
SIGN_TOL = 1e-12
TAIL_REL_ERROR = 1e-14


class TruncationScheme:
    """
    Lambda_n = [-2^n + 1, 2^n - 1]^d and Lambda_tilde_n = [-2^n + n + 1, 2^n - n - 1]^d,
    centered at the torus center; balls B_r(x) are sup-norm boxes; the center x(Delta) of
    a rule translate is the image of the origin of its shape.
    """

    def __init__(self, torus):
        self.torus = torus

    def max_level(self):
        n = 0
        while all(2 ** (n + 2) - 1 <= side for side in self.torus.sides):
            n += 1
        return n

    def lam(self, n):
        if n < 0 or any(2 ** (n + 1) - 1 > side for side in self.torus.sides):
            raise GeometryError('Lambda_{} needs side {} but the torus has {}'
                                .format(n, 2 ** (n + 1) - 1, self.torus.sides))
        return self.torus.box(2 ** n - 1)

    def lam_tilde(self, n):
        self.lam(n)
        return self.torus.box(2 ** n - n - 1)

    def ball(self, radius, x):
        return self.torus.box(radius, center=x)

    def volume(self, n):
        return (2 ** (n + 1) - 1) ** self.torus.dimension

    def boundary_volume(self, n):
        return len(self.lam(n)) - len(self.lam_tilde(n))


class _Frame:
    """Enumeration of all configurations of a window"""

    def __init__(self, q, window):
        self.q, self.window = q, Window(window)
        if q ** len(self.window) > MAX_FRAME:
            raise CapacityError('Window of {} sites exceeds the enumeration guard'.format(len(self.window)))
        self.digits = digit_table(q, len(self.window))
        self.weights = radix_weights(q, len(self.window))
        self.size = q ** len(self.window)
        self._pos = {s: i for i, s in enumerate(self.window)}

    def positions(self, sites):
        return [self._pos[s] for s in sites]

    def index(self, sites):
        # index of the projection on `sites`, in the order given
        sites = list(sites)
        if not sites:
            return np.zeros(self.size, dtype=np.int64)
        return self.digits[:, self.positions(sites)] @ radix_weights(self.q, len(sites))

    def replace(self, sites, xi):
        # index of the configuration with `sites` overwritten by xi
        pos = self.positions(sites)
        idx = np.arange(self.size, dtype=np.int64)
        return idx - self.digits[:, pos] @ self.weights[pos] + np.asarray(xi) @ self.weights[pos]


def _require_exact(*sources):
    for source in sources:
        if not getattr(source, 'exact', False):
            raise UnsupportedSourceError('Entropy functionals need exact marginal sources, got {}'
                                         .format(getattr(source, 'provenance', type(source).__name__)))


def _checked_marginal(source, window):
    marg = np.asarray(source.marginal(window), dtype=float)
    if marg.min() < 0 or abs(marg.sum() - 1.0) > 1e-10:
        raise ContractViolation('Inconsistent {} marginal on {} sites (sum {:.17g})'
                                .format(source.provenance, len(window), marg.sum()))
    return marg


# ====================================================================
# Relative entropy and the finite-volume loss
# ====================================================================
def h_window(nu, mu, lam):
    _require_exact(nu, mu)
    lam = Window(lam)
    return float(rel_entr(_checked_marginal(nu, lam), _checked_marginal(mu, lam)).sum())


@dataclass(frozen=True)
class Census:
    meeting: int
    inside: int
    bound: int


def translation_census(rates, scheme, n):
    """Rule translates meeting Lambda_n / inside Lambda_tilde_n, with the combinatorial bound"""
    lam, tilde = set(scheme.lam(n)), set(scheme.lam_tilde(n))
    placements = rates.placements(scheme.torus)
    meeting = sum(1 for pl in placements if lam & set(pl.shape_sites))
    inside = sum(1 for pl in placements if set(pl.shape_sites) <= tilde)
    bound = sum(len(rule.shape) for rule in rates.rules) * len(lam)
    if meeting > bound:
        raise ContractViolation('{} translates meet Lambda_{} but at most {} can'.format(meeting, n, bound))
    return Census(meeting, inside, bound)


def _meeting(rates, scheme, n):
    lam = set(scheme.lam(n))
    return [pl for pl in rates.placements(scheme.torus) if lam & set(pl.shape_sites)]


def _inside(rates, scheme, n):
    tilde = set(scheme.lam_tilde(n))
    return [pl for pl in rates.placements(scheme.torus) if set(pl.shape_sites) <= tilde]


def _loss(rates, nu, mu, lam, placements):
    """
    sum_eta sum_translates sum_xi int c(w, xi) [1_eta(xi w) - 1_eta(w)] dnu log(nu(eta) / mu(eta))
    """
    q = rates.q
    window = lam
    for pl in placements:
        window = window.union(pl.sites.tolist())
    frame = _Frame(q, window)
    nu_w = _checked_marginal(nu, window)
    lam_of_w = frame.index(lam)
    size = q ** len(lam)
    flow = np.zeros(size)
    for pl in placements:
        rule = rates.rules[pl.rule]
        k = len(rule.shape)
        table = rule.table[frame.index(pl.sites.tolist())]
        shape = list(pl.shape_sites)
        for col, xi in enumerate(digit_table(q, k)):
            mass = nu_w * table[:, col]
            target = lam_of_w[frame.replace(shape, xi)]
            flow += np.bincount(target, mass, size) - np.bincount(lam_of_w, mass, size)
    nu_l = _checked_marginal(nu, lam)
    mu_l = _checked_marginal(mu, lam)
    if np.any((mu_l <= 0) & (nu_l > 0)):
        raise ContractViolation('Reference measure vanishes on a charged cylinder')
    return flow_log_pairing(flow, nu_l, mu_l)


def g_n(rates, nu, mu, scheme, n):
    """Entropy loss in Lambda_n from every rule translate meeting Lambda_n"""
    _require_exact(nu, mu)
    translation_census(rates, scheme, n)
    value = _loss(rates, nu, mu, scheme.lam(n), _meeting(rates, scheme, n))
    logger.debug('g^%d = %.17g', n, value)
    return value


def g_tilde_n(rates, nu, mu, scheme, n):
    """Entropy loss in Lambda_n from the rule translates inside Lambda_tilde_n"""
    _require_exact(nu, mu)
    value = _loss(rates, nu, mu, scheme.lam(n), _inside(rates, scheme, n))
    logger.debug('g~^%d = %.17g', n, value)
    return value


def boundary_constant(rates, delta_mu):
    """
    Per-site constant C = sup_rate q^R max(log(1/delta_mu), e^-1) with
    |g^n - g_tilde^n| <= C |Lambda_n \\ Lambda_tilde_n|
    """
    if not 0 < delta_mu <= 1:
        raise ValueError('The boundary constant needs a non-null reference, got delta={}'.format(delta_mu))
    return float(rates.sup_rate * rates.q ** rates.R * max(np.log(1.0 / delta_mu), np.exp(-1.0)))


# ====================================================================
# Truncated rates
# ====================================================================
def truncated_table(rule, radius):
    """
    inf over exterior completions of c_Delta(eta_B w_{B^c}, xi) with B the sup-norm ball of
    the given radius around the shape origin; same layout as the rule table
    """
    q, m = rule.q, len(rule.neighborhood)
    outside = [p for p, o in enumerate(rule.neighborhood) if max((abs(c) for c in o), default=0) > radius]
    if not outside:
        return rule.table
    # axis m - 1 - p of the reshaped rows belongs to neighborhood position p
    cube = rule.table.reshape((q,) * m + (rule.table.shape[1],))
    axes = tuple(m - 1 - p for p in outside)
    low = cube.min(axis=axes, keepdims=True)
    return np.broadcast_to(low, cube.shape).reshape(rule.table.shape)


def truncated_rate(rates, delta_class, ball, eta, xi, anchor, geom):
    """
    inf_w c_Delta(eta_ball w_{ball^c}, xi) for the translate of rule `delta_class` at
    `anchor`; computed by enumerating the neighborhood sites outside the ball
    """
    rule = rates.rules[delta_class]
    q, m = rates.q, len(rule.neighborhood)
    sites = [geom.shift(anchor, o) for o in rule.neighborhood]
    inside = set(Window(ball))
    eta = np.asarray(eta, dtype=np.int64)
    cube = rule.table.reshape((q,) * m + (rule.table.shape[1],))
    index = []
    for p in reversed(range(m)):
        index.append(slice(None) if sites[p] not in inside else int(eta[sites[p]]))
    col = int(np.dot(xi, radix_weights(q, len(rule.shape))))
    return float(np.min(cube[tuple(index)][..., col]))


def dichotomy_radius(rates, max_radius=None):
    """
    Smallest radius N such that, for every rule and every (eta, xi), the truncated rate at
    radius r >= N is positive exactly where the rate is; returns (N, holds)
    """
    radius_needed, holds = 0, True
    for rule in rates.rules:
        top = max(max(abs(c) for c in o) for o in rule.neighborhood)
        limit = top if max_radius is None else max(max_radius, top)
        positive = rule.table > 0
        last_bad = -1
        for r in range(limit + 1):
            trunc = truncated_table(rule, r)
            # a null rate has a null truncation at every radius
            if np.any(trunc[~positive] != 0):
                holds = False
            if np.any(trunc[positive] <= 0):
                last_bad = r
        radius_needed = max(radius_needed, last_bad + 1)
    return radius_needed, holds


# ====================================================================
# F, f, s_n and S_n
# ====================================================================
def _f_values(nu_l, nu_xe, integral):
    # F_0(integral / nu(xi eta)) nu(xi eta), -inf if only eta is charged, 0 if both are null
    charged = nu_xe > 0
    arg = np.where(charged, integral / np.where(charged, nu_xe, 1.0), 1.0)
    return np.where(charged, F0(arg) * nu_xe, np.where(nu_l > 0, -np.inf, 0.0))


def _kernel_ratio(spec, shape_sites, frame, col, orientation):
    boundary, kernel = spec.kernel(Window(shape_sites))
    if not set(boundary) <= set(frame.window):
        raise ValueError('Boundary of {} is outside the integration window'.format(shape_sites))
    b_idx = frame.index(boundary)
    own = frame.index(shape_sites)
    if orientation == 'key':
        return kernel[b_idx, col] / kernel[b_idx, own]
    if orientation == 'display':
        return kernel[b_idx, own] / kernel[b_idx, col]
    raise ValueError('Unknown ratio orientation {!r}'.format(orientation))


def _boundary_window(spec, lam, placements):
    window = lam
    for pl in placements:
        window = window.union(spec.kernel(Window(pl.shape_sites))[0])
    return window


def f_term(nu, scheme, n, eta_window, xi, spec, delta_w, orientation='key'):
    """
    f(nu, n, eta, xi) = F_0((1 / nu(xi eta)) int 1_eta(w) gamma(xi | w) / gamma(eta | w) dnu) nu(xi eta)
    for one configuration eta of Lambda_n and one translate delta_w inside it
    """
    _require_exact(nu)
    q, lam = nu.q, scheme.lam(n)
    delta_w = Window(delta_w)
    window = lam.union(spec.kernel(delta_w)[0])
    frame, lam_frame = _Frame(q, window), _Frame(q, lam)
    nu_w = _checked_marginal(nu, window)
    lam_of_w = frame.index(lam)
    col = int(np.dot(xi, radix_weights(q, len(delta_w))))
    ratio = _kernel_ratio(spec, list(delta_w), frame, col, orientation)
    integral = np.bincount(lam_of_w, nu_w * ratio, lam_frame.size)
    nu_l = np.bincount(lam_of_w, nu_w, lam_frame.size)
    eta_idx = int(np.dot(eta_window, lam_frame.weights))
    xe = lam_frame.replace(list(delta_w), xi)[eta_idx]
    return float(_f_values(nu_l[eta_idx:eta_idx + 1], nu_l[xe:xe + 1], integral[eta_idx:eta_idx + 1])[0])


def _check_addends(addends, what):
    if addends.size and np.nanmax(addends) > SIGN_TOL:
        raise ContractViolation('Positive addend {:.3g} in {}'.format(float(np.nanmax(addends)), what))


def s_n(rates, spec, nu, scheme, n, orientation='key'):
    """
    sum_eta sum_{Delta inside Lambda_tilde_n} sum_{xi != eta_Delta}
        f(nu, n, eta, xi) c^{B_{n-1}(x(Delta))}_Delta(xi eta_{Delta^c}, eta_Delta)
    """
    _require_exact(nu)
    if n < 1:
        raise ValueError('s_n needs n >= 1')
    q, lam = rates.q, scheme.lam(n)
    placements = _inside(rates, scheme, n)
    window = _boundary_window(spec, lam, placements)
    frame, lam_frame = _Frame(q, window), _Frame(q, lam)
    nu_w = _checked_marginal(nu, window)
    lam_of_w = frame.index(lam)
    nu_l = np.bincount(lam_of_w, nu_w, lam_frame.size)
    lam_sites = set(lam)
    terms = []
    for pl in placements:
        rule = rates.rules[pl.rule]
        k = len(rule.shape)
        shape = list(pl.shape_sites)
        trunc = truncated_table(rule, n - 1)
        # truncated rows only read neighborhood sites inside the ball, which lie in Lambda_n
        ball = set(scheme.ball(n - 1, pl.anchor))
        rest = np.zeros(lam_frame.size, dtype=np.int64)
        for p in range(k, len(rule.neighborhood)):
            site = int(pl.sites[p])
            if site in ball:
                if site not in lam_sites:
                    raise GeometryError('Ball around {} leaves Lambda_{}'.format(pl.anchor, n))
                rest += lam_frame.index([site]) * q ** p
        own_l = lam_frame.index(shape)
        for col, xi in enumerate(digit_table(q, k)):
            ratio = _kernel_ratio(spec, shape, frame, col, orientation)
            integral = np.bincount(lam_of_w, nu_w * ratio, lam_frame.size)
            xe = lam_frame.replace(shape, xi)
            f = _f_values(nu_l, nu_l[xe], integral)
            rate = trunc[col + rest, own_l]
            live = (own_l != col) & (rate > 0)
            addends = np.where(live, f * np.where(live, rate, 0.0), 0.0)
            _check_addends(addends, 's_{}'.format(n))
            terms.append(ext_sum(addends))
    value = ext_sum(terms)
    logger.debug('s_%d = %.17g over %d translates', n, value, len(placements))
    return value


def S_n(rates, spec, nu, mu, scheme, n):
    """
    sum_eta sum_{Delta inside Lambda_tilde_n} sum_{xi != eta_Delta}
        F(nu, n, eta, xi) c^(n)_Delta(eta, xi) mu(eta) / mu(xi eta)
    with c^(n)(eta, xi) = int 1_eta c(., xi) dnu / nu(eta), or c(r_n eta, xi) on nu-null cylinders
    """
    _require_exact(nu, mu)
    q, lam = rates.q, scheme.lam(n)
    placements = _inside(rates, scheme, n)
    window = lam
    for pl in placements:
        window = window.union(pl.sites.tolist())
    frame, lam_frame = _Frame(q, window), _Frame(q, lam)
    nu_w = _checked_marginal(nu, window)
    lam_of_w = frame.index(lam)
    nu_l = np.bincount(lam_of_w, nu_w, lam_frame.size)
    mu_l = _checked_marginal(mu, lam)
    if mu_l.min() <= 0:
        raise ContractViolation('S_n needs a reference measure positive on Lambda_{}'.format(n))
    lam_sites = set(lam)
    terms = []
    for pl in placements:
        rule = rates.rules[pl.rule]
        k = len(rule.shape)
        shape = list(pl.shape_sites)
        table_w = rule.table[frame.index(pl.sites.tolist())]
        # rows of the filled configuration r_n eta: spin 0 outside Lambda_n
        fill_rows = np.zeros(lam_frame.size, dtype=np.int64)
        for p, site in enumerate(pl.sites.tolist()):
            if site in lam_sites:
                fill_rows += lam_frame.index([site]) * q ** p
        own_l = lam_frame.index(shape)
        for col, xi in enumerate(digit_table(q, k)):
            averaged = np.bincount(lam_of_w, nu_w * table_w[:, col], lam_frame.size)
            charged = nu_l > 0
            c_n = np.where(charged, averaged / np.where(charged, nu_l, 1.0), rule.table[fill_rows, col])
            xe = lam_frame.replace(shape, xi)
            nu_xe, mu_xe = nu_l[xe], mu_l[xe]
            pos = nu_xe > 0
            arg = np.where(pos, nu_l * mu_xe / (np.where(pos, nu_xe, 1.0) * mu_l), 1.0)
            big_f = np.where(pos, F0(arg) * nu_xe, np.where(charged, -np.inf, 0.0))
            live = (own_l != col) & (c_n > 0)
            addends = np.where(live, big_f * np.where(live, c_n * mu_l / mu_xe, 0.0), 0.0)
            _check_addends(addends, 'S_{}'.format(n))
            terms.append(ext_sum(addends))
    value = ext_sum(terms)
    logger.debug('S_%d = %.17g over %d translates', n, value, len(placements))
    return value


# ====================================================================
# Sequences and configurations
# ====================================================================
def volume_correction(n, d):
    """G_n = prod_{k >= n} ((2^{k+2} - 2) / (2^{k+2} - 1))^d, tail cut at relative error 1e-14"""
    log_g, k = 0.0, n
    while True:
        term = np.log1p(-1.0 / (2.0 ** (k + 2) - 1.0))
        log_g += term
        # remaining tail is bounded by twice the current term
        if abs(2 * term) < TAIL_REL_ERROR:
            break
        k += 1
    return float(np.exp(d * log_g))


@dataclass(frozen=True)
class CorrectedSequence:
    values: tuple
    nonincreasing: bool


def corrected_sequence(values, scheme, start=1, tol=1e-12):
    """G_n s_n / |Lambda_n| for n = start, start + 1, ... and its monotonicity verdict"""
    if len(values) < 2:
        raise ValueError('A corrected sequence needs at least two values')
    d = scheme.torus.dimension
    seq = tuple(volume_correction(start + i, d) * v / scheme.volume(start + i) for i, v in enumerate(values))
    ok = all(b <= a + tol * max(1.0, abs(a)) for a, b in zip(seq, seq[1:]))
    return CorrectedSequence(seq, ok)


def fill_window(eta_window, window, geom):
    """Spins of eta on the window, spin 0 everywhere else"""
    out = np.zeros(geom.size, dtype=np.int64)
    window = list(Window(window))
    if window:
        out[window] = np.asarray(eta_window, dtype=np.int64)
    return out


def fill_configuration(eta_window, n, scheme):
    return fill_window(eta_window, scheme.lam(n), scheme.torus)


# ====================================================================
# Key equality and conditional ratios
# ====================================================================
def key_equality_residual(nu, spec, scheme, n):
    """
    max |(1 / nu(xi eta)) int 1_eta(w) gamma(xi | w) / gamma(eta | w) dnu - 1| over single-site
    translates inside Lambda_tilde_n, xi and charged cylinders; zero for Gibbs measures
    """
    _require_exact(nu)
    q, lam = nu.q, scheme.lam(n)
    sites = list(scheme.lam_tilde(n))
    window = lam
    for s in sites:
        window = window.union(spec.kernel(Window([s]))[0])
    frame, lam_frame = _Frame(q, window), _Frame(q, lam)
    nu_w = _checked_marginal(nu, window)
    lam_of_w = frame.index(lam)
    nu_l = np.bincount(lam_of_w, nu_w, lam_frame.size)
    worst = 0.0
    for s in sites:
        for xi in range(q):
            ratio = _kernel_ratio(spec, [s], frame, xi, 'key')
            integral = np.bincount(lam_of_w, nu_w * ratio, lam_frame.size)
            nu_xe = nu_l[lam_frame.replace([s], [xi])]
            charged = nu_xe > 0
            if charged.any():
                worst = max(worst, float(np.abs(integral[charged] / nu_xe[charged] - 1.0).max()))
    return worst


def conditional_ratio_gap(mu, spec, delta_w, n, scheme):
    """
    max over eta on Lambda_n and xi of
        |mu(xi eta_{Lambda_n \\ Delta}) / mu(eta) - gamma_Delta(xi | eta) / gamma_Delta(eta_Delta | eta)|
    for a window Delta whose boundary lies in Lambda_n
    """
    _require_exact(mu)
    q, lam = mu.q, scheme.lam(n)
    delta_w = Window(delta_w)
    boundary, kernel = spec.kernel(delta_w)
    if not (set(delta_w) | set(boundary)) <= set(lam):
        raise GeometryError('Delta and its boundary must lie inside Lambda_{}'.format(n))
    frame = _Frame(q, lam)
    mu_l = _checked_marginal(mu, lam)
    b_idx, own = frame.index(boundary), frame.index(list(delta_w))
    worst = 0.0
    for col, xi in enumerate(digit_table(q, len(delta_w))):
        ratio_mu = mu_l[frame.replace(list(delta_w), xi)] / mu_l
        ratio_gamma = kernel[b_idx, col] / kernel[b_idx, own]
        worst = max(worst, float(np.abs(ratio_mu - ratio_gamma).max()))
    return worst
