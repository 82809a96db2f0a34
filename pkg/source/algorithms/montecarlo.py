import logging
import multiprocessing as mp
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from source.commons.errors import CapacityError, InsufficientDataError
from source.commons.lattice import Window, check_config, digit_table, radix_weights
from . import kmc_kernel
from .measures import EmpiricalMarginal, TorusMeasure

"""
Gillespie sampling on tori beyond exact reach, ensemble window marginals and the
attractor-property experiment.

Replica r of a run uses the r-th child of SeedSequence(seed); its first generated word
seeds the compiled kernel and the child itself seeds the initial-law sampler, so
results do not depend on the number of worker processes.
"""
logger = logging.getLogger(__name__)

COUNT_FLOOR = 30
MAX_OCCUPATION_STATES = 2 ** 16
ATTRACTOR_NOISE = 0.1
ATTRACTOR_FACTOR = 5.0


@dataclass(frozen=True)
class InitialLaw:
    """
    point    every replica starts from `spins`
    product  i.i.d. spins with law `single_site`
    uniform  i.i.d. uniform spins
    exact    exact draws from a TorusMeasure
    """
    kind: str = 'uniform'
    spins: tuple = ()
    single_site: tuple = ()
    measure: object = None

    def sample(self, torus, q, rng):
        if self.kind == 'point':
            return check_config(self.spins, q, torus).copy()
        if self.kind == 'uniform':
            return rng.integers(0, q, torus.size).astype(np.int64)
        if self.kind == 'product':
            return rng.choice(q, size=torus.size, p=np.asarray(self.single_site, dtype=float)).astype(np.int64)
        if self.kind == 'exact':
            return self.measure.sample(1, rng)[0]
        raise ValueError('Unknown initial law {!r}'.format(self.kind))


@dataclass(eq=False)
class SimulationRun:
    rates: object
    torus: object
    initial: InitialLaw
    horizon: float
    replicas: int = 1
    seed: int = 0
    log_events: int = 0
    workers: int = 1
    _arrays: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError('Horizon must be non-negative, got {}'.format(self.horizon))
        if self.replicas < 1:
            raise ValueError('A run needs at least one replica')

    def arrays(self):
        if not self._arrays:
            self._arrays.update(compile_family(self.rates, self.torus))
        return self._arrays

    def replica_seeds(self):
        return np.random.SeedSequence(self.seed).spawn(self.replicas)


@dataclass
class GillespieResult:
    final: np.ndarray
    events: int
    last_time: float
    absorbed: bool
    event_log: pd.DataFrame = None


def compile_family(rates, torus):
    """Flatten the rule translates of a family into the kernel's CSR arrays"""
    placements = rates.placements(torus)
    pl_ptr = np.zeros(len(placements) + 1, dtype=np.int64)
    for p, pl in enumerate(placements):
        pl_ptr[p + 1] = pl_ptr[p] + len(pl.sites)
    pl_sites = np.concatenate([pl.sites for pl in placements]).astype(np.int64) if placements \
        else np.zeros(0, dtype=np.int64)
    pl_rule = np.array([pl.rule for pl in placements], dtype=np.int64)
    pl_k = np.array([len(pl.shape_sites) for pl in placements], dtype=np.int64)
    tab_ptr = np.zeros(len(rates.rules), dtype=np.int64)
    offset = 0
    for k, rule in enumerate(rates.rules):
        tab_ptr[k] = offset
        offset += rule.table.size
    tables = np.concatenate([r.table.ravel() for r in rates.rules]).astype(float)
    tab_cols = np.array([r.table.shape[1] for r in rates.rules], dtype=np.int64)
    # placements reading each site
    owners = [[] for _ in range(torus.size)]
    for p, pl in enumerate(placements):
        for s in pl.sites.tolist():
            owners[s].append(p)
    aff_ptr = np.zeros(torus.size + 1, dtype=np.int64)
    for s in range(torus.size):
        aff_ptr[s + 1] = aff_ptr[s] + len(owners[s])
    aff_idx = np.array([p for o in owners for p in o], dtype=np.int64)
    return dict(q=rates.q, pl_ptr=pl_ptr, pl_sites=pl_sites, pl_rule=pl_rule, pl_k=pl_k,
                tab_ptr=tab_ptr, tab_cols=tab_cols, tables=tables, aff_ptr=aff_ptr, aff_idx=aff_idx)


def _kernel_args(a):
    return (a['q'], a['pl_ptr'], a['pl_sites'], a['pl_rule'], a['pl_k'], a['tab_ptr'], a['tab_cols'],
            a['tables'], a['aff_ptr'], a['aff_idx'])


def _kernel_seed(seq):
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def _evolve(arrays, spins, t, kernel_seed, log_size=0):
    log_times = np.zeros(log_size)
    log_pl = np.zeros(log_size, dtype=np.int64)
    log_col = np.zeros(log_size, dtype=np.int64)
    events, last = kmc_kernel.run_kernel(spins, float(t), kernel_seed, *_kernel_args(arrays),
                                         log_times, log_pl, log_col)
    logged = min(events, log_size)
    return events, last, (log_times[:logged], log_pl[:logged], log_col[:logged])


def total_rate(run, spins):
    arrays = run.arrays()
    rates = np.zeros(len(arrays['pl_rule']))
    for p in range(rates.size):
        rule = arrays['pl_rule'][p]
        sites = arrays['pl_sites'][arrays['pl_ptr'][p]:arrays['pl_ptr'][p + 1]]
        row = int(np.asarray(spins)[sites] @ radix_weights(arrays['q'], sites.size))
        cols = arrays['tab_cols'][rule]
        start = arrays['tab_ptr'][rule] + row * cols
        rates[p] = arrays['tables'][start:start + cols].sum()
    return float(rates.sum())


# ====================================================================
# API
# ====================================================================
def gillespie_run(run, eta0, seed=None):
    """
    Sample one trajectory of the process up to the run's horizon.
    ----------
    Parameters:
        run: SimulationRun
        eta0: initial configuration
        seed: kernel seed, default the first replica stream of the run
    ----------
    Returns:
        GillespieResult with the final configuration and, when the run logs events,
        a (time, site, spin) table of the first `run.log_events` events
    """
    spins = check_config(eta0, run.rates.q, run.torus).copy()
    if run.horizon == 0:
        return GillespieResult(spins, 0, 0.0, False, _event_frame(run, [], [], []))
    seed = _kernel_seed(run.replica_seeds()[0]) if seed is None else int(seed)
    events, last, log = _evolve(run.arrays(), spins, run.horizon, seed, run.log_events)
    if 0 < run.log_events < events:
        logger.warning('event log kept the first %d of %d events', run.log_events, events)
    absorbed = total_rate(run, spins) <= 0
    if absorbed:
        logger.warning('absorbing state reached at t=%.6g after %d events', last, events)
    logger.debug('gillespie: %d events up to t=%.6g', events, run.horizon)
    return GillespieResult(spins, events, last, absorbed, _event_frame(run, *log))


def _event_frame(run, times, pls, cols):
    placements = run.rates.placements(run.torus)
    q, rows = run.rates.q, []
    for t, p, col in zip(times, pls, cols):
        shape = placements[int(p)].shape_sites
        for site, spin in zip(shape, digit_table(q, len(shape))[int(col)]):
            rows.append((float(t), int(site), int(spin)))
    return pd.DataFrame(rows, columns=['time', 'site', 'spin'])


def occupation_measure(run, eta0, seed=None):
    """Fraction of [0, horizon] spent in each state; a TorusMeasure on the run's torus"""
    q, n = run.rates.q, run.torus.size
    if q ** n > MAX_OCCUPATION_STATES:
        raise CapacityError('Occupation measure needs q^N <= {}'.format(MAX_OCCUPATION_STATES))
    if run.horizon <= 0:
        raise ValueError('Occupation measure needs a positive horizon')
    spins = check_config(eta0, q, run.torus).copy()
    seed = _kernel_seed(run.replica_seeds()[0]) if seed is None else int(seed)
    occupation = np.zeros(q ** n)
    events = kmc_kernel.occupation_kernel(spins, float(run.horizon), seed, *_kernel_args(run.arrays()),
                                          radix_weights(q, n), occupation)
    logger.debug('occupation: %d events over t=%.6g', events, run.horizon)
    return TorusMeasure(run.torus, q, occupation / occupation.sum())


def window_translates(torus, window):
    """Every torus translate of a window, one row per translate"""
    window = list(Window(window))
    return np.array([[torus.shift(s, torus.coords(x)) for s in window] for x in range(torus.size)],
                    dtype=np.int64).reshape(torus.size, len(window))


def _replica_chunk(run, seeds, t, translates):
    q = run.rates.q
    weights = radix_weights(q, translates.shape[1])
    counts = np.zeros(q ** translates.shape[1], dtype=np.int64)
    events = []
    arrays = run.arrays()
    for seq in seeds:
        rng = np.random.default_rng(seq)
        spins = run.initial.sample(run.torus, q, rng)
        n_events = 0
        if t > 0:
            n_events, _, _ = _evolve(arrays, spins, t, _kernel_seed(seq))
        counts += np.bincount(spins[translates] @ weights, minlength=counts.size)
        events.append(n_events)
    return counts, events


def _run_replicas(run, t, translates):
    seeds = run.replica_seeds()
    workers = max(1, min(int(run.workers), len(seeds)))
    chunks = [list(c) for c in np.array_split(np.arange(len(seeds)), workers)]
    args = [(run, [seeds[i] for i in chunk], t, translates) for chunk in chunks]
    if workers == 1:
        results = [_replica_chunk(*a) for a in args]
    else:
        with mp.Pool(processes=workers) as pool:
            results = pool.starmap(_replica_chunk, args)
    # reduction in replica order
    counts = sum(r[0] for r in results)
    events = [e for r in results for e in r[1]]
    return counts, events


def ensemble_window_marginal(run, w, t, pool_translations=False):
    """
    Evolve every replica from the initial law to time t and count the window configuration;
    with `pool_translations`, every torus translate of the window is counted as well.
    """
    if t < 0:
        raise ValueError('Time must be non-negative, got {}'.format(t))
    w = Window(w)
    translates = window_translates(run.torus, w) if pool_translations else np.array([list(w)], dtype=np.int64)
    counts, events = _run_replicas(run, t, translates)
    logger.info('ensemble at t=%g: %d replicas, %d events, %d samples',
                t, run.replicas, sum(events), int(counts.sum()))
    return EmpiricalMarginal(w, counts, run.rates.q, run.replicas)


def replica_event_counts(run, t=None):
    """Number of events of each replica up to time t, default the horizon"""
    t = run.horizon if t is None else t
    _, events = _run_replicas(run, t, np.zeros((1, 0), dtype=np.int64))
    return events


def attractor_residual(emp, spec, floor=COUNT_FLOOR):
    """
    max over interior sites x, spins i, j and boundary patterns seen at least `floor` times of
        |nu(i | pattern) gamma_x(j | pattern) - nu(j | pattern) gamma_x(i | pattern)|
    """
    q = emp.q
    window = emp.window
    worst, used = 0.0, 0
    for x in window:
        boundary, kernel = spec.kernel(Window([x]))
        if not set(boundary) <= set(window):
            continue
        joint = emp.counts_on(Window([x]).union(boundary)).reshape(-1, q)
        totals = joint.sum(axis=1)
        seen = totals >= floor
        if not seen.any():
            continue
        used += int(seen.sum())
        cond = joint[seen] / totals[seen, None]
        gamma = kernel[seen]
        cross = cond[:, :, None] * gamma[:, None, :] - cond[:, None, :] * gamma[:, :, None]
        worst = max(worst, float(np.abs(cross).max()))
    if not used:
        raise InsufficientDataError('No boundary pattern reaches {} samples'.format(floor))
    logger.debug('attractor residual %.6g over %d patterns', worst, used)
    return worst


@dataclass(frozen=True)
class AttractorTrend:
    rises: int
    worst_rise: float
    ratio: float
    passed: bool


def attractor_trend(residuals, noise=ATTRACTOR_NOISE, factor=ATTRACTOR_FACTOR):
    """
    Residuals in time order must be nonincreasing up to one rise of at most `noise` (relative to
    the previous value) and end at or below first / factor.
    """
    r = np.asarray(residuals, dtype=float)
    if r.size < 2 or not np.all(np.isfinite(r)):
        return AttractorTrend(0, np.nan, np.nan, False)
    prev, step = r[:-1], np.diff(r)
    rel = np.where(step > 0, step / np.where(prev > 0, prev, 1.0), 0.0)
    rel = np.where((step > 0) & (prev == 0), np.inf, rel)
    rises = int((step > 0).sum())
    worst = float(rel.max())
    ratio = float(r[-1] / r[0]) if r[0] > 0 else (0.0 if r[-1] == 0 else np.inf)
    passed = rises <= 1 and worst <= noise and ratio <= 1.0 / factor
    logger.debug('attractor trend: %d rises (worst %.3g), last/first %.3g', rises, worst, ratio)
    return AttractorTrend(rises, worst, ratio, bool(passed))
