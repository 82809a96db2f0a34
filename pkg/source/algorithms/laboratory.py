import logging
import os
from dataclasses import dataclass, field

import numpy as np

from source.commons.errors import InsufficientDataError
from source.commons.model_loader import write_rate_family
from source.commons.utils import write_csv, write_manifest, write_summary
from . import ctmc, dynamics, entropy, gibbs, montecarlo
from .base_experiment import BaseExperiment

logger = logging.getLogger(__name__)

CHECK_STATES = 2 ** 16
SWITCHING_PAIRS = 5


@dataclass
class TaskOutput:
    tables: dict = field(default_factory=dict)
    families: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c['passed'] for c in self.checks.values())

    def check(self, name, value, bound, passed):
        self.checks[name] = {'value': value, 'bound': bound, 'passed': bool(passed)}

    def rows(self):
        return [{'check': k, 'value': c['value'], 'bound': c['bound'], 'passed': c['passed']}
                for k, c in self.checks.items()]


class Laboratory(BaseExperiment):

    def __init__(self, config):
        super().__init__(config)
        self.tol = config.tolerances

    tasks = (
        # --- exact invariant suites
        'check',
        # --- exact trajectory with entropy columns
        'evolve',
        # --- windowed entropy functionals
        'entropy',
        # --- time-reversed rates
        'reverse',
        # --- Gillespie ensembles and the attractor residual
        'simulate'
    )

    def run_task(self, task, **kwargs):
        if task not in self.tasks:
            raise ValueError('Task {!r} is not supported'.format(task))
        logger.info('running task %s', task)
        return getattr(self, task)(**kwargs) if len(kwargs) > 0 else getattr(self, task)()

    # ------------ check ------------ #
    def check(self):
        out = TaskOutput()
        spec, rates, torus = self.spec, self.rates, self.torus
        report = dynamics.check_rate_conditions(rates, spec, torus, exact_limit=CHECK_STATES)
        for name, c in report.checks.items():
            out.check(name, c.value, c.note, c.passed)
        tail = report.beta_tail
        out.check('beta_tail_beyond_range', tail[-1] if tail else float('nan'), 0.0, bool(tail) and tail[-1] == 0)
        center = torus.center
        site, pair = (center,), (center, torus.shift(center, (1,) + (0,) * (torus.dimension - 1)))
        tol = self.tol['dlr']
        norm = max(gibbs.normalization_residual(spec, site), gibbs.normalization_residual(spec, pair))
        out.check('normalization', norm, tol, norm <= tol)
        cons = gibbs.consistency_residual(spec, site, pair)
        out.check('consistency', cons, tol, cons <= tol)
        if self.q ** torus.size > CHECK_STATES:
            logger.warning('%d states: exact measure checks skipped', self.q ** torus.size)
            return out
        mu = gibbs.exact_gibbs(self.potential, torus)
        dlr = gibbs.dlr_residual(mu, spec, site)
        out.check('dlr', dlr, tol, dlr <= tol)
        ratio = gibbs.log_ratio_bound_check(mu, site, pair)
        out.check('log_ratio_bound', ratio.value, ratio.bound, ratio.holds)
        gen = dynamics.assemble_generator(rates, torus)
        stat = dynamics.stationarity_residual(mu, gen)
        out.check('stationarity', stat, self.tol['stationarity'], stat <= self.tol['stationarity'])
        balance = dynamics.detailed_balance_residual(rates, mu, torus)
        out.check('detailed_balance', balance, 'info', True)
        rhat = dynamics.time_reversal(rates, spec)
        twice = dynamics.rate_distance(dynamics.time_reversal(rhat, spec), rates)
        out.check('reversal_involution', twice, self.tol['reversal'], twice <= self.tol['reversal'])
        rng = np.random.default_rng(self.config.seed)
        states = self.q ** torus.size
        worst = 0.0
        for _ in range(SWITCHING_PAIRS):
            f, g = (rng.random(states) < 0.5).astype(float), (rng.random(states) < 0.5).astype(float)
            for shape in rates.shapes():
                worst = max(worst, dynamics.switching_residual(rates, spec, mu, f, g,
                                                               torus.window(shape, center), rhat))
        out.check('switching', worst, self.tol['switching'], worst <= self.tol['switching'])
        osc = dynamics.max_oscillation_residual(rates, rhat, torus)
        out.check('oscillation', osc, self.tol['oscillation'], osc <= self.tol['oscillation'])
        gen_hat = dynamics.assemble_generator(rhat, torus)
        dual = dynamics.duality_residual(gen, gen_hat, mu, f, g, 1.0)
        out.check('duality', dual, self.tol['stationarity'], dual <= self.tol['stationarity'])
        return out

    # ------------ evolve ------------ #
    def evolve(self):
        out = TaskOutput()
        gen = dynamics.assemble_generator(self.rates, self.torus)
        mu = ctmc.stationary(gen)
        nu = self.torus_law(self.config.task.get('nu'))
        rows = ctmc.entropy_trajectory(nu, mu, gen, self.config.task['times'])
        out.tables['evolve.csv'] = (rows, ['t', 'h', 'g_generator_form', 'g_phi_form'])
        h = np.array([r['h'] for r in rows])
        rise = float(np.diff(h).max()) if h.size > 1 else 0.0
        tol = self.tol['monotonicity']
        out.check('h_nonincreasing', rise, tol, rise <= tol)
        g = np.array([r['g_generator_form'] for r in rows])
        out.check('g_nonpositive', float(g.max()), self.tol['entropy_sign'], g.max() <= self.tol['entropy_sign'])
        phi = np.array([r['g_phi_form'] for r in rows])
        finite = np.isfinite(g) & np.isfinite(phi)
        gap = float((np.abs(g - phi)[finite] / np.maximum(1.0, np.abs(g[finite]))).max()) if finite.any() else 0.0
        same_inf = bool(np.all((g == phi) | finite))
        out.check('forms_agree', gap, 1e-10, gap <= 1e-10 and same_inf)
        return out

    # ------------ entropy ------------ #
    def entropy(self):
        out = TaskOutput()
        task, rates, spec = self.config.task, self.rates, self.spec
        scheme = entropy.TruncationScheme(self.torus)
        mu, nu = self.mu, self.marginal_source(task.get('nu'))
        delta_mu = mu.nonnull_delta()
        const = entropy.boundary_constant(rates, delta_mu) if delta_mu > 0 else np.inf
        rows, s_values = [], []
        sign_tol = self.tol['entropy_sign']
        for n in range(1, task['n_max'] + 1):
            g, g_tilde = entropy.g_n(rates, nu, mu, scheme, n), entropy.g_tilde_n(rates, nu, mu, scheme, n)
            s, big_s = entropy.s_n(rates, spec, nu, scheme, n), entropy.S_n(rates, spec, nu, mu, scheme, n)
            bound = const * scheme.boundary_volume(n)
            rows.append({'n': n, 'volume': scheme.volume(n), 'boundary_volume': scheme.boundary_volume(n),
                         'h': entropy.h_window(nu, mu, scheme.lam(n)), 'g_n': g, 'g_tilde_n': g_tilde,
                         'S_n': big_s, 's_n': s, 'boundary_bound': bound})
            s_values.append(s)
            out.check('s_{}_nonpositive'.format(n), s, sign_tol, s <= sign_tol)
            if np.isfinite(g) and np.isfinite(g_tilde):
                out.check('boundary_{}'.format(n), abs(g - g_tilde), bound, abs(g - g_tilde) <= bound)
        if len(s_values) > 1 and all(np.isfinite(s_values)):
            seq = entropy.corrected_sequence(s_values, scheme)
            for row, value in zip(rows, seq.values):
                row['G_n_corrected'] = value
            out.check('corrected_nonincreasing', seq.values[-1], 'nonincreasing', seq.nonincreasing)
        columns = ['n', 'volume', 'boundary_volume', 'h', 'g_n', 'g_tilde_n', 'S_n', 's_n', 'boundary_bound',
                   'G_n_corrected']
        out.tables['entropy.csv'] = (rows, columns)
        return out

    # ------------ reverse ------------ #
    def reverse(self):
        out = TaskOutput()
        rhat = dynamics.time_reversal(self.rates, self.spec)
        out.families['reversed.rates'] = rhat
        twice = dynamics.rate_distance(dynamics.time_reversal(rhat, self.spec), self.rates)
        out.check('reversal_involution', twice, self.tol['reversal'], twice <= self.tol['reversal'])
        checks = dynamics.reversal_bound_check(self.rates, rhat, self.spec)
        rows = []
        for k, (rule, bc) in enumerate(zip(rhat.rules, checks)):
            rows.append({'rule': k, 'name': rule.name, 'sup_rate': float(self.rates.rules[k].table.max()),
                         'sup_reversed': bc.value, 'bound': bc.bound})
            out.check('reversal_bound_{}'.format(k), bc.value, bc.bound, bc.holds)
        out.tables['reverse.csv'] = (rows, ['rule', 'name', 'sup_rate', 'sup_reversed', 'bound'])
        return out

    # ------------ simulate ------------ #
    def _window(self):
        offsets = self.config.task.get('window')
        if offsets is None:
            return self.torus.box(1)
        offsets = [tuple(o) if isinstance(o, (list, tuple)) else (o,) for o in offsets]
        return self.torus.window(offsets, self.torus.center)

    def simulate(self):
        out = TaskOutput()
        task = self.config.task
        times = sorted(float(t) for t in task['times'])
        run = montecarlo.SimulationRun(self.rates, self.torus, self.initial_law(task.get('nu')), times[-1],
                                       task['replicas'], self.config.seed, int(task.get('event_log', 0)),
                                       self.config.workers)
        window = self._window()
        counts, residuals = [], []
        for t in times:
            emp = montecarlo.ensemble_window_marginal(run, window, t, task.get('pool_translations', False))
            counts += [{'t': t, 'config': k, 'count': int(c)} for k, c in enumerate(emp.counts) if c]
            try:
                res = montecarlo.attractor_residual(emp, self.spec, int(self.tol['count_floor']))
            except InsufficientDataError as exc:
                logger.warning('t=%g: %s', t, exc.error_msg)
                res = float('nan')
            residuals.append({'t': t, 'residual': res, 'samples': emp.samples})
        out.tables['simulate.csv'] = (counts, ['t', 'config', 'count'])
        out.tables['attractor.csv'] = (residuals, ['t', 'residual', 'samples'])
        factor = self.tol['attractor_factor']
        trend = montecarlo.attractor_trend([r['residual'] for r in residuals], self.tol['attractor_noise'], factor)
        out.check('attractor_decrease', trend.ratio, 1.0 / factor, trend.passed)
        if run.log_events:
            eta0 = run.initial.sample(self.torus, self.q, np.random.default_rng(self.config.seed))
            result = montecarlo.gillespie_run(run, eta0)
            out.tables['events.csv'] = (result.event_log, ['time', 'site', 'spin'])
        if task.get('occupation_horizon'):
            out.check(*self._occupation(run, float(task['occupation_horizon'])))
        return out

    def _occupation(self, run, horizon):
        control = montecarlo.SimulationRun(run.rates, run.torus, run.initial, horizon, seed=run.seed)
        eta0 = control.initial.sample(self.torus, self.q, np.random.default_rng(run.seed))
        occupation = montecarlo.occupation_measure(control, eta0)
        mu = ctmc.stationary(dynamics.assemble_generator(run.rates, run.torus))
        tv = 0.5 * float(np.abs(occupation.probs - mu).sum())
        return 'occupation_tv', tv, self.tol['occupation_tv'], tv <= self.tol['occupation_tv']


# ====================================================================
# API
# ====================================================================
def run(config):
    """
    Run the config's task and write its artifacts.
    ----------
    Parameters:
        config: ExperimentConfig
    ----------
    Returns:
        status: 0 when every check passed, 1 otherwise
        output: TaskOutput
    """
    lab = Laboratory(config)
    output = lab.run_task(config.task_name)
    out_dir = config.output
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, (rows, columns) in output.tables.items():
        write_csv(rows, os.path.join(out_dir, name), columns)
        written.append(name)
    for name, family in output.families.items():
        write_rate_family(family, os.path.join(out_dir, name))
        written.append(name)
    write_summary(out_dir, output.checks)
    write_manifest(out_dir, config.document, config.seed, written + ['summary.json'])
    logger.info('task %s: %s, %d files in %s', config.task_name, 'passed' if output.passed else 'FAILED',
                len(written) + 2, out_dir)
    return (0 if output.passed else 1), output
