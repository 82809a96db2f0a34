import json
import logging
import os
from dataclasses import dataclass, field

from .errors import ConfigError

"""
Experiment configs: JSON documents with the sections

    model       potential file or preset, beta, q, torus sides, mode (torus | transfer)
    dynamics    list of rate families with mixture weights
    task        name (check | evolve | entropy | reverse | simulate) and its fields
    output      output directory
    seed        root seed (unsigned 64-bit)
    tolerances  overrides of the default tolerances

`validate` reports every malformed field with its dotted path before anything runs.
"""
logger = logging.getLogger(__name__)

TASKS = ('check', 'evolve', 'entropy', 'reverse', 'simulate')
PRESETS = ('zero', 'ising', 'potts', 'field')
FAMILIES = ('heat_bath', 'cyclic', 'file')
MODES = ('torus', 'transfer')
LAWS = ('uniform', 'product', 'point', 'gibbs', 'transfer')
REQUIRED = ('model', 'dynamics', 'task', 'output')

DEFAULT_TOLERANCES = {
    'dlr': 1e-12,
    'stationarity': 1e-10,
    'switching': 1e-10,
    'reversal': 1e-12,
    'oscillation': 1e-10,
    'uniformization': 1e-12,
    'monotonicity': 1e-10,
    'entropy_sign': 1e-12,
    'occupation_tv': 0.02,
    'count_floor': 30,
    'attractor_noise': 0.1,
    'attractor_factor': 5.0,
}


@dataclass
class ExperimentConfig:
    model: dict
    dynamics: list
    task: dict
    output: str
    seed: int = 0
    workers: int = 1
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    base_dir: str = '.'
    document: dict = field(default_factory=dict, repr=False)

    @property
    def task_name(self):
        return self.task['name']

    def path(self, relative):
        return relative if os.path.isabs(relative) else os.path.join(self.base_dir, relative)


# ------------ Field checks ------------ #
def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


class _Diagnostics(list):

    def need(self, ok, path, msg):
        if not ok:
            self.append('{}: {}'.format(path, msg))
        return ok


def _check_model(model, base_dir, diag):
    if not diag.need(isinstance(model, dict), 'model', 'must be an object'):
        return
    has_file, preset = 'potential' in model, model.get('preset')
    diag.need(has_file or preset is not None, 'model', 'needs `potential` or `preset`')
    if has_file:
        diag.need(os.path.isfile(os.path.join(base_dir, str(model['potential']))), 'model.potential',
                  'file {!r} does not exist'.format(model['potential']))
    if preset is not None:
        diag.need(preset in PRESETS, 'model.preset', 'must be one of {}'.format(', '.join(PRESETS)))
    for key in ('beta', 'coupling', 'field'):
        if key in model:
            # any sign is physical
            diag.need(_is_number(model[key]), 'model.' + key, 'must be a number')
    if 'q' in model:
        q = model['q']
        if diag.need(_is_int(q), 'model.q', 'must be an integer'):
            diag.need(q >= 2, 'model.q', 'q={} leaves a single-state space, need q >= 2'.format(q))
            diag.need(preset != 'ising' or q == 2, 'model.q', 'the ising preset has q=2')
    torus = model.get('torus')
    if diag.need(torus is not None, 'model.torus', 'is required'):
        diag.need(isinstance(torus, list) and torus and all(_is_int(s) and s > 0 for s in torus),
                  'model.torus', 'must be a non-empty list of positive side lengths')
    if 'mode' in model:
        diag.need(model['mode'] in MODES, 'model.mode', 'must be one of {}'.format(', '.join(MODES)))


def _check_dynamics(dynamics, base_dir, diag):
    if not diag.need(isinstance(dynamics, list) and dynamics, 'dynamics', 'must be a non-empty list'):
        return
    for k, entry in enumerate(dynamics):
        path = 'dynamics[{}]'.format(k)
        if not diag.need(isinstance(entry, dict), path, 'must be an object'):
            continue
        family = entry.get('family')
        diag.need(family in FAMILIES, path + '.family', 'must be one of {}'.format(', '.join(FAMILIES)))
        if 'weight' in entry:
            diag.need(_is_number(entry['weight']) and entry['weight'] >= 0, path + '.weight',
                      'must be a non-negative number')
        if family == 'cyclic' and 'kappa' in entry:
            diag.need(_is_number(entry['kappa']) and entry['kappa'] > 0, path + '.kappa', 'must be positive')
        if family == 'file':
            ok = isinstance(entry.get('path'), str) and os.path.isfile(os.path.join(base_dir, entry['path']))
            diag.need(ok, path + '.path', 'rate file {!r} does not exist'.format(entry.get('path')))


def _check_law(law, path, diag):
    if not diag.need(isinstance(law, dict), path, 'must be an object'):
        return
    kind = law.get('kind', 'uniform')
    diag.need(kind in LAWS, path + '.kind', 'must be one of {}'.format(', '.join(LAWS)))
    if kind == 'product':
        probs = law.get('single_site')
        diag.need(isinstance(probs, list) and probs and all(_is_number(p) and p >= 0 for p in probs)
                  and abs(sum(probs) - 1.0) < 1e-9, path + '.single_site', 'must be a probability vector')
    if kind == 'point':
        spins = law.get('spins')
        diag.need(isinstance(spins, list) and all(_is_int(s) and s >= 0 for s in spins), path + '.spins',
                  'must be a list of spins')
    if kind in ('gibbs', 'transfer'):
        diag.need(_is_number(law.get('beta')), path + '.beta', 'is required')


def _check_task(task, diag):
    if not diag.need(isinstance(task, dict), 'task', 'must be an object'):
        return
    name = task.get('name')
    if not diag.need(name in TASKS, 'task.name', 'must be one of {}'.format(', '.join(TASKS))):
        return
    if 'nu' in task:
        _check_law(task['nu'], 'task.nu', diag)
    if name in ('evolve', 'simulate'):
        times = task.get('times')
        diag.need(isinstance(times, list) and times and all(_is_number(t) and t >= 0 for t in times),
                  'task.times', 'must be a non-empty list of non-negative times')
    if name == 'entropy':
        diag.need(_is_int(task.get('n_max')) and task.get('n_max', 0) >= 1, 'task.n_max',
                  'must be a positive integer')
    if name == 'simulate':
        diag.need(_is_int(task.get('replicas')) and task.get('replicas', 0) >= 1, 'task.replicas',
                  'must be a positive integer')
        if 'window' in task:
            diag.need(isinstance(task['window'], list) and task['window'], 'task.window',
                      'must be a non-empty list of offsets')
        for key in ('event_log', 'occupation_horizon'):
            if key in task:
                diag.need(_is_number(task[key]) and task[key] >= 0, 'task.' + key, 'must be non-negative')
        if 'pool_translations' in task:
            diag.need(isinstance(task['pool_translations'], bool), 'task.pool_translations', 'must be a boolean')


# ====================================================================
# API
# ====================================================================
def validate(config_text, base_dir='.', task=None):
    """
    Return the ExperimentConfig of a JSON document, or raise ConfigError listing
    every malformed field.
    ----------
    Parameters:
        config_text: JSON text
        base_dir: directory relative paths are resolved against
        task: task name overriding the document's task.name
    """
    try:
        document = json.loads(config_text) if config_text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError('line {} column {}: {}'.format(exc.lineno, exc.colno, exc.msg))
    diag = _Diagnostics()
    if not diag.need(isinstance(document, dict), 'document', 'must be a JSON object'):
        raise ConfigError(diag)
    if task is not None:
        document.setdefault('task', {})
        if isinstance(document['task'], dict):
            document['task'] = dict(document['task'], name=task)
    for key in REQUIRED:
        diag.need(key in document, key, 'is required')
    if 'model' in document:
        _check_model(document['model'], base_dir, diag)
    if 'dynamics' in document:
        _check_dynamics(document['dynamics'], base_dir, diag)
    if 'task' in document:
        _check_task(document['task'], diag)
    if 'output' in document:
        diag.need(isinstance(document['output'], str) and document['output'], 'output', 'must be a path')
    seed = document.get('seed', 0)
    diag.need(_is_int(seed) and 0 <= seed < 2 ** 64, 'seed', 'must be an unsigned 64-bit integer')
    tolerances = dict(DEFAULT_TOLERANCES)
    given = document.get('tolerances', {})
    if diag.need(isinstance(given, dict), 'tolerances', 'must be an object'):
        for key, value in given.items():
            if diag.need(key in DEFAULT_TOLERANCES, 'tolerances.' + key, 'unknown tolerance'):
                if diag.need(_is_number(value) and value > 0, 'tolerances.' + key, 'must be positive'):
                    tolerances[key] = value
    if diag:
        raise ConfigError(diag)
    return ExperimentConfig(document['model'], document['dynamics'], document['task'], document['output'],
                            seed, 1, tolerances, base_dir, document)


def load(filepath, task=None, seed=None, workers=None, out=None):
    """Read and validate a config file; command-line values override the document"""
    if not os.path.isfile(filepath):
        raise ConfigError('config: file {!r} does not exist'.format(filepath))
    with open(filepath, 'rt') as fd:
        config = validate(fd.read(), os.path.dirname(os.path.abspath(filepath)), task)
    if seed is not None:
        config.seed = seed
    if workers is not None:
        config.workers = workers
    if out is not None:
        config.output = out
    logger.debug('config %s: task %s, seed %d', filepath, config.task_name, config.seed)
    return config
