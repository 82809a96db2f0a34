import hashlib
import json
import os
import platform
import time

import numpy as np
import pandas as pd
from tabulate import tabulate

FLOAT_FORMAT = '%.17g'


# sum_x d(x) log(nu(x) / mu(x)) with the extended-real conventions of the entropy loss:
# a nu-null state contributes 0 without inflow and -inf with inflow
def flow_log_pairing(flow, nu, mu):
    flow, nu, mu = (np.asarray(a, dtype=float) for a in (flow, nu, mu))
    charged = nu > 0
    if np.any(~charged & (flow > 0)):
        return -np.inf
    safe_nu = np.where(charged, nu, 1.0)
    safe_mu = np.where(charged, mu, 1.0)
    with np.errstate(divide='ignore'):
        logs = np.where(charged, np.log(safe_nu / safe_mu), 0.0)
    return float(np.sum(np.where(charged, flow * logs, 0.0)))


# sum of extended reals where -inf absorbs everything finite
def ext_sum(values):
    values = np.asarray(values, dtype=float)
    if values.size and np.isneginf(values).any():
        return -np.inf
    return float(values.sum())


def format_report(rows, headers=('check', 'value', 'bound', 'passed')):
    table = [[r.get(h, '') if isinstance(r, dict) else r[i] for i, h in enumerate(headers)] for r in rows]
    return tabulate(table, headers=headers, tablefmt='grid', floatfmt='.6g')


def write_csv(rows, path, columns=None):
    df = pd.DataFrame(rows, columns=columns)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def config_hash(config):
    canonical = json.dumps(config, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def package_versions():
    import numba
    import scipy
    import tabulate as tabulate_pkg
    return {'python': platform.python_version(), 'numpy': np.__version__, 'scipy': scipy.__version__,
            'pandas': pd.__version__, 'numba': numba.__version__, 'tabulate': tabulate_pkg.__version__}


def write_manifest(out_dir, config, seed, outputs):
    """Manifest accompanying every task output; the timestamp lives only here"""
    manifest = {'config_sha256': config_hash(config), 'seed': seed, 'versions': package_versions(),
                'outputs': sorted(outputs), 'timestamp': time.strftime('%Y-%m-%dT%H:%M:%S%z')}
    path = os.path.join(out_dir, 'manifest.json')
    with open(path, 'wt') as fd:
        json.dump(manifest, fd, indent=2, sort_keys=True)
    return path


def write_summary(out_dir, checks):
    summary = {'passed': all(c['passed'] for c in checks.values()), 'checks': checks}
    path = os.path.join(out_dir, 'summary.json')
    with open(path, 'wt') as fd:
        json.dump(summary, fd, indent=2, sort_keys=True, default=_json_number)
    return path


def _json_number(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.bool_):
        return bool(value)
    raise TypeError('Cannot serialize {!r}'.format(value))
