"""
Command line of the interacting-particle-system entropy laboratory.
Models:
    see data/models/ (potentials), data/experiments/ (experiment configs)
Tasks supported:
    - Exact invariant suites (DLR, stationarity, switching, oscillation, ...) => check
    - Exact trajectory with relative entropy and entropy loss columns => evolve
    - Windowed entropy functionals g^n, g~^n, S_n, s_n => entropy
    - Time-reversed rate family => reverse
    - Gillespie ensembles and the attractor residual => simulate
Usage:
    python ips.py check --config data/experiments/zero_check.json
    python ips.py simulate --config data/experiments/potts_attractor.json --workers 4 --out result/attractor
    etc.
See details:
    python ips.py -h
"""
import argparse
import logging
import sys
import traceback

from source.algorithms.laboratory import Laboratory, run
from source.commons import experiment_config
from source.commons.errors import IpsError
from source.commons.utils import format_report

APP_NAME = 'IPS ENTROPY LAB'
EXIT_USAGE = 2
LOG_FORMAT = '%(asctime)s [%(filename)s:%(lineno)s] %(levelname)s %(message)s'


def process_args(argv=None):
    """
    To parse users' args
    """
    parser = argparse.ArgumentParser(
        description='{}: relative-entropy experiments for interacting particle systems, '
                    'supporting the tasks {}.'.format(APP_NAME, ', '.join(Laboratory.tasks)))
    parser.add_argument('task', metavar='TASK', help='task to run ({})'.format(', '.join(Laboratory.tasks)))
    parser.add_argument('--config', metavar='PATH', required=True, help='experiment config (JSON)')
    parser.add_argument('--seed', metavar='U64', type=int, help='root seed, overrides the config')
    parser.add_argument('--workers', metavar='N', type=int, default=1, help='worker processes (default=1)')
    parser.add_argument('--out', metavar='DIR', help='output directory, overrides the config')
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help='debug logging and tracebacks')
    verbosity.add_argument('-q', '--quiet', action='store_true', help='warnings only')
    args = parser.parse_args(argv)
    if args.task not in Laboratory.tasks:
        print('*** Usage error: task {} is not supported.'.format(args.task))
        sys.exit(EXIT_USAGE)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print('*** Usage error: --seed {} should be an unsigned 64-bit integer.'.format(args.seed))
        sys.exit(EXIT_USAGE)
    if args.workers <= 0:
        print('*** Usage error: --workers {} should be positive.'.format(args.workers))
        sys.exit(EXIT_USAGE)
    return args


def main(argv=None):
    args = process_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(format=LOG_FORMAT, datefmt='%Y-%m-%d %H:%M:%S', level=level)
    try:
        config = experiment_config.load(args.config, args.task, args.seed, args.workers, args.out)
        status, output = run(config)
    except IpsError as exc:
        kind = type(exc).__name__.replace('Error', '') or 'Ips'
        for line in getattr(exc, 'diagnostics', [exc.error_msg]):
            print('*** {} error: {}'.format(kind, line))
        if args.verbose:
            traceback.print_exc()
        return exc.exit_code
    except ValueError as exc:
        print('*** Usage error: {}'.format(exc))
        if args.verbose:
            traceback.print_exc()
        return EXIT_USAGE
    print(format_report(output.rows()))
    return status


if __name__ == '__main__':
    sys.exit(main())
