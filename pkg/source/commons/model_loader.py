import numpy as np

from source.algorithms.dynamics import RateFamily, make_rule
from source.algorithms.gibbs import Potential, Term
from .errors import ConfigError

"""
This file contains functions to read and write the structured-text model files of the
laboratory: potentials (.pot) and rate families (.rates).

Both formats are line based, a `KEY : value` header followed by one data section and
an `EOF` line.

Potential:
    NAME : ising
    TYPE : POTENTIAL
    Q : 2
    DIMENSION : 1
    BETA : 0.3
    TERM_SECTION
    0 ; 1 | -1 1 1 -1
    -1
    EOF

    each term line lists the shape offsets (coordinates separated by `,`, offsets by `;`),
    then `|` and the q^|shape| energies in little-endian order of the shape spins;
    the section ends with `-1`

Rate family:
    NAME : cyclic
    TYPE : RATES
    Q : 3
    DIMENSION : 1
    RULE_SECTION
    RULE cyclic
    SHAPE 0
    NEIGHBORHOOD 0 ; -1 ; 1
    TABLE 27 3
    <27 lines of 3 rates>
    END_RULE
    EOF

    table rows are indexed by the neighborhood spins (shape first, little endian),
    columns by the new shape spins; numbers are written with 17 significant digits
"""
line_no_ = 0
MAX_TABLE_ROWS = 2 ** 20


# ====================================================================
# BACKEND
# ====================================================================
class CannotResolveError(ConfigError):
    def __init__(self, msg):
        super().__init__('LINE[{}] {}'.format(line_no_, msg))


def __get_text(source):
    splits = source.split(':')
    if len(splits) < 2:
        return None
    return splits[1].strip()


def __read_line(fd):
    global line_no_
    line_no_ += 1
    return fd.readline().strip()


def _parse_offsets(text, dimension):
    try:
        offsets = tuple(tuple(int(c) for c in part.replace(',', ' ').split()) for part in text.split(';'))
    except ValueError:
        raise CannotResolveError('Offsets {!r} contain non-integer text'.format(text))
    if not offsets or any(len(o) != dimension for o in offsets):
        raise CannotResolveError('Offsets {!r} do not match dimension {}'.format(text, dimension))
    return offsets


def _format_offsets(offsets):
    return ' ; '.join(','.join(str(c) for c in o) for o in offsets)


def _read_header_int(info, key):
    if key not in info:
        raise CannotResolveError('Missing {} before the data section'.format(key))
    try:
        return int(info[key])
    except ValueError:
        raise CannotResolveError('{} must be an integer, got {!r}'.format(key, info[key]))


def _read_term_section(q, dimension, fd):
    terms = []
    line = __read_line(fd)
    while line != '-1':
        if not line:
            raise CannotResolveError('Term section is not terminated by -1')
        if '|' not in line:
            raise CannotResolveError('Term line needs `offsets | energies`')
        head, values = line.split('|', 1)
        offsets = _parse_offsets(head, dimension)
        try:
            table = np.array([float(v) for v in values.split()])
        except ValueError:
            raise CannotResolveError('Term energies contain non-number text')
        if table.size != q ** len(offsets):
            raise CannotResolveError('Term {} needs {} energies, got {}'.format(offsets, q ** len(offsets), table.size))
        terms.append(Term(offsets, table))
        line = __read_line(fd)
    return tuple(terms)


def _read_rule(name, q, dimension, fd):
    shape = neighborhood = None
    line = __read_line(fd)
    while not line.startswith('TABLE'):
        if line.startswith('SHAPE'):
            shape = _parse_offsets(line[len('SHAPE'):], dimension)
        elif line.startswith('NEIGHBORHOOD'):
            neighborhood = _parse_offsets(line[len('NEIGHBORHOOD'):], dimension)
        else:
            raise CannotResolveError('Unexpected input in rule {}: {}'.format(name, line))
        line = __read_line(fd)
    if shape is None or neighborhood is None:
        raise CannotResolveError('Rule {} needs SHAPE and NEIGHBORHOOD before TABLE'.format(name))
    try:
        n_rows, n_cols = (int(v) for v in line.split()[1:3])
    except ValueError:
        raise CannotResolveError('TABLE needs row and column counts')
    if n_rows != q ** len(neighborhood) or n_cols != q ** len(shape) or n_rows > MAX_TABLE_ROWS:
        raise CannotResolveError('Table of rule {} must be {} x {}'.format(name, q ** len(neighborhood), q ** len(shape)))
    table = np.empty((n_rows, n_cols))
    try:
        for row in range(n_rows):
            splits = __read_line(fd).split()
            if len(splits) != n_cols:
                raise CannotResolveError('Table row {} of rule {} has {} entries'.format(row, name, len(splits)))
            table[row] = [float(v) for v in splits]
    except ValueError:
        raise CannotResolveError('Table of rule {} contains non-number text'.format(name))
    if __read_line(fd) != 'END_RULE':
        raise CannotResolveError('Rule {} is not closed by END_RULE'.format(name))
    try:
        return make_rule(q, shape, neighborhood, table, name)
    except ValueError as exc:
        raise CannotResolveError(str(exc))


def _read_document(filepath, kind):
    global line_no_
    info, data = {}, None
    line_no_ = 0
    with open(filepath, 'rt') as fd:
        line = __read_line(fd)
        while line:
            text = __get_text(line)
            # ------ header
            if line.startswith('NAME'):
                info['NAME'] = text
            elif line.startswith('TYPE'):
                if text != kind:
                    raise CannotResolveError('This file has type {}, not {}'.format(text, kind))
                info['TYPE'] = text
            elif line.startswith('COMMENT'):
                info['COMMENT'] = text
            elif line.startswith(('Q', 'DIMENSION', 'BETA')) and text is not None:
                info[line.split(':')[0].strip()] = text
            # ------ data
            elif line.startswith('TERM_SECTION') and kind == 'POTENTIAL':
                data = _read_term_section(_read_header_int(info, 'Q'), _read_header_int(info, 'DIMENSION'), fd)
            elif line.startswith('RULE_SECTION') and kind == 'RATES':
                q, dimension = _read_header_int(info, 'Q'), _read_header_int(info, 'DIMENSION')
                data = []
                line = __read_line(fd)
                while line.startswith('RULE'):
                    data.append(_read_rule(line[len('RULE'):].strip() or 'rule', q, dimension, fd))
                    line = __read_line(fd)
                continue
            elif line.startswith('EOF'):
                break
            else:
                raise CannotResolveError('Unexpected input: {}'.format(line))
            line = __read_line(fd)
    if data is None:
        raise CannotResolveError('No data section found')
    return info, data


# ====================================================================
# API
# ====================================================================
def read_potential(filepath):
    """
    Return the potential stored in a .pot file.
    ----------
    Parameters:
        filepath: path of the potential file
    ----------
    Returns:
        pot: Potential; a missing BETA header means beta = 1
    """
    info, terms = _read_document(filepath, 'POTENTIAL')
    try:
        beta = float(info.get('BETA', 1.0))
    except ValueError:
        raise CannotResolveError('BETA must be a number, got {!r}'.format(info['BETA']))
    try:
        return Potential(int(info['Q']), int(info['DIMENSION']), beta, terms, info.get('NAME') or 'potential')
    except ValueError as exc:
        raise CannotResolveError(str(exc))


def read_rate_family(filepath):
    info, rules = _read_document(filepath, 'RATES')
    if not rules:
        raise CannotResolveError('Rate file declares no rule')
    return RateFamily(int(info['Q']), int(info['DIMENSION']), tuple(rules), info.get('NAME') or 'rates')


def write_potential(pot, filepath):
    lines = ['NAME : {}'.format(pot.name), 'TYPE : POTENTIAL', 'Q : {}'.format(pot.q),
             'DIMENSION : {}'.format(pot.dimension), 'BETA : {!r}'.format(float(pot.beta)), 'TERM_SECTION']
    for term in pot.terms:
        lines.append('{} | {}'.format(_format_offsets(term.offsets), ' '.join('%.17g' % v for v in term.table)))
    lines += ['-1', 'EOF']
    with open(filepath, 'wt') as fd:
        fd.write('\n'.join(lines) + '\n')
    return filepath


def write_rate_family(rates, filepath):
    lines = ['NAME : {}'.format(rates.name), 'TYPE : RATES', 'Q : {}'.format(rates.q),
             'DIMENSION : {}'.format(rates.dimension), 'RULE_SECTION']
    for rule in rates.rules:
        lines += ['RULE {}'.format(rule.name),
                  'SHAPE {}'.format(_format_offsets(rule.shape)),
                  'NEIGHBORHOOD {}'.format(_format_offsets(rule.neighborhood)),
                  'TABLE {} {}'.format(*rule.table.shape)]
        lines += [' '.join('%.17g' % v for v in row) for row in rule.table]
        lines.append('END_RULE')
    lines.append('EOF')
    with open(filepath, 'wt') as fd:
        fd.write('\n'.join(lines) + '\n')
    return filepath
