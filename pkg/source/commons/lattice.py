from functools import lru_cache
from itertools import product

import numpy as np

"""
Finite torus geometry and configuration bookkeeping.

Sites are numbered row-major (last axis fastest). A configuration is an integer
array of spins in {0, ..., q-1}, one per site; the state index of a configuration
is its little-endian mixed-radix value, site 0 being the least significant digit.

Windows are tuples of distinct sites. The window scheme used by the entropy
functionals follows the centered hypercubes
    Lambda_n       = [-2^n + 1, 2^n - 1]^d
    Lambda_tilde_n = [-2^n + n + 1, 2^n - n - 1]^d
placed around the torus center, i.e. the site with coordinates floor(side / 2).
"""
MAX_ENUMERATION = 2 ** 24


class Window(tuple):
    """Ordered tuple of distinct sites"""

    def __new__(cls, sites=()):
        sites = tuple(int(s) for s in sites)
        if len(set(sites)) != len(sites):
            raise ValueError('Window sites must be distinct: {}'.format(sites))
        return super().__new__(cls, sites)

    def union(self, other):
        seen = set(self)
        return Window(tuple(self) + tuple(s for s in other if s not in seen))

    def minus(self, other):
        other = set(other)
        return Window(s for s in self if s not in other)

    def positions(self, sites):
        # position of each of `sites` inside this window
        lookup = {s: i for i, s in enumerate(self)}
        try:
            return np.array([lookup[s] for s in sites], dtype=np.int64)
        except KeyError as exc:
            raise ValueError('Site {} is not in the window'.format(exc.args[0]))

    def issubset(self, other):
        return set(self) <= set(other)


class Torus:

    def __init__(self, sides):
        if isinstance(sides, int):
            sides = (sides,)
        sides = tuple(int(s) for s in sides)
        if not sides or any(s <= 0 for s in sides):
            raise ValueError('Torus side lengths must be positive, got {}'.format(sides))
        self.sides = sides
        self.dimension = len(sides)
        self.size = int(np.prod(sides))
        # row-major strides
        self.strides = tuple(int(np.prod(sides[k + 1:])) for k in range(self.dimension))
        self._coords = np.array(list(product(*(range(s) for s in sides))), dtype=np.int64) \
            .reshape(self.size, self.dimension)

    def __repr__(self):
        return 'Torus({})'.format('x'.join(map(str, self.sides)))

    def __eq__(self, other):
        return isinstance(other, Torus) and other.sides == self.sides

    def __hash__(self):
        return hash(self.sides)

    @property
    def coordinates(self):
        return self._coords

    def coords(self, site):
        return tuple(int(c) for c in self._coords[site])

    def site(self, coords):
        coords = np.asarray(coords, dtype=np.int64) % np.asarray(self.sides)
        return int(np.dot(coords, self.strides))

    def shift(self, site, offset):
        return self.site(self._coords[site] + np.asarray(offset, dtype=np.int64))

    def shift_all(self, offset):
        # image of every site under the shift, as an index array
        shifted = (self._coords + np.asarray(offset, dtype=np.int64)) % np.asarray(self.sides)
        return shifted @ np.asarray(self.strides, dtype=np.int64)

    def displacement(self, a, b):
        # minimal-image displacement from site a to site b, components in (-side/2, side/2]
        sides = np.asarray(self.sides)
        delta = (self._coords[b] - self._coords[a]) % sides
        delta = np.where(delta > sides // 2, delta - sides, delta)
        return tuple(int(c) for c in delta)

    def distance(self, a, b):
        # sup-norm torus metric
        return max(abs(c) for c in self.displacement(a, b))

    @property
    def center(self):
        return self.site([s // 2 for s in self.sides])

    def window(self, offsets, anchor=0):
        """Window of the sites anchor + offset, offsets given as d-vectors"""
        return Window(self.shift(anchor, off) for off in offsets)

    def box(self, radius, center=None):
        """
        Sup-norm ball of the given radius around `center` (default: torus center),
        listed in row-major order of the offsets. A negative radius yields the empty window.
        """
        if radius < 0:
            return Window()
        if any(2 * radius + 1 > s for s in self.sides):
            raise ValueError('Box of radius {} does not fit into {!r}'.format(radius, self))
        center = self.center if center is None else center
        return self.window(box_offsets(self.dimension, radius), center)

    def in_range(self, sites):
        return all(0 <= s < self.size for s in sites)


@lru_cache(maxsize=None)
def box_offsets(d, radius):
    return tuple(product(range(-radius, radius + 1), repeat=d))


@lru_cache(maxsize=64)
def digit_table(q, n):
    """
    All configurations of n sites with q spins in state-index order; row k holds the
    little-endian digits of k.
    """
    if q ** n > MAX_ENUMERATION:
        raise ValueError('Cannot enumerate {}^{} configurations'.format(q, n))
    idx = np.arange(q ** n, dtype=np.int64)
    table = (idx[:, None] // (q ** np.arange(n, dtype=np.int64))[None, :]) % q
    table.setflags(write=False)
    return table


def radix_weights(q, n):
    return q ** np.arange(n, dtype=np.int64)


def check_config(spins, q, torus=None):
    spins = np.asarray(spins)
    if spins.ndim != 1:
        raise ValueError('A configuration is a flat spin array')
    if torus is not None and spins.size != torus.size:
        raise ValueError('Configuration has {} spins, torus has {} sites'.format(spins.size, torus.size))
    if spins.size and (spins.min() < 0 or spins.max() >= q):
        raise ValueError('Spin values must lie in [0, {}), got {}'.format(q, spins.tolist()))
    return spins.astype(np.int64)


# ====================================================================
# API
# ====================================================================
def encode_config(spins, q):
    """
    Return the little-endian mixed-radix state index of a configuration.
    ----------
    Parameters:
        spins: sequence of spins in {0, ..., q-1}
        q: local state count
    ----------
    Returns:
        index: python int in [0, q^N)
    """
    spins = check_config(spins, q)
    index = 0
    for s in spins[::-1]:
        index = index * q + int(s)
    return index


def encode_rows(rows, q):
    # vectorized encode of an (m, n) array of configurations
    rows = np.asarray(rows, dtype=np.int64)
    return rows @ radix_weights(q, rows.shape[1])


def decode_config(index, q, n):
    if index < 0 or index >= q ** n:
        raise ValueError('State index {} out of range for {}^{} states'.format(index, q, n))
    spins = np.empty(n, dtype=np.int64)
    for k in range(n):
        index, spins[k] = divmod(index, q)
    return spins


def translate_config(spins, torus, shift):
    """(tau_x eta)_y = eta_{y - x}, wrapped on the torus"""
    spins = np.asarray(spins)
    out = np.empty_like(spins)
    out[torus.shift_all(shift)] = spins
    return out


def project_window(spins, window):
    return tuple(int(s) for s in np.asarray(spins)[list(window)])


def window_index(spins, window, q):
    # state index of the projection onto the window
    return encode_config(project_window(spins, window), q) if len(window) else 0
