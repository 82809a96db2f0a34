import numpy as np
from numba import njit

"""
Compiled continuous-time kinetic Monte Carlo (Gillespie) for local rate families on a torus.

Every rule translate (placement) is a leaf of a sum tree holding its total exit rate
sum_xi c_Delta(eta, xi). An event picks a leaf proportionally to its rate, then a target
xi from the leaf's table row, rewrites the shape sites and refreshes the leaves of all
placements whose neighborhood contains a rewritten site.

Flat layout (CSR style):
    pl_ptr / pl_sites   neighborhood sites of placement p, shape sites first
    pl_rule, pl_k       rule index and shape size of placement p
    tab_ptr, tab_cols   offset and column count of each rule table in `tables`
    aff_ptr / aff_idx   placements whose neighborhood contains a given site
"""


@njit(cache=True)
def _row(p, spins, q, pl_ptr, pl_sites):
    row, scale = 0, 1
    for j in range(pl_ptr[p], pl_ptr[p + 1]):
        row += spins[pl_sites[j]] * scale
        scale *= q
    return row


@njit(cache=True)
def _leaf_rate(p, spins, q, pl_ptr, pl_sites, pl_rule, tab_ptr, tab_cols, tables):
    rule = pl_rule[p]
    cols = tab_cols[rule]
    start = tab_ptr[rule] + _row(p, spins, q, pl_ptr, pl_sites) * cols
    total = 0.0
    for c in range(cols):
        total += tables[start + c]
    return total


@njit(cache=True)
def _tree_set(tree, leaves, p, value):
    node = leaves + p
    tree[node] = value
    node //= 2
    while node >= 1:
        # parents are recomputed from children, so no round-off accumulates
        tree[node] = tree[2 * node] + tree[2 * node + 1]
        node //= 2


@njit(cache=True)
def _tree_pick(tree, leaves, u):
    node = 1
    while node < leaves:
        left = tree[2 * node]
        if u < left:
            node = 2 * node
        else:
            u -= left
            node = 2 * node + 1
    return node - leaves, u


@njit(cache=True)
def _build_tree(spins, q, n_pl, pl_ptr, pl_sites, pl_rule, tab_ptr, tab_cols, tables):
    leaves = 1
    while leaves < max(n_pl, 1):
        leaves *= 2
    tree = np.zeros(2 * leaves)
    for p in range(n_pl):
        tree[leaves + p] = _leaf_rate(p, spins, q, pl_ptr, pl_sites, pl_rule, tab_ptr, tab_cols, tables)
    for node in range(leaves - 1, 0, -1):
        tree[node] = tree[2 * node] + tree[2 * node + 1]
    return tree, leaves


@njit(cache=True)
def _fire(spins, tree, leaves, q, pl_ptr, pl_sites, pl_rule, pl_k, tab_ptr, tab_cols, tables,
          aff_ptr, aff_idx, weights, state):
    """One event; returns (placement, column, new state index) or (-1, -1, state) if nothing fired"""
    p, u = _tree_pick(tree, leaves, np.random.random() * tree[1])
    rule = pl_rule[p]
    cols = tab_cols[rule]
    start = tab_ptr[rule] + _row(p, spins, q, pl_ptr, pl_sites) * cols
    col = -1
    for c in range(cols):
        rate = tables[start + c]
        if rate > 0.0:
            col = c
            if u < rate:
                break
            u -= rate
    if col < 0:
        return -1, -1, state
    rest = col
    base = pl_ptr[p]
    for j in range(pl_k[p]):
        site = pl_sites[base + j]
        new = rest % q
        rest //= q
        if weights.size:
            state += (new - spins[site]) * weights[site]
        spins[site] = new
    for j in range(pl_k[p]):
        site = pl_sites[base + j]
        for a in range(aff_ptr[site], aff_ptr[site + 1]):
            r = aff_idx[a]
            _tree_set(tree, leaves, r, _leaf_rate(r, spins, q, pl_ptr, pl_sites, pl_rule,
                                                  tab_ptr, tab_cols, tables))
    return p, col, state


@njit(cache=True)
def run_kernel(spins, t_end, seed, q, pl_ptr, pl_sites, pl_rule, pl_k, tab_ptr, tab_cols, tables,
               aff_ptr, aff_idx, log_times, log_pl, log_col):
    """
    Evolve `spins` in place up to time t_end; the first len(log_times) events are logged.
    Returns (event count, time of the last event).
    """
    np.random.seed(seed)
    n_pl = pl_rule.size
    tree, leaves = _build_tree(spins, q, n_pl, pl_ptr, pl_sites, pl_rule, tab_ptr, tab_cols, tables)
    no_weights = np.zeros(0, dtype=np.int64)
    t, last, events = 0.0, 0.0, 0
    while tree[1] > 0.0:
        t += np.random.exponential(1.0 / tree[1])
        if t > t_end:
            break
        p, col, _ = _fire(spins, tree, leaves, q, pl_ptr, pl_sites, pl_rule, pl_k, tab_ptr, tab_cols,
                          tables, aff_ptr, aff_idx, no_weights, 0)
        if p < 0:
            continue
        if events < log_times.size:
            log_times[events] = t
            log_pl[events] = p
            log_col[events] = col
        events += 1
        last = t
    return events, last


@njit(cache=True)
def occupation_kernel(spins, t_end, seed, q, pl_ptr, pl_sites, pl_rule, pl_k, tab_ptr, tab_cols, tables,
                      aff_ptr, aff_idx, weights, occupation):
    """Same dynamics, accumulating the time spent in every state index into `occupation`"""
    np.random.seed(seed)
    n_pl = pl_rule.size
    tree, leaves = _build_tree(spins, q, n_pl, pl_ptr, pl_sites, pl_rule, tab_ptr, tab_cols, tables)
    state = 0
    for s in range(spins.size):
        state += spins[s] * weights[s]
    t, events = 0.0, 0
    while True:
        if tree[1] <= 0.0:
            occupation[state] += t_end - t
            break
        dt = np.random.exponential(1.0 / tree[1])
        if t + dt > t_end:
            occupation[state] += t_end - t
            break
        occupation[state] += dt
        t += dt
        p, _, state = _fire(spins, tree, leaves, q, pl_ptr, pl_sites, pl_rule, pl_k, tab_ptr, tab_cols,
                            tables, aff_ptr, aff_idx, weights, state)
        if p >= 0:
            events += 1
    return events
