"""Exhaustive greedy regression-tree oracle in plain Python.

Written independently of the library: every split of every feature at every
midpoint between distinct values is scored with the second-order gain, and
ties resolve to the lowest feature index, then the lowest threshold.
"""


def _gain(gl, hl, gr, hr, lam, gamma):
    g = gl + gr
    h = hl + hr
    return 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - g * g / (h + lam)) - gamma


def oracle_tree(rows, grads, hess, max_depth, lam=0.0, gamma=0.0, min_child_weight=1.0):
    """Nested tuples: ``("leaf", w)`` or ``("split", f, thr, left, right)``."""
    idx = list(range(len(rows)))
    return _grow(rows, grads, hess, idx, 0, max_depth, lam, gamma, min_child_weight)


def _grow(rows, g, h, idx, depth, max_depth, lam, gamma, mcw):
    G = sum(g[i] for i in idx)
    H = sum(h[i] for i in idx)
    leaf = ("leaf", -G / (H + lam) if H + lam > 0 else 0.0)
    if depth >= max_depth or len(idx) < 2:
        return leaf
    best = None
    for f in range(len(rows[0])):
        values = sorted(set(rows[i][f] for i in idx))
        for a, b in zip(values, values[1:]):
            thr = 0.5 * (a + b)
            left = [i for i in idx if rows[i][f] < thr]
            right = [i for i in idx if not rows[i][f] < thr]
            gl = sum(g[i] for i in left)
            hl = sum(h[i] for i in left)
            gr = G - gl
            hr = H - hl
            if hl < mcw or hr < mcw or hl + lam <= 0 or hr + lam <= 0:
                continue
            gain = _gain(gl, hl, gr, hr, lam, gamma)
            if best is None or gain > best[0]:
                best = (gain, f, thr, left, right)
    if best is None or not best[0] > 0:
        return leaf
    _, f, thr, left, right = best
    return ("split", f, thr,
            _grow(rows, g, h, left, depth + 1, max_depth, lam, gamma, mcw),
            _grow(rows, g, h, right, depth + 1, max_depth, lam, gamma, mcw))


def oracle_predict(tree, row):
    while tree[0] == "split":
        _, f, thr, left, right = tree
        tree = left if row[f] < thr else right
    return tree[1]


def fixture_datasets(seed=20191230, count=120):
    """Small integer datasets (2..8 rows) whose targets have an integer mean.

    Integer statistics keep every gradient sum exact, so oracle and library
    see identical floating-point inputs to the gain formula.
    """
    import numpy as np

    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        n = int(rng.integers(2, 9))
        p = int(rng.integers(1, 4))
        X = rng.integers(0, 5, size=(n, p)).astype(float)
        y = rng.integers(-6, 7, size=n).astype(float)
        y[-1] += -(y.sum() % n)
        depth = int(rng.integers(1, 5))
        out.append((X, y, depth))
    return out
