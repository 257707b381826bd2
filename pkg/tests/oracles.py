"""Independent reference implementations used to check the library.

Everything here is deliberately naive: explicit loops, dense tensors, and
textbook formulas rather than the vectorized forms under test.
"""
import itertools
import math

import numpy as np


# ---------------------------------------------------------------------------
# finite differences

def central_difference(f, params: list[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    """Numerical gradient of ``f()`` w.r.t. every entry of the arrays in
    ``params``, perturbing them in place."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = f()
            p[idx] = old - h
            down = f()
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic: list[np.ndarray], numeric: list[np.ndarray], floor: float = 1e-8) -> float:
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a, n = np.asarray(a, float).ravel(), np.asarray(n, float).ravel()
        den = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / den)) if a.size else 0.0)
    return worst


# ---------------------------------------------------------------------------
# losses by explicit loops

def mf_loss_loops(R: dict, U: np.ndarray, V: np.ndarray, reg: float) -> float:
    total = 0.0
    for (u, i), r in R.items():
        pred = sum(U[u, f] * V[i, f] for f in range(U.shape[1]))
        total += (r - pred) ** 2
    return total + reg * (sum(x * x for x in U.ravel()) + sum(x * x for x in V.ravel()))


def fm_naive(w0: float, w: np.ndarray, v: np.ndarray, x: np.ndarray) -> float:
    out = w0 + sum(w[i] * x[i] for i in range(len(x)))
    for i in range(len(x)):
        for j in range(i + 1, len(x)):
            out += float(np.dot(v[i], v[j])) * x[i] * x[j]
    return out


# ---------------------------------------------------------------------------
# metrics

def precision_at_k(flags, k):
    return sum(1 for x in list(flags)[:k] if x) / k


def average_precision(flags, n_relevant):
    if n_relevant == 0:
        return None
    s = 0.0
    for pos in range(1, len(flags) + 1):
        if flags[pos - 1]:
            s += precision_at_k(flags, pos)
    return s / n_relevant


def auc_pairs(scores, labels):
    """Probability a random positive outranks a random negative, ties 1/2."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = 0.0
    for p in pos:
        for n in neg:
            wins += 1.0 if p > n else 0.5 if p == n else 0.0
    return wins / (len(pos) * len(neg))


def auc_sweep(scores, labels):
    """Trapezoidal area under the ROC traced by sweeping the threshold."""
    P = sum(labels)
    N = len(labels) - P
    pts = [(0.0, 0.0)]
    for t in sorted(set(scores), reverse=True):
        tp = sum(1 for s, y in zip(scores, labels) if y and s >= t)
        fp = sum(1 for s, y in zip(scores, labels) if not y and s >= t)
        pts.append((fp / N, tp / P))
    return sum((x1 - x0) * (y0 + y1) / 2 for (x0, y0), (x1, y1) in zip(pts, pts[1:]))


def rmse_two_pass(p, a):
    d = [x - y for x, y in zip(p, a)]
    m = sum(e * e for e in d) / len(d)
    return math.sqrt(m)


def classification(tp, fp, fn, tn):
    P = tp / (tp + fp) if tp + fp else 0.0
    R = tp / (tp + fn) if tp + fn else 0.0
    F = 2 * P * R / (P + R) if P + R else 0.0
    A = (tp + tn) / (tp + fp + fn + tn) if tp + fp + fn + tn else 0.0
    return P, R, F, A


# ---------------------------------------------------------------------------
# random-walk hitting probabilities

def walk_hit_probability(P: np.ndarray, start: int, target: int, steps: int) -> float:
    """Chance that a ``steps``-step walk from ``start`` visits ``target``.

    Dynamic programming over (node, visited-target) states.
    """
    n = P.shape[0]
    dist = np.zeros((n, 2))
    dist[start, 0] = 1.0
    for _ in range(steps):
        nxt = np.zeros((n, 2))
        for a in range(n):
            for flag in (0, 1):
                mass = dist[a, flag]
                if mass == 0:
                    continue
                for b in range(n):
                    if P[a, b] > 0:
                        nxt[b, 1 if (flag or b == target) else 0] += mass * P[a, b]
        dist = nxt
    return float(dist[:, 1].sum())


# ---------------------------------------------------------------------------
# SLIM 2x2 rank-1 grid search

def slim_grid_min(S: np.ndarray, reg: float, lo: float = -2.0, hi: float = 2.0, step: float = 0.01) -> float:
    """Exhaustive minimum of sum (S_ij - w_i h_j)^2 + reg(|w|_1 + |h|_1) over
    the box [lo, hi]^4 on a regular grid.

    For fixed (w1, w2) the objective separates over h1 and h2, so the 4-D
    search reduces to a 2-D grid of 1-D grid minimizations; still every grid
    point is (implicitly) visited.
    """
    g = np.round(np.arange(lo, hi + step / 2, step), 10)
    best = math.inf
    H = g[None, :]
    for w1 in g:
        W2 = g[:, None]
        pen_w = reg * (abs(w1) + np.abs(W2))
        cols = 0.0
        for j in range(2):
            # (len(g) x len(g)) over (w2, h_j)
            e = (S[0, j] - w1 * H) ** 2 + (S[1, j] - W2 * H) ** 2 + reg * np.abs(H)
            cols = cols + e.min(axis=1, keepdims=True)
        best = min(best, float(np.min(pen_w + cols)))
    return best


def all_pairs_item_cosine(dense: np.ndarray) -> np.ndarray:
    n = dense.shape[1]
    out = np.zeros((n, n))
    for a, b in itertools.product(range(n), repeat=2):
        x, y = dense[:, a], dense[:, b]
        nx, ny = math.sqrt(float(x @ x)), math.sqrt(float(y @ y))
        out[a, b] = float(x @ y) / (nx * ny) if nx and ny else 0.0
    np.fill_diagonal(out, 1.0)
    return out
