"""Slow, independent reference implementations used only by the tests."""

import itertools
import math
from fractions import Fraction

import numpy as np


def naive_dot(a, b):
    total = 0.0
    for x, y in zip(a, b):
        total += x * y
    return total


# ----------------------------------------------------------------- metrics

def pairwise_auc(real, attack):
    """P(attack > real) + 1/2 P(tie) by enumerating every pair."""
    wins = 0.0
    for a in attack:
        for r in real:
            if a > r:
                wins += 1.0
            elif a == r:
                wins += 0.5
    return wins / (len(real) * len(attack))


def rates_at(real, attack, t):
    """(FAR, FRR) with 'score >= t' meaning attack, by direct counting."""
    far = sum(1 for a in attack if a < t) / len(attack)
    frr = sum(1 for r in real if r >= t) / len(real)
    return far, frr


def sweep_eer(real, attack):
    """Exhaustive sweep over -inf, all midpoints of sorted unique scores, +inf."""
    u = sorted(set(real) | set(attack))
    cands = [-math.inf] + [(u[i] + u[i + 1]) / 2 for i in range(len(u) - 1)] + [math.inf]
    best = None
    for t in cands:
        fa = Fraction(sum(1 for a in attack if a < t), len(attack))
        fr = Fraction(sum(1 for r in real if r >= t), len(real))
        key = abs(fa - fr)
        far, frr = float(fa), float(fr)
        if best is None or key < best[0] or (key == best[0] and t < best[1]):
            best = (key, t, (far + frr) / 2)
    return best[1], 100.0 * best[2]


def confusion_hter(real, attack, t):
    far, frr = rates_at(real, attack, t)
    return 100.0 * (far + frr) / 2


def group_mean(items):
    """items: (key, score) pairs -> {key: mean score}."""
    sums, counts = {}, {}
    for k, s in items:
        sums[k] = sums.get(k, 0.0) + s
        counts[k] = counts.get(k, 0) + 1
    return {k: sums[k] / counts[k] for k in sums}


# -------------------------------------------------------------- OCSVM dual

def _project_box_simplex(v, C):
    """Euclidean projection onto {0 <= a <= C, sum a = 1} via exact breakpoint search."""
    bps = np.sort(np.concatenate([v, v - C]))

    def mass(tau):
        return np.clip(v - tau, 0.0, C).sum()

    lo, hi = bps[0] - 1.0, bps[-1] + 1.0
    masses = np.clip(v[None, :] - bps[:, None], 0.0, C).sum(axis=1)
    # mass is non-increasing in tau; find the bracket containing 1
    idx = np.searchsorted(-masses, -1.0)
    if idx > 0:
        lo = bps[idx - 1]
    if idx < len(bps):
        hi = bps[idx]
    mlo, mhi = mass(lo), mass(hi)
    tau = lo if mlo == mhi else lo + (mlo - 1.0) * (hi - lo) / (mlo - mhi)
    return np.clip(v - tau, 0.0, C)


def pg_ocsvm_dual(K, nu, tol=1e-10, max_iter=100000):
    """Accelerated projected gradient for min 1/2 a^T K a over the nu-OCSVM feasible set.

    Stops once the projected-gradient fixed-point residual
    ``max|a - P(a - K a / L)|`` drops below ``tol``, or when a plain
    gradient step from the current iterate fails to decrease the objective.
    """
    n = K.shape[0]
    C = 1.0 / (nu * n)
    L = np.linalg.eigvalsh(K)[-1]
    step = 1.0 / L
    a = _project_box_simplex(np.full(n, 1.0 / n), C)
    y, t = a.copy(), 1.0
    obj = 0.5 * a @ K @ a
    restarted = False
    for it in range(max_iter):
        a_new = _project_box_simplex(y - step * (K @ y), C)
        obj_new = 0.5 * a_new @ K @ a_new
        if obj_new > obj:
            if restarted:
                break  # even a plain gradient step no longer decreases f: round-off floor
            y, t, restarted = a.copy(), 1.0, True  # adaptive restart
            continue
        restarted = False
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        y = a_new + ((t - 1) / t_new) * (a_new - a)
        a, t, obj = a_new, t_new, obj_new
        if it % 10 == 0:
            resid = np.abs(a - _project_box_simplex(a - step * (K @ a), C)).max()
            if resid < tol:
                break
    return a, obj


# ------------------------------------------------------------------ lasso

def cd_lasso(D, x, lam, tol=1e-12, max_sweeps=200000):
    """Cyclic coordinate descent for 1/2||x - D w||^2 + lam ||w||_1.

    Alternates full sweeps with sweeps restricted to the current support
    until a full sweep changes no coordinate by more than ``tol``.
    """
    m = D.shape[1]
    G = D.T @ D
    rows = [G[j].copy() for j in range(m)]
    c = (D.T @ x).tolist()
    diag = [float(G[j, j]) for j in range(m)]
    w = [0.0] * m
    Gw = np.zeros(m)

    def sweep(coords):
        biggest = 0.0
        for j in coords:
            if diag[j] == 0:
                continue
            rho = c[j] - Gw[j] + diag[j] * w[j]
            new = math.copysign(max(abs(rho) - lam, 0.0), rho) / diag[j]
            delta = new - w[j]
            if delta != 0.0:
                np.add(Gw, delta * rows[j], out=Gw)
                w[j] = new
                biggest = max(biggest, abs(delta))
        return biggest

    everything = range(m)
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        if sweep(everything) < tol:
            break
        support = [j for j in everything if w[j] != 0.0]
        while sweeps < max_sweeps:
            sweeps += 1
            if sweep(support) < tol:
                break
    return np.array(w)


def lasso_objective(D, x, w, lam):
    r = x - D @ w
    return 0.5 * r @ r + lam * np.abs(w).sum()


# ------------------------------------------------------------- Mahalanobis

def direct_mahalanobis_sq(train, x):
    mu = train.mean(axis=0)
    cov = np.atleast_2d(np.cov(train, rowvar=False, ddof=1))
    inv = np.linalg.inv(cov)
    d = x - mu
    return float(d @ inv @ d)


def brute_force_median_sq_dist(X):
    d = [float(np.sum((X[i] - X[j]) ** 2)) for i, j in itertools.combinations(range(len(X)), 2)]
    return float(np.median(d))
