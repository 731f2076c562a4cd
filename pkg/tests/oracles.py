"""Independent brute-force reference routines used to check the library.

Everything here is deliberately written the slow, obvious way (explicit
loops, exhaustive enumeration) and shares no code with the package.
"""

from __future__ import annotations

import itertools
import math


def om_bruteforce(s, t, sub, indel):
    """Minimum edit-script cost by enumerating every alignment path, no memo."""
    best = math.inf

    def walk(i, j, acc):
        nonlocal best
        if i == len(s) and j == len(t):
            best = min(best, acc)
            return
        if i < len(s) and j < len(t):
            walk(i + 1, j + 1, acc + sub[s[i]][t[j]])
        if i < len(s):
            walk(i + 1, j, acc + indel)
        if j < len(t):
            walk(i, j + 1, acc + indel)

    walk(0, 0, 0.0)
    return best


def pearson_reference(xs, ys):
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    cov = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    vx = sum((x - mx) ** 2 for x in xs)
    vy = sum((y - my) ** 2 for y in ys)
    if vx == 0.0 or vy == 0.0:
        return math.nan
    return cov / math.sqrt(vx * vy)


def _pairs(n):
    for i in range(n):
        for j in range(i + 1, n):
            yield i, j


def pbc_reference(square, labels):
    xs, ys = [], []
    for i, j in _pairs(len(labels)):
        xs.append(square[i][j])
        ys.append(1.0 if labels[i] != labels[j] else 0.0)
    return pearson_reference(xs, ys)


def hc_reference(square, labels):
    dists, within = [], []
    for i, j in _pairs(len(labels)):
        dists.append(square[i][j])
        if labels[i] == labels[j]:
            within.append(square[i][j])
    n_w = len(within)
    s_w = sum(within)
    ordered = sorted(dists)
    s_min = sum(ordered[:n_w])
    s_max = sum(ordered[len(ordered) - n_w :])
    if s_max == s_min:
        return 0.0
    return (s_w - s_min) / (s_max - s_min)


def asw_reference(square, labels):
    n = len(labels)
    groups = sorted(set(labels))
    sil = []
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            sil.append(0.0)
            continue
        a = sum(square[i][j] for j in own) / len(own)
        b = math.inf
        for g in groups:
            if g == labels[i]:
                continue
            members = [j for j in range(n) if labels[j] == g]
            if members:
                b = min(b, sum(square[i][j] for j in members) / len(members))
        denom = max(a, b)
        sil.append(0.0 if denom == 0.0 else (b - a) / denom)
    return sum(sil) / n, sil


def pam_exhaustive(square, k):
    """Globally optimal medoid set by trying every combination; returns
    (best cost, best medoid tuple)."""
    n = len(square)
    best_cost, best_meds = math.inf, None
    for meds in itertools.combinations(range(n), k):
        cost = sum(min(square[i][m] for m in meds) for i in range(n))
        if cost < best_cost:
            best_cost, best_meds = cost, meds
    return best_cost, best_meds


def ari_pair_counts(labels_a, labels_b):
    """Adjusted Rand index from explicit pair classification (Hubert-Arabie)."""
    n11 = n00 = n10 = n01 = 0
    n = len(labels_a)
    for i, j in _pairs(n):
        same_a = labels_a[i] == labels_a[j]
        same_b = labels_b[i] == labels_b[j]
        if same_a and same_b:
            n11 += 1
        elif same_a:
            n10 += 1
        elif same_b:
            n01 += 1
        else:
            n00 += 1
    num = 2.0 * (n11 * n00 - n10 * n01)
    den = (n11 + n10) * (n10 + n00) + (n11 + n01) * (n01 + n00)
    if den == 0.0:
        return 1.0 if n10 == n01 == 0 else 0.0
    return num / den


def central_difference_gradient(f, beta, h=1e-5):
    grad = []
    for i in range(len(beta)):
        up = list(beta)
        down = list(beta)
        up[i] += h
        down[i] -= h
        grad.append((f(up) - f(down)) / (2.0 * h))
    return grad
