"""Slow reference implementations used to cross-check the vectorized code.

These are written from the definitions with Python scalars and loops and
share no code with the modules they check.
"""

from __future__ import annotations

import math
from fractions import Fraction


def dpc_knn_bruteforce(points, k: int):
    """Literal density-peaks evaluation on a list of coordinate tuples.

    Returns ``(rho, delta, score, assignment)``; ``assignment[i]`` is the
    nearest higher-density token of i (None for the density peak).
    """
    n = len(points)

    def sq(i, j):
        s = 0.0
        for a, b in zip(points[i], points[j]):
            s += (a - b) * (a - b)
        return s

    rho = []
    for i in range(n):
        ds = sorted(sq(i, j) for j in range(n) if j != i)
        rho.append(math.exp(-sum(ds[:k]) / k))

    def denser(j, i):
        return rho[j] > rho[i] or (rho[j] == rho[i] and j < i)

    delta, assignment = [], []
    for i in range(n):
        best, arg = None, None
        for j in range(n):
            if j != i and denser(j, i):
                d = math.sqrt(sq(i, j))
                if best is None or d < best:
                    best, arg = d, j
        if best is None:
            best = max(math.sqrt(sq(i, j)) for j in range(n))
        delta.append(best)
        assignment.append(arg)
    score = [a * b for a, b in zip(rho, delta)]
    return rho, delta, score, assignment


def top_r_bruteforce(score, r: int):
    ranked = sorted(range(len(score)), key=lambda i: (-score[i], i))
    return sorted(ranked[:r])


def tpc_bruteforce(tokens, r: int, k: int):
    """tokens: nested lists [frame][joint][channel]."""
    pooled = []
    for frame in tokens:
        joints = len(frame)
        chans = len(frame[0])
        row = []
        for c in range(chans):
            s = 0.0
            for jt in range(joints):
                s += frame[jt][c]
            row.append(s / joints)
        pooled.append(row)
    _, _, score, _ = dpc_knn_bruteforce(pooled, k)
    return top_r_bruteforce(score, r)


def tps_exact(n: int, r: int):
    if r == 1:
        return [0]
    return [math.floor(Fraction(j * (n - 1), r - 1) + Fraction(1, 2)) for j in range(r)]


def interpolate_bruteforce(values, kept, frames: int):
    """Piecewise-linear interpolation of scalar samples, frame by frame."""
    out = []
    for t in range(frames):
        for i in range(len(kept) - 1):
            a, b = kept[i], kept[i + 1]
            if a <= t <= b:
                out.append(values[i] + (t - a) / (b - a) * (values[i + 1] - values[i]))
                break
    return out


def schedule_cost_closed_form(frames, joints, dim, counts, ffn_ratio=2):
    """Sum of J*(lin*N*D^2 + 2*N^2*D) + N*(lin*J*D^2 + 2*J^2*D) over blocks."""
    lin = 4 + 2 * ffn_ratio
    sum_n = sum(counts)
    sum_n2 = sum(n * n for n in counts)
    return 2 * lin * joints * dim * dim * sum_n + 2 * joints * dim * sum_n2 + 2 * joints * joints * dim * sum_n
