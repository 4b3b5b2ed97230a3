"""Pure-Python DTW recurrences, used when the compiled core is unavailable.

Mirrors ``_dtw_core.pyx`` operation for operation; see that module for the
recurrence and argument conventions.
"""

import math

import numpy as np

INF = math.inf


def _fill_row(a, b, i, prev, cur, kind, band):
    ai = a[i]
    for j in range(len(b)):
        if band >= 0 and (i - j > band or j - i > band):
            cur[j] = INF
            continue
        d = ai - b[j]
        c = d * d if kind == 0 else abs(d)
        if i == 0 and j == 0:
            cur[j] = c
            continue
        best = INF
        if i > 0:
            if j > 0 and prev[j - 1] < best:
                best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
        if j > 0 and cur[j - 1] < best:
            best = cur[j - 1]
        cur[j] = c + best


def last_row(a, b, cost_kind=0, band=-1):
    a = [float(x) for x in a]
    b = [float(x) for x in b]
    prev = [0.0] * len(b)
    cur = [0.0] * len(b)
    for i in range(len(a)):
        _fill_row(a, b, i, prev, cur, cost_kind, band)
        prev, cur = cur, prev
    return np.array(prev, dtype=np.float64)


def distance(a, b, cost_kind=0, band=-1):
    if len(b) > len(a):
        a, b = b, a
    return float(last_row(a, b, cost_kind, band)[len(b) - 1])


def cost_matrix(a, b, cost_kind=0, band=-1):
    a = [float(x) for x in a]
    b = [float(x) for x in b]
    rows = []
    prev = [0.0] * len(b)
    for i in range(len(a)):
        cur = [0.0] * len(b)
        _fill_row(a, b, i, prev, cur, cost_kind, band)
        rows.append(cur)
        prev = cur
    return np.array(rows, dtype=np.float64).reshape(len(a), len(b))
