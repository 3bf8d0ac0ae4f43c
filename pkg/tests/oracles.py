"""Slow, loop-based reference computations used to check the vectorised code."""

import cmath
import math


def morlet(u, omega0):
    return math.pi ** -0.25 * cmath.exp(1j * omega0 * u) * math.exp(-0.5 * u * u)


def cwt_loops(x, scales, omega0):
    n = len(x)
    out = []
    for s in scales:
        row = []
        for tau in range(n):
            acc = 0j
            for t in range(n):
                acc += x[t] * morlet((t - tau) / s, omega0).conjugate() / math.sqrt(s)
            row.append(acc)
        out.append(row)
    return out


def wcc_loops(A, B, lag_max):
    out = []
    for ra, rb in zip(A, B):
        n = len(ra)
        row = []
        for lag in range(-lag_max, lag_max + 1):
            num, ea, eb = 0j, 0.0, 0.0
            for tau in range(n):
                if 0 <= tau + lag < n:
                    a, b = ra[tau], rb[tau + lag]
                    num += a * b.conjugate()
                    ea += abs(a) ** 2
                    eb += abs(b) ** 2
            row.append(abs(num) / math.sqrt(ea * eb) if ea * eb > 0 else 0.0)
        out.append(row)
    return out


def greedy_projected_finish(rates, n_jobs, loads=None):
    """Hand rule: next job to the resource whose (queued + 1) / rate is smallest."""
    loads = list(loads or [0] * len(rates))
    picks = []
    for _ in range(n_jobs):
        best = min(range(len(rates)), key=lambda i: ((loads[i] + 1) / rates[i], -rates[i], i))
        loads[best] += 1
        picks.append(best)
    return picks
