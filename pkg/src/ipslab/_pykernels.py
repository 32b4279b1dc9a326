"""Pure-Python Gillespie kernel.

Reference implementation of ``ipslab._kernels.evolve``; the two consume the
bit generator identically and perform the same floating-point operations
in the same order, so their outputs agree bit for bit.
"""
import math

import numpy as np


def evolve(ptr, idx, rate, s, alpha, rep_ptr, pos0, times, bit_generator, out, observer=None):
    """Evolve a block of replicas of labeled particles.

    Replica ``r`` owns particles ``pos0[rep_ptr[r]:rep_ptr[r+1]]`` (site
    indices).  Positions at each time in ``times`` are written to
    ``out[g, rep_ptr[r]:rep_ptr[r+1]]``.  ``observer(r, t, label, src, dst)``
    is called after every event if given.

    Returns ``(events, absorbed)``: the total number of jumps and the number
    of replicas that reached a state with zero total rate.
    """
    gen = np.random.Generator(bit_generator)
    draw = gen.random
    ptr = [int(x) for x in ptr]
    idx = [int(x) for x in idx]
    rate = [float(x) for x in rate]
    s = int(s)
    alpha = float(alpha)
    times = [float(x) for x in times]
    n_grid = len(times)
    n_sites = len(ptr) - 1
    occ = [0] * n_sites
    mark = [False] * n_sites
    events = 0
    absorbed = 0

    def particle_rate(v):
        total = 0.0
        for k in range(ptr[v], ptr[v + 1]):
            total += rate[k] * (alpha + s * occ[idx[k]])
        return total

    for r in range(len(rep_ptr) - 1):
        base = int(rep_ptr[r])
        n = int(rep_ptr[r + 1]) - base
        cur = [int(x) for x in pos0[base:base + n]]
        for v in cur:
            occ[v] += 1
        prate = [particle_rate(v) for v in cur]
        t = 0.0
        g = 0
        while True:
            total = 0.0
            for x in prate:
                total += x
            if total <= 0.0:
                if n > 0:
                    absorbed += 1
                while g < n_grid:
                    out[g, base:base + n] = cur
                    g += 1
                break
            tn = t + (-math.log(1.0 - draw()) / total)
            while g < n_grid and times[g] < tn:
                out[g, base:base + n] = cur
                g += 1
            if g == n_grid:
                break
            t = tn

            target = draw() * total
            acc = 0.0
            chosen = -1
            for j in range(n):
                acc += prate[j]
                if target < acc:
                    chosen = j
                    break
            if chosen < 0:
                for j in range(n - 1, -1, -1):
                    if prate[j] > 0.0:
                        chosen = j
                        break
            i = chosen
            v = cur[i]
            target = draw() * prate[i]
            acc = 0.0
            w = -1
            for k in range(ptr[v], ptr[v + 1]):
                f = rate[k] * (alpha + s * occ[idx[k]])
                if f > 0.0:
                    acc += f
                    w = idx[k]
                    if target < acc:
                        break
            occ[v] -= 1
            occ[w] += 1
            cur[i] = w
            events += 1
            if observer is not None:
                observer(r, t, i, v, w)

            if s == 0:
                prate[i] = particle_rate(w)
            else:
                for a in (v, w):
                    for k in range(ptr[a], ptr[a + 1]):
                        mark[idx[k]] = True
                for j in range(n):
                    if j == i or mark[cur[j]]:
                        prate[j] = particle_rate(cur[j])
                for a in (v, w):
                    for k in range(ptr[a], ptr[a + 1]):
                        mark[idx[k]] = False
        for v in cur:
            occ[v] -= 1
    return events, absorbed
