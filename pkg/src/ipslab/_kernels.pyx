# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Gillespie kernel; mirrors ``ipslab._pykernels.evolve`` exactly."""
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport log
from libc.stdlib cimport calloc, free, malloc
from libc.stdint cimport int64_t
from numpy.random cimport bitgen_t


cdef inline double _particle_rate(const int64_t[::1] ptr, const int64_t[::1] idx,
                                  const double[::1] rate, int64_t *occ,
                                  int64_t s, double alpha, int64_t v) noexcept nogil:
    cdef double total = 0.0
    cdef int64_t k
    for k in range(ptr[v], ptr[v + 1]):
        total += rate[k] * (alpha + s * occ[idx[k]])
    return total


def evolve(const int64_t[::1] ptr, const int64_t[::1] idx, const double[::1] rate,
           int64_t s, double alpha, const int64_t[::1] rep_ptr, const int64_t[::1] pos0,
           const double[::1] times, bit_generator, int64_t[:, ::1] out, observer=None):
    if observer is not None:
        raise ValueError("the compiled kernel does not support observers")
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(bit_generator.capsule, "BitGenerator")
    cdef int64_t n_sites = ptr.shape[0] - 1
    cdef int64_t n_rep = rep_ptr.shape[0] - 1
    cdef int64_t n_grid = times.shape[0]
    cdef int64_t nmax = 0
    cdef int64_t r, base, n, i, j, k, g, v, w, a, chosen, q
    cdef double t, tn, total, target, acc, f
    cdef int64_t events = 0, absorbed = 0
    for r in range(n_rep):
        if rep_ptr[r + 1] - rep_ptr[r] > nmax:
            nmax = rep_ptr[r + 1] - rep_ptr[r]
    cdef int64_t *occ = <int64_t *> calloc(n_sites + 1, sizeof(int64_t))
    cdef char *mark = <char *> calloc(n_sites + 1, sizeof(char))
    cdef int64_t *cur = <int64_t *> malloc((nmax + 1) * sizeof(int64_t))
    cdef double *prate = <double *> malloc((nmax + 1) * sizeof(double))
    if occ == NULL or mark == NULL or cur == NULL or prate == NULL:
        free(occ); free(mark); free(cur); free(prate)
        raise MemoryError()
    try:
        with bit_generator.lock, nogil:
            for r in range(n_rep):
                base = rep_ptr[r]
                n = rep_ptr[r + 1] - base
                for i in range(n):
                    cur[i] = pos0[base + i]
                    occ[cur[i]] += 1
                for i in range(n):
                    prate[i] = _particle_rate(ptr, idx, rate, occ, s, alpha, cur[i])
                t = 0.0
                g = 0
                while True:
                    total = 0.0
                    for i in range(n):
                        total += prate[i]
                    if total <= 0.0:
                        if n > 0:
                            absorbed += 1
                        while g < n_grid:
                            for i in range(n):
                                out[g, base + i] = cur[i]
                            g += 1
                        break
                    tn = t + (-log(1.0 - rng.next_double(rng.state)) / total)
                    while g < n_grid and times[g] < tn:
                        for i in range(n):
                            out[g, base + i] = cur[i]
                        g += 1
                    if g == n_grid:
                        break
                    t = tn

                    target = rng.next_double(rng.state) * total
                    acc = 0.0
                    chosen = -1
                    for j in range(n):
                        acc += prate[j]
                        if target < acc:
                            chosen = j
                            break
                    if chosen < 0:
                        j = n - 1
                        while j >= 0:
                            if prate[j] > 0.0:
                                chosen = j
                                break
                            j -= 1
                    i = chosen
                    v = cur[i]
                    target = rng.next_double(rng.state) * prate[i]
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

                    if s == 0:
                        prate[i] = _particle_rate(ptr, idx, rate, occ, s, alpha, w)
                    else:
                        for q in range(2):
                            a = v if q == 0 else w
                            for k in range(ptr[a], ptr[a + 1]):
                                mark[idx[k]] = 1
                        for j in range(n):
                            if j == i or mark[cur[j]]:
                                prate[j] = _particle_rate(ptr, idx, rate, occ, s, alpha, cur[j])
                        for q in range(2):
                            a = v if q == 0 else w
                            for k in range(ptr[a], ptr[a + 1]):
                                mark[idx[k]] = 0
                for i in range(n):
                    occ[cur[i]] -= 1
    finally:
        free(occ)
        free(mark)
        free(cur)
        free(prate)
    return events, absorbed
