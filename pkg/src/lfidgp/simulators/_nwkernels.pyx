# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Q-learning and rollout loops for the navigation gridworld.

Mirrors :mod:`lfidgp.simulators._nw_py` operation for operation, so both
produce identical numbers for identical seeds.
"""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t

cdef int[4] DR = [-1, 0, 1, 0]
cdef int[4] DC = [0, 1, 0, -1]


cdef inline uint64_t _next(uint64_t* state) nogil:
    cdef uint64_t z
    state[0] += <uint64_t>0x9E3779B97F4A7C15
    z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t* state) nogil:
    return <double>(_next(state) >> 11) * (1.0 / 9007199254740992.0)


cdef inline int _argmax(const double[:, ::1] Q, int s) nogil:
    cdef int a, best = 0
    cdef double v = Q[s, 0]
    for a in range(1, 4):
        if Q[s, a] > v:
            v = Q[s, a]
            best = a
    return best


cdef inline int _slip(int a, double slip, uint64_t* state) nogil:
    if slip > 0.0 and _uniform(state) < slip:
        if _uniform(state) < 0.5:
            return (a + 1) % 4
        return (a + 3) % 4
    return a


cdef inline int _move(int s, int a, int H, int W) nogil:
    cdef int r = s // W + DR[a]
    cdef int c = s % W + DC[a]
    if r < 0 or r >= H or c < 0 or c >= W:
        return s
    return r * W + c


def train_q(const int[::1] kind, const double[::1] reward, int H, int W, int start,
            int episodes, double alpha, double gamma, double eps_start, double eps_end,
            int max_steps, uint64_t seed):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Q_arr = np.zeros((H * W, 4))
    cdef double[:, ::1] Q = Q_arr
    cdef uint64_t state = seed
    cdef int e, t, s, s2, a, b
    cdef double eps, target, best
    with nogil:
        for e in range(episodes):
            if episodes > 1:
                eps = eps_start + (eps_end - eps_start) * e / (episodes - 1)
            else:
                eps = eps_start
            s = start
            for t in range(max_steps):
                if _uniform(&state) < eps:
                    a = <int>(_uniform(&state) * 4.0)
                else:
                    a = _argmax(Q, s)
                s2 = _move(s, a, H, W)
                if kind[s2] != 0:
                    target = reward[s2]
                else:
                    best = Q[s2, 0]
                    for b in range(1, 4):
                        if Q[s2, b] > best:
                            best = Q[s2, b]
                    target = reward[s2] + gamma * best
                Q[s, a] = Q[s, a] + alpha * (target - Q[s, a])
                s = s2
                if kind[s] != 0:
                    break
    return Q_arr


def rollout(const double[:, ::1] Q, const int[::1] kind, const double[::1] reward, int H,
            int W, int start, double slip, int max_steps, uint64_t seed):
    cdef uint64_t state = seed
    cdef int s = start, steps = 0, turns = 0, prev = -1, a, s2
    cdef double total = 0.0
    with nogil:
        while steps < max_steps:
            a = _slip(_argmax(Q, s), slip, &state)
            if prev >= 0 and a != prev:
                turns += 1
            prev = a
            s2 = _move(s, a, H, W)
            total += reward[s2]
            steps += 1
            s = s2
            if kind[s] != 0:
                break
    return turns, steps, total
