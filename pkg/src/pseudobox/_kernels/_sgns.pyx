# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled skip-gram negative-sampling SGD epoch.

Mirrors _core_py.sgns_epoch update for update; see that module for the
contract. The loop is sequential by construction (each pair reads weights
written by the previous one), so the win here is constant-factor only.
"""

from libc.math cimport exp

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline double _sigmoid(double x) nogil:
    if x > 50.0:
        x = 50.0
    elif x < -50.0:
        x = -50.0
    return 1.0 / (1.0 + exp(-x))


def sgns_epoch(double[:, ::1] w_in, double[:, ::1] w_out,
               cnp.int64_t[::1] centers, cnp.int64_t[::1] contexts,
               cnp.int64_t[:, ::1] negatives,
               double lr0, double lr_min, long step0, long total_steps):
    cdef Py_ssize_t m = centers.shape[0]
    cdef Py_ssize_t d = w_in.shape[1]
    cdef Py_ssize_t n_neg = negatives.shape[1]
    cdef Py_ssize_t i, j, t
    cdef cnp.int64_t c, target
    cdef double lr, g, dot, label
    cdef double denom = <double>(total_steps - 1) if total_steps > 1 else 1.0
    cdef double span = lr_min - lr0
    cdef double[::1] acc = np.zeros(d)

    with nogil:
        for i in range(m):
            lr = lr0 + span * (step0 + i) / denom
            if lr < lr_min:
                lr = lr_min
            c = centers[i]
            for j in range(d):
                acc[j] = 0.0
            for t in range(n_neg + 1):
                if t == 0:
                    target = contexts[i]
                    label = 1.0
                else:
                    target = negatives[i, t - 1]
                    label = 0.0
                dot = 0.0
                for j in range(d):
                    dot += w_in[c, j] * w_out[target, j]
                g = lr * (label - _sigmoid(dot))
                for j in range(d):
                    acc[j] += g * w_out[target, j]
                    w_out[target, j] += g * w_in[c, j]
            for j in range(d):
                w_in[c, j] += acc[j]
