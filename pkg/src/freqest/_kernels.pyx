# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled grid log-likelihood kernels.

Each measurement contributes ``log(0.5 + 0.5 * a_k * cos(omega * t_k))``
where ``a_k = (1 - 2 d_k) * contrast_k``.  Likelihoods are multiplied in
blocks and logged once per block; a block is flushed early when the running
product approaches the subnormal range.
"""
from libc.math cimport cos, sin, log
from libc.stdlib cimport malloc, free

cdef enum:
    BLOCK = 8
    RESEED = 256

cdef double TINY = 1e-280


def loglik_accumulate(const double[::1] nodes, const double[::1] times,
                      const double[::1] signed_contrast, double[::1] out):
    cdef Py_ssize_t n = nodes.shape[0]
    cdef Py_ssize_t m = times.shape[0]
    cdef Py_ssize_t i, k
    cdef int filled
    cdef double w, prod, acc
    if out.shape[0] != n or signed_contrast.shape[0] != m:
        raise ValueError("shape mismatch")
    with nogil:
        for i in range(n):
            w = nodes[i]
            acc = 0.0
            prod = 1.0
            filled = 0
            for k in range(m):
                prod *= 0.5 + 0.5 * signed_contrast[k] * cos(w * times[k])
                filled += 1
                if filled == BLOCK or prod < TINY:
                    acc += log(prod)
                    prod = 1.0
                    filled = 0
            if filled:
                acc += log(prod)
            out[i] += acc


def loglik_accumulate_uniform(double start, double step, const double[::1] times,
                              const double[::1] signed_contrast, double[::1] out):
    """Same as ``loglik_accumulate`` for nodes ``start + i * step``.

    ``cos(omega t)`` is advanced across nodes by an exact rotation and
    re-seeded from libm every ``RESEED`` nodes, which bounds the drift.
    """
    cdef Py_ssize_t n = out.shape[0]
    cdef Py_ssize_t m = times.shape[0]
    cdef Py_ssize_t i, k, j0, j1
    cdef double t, a, c, s, cd, sd, cn, p
    cdef double *prod
    cdef int filled = 0
    if signed_contrast.shape[0] != m:
        raise ValueError("shape mismatch")
    if n == 0:
        return
    prod = <double *> malloc(n * sizeof(double))
    if prod == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                prod[i] = 1.0
            for k in range(m):
                t = times[k]
                a = signed_contrast[k]
                cd = cos(step * t)
                sd = sin(step * t)
                j0 = 0
                while j0 < n:
                    j1 = j0 + RESEED
                    if j1 > n:
                        j1 = n
                    c = cos((start + j0 * step) * t)
                    s = sin((start + j0 * step) * t)
                    for i in range(j0, j1):
                        p = 0.5 + 0.5 * a * c
                        # recurrence drift can push |c| past 1
                        prod[i] *= p if p > 0.0 else 0.0
                        cn = c * cd - s * sd
                        s = s * cd + c * sd
                        c = cn
                    j0 = j1
                filled += 1
                if filled == BLOCK or k == m - 1:
                    for i in range(n):
                        out[i] += log(prod[i])
                        prod[i] = 1.0
                    filled = 0
                else:
                    for i in range(n):
                        if prod[i] < TINY:
                            out[i] += log(prod[i])
                            prod[i] = 1.0
    finally:
        free(prod)
