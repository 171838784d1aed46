# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Euler-Maruyama integrator for the multiplicative-noise consensus SDE.

Mirrors ``_pykernel.simulate_paths`` one path at a time with the GIL
released.  The random stream is the one documented in ``rng``.
"""

from libc.math cimport sqrt, log, cos, sin, fabs, isfinite
from libc.stdint cimport uint64_t, int64_t
from libc.stdlib cimport malloc, free

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t path_key(uint64_t seed, uint64_t path) noexcept nogil:
    return mix64(seed ^ mix64((path + 1) * GOLDEN))


cdef int integrate_one(const double[::1] x0, const int64_t[::1] src, const int64_t[::1] dst,
                       const double[::1] sigma, const int64_t[::1] graph_ptr,
                       const int64_t[::1] graph_edges, const int64_t[::1] piece_graph,
                       const double[::1] piece_dt, const int64_t[::1] piece_slot,
                       double a, uint64_t key, double[:, ::1] out, double blowup,
                       double* x, double* dx, double* eta, int64_t* bad_piece) noexcept nogil:
    cdef Py_ssize_t n = x0.shape[0]
    cdef Py_ssize_t n_edges = src.shape[0]
    cdef Py_ssize_t n_pairs = (n_edges + 1) // 2
    cdef Py_ssize_t n_pieces = piece_graph.shape[0]
    cdef Py_ssize_t i, j, p, idx, e, u, v
    cdef int64_t k, slot
    cdef uint64_t c, w1, w2
    cdef double h, sqh, u1, u2, r, t, diff, m

    for i in range(n):
        x[i] = x0[i]
        out[0, i] = x0[i]

    for p in range(n_pieces):
        k = piece_graph[p]
        h = piece_dt[p]
        sqh = sqrt(h)
        for j in range(n_pairs):
            c = <uint64_t>(p * n_pairs + j)
            w1 = mix64(key + (2 * c + 1) * GOLDEN)
            w2 = mix64(key + (2 * c + 2) * GOLDEN)
            u1 = (<double>(w1 >> 11) + 0.5) * INV_2_53
            u2 = (<double>(w2 >> 11) + 0.5) * INV_2_53
            r = sqrt(-2.0 * log(u1))
            t = TWO_PI * u2
            eta[2 * j] = r * cos(t)
            eta[2 * j + 1] = r * sin(t)
        for i in range(n):
            dx[i] = 0.0
        for idx in range(graph_ptr[k], graph_ptr[k + 1]):
            e = graph_edges[idx]
            u = src[e]
            v = dst[e]
            diff = x[u] - x[v]
            dx[v] += a * diff * h + a * sigma[e] * fabs(diff) * sqh * eta[e]
        m = 0.0
        for i in range(n):
            x[i] += dx[i]
            if not isfinite(x[i]):
                m = blowup + 1.0
            elif fabs(x[i]) > m:
                m = fabs(x[i])
        if m > blowup:
            bad_piece[0] = p
            return 1
        slot = piece_slot[p]
        if slot >= 0:
            for i in range(n):
                out[slot, i] = x[i]
    return 0


def simulate_paths(const double[::1] x0, const int64_t[::1] src, const int64_t[::1] dst,
                   const double[::1] sigma, const int64_t[::1] graph_ptr,
                   const int64_t[::1] graph_edges, const int64_t[::1] piece_graph,
                   const double[::1] piece_dt, const int64_t[::1] piece_slot,
                   double gain, seed, const uint64_t[::1] paths, double[:, :, ::1] out,
                   double blowup):
    """Fill ``out[r, slot, :]``; return ``(bad_position, bad_piece)`` or ``(-1, -1)``."""
    cdef Py_ssize_t n = x0.shape[0]
    cdef Py_ssize_t n_edges = src.shape[0]
    cdef Py_ssize_t r, n_paths = paths.shape[0]
    cdef uint64_t seed64 = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef int64_t bad_piece = -1
    cdef Py_ssize_t bad_pos = -1
    cdef int status
    cdef double* x = <double*>malloc(n * sizeof(double))
    cdef double* dx = <double*>malloc(n * sizeof(double))
    cdef double* eta = <double*>malloc((n_edges + 2) * sizeof(double))
    if x == NULL or dx == NULL or eta == NULL:
        free(x); free(dx); free(eta)
        raise MemoryError()
    try:
        with nogil:
            for r in range(n_paths):
                status = integrate_one(x0, src, dst, sigma, graph_ptr, graph_edges, piece_graph,
                                       piece_dt, piece_slot, gain, path_key(seed64, paths[r]),
                                       out[r], blowup, x, dx, eta, &bad_piece)
                if status != 0:
                    bad_pos = r
                    break
    finally:
        free(x); free(dx); free(eta)
    if bad_pos >= 0:
        return int(bad_pos), int(bad_piece)
    return -1, -1
