"""Vectorized numpy integrator, used when the compiled kernel is unavailable.

Same contract and same random stream as ``_ckernel.simulate_paths``; the
loop runs over integration pieces and is vectorized across sample paths.
"""

from __future__ import annotations

import math

import numpy as np

from .rng import edge_normals, path_keys


def simulate_paths(x0, src, dst, sigma, graph_ptr, graph_edges, piece_graph, piece_dt, piece_slot,
                   gain, seed, paths, out, blowup):
    """Fill ``out[r, slot, :]`` for every recorded slot of every path.

    Returns ``(bad_position, bad_piece)``; ``(-1, -1)`` when all paths stay
    finite and below ``blowup`` in max-norm.
    """
    n_paths = len(paths)
    n_edges = len(src)
    x = np.tile(np.asarray(x0, dtype=np.float64), (n_paths, 1))
    out[:, 0, :] = x
    keys = path_keys(seed, paths)
    a = float(gain)
    failed_at = np.full(n_paths, -1, dtype=np.int64)
    alive = np.ones(n_paths, dtype=bool)

    for p in range(len(piece_graph)):
        k = piece_graph[p]
        h = float(piece_dt[p])
        sqh = math.sqrt(h)
        eta = edge_normals(keys, p, n_edges)
        dx = np.zeros_like(x)
        for idx in range(graph_ptr[k], graph_ptr[k + 1]):
            e = graph_edges[idx]
            u = src[e]
            v = dst[e]
            diff = x[:, u] - x[:, v]
            dx[:, v] += a * diff * h + a * sigma[e] * np.abs(diff) * sqh * eta[:, e]
        x += dx
        bad = alive & ~(np.max(np.abs(x), axis=1) <= blowup)
        if bad.any():
            failed_at[bad] = p
            alive &= ~bad
            x[bad] = 0.0
        slot = piece_slot[p]
        if slot >= 0:
            out[:, slot, :] = x

    if not alive.all():
        pos = int(np.flatnonzero(~alive)[0])
        return pos, int(failed_at[pos])
    return -1, -1
