"""Counter-based standard normals.

Every Wiener increment is a pure function of ``(seed, path, piece, edge)``,
so paths can be integrated in any order, on any number of workers, and
still see the same draws.

Stream definition (all arithmetic modulo 2**64):

* ``mix64`` is the SplitMix64 finalizer.
* ``key = mix64(seed ^ mix64((path + 1) * GOLDEN))`` per sample path.
* ``word(key, k) = mix64(key + (k + 1) * GOLDEN)`` is the k-th raw word.
* ``uniform(w) = ((w >> 11) + 0.5) * 2**-53`` lies strictly inside (0, 1).
* Edges are paired ``(2j, 2j + 1)``; pair ``j`` of integration piece ``p``
  uses words ``k = 2c`` and ``2c + 1`` with ``c = p * n_pairs + j`` and a
  Box-Muller transform: edge ``2j`` gets ``r cos(t)``, edge ``2j + 1``
  gets ``r sin(t)``.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
TWO_PI = 2.0 * math.pi
INV_2_53 = 2.0**-53


def mix64_int(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def path_key_int(seed: int, path: int) -> int:
    return mix64_int((seed & MASK64) ^ mix64_int((path + 1) * GOLDEN))


def normal_pair_int(key: int, piece: int, pair: int, n_pairs: int) -> tuple[float, float]:
    """Reference scalar evaluation of one Box-Muller pair."""
    c = piece * n_pairs + pair
    w1 = mix64_int(key + (2 * c + 1) * GOLDEN)
    w2 = mix64_int(key + (2 * c + 2) * GOLDEN)
    u1 = ((w1 >> 11) + 0.5) * INV_2_53
    u2 = ((w2 >> 11) + 0.5) * INV_2_53
    r = math.sqrt(-2.0 * math.log(u1))
    t = TWO_PI * u2
    return r * math.cos(t), r * math.sin(t)


def edge_normals_int(key: int, piece: int, n_edges: int) -> list[float]:
    n_pairs = (n_edges + 1) // 2
    out: list[float] = []
    for j in range(n_pairs):
        out.extend(normal_pair_int(key, piece, j, n_pairs))
    return out[:n_edges]


_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_M1, _M2 = np.uint64(MIX1), np.uint64(MIX2)


def mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def path_keys(seed: int, paths) -> np.ndarray:
    """Per-path stream keys as a ``uint64`` array."""
    paths = np.asarray(paths, dtype=np.uint64)
    offsets = np.array([((int(p) + 1) * GOLDEN) & MASK64 for p in paths], dtype=np.uint64)
    return mix64(np.uint64(seed & MASK64) ^ mix64(offsets))


def edge_normals(keys: np.ndarray, piece: int, n_edges: int) -> np.ndarray:
    """Standard normals of shape ``(len(keys), n_edges)`` for one integration piece."""
    n_pairs = (n_edges + 1) // 2
    out = np.empty((keys.shape[0], 2 * n_pairs))
    base = piece * n_pairs
    for j in range(n_pairs):
        c = base + j
        w1 = mix64(keys + np.uint64(((2 * c + 1) * GOLDEN) & MASK64))
        w2 = mix64(keys + np.uint64(((2 * c + 2) * GOLDEN) & MASK64))
        u1 = ((w1 >> _S11).astype(np.float64) + 0.5) * INV_2_53
        u2 = ((w2 >> _S11).astype(np.float64) + 0.5) * INV_2_53
        r = np.sqrt(-2.0 * np.log(u1))
        t = TWO_PI * u2
        out[:, 2 * j] = r * np.cos(t)
        out[:, 2 * j + 1] = r * np.sin(t)
    return out[:, :n_edges]
