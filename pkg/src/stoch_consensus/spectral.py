"""Spectral certification of the noisy consensus protocol.

Given a Laplacian ``L`` of a digraph with a spanning tree, ``-L`` generates a
Markov chain with a unique stationary distribution ``pi``.  Completing
``1_N`` with a basis ``Phi2`` of ``{v : pi @ v = 0}`` block-diagonalizes
``-L``; the lower block ``L_tilde`` is Hurwitz and admits a Lyapunov matrix
``Q`` with ``Q L_tilde + L_tilde^T Q = -I``.  From these come the admissible
gain bound, the certified mean-square decay rate, and the local-average
consensus subspace.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .graph import Digraph, GraphError, NoiseProfile, disagreement_form, edge_multiplicity, has_spanning_tree, union


class SpectralError(ValueError):
    """Raised when a Laplacian cannot be certified (no spanning tree, non-Hurwitz block)."""


class _Unbounded:
    """Tag for a gain bound that does not exist (noise-free network)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNBOUNDED"

    def __reduce__(self):
        return (_Unbounded, ())


UNBOUNDED = _Unbounded()
Bound = Union[float, _Unbounded]

NULL_TOL = 1e-9
HURWITZ_TOL = 1e-9
KAPPA_TOL = 1e-10


@dataclass(frozen=True)
class SpectralDecomposition:
    pi: np.ndarray
    phi2: np.ndarray
    psi2: np.ndarray
    l_tilde: np.ndarray
    q: np.ndarray
    q_lambda_max: float

    @property
    def n(self) -> int:
        return self.pi.shape[0]

    @property
    def phi(self) -> np.ndarray:
        return np.column_stack([np.ones(self.n), self.phi2])


@dataclass(frozen=True)
class UnionConstants:
    c_star: float
    c_star_star: float
    e: int


@dataclass(frozen=True)
class GainCertificate:
    a_bar: Bound
    c1: float
    a_bar_bar: Bound
    chosen_a: float
    q_lambda_max: float

    def gamma1(self, a: float) -> float:
        return rate_gamma1(a, self.a_bar, self.q_lambda_max)


def stationary_distribution(L: np.ndarray) -> np.ndarray:
    """Probability row vector ``pi`` with ``pi @ L == 0``.

    Taken as the right singular vector of ``L^T`` for its smallest singular
    value, which copes with legitimately zero entries of ``pi``.
    """
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    if n == 1:
        return np.ones(1)
    _, s, vt = np.linalg.svd(L.T)
    scale = max(1.0, float(s[0]))
    if s[-2] <= NULL_TOL * scale:
        raise SpectralError("no spanning tree: the stationary distribution is not unique")
    v = vt[-1]
    pi = v / v.sum()
    if np.any(pi < -1e-12):
        raise SpectralError(f"stationary vector has negative entries {pi}")
    pi = np.where(pi < 0, 0.0, pi)
    pi = pi / pi.sum()
    # one Newton-style cleanup against the normalized system
    resid = np.max(np.abs(pi @ L))
    if resid > 1e-10:
        A = np.vstack([L.T, np.ones(n)])
        b = np.zeros(n + 1)
        b[-1] = 1.0
        pi = np.linalg.lstsq(A, b, rcond=None)[0]
        pi = np.where(pi < 0, 0.0, pi)
        pi = pi / pi.sum()
    return pi


def complement_basis(pi: np.ndarray) -> np.ndarray:
    """Orthonormal ``N x (N-1)`` basis of the kernel of the functional ``v -> pi @ v``.

    Built from a complete Householder QR of ``pi^T`` with each column's
    first non-negligible entry made positive, so the output is a fixed
    function of ``pi``.
    """
    n = pi.shape[0]
    q, _ = np.linalg.qr(pi.reshape(n, 1), mode="complete")
    basis = q[:, 1:].copy()
    for k in range(basis.shape[1]):
        col = basis[:, k]
        lead = np.flatnonzero(np.abs(col) > 1e-12)
        if lead.size and col[lead[0]] < 0:
            basis[:, k] = -col
    return basis


def solve_lyapunov(A: np.ndarray) -> np.ndarray:
    """Solve ``Q A + A^T Q = -I`` through the vectorized ``m^2`` linear system."""
    m = A.shape[0]
    eye = np.eye(m)
    # column-major vec: vec(A^T Q) = (I kron A^T) vec(Q), vec(Q A) = (A^T kron I) vec(Q)
    K = np.kron(eye, A.T) + np.kron(A.T, eye)
    vec_q = np.linalg.solve(K, -eye.reshape(-1, order="F"))
    Q = vec_q.reshape(m, m, order="F")
    return 0.5 * (Q + Q.T)


def decompose(L: np.ndarray) -> SpectralDecomposition:
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    if n < 2:
        raise SpectralError("decomposition needs at least two agents")
    pi = stationary_distribution(L)
    phi2 = complement_basis(pi)
    phi = np.column_stack([np.ones(n), phi2])
    phi_inv = np.linalg.inv(phi)
    psi2 = phi_inv[1:, :]
    l_tilde = psi2 @ (-L) @ phi2
    eig = np.linalg.eigvals(l_tilde)
    worst = eig[np.argmax(eig.real)]
    if worst.real >= -HURWITZ_TOL:
        raise SpectralError(f"reduced Laplacian block is not Hurwitz: eigenvalue {worst:.6g}")
    try:
        q = solve_lyapunov(l_tilde)
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"Lyapunov solve failed near eigenvalue {worst:.6g}") from exc
    q_eig = np.linalg.eigvalsh(q)
    if q_eig[0] <= 0:
        raise SpectralError(f"Lyapunov matrix is not positive definite (min eigenvalue {q_eig[0]:.3g})")
    return SpectralDecomposition(pi, phi2, psi2, l_tilde, q, float(q_eig[-1]))


def fixed_gain_bound(d: SpectralDecomposition, g: Digraph, noise: NoiseProfile) -> tuple[float, Bound]:
    """Return ``(c1, a_bar)`` for fixed topology ``g``.

    ``c1 = sum_i W_ii * sum_{j in N_i} (sigma_ji * ||phi_j - phi_i||)^2`` with
    ``W = Psi2^T Q Psi2`` and ``phi_k`` the rows of ``Phi2``.
    """
    weights = np.diag(d.psi2.T @ d.q @ d.psi2)
    c1 = 0.0
    for i in range(1, g.n_nodes + 1):
        inner = 0.0
        for j in g.neighbors(i):
            gap = np.linalg.norm(d.phi2[j - 1] - d.phi2[i - 1])
            inner += (noise(j, i) * gap) ** 2
        c1 += weights[i - 1] * inner
    if c1 == 0.0:
        return 0.0, UNBOUNDED
    return float(c1), 1.0 / c1


def rate_gamma1(a: float, a_bar: Bound, q_lambda_max: float) -> float:
    """Certified exponential rate ``(a*a_bar - a**2) / (a_bar * lambda_max(Q))``."""
    if a_bar is UNBOUNDED:
        if not a > 0:
            raise ValueError(f"gain inadmissible: a={a} must be positive")
        return a / q_lambda_max
    if not 0 < a < a_bar:
        raise ValueError(f"gain inadmissible: a={a} outside (0, {a_bar:.6g})")
    return (a * a_bar - a * a) / (a_bar * q_lambda_max)


def switching_gain_bound(n: int, noise: NoiseProfile) -> tuple[float, Bound]:
    """Return ``(c4, a_bar_bar)`` with ``c4 = 2(N-1) max sigma^2`` and ``a_bar_bar = 2N / c4``."""
    if n < 2:
        raise ValueError("switching bound needs N >= 2")
    smax = noise.max_sigma()
    c4 = 2.0 * (n - 1) * smax * smax
    if c4 == 0.0:
        return 0.0, UNBOUNDED
    return c4, 2.0 * n / c4


def _complement_of_ones(n: int) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of ``1_N``."""
    q, _ = np.linalg.qr(np.ones((n, 1)), mode="complete")
    return q[:, 1:]


def union_constants(gs: Sequence[Digraph]) -> UnionConstants:
    """Constants with ``c* U(x) <= sum_k P_k(x) <= e c** U(x)``.

    ``U(x) = x^T (N I - 1 1^T) x`` equals ``N |x|^2`` on the complement of
    ``1_N``, so the extremal Rayleigh quotients of ``sum_k H_k`` there,
    divided by ``N``, give ``c*`` and ``c**``.
    """
    g_union = union(gs)
    if not has_spanning_tree(g_union):
        raise GraphError("union of the graphs has no spanning tree; c* would be 0")
    n = g_union.n_nodes
    e = edge_multiplicity(gs)
    if n == 1:
        return UnionConstants(1.0, 1.0, e)
    H = sum(disagreement_form(g) for g in gs)
    B = _complement_of_ones(n)
    lam = np.linalg.eigvalsh(B.T @ H @ B)
    return UnionConstants(float(lam[0] / n), float(lam[-1] / n), e)


@dataclass(frozen=True)
class AverageSubspace:
    kappa: int
    weights: np.ndarray

    def __call__(self, x0) -> bool:
        x0 = np.asarray(x0, dtype=float)
        return bool(abs(self.weights @ x0) <= 1e-9 * np.linalg.norm(x0))


def average_subspace(pi: np.ndarray, n: int) -> AverageSubspace:
    """Initial states whose ``pi``-weighted mean equals their plain mean.

    ``kappa`` counts the entries of ``pi`` that differ from ``1/N``.
    """
    w = np.asarray(pi, dtype=float) - 1.0 / n
    kappa = int(np.sum(np.abs(w) > KAPPA_TOL))
    w = np.where(np.abs(w) > KAPPA_TOL, w, 0.0)
    return AverageSubspace(kappa, w)


def select_gain(gain: Union[float, str], bound: Bound) -> float:
    """Resolve a configured gain; ``"auto"`` picks half the applicable bound."""
    if gain == "auto":
        if bound is UNBOUNDED:
            raise ValueError("gain 'auto' needs a finite bound; set an explicit gain for noise-free networks")
        return 0.5 * bound
    a = float(gain)
    if not a > 0:
        raise ValueError(f"gain must be positive, got {a}")
    if bound is not UNBOUNDED and a >= bound:
        raise ValueError(f"gain inadmissible: a={a} >= bound {bound:.6g}")
    return a


def is_hurwitz(m: np.ndarray, tol: float = HURWITZ_TOL) -> bool:
    return bool(np.max(np.linalg.eigvals(m).real) < -tol)
