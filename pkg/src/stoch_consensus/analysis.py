"""Ensemble statistics for mean-square, strong and average consensus."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import TrajectoryEnsemble, topology_graphs
from .graph import is_balanced

log = logging.getLogger(__name__)

Z95 = 1.96
FLOOR = 1e-14
CONVERGED_RATIO = 1e-3


class AnalysisError(ValueError):
    pass


def disagreement(x) -> float:
    """``U(x) = 0.5 * sum_i sum_j (x_j - x_i)**2``, via the identity ``N |x|^2 - (sum x)^2``."""
    x = np.asarray(x, dtype=float)
    return float(x.size * (x @ x) - x.sum() ** 2)


def disagreement_pairs(x) -> float:
    """Direct double sum for ``U(x)``; slower reference for :func:`disagreement`."""
    x = np.asarray(x, dtype=float)
    return float(0.5 * np.sum((x[None, :] - x[:, None]) ** 2))


def consensus_error(x, pi) -> float:
    """Squared distance from ``x`` to ``(pi @ x) * 1``."""
    x = np.asarray(x, dtype=float)
    r = x - float(np.asarray(pi) @ x)
    return float(r @ r)


def _batch_disagreement(states: np.ndarray) -> np.ndarray:
    centered = states - states.mean(axis=-1, keepdims=True)
    return states.shape[-1] * np.sum(centered * centered, axis=-1)


def _batch_consensus_error(states: np.ndarray, pi: np.ndarray) -> np.ndarray:
    r = states - (states @ pi)[..., None]
    return np.sum(r * r, axis=-1)


def ms_curve(ens: TrajectoryEnsemble, pi: Optional[np.ndarray] = None) -> np.ndarray:
    """Ensemble mean of the consensus error (``pi`` given) or of ``U`` (``pi=None``)."""
    if pi is None:
        per_path = _batch_disagreement(ens.states)
    else:
        per_path = _batch_consensus_error(ens.states, np.asarray(pi, dtype=float))
    return per_path.mean(axis=0)


def fit_rate(times, curve, window: tuple[float, float]) -> float:
    """Decay rate ``-slope`` of a least-squares line through ``log(curve)`` on ``window``.

    Points at or below ``1e-14`` are dropped.
    """
    times = np.asarray(times, dtype=float)
    curve = np.asarray(curve, dtype=float)
    lo, hi = window
    sel = (times >= lo) & (times <= hi) & (curve > FLOOR)
    if sel.sum() < 10:
        raise AnalysisError(f"curve floored: only {int(sel.sum())} usable points in [{lo}, {hi}]")
    slope = np.polyfit(times[sel], np.log(curve[sel]), 1)[0]
    return float(-slope)


@dataclass
class LimitStatistics:
    limit_mean: float
    limit_variance: float
    ci_halfwidth: float
    per_path: np.ndarray = field(repr=False)
    converged: bool = True


def limit_statistics(ens: TrajectoryEnsemble, pi: Optional[np.ndarray] = None) -> LimitStatistics:
    """Per-path consensus values at ``t_end`` and their Monte Carlo summary.

    The per-path value is ``pi @ x(t_end)`` for fixed topology, or the plain
    mean of ``x(t_end)`` when ``pi`` is ``None`` (balanced switching).
    """
    final = ens.states[:, -1, :]
    per_path = final.mean(axis=1) if pi is None else final @ np.asarray(pi, dtype=float)
    r = per_path.size
    mean = float(per_path.mean())
    var = float(per_path.var(ddof=1)) if r > 1 else 0.0
    curve = ms_curve(ens, pi)
    converged = bool(curve[-1] <= CONVERGED_RATIO * curve[0]) or curve[0] == 0.0
    if not converged:
        log.warning("not converged: terminal error %.3g vs initial %.3g", curve[-1], curve[0])
    return LimitStatistics(mean, var, Z95 * np.sqrt(var / r), per_path, converged)


def average_consensus_check(stats: LimitStatistics, x0) -> bool:
    """Unbiased average consensus: limit mean within its CI of ``mean(x0)``, finite variance."""
    target = float(np.mean(x0))
    return bool(abs(stats.limit_mean - target) <= stats.ci_halfwidth + 1e-9 and np.isfinite(stats.limit_variance))


@dataclass
class StrongConsensusResult:
    passed: bool
    worst_path: int
    worst_ratio: float


def strong_consensus_check(ens: TrajectoryEnsemble, tail_fraction: float = 0.1, tol: float = 1e-2) -> StrongConsensusResult:
    """Sample-path proxy: every path's disagreement stays below ``tol * U(x0)`` over the tail window.

    Almost-sure convergence cannot be observed in finite time; this only
    checks that each simulated path has settled by the end of the run.
    """
    t_end = ens.times[-1]
    tail = ens.times >= t_end * (1.0 - tail_fraction) - 1e-12
    u0 = disagreement(ens.params.x0)
    worst = _batch_disagreement(ens.states[:, tail, :]).max(axis=1)
    pos = int(np.argmax(worst))
    if u0 == 0.0:
        ratio = 0.0 if worst[pos] == 0.0 else float("inf")
    else:
        ratio = float(worst[pos] / u0)
    return StrongConsensusResult(bool(ratio <= tol), int(ens.path_indices[pos]), ratio)


@dataclass
class SumConservation:
    deviation: float
    standard_error: float
    within_3se: bool


def sum_conservation_check(ens: TrajectoryEnsemble) -> SumConservation:
    """Drift of the ensemble mean of ``1^T x(t_end)`` from ``1^T x0`` (a martingale on balanced graphs)."""
    if not all(is_balanced(g) for g in topology_graphs(ens.topology)):
        raise AnalysisError("check requires balanced graphs")
    totals = ens.states[:, -1, :].sum(axis=1)
    dev = float(totals.mean() - ens.params.x0.sum())
    se = float(totals.std(ddof=1) / np.sqrt(totals.size)) if totals.size > 1 else 0.0
    return SumConservation(dev, se, bool(abs(dev) <= 3.0 * se + 1e-9 * max(1.0, abs(ens.params.x0.sum()))))
