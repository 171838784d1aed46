"""Euler-Maruyama simulation of the closed-loop consensus SDE.

Each agent ``i`` integrates

    dx_i = a * sum_{j in N_i} (x_j - x_i) dt + a * sum_{j in N_i} sigma_ji |x_j - x_i| dW_ji

with one independent Wiener process per directed edge.  Topologies are
either a fixed :class:`~stoch_consensus.graph.Digraph` or a
:class:`SwitchingSchedule`.  The time grid is cut into integration pieces
(one per step, plus an extra cut wherever a switching instant falls strictly
inside a step); the random draws are indexed by piece, so results do not
depend on how paths are distributed over workers.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import _pykernel
from .graph import Digraph, NoiseProfile, has_spanning_tree, union

log = logging.getLogger(__name__)

try:
    if os.environ.get("STOCH_CONSENSUS_PURE"):
        raise ImportError("compiled kernel disabled by STOCH_CONSENSUS_PURE")
    from . import _ckernel
except ImportError as exc:  # pragma: no cover - depends on the build
    _ckernel = None
    log.debug("compiled kernel unavailable (%s); using numpy integrator", exc)

BACKEND = "compiled" if _ckernel is not None else "python"
BLOWUP_LIMIT = 1e12
SNAP_TOL = 1e-9


class SimulationError(RuntimeError):
    """A sample path left the finite range; carries the path index and time."""

    def __init__(self, path: int, time: float):
        super().__init__(f"blow-up on path {path} at t={time:.6g}")
        self.path = path
        self.time = time


@dataclass(frozen=True)
class SwitchingSchedule:
    """Piecewise-constant topology signal.

    ``segments`` is a sequence of ``(graph_index, duration)`` pairs with
    0-based indices into ``graphs``.  The final segment may run past the
    simulated horizon.
    """

    graphs: tuple[Digraph, ...]
    segments: tuple[tuple[int, float], ...]
    min_dwell: float
    window: float

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        object.__setattr__(self, "segments", tuple((int(k), float(d)) for k, d in self.segments))

    @classmethod
    def periodic(cls, graphs: Sequence[Digraph], pattern: Sequence[tuple[int, float]], t_end: float,
                 min_dwell: float, window: float) -> "SwitchingSchedule":
        """Repeat ``pattern`` until it covers ``[0, t_end]``."""
        period = sum(d for _, d in pattern)
        if period <= 0:
            raise ValueError("switching pattern must have positive total duration")
        reps = max(1, math.ceil(t_end / period - SNAP_TOL))
        return cls(tuple(graphs), tuple(pattern) * reps, min_dwell, window)

    @property
    def n_nodes(self) -> int:
        return self.graphs[0].n_nodes

    @property
    def duration(self) -> float:
        return float(sum(d for _, d in self.segments))

    def switch_times(self) -> np.ndarray:
        """Segment start times, ``[0, t1, t2, ...]``."""
        return np.concatenate([[0.0], np.cumsum([d for _, d in self.segments])[:-1]])

    def problems(self, t_end: Optional[float] = None) -> list[str]:
        """All violated schedule invariants (empty list when valid)."""
        errs = []
        if not self.graphs:
            return ["schedule has no graphs"]
        n = self.graphs[0].n_nodes
        if any(g.n_nodes != n for g in self.graphs):
            errs.append("schedule graphs disagree on the number of nodes")
        if not self.segments:
            return errs + ["schedule has no segments"]
        if not self.min_dwell > 0:
            errs.append(f"min_dwell must be positive, got {self.min_dwell}")
        if not self.window > 0:
            errs.append(f"window must be positive, got {self.window}")
        for pos, (k, d) in enumerate(self.segments):
            if not 0 <= k < len(self.graphs):
                errs.append(f"segment {pos} references unknown graph {k + 1}")
            if not d > 0:
                errs.append(f"segment {pos} has non-positive duration {d}")
            elif self.min_dwell > 0 and d < self.min_dwell * (1 - SNAP_TOL):
                errs.append(f"segment {pos} lasts {d} < dwell time {self.min_dwell}")
        horizon = self.duration if t_end is None else t_end
        if t_end is not None and self.duration < t_end * (1 - SNAP_TOL):
            errs.append(f"schedule covers [0, {self.duration}] but the horizon is {t_end}")
        if errs or not self.window > 0:
            return errs
        starts = self.switch_times()
        for pos, s in enumerate(starts):
            if s + self.window > horizon * (1 + SNAP_TOL):
                break
            stop = s + self.window
            active = [self.graphs[k] for (k, _), b in zip(self.segments[pos:], starts[pos:]) if b < stop - SNAP_TOL]
            if not has_spanning_tree(union(active)):
                errs.append(f"window [{s:g}, {stop:g}) starting at segment {pos}: union of active graphs has no spanning tree")
                break
        return errs

    def graph_index_at(self, t: float) -> int:
        if t < 0 or t > self.duration * (1 + SNAP_TOL):
            raise ValueError(f"t={t} outside schedule [0, {self.duration}]")
        starts = self.switch_times()
        pos = int(np.searchsorted(starts, t + SNAP_TOL * max(1.0, abs(t)), side="right")) - 1
        return self.segments[max(pos, 0)][0]


Topology = Union[Digraph, SwitchingSchedule]


def graph_at(topology: Topology, t: float) -> Digraph:
    """Graph in force at time ``t``; switching instants belong to the new segment."""
    if isinstance(topology, Digraph):
        if t < 0:
            raise ValueError(f"t={t} is negative")
        return topology
    return topology.graphs[topology.graph_index_at(t)]


def topology_graphs(topology: Topology) -> tuple[Digraph, ...]:
    return (topology,) if isinstance(topology, Digraph) else topology.graphs


@dataclass(frozen=True)
class SimulationParams:
    dt: float
    t_end: float
    n_paths: int
    seed: int
    gain: float
    x0: np.ndarray
    record_every: int = 1

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=np.float64).copy())
        self.x0.setflags(write=False)

    def problems(self, topology: Optional[Topology] = None) -> list[str]:
        errs = []
        if not self.dt > 0:
            errs.append(f"dt must be positive, got {self.dt}")
        elif not self.t_end >= self.dt:
            errs.append(f"t_end={self.t_end} must be at least dt={self.dt}")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            errs.append(f"n_paths must be a positive integer, got {self.n_paths}")
        if not 0 <= int(self.seed) < 2**64:
            errs.append(f"seed must fit in 64 unsigned bits, got {self.seed}")
        if not self.gain >= 0:
            errs.append(f"gain must be non-negative, got {self.gain}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            errs.append(f"record_every must be a positive integer, got {self.record_every}")
        if not np.all(np.isfinite(self.x0)):
            errs.append("x0 must be finite")
        if topology is not None:
            n = topology_graphs(topology)[0].n_nodes
            if self.x0.shape != (n,):
                errs.append(f"x0 has length {self.x0.size}, expected {n}")
            if isinstance(topology, SwitchingSchedule) and self.dt > topology.min_dwell / 10 * (1 + SNAP_TOL):
                errs.append(f"dt={self.dt} exceeds min_dwell/10={topology.min_dwell / 10}")
        return errs

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.t_end / self.dt + SNAP_TOL))

    def times(self) -> np.ndarray:
        n_slots = self.n_steps // self.record_every + 1
        return np.arange(n_slots) * (self.record_every * self.dt)


@dataclass(frozen=True)
class TrajectoryEnsemble:
    times: np.ndarray
    states: np.ndarray
    params: SimulationParams
    topology: Topology
    path_indices: np.ndarray = field(default=None)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.states.shape[2]

    @property
    def is_switching(self) -> bool:
        return isinstance(self.topology, SwitchingSchedule)


def drift(x: np.ndarray, g: Digraph, a: float) -> np.ndarray:
    """Noise-free velocity ``-a L x`` accumulated edge by edge."""
    out = np.zeros_like(np.asarray(x, dtype=float))
    for u, v in g.sorted_edges():
        out[v - 1] += a * (x[u - 1] - x[v - 1])
    return out


def step(x, g: Digraph, noise: NoiseProfile, a: float, dt: float, eta, t: float = float("nan")) -> np.ndarray:
    """One Euler-Maruyama update of a single state vector.

    ``eta`` holds one standard normal per edge of ``g`` in
    ``g.sorted_edges()`` order.  ``t`` only labels a blow-up error.
    """
    x = np.asarray(x, dtype=float)
    eta = np.asarray(eta, dtype=float)
    edges = g.sorted_edges()
    if eta.shape != (len(edges),):
        raise ValueError(f"expected {len(edges)} noise draws, got shape {eta.shape}")
    sqh = math.sqrt(dt)
    dx = np.zeros_like(x)
    for (u, v), z in zip(edges, eta):
        diff = x[u - 1] - x[v - 1]
        dx[v - 1] += a * diff * dt + a * noise(u, v) * abs(diff) * sqh * z
    out = x + dx
    if not np.all(np.isfinite(out)) or np.max(np.abs(out)) > BLOWUP_LIMIT:
        raise SimulationError(-1, t + dt)
    return out


@dataclass(frozen=True)
class _Plan:
    """Flat arrays consumed by both integrators."""

    src: np.ndarray
    dst: np.ndarray
    sigma: np.ndarray
    graph_ptr: np.ndarray
    graph_edges: np.ndarray
    piece_graph: np.ndarray
    piece_dt: np.ndarray
    piece_slot: np.ndarray
    n_slots: int

    def piece_end_time(self, p: int) -> float:
        return float(np.sum(self.piece_dt[: p + 1]))


def _plan(topology: Topology, noise: NoiseProfile, params: SimulationParams) -> _Plan:
    graphs = topology_graphs(topology)
    edges = union(graphs).sorted_edges()
    index = {e: k for k, e in enumerate(edges)}
    src = np.array([u - 1 for u, _ in edges], dtype=np.int64)
    dst = np.array([v - 1 for _, v in edges], dtype=np.int64)
    sigma = np.array([noise(u, v) for u, v in edges], dtype=np.float64)
    ptr = [0]
    members: list[int] = []
    for g in graphs:
        members.extend(index[e] for e in g.sorted_edges())
        ptr.append(len(members))

    dt = params.dt
    n_steps = params.n_steps
    stride = params.record_every
    step_slot = np.full(n_steps, -1, dtype=np.int64)
    ends = np.arange(1, n_steps + 1)
    hit = ends % stride == 0
    step_slot[hit] = ends[hit] // stride
    n_slots = n_steps // stride + 1

    if isinstance(topology, Digraph):
        return _Plan(src, dst, sigma, np.array(ptr, dtype=np.int64), np.array(members, dtype=np.int64),
                     np.zeros(n_steps, dtype=np.int64), np.full(n_steps, dt), step_slot, n_slots)

    # switching instants strictly inside the horizon, snapped to the grid when close
    inner = [b for b in topology.switch_times()[1:] if b < n_steps * dt]
    off_grid = {}
    for b in inner:
        i = b / dt
        if abs(i - round(i)) > SNAP_TOL * max(1.0, i):
            off_grid.setdefault(int(math.floor(i)), []).append(b)
    starts = np.arange(n_steps) * dt
    seg_starts = topology.switch_times()
    seg_graph = np.array([k for k, _ in topology.segments], dtype=np.int64)
    pos = np.searchsorted(seg_starts, starts + SNAP_TOL * np.maximum(1.0, starts), side="right") - 1
    step_graph = seg_graph[np.clip(pos, 0, len(seg_graph) - 1)]
    if not off_grid:
        return _Plan(src, dst, sigma, np.array(ptr, dtype=np.int64), np.array(members, dtype=np.int64),
                     step_graph, np.full(n_steps, dt), step_slot, n_slots)

    pg, pd, ps = [], [], []
    for i in range(n_steps):
        cuts = off_grid.get(i)
        if not cuts:
            pg.append(step_graph[i]); pd.append(dt); ps.append(step_slot[i])
            continue
        t0 = i * dt
        bounds = [t0] + sorted(cuts) + [t0 + dt]
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            pg.append(topology.graph_index_at(lo)); pd.append(hi - lo); ps.append(-1)
        ps[-1] = step_slot[i]
    return _Plan(src, dst, sigma, np.array(ptr, dtype=np.int64), np.array(members, dtype=np.int64),
                 np.array(pg, dtype=np.int64), np.array(pd, dtype=np.float64),
                 np.array(ps, dtype=np.int64), n_slots)


def _run_kernel(plan: _Plan, params: SimulationParams, paths: np.ndarray, out: np.ndarray, backend: str):
    kernel = _ckernel if backend == "compiled" else _pykernel
    if kernel is None:
        raise RuntimeError("compiled kernel is not available in this build")
    return kernel.simulate_paths(
        np.ascontiguousarray(params.x0), plan.src, plan.dst, plan.sigma, plan.graph_ptr, plan.graph_edges,
        plan.piece_graph, plan.piece_dt, plan.piece_slot, float(params.gain), int(params.seed),
        paths, out, BLOWUP_LIMIT)


def _check_inputs(topology: Topology, params: SimulationParams):
    errs = params.problems(topology)
    if isinstance(topology, SwitchingSchedule):
        errs += topology.problems()
        if topology.duration < params.n_steps * params.dt * (1 - SNAP_TOL):
            errs.append(f"schedule ends at {topology.duration} before t_end={params.t_end}")
    if errs:
        raise ValueError("; ".join(errs))


def simulate_ensemble(topology: Topology, noise: NoiseProfile, params: SimulationParams,
                      workers: Optional[int] = None, backend: Optional[str] = None,
                      paths: Optional[Sequence[int]] = None) -> TrajectoryEnsemble:
    """Integrate ``params.n_paths`` independent sample paths (or the listed ``paths``).

    Path ``r`` draws from the stream keyed by ``(params.seed, r)``; the
    result is the same for any ``workers`` count.
    """
    _check_inputs(topology, params)
    backend = backend or BACKEND
    plan = _plan(topology, noise, params)
    idx = np.arange(params.n_paths, dtype=np.uint64) if paths is None else np.asarray(paths, dtype=np.uint64)
    out = np.empty((idx.size, plan.n_slots, params.x0.size))
    workers = max(1, min(workers or os.cpu_count() or 1, idx.size))
    bounds = np.linspace(0, idx.size, workers + 1).astype(int)
    chunks = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]

    def run(chunk):
        lo, hi = chunk
        bad_pos, bad_piece = _run_kernel(plan, params, idx[lo:hi], out[lo:hi], backend)
        return (lo + bad_pos, bad_piece) if bad_pos >= 0 else None

    if len(chunks) == 1:
        failures = [run(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            failures = list(pool.map(run, chunks))
    failures = [f for f in failures if f is not None]
    if failures:
        pos, piece = min(failures)
        raise SimulationError(int(idx[pos]), plan.piece_end_time(piece))
    log.debug("simulated %d paths x %d pieces on %s backend", idx.size, plan.piece_graph.size, backend)
    return TrajectoryEnsemble(params.times(), out, params, topology, idx.astype(np.int64))


def simulate_path(topology: Topology, noise: NoiseProfile, params: SimulationParams, path_index: int,
                  backend: Optional[str] = None) -> np.ndarray:
    """States of one sample path on the recorded grid, shape ``(len(times), N)``."""
    ens = simulate_ensemble(topology, noise, params, workers=1, backend=backend, paths=[path_index])
    return ens.states[0]
