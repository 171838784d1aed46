"""JSON scenario files.

A scenario names the graphs (1-based nodes, edges as ``[sender, receiver]``),
an optional switching schedule, noise intensities, the gain, the initial
state, simulation settings and the checks that decide the exit status::

    {
      "name": "example_5_2",
      "graphs": [{"n": 4, "edges": [[1, 2], [2, 1], ...]}, ...],
      "schedule": {"segments": [[1, 1.0], [2, 1.0]], "repeat": true,
                   "min_dwell": 1.0, "window": 2.0},
      "sigma": 1.0,
      "gain": 1.2,
      "x0": [1, 2, 5, -10],
      "sim": {"dt": 0.001, "t_end": 50, "n_paths": 500, "seed": 42,
              "record_interval": 0.1},
      "checks": ["mean_square", {"name": "strong_consensus", "tol": 0.01}]
    }

Schedule segments reference graphs by 1-based position.  ``sigma`` is a
number (applied to every edge of every graph) or
``{"edges": [[u, v, s], ...]}``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .dynamics import SimulationParams, SwitchingSchedule, Topology
from .graph import Digraph, GraphError, NoiseProfile, has_spanning_tree, union

KNOWN_CHECKS = {
    "mean_square": {"ratio": 1e-2},
    "rate_bound": {"slack": 1.2, "fit_fraction": 0.8},
    "limit_mean": {"target": None, "tol": 0.5},
    "average_consensus": {},
    "strong_consensus": {"tail_fraction": 0.1, "tol": 1e-2},
    "sum_conservation": {},
}


class ScenarioError(ValueError):
    """Invalid scenario; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class CheckSpec:
    name: str
    expect: bool = True
    options: dict = field(default_factory=dict)

    def option(self, key):
        return self.options.get(key, KNOWN_CHECKS[self.name].get(key))

    def to_json(self) -> Union[str, dict]:
        if self.expect and not self.options:
            return self.name
        out = {"name": self.name}
        if not self.expect:
            out["expect"] = False
        out.update(self.options)
        return out


@dataclass(frozen=True)
class SimSettings:
    dt: float = 1e-3
    t_end: float = 10.0
    n_paths: int = 100
    seed: int = 42
    record_interval: Optional[float] = None

    def record_every(self) -> int:
        if self.record_interval is None:
            return max(1, int(round(self.t_end / self.dt / 1000)))
        return max(1, int(round(self.record_interval / self.dt)))


@dataclass(frozen=True)
class Scenario:
    name: str
    graphs: tuple[Digraph, ...]
    schedule_spec: Optional[dict]
    sigma_spec: Any
    gain: Union[float, str]
    x0: tuple[float, ...]
    sim: SimSettings
    checks: tuple[CheckSpec, ...]

    @property
    def n(self) -> int:
        return self.graphs[0].n_nodes

    @property
    def switching(self) -> bool:
        return self.schedule_spec is not None

    @property
    def noise(self) -> NoiseProfile:
        return _noise_from_spec(self.sigma_spec, self.graphs)

    def topology(self) -> Topology:
        if not self.switching:
            return self.graphs[0]
        return _schedule_from_spec(self.schedule_spec, self.graphs, self.sim.t_end)

    def params(self, gain: float) -> SimulationParams:
        return SimulationParams(self.sim.dt, self.sim.t_end, self.sim.n_paths, self.sim.seed, gain,
                                np.array(self.x0), self.sim.record_every())

    def with_overrides(self, seed=None, paths=None, dt=None, gain=None, x0=None) -> "Scenario":
        sim = self.sim
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if paths is not None:
            changes["n_paths"] = int(paths)
        if dt is not None:
            changes["dt"] = float(dt)
        if changes:
            sim = SimSettings(**{**sim.__dict__, **changes})
        out = Scenario(self.name, self.graphs, self.schedule_spec, self.sigma_spec,
                       self.gain if gain is None else _parse_gain_value(gain),
                       self.x0 if x0 is None else tuple(float(v) for v in x0), sim, self.checks)
        errs = validate(out)
        if errs:
            raise ScenarioError(errs)
        return out

    def to_json(self) -> dict:
        sim = {"dt": self.sim.dt, "t_end": self.sim.t_end, "n_paths": self.sim.n_paths, "seed": self.sim.seed}
        if self.sim.record_interval is not None:
            sim["record_interval"] = self.sim.record_interval
        return {
            "name": self.name,
            "graphs": [g.to_literal() for g in self.graphs],
            "schedule": copy.deepcopy(self.schedule_spec),
            "sigma": copy.deepcopy(self.sigma_spec),
            "gain": self.gain,
            "x0": list(self.x0),
            "sim": sim,
            "checks": [c.to_json() for c in self.checks],
        }


def _noise_from_spec(spec, graphs) -> NoiseProfile:
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return NoiseProfile.uniform(graphs, float(spec))
    edges = union(list(graphs)).edges
    table = {(int(u), int(v)): float(s) for u, v, s in spec["edges"]}
    return NoiseProfile({e: table.get(e, 0.0) for e in edges})


def _schedule_from_spec(spec, graphs, t_end) -> SwitchingSchedule:
    pattern = [(int(k) - 1, float(d)) for k, d in spec["segments"]]
    dwell = float(spec.get("min_dwell", min(d for _, d in pattern)))
    window = float(spec["window"]) if "window" in spec else sum(d for _, d in pattern)
    if spec.get("repeat", False):
        return SwitchingSchedule.periodic(graphs, pattern, t_end, dwell, window)
    return SwitchingSchedule(tuple(graphs), tuple(pattern), dwell, window)


def _parse_gain_value(value):
    if value == "auto":
        return "auto"
    return float(value)


def _number(obj, key, errs, where, kind=float, required=True, default=None):
    if key not in obj:
        if required:
            errs.append(f"{where}.{key}: missing field")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errs.append(f"{where}.{key}: expected a number, got {v!r}")
        return default
    if kind is int and int(v) != v:
        errs.append(f"{where}.{key}: expected an integer, got {v!r}")
        return default
    return kind(v)


def parse(doc: Any) -> Scenario:
    """Build and validate a :class:`Scenario` from a decoded JSON document."""
    errs: list[str] = []
    if not isinstance(doc, dict):
        raise ScenarioError(["top level: expected a JSON object"])
    name = doc.get("name", "scenario")
    if not isinstance(name, str):
        errs.append("name: expected a string")
        name = "scenario"

    graphs: list[Digraph] = []
    raw_graphs = doc.get("graphs")
    if not isinstance(raw_graphs, list) or not raw_graphs:
        errs.append("graphs: expected a non-empty list")
        raw_graphs = []
    for i, g in enumerate(raw_graphs):
        try:
            if not isinstance(g, dict) or "n" not in g or "edges" not in g:
                raise GraphError('expected {"n": N, "edges": [[u, v], ...]}')
            graphs.append(Digraph.from_literal(g))
        except (GraphError, TypeError, ValueError) as exc:
            errs.append(f"graphs[{i}]: {exc}")

    schedule = doc.get("schedule")
    if schedule is not None:
        if not isinstance(schedule, dict) or not isinstance(schedule.get("segments"), list) or not schedule["segments"]:
            errs.append("schedule.segments: expected a non-empty list of [graph, duration]")
            schedule = None
        else:
            for j, seg in enumerate(schedule["segments"]):
                if (not isinstance(seg, list) or len(seg) != 2 or isinstance(seg[0], bool)
                        or not isinstance(seg[0], int) or not isinstance(seg[1], (int, float))):
                    errs.append(f"schedule.segments[{j}]: expected [graph_number, duration]")
                elif not 1 <= seg[0] <= len(raw_graphs):
                    errs.append(f"schedule.segments[{j}]: graph {seg[0]} not in 1..{len(raw_graphs)}")
            for key in ("min_dwell", "window"):
                if key in schedule:
                    _number(schedule, key, errs, "schedule")
    elif len(raw_graphs) > 1:
        errs.append(f"graphs: fixed topology needs exactly one graph, got {len(raw_graphs)}")

    sigma = doc.get("sigma", 0.0)
    if isinstance(sigma, bool) or not (isinstance(sigma, (int, float)) or isinstance(sigma, dict)):
        errs.append("sigma: expected a number or {\"edges\": [[u, v, s], ...]}")
        sigma = 0.0
    elif isinstance(sigma, (int, float)) and not sigma >= 0:
        errs.append(f"sigma: must be >= 0, got {sigma}")
    elif isinstance(sigma, dict):
        entries = sigma.get("edges")
        if not isinstance(entries, list):
            errs.append("sigma.edges: expected a list of [u, v, s]")
            sigma = 0.0
        else:
            edge_union = union(graphs).edges if graphs and len({g.n_nodes for g in graphs}) == 1 else set()
            for j, ent in enumerate(entries):
                if not isinstance(ent, list) or len(ent) != 3 or not all(isinstance(v, (int, float)) for v in ent):
                    errs.append(f"sigma.edges[{j}]: expected [u, v, s]")
                elif ent[2] < 0:
                    errs.append(f"sigma.edges[{j}]: noise intensity must be >= 0")
                elif edge_union and (int(ent[0]), int(ent[1])) not in edge_union:
                    errs.append(f"sigma.edges[{j}]: ({ent[0]},{ent[1]}) is not an edge of any graph")

    gain = doc.get("gain")
    if gain is None:
        errs.append("gain: missing field")
        gain = "auto"
    elif gain != "auto" and (isinstance(gain, bool) or not isinstance(gain, (int, float)) or not gain > 0):
        errs.append(f"gain: expected a positive number or \"auto\", got {gain!r}")
        gain = "auto"
    else:
        gain = _parse_gain_value(gain)

    x0 = doc.get("x0")
    if not isinstance(x0, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x0):
        errs.append("x0: expected a list of numbers")
        x0 = []

    raw_sim = doc.get("sim", {})
    if not isinstance(raw_sim, dict):
        errs.append("sim: expected an object")
        raw_sim = {}
    defaults = SimSettings()
    sim = SimSettings(
        dt=_number(raw_sim, "dt", errs, "sim", required=False, default=defaults.dt),
        t_end=_number(raw_sim, "t_end", errs, "sim", default=defaults.t_end),
        n_paths=_number(raw_sim, "n_paths", errs, "sim", kind=int, required=False, default=defaults.n_paths),
        seed=_number(raw_sim, "seed", errs, "sim", kind=int, required=False, default=defaults.seed),
        record_interval=_number(raw_sim, "record_interval", errs, "sim", required=False, default=None),
    )

    checks = []
    for j, c in enumerate(doc.get("checks", [])):
        if isinstance(c, str):
            c = {"name": c}
        if not isinstance(c, dict) or c.get("name") not in KNOWN_CHECKS:
            errs.append(f"checks[{j}]: unknown check {c!r}; known: {sorted(KNOWN_CHECKS)}")
            continue
        opts = {k: v for k, v in c.items() if k not in ("name", "expect")}
        unknown = set(opts) - set(KNOWN_CHECKS[c["name"]])
        if unknown:
            errs.append(f"checks[{j}]: unknown options {sorted(unknown)} for {c['name']}")
        checks.append(CheckSpec(c["name"], bool(c.get("expect", True)), opts))

    scenario = Scenario(name, tuple(graphs), schedule, sigma, gain, tuple(float(v) for v in x0), sim, tuple(checks))
    if graphs and len(graphs) == len(raw_graphs):
        # report semantic problems alongside structural ones when the pieces they need parsed
        try:
            errs += [e for e in validate(scenario) if e not in errs]
        except (GraphError, TypeError, ValueError, KeyError, IndexError):
            if not errs:
                raise
    if errs:
        raise ScenarioError(errs)
    return scenario


def validate(s: Scenario) -> list[str]:
    """Semantic checks that need the assembled scenario."""
    errs = []
    ns = {g.n_nodes for g in s.graphs}
    if len(ns) > 1:
        return [f"graphs: inconsistent node counts {sorted(ns)}"]
    n = s.n
    if len(s.x0) != n:
        errs.append(f"x0: has length {len(s.x0)}, expected {n}")
    if not s.switching and not has_spanning_tree(s.graphs[0]):
        errs.append("graphs[0]: fixed graph has no spanning tree")
    if s.sim.n_paths < 1:
        errs.append(f"sim.n_paths: must be >= 1, got {s.sim.n_paths}")
    if not 0 <= s.sim.seed < 2**64:
        errs.append(f"sim.seed: must fit in 64 unsigned bits, got {s.sim.seed}")
    if not s.sim.dt > 0:
        errs.append(f"sim.dt: must be positive, got {s.sim.dt}")
    elif not s.sim.t_end >= s.sim.dt:
        errs.append(f"sim.t_end: must be >= dt, got {s.sim.t_end}")
    if s.sim.record_interval is not None and not s.sim.record_interval >= s.sim.dt:
        errs.append(f"sim.record_interval: must be >= dt, got {s.sim.record_interval}")
    try:
        silent = s.noise.is_zero()
    except (GraphError, ValueError):
        silent = False  # the malformed sigma is reported by the parser
    if s.gain == "auto" and silent:
        errs.append("gain: \"auto\" needs nonzero noise (the bound is unbounded); give an explicit gain")
    if s.switching and not errs:
        sched = s.topology()
        errs += [f"schedule: {e}" for e in sched.problems(s.sim.t_end)]
        if s.sim.dt > sched.min_dwell / 10 * (1 + 1e-9):
            errs.append(f"sim.dt: {s.sim.dt} exceeds min_dwell/10 = {sched.min_dwell / 10}")
    for c in s.checks:
        if c.name in ("rate_bound",) and s.switching:
            errs.append(f"checks: {c.name} applies to fixed topologies only")
    return errs


def load_scenario(path: Union[str, Path]) -> Scenario:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from exc
    return parse(doc)


def bundled_scenario(name: str) -> Path:
    """Path of a scenario shipped with the package (``example_5_1`` etc.)."""
    here = Path(__file__).parent / "scenarios"
    path = here / (name if name.endswith(".json") else name + ".json")
    if not path.exists():
        raise FileNotFoundError(f"no bundled scenario {name!r}; have {sorted(p.stem for p in here.glob('*.json'))}")
    return path
