"""certify -> simulate -> analyze, and the files each stage writes."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis
from .dynamics import SimulationError, TrajectoryEnsemble, simulate_ensemble
from .graph import has_spanning_tree, is_balanced, laplacian, union
from .scenario import CheckSpec, Scenario
from .spectral import (UNBOUNDED, Bound, SpectralError, average_subspace, decompose, fixed_gain_bound,
                       rate_gamma1, select_gain, switching_gain_bound, union_constants)

log = logging.getLogger(__name__)


class GainError(ValueError):
    """The configured gain is not below the applicable bound."""


def bound_to_json(b: Bound):
    return "unbounded" if b is UNBOUNDED else float(b)


def bound_from_json(v) -> Bound:
    return UNBOUNDED if v == "unbounded" else float(v)


def matrix_to_json(m: np.ndarray) -> dict:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return {"rows": int(m.shape[0]), "cols": int(m.shape[1]), "data": [float(v) for v in m.ravel(order="C")]}


def matrix_from_json(obj: dict) -> np.ndarray:
    return np.array(obj["data"], dtype=float).reshape(obj["rows"], obj["cols"])


@dataclass
class Certification:
    certificate: dict
    chosen_a: float
    applicable_bound: Bound
    pi: Optional[np.ndarray]
    gamma1: Optional[float]


def certify(scenario: Scenario) -> Certification:
    """Gain bounds and spectral data for a scenario; raises :class:`GainError` on an inadmissible gain."""
    noise = scenario.noise
    graphs = list(scenario.graphs)
    g = graphs[0] if not scenario.switching else union(graphs)
    n = scenario.n
    cert: dict = {"scenario": scenario.name, "mode": "switching" if scenario.switching else "fixed", "n": n}
    cert["spanning_tree"] = has_spanning_tree(g)
    cert["balanced"] = all(is_balanced(h) for h in graphs)

    decomp = None
    if cert["spanning_tree"] and n >= 2:
        try:
            decomp = decompose(laplacian(g))
        except SpectralError as exc:
            log.warning("decomposition failed: %s", exc)
    if decomp is not None:
        c1, a_bar = fixed_gain_bound(decomp, g, noise)
        sub = average_subspace(decomp.pi, n)
        cert["pi"] = [float(v) for v in decomp.pi]
        cert["kappa"] = sub.kappa
        cert["c1"] = float(c1)
        cert["a_bar"] = bound_to_json(a_bar)
        cert["q_lambda_max"] = decomp.q_lambda_max
    else:
        a_bar = None
        cert.update({"pi": None, "kappa": None, "c1": None, "a_bar": None, "q_lambda_max": None})

    _, a_bar_bar = switching_gain_bound(n, noise) if n >= 2 else (0.0, UNBOUNDED)
    cert["a_bar_bar"] = bound_to_json(a_bar_bar)

    if scenario.switching:
        bound, which = a_bar_bar, "a_bar_bar"
    else:
        if a_bar is None:
            raise GainError("fixed graph cannot be certified (no spanning tree)")
        bound, which = a_bar, "a_bar"
    cert["applicable_bound"] = which
    try:
        a = select_gain(scenario.gain, bound)
    except ValueError as exc:
        raise GainError(f"{exc} ({which} = {bound_to_json(bound)})") from exc
    cert["chosen_a"] = a

    gamma1 = None
    if not scenario.switching and decomp is not None:
        gamma1 = rate_gamma1(a, a_bar, decomp.q_lambda_max)
    cert["gamma1_at_chosen_a"] = gamma1

    try:
        uc = union_constants(graphs)
        cert["union_constants"] = {"c_star": uc.c_star, "c_star_star": uc.c_star_star, "e": uc.e}
    except ValueError:
        cert["union_constants"] = None

    if decomp is not None:
        cert["decomposition"] = {
            "phi2": matrix_to_json(decomp.phi2),
            "psi2": matrix_to_json(decomp.psi2),
            "l_tilde": matrix_to_json(decomp.l_tilde),
            "q": matrix_to_json(decomp.q),
        }
    pi = decomp.pi if decomp is not None else None
    return Certification(cert, a, bound, pi, gamma1)


def simulate(scenario: Scenario, cert: Certification, workers: Optional[int] = None) -> TrajectoryEnsemble:
    return simulate_ensemble(scenario.topology(), scenario.noise, scenario.params(cert.chosen_a), workers=workers)


def _check(spec: CheckSpec, scenario: Scenario, cert: Certification, ens: TrajectoryEnsemble,
           curve: np.ndarray, stats: analysis.LimitStatistics, fitted: Optional[float]) -> dict:
    out: dict = {"name": spec.name, "expect": spec.expect}
    x0 = np.array(scenario.x0)
    if spec.name == "mean_square":
        ratio = float(curve[-1] / curve[0]) if curve[0] > 0 else 0.0
        out["terminal_ratio"] = ratio
        verdict = ratio <= spec.option("ratio")
    elif spec.name == "rate_bound":
        g1 = cert.gamma1
        t = ens.times
        sel = t <= 0.6 * t[-1] + 1e-12
        envelope = spec.option("slack") * curve[0] * np.exp(-g1 * t[sel])
        excess = float(np.max(curve[sel] / envelope))
        out.update({"gamma1": g1, "fitted_rate": fitted, "max_curve_over_envelope": excess})
        verdict = excess <= 1.0 and fitted is not None and fitted >= spec.option("fit_fraction") * g1
    elif spec.name == "limit_mean":
        target = spec.option("target")
        if target is None:
            target = float(cert.pi @ x0) if (cert.pi is not None and not scenario.switching) else float(x0.mean())
        tol = max(spec.option("tol"), stats.ci_halfwidth)
        out.update({"target": target, "tolerance": tol, "limit_mean": stats.limit_mean})
        verdict = abs(stats.limit_mean - target) <= tol
    elif spec.name == "average_consensus":
        out.update({"initial_mean": float(x0.mean()), "limit_mean": stats.limit_mean, "ci_halfwidth": stats.ci_halfwidth})
        verdict = analysis.average_consensus_check(stats, x0)
    elif spec.name == "strong_consensus":
        res = analysis.strong_consensus_check(ens, spec.option("tail_fraction"), spec.option("tol"))
        out.update({"worst_path": res.worst_path, "worst_ratio": res.worst_ratio})
        verdict = res.passed
    elif spec.name == "sum_conservation":
        res = analysis.sum_conservation_check(ens)
        out.update({"deviation": res.deviation, "standard_error": res.standard_error})
        verdict = res.within_3se
    else:  # pragma: no cover - guarded by scenario validation
        raise ValueError(spec.name)
    out["verdict"] = bool(verdict)
    out["passed"] = bool(verdict) == spec.expect
    return out


def analyze(scenario: Scenario, cert: Certification, ens: TrajectoryEnsemble) -> dict:
    """Consensus report for an ensemble, including every configured check."""
    pi = None if scenario.switching else cert.pi
    curve = analysis.ms_curve(ens, pi)
    t_end = ens.times[-1]
    try:
        fitted = analysis.fit_rate(ens.times, curve, (0.1 * t_end, 0.6 * t_end))
    except analysis.AnalysisError as exc:
        log.info("rate fit skipped: %s", exc)
        fitted = None
    stats = analysis.limit_statistics(ens, pi)
    strong = analysis.strong_consensus_check(ens)
    checks = [_check(c, scenario, cert, ens, curve, stats, fitted) for c in scenario.checks]
    return {
        "scenario": scenario.name,
        "mode": "switching" if scenario.switching else "fixed",
        "n_paths": int(ens.n_paths),
        "seed": int(ens.params.seed),
        "dt": float(ens.params.dt),
        "chosen_a": cert.chosen_a,
        "certified_rate": cert.gamma1,
        "fitted_rate": fitted,
        "limit_mean": stats.limit_mean,
        "limit_variance": stats.limit_variance,
        "ci_halfwidth": stats.ci_halfwidth,
        "converged": stats.converged,
        "strong_consensus_pass": strong.passed,
        "ms_error_curve": {"t": [float(v) for v in ens.times], "value": [float(v) for v in curve]},
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
    }


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_json(path: Path, obj: dict):
    path.write_text(json.dumps(obj, indent=2) + "\n")


def write_curve_csv(path: Path, times, values):
    lines = ["t,ms_error"]
    lines += [f"{_fmt(t)},{_fmt(v)}" for t, v in zip(times, values)]
    path.write_text("\n".join(lines) + "\n")


def write_paths_csv(path: Path, ens: TrajectoryEnsemble):
    n = ens.n_nodes
    with path.open("w") as fh:
        fh.write("path,t," + ",".join(f"x{i}" for i in range(1, n + 1)) + "\n")
        for r, idx in enumerate(ens.path_indices):
            for k, t in enumerate(ens.times):
                fh.write(f"{int(idx)},{_fmt(t)}," + ",".join(_fmt(v) for v in ens.states[r, k]) + "\n")


EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_BLOWUP = 0, 1, 2, 3


def run(scenario: Scenario, out_dir: Path, workers: Optional[int] = None, dump_paths: bool = False) -> int:
    """Full pipeline; returns the process exit status."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cert = certify(scenario)
    write_json(out_dir / "scenario.json", scenario.to_json())
    write_json(out_dir / "certificate.json", cert.certificate)
    try:
        ens = simulate(scenario, cert, workers)
    except SimulationError as exc:
        write_json(out_dir / "report.json", {"scenario": scenario.name, "status": "blow-up", "partial": True,
                                             "path": exc.path, "time": exc.time, "passed": False})
        log.error("%s", exc)
        return EXIT_BLOWUP
    report = analyze(scenario, cert, ens)
    write_json(out_dir / "report.json", report)
    write_curve_csv(out_dir / "ms_curve.csv", report["ms_error_curve"]["t"], report["ms_error_curve"]["value"])
    if dump_paths:
        write_paths_csv(out_dir / "paths.csv", ens)
    return EXIT_OK if report["passed"] else EXIT_CHECK_FAILED
