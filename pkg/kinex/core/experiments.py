"""
Experiment runners behind the command line.
Each runner takes a validated ExperimentConfig and a run directory, writes its
artifacts and returns their paths; `execute` dispatches on the command.
"""
import logging
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np
import pandas as pd

from kinex.core import artifacts
from kinex.core.agents import run_replicas
from kinex.core.coupling import first_crossing, run_coupling_replicas
from kinex.core.distributions import (
    binomial_pmf, dirac_pmf, mean, poisson_pmf, second_moment, tilted_uniform_pmf,
)
from kinex.core.errors import ParameterError
from kinex.core.exact_chain import build_chain, compare_stationary
from kinex.core.laplace import laplace_report
from kinex.core.meanfield import default_truncation, integrate, mean_drift, second_moment_forecast
from kinex.core.metrics import (
    fit_decay, gini, sqrt_envelope, total_variation, wasserstein, wasserstein_trace,
)
from kinex.models import Pmf, SimSnapshot, Trajectory
from kinex.schemas.experiments import ExperimentConfig, InitialLaw
from kinex.schemas.meanfield import OdeConfig
from kinex.schemas.simulation import ExchangeRule, InitialCondition, SimConfig

logger = logging.getLogger(__name__)

# Standard errors of slack when comparing Monte Carlo means with a bound.
BAND_SIGMAS = 3.0
# Time after the first D <= 1 crossing before the envelope is checked.
ENVELOPE_DELAY = 1.0


def build_law(law: InitialLaw) -> Pmf:
    """Pmf described by an InitialLaw block."""
    if law.kind == "dirac":
        return dirac_pmf(int(law.k))
    if law.kind == "poisson":
        return poisson_pmf(law.lam, law.K if law.K is not None else default_truncation(law.lam))
    if law.kind == "binomial":
        return binomial_pmf(int(law.n), law.gamma)
    if law.kind == "tilted_uniform":
        return tilted_uniform_pmf(law.tilted_K, law.mean)
    return artifacts.read_pmf(law.path)


def _poisson_target(lam: float, K: int) -> Pmf:
    return poisson_pmf(lam, max(K, default_truncation(lam)))


# ==========================================
# Mean field
# ==========================================

def _meanfield_summary(traj: Trajectory, lam: float) -> Dict[str, object]:
    p0 = traj.states[0]
    final = traj.states[-1]
    target = _poisson_target(lam, final.K)
    mu = mean(p0)
    return {
        "t_end": float(traj.times[-1]),
        "K": final.K,
        "target_lambda": lam,
        "w1_final": wasserstein(final, target, 1),
        "w2_final": wasserstein(final, target, 2),
        "tv_final": total_variation(final, target),
        "max_mass_defect": float(traj.mass_defect.max()),
        "mean_drift": mean_drift(traj),
        "second_moment_final": second_moment(final),
        "second_moment_forecast": second_moment_forecast(mu, second_moment(p0), float(traj.times[-1])),
    }


def run_meanfield(cfg: ExperimentConfig, run_dir: Path) -> List[Path]:
    params = cfg.meanfield
    p0 = build_law(params.initial)
    traj = integrate(p0, params.ode)
    lam = params.target_lambda if params.target_lambda is not None else mean(p0)
    return [
        artifacts.write_frame(run_dir, "trajectory.csv", artifacts.trajectory_frame(traj)),
        artifacts.write_json(run_dir, "summary.json", _meanfield_summary(traj, lam)),
    ]


# ==========================================
# Agent simulation
# ==========================================

def _simulation_artifacts(run_dir: Path, runs: List[List[SimSnapshot]], integer: bool) -> List[Path]:
    summaries = []
    finals = []
    histograms = []
    for replica, snapshots in enumerate(runs):
        frame = artifacts.summary_frame(snapshots)
        frame.insert(0, "replica", replica)
        summaries.append(frame)
        last = snapshots[-1]
        finals.append(pd.DataFrame({
            "replica": replica,
            "agent": np.arange(last.values.size),
            "value": last.values,
        }))
        if integer:
            histograms.append(artifacts.snapshots_frame(snapshots, replica if len(runs) > 1 else None))
    paths = [
        artifacts.write_frame(run_dir, "summary.csv", pd.concat(summaries, ignore_index=True)),
        artifacts.write_frame(run_dir, "final_wealth.csv", pd.concat(finals, ignore_index=True)),
    ]
    if integer:
        paths.append(artifacts.write_frame(run_dir, "snapshots.csv", pd.concat(histograms, ignore_index=True)))
    return paths


def _snapshot_summary(snap: SimSnapshot) -> Dict[str, object]:
    row: Dict[str, object] = {
        "event": snap.event,
        "t_model": snap.t_model,
        "mean": snap.mean,
        "variance": snap.variance,
        "gini": snap.gini,
    }
    if snap.pmf is not None and snap.mean > 0:
        target = _poisson_target(snap.mean, snap.pmf.K)
        row["W1_to_poisson"] = wasserstein(snap.pmf, target, 1)
        row["W2_to_poisson"] = wasserstein(snap.pmf, target, 2)
    return row


def run_simulate(cfg: ExperimentConfig, run_dir: Path) -> List[Path]:
    sim = cfg.simulate.model_copy(update={"seed": cfg.seed})
    runs = run_replicas(sim, cfg.replicas, cfg.workers)
    paths = _simulation_artifacts(run_dir, runs, sim.rule.integer_valued)
    final = [snapshots[-1] for snapshots in runs]
    report = {
        "rule": sim.rule.kind,
        "N": sim.N,
        "events": sim.events,
        "replicas": cfg.replicas,
        "final_gini": [s.gini for s in final],
        "final_mean": [s.mean for s in final],
        "snapshots": [[_snapshot_summary(s) for s in snapshots] for snapshots in runs],
    }
    paths.append(artifacts.write_json(run_dir, "simulation.json", report))
    return paths


def _poisson_comparison(snapshots: List[SimSnapshot]) -> List[Dict[str, float]]:
    rows = []
    for snap in snapshots:
        target = _poisson_target(snap.mean, snap.pmf.K)
        rows.append({
            "event": snap.event,
            "mean": snap.mean,
            "w1": wasserstein(snap.pmf, target, 1),
            "w2": wasserstein(snap.pmf, target, 2),
            "tv": total_variation(snap.pmf, target),
        })
    return rows


def reproduce_fig1(cfg: ExperimentConfig, run_dir: Path) -> List[Path]:
    """Binomial reshuffling among N agents from the uniform 0..10 profile, compared with Poisson."""
    params = cfg.reproduce
    sim = SimConfig(
        N=params.n,
        rule=ExchangeRule(kind="binomial"),
        initial=InitialCondition(kind="uniform_range", a=0, b=10),
        seed=cfg.seed,
        events=params.events,
        snapshot_every=params.snapshot_every,
    )
    runs = run_replicas(sim, 1, cfg.workers)
    paths = _simulation_artifacts(run_dir, runs, True)
    snapshots = runs[0]
    comparison = _poisson_comparison(snapshots)
    report = {
        "N": sim.N,
        "events": sim.events,
        "total_wealth": int(snapshots[0].values.sum()),
        "total_conserved": bool(snapshots[-1].values.sum() == snapshots[0].values.sum()),
        "snapshots": comparison,
        "final_w1": comparison[-1]["w1"],
    }
    paths.append(artifacts.write_json(run_dir, "poisson_comparison.json", report))
    return paths


def reproduce_rules(cfg: ExperimentConfig, run_dir: Path) -> List[Path]:
    """Gini traces of the four exchange rules from the same initial profile."""
    params = cfg.reproduce
    rules = [
        ExchangeRule(kind="uniform"),
        ExchangeRule(kind="saving", s=params.s),
        ExchangeRule(kind="binomial"),
        ExchangeRule(kind="repeated_average"),
    ]
    frames = []
    final: Dict[str, float] = {}
    for rule in rules:
        sim = SimConfig(
            N=params.n,
            rule=rule,
            initial=InitialCondition(kind="uniform_range", a=0, b=10),
            seed=cfg.seed,
            events=params.events,
            snapshot_every=params.snapshot_every,
        )
        snapshots = run_replicas(sim, 1, cfg.workers)[0]
        frames.append(pd.DataFrame({
            "rule": rule.kind,
            "event": [s.event for s in snapshots],
            "gini": [s.gini for s in snapshots],
        }))
        final[rule.kind] = snapshots[-1].gini
    order = ["uniform", "saving", "binomial", "repeated_average"]
    report = {
        "s": params.s,
        "final_gini": final,
        "expected_order": order,
        "order_holds": all(final[a] > final[b] for a, b in zip(order, order[1:])),
    }
    return [
        artifacts.write_frame(run_dir, "gini_traces.csv", pd.concat(frames, ignore_index=True)),
        artifacts.write_json(run_dir, "rules.json", report),
    ]


def reproduce_fig4(cfg: ExperimentConfig, run_dir: Path) -> List[Path]:
    """Mean-field flow from a point mass at lambda (tilted uniform when lambda is fractional)."""
    params = cfg.reproduce
    lam = params.lam
    p0 = dirac_pmf(int(lam)) if float(lam).is_integer() else tilted_uniform_pmf(10, lam)
    ode = OdeConfig(t_end=params.t_end if params.t_end is not None else 1.5)
    traj = integrate(p0, ode)
    return [
        artifacts.write_frame(run_dir, "trajectory.csv", artifacts.trajectory_frame(traj)),
        artifacts.write_json(run_dir, "summary.json", _meanfield_summary(traj, lam)),
    ]


def reproduce_fig5(cfg: ExperimentConfig, run_dir: Path) -> List[Path]:
    """W1 and W2 to Poisson(5.15) along the flow from the tilted uniform law, with decay fits."""
    t_end = cfg.reproduce.t_end if cfg.reproduce.t_end is not None else 8.0
    p0 = tilted_uniform_pmf(10, 5.15)
    traj = integrate(p0, OdeConfig(t_end=t_end))
    target = _poisson_target(mean(p0), traj.states[0].K)
    w1 = wasserstein_trace(traj, target, 1)
    w2 = wasserstein_trace(traj, target, 2)
    window = (0.5, t_end)
    report: Dict[str, object] = {"window": list(window), "target_lambda": mean(p0)}
    for trace in (w1, w2):
        part = trace.window(*window)
        env = sqrt_envelope(trace, window)
        report[trace.label] = {
            "fit": fit_decay(trace, window).as_dict(),
            "monotone": bool(np.all(np.diff(part.values) <= 0)),
            "sqrt_envelope": env.as_dict(),
            "below_sqrt_envelope": env.decreasing_after_anchor,
        }
    return [
        artifacts.write_frame(run_dir, "w1_trace.csv", artifacts.trace_frame(w1)),
        artifacts.write_frame(run_dir, "w2_trace.csv", artifacts.trace_frame(w2)),
        artifacts.write_json(run_dir, "fit_decay.json", report),
    ]


FIGURES: Dict[str, Callable[[ExperimentConfig, Path], List[Path]]] = {
    "fig1": reproduce_fig1,
    "fig4": reproduce_fig4,
    "fig5": reproduce_fig5,
    "rules": reproduce_rules,
}


def run_reproduce(cfg: ExperimentConfig, run_dir: Path) -> List[Path]:
    return FIGURES[cfg.reproduce.figure](cfg, run_dir)


# ==========================================
# Coupling, exact chain, generating functions
# ==========================================

def run_couple(cfg: ExperimentConfig, run_dir: Path) -> List[Path]:
    params = cfg.couple
    p0 = build_law(params.initial)
    lam = params.lam if params.lam is not None else mean(p0)
    band = run_coupling_replicas(p0, lam, params.M, params.t_end, cfg.seed, params.replicas,
                                 params.points, cfg.workers)
    crossing = first_crossing(band)
    checked = 0
    above = 0
    if crossing is not None:
        late = band.times > crossing + ENVELOPE_DELAY
        checked = int(late.sum())
        above = int(np.sum(band.mean[late] - BAND_SIGMAS * band.stderr[late] > band.bound[late]))
    report = {
        "lambda": lam,
        "M": params.M,
        "replicas": band.replicas,
        "D_initial": float(band.mean[0]),
        "D_final": float(band.mean[-1]),
        "first_crossing": crossing,
        "envelope_points_checked": checked,
        "envelope_points_above": above,
    }
    return [
        artifacts.write_frame(run_dir, "coupling.csv", artifacts.coupling_frame(band)),
        artifacts.write_json(run_dir, "coupling.json", report),
    ]


def run_chain(cfg: ExperimentConfig, run_dir: Path) -> List[Path]:
    chain = build_chain(cfg.chain.N, cfg.chain.total)
    return [
        artifacts.write_frame(run_dir, "chain_matrix.csv", artifacts.chain_frame(chain)),
        artifacts.write_json(run_dir, "chain_report.json", compare_stationary(chain)),
    ]


def run_laplace(cfg: ExperimentConfig, run_dir: Path) -> List[Path]:
    params = cfg.laplace
    p0 = build_law(params.initial)
    report, states = laplace_report(p0, params.t_end, params.M, params.dt, params.mu_low, params.mu_high)
    return [
        artifacts.write_frame(run_dir, "a_system.csv", artifacts.a_system_frame(states)),
        artifacts.write_json(run_dir, "laplace.json", report),
    ]


def run_metrics(cfg: ExperimentConfig, run_dir: Path) -> List[Path]:
    params = cfg.metrics
    report: Dict[str, object] = {}
    if params.p is not None:
        p = artifacts.read_pmf(params.p)
        q = artifacts.read_pmf(params.q)
        report["distances"] = {
            "w1": wasserstein(p, q, 1),
            "w2": wasserstein(p, q, 2),
            "tv": total_variation(p, q),
        }
    if params.trace is not None:
        report["fit_decay"] = fit_decay(artifacts.read_trace(params.trace), params.window).as_dict()
    if params.wealth is not None:
        report["gini"] = gini(artifacts.read_wealth(params.wealth))
    return [artifacts.write_json(run_dir, "metrics.json", report)]


COMMANDS: Dict[str, Callable[[ExperimentConfig, Path], List[Path]]] = {
    "simulate": run_simulate,
    "meanfield": run_meanfield,
    "couple": run_couple,
    "chain": run_chain,
    "laplace": run_laplace,
    "metrics": run_metrics,
    "reproduce": run_reproduce,
}


def execute(cfg: ExperimentConfig, run_dir: Path, version: str) -> List[Path]:
    """Run the configured command into run_dir and close it with a manifest."""
    if cfg.command not in COMMANDS:
        raise ParameterError(f"Unknown command '{cfg.command}'")
    logger.info("Running %s into %s (seed %d)", cfg.command, run_dir, cfg.seed)
    paths = COMMANDS[cfg.command](cfg, run_dir)
    manifest = artifacts.write_manifest(run_dir, cfg.resolved(), paths, version)
    return paths + [manifest]
