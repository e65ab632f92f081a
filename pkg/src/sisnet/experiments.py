"""Experiment orchestration: model comparisons, table suites, mobility runs, certificates."""

from __future__ import annotations

import functools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import io, stability
from .chain2n import ChainOptions, integrate_chain, point_mass_from_bits
from .errors import InvalidInputError, SisnetError
from .meanfield import VirusParams, aggregate_sis, integrate_mf
from .netgraph import GraphTrajectory, simulate_mobility, static_topology
from .scenario import (InitialSpec, RunSpec, Scenario, TopologySpec, VirusSpec,
                       initial_condition)
from .stochastic import GenericNoise, ItoNoise, simulate_generic_noise, simulate_ito

log = logging.getLogger(__name__)

TABLE_N = (6, 8, 10, 13)
TABLE_RATES = ((0.1, 1.0), (0.5, 0.5), (1.0, 0.1))
TABLE_ICS = ("all", "half", "single")
IC_LABELS = {"all": "p1", "half": "p2", "single": "p3"}
TABLE_TOPOLOGY = {1: "line", 2: "star", 3: "complete", 4: "complete", 5: "complete", 6: "complete"}
AGGREGATE_IC = {4: "all", 5: "half", 6: "single"}
TABLE_HORIZON = 10000.0


def error_norm(v, p) -> float:
    """Euclidean distance between two infection-probability vectors."""
    v = np.asarray(v, dtype=float)
    p = np.asarray(p, dtype=float)
    if v.shape != p.shape:
        raise InvalidInputError(f"dimension mismatch: {v.shape} vs {p.shape}")
    return float(np.linalg.norm(v - p))


@dataclass
class ComparisonRecord:
    scenario_id: str
    n: int
    beta: float
    delta: float
    initial: str
    error: float | None = None          # ||v(T) - p(T)||
    sum_p: float | None = None
    sum_v: float | None = None
    aggregate_I: float | None = None
    chain_early_stop: bool = False
    chain_stop_time: float | None = None
    mf_early_stop: bool = False
    mf_stop_time: float | None = None
    horizon: float = TABLE_HORIZON
    v: list = field(default_factory=list)
    p: list = field(default_factory=list)
    failure: str | None = None

    @property
    def ratio(self) -> float:
        return self.beta / self.delta

    def as_dict(self) -> dict:
        d = asdict(self)
        d["ratio"] = self.ratio
        return d


def _initial_label(s: Scenario) -> str:
    ic = s.initial.condition
    return IC_LABELS.get(ic, ic)


def run_comparison(s: Scenario) -> ComparisonRecord:
    """Integrate the exact chain and the mean field from matched initial states.

    Complete-graph scenarios also run the aggregate model from the same
    number of initially infected agents.
    """
    if s.topology is None:
        raise InvalidInputError("comparisons need a static topology")
    models = set(s.run.models)
    if not {"chain2n", "meanfield"} <= models:
        raise InvalidInputError("comparison needs both chain2n and meanfield")
    run = s.run
    x0 = s.initial_bits()
    A = s.weight_matrix()
    rec = ComparisonRecord(run.id, s.n, float(s.beta[0]), float(s.delta[0]), _initial_label(s),
                           horizon=run.horizon)
    try:
        chain = integrate_chain(point_mass_from_bits(x0), A, s.beta, s.delta, run.horizon,
                                opts=ChainOptions(derivative_tol=run.derivative_tol,
                                                  cap=run.chain_cap))
        mf = integrate_mf(x0, A, VirusParams(s.beta, s.delta), run.horizon,
                          rtol=run.rtol, atol=run.atol, derivative_tol=run.derivative_tol)
    except SisnetError as exc:
        raise type(exc)(f"scenario {run.id}: {exc}") from exc
    v, p = chain.v[-1], mf.p[-1]
    rec.error = error_norm(v, p)
    rec.sum_v, rec.sum_p = float(v.sum()), float(p.sum())
    rec.v, rec.p = v.tolist(), p.tolist()
    rec.chain_early_stop, rec.chain_stop_time = chain.early_stop, chain.stop_time
    rec.mf_early_stop, rec.mf_stop_time = mf.early_stop, mf.stop_time
    if s.topology.kind == "complete" or "aggregate" in models:
        infected = float(x0.sum())
        agg = aggregate_sis(s.n - infected, infected, float(s.beta[0]), float(s.delta[0]),
                            run.horizon, derivative_tol=run.derivative_tol)
        rec.aggregate_I = float(agg.I[-1])
    return rec


def table_scenario(kind: str, n: int, beta: float, delta: float, ic: str,
                   horizon: float = TABLE_HORIZON, derivative_tol: float = 1e-12) -> Scenario:
    sid = f"{kind}-n{n}-b{beta:g}-d{delta:g}-{IC_LABELS[ic]}"
    return Scenario(
        run=RunSpec(id=sid, models=("chain2n", "meanfield"), horizon=horizon,
                    derivative_tol=derivative_tol),
        virus=VirusSpec((beta,), (delta,)),
        initial=InitialSpec(ic),
        topology=TopologySpec(kind, n),
    )


@functools.lru_cache(maxsize=None)
def _cached_cell(kind, n, beta, delta, ic, horizon, derivative_tol) -> ComparisonRecord:
    return run_comparison(table_scenario(kind, n, beta, delta, ic, horizon, derivative_tol))


def _cell(args) -> ComparisonRecord:
    kind, n, beta, delta, ic, horizon, tol = args
    try:
        return _cached_cell(kind, n, beta, delta, ic, horizon, tol)
    except SisnetError as exc:
        log.error("cell %s failed: %s", args, exc)
        rec = ComparisonRecord(table_scenario(*args).run.id, n, beta, delta, IC_LABELS[ic],
                               horizon=horizon)
        rec.failure = str(exc)
        return rec


def table_cells(which: int, horizon: float = TABLE_HORIZON, derivative_tol: float = 1e-12):
    """Grid of cell arguments for a table, in table order (row n, then columns)."""
    if which not in TABLE_TOPOLOGY:
        raise InvalidInputError(f"no table {which}; expected 1..6")
    kind = TABLE_TOPOLOGY[which]
    ics = TABLE_ICS if which <= 3 else (AGGREGATE_IC[which],)
    return [(kind, n, b, d, ic, horizon, derivative_tol)
            for n in TABLE_N for ic in ics for b, d in TABLE_RATES]


def run_table_suite(which: int, jobs: int = 1, horizon: float = TABLE_HORIZON,
                    derivative_tol: float = 1e-12) -> list[ComparisonRecord]:
    """Run every cell of a table; failures are recorded per cell and the suite continues."""
    cells = table_cells(which, horizon, derivative_tol)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_cell, cells))
    return [_cell(c) for c in cells]


def table_rows(which: int, records: list[ComparisonRecord]) -> tuple[list, list]:
    """Header and rows of the human table: one row per n, one column per cell of the grid."""
    if which <= 3:
        header = ["n"] + [f"{IC_LABELS[ic]}:{b / d:g}" for ic in TABLE_ICS for b, d in TABLE_RATES]
        rows = []
        for k, n in enumerate(TABLE_N):
            chunk = records[k * 9:(k + 1) * 9]
            rows.append([n] + ["FAILED" if r.failure else io.presentation(r.error) for r in chunk])
        return header, rows
    header = ["n"] + [f"{b / d:g}" for b, d in TABLE_RATES]
    rows = []
    for k, n in enumerate(TABLE_N):
        chunk = records[k * 3:(k + 1) * 3]
        rows.append([n] + [
            "FAILED" if r.failure else
            ", ".join(io.presentation(x) for x in (r.aggregate_I, r.sum_p, r.sum_v))
            for r in chunk])
    return header, rows


def write_table(which: int, records, out_dir) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    header, rows = table_rows(which, records)
    human = io.write_csv(out_dir / f"table{which}.csv", header, rows)
    machine = io.write_jsonl(out_dir / f"table{which}.jsonl", (r.as_dict() for r in records))
    return human, machine


# --- single scenarios ---------------------------------------------------------


@dataclass
class MobilityBundle:
    t: np.ndarray
    positions: np.ndarray
    p: np.ndarray
    v: np.ndarray | None
    trace: stability.SpectralTrace
    graph: GraphTrajectory
    mf_early_stop: bool = False


def _mobility_graph(s: Scenario):
    m = s.mobility
    z0 = np.array(m.positions, dtype=float).reshape(m.n, m.dimension)
    return simulate_mobility(z0, s.mobility_model(), m.steps, m.dt, m.radius,
                             s.quarantine_policy())


def run_mobility_scenario(s: Scenario) -> MobilityBundle:
    """Move the agents, rebuild ``A(t)`` each step, and integrate the selected models.

    The horizon is the mobility duration ``steps * dt``; output times are
    the step boundaries. The spectral trace (with per-group values under a
    quarantine) is recorded on the same grid.
    """
    if s.mobility is None:
        raise InvalidInputError("mobility scenario needs a [mobility] section")
    run = s.run
    mob = _mobility_graph(s)
    T = float(mob.times[-1])
    x0 = s.initial_bits()
    params = VirusParams(s.beta, s.delta)
    mf = integrate_mf(x0, mob.graph, params, T, mob.times, rtol=run.rtol, atol=run.atol,
                      derivative_tol=run.derivative_tol)
    v = None
    if "chain2n" in run.models and s.n <= run.chain_cap:
        chain = integrate_chain(point_mass_from_bits(x0), mob.graph, s.beta, s.delta, T, mob.times,
                                opts=ChainOptions(derivative_tol=run.derivative_tol,
                                                  cap=run.chain_cap))
        v = chain.v
    groups = s.quarantine.groups if s.quarantine is not None else None
    trace = stability.spectral_trace(mob.graph, params, mob.times, groups)
    return MobilityBundle(mob.times, mob.positions, mf.p, v, trace, mob.graph, mf.early_stop)


def run_stochastic(s: Scenario):
    noise_cfg = s.noise
    traj = _mobility_graph(s).graph if s.mobility is not None else s.weight_matrix()
    T = s.run.horizon if s.mobility is None else s.mobility.steps * s.mobility.dt
    params = VirusParams(s.beta, s.delta)
    x0 = s.initial_bits()
    if noise_cfg.kind == "ito":
        noise = ItoNoise(np.array(noise_cfg.gains))
        return simulate_ito(x0, traj, params, noise, T, noise_cfg.paths, seed=s.run.seed,
                            dt=noise_cfg.dt)
    noise = GenericNoise(np.array(noise_cfg.gains), noise_cfg.distribution,
                         noise_cfg.dt_noise or None)
    return simulate_generic_noise(x0, traj, params, noise, T, noise_cfg.paths, seed=s.run.seed,
                                  dt=noise_cfg.dt)


def run_scenario(s: Scenario, out_dir=None) -> dict:
    """Run whatever the scenario selects and write its output files.

    Returns a summary dict (also written as ``summary.jsonl``).
    """
    out = Path(out_dir or s.output.directory)
    run = s.run
    summary: dict = {"scenario_id": run.id, "n": s.n}
    files = []
    if s.mobility is not None:
        bundle = run_mobility_scenario(s)
        files.append(io.write_positions(out / "positions.csv", bundle.t, bundle.positions))
        files.append(io.write_trajectory(out / "meanfield.csv", bundle.t, bundle.p))
        if bundle.v is not None:
            files.append(io.write_trajectory(out / "chain2n.csv", bundle.t, bundle.v, "v"))
            summary["error_T"] = error_norm(bundle.v[-1], bundle.p[-1])
        files.append(io.write_trace(out / "spectral_trace.csv", bundle.trace))
        summary["sum_p_T"] = float(bundle.p[-1].sum())
        summary["sup_trace"] = bundle.trace.sup
    else:
        models = set(run.models)
        times = np.linspace(0.0, run.horizon, run.output_points)
        A = s.weight_matrix()
        x0 = s.initial_bits()
        params = VirusParams(s.beta, s.delta)
        if "meanfield" in models:
            mf = integrate_mf(x0, A, params, run.horizon, times, rtol=run.rtol, atol=run.atol,
                              derivative_tol=run.derivative_tol)
            files.append(io.write_trajectory(out / "meanfield.csv", mf.t, mf.p))
            summary.update(sum_p_T=float(mf.p[-1].sum()), mf_early_stop=mf.early_stop)
        if "chain2n" in models:
            chain = integrate_chain(point_mass_from_bits(x0), A, s.beta, s.delta, run.horizon,
                                    times, ChainOptions(derivative_tol=run.derivative_tol,
                                                        cap=run.chain_cap))
            v = chain.v
            files.append(io.write_trajectory(out / "chain2n.csv", chain.t, v, "v"))
            if s.n <= 10:
                files.append(io.write_trajectory(out / "chain2n_full.csv", chain.t, chain.y, "y"))
            summary.update(sum_v_T=float(v[-1].sum()), chain_early_stop=chain.early_stop)
            if "meanfield" in models:
                summary["error_T"] = error_norm(v[-1], mf.p[-1])
        if "aggregate" in models:
            infected = float(x0.sum())
            agg = aggregate_sis(s.n - infected, infected, float(s.beta[0]), float(s.delta[0]),
                                run.horizon, times, derivative_tol=run.derivative_tol)
            files.append(io.write_csv(out / "aggregate.csv", ["t", "S", "I"],
                                      ([float(t), float(a), float(b)]
                                       for t, a, b in zip(agg.t, agg.S, agg.I))))
            summary["aggregate_I_T"] = float(agg.I[-1])
    if "stochastic" in run.models:
        ens = run_stochastic(s)
        files.append(io.write_csv(out / "ensemble_final.csv",
                                  ["path", *(f"p_{i + 1}" for i in range(s.n))],
                                  ([k, *map(float, row)] for k, row in enumerate(ens.final))))
        stoch = {"kind": s.noise.kind, "paths": ens.paths, "dt": ens.dt,
                 "mean_final_norm": float(ens.norm_mean_path[-1]),
                 "convergence_fraction": ens.convergence_fraction(s.noise.threshold),
                 "threshold": s.noise.threshold, "clamp_fraction": ens.clamp_fraction,
                 "seeds": ens.seeds}
        files.append(io.write_jsonl(out / "ensemble_summary.jsonl", [stoch]))
        summary["stochastic"] = stoch
    summary["files"] = [str(f) for f in files]
    io.write_jsonl(out / "summary.jsonl", [summary])
    return summary


def certify_scenario(s: Scenario) -> list[tuple[str, object]]:
    """Evaluate every applicable certificate; returns ``(name, certificate)`` pairs."""
    params = VirusParams(s.beta, s.delta)
    if s.mobility is not None:
        traj = _mobility_graph(s).graph
        T = s.mobility.steps * s.mobility.dt
    else:
        traj = GraphTrajectory.static(s.weight_matrix())
        T = s.run.horizon
    grid = np.linspace(0.0, T, s.certify.grid_points)
    out = []

    def attempt(name, fn):
        try:
            out.append((name, fn()))
        except SisnetError as exc:
            out.append((name, stability.StabilityCertificate(
                stability.INCONCLUSIVE, f"not applicable: {exc}")))

    attempt("spectral", lambda: stability.check_theorem1(traj, params, grid))
    attempt("gershgorin", lambda: stability.gershgorin_certificate(traj, params, grid))
    attempt("instability", lambda: stability.instability_flag(
        stability.spectral_trace(traj, params, grid)))
    attempt("slow-variation", lambda: stability.check_theorem2(
        traj, params, grid, window=s.certify.window or None, alpha=s.certify.alpha))
    if s.mobility is not None:
        attempt("crude-bound", lambda: stability.remark2_check(s.n, float(s.beta.max()),
                                                           float(s.delta.min())))
    if s.certify.t_start > 0:
        attempt("shifted", lambda: stability.corollary1_shifted_check(
            traj, params, s.certify.t_start, grid))
    if s.quarantine is not None:
        q = s.quarantine
        qgrid = grid[grid >= q.activation_step * s.mobility.dt]
        try:
            qc = stability.quarantine_certificate(traj, params, q.groups, qgrid)
            out.append(("quarantine", stability.StabilityCertificate(
                qc.verdict,
                "every block has sup lambda1 < 0" if qc.certified
                else "some block has sup lambda1 >= 0",
                {f"block_{lab}_sup_lambda1": c.scalars["sup_lambda1"] for lab, c in qc.blocks.items()}
                | {f"block_{lab}_verdict": c.verdict for lab, c in qc.blocks.items()},
                {"t0": float(qgrid[0]), "t1": float(qgrid[-1]), "points": int(qgrid.size)})))
        except SisnetError as exc:
            out.append(("quarantine", stability.StabilityCertificate(
                stability.INCONCLUSIVE, f"not applicable: {exc}")))
    if s.noise is not None and s.noise.kind == "ito":
        attempt("ito", lambda: stability.ito_noise_check(traj, params, s.noise.gains, grid))
    return out


def certificate_records(s: Scenario, certs) -> list[dict]:
    return [{"scenario_id": s.run.id, "check": name, "verdict": c.verdict,
             "condition": c.condition, "scalars": c.scalars, "grid": c.grid}
            for name, c in certs]


__all__ = [
    "ComparisonRecord", "MobilityBundle", "error_norm", "run_comparison", "run_table_suite",
    "run_mobility_scenario", "run_scenario", "certify_scenario", "table_rows", "write_table",
    "initial_condition",
]
