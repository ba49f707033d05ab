"""simulate -> diagnose -> iterate, and the inequality suites, as library calls."""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analysis as an
from . import campanato as cp
from . import iteration as it
from . import plotting
from .config import DiagnosticsConfig, ExperimentConfig
from .forcing import ForcingField
from .io import TrajectoryWriter, load_trajectory, write_table
from .solver import SolverAbort, Trajectory, run

log = logging.getLogger(__name__)

SUMMARY_SCHEMA = "nsholder-diagnose-summary v1"
ITERATION_SCHEMA = "nsholder-iteration-summary v1"
BASIC_SCHEMA = "nsholder-basic-estimate v1"
ENVELOPE_SCHEMA = "nsholder-envelope v1"
VERIFY_SCHEMA = "nsholder-verify v1"
EXPERIMENT_FILE = "experiment.json"


class NoResolvedCylinders(RuntimeError):
    """No cylinder of the requested ladder passes the resolution guard."""


class MissingRadius(RuntimeError):
    """The diagnostics report has no admissible starting radius."""


def _num(x):
    """JSON-safe float (NaN and infinities become None)."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


# -- simulate --------------------------------------------------------------------------


def simulate(exp: ExperimentConfig, directory=None) -> tuple[Path, Trajectory, SolverAbort | None]:
    """Run the solver, streaming snapshots into ``directory`` (default <output>/trajectory)."""
    directory = Path(directory) if directory is not None else exp.output / "trajectory"
    writer = TrajectoryWriter(directory, exp.solver)
    abort = None
    try:
        traj = run(exp.solver, sink=writer, keep=False)
    except SolverAbort as exc:
        abort = exc
        traj = exc.trajectory
        writer.close(traj.energy_log, complete=False, message=str(exc))
    else:
        writer.close(traj.energy_log)
    diag = {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(exp.diagnostics).items()}
    with open(directory / EXPERIMENT_FILE, "w") as fh:
        json.dump({"name": exp.name, "seed": exp.seed, "diagnostics": diag,
                   "suites": list(exp.suites) if exp.suites is not None else None}, fh, indent=1)
    if traj.energy_log.shape[0] > 0:
        plotting.plot_energy(traj.energy_log, directory / "energy.png")
    return directory, load_trajectory(directory), abort


def diagnostics_for(directory) -> DiagnosticsConfig:
    """Diagnostics settings stored by ``simulate`` next to a trajectory (defaults otherwise)."""
    path = Path(directory) / EXPERIMENT_FILE
    if not path.exists():
        return DiagnosticsConfig()
    d = json.loads(path.read_text()).get("diagnostics", {})
    if "tops" in d:
        d["tops"] = tuple(d["tops"])
    return DiagnosticsConfig(**d)


# -- diagnose --------------------------------------------------------------------------


def center_lattice(length: float, stride: float) -> list[tuple[float, float]]:
    m = max(1, int(round(1.0 / stride)))
    return [((i + 0.5) * length / m, (j + 0.5) * length / m) for i in range(m) for j in range(m)]


def _snap_tops(times: np.ndarray, tops: Sequence[float]) -> list[float]:
    if not tops:
        return [float(times[-1])]
    return sorted({float(times[int(np.argmin(np.abs(times - t)))]) for t in tops})


def resolve_tau(diag: DiagnosticsConfig) -> float:
    if diag.tau is not None:
        return diag.tau
    if diag.c is not None:
        return it.tau_from_gamma(diag.c, diag.gamma)
    return 0.5


def diagnose(traj: Trajectory, diag: DiagnosticsConfig, out_dir) -> dict:
    """Campanato report, starting radius, forcing seminorm and one-step constants.

    Writes campanato.csv, basic_estimate.csv, summary.json and campanato.png into
    ``out_dir`` and returns the summary.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = traj.grid
    times = traj.times
    tau = resolve_tau(diag)
    gamma = diag.gamma
    mt = diag.max_time_levels
    tops = _snap_tops(times, diag.tops)
    u = cp.SpaceTimeField.from_trajectory(traj, "u")
    p = cp.SpaceTimeField.from_trajectory(traj, "p")
    forcing = ForcingField(traj.config.forcing, grid)
    centers = center_lattice(grid.length, diag.center_stride)

    window = min(tops) - max(diag.margin, float(times[0]))
    if window <= 0:
        raise NoResolvedCylinders(f"no time window above the margin {diag.margin} before t0 = {min(tops)}")
    # Theta at R0/tau must fit above the margin and inside the box.
    r_cap = min(diag.r_max, tau * math.sqrt(window), grid.length / 4)
    sel = cp.select_r0(u, centers, tops, tau, r_max=r_cap, depth=8, max_time_levels=mt)
    base = sel.radius if sel.ok else r_cap
    probe = centers[0]
    radii = [float(r) for r in cp.dyadic_ladder(base, diag.ladder, diag.ladder_ratio)
             if all(cp.resolvable(u, cp.ParabolicCylinder(probe, t0, r), mt) for t0 in tops)]
    report = cp.campanato_report(u, p, centers, tops, radii, tau, mt)
    if not report.rows:
        raise NoResolvedCylinders("no cylinder of the ladder passes the resolution guard")
    write_table(out / "campanato.csv", cp.CAMPANATO_SCHEMA, cp.CAMPANATO_COLUMNS, report.table())

    # forcing seminorm over a lattice family on the same radii
    if forcing.is_zero or not radii:
        semi = cp.SeminormResult(0.0, None, 0, 0)
    else:
        F = cp.SpaceTimeField.from_forcing(forcing, grid)
        fam = cp.cylinder_family(grid, radii, tops, stride=0.5, max_centers=256)
        semi = cp.m2gamma_seminorm(F, gamma, fam, mt)
    m = semi.value**2

    # one-step constants where the inner (tau^2 R) and outer (R/tau) cylinders resolve
    cyls = [cp.ParabolicCylinder(c, t0, r) for t0 in tops for c in centers for r in radii
            if cp.resolvable(u, cp.ParabolicCylinder(c, t0, r * tau * tau), mt)
            and cp.resolvable(u, cp.ParabolicCylinder(c, t0, r / tau), mt)]
    basic = it.check_basic_estimate(u, p, cyls, tau, gamma, m, mt)
    write_table(out / "basic_estimate.csv", BASIC_SCHEMA,
                ("x0_1", "x0_2", "t0", "radius", "lhs", "rhs_basic", "rhs_absorbed", "c_basic", "c_absorbed",
                 "mean_ratio", "status"),
                [(r.cylinder.x0[0], r.cylinder.x0[1], r.cylinder.t0, r.cylinder.r, r.lhs, r.rhs_basic,
                  r.rhs_absorbed, r.c_basic, r.c_absorbed, r.mean_ratio, r.status) for r in basic.records])

    stacks = {}
    per_center = []
    for t0 in tops:
        for c in centers:
            rows = [row for row in report.rows if row[0] == c[0] and row[1] == c[1] and row[2] == t0]
            entry = {"x0": list(c), "t0": t0, "radius": [row[3] for row in rows], "phi": [row[4] for row in rows]}
            stacks[f"({c[0]:.2f}, {c[1]:.2f}) t0={t0:g}"] = (entry["radius"], entry["phi"])
            if sel.ok:
                cyl0 = cp.ParabolicCylinder(c, t0, sel.radius)
                try:
                    entry.update(theta0=cp.theta(u, p, cyl0.scaled(1.0 / tau), tau, mt),
                                 theta_r0=cp.theta(u, p, cyl0, tau, mt),
                                 mean_norm=float(np.linalg.norm(cp.mean_space_time(u, cyl0, mt))))
                except cp.ResolutionError as exc:
                    entry["r0_error"] = str(exc)
            per_center.append(entry)
    plotting.plot_decay(stacks, out / "campanato.png")

    summary = {
        "schema": SUMMARY_SCHEMA,
        "gamma": gamma,
        "tau": tau,
        "margin": diag.margin,
        "tops": tops,
        "radii": radii,
        "R0": sel.radius,
        "R0_reason": sel.reason,
        "psi_max": {repr(k): _num(v) for k, v in sel.psi_max.items()},
        "M2gamma": semi.value,
        "M": m,
        "M2gamma_argmax": None if semi.cylinder is None else
            {"x0": list(semi.cylinder.x0), "t0": semi.cylinder.t0, "r": semi.cylinder.r},
        "report": report.summary(),
        "c_basic": _num(basic.c_basic),
        "c_absorbed": _num(basic.c_absorbed),
        "c_basic_distribution": basic.distribution("c_basic"),
        "c_absorbed_distribution": basic.distribution("c_absorbed"),
        "mean_ratio_max": _num(basic.mean_ratio_max),
        "quadrature_failures": basic.failures,
        "centers": per_center,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    return summary


# -- iterate ---------------------------------------------------------------------------


def load_summary(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "summary.json"
    summary = json.loads(path.read_text())
    if summary.get("schema") != SUMMARY_SCHEMA:
        raise ValueError(f"{path}: unsupported summary schema {summary.get('schema')!r}")
    return summary


GNUPLOT = """# measured phi against the first-pass and improved envelopes
set datafile separator ","
set key autotitle columnhead
set logscale xy
set xlabel "radius"
set ylabel "phi"
set key left top
set terminal pngcairo size 800,600
set output "envelope_gnuplot.png"
plot "envelope_table.csv" using 4:5 with points pt 7 title "measured phi", \\
     "" using 4:6 with points pt 6 title "first-pass envelope", \\
     "" using 4:7 with points pt 5 title "improved envelope"
"""


def iterate_report(summary: dict, out_dir, c: float | None = None, k_max: int = 64) -> dict:
    """Envelope constants per center from a diagnostics summary; writes the envelope table and plots."""
    if summary.get("R0") is None:
        raise MissingRadius(summary.get("R0_reason") or "no starting radius in the report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gamma, tau, r0, m = summary["gamma"], summary["tau"], summary["R0"], summary["M"]
    measured = summary.get("c_absorbed")
    c_used = c if c is not None else (measured if measured is not None else 0.0)
    c_basic = summary.get("c_basic")
    c_basic = c_used if c_basic is None or c is not None else c_basic
    rows, per = [], []
    worst = 0.0
    for entry in summary["centers"]:
        if "theta0" not in entry:
            continue
        params = it.IterationParams(gamma=gamma, c=c_used, m=m, r0=r0, tau=tau, theta0=entry["theta0"],
                                    theta_r0=entry["theta_r0"], mean_norm=entry["mean_norm"], c_basic=c_basic)
        res = it.iterate_theta(params, k_max)
        radius = np.array([r for r in entry["radius"] if r <= r0 * (1 + 1e-12)])
        phi = np.array([v for r, v in zip(entry["radius"], entry["phi"]) if r <= r0 * (1 + 1e-12)])
        first, improved = it.predict_holder_envelope(res, radius)
        for r, v, a, b in zip(radius, phi, first, improved):
            ok = v <= b * (1 + 1e-12)
            rows.append((entry["x0"][0], entry["x0"][1], entry["t0"], r, v, a, b, ok))
            if b > 0:
                worst = max(worst, v / b)
            elif v > 0:
                worst = math.inf
        s = res.summary()
        s.update({"x0": entry["x0"], "t0": entry["t0"], "max_brute_over_envelope": res.max_ratio})
        per.append({k: (_num(v) if isinstance(v, float) else v) for k, v in s.items()})
    rows.sort(key=lambda row: (row[0], row[1], row[2], row[3]))
    write_table(out / "envelope_table.csv", ENVELOPE_SCHEMA,
                ("x0_1", "x0_2", "t0", "radius", "phi", "envelope_first", "envelope_improved", "below"), rows)
    (out / "envelope.gp").write_text(GNUPLOT)
    if rows:
        arr = np.array([row[3:7] for row in rows], dtype=float)
        plotting.plot_envelope(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], out / "envelope.png")
    H2 = [p["H2"] for p in per if p.get("H2") is not None]
    result = {
        "schema": ITERATION_SCHEMA,
        "gamma": gamma, "gamma1": 0.5 * (1 + gamma), "tau": tau, "vartheta": tau * tau, "R0": r0, "M": m,
        "c": c_used, "c_source": "argument" if c is not None else (
            "measured c_absorbed" if measured is not None else "unmeasured (no resolved one-step cylinder), c = 0"),
        "c_basic": c_basic, "admissible": c_used * tau ** (1 - gamma) <= 0.5 + 1e-12,
        "H2_max": max(H2) if H2 else None,
        "all_below_improved_envelope": all(row[7] for row in rows),
        "max_phi_over_improved_envelope": _num(worst),
        "centers": per,
    }
    (out / "iteration_summary.json").write_text(json.dumps(result, indent=1, sort_keys=True))
    return result


# -- verify ----------------------------------------------------------------------------


def verify(names: Sequence[str], out_dir, constant_scale: float = 1.0) -> list[an.SuiteResult]:
    """Run the named suites, writing one record CSV per suite."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for name in names:
        if name not in an.SUITES:
            raise KeyError(f"unknown suite {name!r}; available: {', '.join(an.SUITES)}")
        if name == "ladyzhenskaya" and constant_scale != 1.0:
            res = an.suite_ladyzhenskaya(constant_scale=constant_scale)
        else:
            res = an.SUITES[name]()
        rows = []
        for r in res.records:
            if isinstance(r, an.InequalityRecord):
                rows.append((r.name, r.spec_id, json.dumps(r.params, sort_keys=True, default=str), r.lhs, r.rhs, r.ratio,
                             np.nan, np.nan, r.passed))
            else:
                rows.append((r.name, r.spec_id, "{}", np.nan, np.nan, np.nan, r.slope, r.threshold, r.passed))
        write_table(out / f"verify_{name}.csv", VERIFY_SCHEMA,
                    ("check", "spec_id", "params", "lhs", "rhs", "ratio", "slope", "threshold", "passed"), rows)
        results.append(res)
    return results
