"""The run pipeline: solve, then every diagnostic, then reports on disk.

A run is fully determined by its configuration (seeds included); repeated
runs write byte-identical artifacts.  The audit verdicts aggregated by
sweeps are: energy slack, truncation-energy monotonicity, the Chebyshev
level-set bound, the barrier comparison, Plancherel and the spectral
interpolation inequality, oscillation contraction mu < 1, a positive
fitted Hoelder exponent, and the empirical-vs-assembled kappa ordering.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import averaging, degiorgi, holder, solver
from .coefficients import DiffusionField, SourceField, source_lq_norm
from .config import RunConfig, config_to_text
from .fields import PhaseField, Trajectory
from .geometry import DyadicLevel, PhaseGrid, dyadic_time
from .snapshots import export_snapshot

__all__ = ["RunResult", "build_grid", "build_coefficient", "build_source_field",
           "build_initial", "run_pipeline", "sweep", "worker_count"]

MANIFEST_VERSION = 1

CSV_COLUMNS = {
    "energy": ["t", "energy", "dissipation", "source_work", "slack"],
    "truncation": ["k", "energy", "sup_term", "dissipation_term", "level_set",
                   "fk_l2_inner", "fk_l2_outer", "grad_l2_inner", "grad_l2_outer"],
    "chebyshev": ["k", "measure", "integral", "bound", "margin",
                  "chained_bound", "chained_margin"],
    "local_energy": ["k", "s", "t", "residual"],
    "barrier": ["k", "s1_l2", "s2_l2", "s2_bound", "s1_bound", "comparison_min",
                "f_linf", "plancherel_defect", "interp_lhs", "interp_rhs",
                "averaging_lhs", "averaging_rhs_unit", "averaging_ratio"],
    "ladder": ["level", "osc", "osc_inner"],
    "recursion": ["k", "log_margin", "passed", "vacuous"],
    "theta": ["k", "m_k"],
}


def worker_count() -> int:
    raw = os.environ.get("KFPLAB_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_grid(cfg: RunConfig) -> PhaseGrid:
    return PhaseGrid(cfg.dim, (cfg.t_min, 0.0), cfg.n_t, cfg.x_max, cfg.n_x,
                     cfg.v_max, cfg.n_v)


def build_coefficient(cfg: RunConfig) -> DiffusionField:
    kind = cfg.coeff_kind
    params = {}
    if kind == "constant":
        params["value"] = cfg.coeff_value
    elif kind == "checkerboard":
        params["values"] = (cfg.coeff_low, cfg.coeff_high)
        params["cell"] = cfg.coeff_cell
    elif kind == "cellwise_random":
        params["low"] = cfg.coeff_low
        params["high"] = cfg.coeff_high
        params["cell"] = cfg.coeff_cell
    elif kind == "oscillatory":
        params["mid"] = cfg.coeff_mid
        params["amplitude"] = cfg.coeff_amplitude
        params["frequency"] = cfg.coeff_frequency
    return DiffusionField(cfg.dim, cfg.lam, kind, params, seed=cfg.seed * 7 + 1)


def build_source_field(cfg: RunConfig) -> SourceField:
    params = {}
    if cfg.source_kind == "constant":
        params["value"] = cfg.source_bound
    elif cfg.source_kind == "bump":
        params["amplitude"] = cfg.source_bound
        params["x_radius"] = 1.0
        params["v_radius"] = 1.0
    elif cfg.source_kind == "noise":
        params["cell"] = cfg.source_cell
    return SourceField(cfg.dim, cfg.source_kind, bound=cfg.source_bound,
                       q=cfg.source_q, params=params, seed=cfg.seed * 13 + 5)


def build_initial(cfg: RunConfig, grid: PhaseGrid,
                  amplitude: float | None = None) -> PhaseField:
    """Seeded initial data: random x-modes with a localized v profile, a
    smooth bump, or a point mass at the center cell."""
    amp = cfg.initial_amplitude if amplitude is None else amplitude
    rng = np.random.default_rng(cfg.seed * 31 + 17)
    if cfg.initial_kind == "point":
        vals = np.zeros(grid.shape)
        idx = tuple([grid.n_x // 2] * grid.dim + [grid.n_v // 2] * grid.dim)
        vals[idx] = amp / grid.cell_volume
        return PhaseField(grid, grid.t_span[0], vals)
    if cfg.initial_kind == "bump":
        from .geometry import cutoff_value
        px = cutoff_value(grid.rho_x, 0.4 * grid.x_max, 0.8 * grid.x_max)
        pv = cutoff_value(grid.rho_v, 0.3 * grid.v_max, 0.7 * grid.v_max)
        vals = amp * grid.expand_x(px) * grid.expand_v(pv)
        return PhaseField(grid, grid.t_span[0], vals)
    # modes: periodic random profile in x, Gaussian-localized in v
    profile = np.zeros(grid.x_shape)
    for ax in range(grid.dim):
        coord = grid.axis_coord("x", ax)
        axis_profile = np.zeros_like(coord)
        for m in range(1, cfg.initial_modes + 1):
            c, s = rng.normal(size=2)
            axis_profile += (c * np.cos(np.pi * m * coord / grid.x_max)
                             + s * np.sin(np.pi * m * coord / grid.x_max))
        profile = profile + axis_profile
    peak = float(np.max(np.abs(profile)))
    if peak > 0:
        profile = profile / peak
    w = cfg.initial_v_width
    pv = np.exp(-grid.rho_v**2 / (2.0 * w * w))
    vals = amp * grid.expand_x(profile) * grid.expand_v(pv)
    return PhaseField(grid, grid.t_span[0], vals)


# ---------------------------------------------------------------------------
# the run
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    config: RunConfig
    verdicts: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    trajectory: Trajectory | None = None

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


def _scheme_tolerance(grid: PhaseGrid, scale: float, dt: float | None = None) -> float:
    dt = grid.dt if dt is None else dt
    return (dt + grid.dx + grid.dv) * max(1e-12, scale)


def run_pipeline(cfg: RunConfig, out_dir=None, keep_trajectory: bool = False,
                 ) -> RunResult:
    cfg.validate()
    grid = build_grid(cfg)
    diffusion = build_coefficient(cfg)
    source = build_source_field(cfg)
    f0 = build_initial(cfg, grid)
    result = RunResult(cfg)
    metrics = result.metrics
    verdicts = result.verdicts
    tables = result.tables

    traj = solver.solve(f0, diffusion, source, 0.0, solver.WHOLE_SPACE,
                        dt=cfg.dt, interp=cfg.interp,
                        store_every=cfg.store_every)
    if keep_trajectory:
        result.trajectory = traj

    # --- global energy inequality ------------------------------------------
    records, min_slack = solver.energy_budget(traj, source, cfg.lam)
    e0 = records[0]["energy"]
    tables["energy"] = [[r["t"], r["energy"], r["dissipation"], r["source_work"],
                         r["slack"]] for r in records]
    tol_energy = 1e-8 * (1.0 + e0)
    metrics["energy_min_slack"] = min_slack
    metrics["energy_tolerance"] = tol_energy
    verdicts["energy_slack"] = min_slack >= -tol_energy

    # --- local energy inequality -------------------------------------------
    local_rows = []
    local_ok = True
    f_scale = float(np.max(np.abs(traj.values)))
    tol_local = 10.0 * _scheme_tolerance(grid, f_scale**2, cfg.dt)
    for k in (1, 2, 3):
        t_k = dyadic_time(k)
        for (s, t) in ((t_k, 0.0), (t_k, 0.5 * t_k), (0.5 * t_k, 0.0)):
            res = solver.local_energy_check(traj, k, DyadicLevel(k).truncation,
                                            cfg.lam, s, t, source)
            local_rows.append([k, s, t, res])
            local_ok &= res >= -tol_local
    tables["local_energy"] = local_rows
    metrics["local_energy_min"] = min(r[3] for r in local_rows)
    metrics["local_energy_tolerance"] = tol_local
    verdicts["local_energy"] = bool(local_ok)

    # --- truncation energies and the Chebyshev audit ------------------------
    trunc_reports = [degiorgi.truncation_energy(traj, k, cfg.lam)
                     for k in range(cfg.levels + 1)]
    energies = [r.energy for r in trunc_reports]
    tables["truncation"] = [[r.k, r.energy, r.sup_term, r.dissipation_term,
                             r.level_set, r.fk_l2_inner, r.fk_l2_outer,
                             r.grad_l2_inner, r.grad_l2_outer]
                            for r in trunc_reports]
    mono_tol = 1e-9 * (1.0 + energies[0])
    verdicts["u_monotone"] = all(b <= a + mono_tol
                                 for a, b in zip(energies, energies[1:]))
    metrics["u0"] = energies[0]

    cheb_rows = []
    cheb_ok = True
    for k in range(1, cfg.levels + 1):
        rep = degiorgi.chebyshev_audit(traj, k, energies[k - 1])
        cheb_rows.append([rep.k, rep.measure, rep.integral, rep.bound, rep.margin,
                          rep.chained_bound, rep.chained_margin])
        cheb_ok &= rep.passed
    tables["chebyshev"] = cheb_rows
    verdicts["chebyshev"] = bool(cheb_ok)

    # --- barrier comparison and spectral audits ------------------------------
    barrier_rows = []
    barrier_finals = []
    comparison_ok = True
    spectral_ok = True
    for k in cfg.barrier_levels:
        rep = degiorgi.build_barrier_sources(traj, k, diffusion, source)
        level = DyadicLevel(k)
        eta_x = grid.expand_x(level.eta(grid.rho_x))
        eta_v = grid.expand_v(level.eta(grid.rho_v))
        c_k = level.truncation
        fk_vals = np.maximum(traj.values - c_k, 0.0) * eta_x * eta_v**2
        fk_traj = Trajectory(grid, traj.times.copy(), fk_vals)
        i0 = fk_traj.slice_index(dyadic_time(k - 1))
        window = Trajectory(grid, fk_traj.times[i0:], fk_traj.values[i0:])
        g_traj = solver.solve_barrier_ibvp(rep.s1, rep.s2, diffusion, k,
                                           interp=cfg.interp,
                                           initial=window.field(0))
        barrier_finals.append((k, g_traj.field(g_traj.n_slices - 1)))
        comp_min = solver.comparison_check(window, g_traj)
        f_linf = float(np.max(np.abs(window.values)))
        tol = 10.0 * _scheme_tolerance(grid, f_linf, cfg.dt)
        comparison_ok &= comp_min >= -tol

        spec = averaging.SpectralField.from_trajectory(g_traj, warn_boundary=False)
        l2 = spec.l2_norm()
        plancherel_defect = abs(spec.frac_norm("v", 0.0) - l2)
        lhs, rhs = averaging.interpolation_audit(spec)
        est = averaging.averaging_estimate_audit(spec, rep.s1_l2, rep.s2_l2,
                                                 cfg.lam, level.radius)
        spectral_ok &= plancherel_defect <= 1e-12 * max(1.0, l2)
        spectral_ok &= lhs <= rhs * (1.0 + 1e-12) + 1e-15
        barrier_rows.append([k, rep.s1_l2, rep.s2_l2, rep.s2_bound, rep.s1_bound,
                             comp_min, f_linf, plancherel_defect, lhs, rhs,
                             est.lhs, est.rhs_unit, est.ratio])
        metrics[f"comparison_min_k{k}"] = comp_min
        metrics[f"averaging_ratio_k{k}"] = est.ratio
    tables["barrier"] = barrier_rows
    verdicts["comparison"] = bool(comparison_ok)
    verdicts["spectral"] = bool(spectral_ok)

    # --- iteration constants, recursion, gate --------------------------------
    gamma = cfg.gamma
    if gamma is None:
        gamma = source_lq_norm(source, grid, q=cfg.q_constants)
    consts = degiorgi.IterationConstants(cfg.dim, cfg.lam, gamma,
                                         q=cfg.q_constants, K_S=cfg.k_s,
                                         C_N=cfg.c_n, a_const=cfg.a_const)
    kappa_log = degiorgi.kappa_log10(consts)
    metrics["gamma"] = gamma
    metrics["alpha"] = consts.alpha
    metrics["c_const"] = consts.c_const
    metrics["big_c"] = consts.big_c
    metrics["rho"] = consts.rho
    metrics["kappa_log10"] = kappa_log
    assembled = consts.assembled_a()
    metrics["a_assembled"] = assembled["a"]

    rec_rows = degiorgi.recursion_audit(energies, consts)
    tables["recursion"] = [[r["k"], r["log_margin"], r["passed"], r["vacuous"]]
                           for r in rec_rows]
    verdicts["recursion"] = all(r["passed"] for r in rec_rows)

    gate = degiorgi.linfty_gate(traj, kappa_log)
    metrics["gate_premise_log10"] = gate.premise_log10
    metrics["gate_conclusion_sup"] = gate.conclusion_sup
    verdicts["gate_implication"] = gate.implication_holds

    if cfg.run_bisection:
        def run_amp(amp):
            f_amp = build_initial(cfg, grid, amplitude=amp)
            return solver.solve(f_amp, diffusion, source, 0.0,
                                solver.WHOLE_SPACE, dt=cfg.dt,
                                interp=cfg.interp, store_every=cfg.store_every)
        bis = degiorgi.empirical_kappa(run_amp, kappa_log)
        metrics["kappa_emp_log10"] = bis["kappa_emp_log10"]
        verdicts["kappa_order"] = kappa_log <= bis["kappa_emp_log10"]
    else:
        metrics["kappa_emp_log10"] = math.nan
        verdicts["kappa_order"] = True

    # --- oscillation ladder, probe, Hoelder fit ------------------------------
    lemma = holder.lemma_constants(cfg.omega, cfg.lam, cfg.dim, cfg.theta,
                                   cfg.alpha_iso)
    beta = cfg.beta if cfg.beta is not None else lemma["beta"]
    norm_traj, norm_source, big_l = holder.normalize_pair(traj, source, beta)
    metrics["normalization_l"] = big_l
    metrics["beta"] = beta
    metrics["k_star"] = lemma["k_star"]
    metrics["mu_guaranteed"] = lemma["mu_guaranteed"]

    ladder = holder.oscillation_ladder(norm_traj, diffusion, norm_source,
                                       cfg.omega, n_levels=cfg.ladder_levels,
                                       interp=cfg.interp)
    tables["ladder"] = [[i, osc, inner] for i, (osc, inner) in
                        enumerate(zip(ladder.ladder, ladder.ladder_inner))]
    metrics["mu_emp"] = ladder.mu_emp
    metrics["ladder_r2"] = ladder.fit_r2
    verdicts["mu_contraction"] = bool(ladder.degenerate
                                      or (0.0 < ladder.mu_emp < 1.0))
    if not ladder.degenerate and 0.0 < ladder.mu_emp < 1.0:
        metrics["sigma_from_mu"] = holder.modulus_from_constants(
            ladder.mu_emp, cfg.omega, dim=cfg.dim)
    else:
        metrics["sigma_from_mu"] = math.nan

    probe = holder.isoperimetric_probe(norm_traj, cfg.theta, cfg.omega,
                                       lemma["eta_iso_log10"], cfg.alpha_iso)
    metrics["probe_m_below"] = probe.m_below
    metrics["probe_m_top"] = probe.m_top
    metrics["probe_m_middle"] = probe.m_middle
    metrics["probe_verdict"] = probe.verdict

    theta_rep = holder.theta_sequence(norm_traj, cfg.theta, 3)
    tables["theta"] = [[k, m] for k, m in enumerate(theta_rep.measures)]
    verdicts["theta_monotone"] = theta_rep.monotone and \
        theta_rep.measures_nondecreasing

    # fit at a few generic (off-symmetry-axis) base nodes; keep the best fit
    bases = [
        (0.0, (grid.x_centers[grid.n_x // 3],) * grid.dim,
         (grid.v_centers[2 * grid.n_v // 5],) * grid.dim),
        (0.0, (grid.x_centers[grid.n_x // 2],) * grid.dim,
         (grid.v_centers[grid.n_v // 2],) * grid.dim),
        (0.0, (grid.x_centers[5 * grid.n_x // 8],) * grid.dim,
         (grid.v_centers[3 * grid.n_v // 4],) * grid.dim),
    ]
    fit = {"sigma": math.nan, "C": math.nan, "r2": -math.inf, "degenerate": True}
    for base in bases:
        cand = holder.holder_fit(traj, base=base, radii=list(cfg.holder_radii))
        if cand["degenerate"]:
            continue
        if fit["degenerate"] or cand["r2"] > fit["r2"]:
            fit = cand
    metrics["sigma_emp"] = fit["sigma"]
    metrics["holder_r2"] = fit["r2"] if np.isfinite(fit["r2"]) else math.nan
    metrics["holder_c"] = fit["C"]
    verdicts["sigma_positive"] = bool(fit["degenerate"] or
                                      (fit["sigma"] > 0 and fit["r2"] > 0.9))

    if out_dir is not None:
        _write_outputs(cfg, result, traj, barrier_finals, out_dir)
    return result


# ---------------------------------------------------------------------------
# deterministic serialization
# ---------------------------------------------------------------------------

def _fmt(val) -> str:
    if isinstance(val, bool) or isinstance(val, np.bool_):
        return "true" if val else "false"
    if val is None:
        return "nan"
    if isinstance(val, (float, np.floating)):
        v = float(val)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(val)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def manifest_text(cfg: RunConfig, result: RunResult) -> str:
    out = io.StringIO()
    out.write(f"manifest.version = {MANIFEST_VERSION}\n")
    out.write(f"manifest.status = complete\n")
    for name, cols in sorted(CSV_COLUMNS.items()):
        out.write(f"csv.{name} = {';'.join(cols)}\n")
    for line in config_to_text(cfg).splitlines():
        out.write(f"config.{line}\n")
    for key in sorted(result.metrics):
        out.write(f"metric.{key} = {_fmt(result.metrics[key])}\n")
    for key in sorted(result.verdicts):
        out.write(f"verdict.{key} = {_fmt(result.verdicts[key])}\n")
    out.write(f"verdict.all = {_fmt(result.passed)}\n")
    return out.getvalue()


def _write_outputs(cfg: RunConfig, result: RunResult, traj: Trajectory,
                   barrier_finals, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    for name, rows in result.tables.items():
        _write_csv(os.path.join(out_dir, f"{name}.csv"), CSV_COLUMNS[name], rows)
    with open(os.path.join(out_dir, "manifest.txt"), "w", encoding="ascii") as fh:
        fh.write(manifest_text(cfg, result))
    if cfg.write_snapshots:
        export_snapshot(traj.field(0), os.path.join(out_dir, "field_initial.snap"))
        export_snapshot(traj.field(traj.n_slices - 1),
                        os.path.join(out_dir, "field_final.snap"))
        for k, fld in barrier_finals:
            export_snapshot(fld, os.path.join(out_dir, f"barrier_k{k}_final.snap"))


# ---------------------------------------------------------------------------
# ensemble sweeps
# ---------------------------------------------------------------------------

SWEEP_COLUMNS = ["run", "seed", "coeff_kind", "source_kind",
                 "energy_slack", "u_monotone", "chebyshev", "comparison",
                 "spectral", "recursion", "gate_implication", "kappa_order",
                 "mu_contraction", "sigma_positive", "theta_monotone",
                 "mu_emp", "sigma_emp", "kappa_emp_log10", "all_passed"]


def sweep(configs, out_root=None, workers: int | None = None):
    """Run an ensemble of configurations independently and aggregate.

    Individual failures are recorded (status incomplete) and the sweep
    continues.  The aggregate CSV is ordered by run index, so concurrent
    execution (KFPLAB_WORKERS) does not change any output byte.
    """
    configs = list(configs)
    if not configs:
        raise ValueError("empty ensemble")
    workers = worker_count() if workers is None else workers

    def one(idx_cfg):
        idx, cfg = idx_cfg
        sub = None if out_root is None else os.path.join(out_root, f"run_{idx:04d}")
        try:
            res = run_pipeline(cfg, out_dir=sub)
            return idx, cfg, res, None
        except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
            if sub is not None:
                os.makedirs(sub, exist_ok=True)
                with open(os.path.join(sub, "manifest.txt"), "w",
                          encoding="ascii") as fh:
                    fh.write(f"manifest.version = {MANIFEST_VERSION}\n"
                             f"manifest.status = incomplete\n"
                             f"manifest.error = {exc!r}\n")
            return idx, cfg, None, exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, enumerate(configs)))
    else:
        outcomes = [one(ic) for ic in enumerate(configs)]
    outcomes.sort(key=lambda o: o[0])

    rows = []
    results = []
    for idx, cfg, res, err in outcomes:
        results.append(res)
        if res is None:
            rows.append([idx, cfg.seed, cfg.coeff_kind, cfg.source_kind]
                        + ["error"] * (len(SWEEP_COLUMNS) - 5) + [False])
            continue
        v = res.verdicts
        m = res.metrics
        rows.append([idx, cfg.seed, cfg.coeff_kind, cfg.source_kind,
                     v["energy_slack"], v["u_monotone"], v["chebyshev"],
                     v["comparison"], v["spectral"], v["recursion"],
                     v["gate_implication"], v["kappa_order"],
                     v["mu_contraction"], v["sigma_positive"],
                     v["theta_monotone"], m["mu_emp"], m["sigma_emp"],
                     m["kappa_emp_log10"], res.passed])
    pass_rates = {}
    audit_cols = SWEEP_COLUMNS[4:15]
    complete = [r for r in rows if r[4] != "error"]
    for j, name in enumerate(audit_cols, start=4):
        if complete:
            pass_rates[name] = sum(1 for r in complete if r[j]) / len(complete)
        else:
            pass_rates[name] = 0.0

    if out_root is not None:
        os.makedirs(out_root, exist_ok=True)
        _write_csv(os.path.join(out_root, "sweep.csv"), SWEEP_COLUMNS, rows)
        with open(os.path.join(out_root, "sweep_summary.txt"), "w",
                  encoding="ascii") as fh:
            fh.write(f"runs = {len(rows)}\n")
            fh.write(f"complete = {len(complete)}\n")
            for name in audit_cols:
                fh.write(f"pass_rate.{name} = {_fmt(pass_rates[name])}\n")
    return results, rows, pass_rates
