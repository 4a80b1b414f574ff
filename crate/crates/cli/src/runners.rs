//! The five commands. Each returns a [`RunRecord`]; files are written by the caller.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sgn_core::grid::norms;
use sgn_core::integrators::{fitted_step, Bootstrap, IntegratorKind, PcgSettings, Stepper};
use sgn_core::krylov::{assemble_dense, generalized_eigs, pcg, spectral_condition, DensePencil, PcgOptions, PcgReport};
use sgn_core::operators::{
    apply_a, coeffs_for, lambda_minus, lambda_plus, matrix_inequality_margins, outer_gamma, pointwise_m, solve_a,
    CoeffVariant, ConstraintOperator,
};
use sgn_core::scenarios::{test_problem_1d, ScenarioSpec};
use sgn_core::{Field, PeriodicGrid};

use crate::analysis::{fit_n_log_n, loglog_slope};
use crate::config::{parse_integrator, parse_variant, Command, RunConfig, ScenarioName};
use crate::error::{CliError, CliResult};
use crate::record::{RunRecord, Series, Status};
use crate::setup::{self, ProblemPoint};

/// Eigenvalues may exceed the interval `[1/κ_ub, 1]` by this much before they count
/// as violations.
pub const EIG_SLACK: f64 = 1e-10;

/// Blow-up threshold on `‖η‖∞` for `simulate`.
pub const BLOW_UP: f64 = 1e3;

/// Starting CFL constants for `converge`, chosen inside each method's stability
/// region for the manufactured problem at `n = 256`.
pub fn default_converge_cfl(kind: IntegratorKind) -> f64 {
    match kind {
        IntegratorKind::Rk4 => 0.8,
        IntegratorKind::Ab2 => 0.1,
        IntegratorKind::Ab3 => 0.2,
        IntegratorKind::Ab4 => 0.12,
        IntegratorKind::Sbdf2 => 0.05,
    }
}

fn variant_code(v: CoeffVariant) -> f64 {
    match v {
        CoeffVariant::Flat => 0.0,
        CoeffVariant::Variable => 1.0,
        CoeffVariant::Simplified => 2.0,
        CoeffVariant::Custom => 3.0,
    }
}

const VARIANT_LEGEND: &str = "0=flat,1=variable,2=simplified";

fn integrator_code(k: IntegratorKind) -> f64 {
    IntegratorKind::ALL.iter().position(|&x| x == k).expect("listed") as f64
}

fn integrator_legend() -> String {
    IntegratorKind::ALL.iter().enumerate().map(|(i, k)| format!("{i}={}", k.name())).collect::<Vec<_>>().join(",")
}

fn variants(cfg: &RunConfig) -> CliResult<Vec<CoeffVariant>> {
    if cfg.sweep.variants.is_empty() {
        Ok(vec![cfg.variant()])
    } else {
        cfg.sweep.variants.iter().map(|v| parse_variant(v)).collect()
    }
}

fn pcg_settings(cfg: &RunConfig) -> PcgSettings<f64> {
    PcgSettings {
        tol: cfg.pcg.tol,
        max_iter: cfg.pcg.max_iter,
        variant: cfg.variant(),
        refresh_per_stage: cfg.pcg.refresh_per_stage,
        warm_start: cfg.pcg.warm_start,
        safety: cfg.pcg.safety,
    }
}

fn map_jobs<J, R, F>(parallel: bool, jobs: &[J], f: F) -> Vec<R>
where
    J: Sync,
    R: Send,
    F: Fn(&J) -> R + Sync + Send,
{
    if parallel {
        jobs.par_iter().map(f).collect()
    } else {
        jobs.iter().map(f).collect()
    }
}

fn require_linear(cfg: &RunConfig) -> CliResult<()> {
    if cfg.scenario.name.is_linear_problem() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "this command needs a linear problem (test-problem, square-wave, elliptical-bump), got {:?}",
            cfg.scenario.name
        )))
    }
}

fn point_columns(p: &ProblemPoint) -> [f64; 5] {
    [p.n as f64, p.eta0, p.h0, p.aspect[0], p.aspect[1]]
}

struct Job {
    index: usize,
    stream: u64,
    variant: CoeffVariant,
    point: ProblemPoint,
}

fn jobs(cfg: &RunConfig) -> CliResult<Vec<Job>> {
    let points = setup::problem_points(cfg);
    let mut out = Vec::new();
    for v in variants(cfg)? {
        for (i, p) in points.iter().enumerate() {
            out.push(Job { index: out.len(), stream: i as u64, variant: v, point: *p });
        }
    }
    Ok(out)
}

struct BenchPoint {
    kappa_ub: f64,
    report: PcgReport<f64>,
    violations: usize,
    wall: f64,
}

fn bench_point(cfg: &RunConfig, job: &Job) -> CliResult<BenchPoint> {
    let pr = setup::linear_problem(cfg, &job.point, job.stream)?;
    let c = coeffs_for(job.variant, &pr.eta, &pr.bathy)?;
    let op = ConstraintOperator::from_depth(&pr.eta, &pr.bathy)?;
    // Reference solution, converged well past the requested tolerance.
    let ref_opts = PcgOptions::new(cfg.pcg.tol * 1e-2, 4 * cfg.pcg.max_iter);
    let (xs, _) = pcg(|v| op.apply(v), |r| solve_a(&c, r), &pr.rhs, None, &ref_opts)?;
    let opts = PcgOptions::new(cfg.pcg.tol, cfg.pcg.max_iter).with_reference(&xs).with_kappa(c.kappa_ub);
    let t = Instant::now();
    let (_, report) = pcg(|v| op.apply(v), |r| solve_a(&c, r), &pr.rhs, None, &opts)?;
    let wall = t.elapsed().as_secs_f64();
    let violations = report.eps_history.iter().zip(&report.bound_history).filter(|(e, b)| e > b).count();
    Ok(BenchPoint { kappa_ub: c.kappa_ub, report, violations, wall })
}

fn opt(v: Option<usize>) -> f64 {
    v.map_or(f64::NAN, |x| x as f64)
}

pub fn run_pcg_bench(cfg: &RunConfig) -> CliResult<RunRecord> {
    require_linear(cfg)?;
    let start = Instant::now();
    let mut rec = RunRecord::new(Command::PcgBench, cfg);
    rec.labels.insert("variant".into(), VARIANT_LEGEND.into());
    rec.labels.insert("metric".into(), "reference G-norm error relative to ||b||".into());
    let jobs = jobs(cfg)?;
    let threshold = cfg.threshold();
    let results = map_jobs(cfg.sweep.parallel, &jobs, |j| bench_point(cfg, j));

    let mut history = Series::new("pcg_history", &["point", "iteration", "eps", "bound"]);
    let mut points = Series::new(
        "pcg_points",
        &[
            "point",
            "variant",
            "n",
            "eta0",
            "h0",
            "aspect_a",
            "aspect_b",
            "kappa_ub",
            "iterations",
            "iterations_to_threshold",
            "final_eps",
            "residual",
            "converged",
            "bound_violations",
            "wall_seconds",
        ],
    );
    let mut total_violations = 0;
    let mut all_converged = true;
    let mut max_final = 0.0f64;
    let mut max_iters = 0;
    let mut reached: BTreeMap<(u64, usize), Option<usize>> = BTreeMap::new();
    for (job, res) in jobs.iter().zip(results) {
        let b = res?;
        let r = &b.report;
        for (k, e) in r.eps_history.iter().enumerate() {
            let bound = r.bound_history.get(k).copied().unwrap_or(f64::NAN);
            history.push(vec![job.index as f64, k as f64, *e, bound]);
        }
        let to = r.iterations_to(threshold);
        let pc = point_columns(&job.point);
        points.push(vec![
            job.index as f64,
            variant_code(job.variant),
            pc[0],
            pc[1],
            pc[2],
            pc[3],
            pc[4],
            b.kappa_ub,
            r.iterations as f64,
            opt(to),
            r.final_eps(),
            r.residual,
            if r.converged { 1.0 } else { 0.0 },
            b.violations as f64,
            b.wall,
        ]);
        total_violations += b.violations;
        all_converged &= r.converged;
        max_final = max_final.max(r.final_eps());
        max_iters = max_iters.max(r.iterations);
        reached.insert((job.stream, variant_code(job.variant) as usize), to);
    }
    rec.set("points", jobs.len() as f64);
    rec.set("bound_violations", total_violations as f64);
    rec.set("all_converged", if all_converged { 1.0 } else { 0.0 });
    rec.set("max_final_eps", max_final);
    rec.set("max_iterations", max_iters as f64);

    // Spread of iterations-to-threshold across n for each fixed parameter set and variant.
    let sweep_points = setup::problem_points(cfg);
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for job in &jobs {
        let p = job.point;
        let key = format!("{:?}|{}|{}|{}|{}", job.variant, p.eta0, p.h0, p.aspect[0], p.aspect[1]);
        let to = reached[&(job.stream, variant_code(job.variant) as usize)];
        groups.entry(key).or_default().push(opt(to));
    }
    let spread = groups
        .values()
        .filter(|v| v.len() > 1)
        .map(|v| {
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .fold(f64::NAN, |a: f64, b| if a.is_nan() { b } else { a.max(b) });
    rec.set("max_mesh_spread", spread);

    // Simplified over variable iteration ratio, where both were run.
    let ratios: Vec<f64> = (0..sweep_points.len() as u64)
        .filter_map(|s| {
            let v = reached.get(&(s, 1)).copied().flatten()?;
            let p = reached.get(&(s, 2)).copied().flatten()?;
            Some(p as f64 / v as f64)
        })
        .collect();
    if !ratios.is_empty() {
        rec.set("ratio_simplified_over_variable_min", ratios.iter().cloned().fold(f64::INFINITY, f64::min));
        rec.set("ratio_simplified_over_variable_max", ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }
    rec.series.push(points);
    rec.series.push(history);

    if let Some([lo, hi]) = cfg.sweep.scaling_exponents {
        scaling_study(cfg, lo, hi, &mut rec)?;
    }
    if !all_converged {
        rec.diagnostics.push("some points did not reach the PCG tolerance".into());
    }
    rec.wall_seconds = start.elapsed().as_secs_f64();
    Ok(rec)
}

/// Sequential timing of one solve per `n = 2^e`; the minimum over repeats is kept.
fn scaling_study(cfg: &RunConfig, lo: u32, hi: u32, rec: &mut RunRecord) -> CliResult<()> {
    let eta0 = cfg.sweep.eta0.first().copied().or(cfg.scenario.eta0).unwrap_or(1.0);
    let h0 = cfg.sweep.h0.first().copied().or(cfg.scenario.h0).unwrap_or(1.0);
    let repeats = cfg.sweep.repeats.unwrap_or(3);
    let mut series = Series::new("scaling", &["n", "iterations", "wall_seconds", "n_log_n"]);
    let (mut ns, mut ts) = (Vec::new(), Vec::new());
    for e in lo..=hi {
        let n = 1usize << e;
        let g = PeriodicGrid::<f64>::new_1d(n, 1.0)?;
        let pr = test_problem_1d(eta0, h0, &g)?;
        let c = coeffs_for(cfg.variant(), &pr.eta, &pr.bathy)?;
        let op = ConstraintOperator::from_depth(&pr.eta, &pr.bathy)?;
        let opts = PcgOptions::new(cfg.pcg.tol, cfg.pcg.max_iter);
        let mut best = f64::INFINITY;
        let mut iterations = 0;
        for _ in 0..repeats {
            let t = Instant::now();
            let (_, r) = pcg(|v| op.apply(v), |r| solve_a(&c, r), &pr.rhs, None, &opts)?;
            best = best.min(t.elapsed().as_secs_f64());
            iterations = r.iterations;
        }
        let nf = n as f64;
        series.push(vec![nf, iterations as f64, best, nf * nf.ln()]);
        ns.push(nf);
        ts.push(best);
    }
    let (c, r2) = fit_n_log_n(&ns, &ts);
    rec.set("wall_fit_c", c);
    rec.set("wall_fit_r2", r2);
    rec.series.push(series);
    Ok(())
}

struct EigPoint {
    kappa_ub: f64,
    eigs: Vec<f64>,
    violations: usize,
}

fn eig_point(cfg: &RunConfig, job: &Job) -> CliResult<EigPoint> {
    let pr = setup::linear_problem(cfg, &job.point, job.stream)?;
    let c = coeffs_for(job.variant, &pr.eta, &pr.bathy)?;
    let op = ConstraintOperator::from_depth(&pr.eta, &pr.bathy)?;
    let grid = pr.eta.grid();
    let g = assemble_dense(|v| op.apply(v), grid)?;
    let a = assemble_dense(|v| apply_a(&c, v), grid)?;
    let eigs = generalized_eigs(&DensePencil::new(g, a)?)?;
    let floor = 1.0 / c.kappa_ub - EIG_SLACK;
    let violations = eigs.iter().filter(|&&l| l < floor || l > 1.0 + EIG_SLACK).count();
    Ok(EigPoint { kappa_ub: c.kappa_ub, eigs, violations })
}

pub fn run_eig_study(cfg: &RunConfig) -> CliResult<RunRecord> {
    require_linear(cfg)?;
    let start = Instant::now();
    let mut rec = RunRecord::new(Command::EigStudy, cfg);
    rec.labels.insert("variant".into(), VARIANT_LEGEND.into());
    let jobs = jobs(cfg)?;
    let results = map_jobs(cfg.sweep.parallel, &jobs, |j| eig_point(cfg, j));
    let mut eig_series = Series::new("eigenvalues", &["point", "k", "lambda", "inv_kappa_ub"]);
    let mut points = Series::new(
        "eig_points",
        &[
            "point",
            "variant",
            "n",
            "eta0",
            "h0",
            "aspect_a",
            "aspect_b",
            "kappa_ub",
            "lambda_min",
            "lambda_max",
            "condition",
            "violations",
        ],
    );
    let mut total = 0;
    let mut worst_ratio = 0.0f64;
    for (job, res) in jobs.iter().zip(results) {
        let e = res?;
        let inv = 1.0 / e.kappa_ub;
        for (k, l) in e.eigs.iter().enumerate() {
            eig_series.push(vec![job.index as f64, k as f64, *l, inv]);
        }
        let cond = spectral_condition(&e.eigs);
        let pc = point_columns(&job.point);
        points.push(vec![
            job.index as f64,
            variant_code(job.variant),
            pc[0],
            pc[1],
            pc[2],
            pc[3],
            pc[4],
            e.kappa_ub,
            e.eigs[0],
            e.eigs[e.eigs.len() - 1],
            cond,
            e.violations as f64,
        ]);
        total += e.violations;
        worst_ratio = worst_ratio.max(cond / e.kappa_ub);
    }
    rec.set("points", jobs.len() as f64);
    rec.set("interval_violations", total as f64);
    rec.set("max_condition_over_kappa_ub", worst_ratio);
    rec.series.push(points);
    rec.series.push(eig_series);
    rec.wall_seconds = start.elapsed().as_secs_f64();
    Ok(rec)
}

pub fn run_quasi_opt(cfg: &RunConfig) -> CliResult<RunRecord> {
    require_linear(cfg)?;
    let start = Instant::now();
    let mut rec = RunRecord::new(Command::QuasiOpt, cfg);
    let mut local = cfg.clone();
    let grid_sweep = [0.5, 1.0, 2.0];
    if local.sweep.eta0.is_empty() && local.scenario.eta0.is_none() {
        local.sweep.eta0 = grid_sweep.to_vec();
    }
    if local.sweep.h0.is_empty() && local.scenario.h0.is_none() {
        local.sweep.h0 = grid_sweep.to_vec();
    }
    let ratio = lambda_plus::<f64>() / lambda_minus::<f64>();
    let points = setup::problem_points(&local);
    let rows = map_jobs(local.sweep.parallel, &points, |p| -> CliResult<Vec<f64>> {
        let pr = setup::linear_problem(&local, p, 0)?;
        let gamma = outer_gamma(&pr.eta, &pr.bathy);
        let c = coeffs_for(CoeffVariant::Variable, &pr.eta, &pr.bathy)?;
        let margins = matrix_inequality_margins(&pointwise_m(&pr.eta, &pr.bathy), &c);
        let upper = ratio * gamma;
        let ok = gamma <= c.kappa_ub * (1.0 + 1e-12) && c.kappa_ub <= upper * (1.0 + 1e-12);
        let pc = point_columns(p);
        Ok(vec![
            pc[0],
            pc[1],
            pc[2],
            pc[3],
            pc[4],
            gamma,
            c.kappa_ub,
            upper,
            if ok { 1.0 } else { 0.0 },
            margins.upper,
            margins.lower,
        ])
    });
    let mut series = Series::new(
        "quasi_opt",
        &[
            "n",
            "eta0",
            "h0",
            "aspect_a",
            "aspect_b",
            "gamma",
            "kappa_ub",
            "ratio_times_gamma",
            "sandwich_ok",
            "mi_upper_margin",
            "mi_lower_margin",
        ],
    );
    let mut violations = 0;
    let mut worst = 0.0f64;
    let mut min_margin = f64::INFINITY;
    for row in rows {
        let row = row?;
        if row[8] == 0.0 {
            violations += 1;
        }
        worst = worst.max(row[6] / row[5]);
        min_margin = min_margin.min(row[9].min(row[10]) / row[6].max(1.0));
        series.push(row);
    }
    rec.set("points", series.rows.len() as f64);
    rec.set("sandwich_violations", violations as f64);
    rec.set("max_kappa_over_gamma", worst);
    rec.set("eigen_ratio", ratio);
    rec.set("min_scaled_mi_margin", min_margin);
    rec.series.push(series);
    rec.wall_seconds = start.elapsed().as_secs_f64();
    Ok(rec)
}

struct Level {
    dt: f64,
    steps: usize,
    err_eta: f64,
    err_u: f64,
    pcg_iterations: usize,
    a_solves: usize,
    diverged: bool,
    wall: f64,
    note: Option<String>,
}

fn converge_level(
    spec: &ScenarioSpec<f64>,
    kind: IntegratorKind,
    dt_max: f64,
    settings: PcgSettings<f64>,
) -> CliResult<Level> {
    let tf = spec.final_time;
    let (steps, dt) = fitted_step(tf, dt_max)?;
    let exact = spec.exact.clone().expect("checked by caller");
    let reference = exact(tf)?;
    let t = Instant::now();
    let mut st = Stepper::new(kind, spec.model(), spec.initial.clone(), dt, settings)?;
    let outcome = st.bootstrap(&Bootstrap::Exact(exact)).and_then(|_| st.advance_to(tf));
    let wall = t.elapsed().as_secs_f64();
    let stats = st.stats();
    let (err_eta, err_u, diverged, note) = match outcome {
        Ok(()) => {
            let s = st.state();
            let e = norms(&(&s.eta - &reference.eta)).inf_norm;
            let u = (&s.velocity - &reference.velocity).inf_norm();
            let bad = !(e.is_finite() && u.is_finite());
            (e, u, bad, None)
        }
        Err(e) => (f64::NAN, f64::NAN, true, Some(e.to_string())),
    };
    Ok(Level {
        dt,
        steps,
        err_eta,
        err_u,
        pcg_iterations: stats.pcg_iterations,
        a_solves: stats.a_solves,
        diverged,
        wall,
        note,
    })
}

pub fn run_converge(cfg: &RunConfig) -> CliResult<RunRecord> {
    let start = Instant::now();
    let spec = setup::scenario(cfg)?;
    if spec.exact.is_none() {
        return Err(CliError::Config(format!("scenario `{}` has no exact solution to converge against", spec.name)));
    }
    let mut rec = RunRecord::new(Command::Converge, cfg);
    rec.labels.insert("integrator".into(), integrator_legend());
    let kinds: Vec<IntegratorKind> = if cfg.sweep.integrators.is_empty() {
        IntegratorKind::ALL.to_vec()
    } else {
        cfg.sweep.integrators.iter().map(|n| parse_integrator(n)).collect::<CliResult<_>>()?
    };
    let levels = cfg.sweep.levels.unwrap_or(5);
    let settings = pcg_settings(cfg);
    let dx = spec.dx();
    let results = map_jobs(cfg.sweep.parallel, &kinds, |&kind| -> CliResult<Vec<Level>> {
        let c0 = cfg
            .sweep
            .cfl
            .iter()
            .find(|(k, _)| parse_integrator(k).ok() == Some(kind))
            .map(|(_, c)| *c)
            .unwrap_or_else(|| default_converge_cfl(kind));
        (0..levels).map(|l| converge_level(&spec, kind, c0 * dx / 2f64.powi(l as i32), settings)).collect()
    });
    let mut series = Series::new(
        "convergence",
        &[
            "integrator",
            "level",
            "dt",
            "steps",
            "err_eta",
            "err_u",
            "pcg_iterations",
            "a_solves",
            "diverged",
            "wall_seconds",
        ],
    );
    let mut any_diverged = false;
    for (kind, res) in kinds.iter().zip(results) {
        let rows = res?;
        let name = kind.name().to_ascii_lowercase();
        let (mut dts, mut ee, mut eu) = (Vec::new(), Vec::new(), Vec::new());
        let mut diverged = 0;
        let (mut wall, mut steps) = (0.0, 0usize);
        for (l, r) in rows.iter().enumerate() {
            series.push(vec![
                integrator_code(*kind),
                l as f64,
                r.dt,
                r.steps as f64,
                r.err_eta,
                r.err_u,
                r.pcg_iterations as f64,
                r.a_solves as f64,
                if r.diverged { 1.0 } else { 0.0 },
                r.wall,
            ]);
            if r.diverged {
                diverged += 1;
                rec.diagnostics.push(format!(
                    "{} level {l} (dt = {:e}) diverged{}",
                    kind.name(),
                    r.dt,
                    r.note.as_ref().map(|n| format!(": {n}")).unwrap_or_default()
                ));
            } else {
                dts.push(r.dt);
                ee.push(r.err_eta);
                eu.push(r.err_u);
                wall += r.wall;
                steps += r.steps;
            }
        }
        any_diverged |= diverged > 0;
        rec.set(format!("slope_eta_{name}"), loglog_slope(&dts, &ee).unwrap_or(f64::NAN));
        rec.set(format!("slope_u_{name}"), loglog_slope(&dts, &eu).unwrap_or(f64::NAN));
        rec.set(format!("finest_err_eta_{name}"), ee.last().copied().unwrap_or(f64::NAN));
        rec.set(format!("diverged_levels_{name}"), diverged as f64);
        rec.set(format!("wall_per_step_{name}"), if steps > 0 { wall / steps as f64 } else { f64::NAN });
    }
    rec.series.push(series);
    if any_diverged {
        rec.status = Status::Partial;
    }
    rec.wall_seconds = start.elapsed().as_secs_f64();
    Ok(rec)
}

#[derive(Serialize)]
struct SnapshotMeta {
    index: usize,
    file: String,
    time: f64,
    /// Slowest axis first: `[n]` or `[ny, nx]`.
    shape: Vec<usize>,
    lengths: Vec<f64>,
    dtype: &'static str,
    endianness: &'static str,
    layout: &'static str,
    zeta_min: f64,
    zeta_max: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema: &'static str,
    scenario: &'a str,
    quantity: &'static str,
    snapshots: &'a [SnapshotMeta],
}

/// Snapshot manifest schema tag.
pub const SNAPSHOT_SCHEMA: &str = "sgn-snapshots/1";

fn write_snapshot(dir: &Path, index: usize, time: f64, zeta: &Field) -> CliResult<SnapshotMeta> {
    let g = zeta.grid();
    let file = format!("zeta_{index:04}.bin");
    let bytes: Vec<u8> = zeta.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    let path = dir.join(&file);
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    let shape = if g.dim() == 2 { vec![g.n(1), g.n(0)] } else { vec![g.n(0)] };
    let meta = SnapshotMeta {
        index,
        file,
        time,
        shape,
        lengths: (0..g.dim()).map(|a| g.length(a)).collect(),
        dtype: "float64",
        endianness: "little",
        layout: "row-major, x fastest",
        zeta_min: zeta.min(),
        zeta_max: zeta.max(),
    };
    let side = dir.join(format!("zeta_{index:04}.json"));
    fs::write(&side, serde_json::to_string_pretty(&meta).expect("serializes") + "\n")
        .map_err(|e| CliError::io(&side, e))?;
    Ok(meta)
}

fn conserved_row(step: usize, st: &Stepper<f64>) -> CliResult<Vec<f64>> {
    let s = st.state();
    let c = st.model().conserved(s);
    let m = |d: usize| c.momentum.get(d).copied().unwrap_or(0.0);
    Ok(vec![
        step as f64,
        s.t,
        c.mass,
        m(0),
        m(1),
        c.energy,
        st.model().constraint_residual(s)?,
        s.eta.max(),
        s.eta.min(),
        st.stats().pcg_iterations as f64,
    ])
}

/// Time step: explicit `dt` if configured, else the largest `≤ cfl·Δx` that
/// divides the smallest gap between output times.
fn simulation_step(cfg: &RunConfig, spec: &ScenarioSpec<f64>, targets: &[f64]) -> CliResult<f64> {
    let dt = match cfg.integrator.dt {
        Some(dt) => dt,
        None => {
            let gap = targets
                .windows(2)
                .map(|w| w[1] - w[0])
                .chain(targets.first().copied().filter(|&t| t > 0.0))
                .fold(f64::INFINITY, f64::min);
            fitted_step(gap, spec.dt())?.1
        }
    };
    for &t in targets {
        let k = (t / dt).round();
        if (k * dt - t).abs() > 1e-9 * (dt + t) {
            return Err(CliError::Config(format!("output time {t} is not a multiple of the time step {dt}")));
        }
    }
    Ok(dt)
}

pub fn run_simulate(cfg: &RunConfig, out: Option<&Path>) -> CliResult<RunRecord> {
    let start = Instant::now();
    let spec = setup::scenario(cfg)?;
    let mut rec = RunRecord::new(Command::Simulate, cfg);
    let mut targets: Vec<f64> = spec.snapshot_times.iter().copied().filter(|&t| t > 0.0).collect();
    if targets.last().is_none_or(|&t| t < spec.final_time) {
        targets.push(spec.final_time);
    }
    let dt = simulation_step(cfg, &spec, &targets)?;
    let kind = cfg.integrator_kind();
    let mut st = Stepper::new(kind, spec.model(), spec.initial.clone(), dt, pcg_settings(cfg))?;
    rec.set("dt", dt);
    rec.set("kappa_ub", st.coeffs().kappa_ub);

    let snap_dir = out.map(|d| d.join("snapshots"));
    if let Some(d) = &snap_dir {
        fs::create_dir_all(d).map_err(|e| CliError::io(d, e))?;
    }
    let mut metas = Vec::new();
    let snap = |index: usize, t: f64, st: &Stepper<f64>, metas: &mut Vec<SnapshotMeta>| -> CliResult<()> {
        if let Some(d) = &snap_dir {
            metas.push(write_snapshot(d, index, t, &st.state().zeta(&spec.bathy))?);
        }
        Ok(())
    };
    let mut conserved = Series::new(
        "conserved",
        &[
            "step",
            "time",
            "mass",
            "momentum_x",
            "momentum_y",
            "energy",
            "constraint_residual",
            "eta_max",
            "eta_min",
            "pcg_iterations",
        ],
    );
    conserved.push(conserved_row(0, &st)?);
    let mut next_snap = 0;
    if spec.snapshot_times.first() == Some(&0.0) {
        snap(0, 0.0, &st, &mut metas)?;
        next_snap = 1;
    }
    let every = cfg.integrator.record_every;
    let mut step = 0usize;
    let mut failure: Option<String> = None;
    if kind.steps() > 1 {
        if let Err(e) = st.bootstrap(&Bootstrap::Rk4 { substeps: cfg.integrator.bootstrap_substeps }) {
            failure = Some(format!("bootstrap failed: {e}"));
        }
        step = kind.steps() - 1;
    }
    'outer: for &target in &targets {
        if failure.is_some() {
            break;
        }
        let n = st.steps_to(target);
        for _ in 0..n {
            if let Err(e) = st.step() {
                failure = Some(format!("step {} at t = {}: {e}", step + 1, st.time()));
                break 'outer;
            }
            step += 1;
            let eta_inf = norms(&st.state().eta).inf_norm;
            if !(eta_inf <= BLOW_UP) {
                failure = Some(format!("blow-up at step {step}, t = {}: |eta|_inf = {eta_inf:e}", st.time()));
                break 'outer;
            }
            if step.is_multiple_of(every) {
                conserved.push(conserved_row(step, &st)?);
            }
        }
        if conserved.rows.last().map(|r| r[0] as usize) != Some(step) {
            conserved.push(conserved_row(step, &st)?);
        }
        while next_snap < spec.snapshot_times.len()
            && (spec.snapshot_times[next_snap] - target).abs() <= 1e-9 * (1.0 + target)
        {
            snap(next_snap, spec.snapshot_times[next_snap], &st, &mut metas)?;
            next_snap += 1;
        }
    }

    let first = conserved.rows.first().cloned().expect("initial row");
    let drift = |j: usize| conserved.rows.iter().map(|r| (r[j] - first[j]).abs()).fold(0.0, f64::max);
    rec.set("mass_drift", drift(2));
    rec.set("momentum_drift", drift(3).max(drift(4)));
    rec.set("energy_drift", drift(5));
    rec.set("max_constraint_residual", conserved.rows.iter().map(|r| r[6]).fold(0.0, f64::max));
    rec.set("steps", step as f64);
    rec.set("final_time", st.time());
    rec.set("pcg_iterations", st.stats().pcg_iterations as f64);
    rec.set("snapshots", metas.len() as f64);
    rec.set("max_eta_change", norms(&(&st.state().eta - &spec.initial.eta)).inf_norm);
    rec.series.push(conserved);

    if let (Some(d), false) = (&snap_dir, metas.is_empty()) {
        let manifest = Manifest { schema: SNAPSHOT_SCHEMA, scenario: &spec.name, quantity: "zeta", snapshots: &metas };
        let path = d.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest).expect("serializes") + "\n")
            .map_err(|e| CliError::io(&path, e))?;
        let csv_path = d.join("snapshots.csv");
        let mut w = csv::Writer::from_path(&csv_path)
            .map_err(|e| CliError::Io { path: csv_path.display().to_string(), source: e.into() })?;
        let io = |e: csv::Error| CliError::Io { path: csv_path.display().to_string(), source: e.into() };
        w.write_record(["index", "time", "file", "zeta_min", "zeta_max"]).map_err(io)?;
        for m in &metas {
            w.write_record([
                m.index.to_string(),
                crate::record::format_value(m.time),
                m.file.clone(),
                crate::record::format_value(m.zeta_min),
                crate::record::format_value(m.zeta_max),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| CliError::io(&csv_path, e))?;
        rec.files.push("snapshots/manifest.json".into());
        rec.files.push("snapshots/snapshots.csv".into());
        for m in &metas {
            rec.files.push(format!("snapshots/{}", m.file));
            rec.files.push(format!("snapshots/zeta_{:04}.json", m.index));
        }
    }
    if let Some(msg) = failure {
        rec.status = Status::Failed;
        rec.diagnostics.push(msg);
    }
    rec.wall_seconds = start.elapsed().as_secs_f64();
    Ok(rec)
}

/// Runs `command` and, when `out` is given, writes the record and its tables there.
pub fn run(command: Command, cfg: &RunConfig, out: Option<&Path>) -> CliResult<RunRecord> {
    if let Some(c) = cfg.command {
        if c != command {
            return Err(CliError::Config(format!("config is for `{c}` but `{command}` was requested")));
        }
    }
    if command == Command::Simulate && cfg.scenario.name.is_linear_problem() {
        return Err(CliError::Config("simulate needs a time-dependent scenario".into()));
    }
    if matches!(cfg.scenario.name, ScenarioName::Rest) && command == Command::Converge {
        return Err(CliError::Config("the rest state has no exact solution to converge against".into()));
    }
    let mut rec = match command {
        Command::PcgBench => run_pcg_bench(cfg)?,
        Command::EigStudy => run_eig_study(cfg)?,
        Command::QuasiOpt => run_quasi_opt(cfg)?,
        Command::Converge => run_converge(cfg)?,
        Command::Simulate => run_simulate(cfg, out)?,
    };
    debug_assert!(rec.series.iter().all(Series::is_consistent));
    if let Some(dir) = out {
        rec.write(dir)?;
    }
    Ok(rec)
}
