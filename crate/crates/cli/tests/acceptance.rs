//! Acceptance gate. Runs every criterion in sequence, prints one PASS/FAIL line
//! each, and exits non-zero if any fails. Timing criteria run alone so they are
//! not disturbed by other tests.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex;
use sgn_cli::{run, Command, RunConfig, RunRecord, Status};
use sgn_core::grid::periodic_shift;
use sgn_core::integrators::{char_roots, MultistepTable};
use sgn_core::scenarios::ShelfParams;
use sgn_core::{Field, PeriodicGrid};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn config(text: &str) -> RunConfig {
    RunConfig::from_toml_str(text).expect("acceptance configs are valid")
}

fn exec(cmd: Command, cfg: &RunConfig, out: Option<&Path>) -> Result<RunRecord, String> {
    let rec = run(cmd, cfg, out).map_err(|e| format!("{cmd} failed: {e}"))?;
    if rec.status != Status::Ok {
        return Err(format!("{cmd} finished with status {:?}: {:?}", rec.status, rec.diagnostics));
    }
    Ok(rec)
}

fn value(rec: &RunRecord, key: &str) -> Result<f64, String> {
    rec.value(key).ok_or_else(|| format!("summary key `{key}` missing"))
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_minutes(start: Instant, minutes: f64) -> Result<f64, String> {
    let s = start.elapsed().as_secs_f64();
    ensure(s <= 60.0 * minutes, || format!("took {s:.1} s, budget {minutes} min"))?;
    Ok(s)
}

fn sweep_1d(command: &str, extra: &str) -> RunConfig {
    config(&format!(
        r#"
        command = "{command}"
        [scenario]
        name = "test-problem"
        [sweep]
        n = [64, 256]
        eta0 = [1.0, 4.0]
        h0 = [1.0, 4.0]
        {extra}
        "#
    ))
}

fn eigenvalue_interval() -> Check {
    let start = Instant::now();
    let one_d = exec(Command::EigStudy, &sweep_1d("eig-study", ""), None)?;
    let two_d = exec(
        Command::EigStudy,
        &config(
            r#"
            [grid]
            n = 16
            [scenario]
            name = "elliptical-bump"
            [sweep]
            aspect = [[1.0, 1.0], [4.0, 1.0], [1.0, 4.0]]
            "#,
        ),
        None,
    )?;
    let mut total = 0.0;
    let mut eigs = 0;
    for rec in [&one_d, &two_d] {
        total += value(rec, "interval_violations")?;
        eigs += rec.series("eigenvalues").map_or(0, |s| s.rows.len());
    }
    ensure(total == 0.0, || format!("{total} eigenvalues outside [1/kappa_ub - 1e-10, 1 + 1e-10]"))?;
    let s = within_minutes(start, 1.0)?;
    Ok(format!("{eigs} eigenvalues over 11 problems, 0 outside the interval, {s:.1} s"))
}

fn pcg_bound() -> Check {
    let start = Instant::now();
    let rec = exec(Command::PcgBench, &sweep_1d("pcg-bench", "threshold = 1e-12"), None)?;
    let violations = value(&rec, "bound_violations")?;
    ensure(violations == 0.0, || format!("{violations} iterations above the bound"))?;
    let reached = rec.series("pcg_points").and_then(|s| s.column("iterations_to_threshold")).unwrap_or_default();
    ensure(!reached.is_empty() && reached.iter().all(|k| k.is_finite()), || {
        format!("some points never reached eps <= 1e-12: {reached:?}")
    })?;
    let worst = reached.iter().cloned().fold(0.0, f64::max);
    ensure(worst <= 200.0, || format!("{worst} iterations to eps <= 1e-12"))?;
    let s = within_minutes(start, 1.0)?;
    Ok(format!("0 bound violations over {} points, eps <= 1e-12 within {worst} iterations, {s:.1} s", reached.len()))
}

fn mesh_independence() -> Check {
    let start = Instant::now();
    let cfg = config(
        r#"
        [scenario]
        name = "test-problem"
        eta0 = 1.0
        h0 = 1.0
        [sweep]
        n = [64, 256, 1024, 4096]
        threshold = 1e-8
        "#,
    );
    let rec = exec(Command::PcgBench, &cfg, None)?;
    let its = rec.series("pcg_points").and_then(|s| s.column("iterations_to_threshold")).unwrap_or_default();
    let spread = value(&rec, "max_mesh_spread")?;
    ensure(spread <= 2.0, || format!("iterations {its:?} spread by {spread}"))?;
    let s = within_minutes(start, 1.0)?;
    Ok(format!("iterations to 1e-8 for n = 64..4096: {its:?}, {s:.1} s"))
}

fn coefficient_comparison() -> Check {
    let cfg = config(
        r#"
        [grid]
        n = 128
        [scenario]
        name = "square-wave"
        eta0 = 0.08
        [sweep]
        variants = ["variable", "simplified"]
        "#,
    );
    let rec = exec(Command::PcgBench, &cfg, None)?;
    let ratio = value(&rec, "ratio_simplified_over_variable_min")?;
    let its = rec.series("pcg_points").and_then(|s| s.column("iterations_to_threshold")).unwrap_or_default();
    ensure((1.2..=2.0).contains(&ratio), || format!("ratio {ratio:.3} outside [1.2, 2.0]"))?;
    Ok(format!("variable {} vs simplified {} iterations, ratio {ratio:.3}", its[0], its[1]))
}

fn quasi_optimality() -> Check {
    let cfg = config(
        r#"
        [grid]
        n = 128
        [scenario]
        name = "test-problem"
        [sweep]
        eta0 = [0.5, 1.0, 2.0]
        h0 = [0.5, 1.0, 2.0]
        "#,
    );
    let rec = exec(Command::QuasiOpt, &cfg, None)?;
    let points = value(&rec, "points")?;
    let bad = value(&rec, "sandwich_violations")?;
    ensure(points == 9.0 && bad == 0.0, || format!("{bad} violations over {points} points"))?;
    Ok(format!("0 violations over 9 points, worst kappa_ub/Gamma = {:.3}", value(&rec, "max_kappa_over_gamma")?))
}

const ORDERS: [(&str, f64, f64); 5] =
    [("rk4", 3.8, 4.3), ("ab4", 3.8, 4.3), ("ab3", 2.8, 3.3), ("ab2", 1.8, 2.3), ("sbdf2", 1.8, 2.3)];

fn convergence_orders() -> Check {
    let start = Instant::now();
    let cfg = config(
        r#"
        [grid]
        n = 256
        [scenario]
        name = "manufactured"
        final_time = 1.0
        [pcg]
        tol = 1e-14
        [sweep]
        integrators = ["rk4", "ab4", "ab3", "ab2", "sbdf2"]
        cfl = { rk4 = 0.8, ab4 = 0.12, ab3 = 0.2, ab2 = 0.1, sbdf2 = 0.05 }
        levels = 5
        "#,
    );
    let rec = exec(Command::Converge, &cfg, None)?;
    let mut report = Vec::new();
    for (name, lo, hi) in ORDERS {
        for field in ["eta", "u"] {
            let slope = value(&rec, &format!("slope_{field}_{name}"))?;
            ensure((lo..=hi).contains(&slope), || format!("{name} {field} slope {slope:.3} outside [{lo}, {hi}]"))?;
        }
        report.push(format!(
            "{name} {:.2}/{:.2}",
            value(&rec, &format!("slope_eta_{name}"))?,
            value(&rec, &format!("slope_u_{name}"))?
        ));
    }
    let coarse = rec.series("convergence").and_then(|s| s.column("err_eta")).unwrap_or_default();
    ensure(coarse.iter().all(|e| e.is_finite()), || "non-finite error".into())?;
    let s = within_minutes(start, 10.0)?;
    Ok(format!("slopes eta/u over 4 halvings: {}, {s:.0} s", report.join(", ")))
}

fn efficiency_ordering() -> Check {
    let cfg = config(
        r#"
        [grid]
        n = 256
        [scenario]
        name = "manufactured"
        final_time = 1.0
        [pcg]
        tol = 1e-14
        [sweep]
        integrators = ["ab2", "sbdf2"]
        cfl = { ab2 = 0.05, sbdf2 = 0.05 }
        levels = 2
        parallel = false
        "#,
    );
    let rec = exec(Command::Converge, &cfg, None)?;
    let ab2 = value(&rec, "wall_per_step_ab2")?;
    let sbdf2 = value(&rec, "wall_per_step_sbdf2")?;
    ensure(sbdf2 < ab2, || format!("SBDF2 {sbdf2:.3e} s/step is not below AB2 {ab2:.3e} s/step"))?;
    Ok(format!("per step at equal dt: SBDF2 {:.3} ms, AB2+PCG {:.3} ms", sbdf2 * 1e3, ab2 * 1e3))
}

fn solitary(integrator: &str, dt: f64, final_time: f64, snapshots: &str) -> RunConfig {
    config(&format!(
        r#"
        [grid]
        n = 256
        length = 100.0
        [scenario]
        name = "solitary"
        amplitude = 0.2
        depth = 1.0
        final_time = {final_time}
        snapshot_times = {snapshots}
        [integrator]
        name = "{integrator}"
        dt = {dt}
        "#
    ))
}

fn conservation() -> Check {
    let start = Instant::now();
    let mut report = Vec::new();
    for (name, order) in [("rk4", 4.0), ("ab2", 2.0), ("ab3", 3.0), ("ab4", 4.0), ("sbdf2", 2.0)] {
        let mut drifts = Vec::new();
        let mut dts = Vec::new();
        for level in 0..3 {
            let dt = 0.2 / f64::powi(2.0, level);
            let rec = exec(Command::Simulate, &solitary(name, dt, 5.0, "[0.0, 5.0]"), None)?;
            let (dm, dmom) = (value(&rec, "mass_drift")?, value(&rec, "momentum_drift")?);
            ensure(dm <= 1e-10 && dmom <= 1e-10, || {
                format!("{name} dt = {dt}: mass drift {dm:e}, momentum drift {dmom:e}")
            })?;
            drifts.push(value(&rec, "energy_drift")?);
            dts.push(dt);
        }
        let rate = sgn_cli::analysis::loglog_slope(&dts, &drifts).unwrap_or(f64::NAN);
        ensure(rate >= order - 0.2, || {
            format!("{name} energy drift {drifts:?} shrinks at rate {rate:.2}, order {order}")
        })?;
        report.push(format!("{name} {rate:.2}"));
    }
    let s = within_minutes(start, 2.0)?;
    Ok(format!("mass and momentum drift <= 1e-10, energy drift rates: {}, {s:.0} s", report.join(", ")))
}

fn read_snapshot(dir: &Path, index: usize) -> Result<Vec<f64>, String> {
    let p = dir.join(format!("snapshots/zeta_{index:04}.bin"));
    let bytes = fs::read(&p).map_err(|e| format!("{}: {e}", p.display()))?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes"))).collect())
}

fn traveling_wave() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t = 10.0;
    exec(Command::Simulate, &solitary("rk4", 0.05, t, "[0.0, 10.0]"), Some(dir.path()))?;
    let g = PeriodicGrid::<f64>::new_1d(256, 100.0).map_err(|e| e.to_string())?;
    let field = |v| Field::new(&g, v).map_err(|e| e.to_string());
    let shift = periodic_shift(&field(read_snapshot(dir.path(), 0)?)?, &field(read_snapshot(dir.path(), 1)?)?)
        .map_err(|e| e.to_string())?;
    let speed = shift / t;
    let c = (1.0f64 + 0.2).sqrt();
    let rel = (speed / c - 1.0).abs();
    ensure(rel <= 1e-3, || format!("speed {speed:.6} vs {c:.6}, relative error {rel:.2e}"))?;

    let cfg = config(
        r#"
        [grid]
        n = 256
        length = 100.0
        [scenario]
        name = "solitary"
        amplitude = 0.2
        final_time = 1.0
        [sweep]
        integrators = ["rk4"]
        cfl = { rk4 = 1.0 }
        levels = 4
        "#,
    );
    let rec = exec(Command::Converge, &cfg, None)?;
    let slope = value(&rec, "slope_eta_rk4")?.min(value(&rec, "slope_u_rk4")?);
    ensure((3.8..=4.3).contains(&slope), || format!("RK4 solitary-wave error slope {slope:.3}"))?;
    Ok(format!("speed {speed:.6} vs sqrt(h0 + a) = {c:.6} (rel {rel:.1e}), RK4 slope at t = 1 {slope:.2}"))
}

fn zero_stability() -> Check {
    let table = MultistepTable::sbdf2();
    let mut worst = 0.0f64;
    // Log-spaced samples in (1e-4, 1].
    for k in 0..1000 {
        let lambda = 10f64.powf(-4.0 + 4.0 * (k + 1) as f64 / 1000.0);
        for z in char_roots(lambda, &table).map_err(|e| e.to_string())? {
            worst = worst.max(z.norm());
        }
    }
    ensure(worst < 1.0, || format!("largest root modulus {worst}"))?;
    let roots = char_roots(0.5, &table).map_err(|e| e.to_string())?;
    let expect = [Complex::new(0.5, 0.5), Complex::new(0.5, -0.5)];
    let err =
        expect.iter().map(|e| roots.iter().map(|r| (r - e).norm()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max);
    ensure(roots.len() == 2 && err <= 1e-12, || format!("roots at 1/2: {roots:?}"))?;
    Ok(format!("max |z| = {worst:.6} over 1000 samples, roots at 1/2 within {err:.1e}"))
}

fn clock_scaling() -> Check {
    let cfg = config(
        r#"
        [scenario]
        name = "test-problem"
        eta0 = 1.0
        h0 = 1.0
        [sweep]
        n = [32]
        scaling_exponents = [5, 18]
        repeats = 3
        "#,
    );
    let rec = exec(Command::PcgBench, &cfg, None)?;
    let r2 = value(&rec, "wall_fit_r2")?;
    ensure(r2 >= 0.95, || format!("R^2 = {r2:.4}"))?;
    Ok(format!("wall time ~ {:.2e} n log n, R^2 = {r2:.4}", value(&rec, "wall_fit_c")?))
}

fn manifest_times(dir: &Path) -> Result<Vec<f64>, String> {
    let p = dir.join("snapshots/manifest.json");
    let text = fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    Ok(v["snapshots"].as_array().map(|a| a.iter().filter_map(|s| s["time"].as_f64()).collect()).unwrap_or_default())
}

fn figure_targets() -> Check {
    let start = Instant::now();
    let shelf_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let shelf = config(
        r#"
        [grid]
        n = 1024
        [scenario]
        name = "shelf"
        height = 0.5
        snapshot_times = [0.0, 25.0, 75.0, 125.0]
        [integrator]
        name = "rk4"
        cfl = 0.5
        record_every = 10
        "#,
    );
    exec(Command::Simulate, &shelf, Some(shelf_dir.path()))?;
    let times = manifest_times(shelf_dir.path())?;
    ensure(times == [0.0, 25.0, 75.0, 125.0], || format!("shelf snapshot times {times:?}"))?;
    let params = ShelfParams::<f64>::new(0.5, shelf.length());
    let dx = shelf.length() / 1024.0;
    // Largest elevation seaward of the shelf, well clear of its edge.
    let reflected = |index| -> Result<(f64, f64), String> {
        let z = read_snapshot(shelf_dir.path(), index)?;
        Ok(z.iter()
            .enumerate()
            .map(|(i, v)| (i as f64 * dx, *v))
            .filter(|(x, _)| *x < params.shelf_start - 5.0)
            .fold((f64::NAN, f64::NEG_INFINITY), |best, p| if p.1 > best.1 { p } else { best }))
    };
    let (x75, a75) = reflected(2)?;
    let (x125, a125) = reflected(3)?;
    let amp = params.amplitude;
    ensure(a75 > 0.05 * amp && a125 > 0.05 * amp, || format!("no reflected wave: crest {a75:.2e}, {a125:.2e}"))?;
    ensure(x125 < x75 - 10.0, || format!("reflected crest does not move left: x = {x75:.1} then {x125:.1}"))?;

    let barrier_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let barrier = config(
        r#"
        [grid]
        n = 64
        [scenario]
        name = "barrier"
        snapshot_times = [0.0, 0.8, 1.6, 2.4, 3.2, 4.0]
        [integrator]
        name = "ab2"
        record_every = 5
        "#,
    );
    let rec = exec(Command::Simulate, &barrier, Some(barrier_dir.path()))?;
    let times = manifest_times(barrier_dir.path())?;
    ensure(times == [0.0, 0.8, 1.6, 2.4, 3.2, 4.0], || format!("barrier snapshot times {times:?}"))?;
    let last = read_snapshot(barrier_dir.path(), 5)?;
    ensure(last.len() == 64 * 64 && last.iter().all(|v| v.is_finite()), || "barrier snapshot not finite".into())?;
    Ok(format!(
        "shelf reflection {:.3}a at x = {x75:.0} then {:.3}a at x = {x125:.0}; barrier to t = 4 in {} steps; {:.0} s",
        a75 / amp,
        a125 / amp,
        value(&rec, "steps")?,
        start.elapsed().as_secs_f64()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("eigenvalue interval", eigenvalue_interval),
        ("PCG error bound", pcg_bound),
        ("mesh independence", mesh_independence),
        ("coefficient comparison", coefficient_comparison),
        ("quasi-optimality sandwich", quasi_optimality),
        ("convergence orders", convergence_orders),
        ("efficiency ordering", efficiency_ordering),
        ("conservation", conservation),
        ("traveling-wave exactness", traveling_wave),
        ("SBDF2 zero-stability", zero_stability),
        ("clock-time scaling", clock_scaling),
        ("shelf and barrier figures", figure_targets),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
