//! Builds grids, linear problems and scenarios from a configuration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgn_core::model::SgnState;
use sgn_core::operators::Bathymetry;
use sgn_core::scenarios::{
    circular_barrier_2d, elliptical_bump_2d, manufactured, shelf_1d, solitary_scenario, square_wave_problem,
    test_problem_1d, LinearProblem, ScenarioSpec, ShelfParams, SolitaryWaveParams,
};
use sgn_core::{Field, Grid, PeriodicGrid, Vector};

use crate::config::{RhsKind, RunConfig, ScenarioName};
use crate::error::{CliError, CliResult};

pub fn grid(cfg: &RunConfig, n: usize) -> CliResult<Grid> {
    let l = cfg.length();
    Ok(match cfg.scenario.name.dim() {
        1 => PeriodicGrid::new_1d(n, l)?,
        _ => PeriodicGrid::new_2d(n, n, l, l)?,
    })
}

/// One point of a linear-solver sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProblemPoint {
    pub n: usize,
    pub eta0: f64,
    pub h0: f64,
    pub aspect: [f64; 2],
}

/// Cartesian product of the sweep lists, falling back to the single values.
pub fn problem_points(cfg: &RunConfig) -> Vec<ProblemPoint> {
    let or = |list: &[f64], single: Option<f64>, default: f64| {
        if list.is_empty() {
            vec![single.unwrap_or(default)]
        } else {
            list.to_vec()
        }
    };
    let ns = if cfg.sweep.n.is_empty() { vec![cfg.n()] } else { cfg.sweep.n.clone() };
    let default_eta0 = if cfg.scenario.name == ScenarioName::SquareWave { 0.08 } else { 1.0 };
    let eta0s = or(&cfg.sweep.eta0, cfg.scenario.eta0, default_eta0);
    let h0s = or(&cfg.sweep.h0, cfg.scenario.h0, 1.0);
    let aspects = if cfg.sweep.aspect.is_empty() {
        vec![cfg.scenario.aspect.unwrap_or([1.0, 1.0])]
    } else {
        cfg.sweep.aspect.clone()
    };
    let mut out = Vec::new();
    for &n in &ns {
        match cfg.scenario.name {
            ScenarioName::EllipticalBump => {
                out.extend(aspects.iter().map(|&aspect| ProblemPoint { n, eta0: f64::NAN, h0: f64::NAN, aspect }))
            }
            ScenarioName::SquareWave => {
                out.extend(eta0s.iter().map(|&eta0| ProblemPoint { n, eta0, h0: 1.0, aspect: [f64::NAN; 2] }))
            }
            _ => {
                for &eta0 in &eta0s {
                    out.extend(h0s.iter().map(|&h0| ProblemPoint { n, eta0, h0, aspect: [f64::NAN; 2] }));
                }
            }
        }
    }
    out
}

pub fn linear_problem(cfg: &RunConfig, p: &ProblemPoint, stream: u64) -> CliResult<LinearProblem<f64>> {
    let g = grid(cfg, p.n)?;
    let mut pr = match cfg.scenario.name {
        ScenarioName::TestProblem => test_problem_1d(p.eta0, p.h0, &g)?,
        ScenarioName::SquareWave => square_wave_problem(p.eta0, &g)?,
        ScenarioName::EllipticalBump => elliptical_bump_2d(p.aspect[0], p.aspect[1], &g)?,
        other => {
            return Err(CliError::Config(format!("scenario `{other:?}` is not a linear problem")));
        }
    };
    if cfg.scenario.rhs == RhsKind::Random {
        pr.rhs = random_rhs(&g, cfg.seed, stream);
    }
    Ok(pr)
}

/// Band-limited random field: eight Fourier modes per component with random
/// amplitudes and phases, drawn from `(seed, stream)`.
pub fn random_rhs(g: &Grid, seed: u64, stream: u64) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let tau = std::f64::consts::TAU;
    let comps = (0..g.dim())
        .map(|_| {
            let modes: Vec<[f64; 4]> = (0..8)
                .map(|_| {
                    [
                        rng.random_range(-1.0..1.0),
                        rng.random_range(0.0..tau),
                        rng.random_range(1..6) as f64,
                        rng.random_range(0..4) as f64,
                    ]
                })
                .collect();
            let (lx, ly) = (g.length(0), if g.dim() == 2 { g.length(1) } else { 1.0 });
            Field::from_fn(g, |x, y| {
                modes.iter().map(|m| m[0] * (tau * (m[2] * x / lx + m[3] * y / ly) + m[1]).sin()).sum()
            })
        })
        .collect();
    Vector::new(comps).expect("components share the grid")
}

/// Initial-value problem named by the configuration, with overrides applied.
pub fn scenario(cfg: &RunConfig) -> CliResult<ScenarioSpec<f64>> {
    let s = &cfg.scenario;
    let g = grid(cfg, cfg.n())?;
    let l = cfg.length();
    let mut spec = match s.name {
        ScenarioName::Manufactured => manufactured(&g)?,
        ScenarioName::Solitary => {
            let p = SolitaryWaveParams::new(s.amplitude.unwrap_or(0.2), s.depth.unwrap_or(1.0))?
                .with_xi0(-s.crest.unwrap_or(l / 2.0));
            solitary_scenario(p, &g, 5.0)?
        }
        ScenarioName::Shelf => {
            let mut p = ShelfParams::new(s.height.unwrap_or(0.5), l);
            if let Some(a) = s.amplitude {
                p.amplitude = a;
            }
            if let Some(d) = s.depth {
                p.depth = d;
            }
            if let Some(w) = s.mollifier_width {
                p.mollifier_width = w;
            }
            if let Some(c) = s.crest {
                p.crest = c;
            }
            shelf_1d(p, &g)?
        }
        ScenarioName::Barrier => circular_barrier_2d(s.amplitude.unwrap_or(0.01), &g)?,
        ScenarioName::Rest => {
            let bathy = Bathymetry::flat(&g, s.depth.unwrap_or(1.0))?;
            let initial = SgnState::rest(&bathy)?;
            ScenarioSpec {
                name: "rest".into(),
                grid: g.clone(),
                bathy,
                initial,
                exact: None,
                forcing: None,
                final_time: 1.0,
                cfl: 0.5,
                snapshot_times: vec![0.0, 1.0],
            }
        }
        other => {
            return Err(CliError::Config(format!("scenario `{other:?}` is a linear problem, not a time-dependent one")))
        }
    };
    if let Some(t) = s.final_time {
        spec.final_time = t;
        if s.snapshot_times.is_none() {
            spec.snapshot_times = vec![0.0, t];
        }
    }
    if let Some(times) = &s.snapshot_times {
        spec.snapshot_times = times.clone();
    }
    if let Some(c) = cfg.integrator.cfl {
        spec.cfl = c;
    }
    if spec.snapshot_times.iter().any(|&t| t > spec.final_time) {
        return Err(CliError::Config("snapshot times must not exceed the final time".into()));
    }
    Ok(spec)
}
