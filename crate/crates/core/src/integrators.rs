//! Time integration of the semi-discrete system: explicit Runge–Kutta and
//! Adams–Bashforth schemes that enforce the constraint with PCG, and the
//! linearly implicit SBDF2 scheme that needs a single solve with `A` per step.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex;
use num_rational::Ratio;

use crate::error::{Result, SgnError};
use crate::grid::{ScalarField, VectorField};
use crate::krylov::{pcg, PcgOptions, PcgReport};
use crate::model::{SgnModel, SgnState};
use crate::operators::{apply_a, coeffs_for, solve_a, CoeffVariant, ConstraintOperator, DepthField, PrecondCoeffs};
use crate::scalar::Real;

/// Exact rational scheme coefficient.
pub type Coef = Ratio<i64>;

fn q(n: i64, d: i64) -> Coef {
    Ratio::new(n, d)
}

fn to_real<T: Real>(c: Coef) -> T {
    T::lit(*c.numer() as f64) / T::lit(*c.denom() as f64)
}

/// `Σ a_j w_{n+j} = Δt Σ_{j<s} b_j f_{n+j}`, optionally with implicit
/// extrapolation weights `c_j` for the linearly implicit constraint treatment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultistepTable {
    name: String,
    a: Vec<Coef>,
    b: Vec<Coef>,
    c: Option<Vec<Coef>>,
    order: u32,
}

impl MultistepTable {
    /// Coefficients are indexed `j = 0..=s` (`a`, `c`) and `j = 0..s` (`b`).
    pub fn new(name: &str, a: Vec<Coef>, b: Vec<Coef>, c: Option<Vec<Coef>>, order: u32) -> Result<Self> {
        let s = a
            .len()
            .checked_sub(1)
            .filter(|&s| s >= 1)
            .ok_or_else(|| SgnError::InvalidParameter(format!("table {name} needs at least two a coefficients")))?;
        if b.len() != s {
            return Err(SgnError::InvalidParameter(format!("table {name}: expected {s} b coefficients")));
        }
        if a[s] == q(0, 1) {
            return Err(SgnError::InvalidParameter(format!("table {name}: leading a coefficient is zero")));
        }
        if let Some(c) = &c {
            if c.len() != s + 1 || c[s] == q(0, 1) {
                return Err(SgnError::InvalidParameter(format!(
                    "table {name}: c needs {} entries with a nonzero leading one",
                    s + 1
                )));
            }
        }
        let table = Self { name: name.to_owned(), a, b, c, order };
        if !table.satisfies_root_condition() {
            return Err(SgnError::InvalidParameter(format!("table {name}: a(z) violates the root condition")));
        }
        Ok(table)
    }

    pub fn ab2() -> Self {
        Self::new("ab2", vec![q(0, 1), q(-1, 1), q(1, 1)], vec![q(-1, 2), q(3, 2)], None, 2).expect("valid table")
    }

    pub fn ab3() -> Self {
        Self::new("ab3", vec![q(0, 1), q(0, 1), q(-1, 1), q(1, 1)], vec![q(5, 12), q(-16, 12), q(23, 12)], None, 3)
            .expect("valid table")
    }

    pub fn ab4() -> Self {
        Self::new(
            "ab4",
            vec![q(0, 1), q(0, 1), q(0, 1), q(-1, 1), q(1, 1)],
            vec![q(-9, 24), q(37, 24), q(-59, 24), q(55, 24)],
            None,
            4,
        )
        .expect("valid table")
    }

    pub fn sbdf2() -> Self {
        Self::new(
            "sbdf2",
            vec![q(1, 2), q(-2, 1), q(3, 2)],
            vec![q(-1, 1), q(2, 1)],
            Some(vec![q(0, 1), q(0, 1), q(1, 1)]),
            2,
        )
        .expect("valid table")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of steps `s`.
    pub fn steps(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &[Coef] {
        &self.a
    }

    pub fn b(&self) -> &[Coef] {
        &self.b
    }

    pub fn c(&self) -> Option<&[Coef]> {
        self.c.as_deref()
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn is_imex(&self) -> bool {
        self.c.is_some()
    }

    /// Roots of `a(z)` lie in the closed unit disk and those on the circle are simple.
    pub fn satisfies_root_condition(&self) -> bool {
        let coeffs: Vec<f64> = self.a.iter().map(|&c| to_real::<f64>(c)).collect();
        let Ok(roots) = poly_roots(&coeffs) else { return false };
        roots.iter().enumerate().all(|(i, z)| {
            let r = z.norm();
            if r > 1.0 + 1e-9 {
                return false;
            }
            let on_circle = (r - 1.0).abs() <= 1e-9;
            !on_circle || roots.iter().enumerate().all(|(k, w)| k == i || (z - w).norm() > 1e-6)
        })
    }
}

/// Roots of `Σ p_j z^j` from the companion matrix. Zero roots are split off
/// exactly before the eigensolve.
fn poly_roots(p: &[f64]) -> Result<Vec<Complex<f64>>> {
    let top = p.iter().rposition(|&c| c != 0.0).ok_or(SgnError::DegeneratePolynomial)?;
    let low = p.iter().position(|&c| c != 0.0).expect("nonzero entry exists");
    let mut roots = vec![Complex::new(0.0, 0.0); low];
    let core = &p[low..=top];
    let d = core.len() - 1;
    if d == 0 {
        return Ok(roots);
    }
    let lead = core[d];
    let mut m = DMatrix::<f64>::zeros(d, d);
    for i in 1..d {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..d {
        m[(i, d - 1)] = -core[i] / lead;
    }
    roots.extend(m.complex_eigenvalues().iter().copied());
    Ok(roots)
}

/// Roots of `c(z) + (λ − 1) b(z)` for a linearly implicit table.
pub fn char_roots(lambda: f64, table: &MultistepTable) -> Result<Vec<Complex<f64>>> {
    let c = table
        .c()
        .ok_or_else(|| SgnError::InvalidParameter(format!("table {} has no implicit coefficients", table.name())))?;
    let poly: Vec<f64> = c
        .iter()
        .enumerate()
        .map(|(j, &cj)| {
            let bj = table.b.get(j).map_or(0.0, |&b| to_real::<f64>(b));
            to_real::<f64>(cj) + (lambda - 1.0) * bj
        })
        .collect();
    poly_roots(&poly)
}

/// Roots within this distance of the unit circle are treated as marginal, since
/// repeated roots are only resolved to about the square root of machine precision.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// True when every characteristic root lies strictly inside the unit disk.
pub fn in_stability_region(lambda: f64, table: &MultistepTable) -> Result<bool> {
    Ok(char_roots(lambda, table)?.iter().all(|z| z.norm() < 1.0 - STABILITY_MARGIN))
}

/// Butcher array of an explicit Runge–Kutta method.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RkTable {
    pub a: Vec<Vec<Coef>>,
    pub b: Vec<Coef>,
    pub c: Vec<Coef>,
}

impl RkTable {
    pub fn rk4() -> Self {
        let z = q(0, 1);
        let h = q(1, 2);
        Self {
            a: vec![vec![], vec![h], vec![z, h], vec![z, z, q(1, 1)]],
            b: vec![q(1, 6), q(1, 3), q(1, 3), q(1, 6)],
            c: vec![z, h, h, q(1, 1)],
        }
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }
}

/// The five schemes exercised in practice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IntegratorKind {
    Rk4,
    Ab2,
    Ab3,
    Ab4,
    Sbdf2,
}

impl IntegratorKind {
    pub const ALL: [IntegratorKind; 5] =
        [IntegratorKind::Rk4, IntegratorKind::Ab2, IntegratorKind::Ab3, IntegratorKind::Ab4, IntegratorKind::Sbdf2];

    pub fn name(self) -> &'static str {
        match self {
            IntegratorKind::Rk4 => "rk4",
            IntegratorKind::Ab2 => "ab2",
            IntegratorKind::Ab3 => "ab3",
            IntegratorKind::Ab4 => "ab4",
            IntegratorKind::Sbdf2 => "sbdf2",
        }
    }

    pub fn order(self) -> u32 {
        match self {
            IntegratorKind::Rk4 | IntegratorKind::Ab4 => 4,
            IntegratorKind::Ab3 => 3,
            IntegratorKind::Ab2 | IntegratorKind::Sbdf2 => 2,
        }
    }

    pub fn table(self) -> Option<MultistepTable> {
        match self {
            IntegratorKind::Rk4 => None,
            IntegratorKind::Ab2 => Some(MultistepTable::ab2()),
            IntegratorKind::Ab3 => Some(MultistepTable::ab3()),
            IntegratorKind::Ab4 => Some(MultistepTable::ab4()),
            IntegratorKind::Sbdf2 => Some(MultistepTable::sbdf2()),
        }
    }

    /// History depth `s` (one for single-step methods).
    pub fn steps(self) -> usize {
        self.table().map_or(1, |t| t.steps())
    }
}

impl fmt::Display for IntegratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IntegratorKind {
    type Err = SgnError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| SgnError::InvalidParameter(format!("unknown integrator `{s}`")))
    }
}

/// How the constraint is solved inside a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcgSettings<T> {
    pub tol: T,
    pub max_iter: usize,
    pub variant: CoeffVariant,
    /// Recompute preconditioner coefficients from each stage's depth.
    pub refresh_per_stage: bool,
    /// Start PCG from the most recent velocity instead of zero.
    pub warm_start: bool,
    /// Multiplies the frozen `σ` and `α`.
    pub safety: T,
}

impl<T: Real> Default for PcgSettings<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-14),
            max_iter: 500,
            variant: CoeffVariant::Variable,
            refresh_per_stage: false,
            warm_start: true,
            safety: T::one(),
        }
    }
}

/// Work counters accumulated over a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepStats {
    /// Steps taken after the bootstrap.
    pub steps: usize,
    pub pcg_solves: usize,
    pub pcg_iterations: usize,
    pub a_solves: usize,
}

/// One stored time level with its cached right-hand sides.
#[derive(Clone, Debug)]
pub struct HistoryEntry<T: Real> {
    pub state: SgnState<T>,
    pub rhs_eta: ScalarField<T>,
    pub rhs_momentum: VectorField<T>,
    /// `A u − G u + U`, only kept for linearly implicit schemes.
    pub explicit_part: Option<VectorField<T>>,
}

type ExactFn<T> = dyn Fn(T) -> Result<SgnState<T>> + Send + Sync;

/// How the multistep history is filled before the first step.
#[derive(Clone)]
pub enum Bootstrap<T: Real> {
    /// RK4 with the given number of sub-steps per time step.
    Rk4 { substeps: usize },
    /// Exact states from a known solution.
    Exact(Arc<ExactFn<T>>),
}

impl<T: Real> Bootstrap<T> {
    pub fn exact(f: impl Fn(T) -> Result<SgnState<T>> + Send + Sync + 'static) -> Self {
        Bootstrap::Exact(Arc::new(f))
    }
}

impl<T: Real> Default for Bootstrap<T> {
    fn default() -> Self {
        Bootstrap::Rk4 { substeps: 1 }
    }
}

impl<T: Real> fmt::Debug for Bootstrap<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bootstrap::Rk4 { substeps } => write!(f, "Rk4 {{ substeps: {substeps} }}"),
            Bootstrap::Exact(_) => f.write_str("Exact(..)"),
        }
    }
}

/// Solves `G_{η,h} u = U` by PCG. Non-convergence is an error.
pub fn solve_constraint<T: Real>(
    model: &SgnModel<T>,
    eta: &ScalarField<T>,
    momentum: &VectorField<T>,
    x0: Option<&VectorField<T>>,
    coeffs: &PrecondCoeffs<T>,
    settings: &PcgSettings<T>,
) -> Result<(VectorField<T>, PcgReport<T>)> {
    let op = ConstraintOperator::new(eta, model.bathy())?;
    let coeffs = if settings.refresh_per_stage {
        coeffs_for(settings.variant, &DepthField::new(eta.clone())?, model.bathy())?.scaled(settings.safety)
    } else {
        *coeffs
    };
    let opts = PcgOptions::new(settings.tol, settings.max_iter);
    let x0 = if settings.warm_start { x0 } else { None };
    let (u, report) = pcg(|v| op.apply(v), |r| solve_a(&coeffs, r), momentum, x0, &opts)?;
    if !report.converged {
        return Err(SgnError::NotConverged {
            tol: settings.tol.as_f64(),
            max_iter: settings.max_iter,
            eps: report.final_eps().as_f64(),
        });
    }
    Ok((u, report))
}

/// Owns the evolving state and history of one run.
#[derive(Clone, Debug)]
pub struct Stepper<T: Real> {
    kind: IntegratorKind,
    table: Option<MultistepTable>,
    rk: RkTable,
    model: SgnModel<T>,
    dt: T,
    t0: T,
    steps_taken: usize,
    coeffs: PrecondCoeffs<T>,
    settings: PcgSettings<T>,
    history: VecDeque<HistoryEntry<T>>,
    stats: StepStats,
}

impl<T: Real> Stepper<T> {
    /// Preconditioner coefficients are frozen from the initial depth.
    pub fn new(
        kind: IntegratorKind,
        model: SgnModel<T>,
        initial: SgnState<T>,
        dt: T,
        settings: PcgSettings<T>,
    ) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(SgnError::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        if !initial.grid().same_as(model.grid()) {
            return Err(SgnError::GridMismatch);
        }
        let coeffs = coeffs_for(settings.variant, &DepthField::new(initial.eta.clone())?, model.bathy())?
            .scaled(settings.safety);
        Self::with_coeffs(kind, model, initial, dt, settings, coeffs)
    }

    /// Uses caller-chosen frozen coefficients.
    pub fn with_coeffs(
        kind: IntegratorKind,
        model: SgnModel<T>,
        initial: SgnState<T>,
        dt: T,
        settings: PcgSettings<T>,
        coeffs: PrecondCoeffs<T>,
    ) -> Result<Self> {
        let mut stepper = Self {
            kind,
            table: kind.table(),
            rk: RkTable::rk4(),
            model,
            dt,
            t0: initial.t,
            steps_taken: 0,
            coeffs,
            settings,
            history: VecDeque::new(),
            stats: StepStats::default(),
        };
        let entry = stepper.entry(initial)?;
        stepper.history.push_back(entry);
        Ok(stepper)
    }

    pub fn kind(&self) -> IntegratorKind {
        self.kind
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn coeffs(&self) -> &PrecondCoeffs<T> {
        &self.coeffs
    }

    pub fn model(&self) -> &SgnModel<T> {
        &self.model
    }

    pub fn stats(&self) -> StepStats {
        self.stats
    }

    pub fn history(&self) -> &VecDeque<HistoryEntry<T>> {
        &self.history
    }

    pub fn state(&self) -> &SgnState<T> {
        &self.history.back().expect("history is never empty").state
    }

    pub fn time(&self) -> T {
        self.state().t
    }

    fn time_at(&self, steps: usize) -> T {
        self.t0 + self.dt * T::from_usize_lossy(steps)
    }

    fn entry(&self, state: SgnState<T>) -> Result<HistoryEntry<T>> {
        let (rhs_eta, rhs_momentum) = self.model.rhs(&state)?;
        let explicit_part = if self.kind == IntegratorKind::Sbdf2 {
            let op = ConstraintOperator::new(&state.eta, self.model.bathy())?;
            let mut x = apply_a(&self.coeffs, &state.velocity);
            x.axpy(-T::one(), &op.apply(&state.velocity));
            x.axpy(T::one(), &state.momentum);
            Some(x)
        } else {
            None
        };
        Ok(HistoryEntry { state, rhs_eta, rhs_momentum, explicit_part })
    }

    fn record(&mut self, report: &PcgReport<T>) {
        self.stats.pcg_solves += 1;
        self.stats.pcg_iterations += report.iterations;
    }

    /// One explicit Runge–Kutta step of size `h` from `state`.
    fn rk_step_from(&mut self, state: &SgnState<T>, h: T) -> Result<SgnState<T>> {
        let rk = self.rk.clone();
        let mut k_eta: Vec<ScalarField<T>> = Vec::with_capacity(rk.stages());
        let mut k_mom: Vec<VectorField<T>> = Vec::with_capacity(rk.stages());
        let mut u_prev = state.velocity.clone();
        for i in 0..rk.stages() {
            let t_i = state.t + h * to_real::<T>(rk.c[i]);
            let (eta_i, u_i) = if i == 0 {
                (state.eta.clone(), state.velocity.clone())
            } else {
                let mut eta_i = state.eta.clone();
                let mut mom_i = state.momentum.clone();
                for (j, &a) in rk.a[i].iter().enumerate() {
                    if a != q(0, 1) {
                        let w = h * to_real::<T>(a);
                        eta_i.axpy(w, &k_eta[j]);
                        mom_i.axpy(w, &k_mom[j]);
                    }
                }
                let (u_i, rep) =
                    solve_constraint(&self.model, &eta_i, &mom_i, Some(&u_prev), &self.coeffs, &self.settings)?;
                self.record(&rep);
                (eta_i, u_i)
            };
            let (de, dm) = self.model.rhs_fields(&eta_i, &u_i, t_i)?;
            k_eta.push(de);
            k_mom.push(dm);
            u_prev = u_i;
        }
        let mut eta = state.eta.clone();
        let mut mom = state.momentum.clone();
        for (i, &b) in rk.b.iter().enumerate() {
            let w = h * to_real::<T>(b);
            eta.axpy(w, &k_eta[i]);
            mom.axpy(w, &k_mom[i]);
        }
        let (u, rep) = solve_constraint(&self.model, &eta, &mom, Some(&u_prev), &self.coeffs, &self.settings)?;
        self.record(&rep);
        SgnState::new(eta, mom, u, state.t + h)
    }

    /// Fills the multistep history up to `s` entries. A no-op for RK4 or a full history.
    pub fn bootstrap(&mut self, how: &Bootstrap<T>) -> Result<()> {
        let depth = self.kind.steps();
        while self.history.len() < depth {
            let next = self.steps_taken + 1;
            let t_next = self.time_at(next);
            let state = match how {
                Bootstrap::Exact(f) => {
                    let s = f(t_next)?;
                    SgnState { t: t_next, ..s }
                }
                Bootstrap::Rk4 { substeps } => {
                    let m = (*substeps).max(1);
                    let h = self.dt / T::from_usize_lossy(m);
                    let mut s = self.state().clone();
                    for _ in 0..m {
                        s = self.rk_step_from(&s, h)?;
                    }
                    s.t = t_next;
                    s
                }
            };
            let entry = self.entry(state)?;
            self.history.push_back(entry);
            self.steps_taken = next;
        }
        Ok(())
    }

    fn multistep_step(&mut self, table: &MultistepTable) -> Result<SgnState<T>> {
        let s = table.steps();
        let a_s = to_real::<T>(table.a()[s]);
        let grid = self.model.grid().clone();
        let mut eta = ScalarField::zeros(&grid);
        let mut mom = VectorField::zeros(&grid);
        for (j, entry) in self.history.iter().enumerate() {
            let a = -to_real::<T>(table.a()[j]);
            let b = self.dt * to_real::<T>(table.b()[j]);
            eta.axpy(a, &entry.state.eta);
            eta.axpy(b, &entry.rhs_eta);
            mom.axpy(a, &entry.state.momentum);
            mom.axpy(b, &entry.rhs_momentum);
        }
        eta = eta.scale(T::one() / a_s);
        mom = mom.scale(T::one() / a_s);
        let t_new = self.time_at(self.steps_taken + 1);
        let u = match table.c() {
            None => {
                let x0 = self.state().velocity.clone();
                let (u, rep) = solve_constraint(&self.model, &eta, &mom, Some(&x0), &self.coeffs, &self.settings)?;
                self.record(&rep);
                u
            }
            Some(c) => {
                let mut rhs = VectorField::zeros(&grid);
                for (j, entry) in self.history.iter().enumerate() {
                    let x = entry.explicit_part.as_ref().expect("linearly implicit history caches A u − G u + U");
                    rhs.axpy(to_real::<T>(table.b()[j]), x);
                    if c[j] != q(0, 1) {
                        rhs.axpy(-to_real::<T>(c[j]), &apply_a(&self.coeffs, &entry.state.velocity));
                    }
                }
                self.stats.a_solves += 1;
                solve_a(&self.coeffs, &rhs)?.scale(T::one() / to_real::<T>(c[s]))
            }
        };
        SgnState::new(eta, mom, u, t_new)
    }

    /// Advances by one step, bootstrapping with RK4 first if the history is short.
    pub fn step(&mut self) -> Result<()> {
        if self.history.len() < self.kind.steps() {
            self.bootstrap(&Bootstrap::default())?;
            return Ok(());
        }
        let next = match self.table.clone() {
            None => {
                let current = self.state().clone();
                let mut s = self.rk_step_from(&current, self.dt)?;
                s.t = self.time_at(self.steps_taken + 1);
                s
            }
            Some(table) => self.multistep_step(&table)?,
        };
        if !next.is_finite() {
            return Err(SgnError::NonFinite(format!("state after step {}", self.steps_taken + 1)));
        }
        let entry = self.entry(next)?;
        self.history.push_back(entry);
        while self.history.len() > self.kind.steps() {
            self.history.pop_front();
        }
        self.steps_taken += 1;
        self.stats.steps += 1;
        Ok(())
    }

    /// Number of whole steps from the current time to `t_final` (rounded).
    pub fn steps_to(&self, t_final: T) -> usize {
        let n = ((t_final - self.time()) / self.dt).round();
        if n > T::zero() {
            n.to_usize().unwrap_or(0)
        } else {
            0
        }
    }

    /// Steps until `t_final`, which must be a whole number of steps from the current time.
    pub fn advance_to(&mut self, t_final: T) -> Result<()> {
        let n = self.steps_to(t_final);
        let landed = self.time() + self.dt * T::from_usize_lossy(n);
        let slack = T::lit(1e-9) * (self.dt + t_final.abs());
        if (landed - t_final).abs() > slack {
            return Err(SgnError::InvalidParameter(format!(
                "t = {t_final} is not a whole number of steps of {} from t = {}",
                self.dt,
                self.time()
            )));
        }
        let target = self.steps_taken + n;
        while self.steps_taken < target {
            self.step()?;
        }
        Ok(())
    }
}

/// Largest step not exceeding `dt_max` that divides `span` evenly, with the step count.
pub fn fitted_step<T: Real>(span: T, dt_max: T) -> Result<(usize, T)> {
    if !(span > T::zero()) || !(dt_max > T::zero()) || !span.is_finite() || !dt_max.is_finite() {
        return Err(SgnError::InvalidParameter(format!("need positive span and step, got {span} and {dt_max}")));
    }
    let n = (span / dt_max - T::lit(1e-9)).ceil().max(T::one());
    let steps = n.to_usize().ok_or_else(|| SgnError::InvalidParameter("step count overflows".into()))?;
    Ok((steps, span / n))
}
