//! Closed-form solutions, bathymetries and initial data for the standard test cases.

use std::fmt;
use std::sync::Arc;

use crate::error::{Result, SgnError};
use crate::grid::{divergence, gradient, GridRef, ScalarField, VectorField};
use crate::model::{forcing_f, momentum_flux_divergence, ExternalForcing, SgnModel, SgnState};
use crate::operators::{Bathymetry, ConstraintOperator, DepthField};
use crate::scalar::Real;

/// Solitary wave `η = h₀ + a sech²(γξ)`, `ξ = x cosθ + y sinθ − ct + ξ₀`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolitaryWaveParams<T> {
    pub a: T,
    pub h0: T,
    pub theta: T,
    pub xi0: T,
    /// Period of the profile in `ξ`. `None` uses the domain length along x.
    pub xi_period: Option<T>,
}

impl<T: Real> SolitaryWaveParams<T> {
    pub fn new(a: T, h0: T) -> Result<Self> {
        if !(a > T::zero()) || !(h0 > T::zero()) {
            return Err(SgnError::InvalidParameter(format!(
                "solitary wave needs a > 0 and h0 > 0, got a = {a}, h0 = {h0}"
            )));
        }
        Ok(Self { a, h0, theta: T::zero(), xi0: T::zero(), xi_period: None })
    }

    pub fn with_xi0(mut self, xi0: T) -> Self {
        self.xi0 = xi0;
        self
    }

    pub fn with_theta(mut self, theta: T) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_period(mut self, period: T) -> Self {
        self.xi_period = Some(period);
        self
    }

    /// Speed `c = √(h₀ + a)`.
    pub fn c(&self) -> T {
        (self.h0 + self.a).sqrt()
    }

    /// Inverse width `γ = √(3a) / (2 h₀ c)`.
    pub fn gamma(&self) -> T {
        (T::lit(3.0) * self.a).sqrt() / (T::lit(2.0) * self.h0 * self.c())
    }

    fn period(&self, grid: &GridRef<T>) -> T {
        self.xi_period.unwrap_or_else(|| grid.length(0))
    }

    /// Elevation left at the periodic seam, `a sech²(γP/2)`.
    pub fn seam_tail(&self, grid: &GridRef<T>) -> T {
        let s = T::one() / (self.gamma() * self.period(grid) / T::lit(2.0)).cosh();
        self.a * s * s
    }

    /// Elevation `ζ = a sech²(γξ)` with `ξ` wrapped to the nearest periodic image.
    pub fn elevation(&self, grid: &GridRef<T>, t: T) -> ScalarField<T> {
        let p = self.period(grid);
        let (ct, st) = (self.theta.cos(), self.theta.sin());
        let (c, g, a) = (self.c(), self.gamma(), self.a);
        ScalarField::from_fn(grid, |x, y| {
            let xi = x * ct + y * st - c * t + self.xi0;
            let xi = xi - p * (xi / p).round();
            let s = T::one() / (g * xi).cosh();
            a * s * s
        })
    }

    /// Depth `h + ζ` and velocity `c ζ/(h₀ + ζ) (cosθ, sinθ)`.
    pub fn fields(&self, grid: &GridRef<T>, h: &ScalarField<T>, t: T) -> (ScalarField<T>, VectorField<T>) {
        let zeta = self.elevation(grid, t);
        let c = self.c();
        let w = zeta.map(|z| c * z / (self.h0 + z));
        let dir = [self.theta.cos(), self.theta.sin()];
        let comps = (0..grid.dim()).map(|d| w.scale(dir[d])).collect();
        (h + &zeta, VectorField::new(comps).expect("components share the grid"))
    }
}

/// Exact solitary-wave state over a flat bottom of depth `h₀`, with `U = G u`.
pub fn solitary_wave<T: Real>(params: &SolitaryWaveParams<T>, grid: &GridRef<T>, t: T) -> Result<SgnState<T>> {
    let bathy = Bathymetry::flat(grid, params.h0)?;
    let (eta, u) = params.fields(grid, bathy.h(), t);
    SgnState::from_velocity(eta, u, &bathy, t)
}

/// A frozen-coefficient linear problem `G_{η,h} u = b`.
#[derive(Clone, Debug)]
pub struct LinearProblem<T: Real> {
    pub eta: DepthField<T>,
    pub bathy: Bathymetry<T>,
    pub rhs: VectorField<T>,
}

const BUMP_WIDTH: f64 = 1.0 / 20.0;

fn gaussian_bump<T: Real>(grid: &GridRef<T>, h0: T) -> Result<Bathymetry<T>> {
    let s2 = T::lit(BUMP_WIDTH * BUMP_WIDTH);
    let half = T::lit(0.5);
    let h = ScalarField::from_fn(grid, |x, _| T::one() + h0 * (-(x - half).powi(2) / s2).exp());
    let hx = VectorField::from_fn(grid, |x, _| {
        [-T::lit(2.0) * (x - half) / s2 * h0 * (-(x - half).powi(2) / s2).exp(), T::zero()]
    });
    let hx = VectorField::new(vec![hx.component(0).clone()])?;
    Bathymetry::with_gradient(h, hx)
}

fn require_1d<T: Real>(grid: &GridRef<T>) -> Result<()> {
    if grid.dim() != 1 {
        return Err(SgnError::InvalidGrid("this test problem is one-dimensional".into()));
    }
    Ok(())
}

/// `h = 1 + h₀ exp(−(x−½)²/σ²)` with `σ = 1/20`, `η = 1 + η₀ cos²(4πx)`, `b = cos 4πx`.
pub fn test_problem_1d<T: Real>(eta0: T, h0: T, grid: &GridRef<T>) -> Result<LinearProblem<T>> {
    require_1d(grid)?;
    if eta0 <= -T::one() {
        return Err(SgnError::InvalidParameter(format!("eta0 must exceed -1, got {eta0}")));
    }
    let four_pi = T::lit(4.0) * T::PI();
    let bathy = gaussian_bump(grid, h0)?;
    let eta = DepthField::new(ScalarField::from_fn(grid, |x, _| T::one() + eta0 * (four_pi * x).cos().powi(2)))?;
    let rhs = VectorField::new(vec![ScalarField::from_fn(grid, |x, _| (four_pi * x).cos())])?;
    Ok(LinearProblem { eta, bathy, rhs })
}

/// Piecewise-constant depth: `0.1` where `|h_x|² ≤ 0.2`, `0.1 η₀` elsewhere, over
/// the bump bathymetry with `h₀ = 1`.
pub fn square_wave_problem<T: Real>(eta0: T, grid: &GridRef<T>) -> Result<LinearProblem<T>> {
    require_1d(grid)?;
    if !(eta0 > T::zero()) {
        return Err(SgnError::InvalidParameter(format!("eta0 must be positive, got {eta0}")));
    }
    let four_pi = T::lit(4.0) * T::PI();
    let bathy = gaussian_bump(grid, T::one())?;
    let low = T::lit(0.1);
    let limit = T::lit(0.2);
    let values = bathy
        .grad_h()
        .component(0)
        .values()
        .iter()
        .map(|&hx| if hx * hx <= limit { low } else { low * eta0 })
        .collect();
    let eta = DepthField::new(ScalarField::new(grid, values)?)?;
    let rhs = VectorField::new(vec![ScalarField::from_fn(grid, |x, _| (four_pi * x).cos())])?;
    Ok(LinearProblem { eta, bathy, rhs })
}

/// Centered periodic coordinate in `[−L/2, L/2)`.
fn centered<T: Real>(x: T, length: T) -> T {
    x - length * (x / length).round()
}

/// Elliptical `cos²` bump `h = 1 − ½cos²(πr/(2r₀))` for `r = √(a²x² + b²y²) ≤ r₀ = ½`,
/// `η = h + exp(cos 2πx) + ¼ sin 4πy`, right-hand side `(cos 4πx, cos 4πy)`.
pub fn elliptical_bump_2d<T: Real>(a_axis: T, b_axis: T, grid: &GridRef<T>) -> Result<LinearProblem<T>> {
    if grid.dim() != 2 {
        return Err(SgnError::InvalidGrid("the elliptical bump is two-dimensional".into()));
    }
    if !(a_axis > T::zero()) || !(b_axis > T::zero()) {
        return Err(SgnError::InvalidParameter("ellipse axes must be positive".into()));
    }
    let r0 = T::lit(0.5);
    let pi = T::PI();
    let half = T::lit(0.5);
    let (lx, ly) = (grid.length(0), grid.length(1));
    let radius = |x: T, y: T| {
        let (x, y) = (centered(x, lx), centered(y, ly));
        ((a_axis * x).powi(2) + (b_axis * y).powi(2)).sqrt()
    };
    let h = ScalarField::from_fn(grid, |x, y| {
        let r = radius(x, y);
        if r <= r0 {
            T::one() - half * (pi * r / (T::lit(2.0) * r0)).cos().powi(2)
        } else {
            T::one()
        }
    });
    let grad = VectorField::from_fn(grid, |x, y| {
        let r = radius(x, y);
        if r >= r0 || r == T::zero() {
            return [T::zero(), T::zero()];
        }
        // dh/dr = (π/(4r₀)) sin(πr/r₀)
        let dhdr = pi / (T::lit(4.0) * r0) * (pi * r / r0).sin();
        let (cx, cy) = (centered(x, lx), centered(y, ly));
        [dhdr * a_axis * a_axis * cx / r, dhdr * b_axis * b_axis * cy / r]
    });
    let bathy = Bathymetry::with_gradient(h, grad)?;
    let two_pi = T::lit(2.0) * pi;
    let four_pi = T::lit(4.0) * pi;
    let eta = bathy.h().zip_map(
        &ScalarField::from_fn(grid, |x, y| (two_pi * x).cos().exp() + T::lit(0.25) * (four_pi * y).sin()),
        |a, b| a + b,
    );
    let eta = DepthField::new(eta)?;
    let rhs = VectorField::from_fn(grid, |x, y| [(four_pi * x).cos(), (four_pi * y).cos()]);
    Ok(LinearProblem { eta, bathy, rhs })
}

type ExactFn<T> = dyn Fn(T) -> Result<SgnState<T>> + Send + Sync;

/// A complete initial-value problem.
#[derive(Clone)]
pub struct ScenarioSpec<T: Real> {
    pub name: String,
    pub grid: GridRef<T>,
    pub bathy: Bathymetry<T>,
    pub initial: SgnState<T>,
    pub exact: Option<Arc<ExactFn<T>>>,
    pub forcing: Option<ExternalForcing<T>>,
    pub final_time: T,
    /// `Δt = cfl · Δx`.
    pub cfl: T,
    pub snapshot_times: Vec<T>,
}

impl<T: Real> fmt::Debug for ScenarioSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScenarioSpec")
            .field("name", &self.name)
            .field("grid", &self.grid)
            .field("exact", &self.exact.is_some())
            .field("forcing", &self.forcing.is_some())
            .field("final_time", &self.final_time)
            .field("cfl", &self.cfl)
            .field("snapshot_times", &self.snapshot_times)
            .finish()
    }
}

impl<T: Real> ScenarioSpec<T> {
    pub fn model(&self) -> SgnModel<T> {
        let model = SgnModel::new(self.bathy.clone());
        match &self.forcing {
            Some(f) => model.with_forcing(f.clone()),
            None => model,
        }
    }

    /// Smallest grid spacing.
    pub fn dx(&self) -> T {
        (0..self.grid.dim()).map(|a| self.grid.spacing(a)).fold(T::infinity(), T::min)
    }

    pub fn dt(&self) -> T {
        self.cfl * self.dx()
    }

    pub fn exact_at(&self, t: T) -> Option<Result<SgnState<T>>> {
        self.exact.as_ref().map(|f| f(t))
    }
}

/// Solitary wave over a flat bottom, exact for all time.
pub fn solitary_scenario<T: Real>(
    params: SolitaryWaveParams<T>,
    grid: &GridRef<T>,
    final_time: T,
) -> Result<ScenarioSpec<T>> {
    let bathy = Bathymetry::flat(grid, params.h0)?;
    let initial = solitary_wave(&params, grid, T::zero())?;
    let g = grid.clone();
    let exact: Arc<ExactFn<T>> = Arc::new(move |t| solitary_wave(&params, &g, t));
    Ok(ScenarioSpec {
        name: "solitary".into(),
        grid: grid.clone(),
        bathy,
        initial,
        exact: Some(exact),
        forcing: None,
        final_time,
        cfl: T::lit(0.2),
        snapshot_times: vec![T::zero(), final_time],
    })
}

/// Exact fields of a manufactured solution and their time derivatives.
struct ManufacturedFields<T: Real> {
    eta: ScalarField<T>,
    eta_t: ScalarField<T>,
    u: VectorField<T>,
    u_t: VectorField<T>,
}

fn manufactured_fields<T: Real>(grid: &GridRef<T>, t: T) -> ManufacturedFields<T> {
    let two_pi = T::lit(2.0) * T::PI();
    let w = T::lit(10.0);
    let (s, c) = ((w * t).sin(), (w * t).cos());
    let col = |f: ScalarField<T>| VectorField::new(vec![f]).expect("one component");
    ManufacturedFields {
        eta: ScalarField::from_fn(grid, |x, _| T::lit(2.0) + (two_pi * x).sin() * s),
        eta_t: ScalarField::from_fn(grid, |x, _| w * (two_pi * x).sin() * c),
        u: col(ScalarField::from_fn(grid, |x, _| (two_pi * x).cos() * c)),
        u_t: col(ScalarField::from_fn(grid, |x, _| -w * (two_pi * x).cos() * s)),
    }
}

fn manufactured_forcing<T: Real>(bathy: &Bathymetry<T>, t: T) -> Result<(ScalarField<T>, VectorField<T>)> {
    let m = manufactured_fields(bathy.grid(), t);
    let f_eta = &m.eta_t + &divergence(&m.u.scale_by(&m.eta));
    let op = ConstraintOperator::new(&m.eta, bathy)?;
    // ∂t(G u) = G u_t + (∂G/∂η)[η_t] u
    let mut f_mom = op.apply(&m.u_t);
    f_mom.axpy(T::one(), &op.apply_eta_derivative(&m.eta_t, &m.u));
    let zeta = &m.eta - bathy.h();
    f_mom.axpy(T::one(), &gradient(&zeta).scale_by(&m.eta));
    f_mom.axpy(T::one(), &momentum_flux_divergence(&m.eta, &m.u));
    f_mom.axpy(-T::one(), &forcing_f(&m.eta, &m.u, bathy)?);
    Ok((f_eta, f_mom))
}

/// `h = 2 + sin 2πx`, `η* = 2 + sin 2πx sin 10t`, `u* = cos 2πx cos 10t` on the unit
/// interval, with the external forcing that makes them an exact solution.
pub fn manufactured<T: Real>(grid: &GridRef<T>) -> Result<ScenarioSpec<T>> {
    require_1d(grid)?;
    let two_pi = T::lit(2.0) * T::PI();
    let h = ScalarField::from_fn(grid, |x, _| T::lit(2.0) + (two_pi * x).sin());
    let hx = VectorField::new(vec![ScalarField::from_fn(grid, |x, _| two_pi * (two_pi * x).cos())])?;
    let bathy = Bathymetry::with_gradient(h, hx)?;
    let exact_bathy = bathy.clone();
    let exact: Arc<ExactFn<T>> = Arc::new(move |t| {
        let m = manufactured_fields(exact_bathy.grid(), t);
        SgnState::from_velocity(m.eta, m.u, &exact_bathy, t)
    });
    let forcing_bathy = bathy.clone();
    let forcing = ExternalForcing::new(move |t| {
        manufactured_forcing(&forcing_bathy, t).expect("manufactured fields share one grid")
    });
    let initial = exact(T::zero())?;
    Ok(ScenarioSpec {
        name: "manufactured".into(),
        grid: grid.clone(),
        bathy,
        initial,
        exact: Some(exact),
        forcing: Some(forcing),
        final_time: T::one(),
        cfl: T::lit(0.2),
        snapshot_times: vec![T::zero(), T::one()],
    })
}

/// Layout of the shelf run. Positions are absolute coordinates in `[0, L)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShelfParams<T> {
    /// Rise of the bottom over the shelf.
    pub height: T,
    /// Depth away from the shelf.
    pub depth: T,
    /// Solitary-wave amplitude.
    pub amplitude: T,
    pub crest: T,
    pub shelf_start: T,
    pub shelf_end: T,
    /// Support width of the smoothing kernel.
    pub mollifier_width: T,
}

impl<T: Real> ShelfParams<T> {
    /// Defaults for a domain of length `length`, scaled from an `80π` layout.
    pub fn new(height: T, length: T) -> Self {
        let s = length / (T::lit(80.0) * T::PI());
        Self {
            height,
            depth: T::one(),
            amplitude: T::lit(0.1),
            crest: T::lit(60.0) * s,
            shelf_start: T::lit(100.0) * s,
            shelf_end: T::lit(220.0) * s,
            mollifier_width: length / T::lit(100.0),
        }
    }
}

/// Smooth compactly supported bump `exp(−1/(1−s²))` on `|s| < 1`.
fn bump<T: Real>(s: T) -> T {
    if s.abs() >= T::one() {
        T::zero()
    } else {
        (-T::one() / (T::one() - s * s)).exp()
    }
}

/// Smoothed unit step: the normalized integral of the bump of half-width `hw` up to `s`.
struct SmoothStep<T> {
    hw: T,
    norm: T,
}

impl<T: Real> SmoothStep<T> {
    const PANELS: usize = 512;

    fn new(width: T) -> Self {
        let hw = width / T::lit(2.0);
        let mut st = Self { hw, norm: T::one() };
        st.norm = st.integral(hw);
        st
    }

    fn density(&self, s: T) -> T {
        bump(s / self.hw) / self.norm
    }

    /// Composite Simpson rule from `−hw` to `s`.
    fn integral(&self, s: T) -> T {
        let lo = -self.hw;
        let s = s.min(self.hw);
        if s <= lo {
            return T::zero();
        }
        let n = Self::PANELS;
        let h = (s - lo) / T::from_usize_lossy(n);
        let mut acc = self.density(lo) + self.density(s);
        for i in 1..n {
            let w = if i % 2 == 1 { T::lit(4.0) } else { T::lit(2.0) };
            acc += w * self.density(lo + h * T::from_usize_lossy(i));
        }
        acc * h / T::lit(3.0)
    }

    fn value(&self, s: T) -> T {
        if s <= -self.hw {
            T::zero()
        } else if s >= self.hw {
            T::one()
        } else {
            self.integral(s)
        }
    }
}

/// Solitary wave approaching a smoothed underwater shelf.
pub fn shelf_1d<T: Real>(params: ShelfParams<T>, grid: &GridRef<T>) -> Result<ScenarioSpec<T>> {
    require_1d(grid)?;
    let p = params;
    if p.height < T::zero() || p.height >= p.depth {
        return Err(SgnError::InvalidParameter(format!("shelf height must lie in [0, {}), got {}", p.depth, p.height)));
    }
    let length = grid.length(0);
    let hw = p.mollifier_width / T::lit(2.0);
    if !(p.mollifier_width > T::zero())
        || p.shelf_start - hw < T::zero()
        || p.shelf_end + hw > length
        || p.shelf_start >= p.shelf_end
    {
        return Err(SgnError::InvalidParameter("shelf ramps must fit inside the domain".into()));
    }
    let step = SmoothStep::new(p.mollifier_width);
    let h = ScalarField::from_fn(grid, |x, _| {
        p.depth - p.height * (step.value(x - p.shelf_start) - step.value(x - p.shelf_end))
    });
    let hx = ScalarField::from_fn(grid, |x, _| {
        -p.height * (step.density(x - p.shelf_start) - step.density(x - p.shelf_end))
    });
    let bathy = Bathymetry::with_gradient(h, VectorField::new(vec![hx])?)?;
    let wave = SolitaryWaveParams::new(p.amplitude, p.depth)?.with_xi0(-p.crest);
    let (eta, u) = wave.fields(grid, bathy.h(), T::zero());
    let initial = SgnState::from_velocity(eta, u, &bathy, T::zero())?;
    let exact: Option<Arc<ExactFn<T>>> = if p.height == T::zero() {
        let g = grid.clone();
        Some(Arc::new(move |t| solitary_wave(&wave, &g, t)))
    } else {
        None
    };
    Ok(ScenarioSpec {
        name: "shelf".into(),
        grid: grid.clone(),
        bathy,
        initial,
        exact,
        forcing: None,
        final_time: T::lit(125.0),
        cfl: T::lit(0.5),
        snapshot_times: [0.0, 25.0, 75.0, 125.0].iter().map(|&t| T::lit(t)).collect(),
    })
}

/// Solitary wave at 45° crossing a Gaussian barrier: `h = 1.5a − b`, with
/// `b = 0.75a exp(−r²/0.2²)` centered at `(½, ½)` and summed over periodic images.
pub fn circular_barrier_2d<T: Real>(a: T, grid: &GridRef<T>) -> Result<ScenarioSpec<T>> {
    if grid.dim() != 2 {
        return Err(SgnError::InvalidGrid("the barrier problem is two-dimensional".into()));
    }
    let (lx, ly) = (grid.length(0), grid.length(1));
    if lx != ly {
        return Err(SgnError::InvalidGrid("the barrier problem needs a square domain".into()));
    }
    let h0 = T::lit(1.5) * a;
    let amp = T::lit(0.75) * a;
    let w2 = T::lit(0.04);
    let centre = T::lit(0.5);
    let images = |x: T, y: T| {
        let mut b = T::zero();
        let mut bx = T::zero();
        let mut by = T::zero();
        for i in -1i32..=1 {
            for j in -1i32..=1 {
                let dx = x - centre + lx * T::lit(i as f64);
                let dy = y - centre + ly * T::lit(j as f64);
                let g = amp * (-(dx * dx + dy * dy) / w2).exp();
                b += g;
                bx += -T::lit(2.0) * dx / w2 * g;
                by += -T::lit(2.0) * dy / w2 * g;
            }
        }
        (b, bx, by)
    };
    let h = ScalarField::from_fn(grid, |x, y| h0 - images(x, y).0);
    let grad = VectorField::from_fn(grid, |x, y| {
        let (_, bx, by) = images(x, y);
        [-bx, -by]
    });
    let bathy = Bathymetry::with_gradient(h, grad)?;
    let root2 = T::lit(2.0).sqrt();
    // Crest on x + y = ½; along the diagonal the profile repeats every L/√2.
    let wave =
        SolitaryWaveParams::new(a, h0)?.with_theta(T::FRAC_PI_4()).with_xi0(-centre / root2).with_period(lx / root2);
    let (eta, u) = wave.fields(grid, bathy.h(), T::zero());
    let initial = SgnState::from_velocity(eta, u, &bathy, T::zero())?;
    Ok(ScenarioSpec {
        name: "barrier".into(),
        grid: grid.clone(),
        bathy,
        initial,
        exact: None,
        forcing: None,
        final_time: T::lit(4.0),
        cfl: T::one() / T::lit(3.0),
        snapshot_times: [0.0, 0.8, 1.6, 2.4, 3.2, 4.0].iter().map(|&t| T::lit(t)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use crate::model::constraint_residual;

    #[test]
    fn solitary_constants() {
        let p = SolitaryWaveParams::new(1.0, 1.0).unwrap();
        assert!((p.c() - 2f64.sqrt()).abs() < 1e-15);
        assert!((p.gamma() - 3f64.sqrt() / (2.0 * 2f64.sqrt())).abs() < 1e-15);
        assert!((p.gamma() - 0.6124).abs() < 1e-4);
        assert!(SolitaryWaveParams::new(0.0, 1.0).is_err());
        assert!(SolitaryWaveParams::new(1.0, -1.0).is_err());
    }

    #[test]
    fn solitary_peak_and_constraint() {
        let g = PeriodicGrid::<f64>::new_1d(256, 60.0).unwrap();
        let p = SolitaryWaveParams::new(0.2, 1.0).unwrap().with_xi0(-30.0);
        let s = solitary_wave(&p, &g, 0.0).unwrap();
        assert!((s.eta.max() - 1.2).abs() < 1e-15);
        let bathy = Bathymetry::flat(&g, 1.0).unwrap();
        assert!(constraint_residual(&s, &bathy).unwrap() < 1e-14);
    }

    #[test]
    fn test_problem_ratios() {
        let g = PeriodicGrid::<f64>::new_1d(512, 1.0).unwrap();
        let pr = test_problem_1d(1.0, 1.0, &g).unwrap();
        assert!((pr.eta.eta_max() / pr.eta.eta_min() - 2.0).abs() < 1e-12);
        assert!(test_problem_1d(-1.0, 1.0, &g).is_err());
        let pr = test_problem_1d(3.0, 0.0, &g).unwrap();
        assert!((pr.eta.eta_max() / pr.eta.eta_min() - 4.0).abs() < 1e-12);
        assert!(pr.bathy.is_flat());
    }

    #[test]
    fn square_wave_takes_two_values() {
        let g = PeriodicGrid::<f64>::new_1d(256, 1.0).unwrap();
        let pr = square_wave_problem(0.25, &g).unwrap();
        assert_eq!(pr.eta.eta_max(), 0.1);
        assert!((pr.eta.eta_min() - 0.025).abs() < 1e-15);
        assert!(pr.eta.eta().values().iter().all(|&v| v == 0.1 || v == 0.1 * 0.25));
    }

    #[test]
    fn elliptical_bump_shape() {
        let g = PeriodicGrid::<f64>::new_2d(32, 32, 1.0, 1.0).unwrap();
        let pr = elliptical_bump_2d(1.0, 1.0, &g).unwrap();
        // Grid point 0 is the bump centre.
        assert_eq!(pr.bathy.h().values()[0], 0.5);
        assert_eq!(pr.bathy.grad_h().component(0).values()[0], 0.0);
        assert!(pr.bathy.h().min() >= 0.5);
        assert!(elliptical_bump_2d(1.0, 1.0, &PeriodicGrid::<f64>::new_1d(32, 1.0).unwrap()).is_err());
    }

    #[test]
    fn manufactured_initial_data() {
        let g = PeriodicGrid::<f64>::new_1d(64, 1.0).unwrap();
        let sc = manufactured(&g).unwrap();
        assert!(sc.initial.eta.values().iter().all(|&v| (v - 2.0).abs() < 1e-15));
        let tau = std::f64::consts::TAU;
        for (i, v) in sc.initial.velocity.component(0).values().iter().enumerate() {
            assert!((v - (tau * i as f64 / 64.0).cos()).abs() < 1e-14);
        }
        assert_eq!(sc.final_time, 1.0);
    }

    #[test]
    fn smooth_step_is_monotone_and_normalized() {
        let st = SmoothStep::new(2.0f64);
        assert_eq!(st.value(-1.0), 0.0);
        assert_eq!(st.value(1.0), 1.0);
        assert!((st.value(0.0) - 0.5).abs() < 1e-12);
        let mut prev = 0.0;
        for i in 0..=100 {
            let v = st.value(-1.0 + 0.02 * i as f64);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
        assert!((st.value(1.0 - 1e-9) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn shelf_validation_and_flat_limit() {
        let g = PeriodicGrid::<f64>::new_1d(512, 80.0 * std::f64::consts::PI).unwrap();
        assert!(shelf_1d(ShelfParams::new(1.0, g.length(0)), &g).is_err());
        let flat = shelf_1d(ShelfParams::new(0.0, g.length(0)), &g).unwrap();
        assert!(flat.bathy.is_flat() && flat.exact.is_some());
        let sh = shelf_1d(ShelfParams::new(0.5, g.length(0)), &g).unwrap();
        assert!((sh.bathy.h().min() - 0.5).abs() < 1e-12);
        assert!((sh.bathy.h().max() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn barrier_bathymetry() {
        let g = PeriodicGrid::<f64>::new_2d(64, 64, 1.0, 1.0).unwrap();
        let sc = circular_barrier_2d(0.01, &g).unwrap();
        let h = sc.bathy.h();
        assert!(h.min() > 0.0 && h.max() <= 0.015 + 1e-15);
        // Peak of the barrier sits at grid point (32, 32).
        assert!((h.values()[32 * 64 + 32] - (0.015 - 0.0075)).abs() < 1e-6);
        assert!(constraint_residual(&sc.initial, &sc.bathy).unwrap() < 1e-12);
    }
}
