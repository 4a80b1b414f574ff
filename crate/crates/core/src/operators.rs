//! The constraint operator `G_{η,h}`, its constant-coefficient preconditioner
//! `A = σ I - α ∇(∇·)`, and the pointwise coefficient matrices behind the
//! conditioning bound.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex;

use crate::error::{Result, SgnError};
use crate::grid::{divergence, gradient, GridRef, ScalarField, VectorField};
use crate::scalar::Real;

/// `λ₊ = (4 + √13) / 6`, the larger eigenvalue of `[[1, ½], [½, ⅓]]`.
pub fn lambda_plus<T: Real>() -> T {
    (T::lit(4.0) + T::lit(13.0).sqrt()) / T::lit(6.0)
}

/// `λ₋ = (4 - √13) / 6`, the smaller eigenvalue of `[[1, ½], [½, ⅓]]`.
pub fn lambda_minus<T: Real>() -> T {
    (T::lit(4.0) - T::lit(13.0).sqrt()) / T::lit(6.0)
}

/// Still-water depth `h` with its gradient and maximum slope.
#[derive(Clone, Debug)]
pub struct Bathymetry<T: Real> {
    h: ScalarField<T>,
    grad_h: VectorField<T>,
    grad_h_max: T,
}

impl<T: Real> Bathymetry<T> {
    /// Computes the gradient spectrally. Only valid for smooth `h`.
    pub fn from_depth(h: ScalarField<T>) -> Result<Self> {
        let grad_h = gradient(&h);
        Self::with_gradient(h, grad_h)
    }

    /// Uses a caller-supplied (e.g. analytic) gradient.
    pub fn with_gradient(h: ScalarField<T>, grad_h: VectorField<T>) -> Result<Self> {
        if !grad_h.grid().same_as(h.grid()) || grad_h.dim() != h.grid().dim() {
            return Err(SgnError::GridMismatch);
        }
        let min = h.min();
        if !(min > T::zero()) {
            return Err(SgnError::NonPositiveDepth { min: min.as_f64() });
        }
        if !grad_h.is_finite() {
            return Err(SgnError::NonFinite("bathymetry gradient".into()));
        }
        let grad_h_max = grad_h.pointwise_dot(&grad_h).max().sqrt();
        Ok(Self { h, grad_h, grad_h_max })
    }

    pub fn flat(grid: &GridRef<T>, depth: T) -> Result<Self> {
        Self::with_gradient(ScalarField::constant(grid, depth), VectorField::zeros(grid))
    }

    pub fn h(&self) -> &ScalarField<T> {
        &self.h
    }

    pub fn grad_h(&self) -> &VectorField<T> {
        &self.grad_h
    }

    /// `max_x |∇h(x)|` over grid samples.
    pub fn grad_h_max(&self) -> T {
        self.grad_h_max
    }

    pub fn is_flat(&self) -> bool {
        self.grad_h_max == T::zero()
    }

    pub fn grid(&self) -> &GridRef<T> {
        self.h.grid()
    }
}

/// Total depth `η` together with its extrema over the grid.
#[derive(Clone, Debug)]
pub struct DepthField<T: Real> {
    eta: ScalarField<T>,
    eta_min: T,
    eta_max: T,
}

impl<T: Real> DepthField<T> {
    /// Fails unless `η > 0` at every grid point.
    pub fn new(eta: ScalarField<T>) -> Result<Self> {
        let eta_min = eta.min();
        let eta_max = eta.max();
        if !(eta_min > T::zero()) {
            return Err(SgnError::NonPositiveDepth { min: eta_min.as_f64() });
        }
        Ok(Self { eta, eta_min, eta_max })
    }

    pub fn eta(&self) -> &ScalarField<T> {
        &self.eta
    }

    pub fn eta_min(&self) -> T {
        self.eta_min
    }

    pub fn eta_max(&self) -> T {
        self.eta_max
    }

    pub fn grid(&self) -> &GridRef<T> {
        self.eta.grid()
    }
}

/// Which coefficient formula produced a [`PrecondCoeffs`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CoeffVariant {
    Flat,
    Variable,
    Simplified,
    Custom,
}

impl CoeffVariant {
    pub fn name(self) -> &'static str {
        match self {
            CoeffVariant::Flat => "flat",
            CoeffVariant::Variable => "variable",
            CoeffVariant::Simplified => "simplified",
            CoeffVariant::Custom => "custom",
        }
    }
}

/// Coefficients `(σ, α)` of the preconditioner and the conditioning bound they certify.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrecondCoeffs<T> {
    pub sigma: T,
    pub alpha: T,
    pub kappa_ub: T,
    pub variant: CoeffVariant,
}

impl<T: Real> PrecondCoeffs<T> {
    /// Arbitrary positive coefficients. No conditioning bound is certified.
    pub fn custom(sigma: T, alpha: T) -> Result<Self> {
        if !(sigma > T::zero()) || alpha < T::zero() {
            return Err(SgnError::InvalidParameter(format!("need sigma > 0 and alpha >= 0, got ({sigma}, {alpha})")));
        }
        Ok(Self { sigma, alpha, kappa_ub: T::infinity(), variant: CoeffVariant::Custom })
    }

    /// Multiplies `σ` and `α` by `factor`. The ratio bound is unchanged while the
    /// generalized eigenvalues move to `[1/(factor κ_ub), 1/factor]`.
    pub fn scaled(self, factor: T) -> Self {
        Self { sigma: self.sigma * factor, alpha: self.alpha * factor, ..self }
    }

    /// Convergence factor `(√κ - 1)/(√κ + 1)` of the CG error bound.
    pub fn cg_rate(&self) -> T {
        let s = self.kappa_ub.sqrt();
        (s - T::one()) / (s + T::one())
    }
}

/// `σ = η_max`, `α = η_max³/3`, `κ_ub = (η_max/η_min)³`.
pub fn coeffs_flat<T: Real>(eta: &DepthField<T>) -> PrecondCoeffs<T> {
    let ratio = eta.eta_max / eta.eta_min;
    PrecondCoeffs {
        sigma: eta.eta_max,
        alpha: eta.eta_max.powi(3) / T::lit(3.0),
        kappa_ub: ratio.powi(3),
        variant: CoeffVariant::Flat,
    }
}

/// Variable-bathymetry coefficients, maximizing `η(1 + λ₊|∇h|²)` pointwise.
pub fn coeffs_variable<T: Real>(eta: &DepthField<T>, bathy: &Bathymetry<T>) -> PrecondCoeffs<T> {
    let lp = lambda_plus::<T>();
    let lm = lambda_minus::<T>();
    let slope2 = bathy.grad_h.pointwise_dot(&bathy.grad_h);
    let sigma = eta
        .eta
        .values()
        .iter()
        .zip(slope2.values())
        .fold(T::neg_infinity(), |acc, (&e, &s)| acc.max(e * (T::one() + lp * s)));
    let ratio = eta.eta_max / eta.eta_min;
    PrecondCoeffs {
        sigma,
        alpha: lp * eta.eta_max.powi(3),
        kappa_ub: (sigma / eta.eta_min).max(lp / lm * ratio.powi(3)),
        variant: CoeffVariant::Variable,
    }
}

/// Variable-bathymetry coefficients from the separate maxima `η_max` and `|∇h|_max`.
pub fn coeffs_simplified<T: Real>(eta: &DepthField<T>, bathy: &Bathymetry<T>) -> PrecondCoeffs<T> {
    let lp = lambda_plus::<T>();
    let lm = lambda_minus::<T>();
    let slope_factor = T::one() + lp * bathy.grad_h_max * bathy.grad_h_max;
    let ratio = eta.eta_max / eta.eta_min;
    PrecondCoeffs {
        sigma: eta.eta_max * slope_factor,
        alpha: lp * eta.eta_max.powi(3),
        kappa_ub: (ratio * slope_factor).max(lp / lm * ratio.powi(3)),
        variant: CoeffVariant::Simplified,
    }
}

/// Flat formula when the bottom is flat, variable formula otherwise.
pub fn coeffs_auto<T: Real>(eta: &DepthField<T>, bathy: &Bathymetry<T>) -> PrecondCoeffs<T> {
    if bathy.is_flat() {
        coeffs_flat(eta)
    } else {
        coeffs_variable(eta, bathy)
    }
}

/// Coefficients for an explicitly chosen variant. `Custom` is rejected.
pub fn coeffs_for<T: Real>(
    variant: CoeffVariant,
    eta: &DepthField<T>,
    bathy: &Bathymetry<T>,
) -> Result<PrecondCoeffs<T>> {
    match variant {
        CoeffVariant::Flat => Ok(coeffs_flat(eta)),
        CoeffVariant::Variable => Ok(coeffs_variable(eta, bathy)),
        CoeffVariant::Simplified => Ok(coeffs_simplified(eta, bathy)),
        CoeffVariant::Custom => Err(SgnError::InvalidParameter("custom coefficients have no formula".into())),
    }
}

/// Matrix-free `G_{η,h}` with its variable coefficients precomputed.
///
/// `G u = ηu − ∇(⅓η³ ∇·u) − ∇(½η² ∇h·u) + ½η² ∇h (∇·u) + η ∇h (∇h·u)`
#[derive(Clone, Debug)]
pub struct ConstraintOperator<T: Real> {
    eta: ScalarField<T>,
    third_eta3: ScalarField<T>,
    half_eta2: ScalarField<T>,
    grad_h: VectorField<T>,
    half_eta2_grad_h: VectorField<T>,
    eta_grad_h: VectorField<T>,
    flat: bool,
}

impl<T: Real> ConstraintOperator<T> {
    pub fn new(eta: &ScalarField<T>, bathy: &Bathymetry<T>) -> Result<Self> {
        if !eta.grid().same_as(bathy.grid()) {
            return Err(SgnError::GridMismatch);
        }
        let third = T::one() / T::lit(3.0);
        let half = T::lit(0.5);
        let half_eta2 = eta.map(|e| half * e * e);
        Ok(Self {
            eta: eta.clone(),
            third_eta3: eta.map(|e| third * e * e * e),
            half_eta2_grad_h: bathy.grad_h.scale_by(&half_eta2),
            eta_grad_h: bathy.grad_h.scale_by(eta),
            half_eta2,
            grad_h: bathy.grad_h.clone(),
            flat: bathy.is_flat(),
        })
    }

    pub fn from_depth(eta: &DepthField<T>, bathy: &Bathymetry<T>) -> Result<Self> {
        Self::new(&eta.eta, bathy)
    }

    pub fn grid(&self) -> &GridRef<T> {
        self.eta.grid()
    }

    pub fn apply(&self, u: &VectorField<T>) -> VectorField<T> {
        let div_u = divergence(u);
        if self.flat {
            let s = &self.third_eta3 * &div_u;
            return &u.scale_by(&self.eta) - &gradient(&s);
        }
        let gh_u = self.grad_h.pointwise_dot(u);
        let s = &(&self.third_eta3 * &div_u) + &(&self.half_eta2 * &gh_u);
        let mut out = &u.scale_by(&self.eta) - &gradient(&s);
        for c in 0..out.dim() {
            let extra =
                &(&self.half_eta2_grad_h.components()[c] * &div_u) + &(&self.eta_grad_h.components()[c] * &gh_u);
            out.component_mut(c).axpy(T::one(), &extra);
        }
        out
    }

    pub fn apply_checked(&self, u: &VectorField<T>) -> Result<VectorField<T>> {
        if !u.grid().same_as(self.grid()) || u.dim() != self.grid().dim() {
            return Err(SgnError::GridMismatch);
        }
        Ok(self.apply(u))
    }

    /// Directional derivative of `G_{η,h} u` with respect to `η` along `eta_dot`.
    pub fn apply_eta_derivative(&self, eta_dot: &ScalarField<T>, u: &VectorField<T>) -> VectorField<T> {
        let div_u = divergence(u);
        let eta2_dot = &(&self.eta * &self.eta) * eta_dot;
        let eta_eta_dot = &self.eta * eta_dot;
        let gh_u = self.grad_h.pointwise_dot(u);
        let s = &(&eta2_dot * &div_u) + &(&eta_eta_dot * &gh_u);
        let mut out = &u.scale_by(eta_dot) - &gradient(&s);
        if !self.flat {
            for c in 0..out.dim() {
                let gh = &self.grad_h.components()[c];
                let extra = &(&(gh * &eta_eta_dot) * &div_u) + &(&(gh * eta_dot) * &gh_u);
                out.component_mut(c).axpy(T::one(), &extra);
            }
        }
        out
    }
}

/// Applies `G_{η,h}` to `u`.
pub fn apply_g<T: Real>(eta: &DepthField<T>, bathy: &Bathymetry<T>, u: &VectorField<T>) -> Result<VectorField<T>> {
    ConstraintOperator::from_depth(eta, bathy)?.apply_checked(u)
}

#[allow(clippy::needless_range_loop)]
fn spectral_a<T: Real>(sigma: T, alpha: T, v: &VectorField<T>, invert: bool) -> VectorField<T> {
    let grid = v.grid();
    let dim = v.dim();
    let mut specs: Vec<Vec<Complex<T>>> = v.components().iter().map(|c| grid.forward(c.values())).collect();
    for i in 0..grid.points() {
        let k = grid.wavevector(i);
        let mut kb = Complex::new(T::zero(), T::zero());
        let mut k2 = T::zero();
        for d in 0..dim {
            kb += specs[d][i] * k[d];
            k2 += k[d] * k[d];
        }
        for d in 0..dim {
            let b = specs[d][i];
            specs[d][i] = if invert {
                // (σI + α k kᵀ)⁻¹ = (I − α k kᵀ/(σ + α|k|²)) / σ
                (b - kb * (alpha * k[d] / (sigma + alpha * k2))) / sigma
            } else {
                b * sigma + kb * (alpha * k[d])
            };
        }
    }
    let comps = specs.into_iter().map(|s| ScalarField::from_raw(grid, grid.inverse_real(s))).collect();
    VectorField::from_raw(comps)
}

/// `A u = σ u − α ∇(∇·u)`, applied spectrally.
pub fn apply_a<T: Real>(coeffs: &PrecondCoeffs<T>, u: &VectorField<T>) -> VectorField<T> {
    spectral_a(coeffs.sigma, coeffs.alpha, u, false)
}

/// Exact inverse of [`apply_a`] by Fourier diagonalization.
pub fn solve_a<T: Real>(coeffs: &PrecondCoeffs<T>, b: &VectorField<T>) -> Result<VectorField<T>> {
    if !(coeffs.sigma > T::zero()) || coeffs.alpha < T::zero() {
        return Err(SgnError::InvalidParameter(format!(
            "cannot invert A with sigma = {}, alpha = {}",
            coeffs.sigma, coeffs.alpha
        )));
    }
    Ok(spectral_a(coeffs.sigma, coeffs.alpha, b, true))
}

/// The `(d+1)×(d+1)` coefficient matrices `M(x)` of the bilinear form of `G`.
#[derive(Clone, Debug)]
pub struct PointwiseM<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> PointwiseM<T> {
    pub fn size(&self) -> usize {
        self.dim + 1
    }

    pub fn len(&self) -> usize {
        self.data.len() / (self.size() * self.size())
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row-major entries of `M` at grid point `i`.
    pub fn at(&self, i: usize) -> &[T] {
        let m = self.size() * self.size();
        &self.data[i * m..(i + 1) * m]
    }

    pub fn matrix_f64(&self, i: usize) -> DMatrix<f64> {
        let s = self.size();
        DMatrix::from_row_iterator(s, s, self.at(i).iter().map(|v| v.as_f64()))
    }
}

/// `M(x) = η [[I + ∇h∇hᵀ, ½η∇h], [½η∇hᵀ, ⅓η²]]` at every grid point.
pub fn pointwise_m<T: Real>(eta: &DepthField<T>, bathy: &Bathymetry<T>) -> PointwiseM<T> {
    let dim = eta.grid().dim();
    let s = dim + 1;
    let half = T::lit(0.5);
    let third = T::one() / T::lit(3.0);
    let mut data = Vec::with_capacity(eta.grid().points() * s * s);
    for (i, &e) in eta.eta.values().iter().enumerate() {
        let g: Vec<T> = (0..dim).map(|d| bathy.grad_h.component(d).values()[i]).collect();
        for r in 0..s {
            for c in 0..s {
                let v = match (r < dim, c < dim) {
                    (true, true) => {
                        let id = if r == c { T::one() } else { T::zero() };
                        e * (id + g[r] * g[c])
                    }
                    (true, false) => half * e * e * g[r],
                    (false, true) => half * e * e * g[c],
                    (false, false) => third * e * e * e,
                };
                data.push(v);
            }
        }
    }
    PointwiseM { dim, data }
}

/// Outer polyhedral lower bound on the best achievable constant-coefficient bound:
/// `Γ = max{ max_x η(1+|∇h|²)/η_min, (η_max/η_min)³ }`.
pub fn outer_gamma<T: Real>(eta: &DepthField<T>, bathy: &Bathymetry<T>) -> T {
    let slope2 = bathy.grad_h.pointwise_dot(&bathy.grad_h);
    let peak = eta
        .eta
        .values()
        .iter()
        .zip(slope2.values())
        .fold(T::neg_infinity(), |acc, (&e, &s)| acc.max(e * (T::one() + s)));
    (peak / eta.eta_min).max((eta.eta_max / eta.eta_min).powi(3))
}

/// Smallest eigenvalues over the grid of `D − M(x)` and `M(x) − D/κ_ub`,
/// with `D = diag(σ, …, σ, α)`. Both are non-negative when the matrix
/// inequality behind the conditioning bound holds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MiMargins {
    pub upper: f64,
    pub lower: f64,
}

pub fn matrix_inequality_margins<T: Real>(m: &PointwiseM<T>, coeffs: &PrecondCoeffs<T>) -> MiMargins {
    let s = m.size();
    let mut d = DMatrix::<f64>::zeros(s, s);
    for i in 0..s - 1 {
        d[(i, i)] = coeffs.sigma.as_f64();
    }
    d[(s - 1, s - 1)] = coeffs.alpha.as_f64();
    let inv_kappa = 1.0 / coeffs.kappa_ub.as_f64();
    let mut upper = f64::INFINITY;
    let mut lower = f64::INFINITY;
    for i in 0..m.len() {
        let mi = m.matrix_f64(i);
        let up = SymmetricEigen::new(&d - &mi).eigenvalues.min();
        let lo = SymmetricEigen::new(&mi - &d * inv_kappa).eigenvalues.min();
        upper = upper.min(up);
        lower = lower.min(lo);
    }
    MiMargins { upper, lower }
}
