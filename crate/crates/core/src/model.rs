//! Right-hand sides of the constraint-form system
//!
//! ```text
//! η_t = −∇·(ηu)
//! U_t = −η∇ζ − ∇·(ηu⊗u) + F(η, u, h)
//! G_{η,h} u = U
//! ```
//!
//! with optional external forcing and conserved-quantity diagnostics.

use std::fmt;
use std::sync::Arc;

use crate::error::{Result, SgnError};
use crate::grid::{divergence, gradient, GridRef, ScalarField, VectorField};
use crate::operators::{Bathymetry, ConstraintOperator};
use crate::scalar::Real;

/// Evolved unknowns `(η, U)` and the constrained velocity `u` at time `t`.
#[derive(Clone, Debug)]
pub struct SgnState<T: Real> {
    pub eta: ScalarField<T>,
    pub momentum: VectorField<T>,
    pub velocity: VectorField<T>,
    pub t: T,
}

impl<T: Real> SgnState<T> {
    pub fn new(eta: ScalarField<T>, momentum: VectorField<T>, velocity: VectorField<T>, t: T) -> Result<Self> {
        let grid = eta.grid();
        if !momentum.grid().same_as(grid) || !velocity.grid().same_as(grid) || momentum.dim() != velocity.dim() {
            return Err(SgnError::GridMismatch);
        }
        let min = eta.min();
        if !(min > T::zero()) {
            return Err(SgnError::NonPositiveDepth { min: min.as_f64() });
        }
        Ok(Self { eta, momentum, velocity, t })
    }

    /// Builds `U = G_{η,h} u` so that the constraint holds exactly.
    pub fn from_velocity(eta: ScalarField<T>, velocity: VectorField<T>, bathy: &Bathymetry<T>, t: T) -> Result<Self> {
        let momentum = ConstraintOperator::new(&eta, bathy)?.apply_checked(&velocity)?;
        Self::new(eta, momentum, velocity, t)
    }

    /// Fluid at rest with a flat free surface.
    pub fn rest(bathy: &Bathymetry<T>) -> Result<Self> {
        let grid = bathy.grid();
        Self::new(bathy.h().clone(), VectorField::zeros(grid), VectorField::zeros(grid), T::zero())
    }

    pub fn grid(&self) -> &GridRef<T> {
        self.eta.grid()
    }

    /// Free-surface elevation `ζ = η − h`.
    pub fn zeta(&self, bathy: &Bathymetry<T>) -> ScalarField<T> {
        &self.eta - bathy.h()
    }

    pub fn is_finite(&self) -> bool {
        self.eta.is_finite() && self.momentum.is_finite() && self.velocity.is_finite() && self.t.is_finite()
    }
}

type ForcingFn<T> = dyn Fn(T) -> (ScalarField<T>, VectorField<T>) + Send + Sync;

/// Time-dependent source terms `(f_η, f_U)` added to the two evolution equations.
#[derive(Clone)]
pub struct ExternalForcing<T: Real> {
    f: Arc<ForcingFn<T>>,
}

impl<T: Real> ExternalForcing<T> {
    pub fn new(f: impl Fn(T) -> (ScalarField<T>, VectorField<T>) + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f) }
    }

    pub fn eval(&self, t: T) -> (ScalarField<T>, VectorField<T>) {
        (self.f)(t)
    }
}

impl<T: Real> fmt::Debug for ExternalForcing<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ExternalForcing(..)")
    }
}

/// `∇·(ηu⊗u)`, component `i` being `Σ_j ∂_j(η u_i u_j)`.
pub fn momentum_flux_divergence<T: Real>(eta: &ScalarField<T>, u: &VectorField<T>) -> VectorField<T> {
    let dim = u.dim();
    let eta_u = u.scale_by(eta);
    let comps = (0..dim)
        .map(|i| {
            let row: Vec<ScalarField<T>> = (0..dim).map(|j| eta_u.component(i) * u.component(j)).collect();
            divergence(&VectorField::from_raw(row))
        })
        .collect();
    VectorField::from_raw(comps)
}

/// The forcing `F(η, u, h) = ∇S₁ − ∇h S₂` of the momentum equation.
pub fn forcing_f<T: Real>(eta: &ScalarField<T>, u: &VectorField<T>, bathy: &Bathymetry<T>) -> Result<VectorField<T>> {
    if !eta.grid().same_as(bathy.grid()) || !u.grid().same_as(bathy.grid()) {
        return Err(SgnError::GridMismatch);
    }
    let half = T::lit(0.5);
    let third = T::one() / T::lit(3.0);
    let div_u = divergence(u);
    let q = divergence(&u.scale_by(eta));
    // u·∇(∇·u) − (∇·u)²
    let p = &u.pointwise_dot(&gradient(&div_u)) - &(&div_u * &div_u);
    let eta2 = eta * eta;
    let q_div = &q * &div_u;

    let mut s1 = &(&eta2 * eta).scale(third) * &p;
    s1.axpy(T::one(), &(&eta2 * &q_div));
    if bathy.is_flat() {
        return Ok(gradient(&s1));
    }

    let ugh = bathy.grad_h().pointwise_dot(u);
    // (u·∇)²h expanded as u·∇(u·∇h)
    let uu_h = u.pointwise_dot(&gradient(&ugh));
    let q_ugh = &q * &ugh;
    s1.axpy(half, &(&eta2 * &uu_h));
    s1.axpy(T::one(), &(eta * &q_ugh));

    let mut s2 = &eta2.scale(half) * &p;
    s2.axpy(T::one(), &(eta * &q_div));
    s2.axpy(T::one(), &(eta * &uu_h));
    s2.axpy(T::one(), &q_ugh);

    let mut f = gradient(&s1);
    for c in 0..f.dim() {
        let term = bathy.grad_h().component(c) * &s2;
        f.component_mut(c).axpy(-T::one(), &term);
    }
    Ok(f)
}

/// Mass, momentum and energy of a state.
#[derive(Clone, Debug, PartialEq)]
pub struct Conserved<T> {
    pub mass: T,
    pub momentum: Vec<T>,
    pub energy: T,
}

/// `m = Σζ Δx^d`, `M = ΣU Δx^d`, `E = ½Σ[ζ² + η|u|² + ⅓η³(∇·u)²] Δx^d`.
pub fn conserved<T: Real>(state: &SgnState<T>, bathy: &Bathymetry<T>) -> Conserved<T> {
    let dv = state.grid().cell_volume();
    let zeta = state.zeta(bathy);
    let div_u = divergence(&state.velocity);
    let speed2 = state.velocity.pointwise_dot(&state.velocity);
    let third = T::one() / T::lit(3.0);
    let density = zeta
        .values()
        .iter()
        .zip(state.eta.values())
        .zip(speed2.values().iter().zip(div_u.values()))
        .fold(T::zero(), |acc, ((&z, &e), (&s, &d))| acc + z * z + e * s + third * e * e * e * d * d);
    Conserved {
        mass: zeta.sum() * dv,
        momentum: state.momentum.components().iter().map(|c| c.sum() * dv).collect(),
        energy: T::lit(0.5) * density * dv,
    }
}

/// `‖G u − U‖₂ / max(‖U‖₂, floor)` with the smallest positive normal as floor.
pub fn constraint_residual<T: Real>(state: &SgnState<T>, bathy: &Bathymetry<T>) -> Result<T> {
    let gu = ConstraintOperator::new(&state.eta, bathy)?.apply_checked(&state.velocity)?;
    let num = (&gu - &state.momentum).norm_two_dx();
    Ok(num / state.momentum.norm_two_dx().max(T::min_positive_value()))
}

/// Bathymetry, optional forcing and the dealiasing switch.
#[derive(Clone, Debug)]
pub struct SgnModel<T: Real> {
    bathy: Bathymetry<T>,
    forcing: Option<ExternalForcing<T>>,
    dealias: bool,
}

impl<T: Real> SgnModel<T> {
    pub fn new(bathy: Bathymetry<T>) -> Self {
        Self { bathy, forcing: None, dealias: false }
    }

    pub fn with_forcing(mut self, forcing: ExternalForcing<T>) -> Self {
        self.forcing = Some(forcing);
        self
    }

    /// Applies the two-thirds rule to the inputs and outputs of every RHS evaluation.
    pub fn with_dealias(mut self, dealias: bool) -> Self {
        self.dealias = dealias;
        self
    }

    pub fn bathy(&self) -> &Bathymetry<T> {
        &self.bathy
    }

    pub fn forcing(&self) -> Option<&ExternalForcing<T>> {
        self.forcing.as_ref()
    }

    pub fn grid(&self) -> &GridRef<T> {
        self.bathy.grid()
    }

    fn filter(&self, f: &ScalarField<T>) -> ScalarField<T> {
        ScalarField::from_raw(f.grid(), f.grid().truncate_two_thirds(f.values()))
    }

    fn filter_vec(&self, v: &VectorField<T>) -> VectorField<T> {
        v.map_components(|c| self.filter(c))
    }

    /// `(dη/dt, dU/dt)` from depth and velocity at time `t`.
    pub fn rhs_fields(
        &self,
        eta: &ScalarField<T>,
        u: &VectorField<T>,
        t: T,
    ) -> Result<(ScalarField<T>, VectorField<T>)> {
        if !eta.grid().same_as(self.grid()) || !u.grid().same_as(self.grid()) {
            return Err(SgnError::GridMismatch);
        }
        let (eta, u) = if self.dealias { (self.filter(eta), self.filter_vec(u)) } else { (eta.clone(), u.clone()) };
        let mut d_eta = -&divergence(&u.scale_by(&eta));
        let zeta = &eta - self.bathy.h();
        let mut d_mom = forcing_f(&eta, &u, &self.bathy)?;
        d_mom.axpy(-T::one(), &gradient(&zeta).scale_by(&eta));
        d_mom.axpy(-T::one(), &momentum_flux_divergence(&eta, &u));
        if let Some(forcing) = &self.forcing {
            let (f_eta, f_mom) = forcing.eval(t);
            if !f_eta.grid().same_as(self.grid()) || !f_mom.same_grid(&d_mom) {
                return Err(SgnError::GridMismatch);
            }
            d_eta.axpy(T::one(), &f_eta);
            d_mom.axpy(T::one(), &f_mom);
        }
        if self.dealias {
            d_eta = self.filter(&d_eta);
            d_mom = self.filter_vec(&d_mom);
        }
        Ok((d_eta, d_mom))
    }

    pub fn rhs(&self, state: &SgnState<T>) -> Result<(ScalarField<T>, VectorField<T>)> {
        self.rhs_fields(&state.eta, &state.velocity, state.t)
    }

    pub fn conserved(&self, state: &SgnState<T>) -> Conserved<T> {
        conserved(state, &self.bathy)
    }

    pub fn constraint_residual(&self, state: &SgnState<T>) -> Result<T> {
        constraint_residual(state, &self.bathy)
    }
}
