//! Preconditioned conjugate gradients for `G u = b` with the constant-coefficient
//! preconditioner, plus dense assembly and a generalized-eigenvalue oracle for
//! small grids.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::error::{Result, SgnError};
use crate::grid::{GridRef, ScalarField, VectorField};
use crate::scalar::Real;

/// How `ε(x_k)` is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorMetric {
    /// `‖x_k − x*‖_G / ‖b‖` against a caller-supplied reference solution.
    Reference,
    /// `√(rᵀ A⁻¹ r) / ‖b‖`, available without a reference.
    PreconditionedResidual,
}

impl ErrorMetric {
    pub fn name(self) -> &'static str {
        match self {
            ErrorMetric::Reference => "reference",
            ErrorMetric::PreconditionedResidual => "preconditioned-residual",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PcgOptions<'a, T: Real> {
    pub tol: T,
    pub max_iter: usize,
    /// Converged solution used for the reference metric.
    pub reference: Option<&'a VectorField<T>>,
    /// Conditioning bound used to fill [`PcgReport::bound_history`].
    pub kappa_ub: Option<T>,
}

impl<'a, T: Real> PcgOptions<'a, T> {
    pub fn new(tol: T, max_iter: usize) -> Self {
        Self { tol, max_iter, reference: None, kappa_ub: None }
    }

    pub fn with_reference(mut self, reference: &'a VectorField<T>) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn with_kappa(mut self, kappa_ub: T) -> Self {
        self.kappa_ub = Some(kappa_ub);
        self
    }
}

#[derive(Clone, Debug)]
pub struct PcgReport<T> {
    pub iterations: usize,
    /// `ε(x_k)` for `k = 0..=iterations`.
    pub eps_history: Vec<T>,
    /// `2 ρ^k ε(x_0)`; empty when no finite conditioning bound was supplied.
    pub bound_history: Vec<T>,
    pub converged: bool,
    pub metric: ErrorMetric,
    /// True relative residual `‖b − G x‖₂ / ‖b‖₂` of the returned iterate.
    pub residual: T,
}

impl<T: Real> PcgReport<T> {
    pub fn final_eps(&self) -> T {
        *self.eps_history.last().expect("history holds the initial error")
    }

    /// First iteration whose error is strictly below `threshold`.
    pub fn iterations_to(&self, threshold: T) -> Option<usize> {
        self.eps_history.iter().position(|&e| e < threshold)
    }
}

/// Plain PCG. Stops once `ε(x_k) ≤ tol` or after `max_iter` iterations, in which
/// case the last iterate is returned with `converged = false`.
pub fn pcg<T, G, P>(
    mut apply_g: G,
    mut solve_a: P,
    b: &VectorField<T>,
    x0: Option<&VectorField<T>>,
    opts: &PcgOptions<'_, T>,
) -> Result<(VectorField<T>, PcgReport<T>)>
where
    T: Real,
    G: FnMut(&VectorField<T>) -> VectorField<T>,
    P: FnMut(&VectorField<T>) -> Result<VectorField<T>>,
{
    if !(opts.tol > T::zero()) {
        return Err(SgnError::InvalidParameter(format!("pcg tolerance must be positive, got {}", opts.tol)));
    }
    if let Some(x0) = x0 {
        if !x0.same_grid(b) {
            return Err(SgnError::GridMismatch);
        }
    }
    if let Some(r) = opts.reference {
        if !r.same_grid(b) {
            return Err(SgnError::GridMismatch);
        }
    }
    let metric = if opts.reference.is_some() { ErrorMetric::Reference } else { ErrorMetric::PreconditionedResidual };
    let b_norm = b.norm_two_dx();
    let rate = opts
        .kappa_ub
        .filter(|k| k.is_finite() && *k >= T::one())
        .map(|k| (k.sqrt() - T::one()) / (k.sqrt() + T::one()));

    if b_norm == T::zero() {
        let report = PcgReport {
            iterations: 0,
            eps_history: vec![T::zero()],
            bound_history: rate.map(|_| vec![T::zero()]).unwrap_or_default(),
            converged: true,
            metric,
            residual: T::zero(),
        };
        return Ok((VectorField::zeros(b.grid()), report));
    }

    // With r* = b − G x*, the G-norm error is (x − x*, r* − r).
    let ref_residual = opts.reference.map(|xs| b - &apply_g(xs));
    let eps_of = |x: &VectorField<T>, r: &VectorField<T>, rz: T| -> T {
        match (opts.reference, &ref_residual) {
            (Some(xs), Some(rs)) => (x - xs).dot(&(rs - r)).max(T::zero()).sqrt() / b_norm,
            _ => rz.max(T::zero()).sqrt() / b_norm,
        }
    };

    let (mut x, mut r) = match x0 {
        Some(x0) => (x0.clone(), b - &apply_g(x0)),
        None => (VectorField::zeros(b.grid()), b.clone()),
    };
    let mut z = solve_a(&r)?;
    let mut rz = r.dot(&z);
    let mut p = z.clone();
    let mut eps_history = vec![eps_of(&x, &r, rz)];
    let mut iterations = 0;

    while eps_history[iterations] > opts.tol && iterations < opts.max_iter {
        let q = apply_g(&p);
        let curvature = p.dot(&q);
        if !(curvature > T::zero()) {
            return Err(SgnError::Breakdown { iteration: iterations, curvature: curvature.as_f64() });
        }
        let step = rz / curvature;
        x.axpy(step, &p);
        r.axpy(-step, &q);
        z = solve_a(&r)?;
        let rz_next = r.dot(&z);
        if rz_next < T::zero() {
            return Err(SgnError::NotPositiveDefinite(format!(
                "preconditioner gave r·z = {rz_next} at iteration {}",
                iterations + 1
            )));
        }
        let beta = rz_next / rz;
        rz = rz_next;
        p = {
            let mut next = z.clone();
            next.axpy(beta, &p);
            next
        };
        iterations += 1;
        eps_history.push(eps_of(&x, &r, rz));
    }

    let converged = eps_history[iterations] <= opts.tol;
    let residual = (b - &apply_g(&x)).norm_two_dx() / b_norm;
    let eps0 = eps_history[0];
    let bound_history = match rate {
        Some(rho) => (0..=iterations).map(|k| T::lit(2.0) * rho.powi(k as i32) * eps0).collect(),
        None => Vec::new(),
    };
    let report = PcgReport { iterations, eps_history, bound_history, converged, metric, residual };
    Ok((x, report))
}

/// Largest `dim · n^dim` accepted by [`assemble_dense`].
pub const DENSE_SIZE_LIMIT: usize = 4096;

/// Columns are the operator applied to canonical basis fields, ordered
/// component-major (`c · points + i`).
pub fn assemble_dense<T, F>(mut apply_op: F, grid: &GridRef<T>) -> Result<DMatrix<f64>>
where
    T: Real,
    F: FnMut(&VectorField<T>) -> VectorField<T>,
{
    let points = grid.points();
    let size = grid.dim() * points;
    if size > DENSE_SIZE_LIMIT {
        return Err(SgnError::SizeGuard { size, max: DENSE_SIZE_LIMIT });
    }
    let mut m = DMatrix::<f64>::zeros(size, size);
    for col in 0..size {
        let mut comps: Vec<ScalarField<T>> = (0..grid.dim()).map(|_| ScalarField::zeros(grid)).collect();
        comps[col / points].values_mut()[col % points] = T::one();
        let out = apply_op(&VectorField::from_raw(comps));
        for (c, comp) in out.components().iter().enumerate() {
            for (i, v) in comp.values().iter().enumerate() {
                m[(c * points + i, col)] = v.as_f64();
            }
        }
    }
    Ok(m)
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() / scale
}

/// The dense pair `(G, A)` of the discrete generalized eigenproblem `G u = λ A u`.
#[derive(Clone, Debug)]
pub struct DensePencil {
    g: DMatrix<f64>,
    a: DMatrix<f64>,
}

impl DensePencil {
    /// Symmetry is checked relative to the largest entry.
    pub fn new(g: DMatrix<f64>, a: DMatrix<f64>) -> Result<Self> {
        if !g.is_square() || g.shape() != a.shape() {
            return Err(SgnError::InvalidParameter(format!(
                "pencil shapes {:?} and {:?} differ or are not square",
                g.shape(),
                a.shape()
            )));
        }
        for (name, m) in [("G", &g), ("A", &a)] {
            let asym = asymmetry(m);
            if asym > 1e-10 {
                return Err(SgnError::NotPositiveDefinite(format!(
                    "{name} is not symmetric (relative asymmetry {asym:e})"
                )));
            }
        }
        Ok(Self { g, a })
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn size(&self) -> usize {
        self.g.nrows()
    }
}

/// Ascending eigenvalues of `G u = λ A u` via `L⁻¹ G L⁻ᵀ` with `A = L Lᵀ`.
pub fn generalized_eigs(pencil: &DensePencil) -> Result<Vec<f64>> {
    let a_sym = (&pencil.a + pencil.a.transpose()) * 0.5;
    let g_sym = (&pencil.g + pencil.g.transpose()) * 0.5;
    let chol = Cholesky::new(a_sym)
        .ok_or_else(|| SgnError::NotPositiveDefinite("Cholesky factorization of A failed".into()))?;
    let l = chol.l();
    let half = l
        .solve_lower_triangular(&g_sym)
        .ok_or_else(|| SgnError::NotPositiveDefinite("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&half.transpose())
        .ok_or_else(|| SgnError::NotPositiveDefinite("singular Cholesky factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let mut eigs: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    eigs.sort_by(f64::total_cmp);
    Ok(eigs)
}

/// `λ_max / λ_min` of an ascending spectrum.
pub fn spectral_condition(eigs: &[f64]) -> f64 {
    match (eigs.first(), eigs.last()) {
        (Some(&lo), Some(&hi)) => hi / lo,
        _ => f64::NAN,
    }
}
