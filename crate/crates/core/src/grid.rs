//! Equispaced periodic grids with Fourier-spectral differentiation.
//!
//! Fields are stored in physical space. Transforms happen on demand; the FFT
//! plans are built once per grid and shared by every field on it.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, SgnError};
use crate::scalar::Real;

/// Shared handle to a grid. Fields hold one of these.
pub type GridRef<T> = Arc<PeriodicGrid<T>>;

/// Periodic tensor grid in one or two dimensions.
///
/// Values are laid out row-major with `x` fastest: index `iy * nx + ix`.
pub struct PeriodicGrid<T: Real> {
    n: Vec<usize>,
    length: Vec<T>,
    spacing: Vec<T>,
    // FFT ordering: k_j = 2πj/L for j < n/2, 0 at the Nyquist slot, 2π(j-n)/L above.
    wavenumbers: Vec<Vec<T>>,
    forward: Vec<Arc<dyn Fft<T>>>,
    inverse: Vec<Arc<dyn Fft<T>>>,
}

impl<T: Real> fmt::Debug for PeriodicGrid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicGrid").field("n", &self.n).field("length", &self.length).finish()
    }
}

impl<T: Real> PeriodicGrid<T> {
    pub fn new_1d(n: usize, length: T) -> Result<GridRef<T>> {
        Self::build(vec![n], vec![length])
    }

    pub fn new_2d(nx: usize, ny: usize, lx: T, ly: T) -> Result<GridRef<T>> {
        Self::build(vec![nx, ny], vec![lx, ly])
    }

    /// Square `n x n` grid of side `length`, or a 1D grid when `dim == 1`.
    pub fn uniform(dim: usize, n: usize, length: T) -> Result<GridRef<T>> {
        match dim {
            1 => Self::new_1d(n, length),
            2 => Self::new_2d(n, n, length, length),
            _ => Err(SgnError::InvalidGrid(format!("dimension {dim} not supported"))),
        }
    }

    fn build(n: Vec<usize>, length: Vec<T>) -> Result<GridRef<T>> {
        for (&ni, &li) in n.iter().zip(&length) {
            if ni < 8 || ni % 2 != 0 {
                return Err(SgnError::InvalidGrid(format!("points per axis must be even and >= 8, got {ni}")));
            }
            if !(li > T::zero()) || !li.is_finite() {
                return Err(SgnError::InvalidGrid(format!("period must be positive, got {li}")));
            }
        }
        let mut planner = FftPlanner::new();
        let spacing = n.iter().zip(&length).map(|(&ni, &li)| li / T::from_usize_lossy(ni)).collect();
        let wavenumbers = n
            .iter()
            .zip(&length)
            .map(|(&ni, &li)| {
                let base = T::TAU() / li;
                (0..ni)
                    .map(|j| {
                        if j < ni / 2 {
                            base * T::from_usize_lossy(j)
                        } else if j == ni / 2 {
                            T::zero()
                        } else {
                            -base * T::from_usize_lossy(ni - j)
                        }
                    })
                    .collect()
            })
            .collect();
        let forward = n.iter().map(|&ni| planner.plan_fft_forward(ni)).collect();
        let inverse = n.iter().map(|&ni| planner.plan_fft_inverse(ni)).collect();
        Ok(Arc::new(Self { n, length, spacing, wavenumbers, forward, inverse }))
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn n(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn shape(&self) -> &[usize] {
        &self.n
    }

    pub fn length(&self, axis: usize) -> T {
        self.length[axis]
    }

    pub fn spacing(&self, axis: usize) -> T {
        self.spacing[axis]
    }

    /// Total number of grid points.
    pub fn points(&self) -> usize {
        self.n.iter().product()
    }

    /// Product of the spacings, the quadrature weight of one point.
    pub fn cell_volume(&self) -> T {
        self.spacing.iter().fold(T::one(), |acc, &h| acc * h)
    }

    /// Wavenumbers along `axis` in FFT order.
    pub fn wavenumbers(&self, axis: usize) -> &[T] {
        &self.wavenumbers[axis]
    }

    /// Coordinates of flat index `i`; unused trailing entries are zero.
    pub fn coords(&self, i: usize) -> [T; 2] {
        let nx = self.n[0];
        let ix = i % nx;
        let iy = i / nx;
        let x = T::from_usize_lossy(ix) * self.spacing[0];
        let y = if self.dim() == 2 { T::from_usize_lossy(iy) * self.spacing[1] } else { T::zero() };
        [x, y]
    }

    /// Wavevector at flat spectral index `i`.
    #[inline]
    pub fn wavevector(&self, i: usize) -> [T; 2] {
        let nx = self.n[0];
        let kx = self.wavenumbers[0][i % nx];
        let ky = if self.dim() == 2 { self.wavenumbers[1][i / nx] } else { T::zero() };
        [kx, ky]
    }

    pub fn same_as(&self, other: &Self) -> bool {
        std::ptr::eq(self, other) || (self.n == other.n && self.length == other.length)
    }

    fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.dim() {
            Err(SgnError::AxisOutOfRange { axis, dim: self.dim() })
        } else {
            Ok(())
        }
    }

    fn transform(&self, buf: &mut [Complex<T>], forward: bool) {
        let plans = if forward { &self.forward } else { &self.inverse };
        plans[0].process(buf);
        if self.dim() == 2 {
            let (nx, ny) = (self.n[0], self.n[1]);
            let mut t = vec![Complex::new(T::zero(), T::zero()); nx * ny];
            for iy in 0..ny {
                for ix in 0..nx {
                    t[ix * ny + iy] = buf[iy * nx + ix];
                }
            }
            plans[1].process(&mut t);
            for ix in 0..nx {
                for iy in 0..ny {
                    buf[iy * nx + ix] = t[ix * ny + iy];
                }
            }
        }
    }

    /// Unnormalized forward DFT of real grid values.
    pub fn forward(&self, values: &[T]) -> Vec<Complex<T>> {
        let mut buf: Vec<Complex<T>> = values.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.transform(&mut buf, true);
        buf
    }

    /// Inverse DFT (normalized) keeping the real part.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex<T>>) -> Vec<T> {
        self.transform(&mut spectrum, false);
        let scale = T::one() / T::from_usize_lossy(self.points());
        spectrum.into_iter().map(|c| c.re * scale).collect()
    }

    /// Zeroes every mode with |j| > n/3 along any axis (two-thirds rule).
    pub fn truncate_two_thirds(&self, values: &[T]) -> Vec<T> {
        let mut spec = self.forward(values);
        let nx = self.n[0];
        for (i, c) in spec.iter_mut().enumerate() {
            let jx = signed_mode(i % nx, nx);
            let mut cut = 3 * jx.unsigned_abs() > nx;
            if self.dim() == 2 {
                let ny = self.n[1];
                let jy = signed_mode(i / nx, ny);
                cut |= 3 * jy.unsigned_abs() > ny;
            }
            if cut {
                *c = Complex::new(T::zero(), T::zero());
            }
        }
        self.inverse_real(spec)
    }
}

fn signed_mode(j: usize, n: usize) -> isize {
    if j <= n / 2 {
        j as isize
    } else {
        j as isize - n as isize
    }
}

#[inline]
fn times_ik<T: Real>(c: Complex<T>, k: T) -> Complex<T> {
    Complex::new(-k * c.im, k * c.re)
}

/// Real scalar field sampled on a grid.
#[derive(Clone)]
pub struct ScalarField<T: Real> {
    grid: GridRef<T>,
    values: Vec<T>,
}

impl<T: Real> fmt::Debug for ScalarField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField").field("shape", &self.grid.shape()).finish()
    }
}

impl<T: Real> ScalarField<T> {
    /// Wraps grid values, checking shape and finiteness.
    pub fn new(grid: &GridRef<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.points() {
            return Err(SgnError::InvalidParameter(format!(
                "field has {} values, grid has {} points",
                values.len(),
                grid.points()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SgnError::NonFinite("scalar field".into()));
        }
        Ok(Self { grid: grid.clone(), values })
    }

    pub(crate) fn from_raw(grid: &GridRef<T>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.points());
        Self { grid: grid.clone(), values }
    }

    pub fn zeros(grid: &GridRef<T>) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: &GridRef<T>, c: T) -> Self {
        Self { grid: grid.clone(), values: vec![c; grid.points()] }
    }

    /// Samples `f(x, y)` at every grid point (`y = 0` in 1D).
    pub fn from_fn(grid: &GridRef<T>, f: impl Fn(T, T) -> T) -> Self {
        let values = (0..grid.points())
            .map(|i| {
                let [x, y] = grid.coords(i);
                f(x, y)
            })
            .collect();
        Self { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &GridRef<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert!(self.grid.same_as(&other.grid));
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self::from_raw(&self.grid, values)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| c * v)
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: T, x: &Self) {
        for (s, &v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    pub fn sum(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn mean(&self) -> T {
        self.sum() / T::from_usize_lossy(self.len())
    }

    pub fn max(&self) -> T {
        self.values.iter().fold(T::neg_infinity(), |acc, &v| acc.max(v))
    }

    pub fn min(&self) -> T {
        self.values.iter().fold(T::infinity(), |acc, &v| acc.min(v))
    }

    /// Discrete inner product `Δx^d Σ f_i g_i`.
    pub fn dot(&self, other: &Self) -> T {
        let s = self.values.iter().zip(&other.values).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        s * self.grid.cell_volume()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.grid.same_as(&other.grid)
    }
}

macro_rules! field_binop {
    ($tr:ident, $method:ident, $op:tt) => {
        impl<'a, T: Real> $tr<&'a ScalarField<T>> for &'a ScalarField<T> {
            type Output = ScalarField<T>;
            fn $method(self, rhs: &'a ScalarField<T>) -> ScalarField<T> {
                self.zip_map(rhs, |a, b| a $op b)
            }
        }
    };
}
field_binop!(Add, add, +);
field_binop!(Sub, sub, -);
field_binop!(Mul, mul, *);

impl<T: Real> Neg for &ScalarField<T> {
    type Output = ScalarField<T>;
    fn neg(self) -> ScalarField<T> {
        self.map(|v| -v)
    }
}

/// Vector field with one component per grid dimension.
#[derive(Clone, Debug)]
pub struct VectorField<T: Real> {
    components: Vec<ScalarField<T>>,
}

impl<T: Real> VectorField<T> {
    pub fn new(components: Vec<ScalarField<T>>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(SgnError::ComponentMismatch { expected: 1, found: 0 });
        };
        let dim = first.grid.dim();
        if components.len() != dim {
            return Err(SgnError::ComponentMismatch { expected: dim, found: components.len() });
        }
        if components.iter().any(|c| !c.grid.same_as(&first.grid)) {
            return Err(SgnError::GridMismatch);
        }
        Ok(Self { components })
    }

    pub(crate) fn from_raw(components: Vec<ScalarField<T>>) -> Self {
        Self { components }
    }

    pub fn zeros(grid: &GridRef<T>) -> Self {
        Self { components: (0..grid.dim()).map(|_| ScalarField::zeros(grid)).collect() }
    }

    /// Builds a vector field from `f(x, y) -> [u, v]` (the second entry is ignored in 1D).
    pub fn from_fn(grid: &GridRef<T>, f: impl Fn(T, T) -> [T; 2]) -> Self {
        let components = (0..grid.dim()).map(|c| ScalarField::from_fn(grid, |x, y| f(x, y)[c])).collect();
        Self { components }
    }

    pub fn grid(&self) -> &GridRef<T> {
        &self.components[0].grid
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, c: usize) -> &ScalarField<T> {
        &self.components[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut ScalarField<T> {
        &mut self.components[c]
    }

    pub fn components(&self) -> &[ScalarField<T>] {
        &self.components
    }

    pub fn into_components(self) -> Vec<ScalarField<T>> {
        self.components
    }

    pub fn map_components(&self, f: impl Fn(&ScalarField<T>) -> ScalarField<T>) -> Self {
        Self { components: self.components.iter().map(f).collect() }
    }

    pub fn zip_components(&self, other: &Self, f: impl Fn(&ScalarField<T>, &ScalarField<T>) -> ScalarField<T>) -> Self {
        Self { components: self.components.iter().zip(&other.components).map(|(a, b)| f(a, b)).collect() }
    }

    pub fn scale(&self, c: T) -> Self {
        self.map_components(|f| f.scale(c))
    }

    /// Pointwise product with a scalar field.
    pub fn scale_by(&self, s: &ScalarField<T>) -> Self {
        self.map_components(|f| f * s)
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: T, x: &Self) {
        for (s, v) in self.components.iter_mut().zip(&x.components) {
            s.axpy(a, v);
        }
    }

    /// Discrete inner product summed over components.
    pub fn dot(&self, other: &Self) -> T {
        self.components.iter().zip(&other.components).fold(T::zero(), |acc, (a, b)| acc + a.dot(b))
    }

    /// Pointwise Euclidean product `u · v`.
    pub fn pointwise_dot(&self, other: &Self) -> ScalarField<T> {
        let mut out = &self.components[0] * &other.components[0];
        for (a, b) in self.components.iter().zip(&other.components).skip(1) {
            out = &out + &(a * b);
        }
        out
    }

    pub fn norm_two_dx(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn inf_norm(&self) -> T {
        self.components.iter().map(|c| norms(c).inf_norm).fold(T::zero(), T::max)
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(ScalarField::is_finite)
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.grid().same_as(other.grid()) && self.dim() == other.dim()
    }
}

impl<'a, T: Real> Add<&'a VectorField<T>> for &'a VectorField<T> {
    type Output = VectorField<T>;
    fn add(self, rhs: &'a VectorField<T>) -> VectorField<T> {
        self.zip_components(rhs, |a, b| a + b)
    }
}

impl<'a, T: Real> Sub<&'a VectorField<T>> for &'a VectorField<T> {
    type Output = VectorField<T>;
    fn sub(self, rhs: &'a VectorField<T>) -> VectorField<T> {
        self.zip_components(rhs, |a, b| a - b)
    }
}

impl<T: Real> Neg for &VectorField<T> {
    type Output = VectorField<T>;
    fn neg(self) -> VectorField<T> {
        self.map_components(|f| -f)
    }
}

/// Spectral derivative of `f` along `axis`.
pub fn derivative<T: Real>(f: &ScalarField<T>, axis: usize) -> Result<ScalarField<T>> {
    let grid = f.grid();
    grid.check_axis(axis)?;
    let mut spec = grid.forward(f.values());
    for (i, c) in spec.iter_mut().enumerate() {
        *c = times_ik(*c, grid.wavevector(i)[axis]);
    }
    Ok(ScalarField::from_raw(grid, grid.inverse_real(spec)))
}

/// Spectral second derivative along `axis` (multiplier `-k^2`).
pub fn second_derivative<T: Real>(f: &ScalarField<T>, axis: usize) -> Result<ScalarField<T>> {
    let grid = f.grid();
    grid.check_axis(axis)?;
    let mut spec = grid.forward(f.values());
    for (i, c) in spec.iter_mut().enumerate() {
        let k = grid.wavevector(i)[axis];
        *c *= -k * k;
    }
    Ok(ScalarField::from_raw(grid, grid.inverse_real(spec)))
}

/// Spectral gradient: one forward transform, one inverse per component.
pub fn gradient<T: Real>(f: &ScalarField<T>) -> VectorField<T> {
    let grid = f.grid();
    let spec = grid.forward(f.values());
    let components = (0..grid.dim())
        .map(|axis| {
            let s = spec.iter().enumerate().map(|(i, &c)| times_ik(c, grid.wavevector(i)[axis])).collect();
            ScalarField::from_raw(grid, grid.inverse_real(s))
        })
        .collect();
    VectorField::from_raw(components)
}

/// Spectral divergence, summed in Fourier space before a single inverse.
pub fn divergence<T: Real>(v: &VectorField<T>) -> ScalarField<T> {
    let grid = v.grid();
    let mut acc = vec![Complex::new(T::zero(), T::zero()); grid.points()];
    for (axis, comp) in v.components().iter().enumerate() {
        let spec = grid.forward(comp.values());
        for (i, (a, c)) in acc.iter_mut().zip(spec).enumerate() {
            *a += times_ik(c, grid.wavevector(i)[axis]);
        }
    }
    ScalarField::from_raw(grid, grid.inverse_real(acc))
}

/// Discrete norms of a scalar field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms<T> {
    /// `sqrt(Δx^d Σ f_i^2)`
    pub two_norm_dx: T,
    pub inf_norm: T,
}

pub fn norms<T: Real>(f: &ScalarField<T>) -> Norms<T> {
    Norms { two_norm_dx: f.dot(f).sqrt(), inf_norm: f.values().iter().fold(T::zero(), |acc, v| acc.max(v.abs())) }
}

/// `sqrt(Δx^d u^T M u)` for a symmetric positive definite action `apply_m`.
///
/// Fails when `u^T M u` is negative beyond round-off.
pub fn weighted_norm<T: Real>(u: &VectorField<T>, apply_m: impl Fn(&VectorField<T>) -> VectorField<T>) -> Result<T> {
    let mu = apply_m(u);
    let q = u.dot(&mu);
    let scale = u.norm_two_dx() * mu.norm_two_dx();
    if q < -T::lit(1e3) * T::epsilon() * scale {
        return Err(SgnError::NotPositiveDefinite(format!("u^T M u = {q:e}")));
    }
    Ok(q.max(T::zero()).sqrt())
}

/// Displacement `s` along x that best aligns `moved(x) ≈ reference(x − s)`, found as
/// the maximum of the trigonometric cross-correlation. Returned in `[−L/2, L/2)`.
pub fn periodic_shift<T: Real>(reference: &ScalarField<T>, moved: &ScalarField<T>) -> Result<T> {
    if !reference.same_grid(moved) {
        return Err(SgnError::GridMismatch);
    }
    let grid = reference.grid();
    if grid.dim() != 1 {
        return Err(SgnError::InvalidGrid("shift tracking is one-dimensional".into()));
    }
    let f = grid.forward(reference.values());
    let m = grid.forward(moved.values());
    let cross: Vec<Complex<T>> = m.iter().zip(&f).map(|(a, b)| a * b.conj()).collect();
    // Correlation at grid shifts, then Newton on the trigonometric interpolant.
    let on_grid = grid.inverse_real(cross.clone());
    let (best, _) =
        on_grid.iter().enumerate().fold((0, T::neg_infinity()), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let ks = grid.wavenumbers(0);
    let derivs = |s: T| {
        let (mut d1, mut d2) = (T::zero(), T::zero());
        for (p, &k) in cross.iter().zip(ks) {
            let e = Complex::new(T::zero(), k * s).exp();
            let v = p * e;
            d1 -= k * v.im;
            d2 -= k * k * v.re;
        }
        (d1, d2)
    };
    let length = grid.length(0);
    let dx = grid.spacing(0);
    let mut s = T::from_usize_lossy(best) * dx;
    for _ in 0..50 {
        let (d1, d2) = derivs(s);
        if !(d2 < T::zero()) {
            break;
        }
        let step = (-d1 / d2).max(-dx).min(dx);
        s += step;
        if step.abs() <= T::lit(64.0) * T::epsilon() * length {
            break;
        }
    }
    Ok(s - length * (s / length).round())
}
