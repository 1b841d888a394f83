//! Phase-space transforms on a periodic grid in one dimension.
//!
//! The grid has N points t_j = −L/2 + j·L/N. Phase-space points z = (x, w)
//! are restricted to x = a·L/N and w = b/L with integer a, b, which makes
//! every time-frequency shift a monomial matrix:
//!
//! ```text
//! (π(z)φ)_j = e^{2πi w t_j} φ_{(j − a) mod N}
//! ```
//!
//! All phases are exact roots of unity of order 2N, so transform identities
//! that hold in the continuum by algebra (covariance, involution, the
//! convolution theorem) hold on the grid up to rounding. The operator kernel
//! K acts by (Kφ)_j = (L/N) Σ_k K_{jk} φ_k; traces carry the same weight.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

/// Relative tolerance (in grid steps) for accepting a shift as grid-aligned.
pub const ALIGNMENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QhaError {
    #[error("grid needs N a power of two with N >= 8 and L > 0 finite, got N = {n}, L = {l}")]
    InvalidGrid { n: usize, l: f64 },
    #[error(
        "shift ({x}, {w}) is not on the grid: x must be a multiple of L/N = {dx} and w a multiple of 1/L = {dw}"
    )]
    Misaligned { x: f64, w: f64, dx: f64, dw: f64 },
    #[error("grids differ: N = {left_n}, L = {left_l} vs N = {right_n}, L = {right_l}")]
    GridMismatch {
        left_n: usize,
        left_l: f64,
        right_n: usize,
        right_l: f64,
    },
    #[error("expected {expected} values, got {found}")]
    Length { expected: usize, found: usize },
    #[error("value at position {0} is not finite")]
    NonFinite(usize),
}

/// Periodic sampling grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    n: usize,
    l: f64,
}

impl Grid {
    pub fn new(n: usize, l: f64) -> Result<Self, QhaError> {
        if n < 8 || !n.is_power_of_two() || !(l.is_finite() && l > 0.0) {
            return Err(QhaError::InvalidGrid { n, l });
        }
        Ok(Self { n, l })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    /// Sample spacing L/N.
    pub fn dx(&self) -> f64 {
        self.l / self.n as f64
    }

    /// Frequency spacing 1/L.
    pub fn dw(&self) -> f64 {
        1.0 / self.l
    }

    /// Phase-space cell area dx·dw = 1/N.
    pub fn cell_area(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn t(&self, j: usize) -> f64 {
        -self.l / 2.0 + j as f64 * self.dx()
    }

    /// Sample positions t_0, ..., t_{N−1}.
    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.t(j)).collect()
    }

    /// Phase-space index range [−N/2, N/2).
    pub fn indices(&self) -> std::ops::Range<i64> {
        let h = self.half();
        -h..h
    }

    fn half(&self) -> i64 {
        (self.n / 2) as i64
    }

    fn wrap(&self, i: i64) -> usize {
        i.rem_euclid(self.n as i64) as usize
    }

    /// Storage slot of phase-space index a (periodic).
    fn slot(&self, a: i64) -> usize {
        self.wrap(a + self.half())
    }

    pub fn point(&self, a: i64, b: i64) -> PhaseSpacePoint {
        PhaseSpacePoint {
            x: a as f64 * self.dx(),
            w: b as f64 * self.dw(),
        }
    }

    /// Integer grid coordinates of z, or an alignment error.
    pub fn align(&self, z: PhaseSpacePoint) -> Result<(i64, i64), QhaError> {
        let err = || QhaError::Misaligned {
            x: z.x,
            w: z.w,
            dx: self.dx(),
            dw: self.dw(),
        };
        let fa = z.x / self.dx();
        let fb = z.w / self.dw();
        if !fa.is_finite() || !fb.is_finite() || fa.abs() > 1e15 || fb.abs() > 1e15 {
            return Err(err());
        }
        let (a, b) = (fa.round(), fb.round());
        if (fa - a).abs() > ALIGNMENT_TOLERANCE || (fb - b).abs() > ALIGNMENT_TOLERANCE {
            return Err(err());
        }
        Ok((a as i64, b as i64))
    }

    fn check_same(&self, other: &Grid) -> Result<(), QhaError> {
        if self != other {
            return Err(QhaError::GridMismatch {
                left_n: self.n,
                left_l: self.l,
                right_n: other.n,
                right_l: other.l,
            });
        }
        Ok(())
    }
}

/// Roots of unity e^{2πi k / (2N)}.
struct Roots {
    table: Vec<Complex64>,
    order: i64,
}

impl Roots {
    fn new(grid: &Grid) -> Self {
        let order = 2 * grid.n as i64;
        let table = (0..order)
            .map(|k| {
                let (s, c) = (2.0 * PI * k as f64 / order as f64).sin_cos();
                Complex64::new(c, s)
            })
            .collect();
        Self { table, order }
    }

    /// e^{2πi k / (2N)}.
    fn get(&self, k: i64) -> Complex64 {
        self.table[k.rem_euclid(self.order) as usize]
    }

    /// e^{2πi (b/L) t_j} = e^{2πi b (2j − N) / (2N)}.
    fn modulation(&self, b: i64, j: usize) -> Complex64 {
        self.get(b * (2 * j as i64 - self.order / 2))
    }
}

/// z = (x, w).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseSpacePoint {
    pub x: f64,
    pub w: f64,
}

impl PhaseSpacePoint {
    pub fn new(x: f64, w: f64) -> Self {
        Self { x, w }
    }

    pub fn origin() -> Self {
        Self::new(0.0, 0.0)
    }
}

impl std::ops::Add for PhaseSpacePoint {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.w + o.w)
    }
}

impl std::ops::Sub for PhaseSpacePoint {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.w - o.w)
    }
}

impl std::ops::Neg for PhaseSpacePoint {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.w)
    }
}

/// σ(z1, z2) = w1·x2 − w2·x1.
pub fn symplectic_form(z1: PhaseSpacePoint, z2: PhaseSpacePoint) -> f64 {
    z1.w * z2.x - z2.w * z1.x
}

/// Samples of a function at t_0, ..., t_{N−1}.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledFunction {
    grid: Grid,
    samples: Vec<Complex64>,
}

impl SampledFunction {
    pub fn new(grid: Grid, samples: Vec<Complex64>) -> Result<Self, QhaError> {
        if samples.len() != grid.n {
            return Err(QhaError::Length {
                expected: grid.n,
                found: samples.len(),
            });
        }
        if let Some(pos) = samples.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QhaError::NonFinite(pos));
        }
        Ok(Self { grid, samples })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Complex64) -> Self {
        let samples = grid.times().into_iter().map(f).collect();
        Self { grid, samples }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    /// ⟨φ, ψ⟩ = (L/N) Σ φ_j conj(ψ_j).
    pub fn inner(&self, other: &Self) -> Result<Complex64, QhaError> {
        self.grid.check_same(&other.grid)?;
        let s: Complex64 = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a * b.conj())
            .sum();
        Ok(s * self.grid.dx())
    }

    pub fn norm(&self) -> f64 {
        (self.samples.iter().map(Complex64::norm_sqr).sum::<f64>() * self.grid.dx()).sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Operator with kernel K on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledOperator {
    grid: Grid,
    kernel: DMatrix<Complex64>,
}

impl SampledOperator {
    pub fn new(grid: Grid, kernel: DMatrix<Complex64>) -> Result<Self, QhaError> {
        if kernel.nrows() != grid.n || kernel.ncols() != grid.n {
            return Err(QhaError::Length {
                expected: grid.n * grid.n,
                found: kernel.len(),
            });
        }
        if let Some(pos) = kernel.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QhaError::NonFinite(pos));
        }
        Ok(Self { grid, kernel })
    }

    pub fn zero(grid: Grid) -> Self {
        Self {
            grid,
            kernel: DMatrix::zeros(grid.n, grid.n),
        }
    }

    /// φ₁ ⊗ φ₂ : ψ ↦ ⟨ψ, φ₁⟩ φ₂, kernel φ₂(t) conj(φ₁(s)).
    pub fn rank_one(input: &SampledFunction, output: &SampledFunction) -> Result<Self, QhaError> {
        input.grid.check_same(&output.grid)?;
        let n = input.grid.n;
        let kernel = DMatrix::from_fn(n, n, |j, k| output.samples[j] * input.samples[k].conj());
        Ok(Self {
            grid: input.grid,
            kernel,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kernel(&self) -> &DMatrix<Complex64> {
        &self.kernel
    }

    /// Matrix acting on sample vectors: (L/N)·K.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        self.kernel.map(|z| z * self.grid.dx())
    }

    pub fn apply(&self, f: &SampledFunction) -> Result<SampledFunction, QhaError> {
        self.grid.check_same(&f.grid)?;
        let v = nalgebra::DVector::from_column_slice(&f.samples);
        let out = &self.kernel * v * Complex64::new(self.grid.dx(), 0.0);
        Ok(SampledFunction {
            grid: self.grid,
            samples: out.iter().copied().collect(),
        })
    }

    /// (L/N) Σ K_jj.
    pub fn trace(&self) -> Complex64 {
        self.kernel.diagonal().sum() * self.grid.dx()
    }

    /// tr(S T*) = (L/N)² Σ K^S conj(K^T).
    pub fn trace_pairing(&self, other: &Self) -> Result<Complex64, QhaError> {
        self.grid.check_same(&other.grid)?;
        let s: Complex64 = self
            .kernel
            .iter()
            .zip(other.kernel.iter())
            .map(|(a, b)| a * b.conj())
            .sum();
        Ok(s * self.grid.dx() * self.grid.dx())
    }

    /// Hilbert-Schmidt norm.
    pub fn hs_norm(&self) -> f64 {
        self.kernel.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt() * self.grid.dx()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            grid: self.grid,
            kernel: self.kernel.adjoint(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, QhaError> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            kernel: &self.kernel + &other.kernel,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, QhaError> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            kernel: &self.kernel - &other.kernel,
        })
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            grid: self.grid,
            kernel: self.kernel.map(|z| z * c),
        }
    }

    /// Largest kernel entry difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.kernel
            .iter()
            .zip(other.kernel.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Values on the full phase-space grid, stored at slot (a + N/2, b + N/2)
/// for a, b ∈ [−N/2, N/2).
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSpaceMap {
    grid: Grid,
    values: DMatrix<Complex64>,
}

impl PhaseSpaceMap {
    pub fn new(grid: Grid, values: DMatrix<Complex64>) -> Result<Self, QhaError> {
        if values.nrows() != grid.n || values.ncols() != grid.n {
            return Err(QhaError::Length {
                expected: grid.n * grid.n,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QhaError::NonFinite(pos));
        }
        Ok(Self { grid, values })
    }

    pub fn zero(grid: Grid) -> Self {
        Self {
            grid,
            values: DMatrix::zeros(grid.n, grid.n),
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(PhaseSpacePoint) -> Complex64) -> Self {
        let h = grid.half();
        let values = DMatrix::from_fn(grid.n, grid.n, |ia, ib| {
            f(grid.point(ia as i64 - h, ib as i64 - h))
        });
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<Complex64> {
        &self.values
    }

    /// Value at integer grid coordinates (periodic).
    pub fn at_index(&self, a: i64, b: i64) -> Complex64 {
        self.values[(self.grid.slot(a), self.grid.slot(b))]
    }

    pub fn at(&self, z: PhaseSpacePoint) -> Result<Complex64, QhaError> {
        let (a, b) = self.grid.align(z)?;
        Ok(self.at_index(a, b))
    }

    pub fn set_index(&mut self, a: i64, b: i64, v: Complex64) {
        let (ia, ib) = (self.grid.slot(a), self.grid.slot(b));
        self.values[(ia, ib)] = v;
    }

    /// All (point, value) pairs, a-major.
    pub fn iter(&self) -> impl Iterator<Item = (PhaseSpacePoint, Complex64)> + '_ {
        let h = self.grid.half();
        let n = self.grid.n;
        (0..n).flat_map(move |ia| {
            (0..n).map(move |ib| {
                (
                    self.grid.point(ia as i64 - h, ib as i64 - h),
                    self.values[(ia, ib)],
                )
            })
        })
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Self) -> Result<Self, QhaError> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.component_mul(&other.values),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, QhaError> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: &self.values - &other.values,
        })
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.map(|z| z * c),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// τ_z f(s) = f(s − z), periodic on the grid.
    pub fn translate(&self, z: PhaseSpacePoint) -> Result<Self, QhaError> {
        let (a0, b0) = self.grid.align(z)?;
        let mut out = Self::zero(self.grid);
        for a in self.grid.indices() {
            for b in self.grid.indices() {
                out.set_index(a, b, self.at_index(a - a0, b - b0));
            }
        }
        Ok(out)
    }

    /// s ↦ e^{2πi σ(z, s)} f(s).
    pub fn modulate(&self, z: PhaseSpacePoint) -> Result<Self, QhaError> {
        let (a0, b0) = self.grid.align(z)?;
        let roots = Roots::new(&self.grid);
        let mut out = self.clone();
        for a in self.grid.indices() {
            for b in self.grid.indices() {
                // σ(z, s) = (b0·a − b·a0)/N
                let phase = roots.get(2 * (b0 * a - b * a0));
                out.set_index(a, b, self.at_index(a, b) * phase);
            }
        }
        Ok(out)
    }
}

/// π(z)φ for grid-aligned z.
pub fn tf_shift(z: PhaseSpacePoint, phi: &SampledFunction) -> Result<SampledFunction, QhaError> {
    let grid = phi.grid;
    let (a, b) = grid.align(z)?;
    let roots = Roots::new(&grid);
    let samples = (0..grid.n)
        .map(|j| roots.modulation(b, j) * phi.samples[grid.wrap(j as i64 - a)])
        .collect();
    Ok(SampledFunction { grid, samples })
}

/// α_z S = π(z) S π(z)*.
pub fn heisenberg_translate(s: &SampledOperator, z: PhaseSpacePoint) -> Result<SampledOperator, QhaError> {
    let grid = s.grid;
    let (a, b) = grid.align(z)?;
    let roots = Roots::new(&grid);
    let kernel = DMatrix::from_fn(grid.n, grid.n, |j, k| {
        let phase = roots.get(2 * b * (j as i64 - k as i64));
        phase * s.kernel[(grid.wrap(j as i64 - a), grid.wrap(k as i64 - a))]
    });
    Ok(SampledOperator { grid, kernel })
}

/// Ť = PSP with (Pφ)(t) = φ(−t), i.e. index j ↦ (N − j) mod N.
pub fn parity_conjugate(s: &SampledOperator) -> SampledOperator {
    let grid = s.grid;
    let r = |j: usize| (grid.n - j) % grid.n;
    let kernel = DMatrix::from_fn(grid.n, grid.n, |j, k| s.kernel[(r(j), r(k))]);
    SampledOperator { grid, kernel }
}

fn fourier_wigner_index(s: &SampledOperator, roots: &Roots, a: i64, b: i64) -> Complex64 {
    let grid = s.grid;
    // e^{−πi x w} = e^{−πi ab/N}; tr(π(−z) A) = dx Σ_j e^{−2πi w t_j} K_{j+a, j}.
    let mut acc = Complex64::default();
    for j in 0..grid.n {
        acc += roots.modulation(-b, j) * s.kernel[(grid.wrap(j as i64 + a), j)];
    }
    roots.get(-a * b) * acc * grid.dx()
}

/// F_W S(z) = e^{−πi x w} tr(π(−z) S) at the given points.
pub fn fourier_wigner(s: &SampledOperator, points: &[PhaseSpacePoint]) -> Result<Vec<Complex64>, QhaError> {
    let roots = Roots::new(&s.grid);
    points
        .iter()
        .map(|&z| {
            let (a, b) = s.grid.align(z)?;
            Ok(fourier_wigner_index(s, &roots, a, b))
        })
        .collect()
}

/// F_W S on the whole phase-space grid.
pub fn fourier_wigner_grid(s: &SampledOperator) -> PhaseSpaceMap {
    let roots = Roots::new(&s.grid);
    let mut out = PhaseSpaceMap::zero(s.grid);
    for a in s.grid.indices() {
        for b in s.grid.indices() {
            out.set_index(a, b, fourier_wigner_index(s, &roots, a, b));
        }
    }
    out
}

/// F_σ f(z) = Σ_s f(s) e^{−2πi σ(z, s)} · cell area.
///
/// With σ(z, s) = (b·a' − b'·a)/N the sum factors into two length-N
/// transforms; applying it twice returns the input.
pub fn symplectic_fourier(f: &PhaseSpaceMap) -> PhaseSpaceMap {
    let grid = f.grid;
    let roots = Roots::new(&grid);
    let idx: Vec<i64> = grid.indices().collect();
    // g(a', a) = Σ_{b'} f(a', b') e^{2πi b' a / N}
    let mut g = DMatrix::<Complex64>::zeros(grid.n, grid.n);
    for &ap in &idx {
        for &a in &idx {
            let mut acc = Complex64::default();
            for &bp in &idx {
                acc += f.at_index(ap, bp) * roots.get(2 * bp * a);
            }
            g[(grid.slot(ap), grid.slot(a))] = acc;
        }
    }
    let mut out = PhaseSpaceMap::zero(grid);
    for &a in &idx {
        for &b in &idx {
            let mut acc = Complex64::default();
            for &ap in &idx {
                acc += g[(grid.slot(ap), grid.slot(a))] * roots.get(-2 * b * ap);
            }
            out.set_index(a, b, acc * grid.cell_area());
        }
    }
    out
}

fn convolve_index(s: &SampledOperator, t_check: &SampledOperator, roots: &Roots, a: i64, b: i64) -> Complex64 {
    let grid = s.grid;
    let n = grid.n;
    // tr(A_S A_X) with X = α_z(Ť): X_{kj} = e^{2πi b (k − j)/N} Ť_{k−a, j−a}.
    let mut acc = Complex64::default();
    for j in 0..n {
        let jj = grid.wrap(j as i64 - a);
        for k in 0..n {
            let x = roots.get(2 * b * (k as i64 - j as i64)) * t_check.kernel[(grid.wrap(k as i64 - a), jj)];
            acc += s.kernel[(j, k)] * x;
        }
    }
    acc * grid.dx() * grid.dx()
}

/// S*T(z) = tr(S α_z(Ť)) at the given points.
pub fn operator_convolve(
    s: &SampledOperator,
    t: &SampledOperator,
    points: &[PhaseSpacePoint],
) -> Result<Vec<Complex64>, QhaError> {
    s.grid.check_same(&t.grid)?;
    let roots = Roots::new(&s.grid);
    let t_check = parity_conjugate(t);
    points
        .iter()
        .map(|&z| {
            let (a, b) = s.grid.align(z)?;
            Ok(convolve_index(s, &t_check, &roots, a, b))
        })
        .collect()
}

/// S*T on the whole phase-space grid.
pub fn operator_convolve_grid(s: &SampledOperator, t: &SampledOperator) -> Result<PhaseSpaceMap, QhaError> {
    s.grid.check_same(&t.grid)?;
    let roots = Roots::new(&s.grid);
    let t_check = parity_conjugate(t);
    let mut out = PhaseSpaceMap::zero(s.grid);
    for a in s.grid.indices() {
        for b in s.grid.indices() {
            out.set_index(a, b, convolve_index(s, &t_check, &roots, a, b));
        }
    }
    Ok(out)
}

/// ρ(f) = Σ_z f(z) e^{−πi x w} π(z) · cell area.
pub fn weyl_quantize(f: &PhaseSpaceMap) -> SampledOperator {
    let grid = f.grid;
    let roots = Roots::new(&grid);
    let n = grid.n;
    let mut matrix = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..n {
        for a in grid.indices() {
            // π(a, b) has its only entry of row j in column j − a.
            let mut acc = Complex64::default();
            for b in grid.indices() {
                acc += f.at_index(a, b) * roots.get(-a * b) * roots.modulation(b, j);
            }
            matrix[(j, grid.wrap(j as i64 - a))] += acc;
        }
    }
    // The matrix carries the cell area 1/N; the kernel is matrix / dx.
    let scale = grid.cell_area() / grid.dx();
    SampledOperator {
        grid,
        kernel: matrix.map(|z| z * scale),
    }
}

/// max over `points` of |F_σ(S*T) − F_W S · F_W T|, both sides on the grid.
pub fn verify_convolution_theorem(
    s: &SampledOperator,
    t: &SampledOperator,
    points: &[PhaseSpacePoint],
) -> Result<f64, QhaError> {
    let lhs = symplectic_fourier(&operator_convolve_grid(s, t)?);
    let rhs = fourier_wigner_grid(s).mul(&fourier_wigner_grid(t))?;
    max_diff_at(&lhs, &rhs, points)
}

fn max_diff_at(lhs: &PhaseSpaceMap, rhs: &PhaseSpaceMap, points: &[PhaseSpacePoint]) -> Result<f64, QhaError> {
    let mut worst = 0.0f64;
    for &z in points {
        worst = worst.max((lhs.at(z)? - rhs.at(z)?).norm());
    }
    Ok(worst)
}

/// Standard Gaussian window 2^{1/4} e^{−π t²}, unit L² norm.
pub fn gaussian(t: f64) -> f64 {
    2f64.powf(0.25) * (-PI * t * t).exp()
}

/// Continuum π(z)φ(t) = e^{2πi w t} φ(t − x) for the standard Gaussian.
pub fn gaussian_atom(z: PhaseSpacePoint, t: f64) -> Complex64 {
    Complex64::from_polar(gaussian(t - z.x), 2.0 * PI * z.w * t)
}

/// ⟨π(a)φ, π(b)φ⟩ for the standard Gaussian, in closed form.
pub fn gaussian_atom_inner(a: PhaseSpacePoint, b: PhaseSpacePoint) -> Complex64 {
    let (dx, dw) = (a.x - b.x, a.w - b.w);
    let modulus = (-PI * (dx * dx + dw * dw) / 2.0).exp();
    Complex64::from_polar(modulus, PI * dw * (a.x + b.x))
}

/// One term c · π(input)φ ⊗ π(output)φ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianTerm {
    pub coefficient: Complex64,
    pub input: PhaseSpacePoint,
    pub output: PhaseSpacePoint,
}

/// Finite sum of rank-one operators built from shifted Gaussians, with
/// exact continuum transforms available for reference.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct GaussianOperator {
    pub terms: Vec<GaussianTerm>,
}

impl GaussianOperator {
    pub fn rank_one(input: PhaseSpacePoint, output: PhaseSpacePoint) -> Self {
        Self {
            terms: vec![GaussianTerm {
                coefficient: Complex64::new(1.0, 0.0),
                input,
                output,
            }],
        }
    }

    /// Kernel samples Σ c · π(v)φ(t_j) conj(π(u)φ(t_k)).
    pub fn sample(&self, grid: Grid) -> SampledOperator {
        let times = grid.times();
        let mut kernel = DMatrix::<Complex64>::zeros(grid.n, grid.n);
        for term in &self.terms {
            let out: Vec<_> = times.iter().map(|&t| gaussian_atom(term.output, t)).collect();
            let inp: Vec<_> = times.iter().map(|&t| gaussian_atom(term.input, t).conj()).collect();
            for j in 0..grid.n {
                for k in 0..grid.n {
                    kernel[(j, k)] += term.coefficient * out[j] * inp[k];
                }
            }
        }
        SampledOperator { grid, kernel }
    }

    /// Continuum F_W at z: Σ c · e^{−πi x w} e^{2πi v_w x} ⟨π(v − z)φ, π(u)φ⟩.
    pub fn fourier_wigner(&self, z: PhaseSpacePoint) -> Complex64 {
        self.terms
            .iter()
            .map(|term| {
                let phase = Complex64::from_polar(1.0, -PI * z.x * z.w + 2.0 * PI * term.output.w * z.x);
                term.coefficient * phase * gaussian_atom_inner(term.output - z, term.input)
            })
            .sum()
    }

    /// Continuum F_W sampled on the full phase-space grid.
    pub fn fourier_wigner_grid(&self, grid: Grid) -> PhaseSpaceMap {
        PhaseSpaceMap::from_fn(grid, |z| self.fourier_wigner(z))
    }
}

/// max over `points` of |F_σ(S_N * T_N) − F_W S · F_W T|, where S_N, T_N are
/// the sampled operators and the right side is the continuum product.
pub fn convolution_theorem_error(
    s: &GaussianOperator,
    t: &GaussianOperator,
    grid: Grid,
    points: &[PhaseSpacePoint],
) -> Result<f64, QhaError> {
    let lhs = symplectic_fourier(&operator_convolve_grid(&s.sample(grid), &t.sample(grid))?);
    let mut worst = 0.0f64;
    for &z in points {
        let exact = s.fourier_wigner(z) * t.fourier_wigner(z);
        worst = worst.max((lhs.at(z)? - exact).norm());
    }
    Ok(worst)
}

/// Largest kernel error of ρ_N applied to the exact F_W of `op`, against the
/// sampled kernel of `op`.
pub fn quantization_error(op: &GaussianOperator, grid: Grid) -> f64 {
    weyl_quantize(&op.fourier_wigner_grid(grid)).max_abs_diff(&op.sample(grid))
}

/// Points with x = i·step_x for |x| ≤ x_max and w = k·step_w for |w| ≤ w_max.
pub fn test_lattice(x_max: f64, step_x: f64, w_max: f64, step_w: f64) -> Vec<PhaseSpacePoint> {
    let nx = (x_max / step_x + 1e-9).floor() as i64;
    let nw = (w_max / step_w + 1e-9).floor() as i64;
    (-nx..=nx)
        .flat_map(|i| (-nw..=nw).map(move |k| PhaseSpacePoint::new(i as f64 * step_x, k as f64 * step_w)))
        .collect()
}
