//! Translates of a single operator: support tests, an explicit orthogonal
//! witness against integer translates, and least-squares completeness probes
//! for slightly perturbed integer translates.
//!
//! Everything here works in phase space R² (one degree of freedom) on the
//! grids of [`crate::qha`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::qha::{
    fourier_wigner_grid, heisenberg_translate, symplectic_fourier, weyl_quantize, Grid,
    PhaseSpaceMap, PhaseSpacePoint, QhaError, SampledOperator,
};

/// Relative ridge added to the Gram diagonal.
pub const GRAM_RIDGE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranslatesError {
    #[error(transparent)]
    Grid(#[from] QhaError),
    #[error("support grid needs at least one cell per unit, got {0}")]
    Resolution(usize),
    #[error("support set has {found} cells, expected {expected}")]
    CellCount { expected: usize, found: usize },
    #[error("decay base a = {0} must lie strictly between 0 and 1")]
    DecayBase(f64),
    #[error("dimension parameter d must be at least 1")]
    ZeroDimension,
    #[error("perturbation for n = {n:?} underflows to zero")]
    VanishingPerturbation { n: Vec<i64> },
    #[error("translate probes run in phase space R², got d = {0}")]
    UnsupportedDimension(usize),
    #[error("threshold must be positive and finite, got {0}")]
    Threshold(f64),
    #[error("integer shifts need L and N/L to be integers, got N = {n}, L = {l}")]
    NonIntegerPeriod { n: usize, l: f64 },
    #[error("cell at ({x}, {w}) and its shift by (1, 0) do not fit in the grid")]
    CellOutsideGrid { x: f64, w: f64 },
    #[error("g vanishes on the chosen cell and its shift; the witness is zero")]
    DegenerateWitness,
    #[error("Gram system of size {size} is singular beyond regularization (condition estimate {condition:e})")]
    SingularGram { size: usize, condition: f64 },
    #[error("no translate survived grid rounding")]
    NoTranslates,
}

/// Indicator of a set of phase-space cells of side 1/r, stored over a
/// rectangle of cells. Cell (i, k) covers [i/r, (i+1)/r) × [k/r, (k+1)/r).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportSet {
    cells_per_unit: usize,
    x_start: i64,
    w_start: i64,
    nx: usize,
    nw: usize,
    cells: Vec<bool>,
}

impl SupportSet {
    /// Cells (x_start + i, w_start + k) for i < nx, k < nw; `cells` is x-major.
    pub fn new(
        cells_per_unit: usize,
        x_start: i64,
        w_start: i64,
        nx: usize,
        nw: usize,
        cells: Vec<bool>,
    ) -> Result<Self, TranslatesError> {
        if cells_per_unit == 0 {
            return Err(TranslatesError::Resolution(0));
        }
        if cells.len() != nx * nw {
            return Err(TranslatesError::CellCount {
                expected: nx * nw,
                found: cells.len(),
            });
        }
        Ok(Self {
            cells_per_unit,
            x_start,
            w_start,
            nx,
            nw,
            cells,
        })
    }

    pub fn empty(cells_per_unit: usize) -> Result<Self, TranslatesError> {
        Self::new(cells_per_unit, 0, 0, 0, 0, Vec::new())
    }

    /// Cells of [x0, x1) × [w0, w1), with endpoints rounded to the cell grid.
    pub fn rectangle(cells_per_unit: usize, x0: f64, x1: f64, w0: f64, w1: f64) -> Result<Self, TranslatesError> {
        let r = cells_per_unit as f64;
        let (i0, i1) = ((x0 * r).round() as i64, (x1 * r).round() as i64);
        let (k0, k1) = ((w0 * r).round() as i64, (w1 * r).round() as i64);
        let nx = (i1 - i0).max(0) as usize;
        let nw = (k1 - k0).max(0) as usize;
        Self::new(cells_per_unit, i0, k0, nx, nw, vec![true; nx * nw])
    }

    pub fn cells_per_unit(&self) -> usize {
        self.cells_per_unit
    }

    pub fn contains_cell(&self, i: i64, k: i64) -> bool {
        let (di, dk) = (i - self.x_start, k - self.w_start);
        if di < 0 || dk < 0 || di >= self.nx as i64 || dk >= self.nw as i64 {
            return false;
        }
        self.cells[di as usize * self.nw + dk as usize]
    }

    /// The set shifted by an integer lattice vector.
    pub fn shifted(&self, n: (i64, i64)) -> Self {
        let r = self.cells_per_unit as i64;
        Self {
            x_start: self.x_start + n.0 * r,
            w_start: self.w_start + n.1 * r,
            ..self.clone()
        }
    }

    /// Lower-left corner of a cell.
    pub fn corner(&self, i: i64, k: i64) -> PhaseSpacePoint {
        let r = self.cells_per_unit as f64;
        PhaseSpacePoint::new(i as f64 / r, k as f64 / r)
    }

    fn shifts_covering(&self, i: i64, k: i64) -> Vec<(i64, i64)> {
        if self.nx == 0 || self.nw == 0 {
            return Vec::new();
        }
        let r = self.cells_per_unit as i64;
        let range = |start: i64, len: usize, at: i64| {
            let lo = (start - at).div_euclid(r) - 1;
            let hi = (start + len as i64 - at).div_euclid(r) + 1;
            lo..=hi
        };
        let mut out = Vec::new();
        for n1 in range(self.x_start, self.nx, i) {
            for n2 in range(self.w_start, self.nw, k) {
                if self.contains_cell(i + n1 * r, k + n2 * r) {
                    out.push((n1, n2));
                }
            }
        }
        out
    }
}

/// A cell covered by more than one integer shift of the set.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecialFormWitness {
    /// Lower-left corner of the cell z.
    pub cell: PhaseSpacePoint,
    /// All n with z + n in the set.
    pub shifts: Vec<(i64, i64)>,
}

/// Checks Σ_n χ_Ω(z + n) ≤ 1 for every cell z of [−1, 1)².
///
/// The fundamental cell [0, 1)² is scanned first, so a witness is reported
/// there when one exists; the rest of the domain adds no new information but
/// is scanned as well.
pub fn is_special_form(omega: &SupportSet) -> Result<(), SpecialFormWitness> {
    let r = omega.cells_per_unit as i64;
    let fundamental = (0..r).flat_map(|i| (0..r).map(move |k| (i, k)));
    let rest = (-r..r)
        .flat_map(|i| (-r..r).map(move |k| (i, k)))
        .filter(|&(i, k)| !(0..r).contains(&i) || !(0..r).contains(&k));
    for (i, k) in fundamental.chain(rest) {
        let shifts = omega.shifts_covering(i, k);
        if shifts.len() > 1 {
            return Err(SpecialFormWitness {
                cell: omega.corner(i, k),
                shifts,
            });
        }
    }
    Ok(())
}

/// Every cell where |F_W T| exceeds `threshold`·max|F_W T| must also have
/// |F_W S| above `threshold`·max|F_W S|.
pub fn span_membership(s: &SampledOperator, t: &SampledOperator, threshold: f64) -> Result<bool, TranslatesError> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(TranslatesError::Threshold(threshold));
    }
    if s.grid() != t.grid() {
        return Err(QhaError::GridMismatch {
            left_n: s.grid().n(),
            left_l: s.grid().l(),
            right_n: t.grid().n(),
            right_l: t.grid().l(),
        }
        .into());
    }
    let fs = fourier_wigner_grid(s);
    let ft = fourier_wigner_grid(t);
    let (ms, mt) = (fs.max_abs(), ft.max_abs());
    Ok(fs
        .values()
        .iter()
        .zip(ft.values().iter())
        .all(|(vs, vt)| vt.norm() <= threshold * mt || vs.norm() > threshold * ms))
}

/// Index steps of one unit in x and in w.
fn unit_steps(grid: &Grid) -> Result<(i64, i64), TranslatesError> {
    let per_x = grid.n() as f64 / grid.l();
    let per_w = grid.l();
    let ok = |v: f64| v >= 1.0 && (v - v.round()).abs() < 1e-12;
    if !ok(per_x) || !ok(per_w) {
        return Err(TranslatesError::NonIntegerPeriod {
            n: grid.n(),
            l: grid.l(),
        });
    }
    Ok((per_x.round() as i64, per_w.round() as i64))
}

/// H = conj(g(· + e₁)) on the unit cell A with lower-left corner `corner`,
/// H = −conj(g(· − e₁)) on A + e₁, zero elsewhere.
///
/// The lattice periodization of H·conj(g) then cancels in pairs, so the
/// operator with F_W equal to H is orthogonal to every integer translate of
/// the operator with F_W equal to g.
pub fn integer_orthogonal_witness(g: &PhaseSpaceMap, corner: PhaseSpacePoint) -> Result<PhaseSpaceMap, TranslatesError> {
    let grid = *g.grid();
    let (sx, sw) = unit_steps(&grid)?;
    let (a0, b0) = grid.align(corner)?;
    let half = grid.n() as i64 / 2;
    if a0 < -half || a0 + 2 * sx > half || b0 < -half || b0 + sw > half {
        return Err(TranslatesError::CellOutsideGrid {
            x: corner.x,
            w: corner.w,
        });
    }
    let mut h = PhaseSpaceMap::zero(grid);
    for a in a0..a0 + sx {
        for b in b0..b0 + sw {
            h.set_index(a, b, g.at_index(a + sx, b).conj());
            h.set_index(a + sx, b, -g.at_index(a, b).conj());
        }
    }
    if h.max_abs() == 0.0 {
        return Err(TranslatesError::DegenerateWitness);
    }
    Ok(h)
}

/// z ↦ Σ_n H(z + n) conj(g(z + n)) over the integer orbit of z on the
/// periodic grid.
pub fn lattice_periodization(h: &PhaseSpaceMap, g: &PhaseSpaceMap) -> Result<PhaseSpaceMap, TranslatesError> {
    let grid = *g.grid();
    if h.grid() != &grid {
        return Err(QhaError::GridMismatch {
            left_n: h.grid().n(),
            left_l: h.grid().l(),
            right_n: grid.n(),
            right_l: grid.l(),
        }
        .into());
    }
    let (sx, sw) = unit_steps(&grid)?;
    let n = grid.n() as i64;
    let mut out = PhaseSpaceMap::zero(grid);
    for a in grid.indices() {
        for b in grid.indices() {
            let mut acc = Complex64::default();
            for i in 0..n / sx {
                for k in 0..n / sw {
                    let (aa, bb) = (a + i * sx, b + k * sw);
                    acc += h.at_index(aa, bb) * g.at_index(aa, bb).conj();
                }
            }
            out.set_index(a, b, acc);
        }
    }
    Ok(out)
}

/// An integer shift n and the pairing ⟨T, α_n S⟩.
pub type TranslatePairing = ((i64, i64), Complex64);

/// ⟨T, α_n S⟩ for all integer n with |n|₁ ≤ `radius`.
pub fn integer_translate_pairings(
    s: &SampledOperator,
    t: &SampledOperator,
    radius: i64,
) -> Result<Vec<TranslatePairing>, TranslatesError> {
    let mut out = Vec::new();
    for n1 in -radius..=radius {
        let rest = radius - n1.abs();
        for n2 in -rest..=rest {
            let moved = heisenberg_translate(s, PhaseSpacePoint::new(n1 as f64, n2 as f64))?;
            out.push(((n1, n2), t.trace_pairing(&moved)?));
        }
    }
    Ok(out)
}

/// λ = n + γ(n).
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbedPoint {
    pub base: Vec<i64>,
    pub perturbation: Vec<f64>,
}

impl PerturbedPoint {
    pub fn position(&self) -> Vec<f64> {
        self.base
            .iter()
            .zip(&self.perturbation)
            .map(|(&n, &g)| n as f64 + g)
            .collect()
    }

    pub fn base_norm1(&self) -> u64 {
        self.base.iter().map(|v| v.unsigned_abs()).sum()
    }

    pub fn perturbation_norm(&self) -> f64 {
        self.perturbation.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Perturbed integer points with 0 < |γ(n)| < a^{|n|₁}.
#[derive(Clone, Debug, PartialEq)]
pub struct TranslateSet {
    decay: f64,
    points: Vec<PerturbedPoint>,
}

impl TranslateSet {
    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn points(&self) -> &[PerturbedPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Whether every point satisfies the strict two-sided bound.
    pub fn satisfies_bounds(&self) -> bool {
        self.points.iter().all(|p| {
            let g = p.perturbation_norm();
            g > 0.0 && g < self.decay.powi(p.base_norm1() as i32)
        })
    }
}

/// γ(n) = (a^{|n|₁}/2)·e₁ for |n|₁ ≤ radius, n ∈ Z^{2d}, ordered by |n|₁ and
/// then lexicographically.
pub fn perturbed_lattice(a: f64, radius: u32, d: usize) -> Result<TranslateSet, TranslatesError> {
    if !(a > 0.0 && a < 1.0) {
        return Err(TranslatesError::DecayBase(a));
    }
    if d == 0 {
        return Err(TranslatesError::ZeroDimension);
    }
    let mut bases = Vec::new();
    let mut current = vec![0i64; 2 * d];
    l1_ball(&mut current, 0, radius as i64, &mut bases);
    bases.sort_by_key(|n| (n.iter().map(|v| v.unsigned_abs()).sum::<u64>(), n.clone()));
    let mut points = Vec::with_capacity(bases.len());
    for base in bases {
        let norm = base.iter().map(|v| v.unsigned_abs()).sum::<u64>();
        let size = a.powi(norm as i32) / 2.0;
        if size <= 0.0 {
            return Err(TranslatesError::VanishingPerturbation { n: base });
        }
        let mut perturbation = vec![0.0; 2 * d];
        perturbation[0] = size;
        points.push(PerturbedPoint { base, perturbation });
    }
    Ok(TranslateSet { decay: a, points })
}

fn l1_ball(current: &mut Vec<i64>, pos: usize, budget: i64, out: &mut Vec<Vec<i64>>) {
    if pos == current.len() {
        out.push(current.clone());
        return;
    }
    for v in -budget..=budget {
        current[pos] = v;
        l1_ball(current, pos + 1, budget - v.abs(), out);
    }
    current[pos] = 0;
}

/// g(s) = exp(−1/sin²(πs)), zero at integers.
fn deep_zero(s: f64) -> f64 {
    let sin = (std::f64::consts::PI * s).sin();
    if s.fract() == 0.0 || sin == 0.0 {
        return 0.0;
    }
    (-1.0 / (sin * sin)).exp()
}

/// Window e^{−π|t|²} Π_j g(t_j), vanishing to infinite order on the integer
/// lattice and positive elsewhere.
pub fn class_k_window(t: &[f64]) -> f64 {
    let r2: f64 = t.iter().map(|v| v * v).sum();
    (-std::f64::consts::PI * r2).exp() * t.iter().map(|&s| deep_zero(s)).product::<f64>()
}

/// ln of [`class_k_window`], `None` on the integer lattice.
///
/// The window itself underflows to 0 within a few hundredths of a lattice
/// point; its logarithm stays finite there.
pub fn class_k_log_window(t: &[f64]) -> Option<f64> {
    let mut acc = -std::f64::consts::PI * t.iter().map(|v| v * v).sum::<f64>();
    for &s in t {
        let sin = (std::f64::consts::PI * s).sin();
        if s.fract() == 0.0 || sin == 0.0 {
            return None;
        }
        acc -= 1.0 / (sin * sin);
    }
    Some(acc)
}

/// S = ρ(F_σ φ) for φ the class-K window sampled on the phase-space grid.
pub fn class_k_generator(grid: Grid) -> SampledOperator {
    let window = PhaseSpaceMap::from_fn(grid, |z| Complex64::new(class_k_window(&[z.x, z.w]), 0.0));
    weyl_quantize(&symplectic_fourier(&window))
}

/// How a translate point was placed on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundingRecord {
    pub base: Vec<i64>,
    pub requested: PhaseSpacePoint,
    pub placed: PhaseSpacePoint,
    /// Euclidean distance between requested and placed.
    pub rounding: f64,
    /// The admissible rounding a^{|n|₁}/4.
    pub allowance: f64,
    pub accepted: bool,
}

/// Output of [`completeness_residual`].
#[derive(Clone, Debug, PartialEq)]
pub struct CompletenessReport {
    pub rounding: Vec<RoundingRecord>,
    /// curves[target][M − 1] = distance from the target to the span of the
    /// first M accepted translates.
    pub curves: Vec<Vec<f64>>,
}

/// Hilbert-Schmidt distance from each target to span{α_{λ_1}S, …, α_{λ_M}S}
/// for M = 1, 2, … over the accepted points of Λ.
pub fn completeness_residual(
    s: &SampledOperator,
    lambda: &TranslateSet,
    targets: &[SampledOperator],
) -> Result<CompletenessReport, TranslatesError> {
    let grid = *s.grid();
    let mut rounding = Vec::new();
    let mut basis = Vec::new();
    for point in lambda.points() {
        if point.base.len() != 2 {
            return Err(TranslatesError::UnsupportedDimension(point.base.len() / 2));
        }
        let pos = point.position();
        let requested = PhaseSpacePoint::new(pos[0], pos[1]);
        let a = (requested.x / grid.dx()).round() as i64;
        let b = (requested.w / grid.dw()).round() as i64;
        let placed = grid.point(a, b);
        let dist = ((placed.x - requested.x).powi(2) + (placed.w - requested.w).powi(2)).sqrt();
        let allowance = lambda.decay().powi(point.base_norm1() as i32) / 4.0;
        let accepted = dist < allowance;
        if accepted {
            basis.push(heisenberg_translate(s, placed)?);
        }
        rounding.push(RoundingRecord {
            base: point.base.clone(),
            requested,
            placed,
            rounding: dist,
            allowance,
            accepted,
        });
    }
    if basis.is_empty() {
        return Err(TranslatesError::NoTranslates);
    }
    for t in targets {
        if t.grid() != &grid {
            return Err(QhaError::GridMismatch {
                left_n: grid.n(),
                left_l: grid.l(),
                right_n: t.grid().n(),
                right_l: t.grid().l(),
            }
            .into());
        }
    }
    let m = basis.len();
    let gram = DMatrix::from_fn(m, m, |i, j| {
        basis[j].trace_pairing(&basis[i]).unwrap_or_default()
    });
    let mut curves = Vec::with_capacity(targets.len());
    for t in targets {
        let rhs: Vec<Complex64> = basis
            .iter()
            .map(|v| t.trace_pairing(v).unwrap_or_default())
            .collect();
        let mut curve = Vec::with_capacity(m);
        for size in 1..=m {
            let coeffs = ridge_solve(&gram.view((0, 0), (size, size)).into_owned(), &rhs[..size])?;
            let mut approx = SampledOperator::zero(grid);
            for (c, v) in coeffs.iter().zip(&basis) {
                approx = approx.add(&v.scale(*c))?;
            }
            curve.push(t.sub(&approx)?.hs_norm());
        }
        curves.push(curve);
    }
    Ok(CompletenessReport { rounding, curves })
}

/// Solve (G + ε·max diag·I) x = b by Cholesky.
fn ridge_solve(gram: &DMatrix<Complex64>, rhs: &[Complex64]) -> Result<Vec<Complex64>, TranslatesError> {
    let size = gram.nrows();
    let max_diag = (0..size).map(|i| gram[(i, i)].re).fold(0.0, f64::max);
    let mut g = gram.clone();
    for i in 0..size {
        g[(i, i)] += Complex64::new(GRAM_RIDGE * max_diag, 0.0);
    }
    let condition = || {
        let eig = g.clone().symmetric_eigenvalues();
        let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    };
    if max_diag <= 0.0 {
        return Err(TranslatesError::SingularGram {
            size,
            condition: f64::INFINITY,
        });
    }
    let chol = g.clone().cholesky().ok_or_else(|| TranslatesError::SingularGram {
        size,
        condition: condition(),
    })?;
    let x = chol.solve(&DVector::from_column_slice(rhs));
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(TranslatesError::SingularGram {
            size,
            condition: condition(),
        });
    }
    Ok(x.iter().copied().collect())
}
