//! Operators in the tensor Gabor basis {π(m)ψ ⊗ π(k)ψ}.
//!
//! An operator is a finite map (m, k) -> c_{m,k} = ⟨U π(m)ψ, π(k)ψ⟩. With the
//! convention (φ₁ ⊗ φ₂)(f) = ⟨f, φ₁⟩ φ₂ the operator maps π(m)ψ to
//! Σ_k c_{m,k} π(k)ψ, so the dense embedding used for singular values has
//! rows indexed by m (input basis) and columns by k (output basis).
//!
//! Integer translation α_i acts as the index shift (m, k) -> (m + i, k + i)
//! with no phase, since π(i₁)π(i₂) = π(i₁ + i₂) on the integer lattice.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;
use thiserror::Error;

use crate::lattice::{IndexPair, LatticeError, LatticePoint};
use crate::svd::{self, SvdError};

/// Singular values below this fraction of the largest one are dropped.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("operators live over different dimensions: d = {left} vs d = {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error(transparent)]
    Svd(#[from] SvdError),
    #[error("Schatten index p = {0} is not allowed; need p >= 1 (or infinity)")]
    InvalidSchattenIndex(f64),
    #[error("coefficient at {0} is not finite")]
    NonFinite(IndexPair),
    #[error("duplicate coefficient at {0}")]
    DuplicateEntry(IndexPair),
}

/// Nonincreasing list of nonzero singular values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SingularSpectrum {
    values: Vec<f64>,
}

impl SingularSpectrum {
    /// Sort nonincreasing and drop values below `RANK_TOLERANCE` times the
    /// largest (and exact zeros).
    pub fn from_values(mut values: Vec<f64>) -> Self {
        values.retain(|v| *v > 0.0);
        values.sort_by(|a, b| b.total_cmp(a));
        if let Some(&top) = values.first() {
            let cutoff = top * RANK_TOLERANCE;
            values.retain(|v| *v >= cutoff);
        }
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn largest(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// l^p norm of the values; `p = f64::INFINITY` gives the largest value.
    pub fn schatten_norm(&self, p: f64) -> Result<f64, OperatorError> {
        check_schatten_index(p)?;
        let top = self.largest();
        if top == 0.0 {
            return Ok(0.0);
        }
        if p.is_infinite() {
            return Ok(top);
        }
        let sum: f64 = self.values.iter().map(|v| (v / top).powf(p)).sum();
        Ok(top * sum.powf(1.0 / p))
    }

    /// Largest elementwise difference after sorting; infinite when the
    /// lengths differ.
    pub fn max_deviation(&self, other: &SingularSpectrum) -> f64 {
        if self.len() != other.len() {
            return f64::INFINITY;
        }
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_schatten_index(p: f64) -> Result<(), OperatorError> {
    if p.is_nan() || p < 1.0 {
        Err(OperatorError::InvalidSchattenIndex(p))
    } else {
        Ok(())
    }
}

/// Finitely supported coefficient map of an operator in the Gabor basis.
#[derive(Clone, Debug, PartialEq)]
pub struct GaborOperator {
    d: usize,
    entries: BTreeMap<IndexPair, Complex64>,
}

impl GaborOperator {
    pub fn zero(d: usize) -> Self {
        Self {
            d,
            entries: BTreeMap::new(),
        }
    }

    pub fn rank_one(m: LatticePoint, k: LatticePoint, c: Complex64) -> Result<Self, OperatorError> {
        let pair = IndexPair::new(m, k)?;
        Self::from_entries(pair.d(), [(pair, c)])
    }

    /// Build from explicit coefficients. Zero coefficients are skipped,
    /// repeated indices are an error.
    pub fn from_entries(
        d: usize,
        entries: impl IntoIterator<Item = (IndexPair, Complex64)>,
    ) -> Result<Self, OperatorError> {
        let mut out = Self::zero(d);
        for (pair, c) in entries {
            out.check_pair(&pair)?;
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(OperatorError::NonFinite(pair));
            }
            if out.entries.contains_key(&pair) {
                return Err(OperatorError::DuplicateEntry(pair));
            }
            if c != Complex64::new(0.0, 0.0) {
                out.entries.insert(pair, c);
            }
        }
        Ok(out)
    }

    /// Coefficient-identity Σ π(m)ψ ⊗ π(m)ψ over the given points.
    pub fn identity_on<'a>(
        d: usize,
        points: impl IntoIterator<Item = &'a LatticePoint>,
    ) -> Result<Self, OperatorError> {
        Self::from_entries(
            d,
            points
                .into_iter()
                .map(|p| Ok((IndexPair::new(p.clone(), p.clone())?, Complex64::new(1.0, 0.0))))
                .collect::<Result<Vec<_>, OperatorError>>()?,
        )
    }

    fn check_pair(&self, pair: &IndexPair) -> Result<(), OperatorError> {
        if pair.d() != self.d {
            return Err(OperatorError::DimensionMismatch {
                left: self.d,
                right: pair.d(),
            });
        }
        Ok(())
    }

    fn check_same_d(&self, other: &Self) -> Result<(), OperatorError> {
        if self.d != other.d {
            return Err(OperatorError::DimensionMismatch {
                left: self.d,
                right: other.d,
            });
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of stored (nonzero) coefficients.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&IndexPair, &Complex64)> {
        self.entries.iter()
    }

    pub fn coefficient(&self, pair: &IndexPair) -> Complex64 {
        self.entries.get(pair).copied().unwrap_or_default()
    }

    /// Add `c` at `pair`, removing the entry if the sum is exactly zero.
    pub(crate) fn accumulate(&mut self, pair: IndexPair, c: Complex64) {
        let slot = self.entries.entry(pair);
        match slot {
            std::collections::btree_map::Entry::Vacant(v) => {
                if c != Complex64::default() {
                    v.insert(c);
                }
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = *o.get() + c;
                if sum == Complex64::default() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    /// Heisenberg translation α_i by an integer lattice point.
    pub fn translate(&self, shift: &LatticePoint) -> Result<Self, OperatorError> {
        if shift.d() != self.d {
            return Err(OperatorError::DimensionMismatch {
                left: self.d,
                right: shift.d(),
            });
        }
        let mut entries = BTreeMap::new();
        for (pair, c) in &self.entries {
            entries.insert(pair.shifted(shift)?, *c);
        }
        Ok(Self { d: self.d, entries })
    }

    pub fn adjoint(&self) -> Self {
        Self {
            d: self.d,
            entries: self
                .entries
                .iter()
                .map(|(pair, c)| (pair.swapped(), c.conj()))
                .collect(),
        }
    }

    /// The product `self ∘ other`: first `other`, then `self`.
    pub fn compose(&self, other: &Self) -> Result<Self, OperatorError> {
        self.check_same_d(other)?;
        let mut by_row: HashMap<&LatticePoint, Vec<(&LatticePoint, Complex64)>> = HashMap::new();
        for (pair, c) in &self.entries {
            by_row.entry(&pair.m).or_default().push((&pair.k, *c));
        }
        let mut out = Self::zero(self.d);
        for (pair, c_other) in &other.entries {
            if let Some(row) = by_row.get(&pair.k) {
                for (k, c_self) in row {
                    out.accumulate(
                        IndexPair {
                            m: pair.m.clone(),
                            k: (*k).clone(),
                        },
                        c_other * c_self,
                    );
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, a: Complex64) -> Self {
        let mut out = Self::zero(self.d);
        for (pair, c) in &self.entries {
            out.accumulate(pair.clone(), c * a);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self, OperatorError> {
        self.check_same_d(other)?;
        let mut out = self.clone();
        for (pair, c) in &other.entries {
            out.accumulate(pair.clone(), *c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, OperatorError> {
        self.check_same_d(other)?;
        let mut out = self.clone();
        for (pair, c) in &other.entries {
            out.accumulate(pair.clone(), -*c);
        }
        Ok(out)
    }

    /// ⟨S, T⟩ = tr(S T*) = Σ c^S conj(c^T).
    pub fn trace_pairing(&self, other: &Self) -> Result<Complex64, OperatorError> {
        self.check_same_d(other)?;
        let (small, large, flip) = if self.len() <= other.len() {
            (self, other, false)
        } else {
            (other, self, true)
        };
        let mut acc = Complex64::default();
        for (pair, c) in &small.entries {
            if let Some(e) = large.entries.get(pair) {
                acc += if flip { e * c.conj() } else { c * e.conj() };
            }
        }
        Ok(acc)
    }

    /// tr(U) = Σ_m c_{m,m}.
    pub fn trace(&self) -> Complex64 {
        self.entries
            .iter()
            .filter(|(pair, _)| pair.m == pair.k)
            .map(|(_, c)| *c)
            .sum()
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.entries.values().map(Complex64::norm_sqr).sum()
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.entries.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Split into the part supported on `window` and the rest.
    pub fn split_by<F: Fn(&IndexPair) -> bool>(&self, inside: F) -> (Self, Self) {
        let mut a = Self::zero(self.d);
        let mut b = Self::zero(self.d);
        for (pair, c) in &self.entries {
            if inside(pair) {
                a.entries.insert(pair.clone(), *c);
            } else {
                b.entries.insert(pair.clone(), *c);
            }
        }
        (a, b)
    }

    /// Singular values of the dense embedding (rows m, columns k).
    ///
    /// The embedding is block diagonal after permuting rows and columns by
    /// the connected components of the row/column incidence graph, so each
    /// component is factored on its own.
    pub fn singular_values(&self) -> Result<SingularSpectrum, OperatorError> {
        let mut rows: HashMap<&LatticePoint, usize> = HashMap::new();
        let mut cols: HashMap<&LatticePoint, usize> = HashMap::new();
        for pair in self.entries.keys() {
            let next = rows.len();
            rows.entry(&pair.m).or_insert(next);
            let next = cols.len();
            cols.entry(&pair.k).or_insert(next);
        }
        let n_rows = rows.len();
        let mut uf = UnionFind::new(n_rows + cols.len());
        for pair in self.entries.keys() {
            uf.union(rows[&pair.m], n_rows + cols[&pair.k]);
        }
        let mut blocks: HashMap<usize, Block> = HashMap::new();
        for (pair, c) in &self.entries {
            let r = rows[&pair.m];
            let k = cols[&pair.k];
            let block = blocks.entry(uf.find(r)).or_default();
            let next = block.rows.len();
            let rr = *block.rows.entry(r).or_insert(next);
            let next = block.cols.len();
            let cc = *block.cols.entry(k).or_insert(next);
            block.entries.push((rr, cc, *c));
        }
        let mut values = Vec::with_capacity(self.entries.len());
        let mut roots: Vec<usize> = blocks.keys().copied().collect();
        roots.sort_unstable();
        for root in roots {
            let block = &blocks[&root];
            let (nr, nc) = (block.rows.len(), block.cols.len());
            if block.entries.len() == 1 {
                values.push(block.entries[0].2.norm());
                continue;
            }
            let mut dense = vec![Complex64::default(); nr * nc];
            for &(r, c, v) in &block.entries {
                dense[r * nc + c] = v;
            }
            values.extend(svd::singular_values(&dense, nr, nc)?);
        }
        Ok(SingularSpectrum::from_values(values))
    }

    /// ‖U‖_{T^p}; `p = f64::INFINITY` is the operator norm.
    pub fn schatten_norm(&self, p: f64) -> Result<f64, OperatorError> {
        check_schatten_index(p)?;
        if p == 2.0 {
            return Ok(self.frobenius_norm_sqr().sqrt());
        }
        self.singular_values()?.schatten_norm(p)
    }
}

#[derive(Default)]
struct Block {
    rows: HashMap<usize, usize>,
    cols: HashMap<usize, usize>,
    entries: Vec<(usize, usize, Complex64)>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}
