//! Frames of integer translates in T^p, p > 2.
//!
//! A plan fixes a finite window of basis pairs (m, k), a capacity N_{m,k} for
//! each, and pairwise disjoint index sets I_{m,k} ⊂ Z^{2d} of those sizes. The
//! generator is
//!
//! ```text
//! S = Σ_{(m,k)} N_{m,k}^{-1/2} Σ_{i ∈ I_{m,k}} π(m−i)ψ ⊗ π(k−i)ψ
//! ```
//!
//! and the analysis functional attached to λ ∈ I_{m,k} reads off
//! N_{m,k}^{-1/2} c_{m,k}(U). The frame operator E(U) = Σ_λ T_λ(U) α_λ S
//! reproduces every window coefficient of U and adds a residual whose entries
//! sit at (m + ĩ − i, k + ĩ − i) for i ≠ ĩ, all in distinct rows and columns
//! when the separation condition holds.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::{Hash, Hasher};

use num_bigint::{BigInt, BigUint};
use num_complex::Complex64;
use num_traits::Zero;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::lattice::{IndexPair, LatticeError, LatticePoint, PairOrdering, MAX_COORDINATE_BITS};
use crate::operator::{GaborOperator, OperatorError, SingularSpectrum};

/// Relative slack used when comparing capacities and budgets against their
/// targets, so that exact equalities like 64^{-1} = 1/64 are not lost to
/// rounding in `powf`.
pub const BUDGET_SLACK: f64 = 1e-12;

/// Default number of Neumann steps.
pub const NEUMANN_ITERATIONS: usize = 40;

/// Neumann iteration stops once the relative error drops below this.
pub const NEUMANN_STOP: f64 = 1e-12;

/// Capacities beyond this are not representable exactly as f64 weights.
const MAX_CAPACITY: f64 = 9_007_199_254_740_992.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("p = {0} is not allowed: the construction requires p > 2")]
    InvalidP(f64),
    #[error("the window of basis pairs is empty")]
    EmptyWindow,
    #[error("capacity for {0} must be at least 1")]
    ZeroCapacity(IndexPair),
    #[error("capacity for {pair} would be about {required:e}, beyond the supported range")]
    CapacityOverflow { pair: IndexPair, required: f64 },
    #[error("budget {budget} exceeds the limit 2^(-p/2) = {limit}")]
    BudgetExceeded { budget: f64, limit: f64 },
    #[error("greedy pick {pick} for pair {pair} needs more than {limit} bits per coordinate")]
    PickOverflow { pair: IndexPair, pick: u64, limit: u64 },
    #[error("index {0} belongs to more than one index set")]
    Overlap(LatticePoint),
    #[error("index set for {pair} has {found} elements, capacity is {expected}")]
    FamilyMismatch { pair: IndexPair, expected: u64, found: u64 },
    #[error("index sets and capacities cover different pairs (first difference at {0})")]
    WindowMismatch(IndexPair),
    #[error("two generator terms land on {0}; the index family violates the separation condition")]
    Collision(IndexPair),
    #[error("stored generator differs from the one rebuilt from capacities and index sets")]
    GeneratorMismatch,
    #[error("operator has coefficient at {0}, outside the plan window")]
    OutsideWindow(IndexPair),
    #[error("dimension mismatch: d = {left} vs d = {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("Neumann iteration is not contracting: error ratio {ratio} at step {step}")]
    NonContraction { step: usize, ratio: f64 },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

fn check_p(p: f64) -> Result<(), FrameError> {
    if p.is_finite() && p > 2.0 {
        Ok(())
    } else {
        Err(FrameError::InvalidP(p))
    }
}

/// Capacities N_{m,k} over a finite window.
#[derive(Clone, Debug, PartialEq)]
pub struct CapacitySchedule {
    p: f64,
    d: usize,
    capacities: BTreeMap<IndexPair, u64>,
    budget: f64,
}

impl CapacitySchedule {
    /// A schedule whose budget Σ N^{1−p/2} stays within 2^{-p/2}.
    pub fn new(p: f64, capacities: BTreeMap<IndexPair, u64>) -> Result<Self, FrameError> {
        let schedule = Self::unbounded(p, capacities)?;
        let limit = budget_limit(p);
        if schedule.budget > limit * (1.0 + BUDGET_SLACK) {
            return Err(FrameError::BudgetExceeded {
                budget: schedule.budget,
                limit,
            });
        }
        Ok(schedule)
    }

    /// Like [`CapacitySchedule::new`] but without the budget limit. Useful
    /// for small hand-made plans; the frame bound need not be below 1.
    pub fn unbounded(p: f64, capacities: BTreeMap<IndexPair, u64>) -> Result<Self, FrameError> {
        check_p(p)?;
        let d = capacities
            .keys()
            .next()
            .ok_or(FrameError::EmptyWindow)?
            .d();
        for (pair, &n) in &capacities {
            if pair.d() != d {
                return Err(FrameError::DimensionMismatch {
                    left: d,
                    right: pair.d(),
                });
            }
            if n == 0 {
                return Err(FrameError::ZeroCapacity(pair.clone()));
            }
        }
        let budget = capacities
            .values()
            .map(|&n| (n as f64).powf(1.0 - p / 2.0))
            .sum();
        Ok(Self {
            p,
            d,
            capacities,
            budget,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn capacities(&self) -> &BTreeMap<IndexPair, u64> {
        &self.capacities
    }

    pub fn capacity(&self, pair: &IndexPair) -> Option<u64> {
        self.capacities.get(pair).copied()
    }

    pub fn contains(&self, pair: &IndexPair) -> bool {
        self.capacities.contains_key(pair)
    }

    /// Σ N^{1−p/2} over the window.
    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// budget^{2/p}, the bound on ‖E − Id‖.
    pub fn frame_bound(&self) -> f64 {
        self.budget.powf(2.0 / self.p)
    }

    /// Σ N over the window.
    pub fn total(&self) -> u64 {
        self.capacities.values().sum()
    }
}

/// 2^{-p/2}.
pub fn budget_limit(p: f64) -> f64 {
    2f64.powf(-p / 2.0)
}

/// Weight 3^{-(|m|₁+|k|₁)} / 2^{4d}; summed over all pairs it totals 1.
pub fn capacity_weight(pair: &IndexPair) -> f64 {
    let norm = pair.norm1();
    let exponent = u32::try_from(&norm).unwrap_or(u32::MAX);
    let d = pair.d() as i32;
    3f64.powi(-(exponent.min(i32::MAX as u32) as i32)) * 2f64.powi(-4 * d)
}

/// Smallest N ≥ 1 with N^{1−p/2} ≤ 2^{-p/2}·w(m,k) for every window pair.
pub fn default_capacities(p: f64, window: &[IndexPair]) -> Result<CapacitySchedule, FrameError> {
    check_p(p)?;
    if window.is_empty() {
        return Err(FrameError::EmptyWindow);
    }
    let exponent = 1.0 - p / 2.0;
    let mut capacities = BTreeMap::new();
    for pair in window {
        let target = budget_limit(p) * capacity_weight(pair);
        let fits = |n: f64| n.powf(exponent) <= target * (1.0 + BUDGET_SLACK);
        let estimate = target.powf(1.0 / exponent);
        if !estimate.is_finite() || estimate > MAX_CAPACITY {
            return Err(FrameError::CapacityOverflow {
                pair: pair.clone(),
                required: estimate,
            });
        }
        let mut n = estimate.ceil().max(1.0);
        while !fits(n) {
            n += 1.0;
        }
        while n > 1.0 && fits(n - 1.0) {
            n -= 1.0;
        }
        capacities.insert(pair.clone(), n as u64);
    }
    CapacitySchedule::new(p, capacities)
}

/// Disjoint index sets I_{m,k}.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexFamily {
    d: usize,
    sets: BTreeMap<IndexPair, Vec<LatticePoint>>,
    reverse: HashMap<LatticePoint, IndexPair>,
}

impl IndexFamily {
    /// Checks dimensions and pairwise disjointness only; the separation
    /// condition is left to [`verify_condition2`].
    pub fn new(d: usize, sets: BTreeMap<IndexPair, Vec<LatticePoint>>) -> Result<Self, FrameError> {
        let mut reverse = HashMap::new();
        for (pair, indices) in &sets {
            if pair.d() != d {
                return Err(FrameError::DimensionMismatch {
                    left: d,
                    right: pair.d(),
                });
            }
            for i in indices {
                if i.d() != d {
                    return Err(FrameError::DimensionMismatch { left: d, right: i.d() });
                }
                if reverse.insert(i.clone(), pair.clone()).is_some() {
                    return Err(FrameError::Overlap(i.clone()));
                }
            }
        }
        Ok(Self { d, sets, reverse })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn sets(&self) -> &BTreeMap<IndexPair, Vec<LatticePoint>> {
        &self.sets
    }

    pub fn into_sets(self) -> BTreeMap<IndexPair, Vec<LatticePoint>> {
        self.sets
    }

    /// The pair whose set contains λ.
    pub fn owner(&self, lambda: &LatticePoint) -> Option<&IndexPair> {
        self.reverse.get(lambda)
    }

    /// Total number of indices.
    pub fn total(&self) -> usize {
        self.reverse.len()
    }

    /// All indices with their owning pair, pairs in map order.
    pub fn indices(&self) -> impl Iterator<Item = (&IndexPair, &LatticePoint)> {
        self.sets
            .iter()
            .flat_map(|(pair, set)| set.iter().map(move |i| (pair, i)))
    }

    /// Check that every window pair has exactly N_{m,k} indices.
    pub fn check_against(&self, schedule: &CapacitySchedule) -> Result<(), FrameError> {
        if schedule.d() != self.d {
            return Err(FrameError::DimensionMismatch {
                left: schedule.d(),
                right: self.d,
            });
        }
        for pair in self.sets.keys() {
            if !schedule.contains(pair) {
                return Err(FrameError::WindowMismatch(pair.clone()));
            }
        }
        for (pair, &n) in schedule.capacities() {
            let found = self
                .sets
                .get(pair)
                .ok_or_else(|| FrameError::WindowMismatch(pair.clone()))?
                .len() as u64;
            if found != n {
                return Err(FrameError::FamilyMismatch {
                    pair: pair.clone(),
                    expected: n,
                    found,
                });
            }
        }
        Ok(())
    }
}

/// Greedy choice of the index sets.
///
/// Window pairs are processed in `ordering`; every pick sits on the first
/// axis at one more than 3·P + 4·(A + B), where P is the largest |n|₁ + |l|₁
/// among the pairs processed so far (current one included), A the largest
/// norm among indices of earlier sets, and B the largest norm among earlier
/// picks of the current set.
pub fn greedy_index_sets(
    schedule: &CapacitySchedule,
    ordering: &PairOrdering,
) -> Result<IndexFamily, FrameError> {
    if ordering.d() != schedule.d() {
        return Err(FrameError::DimensionMismatch {
            left: ordering.d(),
            right: schedule.d(),
        });
    }
    let d = schedule.d();
    let mut pairs: Vec<IndexPair> = schedule.capacities().keys().cloned().collect();
    ordering.sort(&mut pairs)?;
    let mut pair_norm = BigUint::zero();
    let mut previous = BigUint::zero();
    let mut sets = BTreeMap::new();
    for pair in pairs {
        let n = schedule.capacity(&pair).unwrap_or(0);
        pair_norm = pair_norm.max(pair.norm1());
        let mut current = BigUint::zero();
        let mut picks = Vec::with_capacity(n.min(1 << 16) as usize);
        for pick in 1..=n {
            let magnitude: BigUint = 3u32 * &pair_norm + 4u32 * (&previous + &current) + 1u32;
            if magnitude.bits() > MAX_COORDINATE_BITS {
                return Err(FrameError::PickOverflow {
                    pair,
                    pick,
                    limit: MAX_COORDINATE_BITS,
                });
            }
            picks.push(LatticePoint::along_first_axis(d, BigInt::from(magnitude.clone()))?);
            current = magnitude;
        }
        previous = previous.max(current);
        sets.insert(pair, picks);
    }
    IndexFamily::new(d, sets)
}

/// A quadruple (i, ĩ, j, j̃) for which one of the separation sums vanishes.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Condition2Violation {
    pub i: LatticePoint,
    pub i_tilde: LatticePoint,
    pub j: LatticePoint,
    pub j_tilde: LatticePoint,
    /// The pair (m, k) owning i.
    pub i_owner: IndexPair,
    /// The pair (n, l) owning j.
    pub j_owner: IndexPair,
    /// k − l + ĩ − j̃ + j − i = 0.
    pub column: bool,
    /// m − n + ĩ − j̃ + j − i = 0.
    pub row: bool,
}

/// Flattened view: every ordered pair (i, ĩ) with i ≠ ĩ and the residual
/// position (m + ĩ − i, k + ĩ − i) it produces.
struct OrderedPairs<'a> {
    indices: Vec<(&'a IndexPair, &'a LatticePoint)>,
}

impl<'a> OrderedPairs<'a> {
    fn new(family: &'a IndexFamily) -> Self {
        Self {
            indices: family.indices().collect(),
        }
    }

    fn count(&self) -> usize {
        self.indices.len()
    }

    fn position(&self, a: usize, b: usize) -> Result<IndexPair, LatticeError> {
        let (owner, i) = self.indices[a];
        let (_, i_tilde) = self.indices[b];
        owner.shifted(&i_tilde.checked_sub(i)?)
    }

    fn violation(&self, q: (usize, usize, usize, usize), column: bool, row: bool) -> Condition2Violation {
        let (a, b, c, e) = q;
        Condition2Violation {
            i: self.indices[a].1.clone(),
            i_tilde: self.indices[b].1.clone(),
            j: self.indices[c].1.clone(),
            j_tilde: self.indices[e].1.clone(),
            i_owner: self.indices[a].0.clone(),
            j_owner: self.indices[c].0.clone(),
            column,
            row,
        }
    }
}

/// Exhaustive check of the separation condition over all quadruples.
///
/// Both sums are differences of residual positions: the column sum is
/// (k + ĩ − i) − (l + j̃ − j) and the row sum is (m + ĩ − i) − (n + j̃ − j).
/// Every admissible quadruple is visited; cost grows with the fourth power
/// of the family size.
pub fn verify_condition2(family: &IndexFamily) -> Result<Vec<Condition2Violation>, FrameError> {
    let flat = OrderedPairs::new(family);
    let n = flat.count();
    let mut ordered = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b {
                ordered.push(((a, b), flat.position(a, b)?));
            }
        }
    }
    let mut out = Vec::new();
    for (x, (q1, pos1)) in ordered.iter().enumerate() {
        for (y, (q2, pos2)) in ordered.iter().enumerate() {
            if x == y {
                continue;
            }
            let column = pos1.k == pos2.k;
            let row = pos1.m == pos2.m;
            if column || row {
                out.push(flat.violation((q1.0, q1.1, q2.0, q2.1), column, row));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Same result as [`verify_condition2`], found by grouping residual positions
/// by hash instead of comparing all quadruples.
pub fn condition2_violations_fast(family: &IndexFamily) -> Result<Vec<Condition2Violation>, FrameError> {
    let flat = OrderedPairs::new(family);
    let n = flat.count();
    let mut rows: Vec<(u64, u32, u32)> = Vec::new();
    let mut cols: Vec<(u64, u32, u32)> = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let pos = flat.position(a, b)?;
            rows.push((hash_point(&pos.m), a as u32, b as u32));
            cols.push((hash_point(&pos.k), a as u32, b as u32));
        }
    }
    let mut hits: BTreeMap<(usize, usize, usize, usize), (bool, bool)> = BTreeMap::new();
    for (keys, is_column) in [(&mut cols, true), (&mut rows, false)] {
        keys.sort_unstable();
        let mut start = 0;
        while start < keys.len() {
            let mut end = start + 1;
            while end < keys.len() && keys[end].0 == keys[start].0 {
                end += 1;
            }
            for x in start..end {
                for y in start..end {
                    if x == y {
                        continue;
                    }
                    let (a, b) = (keys[x].1 as usize, keys[x].2 as usize);
                    let (c, e) = (keys[y].1 as usize, keys[y].2 as usize);
                    let (p1, p2) = (flat.position(a, b)?, flat.position(c, e)?);
                    let equal = if is_column { p1.k == p2.k } else { p1.m == p2.m };
                    if equal {
                        let flags = hits.entry((a, b, c, e)).or_default();
                        if is_column {
                            flags.0 = true;
                        } else {
                            flags.1 = true;
                        }
                    }
                }
            }
            start = end;
        }
    }
    let mut out: Vec<_> = hits
        .into_iter()
        .map(|(q, (column, row))| flat.violation(q, column, row))
        .collect();
    out.sort();
    Ok(out)
}

fn hash_point(p: &LatticePoint) -> u64 {
    let mut h = DefaultHasher::new();
    p.hash(&mut h);
    h.finish()
}

/// A pair i ≠ ĩ with k − k̃ + ĩ − i = 0 or m − m̃ + ĩ − i = 0.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Condition1Violation {
    pub i: LatticePoint,
    pub i_tilde: LatticePoint,
    pub column: bool,
    pub row: bool,
}

/// Pairwise check that the generator terms (m − i, k − i) use distinct rows
/// and distinct columns. Implied by the quadruple condition.
pub fn verify_condition1(family: &IndexFamily) -> Result<Vec<Condition1Violation>, FrameError> {
    let positions: Vec<(&LatticePoint, IndexPair)> = family
        .indices()
        .map(|(owner, i)| Ok((i, owner.shifted(&i.neg())?)))
        .collect::<Result<_, LatticeError>>()?;
    let mut out = Vec::new();
    for (x, (i, a)) in positions.iter().enumerate() {
        for (y, (i_tilde, b)) in positions.iter().enumerate() {
            if x == y {
                continue;
            }
            let column = a.k == b.k;
            let row = a.m == b.m;
            if column || row {
                out.push(Condition1Violation {
                    i: (*i).clone(),
                    i_tilde: (*i_tilde).clone(),
                    column,
                    row,
                });
            }
        }
    }
    Ok(out)
}

/// The generator S with coefficient N^{-1/2} at (m − i, k − i).
pub fn build_frame_generator(
    schedule: &CapacitySchedule,
    family: &IndexFamily,
) -> Result<GaborOperator, FrameError> {
    family.check_against(schedule)?;
    let mut entries: BTreeMap<IndexPair, Complex64> = BTreeMap::new();
    for (pair, set) in family.sets() {
        let n = schedule.capacity(pair).unwrap_or(1);
        let weight = Complex64::new((n as f64).sqrt().recip(), 0.0);
        for i in set {
            let at = pair.shifted(&i.neg())?;
            if entries.insert(at.clone(), weight).is_some() {
                return Err(FrameError::Collision(at));
            }
        }
    }
    Ok(GaborOperator::from_entries(schedule.d(), entries)?)
}

/// Capacities, index sets and the generator they define.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePlan {
    schedule: CapacitySchedule,
    family: IndexFamily,
    generator: GaborOperator,
}

impl FramePlan {
    pub fn new(schedule: CapacitySchedule, family: IndexFamily) -> Result<Self, FrameError> {
        let generator = build_frame_generator(&schedule, &family)?;
        Ok(Self {
            schedule,
            family,
            generator,
        })
    }

    /// Accept a stored generator only if it matches the rebuilt one exactly.
    pub fn with_generator(
        schedule: CapacitySchedule,
        family: IndexFamily,
        generator: GaborOperator,
    ) -> Result<Self, FrameError> {
        let plan = Self::new(schedule, family)?;
        if plan.generator != generator {
            return Err(FrameError::GeneratorMismatch);
        }
        Ok(plan)
    }

    /// Default capacities and greedy sets on the ℓ¹ window of the given
    /// radius.
    pub fn standard(p: f64, d: usize, radius: u64) -> Result<Self, FrameError> {
        check_p(p)?;
        let window = crate::lattice::l1_window(d, radius)?;
        let schedule = default_capacities(p, &window)?;
        let family = greedy_index_sets(&schedule, &PairOrdering::new(d)?)?;
        Self::new(schedule, family)
    }

    pub fn schedule(&self) -> &CapacitySchedule {
        &self.schedule
    }

    pub fn family(&self) -> &IndexFamily {
        &self.family
    }

    pub fn generator(&self) -> &GaborOperator {
        &self.generator
    }

    pub fn p(&self) -> f64 {
        self.schedule.p()
    }

    pub fn d(&self) -> usize {
        self.schedule.d()
    }

    /// Window pairs in map order.
    pub fn window(&self) -> impl Iterator<Item = &IndexPair> {
        self.schedule.capacities().keys()
    }

    /// The closed-form generator spectrum: N^{-1/2} with multiplicity N.
    pub fn generator_spectrum_closed_form(&self) -> SingularSpectrum {
        let mut values = Vec::with_capacity(self.schedule.total() as usize);
        for &n in self.schedule.capacities().values() {
            let v = (n as f64).sqrt().recip();
            values.extend(std::iter::repeat_n(v, n as usize));
        }
        SingularSpectrum::from_values(values)
    }

    /// (Σ N^{1−p/2})^{1/p}.
    pub fn generator_norm_closed_form(&self) -> f64 {
        self.schedule.budget().powf(1.0 / self.p())
    }

    fn check_d(&self, u: &GaborOperator) -> Result<(), FrameError> {
        if u.d() != self.d() {
            return Err(FrameError::DimensionMismatch {
                left: self.d(),
                right: u.d(),
            });
        }
        Ok(())
    }

    /// Restriction of `u` to the window and the remainder.
    pub fn split_window(&self, u: &GaborOperator) -> (GaborOperator, GaborOperator) {
        u.split_by(|pair| self.schedule.contains(pair))
    }
}

/// T_λ(U): N_{m,k}^{-1/2} c_{m,k}(U) when λ ∈ I_{m,k}, else 0.
pub fn analysis_coefficient(u: &GaborOperator, lambda: &LatticePoint, plan: &FramePlan) -> Complex64 {
    match plan.family.owner(lambda) {
        Some(pair) => {
            let n = plan.schedule.capacity(pair).unwrap_or(1);
            u.coefficient(pair) / (n as f64).sqrt()
        }
        None => Complex64::default(),
    }
}

/// Σ_{λ ∈ λ_set} T_λ(U) α_λ S.
///
/// λ values are deduplicated and visited in sorted order, so the result does
/// not depend on how the set is listed. The terms with λ equal to the source
/// index i all land on (m, k) with weight N^{-1} each; they are added as one
/// term card(I_{m,k} ∩ λ_set)/N · c_{m,k}, which is exactly c_{m,k} once the
/// whole set is covered.
pub fn frame_apply<'a>(
    u: &GaborOperator,
    plan: &FramePlan,
    lambda_set: impl IntoIterator<Item = &'a LatticePoint>,
) -> Result<GaborOperator, FrameError> {
    plan.check_d(u)?;
    let lambdas: BTreeSet<&LatticePoint> = lambda_set.into_iter().collect();
    let mut out = GaborOperator::zero(plan.d());
    let mut hits: BTreeMap<&IndexPair, u64> = BTreeMap::new();
    for lambda in lambdas {
        let Some(owner) = plan.family.owner(lambda) else {
            continue;
        };
        let t = analysis_coefficient(u, lambda, plan);
        if t == Complex64::default() {
            continue;
        }
        *hits.entry(owner).or_default() += 1;
        for (pair, set) in plan.family.sets() {
            let n = plan.schedule.capacity(pair).unwrap_or(1) as f64;
            let weight = n.sqrt().recip();
            for i in set {
                if i == lambda {
                    continue;
                }
                let at = pair.shifted(&lambda.checked_sub(i)?)?;
                out.accumulate(at, t * weight);
            }
        }
    }
    for (pair, count) in hits {
        let n = plan.schedule.capacity(pair).unwrap_or(1);
        out.accumulate(pair.clone(), u.coefficient(pair) * (count as f64 / n as f64));
    }
    Ok(out)
}

/// All indices of the plan.
pub fn all_indices(plan: &FramePlan) -> impl Iterator<Item = &LatticePoint> {
    plan.family.indices().map(|(_, i)| i)
}

/// The frame operator on the truncated space: E acts on the window part of
/// V and the identity on the rest.
///
/// The functionals only read window coefficients, so the plain sum is zero on
/// anything outside the window; completing it by the identity there keeps
/// E − Id = R∘P_W, where R(V) = E(V) − V on window-supported V. All residual
/// entries land outside the window, so (E − Id)² = 0 and
/// ‖E − Id‖ ≤ budget^{2/p} in every T^p norm.
pub fn frame_operator(v: &GaborOperator, plan: &FramePlan) -> Result<GaborOperator, FrameError> {
    let (inside, outside) = plan.split_window(v);
    let applied = frame_apply(&inside, plan, all_indices(plan))?;
    Ok(applied.add(&outside)?)
}

/// Closed-form singular values of E(U) − U for window-supported U:
/// N_{m̃,k̃}^{-1/2} N_{m,k}^{-1/2} |c_{m̃,k̃}| for every ĩ ∈ I_{m̃,k̃} and
/// every index i ≠ ĩ of any set.
pub fn residual_spectrum_closed_form(
    u: &GaborOperator,
    plan: &FramePlan,
) -> Result<SingularSpectrum, FrameError> {
    plan.check_d(u)?;
    let caps = plan.schedule.capacities();
    let mut values = Vec::new();
    for (pair, c) in u.entries() {
        let Some(&n_tilde) = caps.get(pair) else {
            return Err(FrameError::OutsideWindow(pair.clone()));
        };
        let base = c.norm() / (n_tilde as f64).sqrt();
        for (other, &n) in caps {
            let copies = if other == pair {
                n_tilde * (n - 1)
            } else {
                n_tilde * n
            };
            let v = base / (n as f64).sqrt();
            values.extend(std::iter::repeat_n(v, copies as usize));
        }
    }
    Ok(SingularSpectrum::from_values(values))
}

/// Result of [`neumann_reconstruct`].
#[derive(Clone, Debug, PartialEq)]
pub struct NeumannOutcome {
    /// The last iterate V_n.
    pub operator: GaborOperator,
    /// ‖E(V_n) − U‖_{T^p} / ‖U‖_{T^p} for n = 0, 1, ...
    pub relative_errors: Vec<f64>,
}

impl NeumannOutcome {
    /// Steps actually taken.
    pub fn steps(&self) -> usize {
        self.relative_errors.len().saturating_sub(1)
    }

    /// Successive error ratios; empty when the first error is already zero.
    pub fn ratios(&self) -> Vec<f64> {
        self.relative_errors
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

/// Solve E(V) = U by V_{n+1} = U + (Id − E)(V_n), V_0 = U.
///
/// Stops after `iterations` steps or once the relative error is below
/// [`NEUMANN_STOP`]; a step that increases the error is reported as
/// [`FrameError::NonContraction`].
pub fn neumann_reconstruct(
    u: &GaborOperator,
    plan: &FramePlan,
    iterations: usize,
) -> Result<NeumannOutcome, FrameError> {
    plan.check_d(u)?;
    let p = plan.p();
    let scale = u.schatten_norm(p)?;
    let mut v = u.clone();
    let mut error_op = frame_operator(&v, plan)?.sub(u)?;
    let mut relative_errors = vec![relative(error_op.schatten_norm(p)?, scale)];
    for step in 1..=iterations {
        if *relative_errors.last().unwrap_or(&0.0) < NEUMANN_STOP {
            break;
        }
        v = v.sub(&error_op)?;
        error_op = frame_operator(&v, plan)?.sub(u)?;
        let err = relative(error_op.schatten_norm(p)?, scale);
        let prev = relative_errors[relative_errors.len() - 1];
        if err > prev {
            return Err(FrameError::NonContraction {
                step,
                ratio: err / prev,
            });
        }
        relative_errors.push(err);
    }
    Ok(NeumannOutcome {
        operator: v,
        relative_errors,
    })
}

fn relative(err: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        err
    } else {
        err / scale
    }
}

/// Coefficients i.i.d. complex standard normal on the window pairs, then
/// scaled to unit T^p norm.
pub fn random_window_operator<R: Rng + ?Sized>(
    window: &[IndexPair],
    p: f64,
    rng: &mut R,
) -> Result<GaborOperator, FrameError> {
    let d = window.first().ok_or(FrameError::EmptyWindow)?.d();
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let entries: Vec<_> = window
        .iter()
        .map(|pair| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            (pair.clone(), Complex64::new(re * half, im * half))
        })
        .collect();
    let op = GaborOperator::from_entries(d, entries)?;
    let norm = op.schatten_norm(p)?;
    if norm == 0.0 {
        return Ok(op);
    }
    Ok(op.scale(Complex64::new(norm.recip(), 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn origin_window() -> Vec<IndexPair> {
        vec![IndexPair::origin(1)]
    }

    fn single_block(n: u64) -> FramePlan {
        let caps = BTreeMap::from([(IndexPair::origin(1), n)]);
        let schedule = CapacitySchedule::unbounded(4.0, caps).unwrap();
        let family = greedy_index_sets(&schedule, &PairOrdering::new(1).unwrap()).unwrap();
        FramePlan::new(schedule, family).unwrap()
    }

    #[test]
    fn capacities_at_origin() {
        let s4 = default_capacities(4.0, &origin_window()).unwrap();
        assert_eq!(s4.capacity(&IndexPair::origin(1)), Some(64));
        let s6 = default_capacities(6.0, &origin_window()).unwrap();
        assert_eq!(s6.capacity(&IndexPair::origin(1)), Some(12));
        let s3 = default_capacities(3.0, &origin_window()).unwrap();
        assert_eq!(s3.capacity(&IndexPair::origin(1)), Some(2048));
    }

    #[test]
    fn capacities_match_integer_scan() {
        for p in [2.5, 3.0, 4.0, 5.5, 6.0, 8.0] {
            let window = crate::lattice::l1_window(1, 1).unwrap();
            let schedule = default_capacities(p, &window).unwrap();
            assert!(schedule.budget() <= budget_limit(p) * (1.0 + BUDGET_SLACK));
            for pair in &window {
                let target = budget_limit(p) * capacity_weight(pair);
                let n = schedule.capacity(pair).unwrap();
                let ok = |k: u64| (k as f64).powf(1.0 - p / 2.0) <= target * (1.0 + BUDGET_SLACK);
                assert!(ok(n));
                assert!(n == 1 || !ok(n - 1));
            }
        }
    }

    #[test]
    fn p_at_most_two_rejected() {
        for p in [2.0, 1.5, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                default_capacities(p, &origin_window()),
                Err(FrameError::InvalidP(_))
            ));
        }
        assert!(matches!(default_capacities(4.0, &[]), Err(FrameError::EmptyWindow)));
    }

    #[test]
    fn budget_limit_enforced() {
        let caps = BTreeMap::from([(IndexPair::origin(1), 2)]);
        assert!(matches!(
            CapacitySchedule::new(4.0, caps.clone()),
            Err(FrameError::BudgetExceeded { .. })
        ));
        assert!(CapacitySchedule::unbounded(4.0, caps).is_ok());
    }

    #[test]
    fn greedy_pair_of_picks() {
        let plan = single_block(2);
        let set = &plan.family().sets()[&IndexPair::origin(1)];
        assert_eq!(set[0], LatticePoint::from_i64(&[1, 0]).unwrap());
        assert_eq!(set[1], LatticePoint::from_i64(&[5, 0]).unwrap());
        assert!(verify_condition2(plan.family()).unwrap().is_empty());
    }

    #[test]
    fn greedy_is_deterministic_and_separated() {
        let window = crate::lattice::l1_window(1, 1).unwrap();
        let schedule = default_capacities(6.0, &window).unwrap();
        let ordering = PairOrdering::new(1).unwrap();
        let a = greedy_index_sets(&schedule, &ordering).unwrap();
        let b = greedy_index_sets(&schedule, &ordering).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.total() as u64, schedule.total());
        assert!(condition2_violations_fast(&a).unwrap().is_empty());
        assert!(verify_condition1(&a).unwrap().is_empty());
    }

    #[test]
    fn greedy_overflow_names_pair_and_pick() {
        let caps = BTreeMap::from([(IndexPair::origin(1), 10_000)]);
        let schedule = CapacitySchedule::unbounded(4.0, caps).unwrap();
        match greedy_index_sets(&schedule, &PairOrdering::new(1).unwrap()) {
            Err(FrameError::PickOverflow { pair, pick, limit }) => {
                assert_eq!(pair, IndexPair::origin(1));
                assert_eq!(limit, MAX_COORDINATE_BITS);
                assert!(pick > 3000 && pick < 10_000);
            }
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn two_element_set_passes() {
        for (a, b) in [(3, 7), (-2, 9), (0, 1)] {
            let sets = BTreeMap::from([(
                IndexPair::origin(1),
                vec![
                    LatticePoint::from_i64(&[a, 0]).unwrap(),
                    LatticePoint::from_i64(&[b, 1]).unwrap(),
                ],
            )]);
            let family = IndexFamily::new(1, sets).unwrap();
            assert!(verify_condition2(&family).unwrap().is_empty());
        }
    }

    #[test]
    fn hand_built_violation_detected() {
        // I_A = {a, b} at A = ((0,0),(0,0)) and I_B = {e} at B = ((0,0), 2(b−a)).
        // With i = a, ĩ = b (in A) and j = e, j̃ = b: the column sum is
        // 0 − 2(b−a) + b − b + e − a, which vanishes for e = 2b − a.
        let a = LatticePoint::from_i64(&[1, 0]).unwrap();
        let b = LatticePoint::from_i64(&[5, 0]).unwrap();
        let e = LatticePoint::from_i64(&[9, 0]).unwrap();
        let block_a = IndexPair::origin(1);
        let block_b = IndexPair::from_i64(&[0, 0], &[8, 0]).unwrap();
        let sets = BTreeMap::from([
            (block_a.clone(), vec![a.clone(), b.clone()]),
            (block_b.clone(), vec![e.clone()]),
        ]);
        let family = IndexFamily::new(1, sets).unwrap();
        let found = verify_condition2(&family).unwrap();
        assert!(!found.is_empty());
        let target = Condition2Violation {
            i: a.clone(),
            i_tilde: b.clone(),
            j: e.clone(),
            j_tilde: b.clone(),
            i_owner: block_a.clone(),
            j_owner: block_b.clone(),
            column: true,
            row: false,
        };
        assert!(found.contains(&target));
        assert_eq!(found, condition2_violations_fast(&family).unwrap());
    }

    #[test]
    fn generator_support_and_spectrum() {
        let plan = FramePlan::standard(6.0, 1, 0).unwrap();
        assert_eq!(plan.generator().len(), 12);
        let svd = plan.generator().singular_values().unwrap();
        assert!(svd.max_deviation(&plan.generator_spectrum_closed_form()) < 1e-10);
        let norm = plan.generator().schatten_norm(6.0).unwrap();
        assert!((norm - plan.generator_norm_closed_form()).abs() < 1e-10 * norm);
    }

    #[test]
    fn stored_generator_must_match() {
        let plan = single_block(2);
        let tampered = plan.generator().scale(Complex64::new(2.0, 0.0));
        assert!(matches!(
            FramePlan::with_generator(plan.schedule().clone(), plan.family().clone(), tampered),
            Err(FrameError::GeneratorMismatch)
        ));
        assert!(FramePlan::with_generator(
            plan.schedule().clone(),
            plan.family().clone(),
            plan.generator().clone()
        )
        .is_ok());
    }

    #[test]
    fn collision_reported() {
        // i and ĩ in different blocks with m − i = m̃ − ĩ and k − i = k̃ − ĩ.
        let sets = BTreeMap::from([
            (IndexPair::origin(1), vec![LatticePoint::from_i64(&[1, 0]).unwrap()]),
            (
                IndexPair::from_i64(&[1, 0], &[1, 0]).unwrap(),
                vec![LatticePoint::from_i64(&[2, 0]).unwrap()],
            ),
        ]);
        let caps: BTreeMap<_, _> = sets.keys().map(|k| (k.clone(), 1)).collect();
        let schedule = CapacitySchedule::unbounded(4.0, caps).unwrap();
        let family = IndexFamily::new(1, sets).unwrap();
        assert!(matches!(
            build_frame_generator(&schedule, &family),
            Err(FrameError::Collision(_))
        ));
        assert!(!verify_condition1(&family).unwrap().is_empty());
    }

    #[test]
    fn analysis_coefficients() {
        let plan = single_block(2);
        let pair = IndexPair::origin(1);
        let u = GaborOperator::from_entries(1, [(pair.clone(), Complex64::new(1.0, 0.0))]).unwrap();
        let lambda = &plan.family().sets()[&pair][0];
        assert!((analysis_coefficient(&u, lambda, &plan) - Complex64::new(0.5f64.sqrt(), 0.0)).norm() < 1e-15);
        let outside = LatticePoint::from_i64(&[2, 0]).unwrap();
        assert_eq!(analysis_coefficient(&u, &outside, &plan), Complex64::default());
    }

    #[test]
    fn single_block_residual() {
        let plan = single_block(2);
        let c = Complex64::new(0.6, -0.8);
        let u = GaborOperator::from_entries(1, [(IndexPair::origin(1), c)]).unwrap();
        let applied = frame_apply(&u, &plan, all_indices(&plan)).unwrap();
        assert_eq!(applied.coefficient(&IndexPair::origin(1)), c);
        let residual = applied.sub(&u).unwrap();
        let closed = residual_spectrum_closed_form(&u, &plan).unwrap();
        assert_eq!(closed.len(), 2);
        assert!((closed.values()[0] - 0.5).abs() < 1e-15);
        assert!(residual.singular_values().unwrap().max_deviation(&closed) < 1e-12);
        assert!(residual_spectrum_closed_form(&GaborOperator::zero(1), &plan)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn residual_matches_closed_form_and_bound() {
        let plan = FramePlan::standard(6.0, 1, 1).unwrap();
        let window: Vec<_> = plan.window().cloned().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..3 {
            let u = random_window_operator(&window, 6.0, &mut rng).unwrap();
            let residual = frame_apply(&u, &plan, all_indices(&plan)).unwrap().sub(&u).unwrap();
            let svd = residual.singular_values().unwrap();
            let closed = residual_spectrum_closed_form(&u, &plan).unwrap();
            assert!(svd.max_deviation(&closed) < 1e-8);
            let ratio = residual.schatten_norm(6.0).unwrap() / u.schatten_norm(6.0).unwrap();
            assert!(ratio <= plan.schedule().frame_bound() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn neumann_converges() {
        let plan = FramePlan::standard(4.0, 1, 0).unwrap();
        let window: Vec<_> = plan.window().cloned().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_window_operator(&window, 4.0, &mut rng).unwrap();
        assert_eq!(neumann_reconstruct(&u, &plan, 0).unwrap().operator, u);
        let out = neumann_reconstruct(&u, &plan, NEUMANN_ITERATIONS).unwrap();
        assert!(out.ratios().iter().all(|&r| r <= 0.55));
        assert!(*out.relative_errors.last().unwrap() <= 1e-9);
    }

    #[test]
    fn frame_apply_zero_and_order_free() {
        let plan = single_block(3);
        assert!(frame_apply(&GaborOperator::zero(1), &plan, all_indices(&plan))
            .unwrap()
            .is_empty());
        let u = GaborOperator::from_entries(1, [(IndexPair::origin(1), Complex64::new(1.0, 2.0))]).unwrap();
        let mut reversed: Vec<_> = all_indices(&plan).collect();
        reversed.reverse();
        assert_eq!(
            frame_apply(&u, &plan, reversed).unwrap(),
            frame_apply(&u, &plan, all_indices(&plan)).unwrap()
        );
    }
}
