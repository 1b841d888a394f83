//! Lattice points of Z^{2d}, index pairs in Z^{2d} x Z^{2d}, and the canonical
//! enumeration of pairs used by the greedy index construction.
//!
//! Coordinates are arbitrary-precision integers capped at
//! [`MAX_COORDINATE_BITS`] bits. The greedy construction multiplies the pick
//! magnitude by at least four on every step, so realistic plans leave the
//! 64-bit range after a few dozen picks; the cap turns runaway growth into an
//! [`LatticeError::Overflow`] instead of unbounded memory use.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

/// Largest admissible bit length of a single lattice coordinate.
pub const MAX_COORDINATE_BITS: u64 = 8192;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("a lattice point needs a positive even number of coordinates, got {0}")]
    BadLength(usize),
    #[error("dimension mismatch: {left} vs {right} coordinates")]
    DimensionMismatch { left: usize, right: usize },
    #[error("lattice coordinate exceeds the {limit}-bit range")]
    Overflow { limit: u64 },
    #[error("pair rank does not fit in 64 bits")]
    RankOverflow,
    #[error("dimension parameter d must be at least 1")]
    ZeroDimension,
}

/// A point of Z^{2d}.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticePoint {
    coords: Vec<BigInt>,
}

impl LatticePoint {
    pub fn new(coords: Vec<BigInt>) -> Result<Self, LatticeError> {
        if coords.is_empty() || !coords.len().is_multiple_of(2) {
            return Err(LatticeError::BadLength(coords.len()));
        }
        for c in &coords {
            check_bits(c)?;
        }
        Ok(Self { coords })
    }

    pub fn from_i64(coords: &[i64]) -> Result<Self, LatticeError> {
        Self::new(coords.iter().map(|&c| BigInt::from(c)).collect())
    }

    pub fn origin(d: usize) -> Self {
        Self {
            coords: vec![BigInt::zero(); 2 * d],
        }
    }

    /// `(magnitude, 0, ..., 0)` in Z^{2d}.
    pub fn along_first_axis(d: usize, magnitude: BigInt) -> Result<Self, LatticeError> {
        let mut coords = vec![BigInt::zero(); 2 * d];
        coords[0] = magnitude;
        Self::new(coords)
    }

    /// The dimension parameter d (the point has 2d coordinates).
    pub fn d(&self) -> usize {
        self.coords.len() / 2
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[BigInt] {
        &self.coords
    }

    pub fn is_origin(&self) -> bool {
        self.coords.iter().all(Zero::is_zero)
    }

    /// l1 norm, the lattice norm used throughout the frame construction.
    pub fn norm1(&self) -> BigUint {
        self.coords.iter().map(|c| c.magnitude().clone()).sum()
    }

    pub fn max_norm(&self) -> BigUint {
        self.coords
            .iter()
            .map(|c| c.magnitude().clone())
            .max()
            .unwrap_or_default()
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, LatticeError> {
        self.same_len(other)?;
        let coords = self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a + b)
            .collect();
        Self::new(coords)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, LatticeError> {
        self.same_len(other)?;
        let coords = self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a - b)
            .collect();
        Self::new(coords)
    }

    pub fn neg(&self) -> Self {
        Self {
            coords: self.coords.iter().map(|c| -c).collect(),
        }
    }

    /// Coordinates as `i64`, if they all fit.
    pub fn to_i64s(&self) -> Option<Vec<i64>> {
        self.coords.iter().map(ToPrimitive::to_i64).collect()
    }

    pub(crate) fn same_len(&self, other: &Self) -> Result<(), LatticeError> {
        if self.coords.len() != other.coords.len() {
            return Err(LatticeError::DimensionMismatch {
                left: self.coords.len(),
                right: other.coords.len(),
            });
        }
        Ok(())
    }
}

fn check_bits(c: &BigInt) -> Result<(), LatticeError> {
    if c.bits() > MAX_COORDINATE_BITS {
        Err(LatticeError::Overflow {
            limit: MAX_COORDINATE_BITS,
        })
    } else {
        Ok(())
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// A pair (m, k) in Z^{2d} x Z^{2d}: a basis index of the tensor Gabor basis.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexPair {
    pub m: LatticePoint,
    pub k: LatticePoint,
}

impl IndexPair {
    pub fn new(m: LatticePoint, k: LatticePoint) -> Result<Self, LatticeError> {
        m.same_len(&k)?;
        Ok(Self { m, k })
    }

    pub fn from_i64(m: &[i64], k: &[i64]) -> Result<Self, LatticeError> {
        Self::new(LatticePoint::from_i64(m)?, LatticePoint::from_i64(k)?)
    }

    pub fn origin(d: usize) -> Self {
        Self {
            m: LatticePoint::origin(d),
            k: LatticePoint::origin(d),
        }
    }

    pub fn d(&self) -> usize {
        self.m.d()
    }

    /// |m|_1 + |k|_1.
    pub fn norm1(&self) -> BigUint {
        self.m.norm1() + self.k.norm1()
    }

    pub fn max_norm(&self) -> BigUint {
        self.m.max_norm().max(self.k.max_norm())
    }

    /// Shift both members by the same lattice point.
    pub fn shifted(&self, by: &LatticePoint) -> Result<Self, LatticeError> {
        Ok(Self {
            m: self.m.checked_add(by)?,
            k: self.k.checked_add(by)?,
        })
    }

    pub fn swapped(&self) -> Self {
        Self {
            m: self.k.clone(),
            k: self.m.clone(),
        }
    }

    fn concat(&self) -> impl Iterator<Item = &BigInt> {
        self.m.coords().iter().chain(self.k.coords())
    }
}

impl fmt::Display for IndexPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.m, self.k)
    }
}

/// The canonical enumeration f: N -> Z^{2d} x Z^{2d}.
///
/// Pairs are ordered by the larger of the two max-norms, then by the l1 norm
/// of the concatenated coordinates, then lexicographically on the
/// concatenated coordinates. The origin pair comes first and every ball
/// `max-norm <= R` is an initial segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairOrdering {
    d: usize,
}

impl PairOrdering {
    pub fn new(d: usize) -> Result<Self, LatticeError> {
        if d == 0 {
            return Err(LatticeError::ZeroDimension);
        }
        Ok(Self { d })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    fn width(&self) -> usize {
        4 * self.d
    }

    fn check(&self, pair: &IndexPair) -> Result<(), LatticeError> {
        if pair.m.len() != 2 * self.d {
            return Err(LatticeError::DimensionMismatch {
                left: 2 * self.d,
                right: pair.m.len(),
            });
        }
        Ok(())
    }

    /// Total order behind `precedes`.
    pub fn compare(&self, a: &IndexPair, b: &IndexPair) -> Result<Ordering, LatticeError> {
        self.check(a)?;
        self.check(b)?;
        Ok(a.max_norm()
            .cmp(&b.max_norm())
            .then_with(|| a.norm1().cmp(&b.norm1()))
            .then_with(|| a.concat().cmp(b.concat())))
    }

    /// `a ⪯ b`: a is enumerated no later than b.
    pub fn precedes(&self, a: &IndexPair, b: &IndexPair) -> Result<bool, LatticeError> {
        Ok(self.compare(a, b)? != Ordering::Greater)
    }

    /// Sort pairs into enumeration order.
    pub fn sort(&self, pairs: &mut [IndexPair]) -> Result<(), LatticeError> {
        for p in pairs.iter() {
            self.check(p)?;
        }
        pairs.sort_by(|a, b| self.compare(a, b).expect("dimensions checked"));
        Ok(())
    }

    /// The t-th pair of the enumeration (0-based).
    pub fn enumerate_pair(&self, t: u64) -> Result<IndexPair, LatticeError> {
        let n = self.width();
        let t = t as u128;
        let mut radius: u64 = 0;
        while pow_u128(2 * radius + 1, n).is_some_and(|c| c <= t) {
            radius += 1;
        }
        let mut offset = t - shell_start(radius, n);
        let counts = ShellCounts::new(radius, n);
        let mut sum = radius;
        loop {
            let c = counts.completions(n, sum, false);
            if offset < c {
                break;
            }
            offset -= c;
            sum += 1;
        }
        let r = radius as i64;
        let mut coords = Vec::with_capacity(n);
        let mut remaining = sum;
        let mut hit = false;
        for pos in 0..n {
            let left = n - pos - 1;
            let mut chosen = None;
            for v in -r..=r {
                let a = v.unsigned_abs();
                if a > remaining {
                    continue;
                }
                let c = counts.completions(left, remaining - a, hit || a == radius);
                if offset < c {
                    chosen = Some(v);
                    break;
                }
                offset -= c;
            }
            let v = chosen.expect("rank lies inside the shell");
            hit |= v.unsigned_abs() == radius;
            remaining -= v.unsigned_abs();
            coords.push(v);
        }
        let (m, k) = coords.split_at(2 * self.d);
        IndexPair::from_i64(m, k)
    }

    /// Inverse of [`enumerate_pair`](Self::enumerate_pair).
    pub fn rank(&self, pair: &IndexPair) -> Result<u64, LatticeError> {
        self.check(pair)?;
        let n = self.width();
        let coords: Vec<i64> = pair
            .concat()
            .map(|c| c.to_i64().ok_or(LatticeError::RankOverflow))
            .collect::<Result<_, _>>()?;
        let radius = coords.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0);
        let sum: u64 = coords.iter().map(|c| c.unsigned_abs()).sum();
        if pow_u128(2 * radius + 1, n).is_none() {
            return Err(LatticeError::RankOverflow);
        }
        let counts = ShellCounts::new(radius, n);
        let mut rank = shell_start(radius, n);
        for s in radius..sum {
            rank += counts.completions(n, s, false);
        }
        let r = radius as i64;
        let mut remaining = sum;
        let mut hit = false;
        for (pos, &c) in coords.iter().enumerate() {
            let left = n - pos - 1;
            for v in -r..c {
                let a = v.unsigned_abs();
                if a > remaining {
                    continue;
                }
                rank += counts.completions(left, remaining - a, hit || a == radius);
            }
            hit |= c.unsigned_abs() == radius;
            remaining -= c.unsigned_abs();
        }
        u64::try_from(rank).map_err(|_| LatticeError::RankOverflow)
    }

    /// Pairs in enumeration order, starting at the origin pair.
    pub fn iter(&self) -> impl Iterator<Item = IndexPair> + '_ {
        (0u64..).map_while(move |t| self.enumerate_pair(t).ok())
    }
}

fn pow_u128(base: u64, exp: usize) -> Option<u128> {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base as u128)?;
    }
    Some(acc)
}

/// Number of pairs with max-norm strictly below `radius`.
fn shell_start(radius: u64, n: usize) -> u128 {
    if radius == 0 {
        0
    } else {
        pow_u128(2 * radius - 1, n).expect("inner ball is smaller than the outer one")
    }
}

/// Counting tables for vectors with coordinates in [-R, R] and fixed l1 norm.
struct ShellCounts {
    radius: u64,
    /// `within[len][s]`: vectors of length `len`, |c| <= R, sum |c| = s.
    within: Vec<Vec<u128>>,
    /// Same with |c| <= R - 1 (empty when R = 0).
    inner: Vec<Vec<u128>>,
}

impl ShellCounts {
    fn new(radius: u64, n: usize) -> Self {
        let within = l1_table(radius as i64, n);
        let inner = if radius == 0 {
            Vec::new()
        } else {
            l1_table(radius as i64 - 1, n)
        };
        Self {
            radius,
            within,
            inner,
        }
    }

    /// Completions of `len` coordinates with l1 norm `sum`; unless `hit`,
    /// at least one of them must reach the shell radius.
    fn completions(&self, len: usize, sum: u64, hit: bool) -> u128 {
        let lookup = |t: &Vec<Vec<u128>>| {
            t.get(len)
                .and_then(|row| row.get(sum as usize))
                .copied()
                .unwrap_or(0)
        };
        let all = lookup(&self.within);
        // In the radius-0 shell every coordinate already sits on the shell.
        if hit || self.radius == 0 {
            all
        } else {
            all - lookup(&self.inner)
        }
    }
}

fn l1_table(bound: i64, n: usize) -> Vec<Vec<u128>> {
    let max_sum = n * bound as usize;
    let mut table = vec![vec![0u128; max_sum + 1]; n + 1];
    table[0][0] = 1;
    for len in 1..=n {
        for s in 0..=max_sum {
            let mut acc = 0u128;
            for v in -bound..=bound {
                let a = v.unsigned_abs() as usize;
                if a <= s {
                    acc += table[len - 1][s - a];
                }
            }
            table[len][s] = acc;
        }
    }
    table
}

/// All pairs with |m|_1 + |k|_1 <= radius, in enumeration order.
pub fn l1_window(d: usize, radius: u64) -> Result<Vec<IndexPair>, LatticeError> {
    let ordering = PairOrdering::new(d)?;
    let n = 4 * d;
    let mut out = Vec::new();
    let mut current = vec![0i64; n];
    fill_l1(&mut current, 0, radius as i64, &mut out, d)?;
    ordering.sort(&mut out)?;
    Ok(out)
}

fn fill_l1(
    current: &mut Vec<i64>,
    pos: usize,
    budget: i64,
    out: &mut Vec<IndexPair>,
    d: usize,
) -> Result<(), LatticeError> {
    if pos == current.len() {
        let (m, k) = current.split_at(2 * d);
        out.push(IndexPair::from_i64(m, k)?);
        return Ok(());
    }
    for v in -budget..=budget {
        current[pos] = v;
        fill_l1(current, pos + 1, budget - v.abs(), out, d)?;
    }
    current[pos] = 0;
    Ok(())
}
