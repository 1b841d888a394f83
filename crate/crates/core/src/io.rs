//! File formats: JSON for operators, plans and sampled objects, CSV for
//! phase-space maps and residual curves.
//!
//! Lattice coordinates are written as bare JSON integers of any size.
//! Readers validate everything they accept and never panic on bad input.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Number;
use thiserror::Error;

use crate::frame::{CapacitySchedule, FrameError, FramePlan, IndexFamily};
use crate::lattice::{IndexPair, LatticeError, LatticePoint, MAX_COORDINATE_BITS};
use crate::operator::{GaborOperator, OperatorError};
use crate::qha::{Grid, PhaseSpaceMap, QhaError, SampledFunction, SampledOperator};

/// Largest grid size a reader accepts. Keeps hostile headers from
/// requesting gigabytes.
pub const MAX_GRID_N: usize = 4096;

/// Decimal digits needed for the largest admissible coordinate, plus sign.
const MAX_COORDINATE_DIGITS: usize = (MAX_COORDINATE_BITS as usize * 30103).div_ceil(100000) + 2;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Qha(#[from] QhaError),
}

fn format_err(msg: impl Into<String>) -> IoError {
    IoError::Format(msg.into())
}

fn number_to_bigint(n: &Number) -> Result<BigInt, IoError> {
    let text = n.as_str();
    if text.len() > MAX_COORDINATE_DIGITS {
        return Err(format_err(format!("coordinate has {} digits", text.len())));
    }
    BigInt::from_str(text).map_err(|_| format_err(format!("coordinate {text} is not an integer")))
}

fn bigint_to_number(v: &BigInt) -> Number {
    Number::from_str(&v.to_string()).expect("integers are valid JSON numbers")
}

fn point_from_json(coords: &[Number], d: usize) -> Result<LatticePoint, IoError> {
    if coords.len() != 2 * d {
        return Err(format_err(format!(
            "lattice point has {} coordinates, expected {}",
            coords.len(),
            2 * d
        )));
    }
    let values = coords.iter().map(number_to_bigint).collect::<Result<Vec<_>, _>>()?;
    Ok(LatticePoint::new(values)?)
}

fn point_to_json(p: &LatticePoint) -> Vec<Number> {
    p.coords().iter().map(bigint_to_number).collect()
}

/// A lattice point as a JSON array of exact integers.
pub fn lattice_point_value(p: &LatticePoint) -> serde_json::Value {
    serde_json::Value::Array(point_to_json(p).into_iter().map(serde_json::Value::Number).collect())
}

/// An index pair as `{"m": [..], "k": [..]}`.
pub fn index_pair_value(pair: &IndexPair) -> serde_json::Value {
    serde_json::json!({ "m": lattice_point_value(&pair.m), "k": lattice_point_value(&pair.k) })
}

fn check_d(d: usize) -> Result<(), IoError> {
    // Larger d is legal but no file of ours uses it; cap to bound work.
    if d == 0 || d > 64 {
        return Err(format_err(format!("dimension d = {d} outside 1..=64")));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDto {
    m: Vec<Number>,
    k: Vec<Number>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorDto {
    d: usize,
    entries: Vec<EntryDto>,
}

impl OperatorDto {
    fn from_operator(op: &GaborOperator) -> Self {
        Self {
            d: op.d(),
            entries: op
                .entries()
                .map(|(pair, c)| EntryDto {
                    m: point_to_json(&pair.m),
                    k: point_to_json(&pair.k),
                    re: c.re,
                    im: c.im,
                })
                .collect(),
        }
    }

    fn into_operator(self) -> Result<GaborOperator, IoError> {
        check_d(self.d)?;
        let d = self.d;
        let entries = self
            .entries
            .iter()
            .map(|e| {
                let pair = IndexPair::new(point_from_json(&e.m, d)?, point_from_json(&e.k, d)?)?;
                Ok((pair, Complex64::new(e.re, e.im)))
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        Ok(GaborOperator::from_entries(d, entries)?)
    }
}

pub fn gabor_operator_to_json(op: &GaborOperator) -> String {
    serde_json::to_string_pretty(&OperatorDto::from_operator(op)).expect("operator DTO serializes")
}

pub fn gabor_operator_from_json(text: &str) -> Result<GaborOperator, IoError> {
    serde_json::from_str::<OperatorDto>(text)?.into_operator()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CapacityDto {
    m: Vec<Number>,
    k: Vec<Number>,
    n: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexSetDto {
    m: Vec<Number>,
    k: Vec<Number>,
    indices: Vec<Vec<Number>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanDto {
    p: f64,
    d: usize,
    capacities: Vec<CapacityDto>,
    index_sets: Vec<IndexSetDto>,
    #[serde(default)]
    generator: Option<OperatorDto>,
}

pub fn frame_plan_to_json(plan: &FramePlan) -> String {
    let dto = PlanDto {
        p: plan.p(),
        d: plan.d(),
        capacities: plan
            .schedule()
            .capacities()
            .iter()
            .map(|(pair, &n)| CapacityDto {
                m: point_to_json(&pair.m),
                k: point_to_json(&pair.k),
                n,
            })
            .collect(),
        index_sets: plan
            .family()
            .sets()
            .iter()
            .map(|(pair, set)| IndexSetDto {
                m: point_to_json(&pair.m),
                k: point_to_json(&pair.k),
                indices: set.iter().map(point_to_json).collect(),
            })
            .collect(),
        generator: Some(OperatorDto::from_operator(plan.generator())),
    };
    serde_json::to_string_pretty(&dto).expect("plan DTO serializes")
}

/// A plan read from disk, rebuilt from its capacities and index sets.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedPlan {
    pub plan: FramePlan,
    /// Whether the stored generator equals the rebuilt one; `None` when the
    /// file carries no generator.
    pub generator_matches: Option<bool>,
}

/// Reads a plan without insisting that a stored generator is consistent,
/// so hand-edited plans can still be inspected. The capacity budget is not
/// enforced either.
pub fn load_frame_plan(text: &str) -> Result<LoadedPlan, IoError> {
    let dto: PlanDto = serde_json::from_str(text)?;
    check_d(dto.d)?;
    let d = dto.d;
    let mut capacities = BTreeMap::new();
    for c in &dto.capacities {
        let pair = IndexPair::new(point_from_json(&c.m, d)?, point_from_json(&c.k, d)?)?;
        if capacities.insert(pair, c.n).is_some() {
            return Err(format_err("capacity listed twice for one pair"));
        }
    }
    let schedule = CapacitySchedule::unbounded(dto.p, capacities)?;
    let mut sets = BTreeMap::new();
    for s in &dto.index_sets {
        let pair = IndexPair::new(point_from_json(&s.m, d)?, point_from_json(&s.k, d)?)?;
        let indices = s
            .indices
            .iter()
            .map(|c| point_from_json(c, d))
            .collect::<Result<Vec<_>, _>>()?;
        if sets.insert(pair, indices).is_some() {
            return Err(format_err("index set listed twice for one pair"));
        }
    }
    let family = IndexFamily::new(d, sets)?;
    // Refuse to rebuild very large generators from untrusted input.
    if family.total() > 1 << 16 {
        return Err(format_err(format!("plan has {} indices", family.total())));
    }
    let stored = dto.generator.map(OperatorDto::into_operator).transpose()?;
    let plan = FramePlan::new(schedule, family)?;
    let generator_matches = stored.map(|g| &g == plan.generator());
    Ok(LoadedPlan {
        plan,
        generator_matches,
    })
}

/// Reads a plan; a stored generator must equal the one rebuilt from the
/// index sets, a missing one is rebuilt.
pub fn frame_plan_from_json(text: &str) -> Result<FramePlan, IoError> {
    let loaded = load_frame_plan(text)?;
    if loaded.generator_matches == Some(false) {
        return Err(FrameError::GeneratorMismatch.into());
    }
    Ok(loaded.plan)
}

fn make_grid(n: usize, l: f64) -> Result<Grid, IoError> {
    if n > MAX_GRID_N {
        return Err(format_err(format!("grid size {n} exceeds {MAX_GRID_N}")));
    }
    Ok(Grid::new(n, l)?)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridValuesDto {
    n: usize,
    l: f64,
    /// Row-major [re, im] pairs.
    values: Vec<[f64; 2]>,
}

fn values_to_matrix(n: usize, values: &[[f64; 2]]) -> Result<DMatrix<Complex64>, IoError> {
    if values.len() != n * n {
        return Err(format_err(format!("expected {} values, got {}", n * n, values.len())));
    }
    Ok(DMatrix::from_row_iterator(
        n,
        n,
        values.iter().map(|&[re, im]| Complex64::new(re, im)),
    ))
}

fn matrix_to_values(m: &DMatrix<Complex64>) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push([m[(r, c)].re, m[(r, c)].im]);
        }
    }
    out
}

/// Phase-space map as JSON; row a, column b in index order −N/2..N/2.
pub fn phase_space_to_json(map: &PhaseSpaceMap) -> String {
    let g = map.grid();
    let idx: Vec<i64> = g.indices().collect();
    let m = DMatrix::from_fn(g.n(), g.n(), |r, c| map.at_index(idx[r], idx[c]));
    let dto = GridValuesDto {
        n: g.n(),
        l: g.l(),
        values: matrix_to_values(&m),
    };
    serde_json::to_string(&dto).expect("grid DTO serializes")
}

pub fn phase_space_from_json(text: &str) -> Result<PhaseSpaceMap, IoError> {
    let dto: GridValuesDto = serde_json::from_str(text)?;
    let grid = make_grid(dto.n, dto.l)?;
    let m = values_to_matrix(dto.n, &dto.values)?;
    let mut map = PhaseSpaceMap::zero(grid);
    for (r, a) in grid.indices().enumerate() {
        for (c, b) in grid.indices().enumerate() {
            map.set_index(a, b, m[(r, c)]);
        }
    }
    // Route through the validating constructor.
    Ok(PhaseSpaceMap::new(grid, map.values().clone())?)
}

/// Kernel samples K(t_j, t_k), row j.
pub fn sampled_operator_to_json(op: &SampledOperator) -> String {
    let dto = GridValuesDto {
        n: op.grid().n(),
        l: op.grid().l(),
        values: matrix_to_values(op.kernel()),
    };
    serde_json::to_string(&dto).expect("grid DTO serializes")
}

pub fn sampled_operator_from_json(text: &str) -> Result<SampledOperator, IoError> {
    let dto: GridValuesDto = serde_json::from_str(text)?;
    let grid = make_grid(dto.n, dto.l)?;
    Ok(SampledOperator::new(grid, values_to_matrix(dto.n, &dto.values)?)?)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FunctionDto {
    n: usize,
    l: f64,
    samples: Vec<[f64; 2]>,
}

pub fn sampled_function_to_json(f: &SampledFunction) -> String {
    let dto = FunctionDto {
        n: f.grid().n(),
        l: f.grid().l(),
        samples: f.samples().iter().map(|z| [z.re, z.im]).collect(),
    };
    serde_json::to_string(&dto).expect("function DTO serializes")
}

pub fn sampled_function_from_json(text: &str) -> Result<SampledFunction, IoError> {
    let dto: FunctionDto = serde_json::from_str(text)?;
    let grid = make_grid(dto.n, dto.l)?;
    let samples = dto.samples.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
    Ok(SampledFunction::new(grid, samples)?)
}

/// `# N=..,L=..` line, then `x,w,re,im` rows for every grid point, a-major.
pub fn write_phase_space_csv<W: Write>(map: &PhaseSpaceMap, out: W) -> Result<(), IoError> {
    let mut out = out;
    writeln!(out, "# N={},L={}", map.grid().n(), map.grid().l())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "w", "re", "im"])?;
    for (z, v) in map.iter() {
        w.serialize((z.x, z.w, v.re, v.im))?;
    }
    w.flush()?;
    Ok(())
}

pub fn phase_space_to_csv(map: &PhaseSpaceMap) -> String {
    let mut buf = Vec::new();
    write_phase_space_csv(map, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("CSV output is ASCII")
}

fn parse_grid_header(line: &str) -> Result<Grid, IoError> {
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| format_err("first line must be `# N=..,L=..`"))?;
    let (mut n, mut l) = (None, None);
    for part in body.split(',') {
        let (key, value) = part
            .trim()
            .split_once('=')
            .ok_or_else(|| format_err(format!("bad header field `{part}`")))?;
        match key.trim() {
            "N" => n = Some(value.trim().parse::<usize>().map_err(|e| format_err(format!("N: {e}")))?),
            "L" => l = Some(value.trim().parse::<f64>().map_err(|e| format_err(format!("L: {e}")))?),
            other => return Err(format_err(format!("unknown header field `{other}`"))),
        }
    }
    match (n, l) {
        (Some(n), Some(l)) => make_grid(n, l),
        _ => Err(format_err("header needs both N and L")),
    }
}

/// Reads the CSV written by [`write_phase_space_csv`]. Points may appear in
/// any order; absent points are zero, repeated points are an error.
pub fn read_phase_space_csv<R: BufRead>(input: R) -> Result<PhaseSpaceMap, IoError> {
    let mut input = input;
    let mut header = String::new();
    input.read_line(&mut header)?;
    let grid = parse_grid_header(&header)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let names = reader.headers()?.clone();
    if names.iter().collect::<Vec<_>>() != ["x", "w", "re", "im"] {
        return Err(format_err("columns must be x,w,re,im"));
    }
    let mut map = PhaseSpaceMap::zero(grid);
    let mut seen = vec![false; grid.n() * grid.n()];
    let half = grid.n() as i64 / 2;
    for row in reader.deserialize::<(f64, f64, f64, f64)>() {
        let (x, w, re, im) = row?;
        if !(re.is_finite() && im.is_finite()) {
            return Err(format_err(format!("non-finite value at ({x}, {w})")));
        }
        let (a, b) = grid.align(crate::qha::PhaseSpacePoint::new(x, w))?;
        if !(-half..half).contains(&a) || !(-half..half).contains(&b) {
            return Err(format_err(format!("point ({x}, {w}) lies outside the grid")));
        }
        let slot = ((a + half) * grid.n() as i64 + b + half) as usize;
        if std::mem::replace(&mut seen[slot], true) {
            return Err(format_err(format!("point ({x}, {w}) listed twice")));
        }
        map.set_index(a, b, Complex64::new(re, im));
    }
    Ok(map)
}

pub fn phase_space_from_csv(text: &str) -> Result<PhaseSpaceMap, IoError> {
    read_phase_space_csv(text.as_bytes())
}

/// Residual curves for several targets; `curves[i][M − 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualCurves {
    pub curves: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveDto {
    target_id: usize,
    residuals: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurvesDto {
    targets: Vec<CurveDto>,
}

impl ResidualCurves {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["M", "target_id", "residual"]).expect("writing to memory");
        for (id, curve) in self.curves.iter().enumerate() {
            for (i, r) in curve.iter().enumerate() {
                w.serialize((i + 1, id, r)).expect("writing to memory");
            }
        }
        String::from_utf8(w.into_inner().expect("writing to memory")).expect("CSV output is ASCII")
    }

    /// Rows may come in any order but each curve must cover M = 1..len
    /// exactly once and target ids must be 0..count.
    pub fn from_csv(text: &str) -> Result<Self, IoError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let names = reader.headers()?.clone();
        if names.iter().collect::<Vec<_>>() != ["M", "target_id", "residual"] {
            return Err(format_err("columns must be M,target_id,residual"));
        }
        let mut rows: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
        for row in reader.deserialize::<(usize, usize, f64)>() {
            let (m, id, r) = row?;
            if m == 0 {
                return Err(format_err("M starts at 1"));
            }
            if rows.entry(id).or_default().insert(m, r).is_some() {
                return Err(format_err(format!("row M={m}, target_id={id} repeated")));
            }
        }
        let mut curves = Vec::with_capacity(rows.len());
        for (expected, (id, curve)) in rows.into_iter().enumerate() {
            if id != expected {
                return Err(format_err(format!("target ids skip {expected}")));
            }
            if curve.keys().enumerate().any(|(i, &m)| m != i + 1) {
                return Err(format_err(format!("target {id} has gaps in M")));
            }
            curves.push(curve.into_values().collect());
        }
        Ok(Self { curves })
    }

    pub fn to_json(&self) -> String {
        let dto = CurvesDto {
            targets: self
                .curves
                .iter()
                .enumerate()
                .map(|(target_id, c)| CurveDto {
                    target_id,
                    residuals: c.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&dto).expect("curve DTO serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        let dto: CurvesDto = serde_json::from_str(text)?;
        let mut curves = Vec::with_capacity(dto.targets.len());
        for (expected, c) in dto.targets.into_iter().enumerate() {
            if c.target_id != expected {
                return Err(format_err(format!("target ids skip {expected}")));
            }
            curves.push(c.residuals);
        }
        Ok(Self { curves })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oversized_coordinate_is_rejected() {
        let huge = "9".repeat(5000);
        let text = format!(r#"{{"d":1,"entries":[{{"m":[{huge},0],"k":[0,0],"re":1.0,"im":0.0}}]}}"#);
        assert!(gabor_operator_from_json(&text).is_err());
    }

    #[test]
    fn fractional_coordinate_is_rejected() {
        let text = r#"{"d":1,"entries":[{"m":[0.5,0],"k":[0,0],"re":1.0,"im":0.0}]}"#;
        assert!(matches!(gabor_operator_from_json(text), Err(IoError::Format(_))));
    }

    #[test]
    fn big_coordinates_survive() {
        let big = format!("1{}", "0".repeat(40));
        let text = format!(r#"{{"d":1,"entries":[{{"m":[{big},-{big}],"k":[0,1],"re":0.25,"im":-2.0}}]}}"#);
        let op = gabor_operator_from_json(&text).unwrap();
        assert_eq!(gabor_operator_from_json(&gabor_operator_to_json(&op)).unwrap(), op);
        assert!(gabor_operator_to_json(&op).contains(&big));
    }

    #[test]
    fn grid_header_limits() {
        assert!(phase_space_from_csv("# N=8192,L=8\nx,w,re,im\n").is_err());
        assert!(phase_space_from_csv("# N=12,L=8\nx,w,re,im\n").is_err());
        assert!(phase_space_from_csv("N=8,L=8\nx,w,re,im\n").is_err());
        assert!(phase_space_from_csv("# N=8,L=8\nx,w,re,im\n").is_ok());
    }
}
