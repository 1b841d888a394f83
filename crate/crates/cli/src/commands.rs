use num_complex::Complex64;
use qhalab::frame::{
    budget_limit, condition2_violations_fast, frame_operator, neumann_reconstruct, random_window_operator,
    residual_spectrum_closed_form, Condition2Violation, FramePlan, NEUMANN_ITERATIONS,
};
use qhalab::io::{
    frame_plan_to_json, index_pair_value, lattice_point_value, load_frame_plan, phase_space_to_csv, ResidualCurves,
};
use qhalab::lattice::IndexPair;
use qhalab::qha::{
    convolution_theorem_error, fourier_wigner, fourier_wigner_grid, heisenberg_translate, quantization_error,
    symplectic_form, symplectic_fourier, test_lattice, verify_convolution_theorem, weyl_quantize, GaussianOperator,
    Grid, PhaseSpaceMap, PhaseSpacePoint,
};
use qhalab::translates::{
    class_k_generator, completeness_residual, integer_orthogonal_witness, integer_translate_pairings,
    is_special_form, lattice_periodization, perturbed_lattice, span_membership, SpecialFormWitness, SupportSet,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::{CommandError, ExperimentConfig, Outcome};

/// Spectrum and norm agreement for the built generator.
const GENERATOR_TOLERANCE: f64 = 1e-10;
/// Residual spectrum agreement per trial.
const RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Relative slack on the frame bound.
const BOUND_SLACK: f64 = 1e-12;
/// Largest admissible Neumann error ratio per step.
const NEUMANN_RATIO: f64 = 0.55;
/// Neumann error after the full iteration budget.
const NEUMANN_FINAL: f64 = 1e-9;
const INVOLUTION_TOLERANCE: f64 = 1e-10;
const COVARIANCE_TOLERANCE: f64 = 1e-8;
const DISCRETE_THEOREM_TOLERANCE: f64 = 1e-10;
/// Refinement ratios below this are failures.
const MIN_REFINEMENT_RATIO: f64 = 1.5;
const PAIRING_TOLERANCE: f64 = 1e-8;
const MONOTONE_TOLERANCE: f64 = 1e-10;

fn failed(name: &'static str, parameters: Value, error: impl ToString) -> Outcome {
    Outcome {
        name,
        report: json!({
            "command": name,
            "parameters": parameters,
            "error": error.to_string(),
            "passed": false,
        }),
        artifacts: Vec::new(),
        passed: false,
    }
}

fn point_value(z: PhaseSpacePoint) -> Value {
    json!([z.x, z.w])
}

pub fn frame_build(cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    const NAME: &str = "frame-build";
    let p = cfg.p(4.0)?;
    let d = cfg.dim()?;
    let radius = cfg.radius(0)?;
    let tol = cfg.tolerance_scale()?;
    let parameters = json!({ "p": p, "dim": d, "radius": radius, "tolerance-scale": tol });
    let plan = match FramePlan::standard(p, d, radius) {
        Ok(plan) => plan,
        Err(e) => return Ok(failed(NAME, parameters, e)),
    };
    let svd = match plan.generator().singular_values() {
        Ok(s) => s,
        Err(e) => return Ok(failed(NAME, parameters, e)),
    };
    let closed = plan.generator_spectrum_closed_form();
    let deviation = closed.max_deviation(&svd);
    let norm_closed = plan.generator_norm_closed_form();
    let norm_svd = svd.schatten_norm(p).unwrap_or(f64::NAN);
    let norm_deviation = (norm_svd - norm_closed).abs() / norm_closed;
    let schedule = plan.schedule();
    let spectrum_ok = deviation <= GENERATOR_TOLERANCE * tol;
    let norm_ok = norm_deviation <= GENERATOR_TOLERANCE * tol;
    let bound_ok = schedule.frame_bound() <= 0.5 * (1.0 + BOUND_SLACK);
    let passed = spectrum_ok && norm_ok && bound_ok;
    let capacities: Vec<Value> = schedule
        .capacities()
        .iter()
        .map(|(pair, n)| json!({ "pair": index_pair_value(pair), "n": n }))
        .collect();
    let report = json!({
        "command": NAME,
        "parameters": parameters,
        "budget": schedule.budget(),
        "budget_limit": budget_limit(p),
        "frame_bound": schedule.frame_bound(),
        "capacities": capacities,
        "index_total": plan.family().total(),
        "generator_support": plan.generator().len(),
        "spectrum": {
            "closed_form_len": closed.len(),
            "svd_len": svd.len(),
            "max_deviation": deviation,
            "tolerance": GENERATOR_TOLERANCE * tol,
            "passed": spectrum_ok,
        },
        "norm": {
            "closed_form": norm_closed,
            "svd": norm_svd,
            "relative_deviation": norm_deviation,
            "tolerance": GENERATOR_TOLERANCE * tol,
            "passed": norm_ok,
        },
        "frame_bound_at_most_half": bound_ok,
        "passed": passed,
    });
    Ok(Outcome {
        name: NAME,
        report,
        artifacts: vec![("plan.json".into(), frame_plan_to_json(&plan))],
        passed,
    })
}

fn violation_value(v: &Condition2Violation) -> Value {
    json!({
        "i": lattice_point_value(&v.i),
        "i_tilde": lattice_point_value(&v.i_tilde),
        "j": lattice_point_value(&v.j),
        "j_tilde": lattice_point_value(&v.j_tilde),
        "i_owner": index_pair_value(&v.i_owner),
        "j_owner": index_pair_value(&v.j_owner),
        "row": v.row,
        "column": v.column,
    })
}

/// Worst values seen over the random trials.
#[derive(Default)]
struct TrialStats {
    spectrum_deviation: f64,
    bound_ratio: f64,
    neumann_ratio: f64,
    neumann_final: f64,
    first_failure: Option<Value>,
}

pub fn frame_verify(cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    const NAME: &str = "frame-verify";
    let path = cfg
        .plan
        .as_ref()
        .ok_or_else(|| CommandError::Invalid("--plan is required".into()))?;
    let trials = cfg.trials(50)?;
    let tol = cfg.tolerance_scale()?;
    let seed = cfg.seed();
    let text = std::fs::read_to_string(path)
        .map_err(|e| CommandError::Malformed(format!("cannot read plan {}: {e}", path.display())))?;
    let loaded = load_frame_plan(&text).map_err(|e| CommandError::Malformed(format!("plan: {e}")))?;
    let plan = loaded.plan;
    let p = plan.p();
    let parameters = json!({ "trials": trials, "seed": seed, "tolerance-scale": tol });

    let generator_ok = loaded.generator_matches != Some(false);
    let schedule = plan.schedule();
    let budget_ok = schedule.budget() <= budget_limit(p) * (1.0 + BOUND_SLACK)
        && schedule.frame_bound() <= 0.5 * (1.0 + BOUND_SLACK);
    let violations = match condition2_violations_fast(plan.family()) {
        Ok(v) => v,
        Err(e) => return Ok(failed(NAME, parameters, e)),
    };
    let condition2_ok = violations.is_empty();

    let window: Vec<IndexPair> = plan.window().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = TrialStats::default();
    let bound = schedule.frame_bound();
    for trial in 0..trials {
        let outcome = run_trial(&plan, &window, &mut rng, &mut stats);
        let failure = match outcome {
            Ok(TrialCheck {
                spectrum,
                ratio,
                neumann_max,
                neumann_final,
            }) => {
                let mut bad = Vec::new();
                if spectrum > RESIDUAL_TOLERANCE * tol {
                    bad.push("residual_spectrum");
                }
                if ratio > bound * (1.0 + BOUND_SLACK) {
                    bad.push("frame_bound");
                }
                if neumann_max > NEUMANN_RATIO || neumann_final > NEUMANN_FINAL * tol {
                    bad.push("neumann");
                }
                (!bad.is_empty()).then(|| json!({ "trial": trial, "failed": bad }))
            }
            Err(e) => Some(json!({ "trial": trial, "error": e })),
        };
        if stats.first_failure.is_none() {
            stats.first_failure = failure;
        }
    }
    let spectrum_ok = stats.spectrum_deviation <= RESIDUAL_TOLERANCE * tol;
    let ratio_ok = stats.bound_ratio <= bound * (1.0 + BOUND_SLACK);
    let neumann_ok = stats.neumann_ratio <= NEUMANN_RATIO && stats.neumann_final <= NEUMANN_FINAL * tol;
    let trials_ok = stats.first_failure.is_none() && spectrum_ok && ratio_ok && neumann_ok;
    let passed = generator_ok && budget_ok && condition2_ok && trials_ok;
    let report = json!({
        "command": NAME,
        "parameters": parameters,
        "p": p,
        "dim": plan.d(),
        "index_total": plan.family().total(),
        "generator": {
            "stored": loaded.generator_matches.is_some(),
            "passed": generator_ok,
        },
        "budget": {
            "budget": schedule.budget(),
            "limit": budget_limit(p),
            "frame_bound": bound,
            "passed": budget_ok,
        },
        "condition2": {
            "violations": violations.len(),
            "witness": violations.first().map(violation_value),
            "passed": condition2_ok,
        },
        "residual_spectrum": {
            "max_deviation": stats.spectrum_deviation,
            "tolerance": RESIDUAL_TOLERANCE * tol,
            "passed": spectrum_ok,
        },
        "frame_bound": {
            "max_ratio": stats.bound_ratio,
            "bound": bound,
            "margin": bound - stats.bound_ratio,
            "passed": ratio_ok,
        },
        "neumann": {
            "iterations": NEUMANN_ITERATIONS,
            "max_step_ratio": stats.neumann_ratio,
            "step_ratio_limit": NEUMANN_RATIO,
            "max_final_error": stats.neumann_final,
            "final_error_limit": NEUMANN_FINAL * tol,
            "passed": neumann_ok,
        },
        "failing_trial": stats.first_failure,
        "passed": passed,
    });
    Ok(Outcome {
        name: NAME,
        report,
        artifacts: Vec::new(),
        passed,
    })
}

struct TrialCheck {
    spectrum: f64,
    ratio: f64,
    neumann_max: f64,
    neumann_final: f64,
}

fn run_trial(
    plan: &FramePlan,
    window: &[IndexPair],
    rng: &mut ChaCha8Rng,
    stats: &mut TrialStats,
) -> Result<TrialCheck, String> {
    let p = plan.p();
    let u = random_window_operator(window, p, rng).map_err(|e| e.to_string())?;
    let residual = frame_operator(&u, plan)
        .and_then(|e| Ok(e.sub(&u)?))
        .map_err(|e| e.to_string())?;
    let svd = residual.singular_values().map_err(|e| e.to_string())?;
    let closed = residual_spectrum_closed_form(&u, plan).map_err(|e| e.to_string())?;
    let spectrum = closed.max_deviation(&svd);
    let norm_u = u.schatten_norm(p).map_err(|e| e.to_string())?;
    let ratio = svd.schatten_norm(p).map_err(|e| e.to_string())? / norm_u;
    let outcome = neumann_reconstruct(&u, plan, NEUMANN_ITERATIONS).map_err(|e| e.to_string())?;
    let neumann_max = outcome.ratios().into_iter().fold(0.0, f64::max);
    let neumann_final = *outcome.relative_errors.last().unwrap_or(&f64::INFINITY);
    stats.spectrum_deviation = stats.spectrum_deviation.max(spectrum);
    stats.bound_ratio = stats.bound_ratio.max(ratio);
    stats.neumann_ratio = stats.neumann_ratio.max(neumann_max);
    stats.neumann_final = stats.neumann_final.max(neumann_final);
    Ok(TrialCheck {
        spectrum,
        ratio,
        neumann_max,
        neumann_final,
    })
}

fn grid_from(cfg: &ExperimentConfig, default_n: usize) -> Result<Grid, CommandError> {
    let n = cfg.grid_n(default_n)?;
    let l = cfg.grid_l()?;
    Grid::new(n, l).map_err(|e| CommandError::Invalid(e.to_string()))
}

/// Points of `test_lattice` that sit on the grid.
fn aligned(grid: &Grid, points: Vec<PhaseSpacePoint>) -> Vec<PhaseSpacePoint> {
    let half = grid.n() as i64 / 2;
    points
        .into_iter()
        .filter(|z| {
            grid.align(*z)
                .is_ok_and(|(a, b)| (-half..half).contains(&a) && (-half..half).contains(&b))
        })
        .collect()
}

fn refinement(coarse: f64, fine: f64) -> Value {
    let ratio = coarse / fine;
    json!({
        "coarse": coarse,
        "fine": fine,
        "ratio": ratio,
        "minimum_ratio": MIN_REFINEMENT_RATIO,
        "passed": ratio >= MIN_REFINEMENT_RATIO,
    })
}

pub fn qha_verify(cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    const NAME: &str = "qha-verify";
    let grid = grid_from(cfg, 32)?;
    let tol = cfg.tolerance_scale()?;
    if grid.n() * 2 > 1024 {
        return Err(CommandError::Invalid("--grid-n must leave room for the doubled grid (at most 512)".into()));
    }
    let fine = Grid::new(grid.n() * 2, grid.l()).map_err(|e| CommandError::Invalid(e.to_string()))?;
    let shift = match cfg.shift()? {
        Some((x, w)) => {
            let z = PhaseSpacePoint::new(x, w);
            grid.align(z).map_err(|e| CommandError::Malformed(e.to_string()))?;
            z
        }
        None => grid.point(2, 2),
    };
    let parameters = json!({
        "grid-n": grid.n(),
        "grid-l": grid.l(),
        "shift": point_value(shift),
        "tolerance-scale": tol,
    });

    let s = GaussianOperator::rank_one(PhaseSpacePoint::new(0.5, 0.25), PhaseSpacePoint::origin());
    let zt = PhaseSpacePoint::new(0.25, -0.5);
    let t = GaussianOperator::rank_one(zt, zt);
    let s_sampled = s.sample(grid);

    let f = fourier_wigner_grid(&s_sampled);
    let involution = symplectic_fourier(&symplectic_fourier(&f)).max_abs_diff(&f);

    let cov_points = aligned(&grid, test_lattice(2.0, 0.5, 1.5, 0.5));
    let covariance = match (
        fourier_wigner(&s_sampled, &cov_points),
        heisenberg_translate(&s_sampled, shift).and_then(|moved| fourier_wigner(&moved, &cov_points)),
    ) {
        (Ok(base), Ok(moved)) => cov_points
            .iter()
            .zip(base.iter().zip(&moved))
            .map(|(u, (a, b))| {
                let phase = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * symplectic_form(shift, *u));
                (b - phase * a).norm()
            })
            .fold(0.0, f64::max),
        (Err(e), _) | (_, Err(e)) => return Ok(failed(NAME, parameters, e)),
    };

    let conv_points = aligned(&grid, test_lattice(2.0, 0.5, 0.5, 0.5));
    let discrete = match verify_convolution_theorem(&s_sampled, &t.sample(grid), &conv_points) {
        Ok(v) => v,
        Err(e) => return Ok(failed(NAME, parameters, e)),
    };
    let conv = match (
        convolution_theorem_error(&s, &t, grid, &conv_points),
        convolution_theorem_error(&s, &t, fine, &conv_points),
    ) {
        (Ok(a), Ok(b)) => refinement(a, b),
        (Err(e), _) | (_, Err(e)) => return Ok(failed(NAME, parameters, e)),
    };
    let quant = refinement(quantization_error(&s, grid), quantization_error(&s, fine));

    let involution_ok = involution <= INVOLUTION_TOLERANCE * tol;
    let covariance_ok = covariance <= COVARIANCE_TOLERANCE * tol;
    let discrete_ok = discrete <= DISCRETE_THEOREM_TOLERANCE * tol;
    let passed = involution_ok
        && covariance_ok
        && discrete_ok
        && conv["passed"] == Value::Bool(true)
        && quant["passed"] == Value::Bool(true);
    let report = json!({
        "command": NAME,
        "parameters": parameters,
        "fine_grid_n": fine.n(),
        "involution": { "error": involution, "tolerance": INVOLUTION_TOLERANCE * tol, "passed": involution_ok },
        "covariance": {
            "error": covariance,
            "points": cov_points.len(),
            "tolerance": COVARIANCE_TOLERANCE * tol,
            "passed": covariance_ok,
        },
        "discrete_convolution_theorem": {
            "error": discrete,
            "points": conv_points.len(),
            "tolerance": DISCRETE_THEOREM_TOLERANCE * tol,
            "passed": discrete_ok,
        },
        "convolution_refinement": conv,
        "quantization_refinement": quant,
        "passed": passed,
    });
    Ok(Outcome {
        name: NAME,
        report,
        artifacts: Vec::new(),
        passed,
    })
}

fn special_form_value(result: &Result<(), SpecialFormWitness>) -> Value {
    match result {
        Ok(()) => json!({ "special": true, "witness": null }),
        Err(w) => json!({
            "special": false,
            "witness": { "cell": point_value(w.cell), "shifts": w.shifts },
        }),
    }
}

pub fn t2(cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    const NAME: &str = "t2";
    let grid = grid_from(cfg, 64)?;
    let tol = cfg.tolerance_scale()?;
    let parameters = json!({ "grid-n": grid.n(), "grid-l": grid.l(), "tolerance-scale": tol });
    let invalid = |e: &dyn std::fmt::Display| CommandError::Invalid(e.to_string());

    let unit = SupportSet::rectangle(4, 0.0, 1.0, 0.0, 1.0).map_err(|e| invalid(&e))?;
    let wide = SupportSet::rectangle(4, 0.0, 1.5, 0.0, 1.0).map_err(|e| invalid(&e))?;
    let unit_result = is_special_form(&unit);
    let wide_result = is_special_form(&wide);
    let special_ok = unit_result.is_ok() && wide_result.is_err();

    let origin = PhaseSpacePoint::origin();
    let s = GaussianOperator::rank_one(origin, origin).sample(grid);
    let moved = heisenberg_translate(&s, grid.point(4, 2)).map_err(|e| invalid(&e))?;
    let centre = PhaseSpacePoint::new(3.0, 1.5);
    let disk = PhaseSpaceMap::from_fn(grid, |z| {
        let (dx, dw) = (z.x - centre.x, z.w - centre.w);
        if dx * dx + dw * dw <= 0.75 * 0.75 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::default()
        }
    });
    let band = weyl_quantize(&disk);
    let threshold = 1e-3;
    let cases = [
        ("translate_of_s", &s, &moved, true),
        ("s_itself", &s, &s, true),
        ("gaussian_against_band_limited", &band, &s, false),
    ];
    let mut membership = Vec::new();
    let mut membership_ok = true;
    for (label, generator, target, expected) in cases {
        let verdict = span_membership(generator, target, threshold).map_err(|e| invalid(&e))?;
        membership_ok &= verdict == expected;
        membership.push(json!({ "case": label, "verdict": verdict, "expected": expected }));
    }

    let g = fourier_wigner_grid(&s);
    let corner = PhaseSpacePoint::new(-1.0, -0.5);
    let h = integer_orthogonal_witness(&g, corner).map_err(|e| invalid(&e))?;
    let periodization = lattice_periodization(&h, &g).map_err(|e| invalid(&e))?.max_abs();
    let witness_op = weyl_quantize(&h);
    let generator_op = weyl_quantize(&g);
    let pairings = integer_translate_pairings(&generator_op, &witness_op, 3).map_err(|e| invalid(&e))?;
    let max_pairing = pairings.iter().map(|(_, v)| v.norm()).fold(0.0, f64::max);
    let witness_ok = h.max_abs() > 0.0 && max_pairing <= PAIRING_TOLERANCE * tol;

    let passed = special_ok && membership_ok && witness_ok;
    let report = json!({
        "command": NAME,
        "parameters": parameters,
        "special_form": {
            "unit_square": special_form_value(&unit_result),
            "wide_rectangle": special_form_value(&wide_result),
            "passed": special_ok,
        },
        "span_membership": { "threshold": threshold, "cases": membership, "passed": membership_ok },
        "orthogonal_witness": {
            "cell_corner": point_value(corner),
            "witness_max": h.max_abs(),
            "witness_hs_norm": witness_op.hs_norm(),
            "periodization_max": periodization,
            "translates_checked": pairings.len(),
            "max_pairing": max_pairing,
            "tolerance": PAIRING_TOLERANCE * tol,
            "passed": witness_ok,
        },
        "passed": passed,
    });
    Ok(Outcome {
        name: NAME,
        report,
        artifacts: vec![("witness.csv".into(), phase_space_to_csv(&h))],
        passed,
    })
}

/// Centres of the Gaussian rank-one targets of the completeness probe.
pub const PROBE_TARGETS: [(f64, f64); 3] = [(0.0, 0.0), (0.5, 0.5), (-1.0, 0.25)];

pub fn perturbed(cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    const NAME: &str = "perturbed";
    if cfg.dim()? != 1 {
        return Err(CommandError::Invalid("perturbed runs on the plane only (--dim 1)".into()));
    }
    let grid = grid_from(cfg, 64)?;
    let a = cfg.decay_a()?;
    let radius = cfg.radius(2)?;
    let tol = cfg.tolerance_scale()?;
    let parameters = json!({
        "grid-n": grid.n(),
        "grid-l": grid.l(),
        "decay-a": a,
        "radius": radius,
        "tolerance-scale": tol,
    });
    let set = perturbed_lattice(a, radius as u32, 1).map_err(|e| CommandError::Invalid(e.to_string()))?;
    let s = class_k_generator(grid);
    let targets: Vec<_> = PROBE_TARGETS
        .iter()
        .map(|&(x, w)| {
            let z = PhaseSpacePoint::new(x, w);
            GaussianOperator::rank_one(z, z).sample(grid)
        })
        .collect();
    let report = match completeness_residual(&s, &set, &targets) {
        Ok(r) => r,
        Err(e) => return Ok(failed(NAME, parameters, e)),
    };
    let rounding: Vec<Value> = report
        .rounding
        .iter()
        .map(|r| {
            json!({
                "base": r.base,
                "requested": point_value(r.requested),
                "placed": point_value(r.placed),
                "rounding": r.rounding,
                "allowance": r.allowance,
                "accepted": r.accepted,
            })
        })
        .collect();
    let mut summaries = Vec::new();
    let (mut monotone_ok, mut halved_ok, mut strict_ok) = (true, true, true);
    for (id, ((curve, target), centre)) in report.curves.iter().zip(&targets).zip(PROBE_TARGETS).enumerate() {
        let slack = MONOTONE_TOLERANCE * tol * target.hs_norm();
        let max_increase = curve.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        let strict = curve.windows(2).filter(|w| w[1] < w[0] - slack).count();
        let initial = curve[0];
        let last = curve[curve.len() - 1];
        let ratio = last / initial;
        let monotone = curve.len() < 2 || max_increase <= slack;
        monotone_ok &= monotone;
        halved_ok &= ratio <= 0.5;
        strict_ok &= strict >= 3;
        summaries.push(json!({
            "id": id,
            "centre": [centre.0, centre.1],
            "target_hs_norm": target.hs_norm(),
            "initial": initial,
            "final": last,
            "final_over_initial": ratio,
            "max_increase": if curve.len() < 2 { 0.0 } else { max_increase },
            "strict_decreases": strict,
            "monotone": monotone,
        }));
    }
    let passed = monotone_ok && halved_ok && strict_ok;
    let curves = ResidualCurves {
        curves: report.curves.clone(),
    };
    let out = json!({
        "command": NAME,
        "parameters": parameters,
        "translates": report.rounding.len(),
        "accepted": report.rounding.iter().filter(|r| r.accepted).count(),
        "rounding": rounding,
        "targets": summaries,
        "checks": {
            "nonincreasing": monotone_ok,
            "final_at_most_half_initial": halved_ok,
            "strictly_decreasing_at_three_steps": strict_ok,
        },
        "passed": passed,
    });
    Ok(Outcome {
        name: NAME,
        report: out,
        artifacts: vec![
            ("residuals.csv".into(), curves.to_csv()),
            ("residuals.json".into(), curves.to_json()),
        ],
        passed,
    })
}
