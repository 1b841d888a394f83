use num_complex::Complex64;
use proptest::prelude::*;
use qhalab::frame::FramePlan;
use qhalab::io::*;
use qhalab::lattice::IndexPair;
use qhalab::operator::GaborOperator;
use qhalab::qha::*;

#[test]
fn plan_roundtrip_keeps_everything() {
    for (p, r) in [(6.0, 0), (4.0, 1)] {
        let plan = FramePlan::standard(p, 1, r).unwrap();
        let text = frame_plan_to_json(&plan);
        assert_eq!(frame_plan_from_json(&text).unwrap(), plan);
    }
}

#[test]
fn plan_without_generator_is_rebuilt() {
    let plan = FramePlan::standard(6.0, 1, 0).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&frame_plan_to_json(&plan)).unwrap();
    value.as_object_mut().unwrap().remove("generator");
    assert_eq!(frame_plan_from_json(&value.to_string()).unwrap(), plan);
}

#[test]
fn tampered_generator_is_rejected() {
    let plan = FramePlan::standard(6.0, 1, 0).unwrap();
    let text = frame_plan_to_json(&plan).replacen("\"re\": ", "\"re\": 1", 1);
    assert!(frame_plan_from_json(&text).is_err());
}

#[test]
fn malformed_plans_are_errors() {
    for text in [
        "",
        "{}",
        r#"{"p":4,"d":1,"capacities":[],"index_sets":[]}"#,
        r#"{"p":2,"d":1,"capacities":[{"m":[0,0],"k":[0,0],"n":1}],"index_sets":[]}"#,
        r#"{"p":4,"d":1,"capacities":[{"m":[0,0],"k":[0,0],"n":1}],"index_sets":[{"m":[0,0],"k":[0,0],"indices":[[1]]}]}"#,
        r#"{"p":4,"d":1,"capacities":[{"m":[0,0],"k":[0,0],"n":1}],"index_sets":[],"extra":1}"#,
    ] {
        assert!(frame_plan_from_json(text).is_err(), "{text}");
    }
}

#[test]
fn phase_space_csv_roundtrip() {
    let grid = Grid::new(16, 8.0).unwrap();
    let map = PhaseSpaceMap::from_fn(grid, |z| Complex64::new(z.x.sin() * 0.1, z.w / 3.0));
    let text = phase_space_to_csv(&map);
    assert!(text.starts_with("# N=16,L=8\nx,w,re,im\n"));
    assert_eq!(phase_space_from_csv(&text).unwrap(), map);
    assert_eq!(phase_space_from_json(&phase_space_to_json(&map)).unwrap(), map);
}

#[test]
fn phase_space_csv_rejects_bad_rows() {
    let head = "# N=8,L=8\nx,w,re,im\n";
    assert!(phase_space_from_csv(&format!("{head}0.5,0,1,0\n")).is_err(), "off-grid x");
    assert!(phase_space_from_csv(&format!("{head}0,0,1,0\n0,0,2,0\n")).is_err(), "repeat");
    assert!(phase_space_from_csv(&format!("{head}0,0,NaN,0\n")).is_err(), "NaN");
    assert!(phase_space_from_csv(&format!("{head}4,0,1,0\n")).is_err(), "outside");
    assert!(phase_space_from_csv(&format!("{head}0,0,1\n")).is_err(), "short row");
    let sparse = phase_space_from_csv(&format!("{head}1,0.125,2,-1\n")).unwrap();
    assert_eq!(sparse.at_index(1, 1), Complex64::new(2.0, -1.0));
    assert_eq!(sparse.max_abs(), Complex64::new(2.0, -1.0).norm());
}

#[test]
fn sampled_objects_roundtrip() {
    let grid = Grid::new(8, 4.0).unwrap();
    let f = SampledFunction::from_fn(grid, |t| Complex64::new(gaussian(t), t));
    assert_eq!(sampled_function_from_json(&sampled_function_to_json(&f)).unwrap(), f);
    let op = SampledOperator::rank_one(&f, &f).unwrap();
    assert_eq!(sampled_operator_from_json(&sampled_operator_to_json(&op)).unwrap(), op);
    assert!(sampled_operator_from_json(r#"{"n":8,"l":4,"values":[[0,0]]}"#).is_err());
}

#[test]
fn residual_curves_roundtrip() {
    let curves = ResidualCurves {
        curves: vec![vec![1.0, 0.5, 0.25], vec![0.9, 0.8]],
    };
    let csv = curves.to_csv();
    assert!(csv.starts_with("M,target_id,residual\n1,0,1.0\n"));
    assert_eq!(ResidualCurves::from_csv(&csv).unwrap(), curves);
    assert_eq!(ResidualCurves::from_json(&curves.to_json()).unwrap(), curves);
    assert!(ResidualCurves::from_csv("M,target_id,residual\n2,0,1.0\n").is_err());
    assert!(ResidualCurves::from_csv("M,target_id,residual\n1,1,1.0\n").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operator_json_roundtrip(raw in proptest::collection::vec(((-9i64..9, -9i64..9, -9i64..9, -9i64..9), (-1e6..1e6f64, -1e-6..1e-6f64)), 0..12)) {
        let entries: std::collections::BTreeMap<_, _> = raw
            .iter()
            .map(|&((a, b, c, d), (re, im))| (IndexPair::from_i64(&[a, b], &[c, d]).unwrap(), Complex64::new(re, im)))
            .collect();
        let op = GaborOperator::from_entries(1, entries).unwrap();
        prop_assert_eq!(gabor_operator_from_json(&gabor_operator_to_json(&op)).unwrap(), op);
    }

    #[test]
    fn readers_never_panic(text in "\\PC{0,200}") {
        let _ = gabor_operator_from_json(&text);
        let _ = frame_plan_from_json(&text);
        let _ = phase_space_from_csv(&text);
        let _ = phase_space_from_json(&text);
        let _ = sampled_operator_from_json(&text);
        let _ = ResidualCurves::from_csv(&text);
    }
}
