use ifenn_web::{q8_second_derivatives, solve_single_notch, tcn_causality};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn second_derivative_tables_list_the_known_discrepancy() {
    let v = parse(q8_second_derivatives(0.3, -0.4));
    assert_eq!(v["analytic"].as_array().unwrap().len(), 8);
    assert_eq!(v["discrepancies"], serde_json::json!(["node 7 d2N/dxi2"]));
    assert!(parse(q8_second_derivatives(2.0, 0.0))["error"].is_string());
}

#[test]
fn coarse_single_notch_solve_returns_a_curve_and_damage_map() {
    let v = parse(solve_single_notch(20.0, false, 8, 0.8));
    assert!(v["error"].is_null(), "{v}");
    assert_eq!(v["reaction"].as_array().unwrap().len(), 8);
    assert_eq!(v["elements"].as_array().unwrap().len(), 25);
    assert!(parse(solve_single_notch(1.0, false, 8, 0.8))["error"].is_string());
}

#[test]
fn tcn_outputs_before_the_perturbation_do_not_move() {
    let v = parse(tcn_causality(2, 3, 4, 20, 10, 1));
    let change: Vec<f64> = v["change"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(change[..10].iter().all(|&c| c == 0.0));
    assert!(change[10] > 0.0);
    assert!(parse(tcn_causality(2, 3, 4, 20, 20, 1))["error"].is_string());
}
