use admcap_web::{compare_json, simulate_json, sizes_json};
use serde_json::Value;

const MODEL: &str = r#"{"horizon": 2, "max_arrivals": 2, "capacity": 2}"#;

#[test]
fn sizes_match_the_enumeration() {
    let v: Value = serde_json::from_str(&sizes_json(MODEL).unwrap()).unwrap();
    assert_eq!(v["states"], 405);
    assert_eq!(v["actions"], 1896);
    assert!(v["reduced_actions"].as_u64().unwrap() < 1896);
}

#[test]
fn compare_puts_optimal_first_and_lowest() {
    let v: Value = serde_json::from_str(&compare_json(MODEL).unwrap()).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["method"], "OPT");
    let opt = rows[0]["gain"].as_f64().unwrap();
    assert!((opt - 13.0522724925).abs() < 1e-6);
    for r in &rows[1..] {
        assert!(r["gain"].as_f64().unwrap() >= opt);
    }
}

#[test]
fn simulate_is_seeded() {
    let a = simulate_json(MODEL, "mp", 3, 20_000).unwrap();
    assert_eq!(a, simulate_json(MODEL, "MP", 3, 20_000).unwrap());
    let v: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["method"], "MP");
}

#[test]
fn rejects_bad_input() {
    assert!(sizes_json("{").is_err());
    assert!(sizes_json(r#"{"horizon": 2, "max_arrivals": 2}"#).is_err());
    assert!(simulate_json(MODEL, "XX", 1, 100).is_err());
    let big = r#"{"horizon": 4, "max_arrivals": 3, "capacity": 2}"#;
    assert!(compare_json(big).unwrap_err().contains("too many"));
}
