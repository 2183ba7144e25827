use informed_wasm_demo::{detect_synthetic_json, option_curve_json, simulate_market_json};
use serde_json::Value;

fn parse(s: Result<String, String>) -> Value {
    serde_json::from_str(&s.unwrap()).unwrap()
}

#[test]
fn market_path_and_reduction() {
    let v = parse(simulate_market_json(0.0, -0.5, 1.0, 1.0, 1.0, 0.001, 300, 4));
    assert_eq!(v["returns"].as_array().unwrap().len(), 300);
    assert_eq!(v["lambda"], 0.001);
    let rho = v["arma_rho"].as_f64().unwrap();
    let delta = v["arma_delta"].as_f64().unwrap();
    assert_eq!(rho, -0.5);
    assert!(delta > 0.0 && delta < 0.5);
}

#[test]
fn market_rejects_bad_input() {
    assert!(simulate_market_json(0.0, 1.5, 1.0, 1.0, 1.0, 0.0, 100, 1).is_err());
    assert!(simulate_market_json(0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 100, 1).is_err());
    assert!(simulate_market_json(0.0, 0.5, 1.0, 1.0, 1.0, 0.0, 1_000_000, 1).is_err());
}

#[test]
fn option_curve_quantile_is_d1() {
    for call in [true, false] {
        let v = parse(option_curve_json(call, 100.0, 0.5, 0.01, 0.25, 101));
        let d1 = v["d1"].as_array().unwrap();
        let q = v["q"].as_array().unwrap();
        assert_eq!(d1.len(), 101);
        for (a, b) in d1.iter().zip(q) {
            if let Some(b) = b.as_f64() {
                assert!((a.as_f64().unwrap() - b).abs() < 1e-8);
            }
        }
    }
    assert!(option_curve_json(true, -1.0, 0.5, 0.0, 0.2, 10).is_err());
}

#[test]
fn synthetic_detection() {
    let v = parse(detect_synthetic_json(-0.5, 0.3, 1_500, 300, 2));
    assert_eq!(v["verdict"], "detected");
    assert_eq!(v["branch"], "a");
    assert_eq!(v["window_rho"].as_array().unwrap().len(), 1_200);
    let short = parse(detect_synthetic_json(-0.5, 0.3, 50, 100, 2));
    assert_eq!(short["verdict"], "inconclusive");
    assert!(detect_synthetic_json(-0.5, 0.3, 500, 5, 2).is_err());
}
