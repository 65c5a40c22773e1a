use ibfd_web::{beam_pattern_json, design_json, quantize_json};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn pattern_peaks_at_the_steering_angle() {
    let v = parse(beam_pattern_json(2, 4, 30.0, 0.0, 3, 181).unwrap());
    let theta: Vec<f64> = serde_json::from_value(v["theta_deg"].clone()).unwrap();
    let cbf: Vec<f64> = serde_json::from_value(v["cbf_db"].clone()).unwrap();
    assert_eq!(theta.len(), 181);
    let peak = cbf.iter().cloned().enumerate().fold((0, f64::MIN), |b, (i, g)| if g > b.1 { (i, g) } else { b });
    assert_eq!(theta[peak.0], 30.0);
    assert!((peak.1 - 10.0 * 4f64.log10()).abs() < 1e-9);
    let q: Vec<f64> = serde_json::from_value(v["quantized_db"].clone()).unwrap();
    assert!(q[peak.0] <= peak.1 + 1e-9);
}

#[test]
fn quantization_error_stays_within_half_a_step() {
    for bits in 1..=5 {
        for deg in (-360..360).step_by(17) {
            let v = parse(quantize_json(bits, deg as f64, 7.0).unwrap());
            let e = v["error_deg"].as_f64().unwrap();
            assert!(e.abs() <= v["bound_deg"].as_f64().unwrap() + 1e-9);
            assert_eq!(v["vertices"].as_array().unwrap().len(), 1 << bits);
        }
    }
}

#[test]
fn design_reports_every_designer() {
    let v = parse(design_json(10.0, 0.0, 2, -10.0).unwrap());
    let names: Vec<&str> = v["results"].as_array().unwrap().iter().map(|r| r["designer"].as_str().unwrap()).collect();
    assert_eq!(names.len(), 5);
    assert!(names.contains(&"proposed"));
    assert_eq!(v["oracle"]["enumerated"], 64);
}

#[test]
fn bad_inputs_are_errors() {
    assert!(beam_pattern_json(2, 3, 0.0, 0.0, 3, 10).is_err());
    assert!(quantize_json(0, 0.0, 0.0).is_err());
    assert!(design_json(95.0, 0.0, 2, -10.0).is_err());
}
