use advice_wasm_demo::{advise, check_advice, sample_example};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn sample_is_deterministic_and_on_board() {
    let a = parse(&sample_example(4).unwrap());
    assert_eq!(a, parse(&sample_example(4).unwrap()));
    assert_ne!(a, parse(&sample_example(5).unwrap()));
    assert!(!a["instruction"].as_str().unwrap().is_empty());
    for head in ["source", "target"] {
        for axis in ["x", "z"] {
            let v = a[head][axis].as_f64().unwrap();
            assert!((-1.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn advice_names_the_gold_quadrant_and_a_board_region() {
    let a = parse(&advise(0.6, 0.6, -0.5, -0.5, "target", 0).unwrap());
    assert_eq!(a["restrictive"]["quadrant"], "bottom_left");
    assert!(a["restrictive"]["sentence"]["text"].as_str().unwrap().contains("lower left"));
    assert_eq!(a["prediction_quadrant"], "top_right");
    // gold is left of and below the click; |dx| = |dz| resolves horizontally
    assert!(a["corrective"]["text"].as_str().unwrap().contains("left"));
    let r = &a["input_specific"]["region"];
    assert!(r["x_max"].as_f64().unwrap() <= 1.0 && r["z_max"].as_f64().unwrap() <= 1.0);
    assert!((r["x_max"].as_f64().unwrap() - r["x_min"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(a["input_specific"]["gold_inside"], false);

    let on = parse(&advise(0.3, 0.3, 0.3, 0.3, "source", 0).unwrap());
    assert!(on["corrective"].is_null());
    assert_eq!(on["input_specific"]["gold_inside"], true);
    assert!(advise(0.0, 0.0, 0.0, 0.0, "middle", 0).is_err());
}

#[test]
fn advice_check_applies_the_oov_rule() {
    let ok = parse(&check_advice("the target is in the lower left"));
    assert_eq!(ok["accepted"], true);
    assert_eq!(ok["oov_fraction"], 0.0);
    let bad = parse(&check_advice("zorp blag quux the"));
    assert_eq!(bad["accepted"], false);
    assert_eq!(bad["tokens"].as_array().unwrap().len(), 4);
    assert_eq!(parse(&check_advice("  "))["accepted"], false);
}
