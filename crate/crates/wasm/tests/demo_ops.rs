use forge_wasm::{correlations_json, synthetic_pipeline_json, tag_text_json};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn tagging_marks_longest_match() {
    let r = parse(tag_text_json("hepatitis c\nhepatitis c virus\n", "The Hepatitis C virus spread. No match here.", false).unwrap());
    let s = &r["sentences"][0];
    let tags: Vec<&str> = s["tags"].as_array().unwrap().iter().map(|t| t.as_str().unwrap()).collect();
    assert_eq!(tags, ["O", "B", "I", "I", "O", "O"]);
    assert_eq!(r["entities"], 1);
    assert_eq!(r["sentences"].as_array().unwrap().len(), 2);
}

#[test]
fn case_sensitive_tagging_skips_capitalized() {
    let r = parse(tag_text_json("influenza", "Influenza and influenza.", true).unwrap());
    assert_eq!(r["entities"], 1);
}

fn corr(shared: usize, kappa: f64) -> Vec<f64> {
    let r = parse(correlations_json(600, 6, shared, 1.0, kappa, 3).unwrap());
    r["correlations"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect()
}

#[test]
fn correlations_follow_shared_factors_and_shrink_with_kappa() {
    let c = corr(2, 1e-6);
    assert_eq!(c.len(), 6);
    assert!(c[0] > 0.6 && c[1] > 0.6, "{:?}", c);
    assert!(c[2] < 0.25, "{:?}", c);
    let none = corr(0, 1e-6);
    assert!(none[0] < 0.25, "{:?}", none);
    let shrunk = corr(2, 100.0);
    assert!(shrunk[0] < c[0]);
    assert!(c.windows(2).all(|w| w[0] >= w[1] - 1e-12));
}

#[test]
fn bad_correlation_arguments() {
    assert!(correlations_json(0, 4, 1, 1.0, 1e-3, 1).is_err());
    assert!(correlations_json(100, 4, 5, 1.0, 1e-3, 1).is_err());
}

#[test]
fn pipeline_recovers_planted_entities() {
    let r = parse(synthetic_pipeline_json(1, 6000, 20, 0.1).unwrap());
    let points = r["points"].as_array().unwrap();
    assert_eq!(points.len(), r["candidates"].as_u64().unwrap() as usize);
    assert_eq!(points.iter().filter(|p| p["seed"] == "positive").count(), 10);
    assert!(r["f1"].as_f64().unwrap() > 0.7, "{}", r["f1"]);
}
