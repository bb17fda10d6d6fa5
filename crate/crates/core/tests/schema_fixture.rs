//! Shared-schema fixtures: two region header sets whose intersection
//! is the 38-column harmonised feature catalogue (the auxiliary
//! weather column is one-sided and always excluded).

use qtflight_core::data::{intersect_schemas, DataError, WEATHER_DELAY};

fn headers(name: &str) -> Vec<String> {
    let path = format!("{}/tests/assets/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path)
        .unwrap()
        .trim()
        .split(',')
        .map(|s| s.to_string())
        .collect()
}

#[test]
fn fixture_intersection_has_38_columns() {
    let us = headers("us_headers.csv");
    let eu = headers("eu_headers.csv");
    let shared = intersect_schemas(&us, &eu).unwrap();
    assert_eq!(shared.len(), 38);
    assert!(!shared.iter().any(|c| c == WEATHER_DELAY));
    let mut sorted = shared.clone();
    sorted.sort();
    assert_eq!(shared, sorted, "intersection must be sorted");
    // Symmetric in content.
    assert_eq!(shared, intersect_schemas(&eu, &us).unwrap());
}

#[test]
fn one_sided_weather_column_is_dropped() {
    let us: Vec<String> =
        ["a", "b", WEATHER_DELAY].iter().map(|s| s.to_string()).collect();
    let eu: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    assert_eq!(intersect_schemas(&us, &eu).unwrap(), vec!["a", "b"]);
}

#[test]
fn identical_lists_intersect_to_themselves() {
    let cols: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
    assert_eq!(intersect_schemas(&cols, &cols).unwrap(), cols);
}

#[test]
fn empty_intersection_is_fatal() {
    let a: Vec<String> = vec!["a".into()];
    let b: Vec<String> = vec!["b".into()];
    assert!(matches!(intersect_schemas(&a, &b), Err(DataError::Schema(_))));
    assert!(matches!(intersect_schemas(&[], &b), Err(DataError::Schema(_))));
}
