use smoothctl::properties::{property_names, run_all};

#[test]
fn every_property_passes() {
    let report = run_all(0, None).unwrap();
    assert!(report.passed, "failing: {:?}", report.failing());
    assert_eq!(report.properties.len(), property_names().len());
}

#[test]
fn injected_fault_names_the_property() {
    let report = run_all(1, Some("activations.relu_sphere")).unwrap();
    assert!(!report.passed);
    assert_eq!(report.failing(), vec!["activations.relu_sphere"]);
}

#[test]
fn report_is_reproducible() {
    let a = run_all(5, None).unwrap().to_json().unwrap();
    let b = run_all(5, None).unwrap().to_json().unwrap();
    assert_eq!(a, b);
}
