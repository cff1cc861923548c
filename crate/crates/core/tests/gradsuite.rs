use ekg_core::gradsuite::{run_grad_suite, CaseKind};

#[test]
fn every_case_passes_at_its_tolerance() {
    let cases = run_grad_suite(17).unwrap();
    let failed: Vec<_> = cases.iter().filter(|c| !c.passed()).collect();
    for c in &cases {
        println!(
            "{:<28} {:?} max rel {:.2e} over {}",
            c.name, c.kind, c.report.max_rel_error, c.report.checked
        );
    }
    assert!(failed.is_empty(), "{failed:#?}");
    for kind in [CaseKind::SmoothOp, CaseKind::Op, CaseKind::Layer, CaseKind::Loss] {
        assert!(cases.iter().any(|c| c.kind == kind));
    }
}
