//! Finite-difference verification of every layer's backward pass across
//! many random configurations.

use skna_nn::gradcheck::{run_all, KINDS, REL_TOL};

#[test]
fn every_layer_kind_matches_central_differences() {
    let start = std::time::Instant::now();
    let reports = run_all(0x5EED_CAFE, 50);
    assert_eq!(reports.len(), KINDS.len());
    for report in &reports {
        println!(
            "{:<13} configs={} values={} max_rel_err={:.3e}",
            report.kind, report.configs, report.values_checked, report.max_rel_err
        );
        assert!(report.configs == 50);
        assert!(report.values_checked > 0);
        assert!(
            report.max_rel_err <= REL_TOL,
            "{}: max relative error {:.6e} exceeds {:.1e}",
            report.kind,
            report.max_rel_err,
            REL_TOL
        );
    }
    let elapsed = start.elapsed();
    println!("gradient sweep completed in {:.1}s", elapsed.as_secs_f64());
    assert!(
        elapsed.as_secs() < 120,
        "gradient sweep took {:?}, budget is two minutes",
        elapsed
    );
}
