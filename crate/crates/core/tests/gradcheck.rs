use softsplat_core::gradcheck::{run_suite, Suite, DEFAULT_INSTANCES, GRADCHECK_TOLERANCE};
use softsplat_core::Exec;

#[test]
fn every_backward_pass_matches_central_differences() {
    for suite in Suite::ALL {
        let r = run_suite(suite, DEFAULT_INSTANCES, 2024, Exec::Parallel).unwrap();
        println!(
            "{:<10} instances={} redrawn={} components={} max_rel_err={:.3e}",
            r.name, r.instances, r.redrawn, r.components, r.max_rel_err
        );
        assert!(r.passed, "{r:?}");
        assert!(r.max_rel_err <= GRADCHECK_TOLERANCE);
        assert!(r.instances >= 100);
    }
}
