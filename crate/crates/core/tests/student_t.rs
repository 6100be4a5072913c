use msdn_core::eval::{paired_ttest, student_t_cdf, two_sided_p};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[test]
fn cdf_matches_statrs() {
    for df in [1.0, 2.0, 3.0, 4.0, 7.0, 10.0, 29.0, 100.0] {
        let reference = StudentsT::new(0.0, 1.0, df).unwrap();
        for i in -80..=80 {
            let t = i as f64 * 0.125;
            let ours = student_t_cdf(t, df);
            let theirs = reference.cdf(t);
            assert!((ours - theirs).abs() < 1e-8, "df {df} t {t}: {ours} vs {theirs}");
        }
    }
}

#[test]
fn worked_example_p_value() {
    let diffs = [0.5, 0.1, 0.3, 0.2, 0.4];
    let r = paired_ttest(&diffs, &[0.0; 5], 0.05).unwrap();
    let reference = StudentsT::new(0.0, 1.0, 4.0).unwrap();
    let p = 2.0 * (1.0 - reference.cdf(r.t));
    assert!((r.p_value - p).abs() < 1e-10);
    assert!((two_sided_p(-r.t, 4.0) - r.p_value).abs() < 1e-15);
}
