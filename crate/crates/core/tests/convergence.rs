use sdegan::gan::stream_rng;
use sdegan::paths::error_vs_dt_experiment;
use sdegan::stats::loglog_slope;
use sdegan::{SdeModel, TestFunction};

#[test]
fn gbm_strong_convergence_rates() {
    let m = SdeModel::default_gbm();
    let n_list = [16, 32, 64, 128, 256];
    let mut rng = stream_rng(2024, 0);
    let table = error_vs_dt_experiment(&[], &m, 1.0, 1.0, &n_list, 100_000, TestFunction::Identity, &mut rng).unwrap();
    let dts: Vec<f64> = n_list.iter().map(|&n| 1.0 / n as f64).collect();
    for (scheme, want, tol) in [("euler", 0.5, 0.1), ("milstein", 1.0, 0.15)] {
        let es: Vec<f64> = dts.iter().map(|&dt| table.get(scheme, dt).unwrap().e_s).collect();
        let slope = loglog_slope(&dts, &es).unwrap();
        assert!((slope - want).abs() < tol, "{scheme}: slope {slope}, errors {es:?}");
    }
}

#[test]
fn truncated_schemes_stay_bounded_for_cir() {
    let mut rng = stream_rng(5, 0);
    for gamma in [0.1, 0.3] {
        let m = SdeModel::default_cir(gamma);
        let t = error_vs_dt_experiment(&[], &m, 0.1, 2.0, &[8, 2, 1], 20_000, TestFunction::Identity, &mut rng).unwrap();
        for r in &t.rows {
            assert!(r.e_s.is_finite() && r.e_w <= r.e_s + 1e-12, "{r:?}");
        }
        assert!(t.get("truncated-euler", 0.25).unwrap().e_s < t.get("truncated-euler", 2.0).unwrap().e_s);
    }
}
