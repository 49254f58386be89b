use dynlab::density_lab::probes::{monotone_instances, three_interval_probe, two_interval_probe, MonotoneInstance};
use dynlab::density_lab::distortion;
use dynlab::{MapSpec, FEIGENBAUM_LOGISTIC};

/// `|(f^n)'(x)|` for `f(x) = a x (1 - x)`, written out independently.
fn logistic_abs_deriv(a: f64, x: f64, n: usize) -> f64 {
    let (mut y, mut d) = (x, 1.0f64);
    for _ in 0..n {
        d *= (a * (1.0 - 2.0 * y)).abs();
        y = a * y * (1.0 - y);
    }
    d
}

fn dense_distortion(a: f64, inst: &MonotoneInstance) -> f64 {
    let j = inst.j();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..=20_000 {
        let d = logistic_abs_deriv(a, j.lo + j.len() * i as f64 / 20_000.0, inst.n());
        lo = lo.min(d);
        hi = hi.max(d);
    }
    hi / lo
}

fn instances(a: f64, count: usize, seed: u64) -> (MapSpec, Vec<MonotoneInstance>) {
    let map = MapSpec::logistic(a).unwrap();
    let xi = map.xi();
    let inst = monotone_instances(&map, count, (xi * 1e-3, xi), 2000, seed);
    (map, inst)
}

#[test]
fn distortion_matches_dense_oracle() {
    for (a, seed) in [(4.0, 11), (FEIGENBAUM_LOGISTIC, 12)] {
        let (map, inst) = instances(a, 50, seed);
        assert_eq!(inst.len(), 50);
        for s in &inst {
            let d = distortion(&map, &s.j(), s.n()).unwrap();
            let o = dense_distortion(a, s);
            assert!((d - o).abs() <= 0.01 * o, "a={a} n={} J={:?}: {d} vs {o}", s.n(), s.j());
        }
    }
}

#[test]
fn koebe_probes_on_ulam_map() {
    let (map, inst) = instances(4.0, 200, 5);
    assert!(inst.len() >= 150);
    let r = three_interval_probe(&map, &inst, 6, 0.5, &[0.001, 0.01, 0.1], 9).unwrap();
    assert!(r.sigma_hat.unwrap() > 0.0);
    assert!(r.q_hat.windows(2).all(|w| w[0].1 <= w[1].1));
    assert!(r.q_hat[0].1 < 0.5);
    let r = two_interval_probe(&map, &inst, 6, &[0.001, 0.01, 0.1], 2.0, 9).unwrap();
    assert!(r.alpha_hat.windows(2).all(|w| w[0].1 <= w[1].1));
    assert!(r.alpha_hat[0].1 < 0.5);
}

#[test]
fn probe_reports_are_reproducible() {
    let (map, inst) = instances(FEIGENBAUM_LOGISTIC, 50, 3);
    let a = serde_json::to_string(&three_interval_probe(&map, &inst, 6, 0.5, &[0.01, 0.1], 4).unwrap()).unwrap();
    let b = serde_json::to_string(&three_interval_probe(&map, &inst, 6, 0.5, &[0.01, 0.1], 4).unwrap()).unwrap();
    assert_eq!(a, b);
}
