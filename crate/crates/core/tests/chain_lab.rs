use dynlab::chain_lab::*;
use dynlab::{Interval, MapSpec, FEIGENBAUM_LOGISTIC};
use proptest::prelude::*;

fn left_root(y: f64) -> f64 {
    (1.0 - (1.0 - y).sqrt()) / 2.0
}

/// D1–D3 straight from the orbit values: D2 by dense sampling of `f^p`
/// rather than by branch decomposition.
fn oracle_d1_d3(map: &MapSpec, orbit: &[f64], n: usize, i: &Interval, c: &MultipleCollection) -> Result<(), String> {
    let (a, b) = match c.side {
        Side::A => (i.lo, i.hi),
        Side::B => (i.hi, i.lo),
    };
    let (p, r) = (c.p, c.r);
    if c.m + (r - 1) * p != n {
        return Err("m".into());
    }
    let xm = orbit[c.m];
    let (jl, jr) = if xm < c.v { (xm, c.v) } else { (c.v, xm) };
    let inside = |y: f64| jl < y && y < jr;
    if !inside(orbit[n]) || inside(a) == inside(b) {
        return Err("D1".into());
    }
    // D2: f^p increasing in the x(m) -> v direction, onto [x(m+p), b]
    let steps = 2000;
    let mut prev = map.iterate_n(xm, p);
    if (prev - orbit[c.m + p]).abs() > 1e-12 {
        return Err("D2 start".into());
    }
    let dir = (c.v - xm).signum();
    let tgt_dir = (b - orbit[c.m + p]).signum();
    for k in 1..=steps {
        let y = xm + (c.v - xm) * k as f64 / steps as f64;
        let fy = map.iterate_n(y, p);
        if (fy - prev) * tgt_dir < -1e-13 {
            return Err(format!("D2 not monotone at {y}"));
        }
        prev = fy;
    }
    if dir != tgt_dir {
        return Err("D2 orientation".into());
    }
    if (prev - b).abs() > 1e-9 {
        return Err(format!("D2 end {prev} vs {b}"));
    }
    // D3
    for l in 0..=n + (r - 2) * p {
        let listed = (l as i64 - n as i64).rem_euclid(p as i64) == 0 && (l as i64 - n as i64).abs() <= ((r - 2) * p) as i64;
        if listed != inside(orbit[l]) {
            return Err(format!("D3 at {l}"));
        }
    }
    Ok(())
}

/// Ladder on the expanding branch near the repelling fixed point 0 of the
/// Ulam map.
fn ladder() -> (MapSpec, f64, Interval) {
    let m = MapSpec::logistic(4.0).unwrap();
    let i = Interval { lo: 0.002, hi: 0.0135 };
    (m, 0.0025 / 64.0, i)
}

#[test]
fn trivial_pullback() {
    let m = MapSpec::logistic(3.83).unwrap();
    let i = Interval { lo: 0.6, hi: 0.605 };
    let ch = pull_back(&m, 0.601, 0, &i).unwrap();
    assert_eq!(ch.intervals, vec![i]);
    let st = stats(&m, &ch);
    assert_eq!((st.order, st.multiplicity), (0, 1));
}

#[test]
fn left_branch_closed_form() {
    let m = MapSpec::logistic(4.0).unwrap();
    let i = Interval { lo: 0.7, hi: 0.8 };
    // longer than ξ, so only the unchecked construction accepts it
    assert!(pull_back(&m, 0.25, 1, &i).is_err());
    let ch = pull_back_along(&m, &orbit_points(&m, 0.25, 1), &i);
    assert!((ch.intervals[0].lo - left_root(0.7)).abs() < 1e-14);
    assert!((ch.intervals[0].hi - left_root(0.8)).abs() < 1e-14);
    assert!((ch.intervals[0].lo - 0.2261).abs() < 1e-4);
    assert!((ch.intervals[0].hi - 0.2764).abs() < 1e-4);
}

#[test]
fn symmetric_step_and_order() {
    let m = MapSpec::logistic(3.83).unwrap();
    let fc = m.f(0.5);
    let i = Interval { lo: fc - 0.004, hi: fc + 0.004 };
    // x_{n-1} near the extremum
    let pre = m.preimages(0.5 + 0.01);
    let x = pre[0];
    let ch = pull_back(&m, x, 2, &i).unwrap();
    let chk = verify_chain(&m, &ch);
    assert!(chk.passed(), "{chk:?}");
    let st = stats(&m, &ch);
    assert_eq!(st.order, 1);
    assert_eq!(st.extremal_indices, vec![1]);
    let j = ch.intervals[1];
    assert!((m.tau(0.5, j.lo) - j.hi).abs() < 1e-9);
}

#[test]
fn ladder_depth() {
    let (m, x, i) = ladder();
    let orbit = orbit_points(&m, x, 10);
    let n = first_entry(&orbit, &i).unwrap();
    let cert = depth(&m, x, n, &i).unwrap();
    assert_eq!((cert.dp_a, cert.dp_b, cert.dp), (2, 1, 2));
    assert_eq!(cert.zero_convention_dp_b, 0);
    assert!(find_multiple_collections(&m, x, n, &i, Side::B).unwrap().is_empty());
    let cs = find_multiple_collections(&m, x, n, &i, Side::A).unwrap();
    assert_eq!(cs.len(), 1);
    assert_eq!((cs[0].p, cs[0].r), (1, 2));
    let full = orbit_points(&m, x, 2 * n + 1);
    oracle_d1_d3(&m, &full, n, &i, &cs[0]).unwrap();
    let rep = check_lemma_3_1(&m, x, n, &i, Side::A).unwrap();
    assert!(rep.lemma_applies);
    assert_eq!(rep.lemma_holds, Some(true));
    assert!(rep.h_multiplicity.unwrap() <= 4);
    assert!(rep.corollary_holds);
}

#[test]
fn generic_instance_has_depth_one() {
    let m = MapSpec::logistic(4.0).unwrap();
    let i = Interval { lo: 0.61, hi: 0.615 };
    let x = 0.123_456;
    let orbit = orbit_points(&m, x, 100_000);
    let n = first_entry(&orbit, &i).unwrap();
    let cert = depth(&m, x, n, &i).unwrap();
    assert_eq!(cert.dp, 1);
    let rep = check_lemma_3_1(&m, x, n, &i, Side::A).unwrap();
    assert!(rep.corollary_holds && rep.corollary_bound == 4);
}

#[test]
fn precondition_errors() {
    let m = MapSpec::logistic(4.0).unwrap();
    let i = Interval { lo: 0.61, hi: 0.615 };
    let x = 0.123_456;
    let orbit = orbit_points(&m, x, 100_000);
    let n = first_entry(&orbit, &i).unwrap();
    // a later visit is not a first entry
    let later = n + 1 + first_entry(&orbit[n + 1..], &i).unwrap();
    assert!(depth(&m, x, later, &i).is_err());
    // orbit attracted by the 2-cycle of a = 3.2
    let m = MapSpec::logistic(3.2).unwrap();
    let c = m.iterate_n(0.1, 10_000);
    let i = Interval { lo: c - 0.001, hi: c + 0.001 };
    let orbit = orbit_points(&m, 0.1, 20_000);
    let n = first_entry(&orbit, &i).unwrap();
    assert!(depth(&m, 0.1, n, &i).is_err());
}

fn sweep(a: f64, count: usize, seed: u64) -> (MapSpec, Vec<Instance>) {
    let m = MapSpec::logistic(a).unwrap();
    let starts = if a == 4.0 || a == FEIGENBAUM_LOGISTIC {
        StartPoints::Lebesgue
    } else {
        StartPoints::RepellerPreimages { anchor: repelling_fixed_point(&m).unwrap(), depth_lo: 3, depth_hi: 25 }
    };
    let inst = generate_instances(&m, &starts, (1e-4, 1.0), 50_000, count, seed);
    (m, inst)
}

#[test]
fn collections_pass_raw_orbit_oracle_and_move_toward_b() {
    let mut checked = 0;
    for a in [FEIGENBAUM_LOGISTIC, 3.2, 3.83] {
        let (m, inst) = sweep(a, 300, 11);
        for s in &inst {
            let orbit = orbit_points(&m, s.x, 2 * s.n + 1);
            for side in [Side::A, Side::B] {
                for c in collections_in_orbit(&m, &orbit, s.n, &s.target, side) {
                    oracle_d1_d3(&m, &orbit, s.n, &s.target, &c).unwrap_or_else(|e| panic!("{e}: {c:?}"));
                    let b = match side {
                        Side::A => s.target.hi,
                        Side::B => s.target.lo,
                    };
                    for k in 0..100 {
                        let y = c.j.lo + c.j.len() * (k as f64 + 0.5) / 100.0;
                        let fy = m.iterate_n(y, c.p);
                        assert!((b - fy).abs() < (b - y).abs() && (fy - y) * (b - y) > 0.0);
                    }
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn chain_invariants_and_depth_bounds_on_sweeps() {
    for a in [4.0, FEIGENBAUM_LOGISTIC, 3.2, 3.83] {
        let (m, inst) = sweep(a, 150, 5);
        assert_eq!(inst.len(), 150);
        for s in &inst {
            let orbit = orbit_points(&m, s.x, 2 * s.n + 1);
            let ch = pull_back_along(&m, &orbit[..=s.n], &s.target);
            let chk = verify_chain(&m, &ch);
            assert!(chk.passed(), "a={a} {s:?} {:?}", &chk.failures[..chk.failures.len().min(3)]);
            let cert = depth_in_orbit(&m, &orbit, s.n, &s.target);
            assert!(cert.dp_a.min(cert.dp_b) == 1);
            assert_eq!(cert.dp, cert.dp_a.max(cert.dp_b));
            let st = stats(&m, &ch);
            assert_eq!(st.extremal_indices.len(), st.order);
            if st.order == 0 {
                assert!(st.multiplicity <= 2 * (cert.dp + 1));
            }
        }
    }
}

#[test]
fn first_entry_order_on_ulam_map() {
    let (m, inst) = sweep(4.0, 200, 9);
    for s in &inst {
        assert!(is_periodic_interval(&m, &s.target, 4096).is_none());
        let ch = pull_back(&m, s.x, s.n, &s.target).unwrap();
        assert!(order(&m, &ch) <= 1);
    }
}

#[test]
fn nested_returns_vacuous_and_feigenbaum() {
    let m = MapSpec::logistic(4.0).unwrap();
    let i = Interval { lo: 0.61, hi: 0.615 };
    let r = check_prop_2_2(&m, 0.123_456, &i, 100_000).unwrap();
    assert!(r.vacuous() && r.passed());

    let m = MapSpec::logistic(FEIGENBAUM_LOGISTIC).unwrap();
    let cas = dynlab::orbit_engine::renormalization_cascade(&m, 0.5, 4096);
    // between the levels of period 64 and 128
    let (outer, inner) = (cas.levels[5].interval, cas.levels[6].interval);
    let mut seen = 0;
    for k in 0..200 {
        let y = inner.hi + (outer.hi - inner.hi) * (k as f64 + 0.5) / 200.0;
        let i = Interval::spanning(m.tau(0.5, y), y);
        let x = (k as f64 * 0.618_033_988_75).fract();
        let Ok(r) = check_prop_2_2(&m, x, &i, 1_000_000) else { continue };
        if r.stats.order > 1 {
            seen += 1;
            assert!(r.passed(), "{:?}", r.clauses);
        }
    }
    assert!(seen > 0);
}

#[test]
fn serialization_round_trip() {
    let (m, x, i) = ladder();
    let ch = pull_back(&m, x, 3, &i).unwrap();
    let back: Chain = serde_json::from_str(&serde_json::to_string(&ch).unwrap()).unwrap();
    assert_eq!(back, ch);
    let cert = depth(&m, x, 3, &i).unwrap();
    let back: DepthCertificate = serde_json::from_str(&serde_json::to_string(&cert).unwrap()).unwrap();
    assert_eq!(back, cert);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pullback_is_valid_chain(x in 0.001f64..0.999, lo in 0.01f64..0.98, len in 1e-4f64..0.013) {
        let m = MapSpec::logistic(4.0).unwrap();
        let i = Interval { lo, hi: lo + len };
        let orbit = orbit_points(&m, x, 20_000);
        if let Some(n) = first_entry(&orbit, &i) {
            let ch = pull_back(&m, x, n, &i).unwrap();
            prop_assert!(verify_chain(&m, &ch).passed());
            prop_assert!(multiplicity(&ch) >= 1);
            for w in ch.intervals.windows(2) {
                prop_assert!(w[1].contains_interval(&m.image(&w[0]), 1e-12));
            }
        }
    }
}
