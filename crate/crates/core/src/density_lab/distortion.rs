use crate::error::{LabError, Result};
use crate::interval::Interval;
use crate::map_model::MapSpec;

/// `|Df^n(x)|` as a product of derivatives along the orbit.
pub fn abs_derivative_n(map: &MapSpec, x: f64, n: usize) -> f64 {
    let mut y = x;
    let mut d = 1.0;
    for _ in 0..n {
        d *= map.df(y).abs();
        y = map.f(y);
    }
    d
}

/// Chebyshev–Lobatto nodes on `j`, endpoints included.
pub fn lobatto_nodes(j: &Interval, k: usize) -> Vec<f64> {
    if k == 0 {
        return vec![j.mid()];
    }
    (0..=k)
        .map(|i| {
            let t = (std::f64::consts::PI * i as f64 / k as f64).cos();
            j.mid() - 0.5 * j.len() * t
        })
        .collect()
}

const START_NODES: usize = 32;
const MAX_NODES: usize = 1 << 16;
const STABLE: f64 = 1e-3;

/// `sup_J |Df^n| / inf_J |Df^n|`, sampled at Chebyshev–Lobatto nodes and
/// refined by doubling until the ratio changes by less than 0.1%.
///
/// Errors when a turning point of `f` lies inside some `f^k(J)`, `k < n`.
/// A vanishing derivative (an inflection inside, or a turning point at an
/// endpoint) gives an infinite distortion.
pub fn distortion(map: &MapSpec, j: &Interval, n: usize) -> Result<f64> {
    if n == 0 {
        return Ok(1.0);
    }
    if !map.is_monotone_n(j, n) {
        return Err(LabError::NonMonotone { interval: *j, n });
    }
    if j.is_degenerate() {
        return Ok(1.0);
    }
    let mut k = START_NODES;
    let mut prev = ratio(map, j, n, k);
    while k < MAX_NODES {
        k *= 2;
        let cur = ratio(map, j, n, k);
        if !cur.is_finite() {
            return Ok(f64::INFINITY);
        }
        if (cur - prev).abs() <= STABLE * prev {
            return Ok(cur);
        }
        prev = cur;
    }
    Ok(prev)
}

fn ratio(map: &MapSpec, j: &Interval, n: usize, k: usize) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for x in lobatto_nodes(j, k) {
        let d = abs_derivative_n(map, x, n);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_model::MapFile;

    #[test]
    fn identity_and_affine() {
        let u = MapSpec::logistic(4.0).unwrap();
        assert_eq!(distortion(&u, &Interval { lo: 0.1, hi: 0.2 }, 0).unwrap(), 1.0);
        let file = MapFile {
            pieces: vec![crate::map_model::Piece { lo: 0.0, hi: 1.0, coeffs: vec![0.1, 0.5] }],
            domain: vec![[0.0, 1.0]],
            ..Default::default()
        };
        let m = MapSpec::from_file(&file).unwrap();
        let d = distortion(&m, &Interval { lo: 0.2, hi: 0.4 }, 5).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ulam_example_against_dense_sampling() {
        let u = MapSpec::logistic(4.0).unwrap();
        // f([0.1, 0.2]) contains 1/2, so n = 3 is not monotone there
        assert!(matches!(distortion(&u, &Interval { lo: 0.1, hi: 0.2 }, 3), Err(LabError::NonMonotone { .. })));
        let j = Interval { lo: 0.1, hi: 0.12 };
        let d = distortion(&u, &j, 3).unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..=10_000 {
            let x = j.lo + j.len() * i as f64 / 10_000.0;
            let v = abs_derivative_n(&u, x, 3);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        assert!(d > 1.0);
        assert!(((hi / lo) - d).abs() <= 0.01 * d);
    }

    #[test]
    fn non_monotone_rejected() {
        let u = MapSpec::logistic(4.0).unwrap();
        assert!(matches!(distortion(&u, &Interval { lo: 0.4, hi: 0.6 }, 1), Err(LabError::NonMonotone { .. })));
    }
}
