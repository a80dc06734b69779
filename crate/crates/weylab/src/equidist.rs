//! Equidistribution measurements for the sequence p(n) mod 1.
//!
//! Fractional parts come out of the exact mod-1 phase pipeline and are
//! rounded once to doubles for interval comparisons. Intervals are closed
//! on both ends; [0,1] means the whole circle.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{config, domain, Result};
use crate::fixed::Mod1Fixed;
use crate::phase::{eval_dilate, phases_collect, CoefficientVector};

/// A closed interval [a,b] of the circle with 0 <= a < b <= 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IntervalMod1 {
    pub a: f64,
    pub b: f64,
}

impl IntervalMod1 {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && 0.0 <= a && a < b && b <= 1.0) {
            return Err(domain(format!(
                "interval must satisfy 0 <= a < b <= 1, got [{a}, {b}]"
            )));
        }
        Ok(IntervalMod1 { a, b })
    }

    #[inline]
    pub fn contains(&self, u: f64) -> bool {
        self.a <= u && u <= self.b
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EquidistResult {
    /// Number of n <= N with {p(n)} in the interval.
    pub z: u64,
    /// (b-a) * N.
    pub expected: f64,
    /// |Z - (b-a)N|.
    pub deviation: f64,
    pub n: u64,
}

/// Count n <= N with the fractional part of p(n) inside [a,b] (closed).
pub fn count_z(
    coeffs: &CoefficientVector,
    n_max: u64,
    interval: IntervalMod1,
) -> Result<EquidistResult> {
    if n_max == 0 {
        return Err(domain("N must be at least 1"));
    }
    let phases = phases_collect(coeffs, n_max);
    let z = phases
        .par_iter()
        .filter(|frac| interval.contains(frac.to_f64()))
        .count() as u64;
    let expected = interval.length() * n_max as f64;
    Ok(EquidistResult {
        z,
        expected,
        deviation: (z as f64 - expected).abs(),
        n: n_max,
    })
}

/// Exact star discrepancy of an arbitrary point multiset in [0,1):
/// max_i max(i/N - u_(i), u_(i) - (i-1)/N) over the sorted points, the
/// supremum over prefix intervals [0,b] of |count/N - b|.
pub fn star_discrepancy_of_points(points: &mut [f64]) -> Result<f64> {
    if points.is_empty() {
        return Err(domain("need at least one point"));
    }
    if points.iter().any(|u| !(0.0..=1.0).contains(u)) {
        return Err(domain("points must lie in [0,1]"));
    }
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite points"));
    let n = points.len() as f64;
    let mut worst = 0.0f64;
    for (i, &u) in points.iter().enumerate() {
        let up = (i + 1) as f64 / n - u;
        let down = u - i as f64 / n;
        worst = worst.max(up).max(down);
    }
    Ok(worst)
}

/// Star discrepancy of {p(1)}, ..., {p(N)}.
pub fn star_discrepancy(coeffs: &CoefficientVector, n_max: u64) -> Result<f64> {
    if n_max == 0 {
        return Err(domain("N must be at least 1"));
    }
    let mut points: Vec<f64> = phases_collect(coeffs, n_max)
        .into_iter()
        .map(Mod1Fixed::to_f64)
        .collect();
    star_discrepancy_of_points(&mut points)
}

/// X/(H+1) + 3 sum_{h<=H} |f(h alpha;X)| / h. By the Erdos-Turan
/// inequality this dominates |Z_{a,b}(alpha;X) - (b-a)X| for every
/// interval.
pub fn erdos_turan_bound(coeffs: &CoefficientVector, x_max: u64, h_max: u64) -> Result<f64> {
    if x_max == 0 {
        return Err(domain("X must be at least 1"));
    }
    if h_max == 0 {
        return Err(domain("H must be at least 1"));
    }
    let dilate_sum: f64 = (1..=h_max)
        .map(|h| Ok(eval_dilate(coeffs, h, x_max)?.modulus / h as f64))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum();
    Ok(x_max as f64 / (h_max as f64 + 1.0) + 3.0 * dilate_sum)
}

/// The minimizing n <= N of ||p(n)|| (distance of the phase to the nearest
/// integer), computed on the exact 2^-128 grid; ties go to the smallest n.
pub fn min_fractional(coeffs: &CoefficientVector, n_max: u64) -> Result<(u64, f64)> {
    if n_max == 0 {
        return Err(domain("N must be at least 1"));
    }
    let phases = phases_collect(coeffs, n_max);
    let (n_star, dist) = phases
        .par_iter()
        .enumerate()
        .map(|(i, frac)| (i as u64 + 1, frac.dist_to_int_raw()))
        .reduce(
            || (u64::MAX, u128::MAX),
            |a, b| {
                // Strict minimum on the exact distance, then smallest n.
                if (b.1, b.0) < (a.1, a.0) {
                    b
                } else {
                    a
                }
            },
        );
    Ok((n_star, Mod1Fixed::from_raw(dist).to_f64()))
}

/// H(X) = floor(X^(1/2 - nu - 2 tau)), the dilate range matched to an
/// equidistribution exponent nu.
pub fn choose_h(x_max: u64, nu: f64, tau: f64) -> Result<u64> {
    if x_max == 0 {
        return Err(domain("X must be at least 1"));
    }
    let exponent = 0.5 - nu - 2.0 * tau;
    if exponent <= 0.0 {
        return Err(config(format!(
            "1/2 - nu - 2 tau must be positive, got {exponent} (nu = {nu}, tau = {tau})"
        )));
    }
    Ok((x_max as f64).powf(exponent).floor() as u64)
}
