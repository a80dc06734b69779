//! Exact Vinogradov mean values.
//!
//! J_{s,k}(X) = int_{[0,1)^k} |f(alpha;X)|^{2s} d alpha equals the number
//! of solutions of x_1^j + ... + x_s^j = y_1^j + ... + y_s^j (1 <= j <= k)
//! with all variables in [1,X], so the moment is computed as an exact
//! integer count and no quadrature is involved. Two routes are kept
//! deliberately independent: a direct enumeration of ordered pairs of
//! s-tuples, and a counting table keyed by the power-sum vector.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{config, domain, infeasible, Result};

/// Enumeration guard for the quadratic brute-force count.
const BRUTE_FORCE_PAIR_LIMIT: f64 = 1e9;

/// Default table budget for the meet-in-the-middle count, in bytes.
pub const DEFAULT_TABLE_BUDGET: u64 = 8 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountMethod {
    Brute,
    MeetMiddle,
}

/// An exact mean value J_{s,k}(X).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VinogradovCount {
    pub s: u32,
    pub k: u32,
    pub x: u64,
    #[serde(serialize_with = "crate::vinogradov::serialize_biguint")]
    pub j: BigUint,
    pub method: CountMethod,
}

pub(crate) fn serialize_biguint<S: serde::Serializer>(
    v: &BigUint,
    serializer: S,
) -> std::result::Result<S::Ok, S::Error> {
    serializer.serialize_str(&v.to_string())
}

fn check_args(s: u32, k: u32, x: u64) -> Result<()> {
    if s == 0 {
        return Err(domain("s must be at least 1"));
    }
    if k == 0 {
        return Err(domain("k must be at least 1"));
    }
    if x == 0 {
        return Err(domain("X must be at least 1"));
    }
    Ok(())
}

/// Powers x^j for j = 1..k, overflow-checked.
fn power_table(x_max: u64, k: u32) -> Result<Vec<Vec<u128>>> {
    let mut table = Vec::with_capacity(x_max as usize + 1);
    table.push(vec![0u128; k as usize]);
    for x in 1..=x_max {
        let mut row = Vec::with_capacity(k as usize);
        let mut p: u128 = 1;
        for _ in 0..k {
            p = p.checked_mul(x as u128).ok_or_else(|| {
                infeasible(format!("power sum {x}^{k} overflows 128-bit arithmetic"))
            })?;
            row.push(p);
        }
        table.push(row);
    }
    Ok(table)
}

/// The key (sum x, sum x^2, ..., sum x^k) of an s-tuple. Components are
/// bounded by s * X^k, which the power table has already checked.
fn power_sum_key(tuple: &[u64], powers: &[Vec<u128>], k: u32) -> Vec<u128> {
    let mut key = vec![0u128; k as usize];
    for &x in tuple {
        for (slot, &p) in key.iter_mut().zip(&powers[x as usize]) {
            *slot = slot.checked_add(p).expect("component bounded by s * X^k");
        }
    }
    key
}

fn for_each_tuple(x_max: u64, s: u32, mut visit: impl FnMut(&[u64])) {
    let mut tuple = vec![1u64; s as usize];
    loop {
        visit(&tuple);
        let mut pos = s as usize;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            if tuple[pos] < x_max {
                tuple[pos] += 1;
                for v in tuple.iter_mut().skip(pos + 1) {
                    *v = 1;
                }
                break;
            }
        }
    }
}

/// Direct enumeration of all (x,y) in [1,X]^{2s}: counts ordered pairs of
/// s-tuples with equal power-sum vectors. This is the reference oracle for
/// the table-based count.
pub fn count_bruteforce(s: u32, k: u32, x_max: u64) -> Result<VinogradovCount> {
    check_args(s, k, x_max)?;
    let pairs = (x_max as f64).powi(2 * s as i32);
    if pairs > BRUTE_FORCE_PAIR_LIMIT {
        return Err(infeasible(format!(
            "brute force would enumerate X^(2s) = {pairs:e} pairs (guard {BRUTE_FORCE_PAIR_LIMIT:e}); \
             use the meet-in-the-middle count"
        )));
    }
    let powers = power_table(x_max, k)?;
    let mut keys: Vec<Vec<u128>> = Vec::new();
    for_each_tuple(x_max, s, |tuple| {
        keys.push(power_sum_key(tuple, &powers, k));
    });
    let mut count: u64 = 0;
    for a in &keys {
        for b in &keys {
            if a == b {
                count += 1;
            }
        }
    }
    Ok(VinogradovCount {
        s,
        k,
        x: x_max,
        j: BigUint::from(count),
        method: CountMethod::Brute,
    })
}

fn factorials(n: u32) -> Vec<u64> {
    let mut f = vec![1u64; n as usize + 1];
    for i in 1..=n as usize {
        f[i] = f[i - 1] * i as u64;
    }
    f
}

/// Ordered arrangements of a nondecreasing tuple: s! / prod(m_i!) over the
/// run lengths m_i.
fn multinomial_weight(tuple: &[u64], fact: &[u64]) -> u64 {
    let mut weight = fact[tuple.len()];
    let mut run = 1usize;
    for w in tuple.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            weight /= fact[run];
            run = 1;
        }
    }
    weight / fact[run]
}

/// Number of nondecreasing s-tuples in [1,X]: C(X+s-1, s).
fn tuple_count(x_max: u64, s: u32) -> Option<u128> {
    let mut n: u128 = 1;
    for i in 0..s as u128 {
        n = n.checked_mul(x_max as u128 + i)?;
        n /= i + 1;
    }
    Some(n)
}

/// Estimated peak table footprint in bytes.
pub fn estimate_table_bytes(s: u32, k: u32, x_max: u64) -> Option<u128> {
    let entries = tuple_count(x_max, s)?;
    // key payload + hash-map node overhead
    entries.checked_mul(16 * k as u128 + 64)
}

/// Table-based count: enumerate nondecreasing s-tuples with multinomial
/// ordered-count weights, accumulate weights per power-sum key, and return
/// J = sum of squared weights. Tuple enumeration shards on the smallest
/// coordinate; shards merge by key-wise addition, so the count is exact
/// and schedule-independent.
pub fn count_meet_middle(
    s: u32,
    k: u32,
    x_max: u64,
    table_budget_bytes: u64,
) -> Result<VinogradovCount> {
    check_args(s, k, x_max)?;
    if s > 20 {
        return Err(config("s > 20 is outside the exact-weight range"));
    }
    match estimate_table_bytes(s, k, x_max) {
        Some(bytes) if bytes <= table_budget_bytes as u128 => {}
        est => {
            let shown = est
                .map(|b| format!("{b}"))
                .unwrap_or_else(|| "more than 2^128".to_string());
            return Err(infeasible(format!(
                "estimated table footprint {shown} bytes exceeds the budget of \
                 {table_budget_bytes} bytes"
            )));
        }
    }
    let powers = power_table(x_max, k)?;
    let fact = factorials(s);

    let table: HashMap<Vec<u128>, u64> = (1..=x_max)
        .into_par_iter()
        .map(|first| {
            let mut shard: HashMap<Vec<u128>, u64> = HashMap::new();
            let mut tuple = vec![first; s as usize];
            // Nondecreasing tuples with minimum element exactly `first`.
            loop {
                let key = power_sum_key(&tuple, &powers, k);
                *shard.entry(key).or_insert(0) += multinomial_weight(&tuple, &fact);
                let mut pos = s as usize;
                loop {
                    if pos <= 1 {
                        return shard;
                    }
                    pos -= 1;
                    if tuple[pos] < x_max {
                        tuple[pos] += 1;
                        let v = tuple[pos];
                        for slot in tuple.iter_mut().skip(pos + 1) {
                            *slot = v;
                        }
                        break;
                    }
                }
            }
        })
        .reduce(HashMap::new, |mut a, b| {
            if a.len() < b.len() {
                return b.into_iter().fold(a, |mut acc, (key, w)| {
                    *acc.entry(key).or_insert(0) += w;
                    acc
                });
            }
            for (key, w) in b {
                *a.entry(key).or_insert(0) += w;
            }
            a
        });

    let mut j = BigUint::from(0u32);
    for &w in table.values() {
        j += BigUint::from(w as u128 * w as u128);
    }
    Ok(VinogradovCount {
        s,
        k,
        x: x_max,
        j,
        method: CountMethod::MeetMiddle,
    })
}

/// The mean-value comparison bound X^eps (X^s + X^{2s - k(k+1)/2}).
pub fn mvt_bound(s: u32, k: u32, x_max: u64, eps: f64) -> Result<f64> {
    check_args(s, k, x_max)?;
    if eps < 0.0 {
        return Err(domain("eps must be nonnegative"));
    }
    let xf = x_max as f64;
    let critical = 2.0 * s as f64 - (k * (k + 1)) as f64 / 2.0;
    Ok(xf.powf(eps) * (xf.powi(s as i32) + xf.powf(critical)))
}

/// J_{k,k}(X) / (k! X^k), the ratio against the diagonal asymptotic.
pub fn classical_ratio(k: u32, x_max: u64, table_budget_bytes: u64) -> Result<f64> {
    let count = count_meet_middle(k, k, x_max, table_budget_bytes)?;
    let j = count
        .j
        .to_f64()
        .ok_or_else(|| infeasible("J too large for a double-precision ratio"))?;
    let mut denom = (x_max as f64).powi(k as i32);
    for i in 1..=k as u64 {
        denom *= i as f64;
    }
    Ok(j / denom)
}

/// u = floor((k+1)^2/4): the default mean-value exponent for k >= 4.
pub fn mc_u_quadratic(k: u32) -> Result<u32> {
    if k < 4 {
        return Err(domain(format!(
            "the quadratic mean-value profile starts at k = 4, got k = {k}"
        )));
    }
    Ok((k + 1) * (k + 1) / 4)
}

/// u = floor(k(k+1)/2 - k/3 - 8 k^(2/3)): the large-k refinement. Errors
/// when the formula drops below 1 (small k).
pub fn mc_u_large(k: u32) -> Result<u32> {
    let kf = k as f64;
    let value = kf * (kf + 1.0) / 2.0 - kf / 3.0 - 8.0 * kf.powf(2.0 / 3.0);
    if value < 1.0 {
        return Err(domain(format!(
            "large-k mean-value formula is below 1 at k = {k}"
        )));
    }
    Ok(value.floor() as u32)
}

#[derive(Clone, Debug, Serialize)]
pub struct ProfileEntry {
    pub u: u32,
    pub provenance: String,
}

/// Map k -> u with provenance per entry. The default profile covers k >= 4
/// by the quadratic formula; anything else must be supplied explicitly —
/// lookups never fall back silently.
#[derive(Clone, Debug, Default)]
pub struct MVTProfile {
    overrides: std::collections::BTreeMap<u32, ProfileEntry>,
}

impl MVTProfile {
    pub fn default_profile() -> Self {
        MVTProfile::default()
    }

    pub fn with_entry(mut self, k: u32, u: u32, provenance: impl Into<String>) -> Result<Self> {
        if u == 0 || u as u64 > k as u64 * (k as u64 + 1) / 2 {
            return Err(config(format!(
                "profile entry must satisfy 1 <= u <= k(k+1)/2, got u = {u} for k = {k}"
            )));
        }
        self.overrides.insert(
            k,
            ProfileEntry {
                u,
                provenance: provenance.into(),
            },
        );
        Ok(self)
    }

    pub fn lookup(&self, k: u32) -> Result<ProfileEntry> {
        if let Some(entry) = self.overrides.get(&k) {
            return Ok(entry.clone());
        }
        if k >= 4 {
            return Ok(ProfileEntry {
                u: mc_u_quadratic(k)?,
                provenance: format!("u = floor((k+1)^2/4) = {} (default profile, k >= 4)", mc_u_quadratic(k)?),
            });
        }
        Err(config(format!(
            "no mean-value exponent configured for k = {k}; supply u explicitly"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn j_of(c: &VinogradovCount) -> u64 {
        c.j.to_u64_digits().first().copied().unwrap_or(0)
    }

    #[test]
    fn single_variable_diagonal() {
        for k in [1u32, 3, 5] {
            let c = count_bruteforce(1, k, 7).unwrap();
            assert_eq!(j_of(&c), 7);
        }
        let c = count_meet_middle(1, 5, 100, DEFAULT_TABLE_BUDGET).unwrap();
        assert_eq!(j_of(&c), 100);
    }

    #[test]
    fn pairs_sharing_a_multiset() {
        let c = count_bruteforce(2, 2, 3).unwrap();
        assert_eq!(j_of(&c), 15);
    }

    #[test]
    fn quadratic_case_formula() {
        // J_{2,2}(X) = 2X^2 - X: a pair of power sums determines {x1,x2}.
        for x in [1u64, 2, 5, 12, 100] {
            let c = count_meet_middle(2, 2, x, DEFAULT_TABLE_BUDGET).unwrap();
            assert_eq!(j_of(&c), 2 * x * x - x, "X = {x}");
        }
    }

    #[test]
    fn methods_agree_on_small_grid() {
        for s in 1..=3u32 {
            for k in 1..=3u32 {
                for x in 1..=6u64 {
                    let brute = count_bruteforce(s, k, x).unwrap();
                    let table = count_meet_middle(s, k, x, DEFAULT_TABLE_BUDGET).unwrap();
                    assert_eq!(brute.j, table.j, "(s,k,X) = ({s},{k},{x})");
                }
            }
        }
    }

    #[test]
    fn multiset_grouping_oracle_for_k_at_least_s() {
        // For k >= s the power sums determine the multiset, so grouping
        // tuples by their sorted form is an independent count.
        for (s, k, x) in [(2u32, 2u32, 9u64), (2, 3, 7), (3, 3, 5), (3, 4, 4)] {
            let mut groups: HashMap<Vec<u64>, u64> = HashMap::new();
            for_each_tuple(x, s, |tuple| {
                let mut sorted = tuple.to_vec();
                sorted.sort_unstable();
                *groups.entry(sorted).or_insert(0) += 1;
            });
            let expected: u64 = groups.values().map(|&c| c * c).sum();
            let got = count_meet_middle(s, k, x, DEFAULT_TABLE_BUDGET).unwrap();
            assert_eq!(j_of(&got), expected, "(s,k,X) = ({s},{k},{x})");
        }
    }

    #[test]
    fn diagonal_bound_and_monotonicity() {
        let mut prev = 0u64;
        for x in 1..=8u64 {
            let j = j_of(&count_meet_middle(2, 3, x, DEFAULT_TABLE_BUDGET).unwrap());
            assert!(j >= x * x);
            assert!(j >= prev);
            prev = j;
        }
        // Adding an equation can only remove solutions.
        for x in [4u64, 6] {
            let lo = j_of(&count_meet_middle(2, 2, x, DEFAULT_TABLE_BUDGET).unwrap());
            let hi = j_of(&count_meet_middle(2, 3, x, DEFAULT_TABLE_BUDGET).unwrap());
            assert!(hi <= lo);
        }
    }

    #[test]
    fn guards_point_to_the_other_route() {
        let err = count_bruteforce(2, 2, 200).unwrap_err();
        assert_eq!(err.kind(), "infeasible");
        assert!(err.to_string().contains("meet-in-the-middle"));
        let err = count_meet_middle(3, 3, 1000, 1024).unwrap_err();
        assert_eq!(err.kind(), "infeasible");
        assert!(err.to_string().contains("budget"));
    }

    #[test]
    fn bound_values() {
        assert_eq!(mvt_bound(1, 1, 10, 0.0).unwrap(), 20.0);
        // At s = k(k+1)/2 the two terms coincide.
        let s = 3u32; // k = 2
        let b = mvt_bound(s, 2, 50, 0.0).unwrap();
        assert!((b - 2.0 * 50f64.powi(3)).abs() < 1e-9);
        assert_eq!(mvt_bound(2, 2, 100, 0.0).unwrap(), 10100.0);
        let j = j_of(&count_meet_middle(2, 2, 100, DEFAULT_TABLE_BUDGET).unwrap());
        let ratio = j as f64 / mvt_bound(2, 2, 100, 0.0).unwrap();
        assert!((ratio - 1.97).abs() < 0.01);
    }

    #[test]
    fn classical_ratio_matches_formula_for_k2() {
        for x in [50u64, 100, 200, 400] {
            let r = classical_ratio(2, x, DEFAULT_TABLE_BUDGET).unwrap();
            assert!((r - (1.0 - 1.0 / (2.0 * x as f64))).abs() < 1e-12);
        }
        // Ratios increase toward 1.
        let r50 = classical_ratio(2, 50, DEFAULT_TABLE_BUDGET).unwrap();
        let r400 = classical_ratio(2, 400, DEFAULT_TABLE_BUDGET).unwrap();
        assert!(r400 > r50 && r400 < 1.0);
    }

    #[test]
    fn profile_values_and_absence() {
        let profile = MVTProfile::default_profile();
        assert_eq!(profile.lookup(4).unwrap().u, 6);
        assert_eq!(profile.lookup(5).unwrap().u, 9);
        assert_eq!(profile.lookup(10).unwrap().u, 30);
        let missing = profile.lookup(3).unwrap_err();
        assert_eq!(missing.kind(), "config");
        let with_k3 = MVTProfile::default_profile()
            .with_entry(3, 6, "configured: critical range for k = 3")
            .unwrap();
        assert_eq!(with_k3.lookup(3).unwrap().u, 6);
        assert!(MVTProfile::default_profile().with_entry(3, 7, "too big").is_err());
    }

    #[test]
    fn large_k_refinement() {
        assert!(mc_u_large(3).is_err());
        let u50 = mc_u_large(50).unwrap();
        assert_eq!(u50, 1149);
        // The refinement eventually beats the quadratic profile.
        assert!(u50 > mc_u_quadratic(50).unwrap());
    }
}
