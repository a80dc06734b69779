//! Evaluation of the Weyl sum f(alpha;X) = sum_{1<=x<=X} e(alpha_1 x + ... + alpha_k x^k).
//!
//! All phases are computed mod 1 in 128-bit wrapping integer arithmetic,
//! which is exact once the coefficients have been rounded to the 2^-128
//! grid: for x an integer, a_j * x^j mod 2^128 is the numerator of
//! alpha_j x^j mod 1. The fast path evolves a forward-difference table
//! (the k-th difference of a degree-k polynomial is constant), which stays
//! exact because every update is a wrapping addition. Rounding enters only
//! at the unit-circle conversion, which uses double-precision sin/cos on
//! the fixed-point fraction scaled to [0,2pi).
//!
//! Sums of unit-circle terms accumulate in doubles with pairwise (tree)
//! summation over fixed-size blocks, so the result is independent of the
//! number of worker threads and the rounding error stays O(log X) ulps
//! relative to the term count.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{config, domain, Error, Result};
use crate::fixed::{Mod1Fixed, WIDTH};

/// Fixed block size for parallel evaluation and pairwise accumulation.
/// Partial sums are formed per block and merged over the ordered block
/// list, so results do not depend on scheduling.
pub const SUM_BLOCK: usize = 8192;

/// Largest supported polynomial degree.
pub const MAX_DEGREE: usize = 64;

/// The coefficient tuple alpha in [0,1)^k, k >= 2.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct CoefficientVector {
    alpha: Vec<Mod1Fixed>,
}

impl CoefficientVector {
    pub fn new(alpha: Vec<Mod1Fixed>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(domain(format!(
                "degree k must be at least 2, got {}",
                alpha.len()
            )));
        }
        if alpha.len() > MAX_DEGREE {
            return Err(domain(format!(
                "degree k must be at most {MAX_DEGREE}, got {}",
                alpha.len()
            )));
        }
        Ok(CoefficientVector { alpha })
    }

    pub fn from_strs<S: AsRef<str>>(parts: &[S]) -> Result<Self> {
        let alpha = parts
            .iter()
            .map(|s| Mod1Fixed::parse(s.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(alpha)
    }

    pub fn zero(k: usize) -> Result<Self> {
        Self::new(vec![Mod1Fixed::ZERO; k])
    }

    /// Polynomial degree k.
    pub fn degree(&self) -> usize {
        self.alpha.len()
    }

    /// Coefficients alpha_1..alpha_k in index order.
    pub fn coefficients(&self) -> &[Mod1Fixed] {
        &self.alpha
    }

    /// 1-based access to alpha_j.
    pub fn coefficient(&self, j: usize) -> Mod1Fixed {
        self.alpha[j - 1]
    }

    /// Copy with alpha_j (1-based) replaced.
    pub fn with_coefficient(&self, j: usize, value: Mod1Fixed) -> Self {
        let mut alpha = self.alpha.clone();
        alpha[j - 1] = value;
        CoefficientVector { alpha }
    }

    /// In-place 1-based write, for grid and ascent inner loops.
    pub(crate) fn set_coefficient(&mut self, j: usize, value: Mod1Fixed) {
        self.alpha[j - 1] = value;
    }

    /// Componentwise negation mod 1 (0 maps to 0); evaluating the result
    /// conjugates the sum.
    pub fn conjugate_input(&self) -> Self {
        CoefficientVector {
            alpha: self.alpha.iter().map(|a| a.wrapping_neg()).collect(),
        }
    }

    /// The coefficient tuple h*alpha mod 1, exactly.
    pub fn dilate(&self, h: u64) -> Result<Self> {
        if h == 0 {
            return Err(domain("dilation factor h must be at least 1"));
        }
        Ok(CoefficientVector {
            alpha: self
                .alpha
                .iter()
                .map(|a| a.wrapping_mul_int(h as u128))
                .collect(),
        })
    }

    /// Exact phase p(x) = alpha_1 x + ... + alpha_k x^k mod 1.
    pub fn phase_at(&self, x: u64) -> Mod1Fixed {
        let x = x as u128;
        let mut acc: u128 = 0;
        let mut power: u128 = 1;
        for a in &self.alpha {
            power = power.wrapping_mul(x);
            acc = acc.wrapping_add(a.raw().wrapping_mul(power));
        }
        Mod1Fixed::from_raw(acc)
    }
}

/// A complex Weyl-sum value with its modulus and term count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeylValue {
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
    pub terms: u64,
}

impl WeylValue {
    pub fn new(re: f64, im: f64, terms: u64) -> Self {
        WeylValue {
            re,
            im,
            modulus: re.hypot(im),
            terms,
        }
    }
}

/// Accuracy contract for the forward-difference evaluator.
///
/// Seeding a block from width-W phases leaves each table entry within
/// (k+1)*2^-W of exact; after B forward steps the propagated error is at
/// most (k+1)*C(B,k)*2^-W, so a block is never run longer than B steps.
/// (With coefficients on the 2^-128 grid the seeds are in fact exact and
/// the bound is pure headroom, but the budget keeps the contract explicit
/// and checkable.)
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ErrorBudget {
    pub width: u32,
    pub block: u32,
    pub phase_error_bound: f64,
}

const DEFAULT_PHASE_ERROR: f64 = 1.0 / (1u64 << 40) as f64;

impl ErrorBudget {
    /// Largest block for degree k whose propagated phase error stays below
    /// 2^-40 at width 128.
    pub fn for_degree(k: usize) -> Result<Self> {
        let width = WIDTH;
        let target_ln = DEFAULT_PHASE_ERROR.ln();
        let feasible = |b: u64| propagated_error_ln(b, k, width) <= target_ln;
        if !feasible(k as u64 + 1) {
            return Err(Error::Budget(format!(
                "(k+1)*C(B,k)*2^-{width} > {DEFAULT_PHASE_ERROR:e} already at B = k+1 = {}",
                k + 1
            )));
        }
        let mut lo = k as u64 + 1;
        let mut hi = 1u64 << 31;
        if feasible(hi) {
            lo = hi;
        }
        while lo + 1 < hi {
            let mid = lo + (hi - lo) / 2;
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(ErrorBudget {
            width,
            block: lo.min(u32::MAX as u64) as u32,
            phase_error_bound: DEFAULT_PHASE_ERROR,
        })
    }

    /// The invariant (k+1)*C(B,k)*2^-W <= phase_error_bound for degree k.
    pub fn validate_for(&self, k: usize) -> Result<()> {
        if self.width != WIDTH {
            return Err(config(format!(
                "fixed-point width is {WIDTH} bits; budget requests {}",
                self.width
            )));
        }
        if self.block as u64 <= k as u64 {
            return Err(Error::Budget(format!(
                "block B = {} must exceed the degree k = {k}",
                self.block
            )));
        }
        let err_ln = propagated_error_ln(self.block as u64, k, self.width);
        if err_ln > self.phase_error_bound.ln() {
            return Err(Error::Budget(format!(
                "(k+1)*C(B,k)*2^-W = exp({err_ln:.3}) exceeds phase_error_bound = {:e} \
                 for (B,k,W) = ({},{k},{})",
                self.phase_error_bound, self.block, self.width
            )));
        }
        Ok(())
    }
}

/// ln of (k+1) * C(B,k) * 2^-W.
fn propagated_error_ln(b: u64, k: usize, width: u32) -> f64 {
    let mut ln_binom = 0.0f64;
    for i in 1..=k as u64 {
        ln_binom += ((b - k as u64 + i) as f64 / i as f64).ln();
    }
    ((k + 1) as f64).ln() + ln_binom - width as f64 * std::f64::consts::LN_2
}

/// e(frac) as (cos, sin) of 2*pi*frac.
#[inline]
pub fn unit_circle(frac: Mod1Fixed) -> (f64, f64) {
    let (s, c) = (std::f64::consts::TAU * frac.to_f64()).sin_cos();
    (c, s)
}

/// Batch unit-circle conversion; `out` must match `fracs` in length.
pub fn unit_circle_batch(fracs: &[Mod1Fixed], out: &mut [(f64, f64)]) {
    assert_eq!(fracs.len(), out.len());
    for (slot, &frac) in out.iter_mut().zip(fracs) {
        *slot = unit_circle(frac);
    }
}

fn pairwise_sum(terms: &[(f64, f64)]) -> (f64, f64) {
    if terms.len() <= 16 {
        let mut re = 0.0;
        let mut im = 0.0;
        for &(r, i) in terms {
            re += r;
            im += i;
        }
        (re, im)
    } else {
        let (a, b) = terms.split_at(terms.len() / 2);
        let (r1, i1) = pairwise_sum(a);
        let (r2, i2) = pairwise_sum(b);
        (r1 + r2, i1 + i2)
    }
}

/// Forward-difference table for exact phase iteration.
///
/// d[j] holds the j-th forward difference of the phase polynomial at the
/// current x; stepping is k wrapping additions.
struct DiffTable {
    d: Vec<u128>,
}

impl DiffTable {
    fn seed(coeffs: &CoefficientVector, x0: u64) -> Self {
        let k = coeffs.degree();
        let mut row: Vec<u128> = (0..=k as u64)
            .map(|r| coeffs.phase_at(x0 + r).raw())
            .collect();
        let mut d = Vec::with_capacity(k + 1);
        d.push(row[0]);
        for j in 1..=k {
            for i in 0..=(k - j) {
                row[i] = row[i + 1].wrapping_sub(row[i]);
            }
            d.push(row[0]);
        }
        DiffTable { d }
    }

    #[inline]
    fn current(&self) -> u128 {
        self.d[0]
    }

    #[inline]
    fn step(&mut self) {
        for j in 0..self.d.len() - 1 {
            self.d[j] = self.d[j].wrapping_add(self.d[j + 1]);
        }
    }
}

/// Fill `out[i]` with the exact phase at x0 + i.
fn fill_phase_block(coeffs: &CoefficientVector, x0: u64, out: &mut [Mod1Fixed]) {
    let mut table = DiffTable::seed(coeffs, x0);
    for slot in out.iter_mut() {
        *slot = Mod1Fixed::from_raw(table.current());
        table.step();
    }
}

/// All phases p(1)..p(x_max) as exact grid points, filled in parallel.
pub fn phases_collect(coeffs: &CoefficientVector, x_max: u64) -> Vec<Mod1Fixed> {
    let n = x_max as usize;
    let mut out = vec![Mod1Fixed::ZERO; n];
    out.par_chunks_mut(SUM_BLOCK)
        .enumerate()
        .for_each(|(b, chunk)| {
            fill_phase_block(coeffs, 1 + (b * SUM_BLOCK) as u64, chunk);
        });
    out
}

/// Map each fixed-size block of phases to a partial result, in x order.
fn block_partials<T, F>(coeffs: &CoefficientVector, x_max: u64, block_len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &[Mod1Fixed]) -> T + Sync,
{
    let n_blocks = (x_max as usize + block_len - 1) / block_len;
    (0..n_blocks)
        .into_par_iter()
        .map_init(
            || vec![Mod1Fixed::ZERO; block_len],
            |buf, b| {
                let x0 = 1 + (b * block_len) as u64;
                let len = block_len.min((x_max - (x0 - 1)) as usize);
                let chunk = &mut buf[..len];
                fill_phase_block(coeffs, x0, chunk);
                f(x0, chunk)
            },
        )
        .collect()
}

fn sum_block(fracs: &[Mod1Fixed], terms: &mut Vec<(f64, f64)>) -> (f64, f64) {
    terms.clear();
    terms.extend(fracs.iter().map(|&p| unit_circle(p)));
    pairwise_sum(terms)
}

/// Reference evaluator: per-term polynomial phase reduction mod 1 in
/// 128-bit integer arithmetic, then unit-circle conversion and pairwise
/// summation. Slow but simple; the fast path is checked against it.
pub fn eval_direct(coeffs: &CoefficientVector, x_max: u64, precision: u32) -> Result<WeylValue> {
    if x_max == 0 {
        return Err(domain("X must be at least 1"));
    }
    if precision < 64 {
        return Err(config(format!("precision must be at least 64 bits, got {precision}")));
    }
    if precision > WIDTH {
        return Err(config(format!(
            "precision {precision} exceeds the {WIDTH}-bit phase pipeline"
        )));
    }
    let terms: Vec<(f64, f64)> = (1..=x_max)
        .map(|x| unit_circle(coeffs.phase_at(x)))
        .collect();
    let (re, im) = pairwise_sum(&terms);
    Ok(WeylValue::new(re, im, x_max))
}

/// Forward-difference evaluator. Blocks of at most `budget.block` steps are
/// re-seeded from direct phase evaluation; block partial sums merge in a
/// fixed tree, so the value is identical for any worker count.
pub fn eval_fast(coeffs: &CoefficientVector, x_max: u64, budget: &ErrorBudget) -> Result<WeylValue> {
    if x_max == 0 {
        return Err(domain("X must be at least 1"));
    }
    budget.validate_for(coeffs.degree())?;
    let block_len = (budget.block as usize).min(SUM_BLOCK);
    let partials = block_partials(coeffs, x_max, block_len, |_, fracs| {
        let mut terms = Vec::with_capacity(fracs.len());
        sum_block(fracs, &mut terms)
    });
    let (re, im) = pairwise_sum(&partials);
    Ok(WeylValue::new(re, im, x_max))
}

/// Convenience wrapper: eval_fast with the default budget for the degree.
pub fn eval(coeffs: &CoefficientVector, x_max: u64) -> Result<WeylValue> {
    eval_fast(coeffs, x_max, &ErrorBudget::for_degree(coeffs.degree())?)
}

/// f(h*alpha;X): the dilation is exact in fixed point, then the fast
/// evaluator runs on the dilated tuple.
pub fn eval_dilate(coeffs: &CoefficientVector, h: u64, x_max: u64) -> Result<WeylValue> {
    eval(&coeffs.dilate(h)?, x_max)
}

/// Value of f together with the weighted sums g_j = sum x^j e(p(x)) for
/// the requested (1-based) coefficient indices. d|f|^2/d alpha_j =
/// 4*pi*(im(f) re(g_j) - re(f) im(g_j)).
pub fn eval_with_power_sums(
    coeffs: &CoefficientVector,
    x_max: u64,
    indices: &[usize],
) -> Result<(WeylValue, Vec<(f64, f64)>)> {
    if x_max == 0 {
        return Err(domain("X must be at least 1"));
    }
    let budget = ErrorBudget::for_degree(coeffs.degree())?;
    let block_len = (budget.block as usize).min(SUM_BLOCK);
    let partials = block_partials(coeffs, x_max, block_len, |x0, fracs| {
        let mut f = (0.0f64, 0.0f64);
        let mut g = vec![(0.0f64, 0.0f64); indices.len()];
        for (offset, &frac) in fracs.iter().enumerate() {
            let (c, s) = unit_circle(frac);
            f.0 += c;
            f.1 += s;
            let x = (x0 + offset as u64) as f64;
            for (slot, &j) in g.iter_mut().zip(indices) {
                let w = x.powi(j as i32);
                slot.0 += w * c;
                slot.1 += w * s;
            }
        }
        (f, g)
    });
    let mut re = 0.0;
    let mut im = 0.0;
    let mut g_total = vec![(0.0f64, 0.0f64); indices.len()];
    for (f, g) in partials {
        re += f.0;
        im += f.1;
        for (total, part) in g_total.iter_mut().zip(g) {
            total.0 += part.0;
            total.1 += part.1;
        }
    }
    Ok((WeylValue::new(re, im, x_max), g_total))
}

/// Half-widths of the stability box around a point with |f| > T: moving
/// each alpha_j by at most T * X^-(j+1) / (4 pi k) keeps |f| above T/2.
pub fn perturbation_box(t_threshold: f64, x_max: u64, k: usize) -> Result<Vec<f64>> {
    if t_threshold <= 0.0 || !t_threshold.is_finite() {
        return Err(domain(format!("threshold T must be positive, got {t_threshold}")));
    }
    if x_max == 0 {
        return Err(domain("X must be at least 1"));
    }
    if k == 0 {
        return Err(domain("k must be at least 1"));
    }
    let scale = t_threshold / (4.0 * std::f64::consts::PI * k as f64);
    Ok((1..=k)
        .map(|j| scale * (x_max as f64).powi(-(j as i32 + 1)))
        .collect())
}

/// Upper bound 2*pi*X^(j+1) on |df/d alpha_j|, used for Lipschitz
/// certificates.
pub fn derivative_bound(j: usize, x_max: u64) -> f64 {
    2.0 * std::f64::consts::PI * (x_max as f64).powi(j as i32 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn coeffs(parts: &[&str]) -> CoefficientVector {
        CoefficientVector::from_strs(parts).unwrap()
    }

    #[test]
    fn zero_coefficients_sum_to_x() {
        let c = coeffs(&["0", "0", "0"]);
        let v = eval_direct(&c, 10, 64).unwrap();
        assert_eq!((v.re, v.im), (10.0, 0.0));
        assert_eq!(v.modulus, 10.0);
        let f = eval(&c, 10).unwrap();
        assert_eq!((f.re, f.im), (10.0, 0.0));
    }

    #[test]
    fn two_term_cancellation() {
        // e(1/2) + e(1) = -1 + 1 = 0.
        let c = coeffs(&["1/2", "0", "0"]);
        let v = eval_direct(&c, 2, 64).unwrap();
        assert!(v.modulus < 1e-14, "modulus = {}", v.modulus);
    }

    #[test]
    fn parity_cancellation_fast() {
        // Phases x^3/2 mod 1 alternate 1/2, 0, 1/2, 0.
        let c = coeffs(&["0", "0", "1/2"]);
        let v = eval(&c, 4).unwrap();
        assert!(v.modulus < 1e-14, "modulus = {}", v.modulus);
    }

    #[test]
    fn single_term_matches_direct_bitwise() {
        let c = coeffs(&["0.137", "0.42", "0.9", "0.01", "0.77"]);
        let fast = eval(&c, 1).unwrap();
        let direct = eval_direct(&c, 1, 128).unwrap();
        assert_eq!((fast.re, fast.im), (direct.re, direct.im));
    }

    #[test]
    fn difference_table_phases_are_exact() {
        let c = coeffs(&["0.1357", "0.2468", "0.7071", "0.9999"]);
        let phases = phases_collect(&c, 20000);
        for &x in &[1u64, 2, 3, 8191, 8192, 8193, 19999, 20000] {
            assert_eq!(phases[(x - 1) as usize], c.phase_at(x), "x = {x}");
        }
    }

    #[test]
    fn dilate_identity_and_halving() {
        let c = coeffs(&["1/4", "0", "0"]);
        let one = eval_dilate(&c, 1, 13).unwrap();
        let plain = eval(&c, 13).unwrap();
        assert_eq!((one.re, one.im), (plain.re, plain.im));
        // h = 2 sends alpha_1 = 1/4 to 1/2: e(1/2) + e(1) = 0.
        let halved = eval_dilate(&c, 2, 2).unwrap();
        assert!(halved.modulus < 1e-14);
        assert!(eval_dilate(&c, 0, 2).is_err());
    }

    #[test]
    fn conjugation_within_budget() {
        let c = coeffs(&["0.1357", "0.2468", "0.7071"]);
        let v = eval(&c, 500).unwrap();
        let w = eval(&c.conjugate_input(), 500).unwrap();
        assert!((v.re - w.re).abs() < 1e-10);
        assert!((v.im + w.im).abs() < 1e-10);
    }

    #[test]
    fn full_wrap_translation_is_bit_identical() {
        // Adding the representation of the integer 1 is a full wrap.
        let one = Mod1Fixed::parse("1").unwrap();
        let c = coeffs(&["0.1357", "0.2468", "0.7071"]);
        let shifted = CoefficientVector::new(
            c.coefficients()
                .iter()
                .map(|a| a.wrapping_add(one))
                .collect(),
        )
        .unwrap();
        let v = eval(&c, 777).unwrap();
        let w = eval(&shifted, 777).unwrap();
        assert_eq!((v.re, v.im), (w.re, w.im));
    }

    #[test]
    fn budget_rejects_oversized_block() {
        let bad = ErrorBudget {
            width: WIDTH,
            block: u32::MAX,
            phase_error_bound: 1e-30,
        };
        let err = bad.validate_for(8).unwrap_err();
        assert!(matches!(err, Error::Budget(_)), "{err}");
        let c = coeffs(&["0.1", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7", "0.8"]);
        assert!(eval_fast(&c, 100, &bad).is_err());
    }

    #[test]
    fn default_budget_blocks_shrink_with_degree() {
        let b3 = ErrorBudget::for_degree(3).unwrap();
        let b8 = ErrorBudget::for_degree(8).unwrap();
        assert!(b3.block > b8.block);
        assert!(b8.block > 1000);
        b3.validate_for(3).unwrap();
        b8.validate_for(8).unwrap();
    }

    #[test]
    fn perturbation_box_formulas() {
        // (T=X, k=1): X * X^-2 / (4 pi) = 1/(4 pi X).
        let x = 10u64;
        let b = perturbation_box(x as f64, x, 1).unwrap();
        assert!((b[0] - 1.0 / (4.0 * std::f64::consts::PI * x as f64)).abs() < 1e-18);
        // (T=100, X=10, k=2) -> (1/(8 pi), 1/(80 pi)).
        let b = perturbation_box(100.0, 10, 2).unwrap();
        assert!((b[0] - 1.0 / (8.0 * std::f64::consts::PI)).abs() < 1e-15);
        assert!((b[1] - 1.0 / (80.0 * std::f64::consts::PI)).abs() < 1e-16);
        assert!(perturbation_box(0.0, 10, 2).is_err());
    }

    #[test]
    fn derivative_bound_formulas() {
        assert!((derivative_bound(1, 1) - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((derivative_bound(2, 10) - 2000.0 * std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn eval_rejects_bad_arguments() {
        let c = coeffs(&["0.1", "0.2"]);
        assert!(matches!(eval_direct(&c, 0, 64), Err(Error::Domain(_))));
        assert!(matches!(eval_direct(&c, 5, 32), Err(Error::Config(_))));
        assert!(matches!(eval_direct(&c, 5, 256), Err(Error::Config(_))));
        assert!(CoefficientVector::from_strs(&["0.5"]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // Trivial bound |f| <= X for random coefficient tuples.
        #[test]
        fn modulus_below_term_count(
            a in any::<u128>(), b in any::<u128>(), c in any::<u128>(),
            x_max in 1u64..600,
        ) {
            let cv = CoefficientVector::new(vec![
                Mod1Fixed::from_raw(a),
                Mod1Fixed::from_raw(b),
                Mod1Fixed::from_raw(c),
            ]).unwrap();
            let v = eval(&cv, x_max).unwrap();
            prop_assert!(v.modulus <= x_max as f64);
        }

        // Fast path equals the direct path to floating accuracy.
        #[test]
        fn fast_matches_direct(
            a in any::<u128>(), b in any::<u128>(), c in any::<u128>(),
            x_max in 1u64..400,
        ) {
            let cv = CoefficientVector::new(vec![
                Mod1Fixed::from_raw(a),
                Mod1Fixed::from_raw(b),
                Mod1Fixed::from_raw(c),
            ]).unwrap();
            let fast = eval(&cv, x_max).unwrap();
            let direct = eval_direct(&cv, x_max, 128).unwrap();
            prop_assert!((fast.re - direct.re).abs() < 1e-10);
            prop_assert!((fast.im - direct.im).abs() < 1e-10);
        }
    }
}
