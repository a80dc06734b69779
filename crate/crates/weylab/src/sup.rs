//! Suprema of |f(alpha;X)| over a selected subset of coefficients.
//!
//! The certified mode evaluates |f| on the stability grid whose spacing in
//! coordinate i_l is delta_l = T * X^-(i_l+1) / (4 pi k): between any point
//! of a cell and its nearest corner the modulus moves by at most t*T/(4k)
//! (derivative bound 2 pi X^(j+1) times half-cell distances), so
//! [max over nodes, max + t*T/(4k)] brackets the true supremum. The
//! heuristic mode is a seeded multi-start gradient ascent on |f|^2 and
//! only ever reports a lower bound.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, infeasible, Result};
use crate::fixed::Mod1Fixed;
use crate::phase::{eval_fast, eval_with_power_sums, CoefficientVector, ErrorBudget, WeylValue};
use crate::rng::{derive_rng, next_f64};

/// Refuse certified grids beyond this many node evaluations.
pub const DEFAULT_NODE_BUDGET: u64 = 100_000_000;

/// Which coefficients the supremum ranges over (`sup_indices`) and which
/// are pinned from outside (`ambient_indices`), as 1-based suffixes of
/// {1..k}.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IndexSplit {
    k: usize,
    sup_indices: Vec<usize>,
    ambient_indices: Vec<usize>,
    sigma: u64,
}

impl IndexSplit {
    pub fn new(k: usize, sup_indices: Vec<usize>) -> Result<Self> {
        if k < 2 {
            return Err(domain(format!("degree k must be at least 2, got {k}")));
        }
        if sup_indices.is_empty() || sup_indices.len() > k {
            return Err(domain(format!(
                "need 1 <= t <= k supremum indices, got t = {}",
                sup_indices.len()
            )));
        }
        if !sup_indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(domain("supremum indices must be strictly increasing"));
        }
        if sup_indices[0] < 1 || *sup_indices.last().unwrap() > k {
            return Err(domain(format!("supremum indices must lie in 1..={k}")));
        }
        let ambient_indices = (1..=k).filter(|i| !sup_indices.contains(i)).collect();
        let sigma = sup_indices.iter().map(|&i| i as u64).sum();
        Ok(IndexSplit {
            k,
            sup_indices,
            ambient_indices,
            sigma,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of free coordinates t.
    pub fn t(&self) -> usize {
        self.sup_indices.len()
    }

    pub fn sup_indices(&self) -> &[usize] {
        &self.sup_indices
    }

    pub fn ambient_indices(&self) -> &[usize] {
        &self.ambient_indices
    }

    /// sigma = i_1 + ... + i_t.
    pub fn sigma(&self) -> u64 {
        self.sigma
    }

    /// Base coefficient vector: ambient values in place, zeros in the free
    /// slots.
    pub fn assemble(&self, ambient: &[Mod1Fixed]) -> Result<CoefficientVector> {
        if ambient.len() != self.ambient_indices.len() {
            return Err(domain(format!(
                "expected {} ambient coefficients, got {}",
                self.ambient_indices.len(),
                ambient.len()
            )));
        }
        let mut cv = CoefficientVector::zero(self.k)?;
        for (&idx, &val) in self.ambient_indices.iter().zip(ambient) {
            cv.set_coefficient(idx, val);
        }
        Ok(cv)
    }
}

/// The stability grid covering [0,1)^t for a threshold T.
#[derive(Clone, Debug, Serialize)]
pub struct GridPlan {
    pub threshold: f64,
    /// delta_l per supremum index.
    pub spacings: Vec<f64>,
    /// M_l = floor(1/delta_l).
    pub counts: Vec<u64>,
    /// Number of cells, prod (M_l + 1).
    pub total_points: u64,
    /// Number of corner evaluations, prod (M_l + 2) (the far corner of the
    /// last cell wraps past 1).
    pub eval_nodes: u64,
}

pub fn grid_plan(split: &IndexSplit, x_max: u64, t_threshold: f64) -> Result<GridPlan> {
    if x_max == 0 {
        return Err(domain("X must be at least 1"));
    }
    if !(t_threshold > 0.0 && t_threshold <= x_max as f64) {
        return Err(domain(format!(
            "threshold must satisfy 0 < T <= X, got T = {t_threshold}, X = {x_max}"
        )));
    }
    let k = split.k();
    let scale = t_threshold / (4.0 * std::f64::consts::PI * k as f64);
    let mut spacings = Vec::with_capacity(split.t());
    let mut counts = Vec::with_capacity(split.t());
    let mut total_points: u64 = 1;
    let mut eval_nodes: u64 = 1;
    for &i in split.sup_indices() {
        let delta = scale * (x_max as f64).powi(-(i as i32) - 1);
        let inv = 1.0 / delta;
        if !inv.is_finite() || inv >= u64::MAX as f64 {
            return Err(infeasible(format!(
                "grid count 1/delta_{i} = {inv:e} overflows a 64-bit counter; \
                 use the heuristic mode"
            )));
        }
        let m = inv.floor() as u64;
        total_points = total_points.checked_mul(m + 1).ok_or_else(|| {
            infeasible("grid cell count overflows a 64-bit counter; use the heuristic mode")
        })?;
        eval_nodes = eval_nodes.checked_mul(m + 2).ok_or_else(|| {
            infeasible("grid node count overflows a 64-bit counter; use the heuristic mode")
        })?;
        spacings.push(delta);
        counts.push(m);
    }
    Ok(GridPlan {
        threshold: t_threshold,
        spacings,
        counts,
        total_points,
        eval_nodes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SupModeTag {
    Certified,
    Heuristic,
}

/// How to compute per-instance suprema.
#[derive(Clone, Copy, Debug)]
pub enum SupMode {
    Certified { threshold: f64, node_budget: u64 },
    Heuristic { starts: u32 },
}

#[derive(Clone, Debug, Serialize)]
pub struct SupResult {
    /// Best modulus found; always a true lower bound for the supremum.
    pub lower: f64,
    /// Certified upper bound (certified mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    /// Full coefficient vector achieving `lower`; re-evaluating it
    /// reproduces `lower` bit for bit.
    pub argmax: CoefficientVector,
    /// Number of |f| evaluations spent.
    pub evaluations: u64,
    pub mode: SupModeTag,
}

/// Keep the candidate with the larger modulus; ties break toward the
/// lexicographically smallest coefficient tuple, so parallel reductions
/// are schedule-independent.
fn better(a: &(f64, CoefficientVector), b: &(f64, CoefficientVector)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1.coefficients() < b.1.coefficients())
}

/// Supremum with a certificate: evaluates every grid corner and returns
/// [lower, lower + t*T/(4k)] containing the true supremum.
pub fn certified_sup(
    ambient: &[Mod1Fixed],
    split: &IndexSplit,
    x_max: u64,
    t_threshold: f64,
    node_budget: u64,
) -> Result<SupResult> {
    let plan = grid_plan(split, x_max, t_threshold)?;
    if plan.eval_nodes > node_budget {
        return Err(infeasible(format!(
            "certified grid needs {} node evaluations, budget is {node_budget}; \
             raise the budget or use the heuristic mode",
            plan.eval_nodes
        )));
    }
    let base = split.assemble(ambient)?;
    let budget = ErrorBudget::for_degree(split.k())?;

    // Node coordinates per free dimension: m * delta_l for m = 0..=M_l+1,
    // reduced mod 1 (the far corner wraps onto 0..delta_l).
    let axes: Vec<Vec<Mod1Fixed>> = plan
        .spacings
        .iter()
        .zip(&plan.counts)
        .map(|(&delta, &m)| {
            (0..=m + 1)
                .map(|j| Mod1Fixed::from_f64((j as f64 * delta).rem_euclid(1.0)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let sizes: Vec<u64> = axes.iter().map(|a| a.len() as u64).collect();
    let total = plan.eval_nodes;

    const CHUNK: u64 = 512;
    let n_chunks = total.div_ceil(CHUNK);
    let best = (0..n_chunks)
        .into_par_iter()
        .map_init(
            || base.clone(),
            |cv, chunk_idx| -> Result<Option<(f64, CoefficientVector)>> {
                let mut local: Option<(f64, CoefficientVector)> = None;
                let start = chunk_idx * CHUNK;
                let end = (start + CHUNK).min(total);
                for linear in start..end {
                    let mut rest = linear;
                    for (dim, &size) in sizes.iter().enumerate().rev() {
                        let node = (rest % size) as usize;
                        rest /= size;
                        cv.set_coefficient(split.sup_indices()[dim], axes[dim][node]);
                    }
                    let value = eval_fast(cv, x_max, &budget)?;
                    let cand = (value.modulus, cv.clone());
                    if local.as_ref().is_none_or(|cur| better(&cand, cur)) {
                        local = Some(cand);
                    }
                }
                Ok(local)
            },
        )
        .try_reduce(
            || None,
            |a, b| {
                Ok(match (a, b) {
                    (Some(a), Some(b)) => Some(if better(&a, &b) { a } else { b }),
                    (a, None) => a,
                    (None, b) => b,
                })
            },
        )?
        .expect("grid has at least one node");

    let slack = split.t() as f64 * t_threshold / (4.0 * split.k() as f64);
    Ok(SupResult {
        lower: best.0,
        upper: Some(best.0 + slack),
        argmax: best.1,
        evaluations: total,
        mode: SupModeTag::Certified,
    })
}

fn radical_inverse(mut n: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while n > 0 {
        out += (n % base) as f64 * inv;
        n /= base;
        inv /= base as f64;
    }
    out
}

const HALTON_BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Start points: the origin first, then a Halton sequence with a seeded
/// Cranley-Patterson rotation. Extending `starts` keeps earlier points.
fn start_point(start: u32, rotation: &[f64]) -> Vec<f64> {
    if start == 0 {
        return vec![0.0; rotation.len()];
    }
    rotation
        .iter()
        .enumerate()
        .map(|(dim, rot)| {
            (radical_inverse(start as u64, HALTON_BASES[dim % HALTON_BASES.len()]) + rot)
                .rem_euclid(1.0)
        })
        .collect()
}

struct Ascent<'a> {
    split: &'a IndexSplit,
    base: CoefficientVector,
    x_max: u64,
    evals: u64,
}

impl<'a> Ascent<'a> {
    fn value_at(&mut self, point: &[f64]) -> Result<(CoefficientVector, WeylValue)> {
        let mut cv = self.base.clone();
        for (&idx, &p) in self.split.sup_indices().iter().zip(point) {
            cv.set_coefficient(idx, Mod1Fixed::from_f64(p)?);
        }
        let v = crate::phase::eval(&cv, self.x_max)?;
        self.evals += 1;
        Ok((cv, v))
    }

    /// Gradient ascent on |f|^2 with a wraparound backtracking line search.
    /// Coordinates are preconditioned by X^-i_l so every free direction
    /// moves on its natural scale.
    fn run(&mut self, start: Vec<f64>) -> Result<(f64, CoefficientVector)> {
        let indices = self.split.sup_indices().to_vec();
        let x = self.x_max as f64;
        let coord_scale: Vec<f64> = indices.iter().map(|&i| x.powi(-(i as i32))).collect();

        let mut point = start;
        let (mut best_cv, mut best) = self.value_at(&point)?;
        let mut best_mod = best.modulus;
        let mut step = 0.05f64;
        let max_iters = 64 + 16 * indices.len();

        for _ in 0..max_iters {
            let mut cv = self.base.clone();
            for (&idx, &p) in indices.iter().zip(&point) {
                cv.set_coefficient(idx, Mod1Fixed::from_f64(p)?);
            }
            let (value, g) = eval_with_power_sums(&cv, self.x_max, &indices)?;
            self.evals += 1;
            // d|f|^2/d alpha_j = 4 pi (im f * re g_j - re f * im g_j).
            let grad: Vec<f64> = g
                .iter()
                .map(|&(gr, gi)| {
                    4.0 * std::f64::consts::PI * (value.im * gr - value.re * gi)
                })
                .collect();
            let dir: Vec<f64> = grad
                .iter()
                .zip(&coord_scale)
                .map(|(&d, &s)| d * s)
                .collect();
            let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                break;
            }

            let mut advanced = false;
            while step >= 1e-13 {
                let candidate: Vec<f64> = point
                    .iter()
                    .zip(dir.iter().zip(&coord_scale))
                    .map(|(&p, (&d, &s))| (p + step * (d / norm) * s).rem_euclid(1.0))
                    .collect();
                let (cand_cv, cand_val) = self.value_at(&candidate)?;
                if cand_val.modulus > value.modulus {
                    point = candidate;
                    if cand_val.modulus > best_mod {
                        best_mod = cand_val.modulus;
                        best_cv = cand_cv;
                        best = cand_val;
                    }
                    step = (step * 1.7).min(0.25);
                    advanced = true;
                    break;
                }
                step *= 0.4;
            }
            if !advanced {
                break;
            }
        }
        let _ = best;
        Ok((best_mod, best_cv))
    }
}

/// Multi-start lower-bound search for the supremum. Deterministic for a
/// fixed seed: start points derive from (seed, start-index) only, and the
/// cross-start reduction breaks ties lexicographically.
pub fn heuristic_sup(
    ambient: &[Mod1Fixed],
    split: &IndexSplit,
    x_max: u64,
    starts: u32,
    seed: u64,
) -> Result<SupResult> {
    if starts == 0 {
        return Err(domain("starts must be at least 1"));
    }
    if x_max == 0 {
        return Err(domain("X must be at least 1"));
    }
    let base = split.assemble(ambient)?;
    let mut rotation_rng = derive_rng(seed, u64::MAX);
    let rotation: Vec<f64> = (0..split.t()).map(|_| next_f64(&mut rotation_rng)).collect();

    let per_start: Vec<(f64, CoefficientVector, u64)> = (0..starts)
        .into_par_iter()
        .map(|s| -> Result<(f64, CoefficientVector, u64)> {
            let mut ascent = Ascent {
                split,
                base: base.clone(),
                x_max,
                evals: 0,
            };
            let (modulus, argmax) = ascent.run(start_point(s, &rotation))?;
            Ok((modulus, argmax, ascent.evals))
        })
        .collect::<Result<Vec<_>>>()?;

    let evaluations: u64 = per_start.iter().map(|r| r.2).sum();
    let best = per_start
        .into_iter()
        .map(|(m, cv, _)| (m, cv))
        .reduce(|a, b| if better(&a, &b) { a } else { b })
        .expect("at least one start");

    Ok(SupResult {
        lower: best.0,
        upper: None,
        argmax: best.1,
        evaluations,
        mode: SupModeTag::Heuristic,
    })
}

/// Run the per-instance supremum in the requested mode.
pub fn sup_with_mode(
    ambient: &[Mod1Fixed],
    split: &IndexSplit,
    x_max: u64,
    mode: SupMode,
    seed: u64,
) -> Result<SupResult> {
    match mode {
        SupMode::Certified {
            threshold,
            node_budget,
        } => certified_sup(ambient, split, x_max, threshold, node_budget),
        SupMode::Heuristic { starts } => heuristic_sup(ambient, split, x_max, starts, seed),
    }
}

/// Maximum of the per-dilate suprema of |f(h*alpha;X)| over 1 <= h <= H,
/// together with the achieving h (smallest on ties). The reported argmax is
/// the coefficient tuple of the dilated sum, so it reproduces `lower`
/// under plain re-evaluation.
pub fn sup_over_dilates(
    ambient: &[Mod1Fixed],
    split: &IndexSplit,
    x_max: u64,
    h_max: u64,
    mode: SupMode,
    seed: u64,
) -> Result<(u64, SupResult)> {
    if h_max == 0 {
        return Err(domain("H must be at least 1"));
    }
    let mut best: Option<(u64, SupResult)> = None;
    for h in 1..=h_max {
        let ambient_h: Vec<Mod1Fixed> = ambient
            .iter()
            .map(|a| a.wrapping_mul_int(h as u128))
            .collect();
        let res = sup_with_mode(&ambient_h, split, x_max, mode, seed)?;
        let replace = match &best {
            None => true,
            Some((_, cur)) => res.lower > cur.lower,
        };
        if replace {
            best = Some((h, res));
        }
    }
    Ok(best.expect("h_max >= 1"))
}
