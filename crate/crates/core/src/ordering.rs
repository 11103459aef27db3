//! Choosing a labelling of the single-body levels.
//!
//! The exact spectrum ignores the order of `ε`, but a truncated one does not:
//! dropping sector `q` discards the Fourier modes `ℓ` with `L/gcd(L,ℓ) = q`,
//! so orderings that put little spectral weight there lose less. Scores use
//! the unnormalized transform `X_ℓ = Σ_k ε_k ω_L^{−kℓ}`:
//!
//! ```text
//! A_q = Σ_{ℓ ∈ q} |X_ℓ|            P_q = (1/L) Σ_{ℓ ∈ q} |X_ℓ|² / Σ_k ε_k²
//! ```
//!
//! With this normalization `Σ_k ε_k² = (1/L) Σ_ℓ |X_ℓ|²`, so the `P_q` over
//! all sectors, `q = 1` included, sum to one. Both scores are unchanged by
//! cyclic shifts and reversal of the ordering.

use std::fmt;

use itertools::Itertools;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cyclotomic::{root_value, totient};
use crate::error::{Error, Result};
use crate::sectors::galois_group;

/// `X_ℓ = Σ_k ε_k ω_L^{−kℓ}` for every `ℓ`.
pub fn dft(eps: &[f64]) -> Vec<Complex64> {
    let l = eps.len();
    (0..l)
        .map(|ell| {
            eps.iter()
                .enumerate()
                .map(|(k, &e)| e * root_value(l as u32, -((k * ell % l) as i64)))
                .sum()
        })
        .collect()
}

/// The mode indices of sector `q`: `ℓ = g·L/q` for `g` a unit mod `q`.
pub fn sector_modes(l: u32, q: u32) -> Result<Vec<u32>> {
    if q == 0 || l == 0 || l % q != 0 {
        return Err(Error::NotADivisor { q, l });
    }
    let mut ells: Vec<u32> = galois_group(q).into_iter().map(|g| g * (l / q)).collect();
    ells.sort_unstable();
    Ok(ells)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingScore {
    pub q: u32,
    /// Absolute sum, in energy units.
    pub a: f64,
    /// Fraction of spectral power.
    pub p: f64,
}

fn energy_sum(eps: &[f64]) -> f64 {
    eps.iter().map(|e| e * e).sum()
}

pub fn sector_scores(eps: &[f64], q: u32) -> Result<OrderingScore> {
    let x = dft(eps);
    score_from_modes(&x, energy_sum(eps), q)
}

fn score_from_modes(x: &[Complex64], power: f64, q: u32) -> Result<OrderingScore> {
    let l = x.len() as u32;
    let ells = sector_modes(l, q)?;
    let a = ells.iter().map(|&e| x[e as usize].norm()).sum();
    let p = if power > 0.0 {
        ells.iter().map(|&e| x[e as usize].norm_sqr()).sum::<f64>() / (l as f64 * power)
    } else {
        0.0
    };
    Ok(OrderingScore { q, a, p })
}

/// Scores of every sector, `q` descending (ending with `q = 1`).
pub fn all_sector_scores(eps: &[f64]) -> Result<Vec<OrderingScore>> {
    if eps.is_empty() {
        return Err(Error::invalid("single-body spectrum is empty"));
    }
    let x = dft(eps);
    let power = energy_sum(eps);
    crate::cyclotomic::divisors(eps.len() as u64)
        .into_iter()
        .rev()
        .map(|q| score_from_modes(&x, power, q as u32))
        .collect()
}

/// `|Σ ε² − (1/L) Σ |X|²| / Σ ε²`.
pub fn parseval_residual(eps: &[f64]) -> f64 {
    let lhs = energy_sum(eps);
    let rhs = dft(eps).iter().map(|z| z.norm_sqr()).sum::<f64>() / eps.len() as f64;
    if lhs == 0.0 {
        rhs
    } else {
        (lhs - rhs).abs() / lhs
    }
}

/// Mean spacing of the sorted single-body levels, `(max − min)/(L − 1)`.
pub fn mean_spacing(eps: &[f64]) -> Result<f64> {
    if eps.len() < 2 {
        return Err(Error::invalid("level spacing needs at least two levels"));
    }
    let (lo, hi) = eps
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| {
            (lo.min(e), hi.max(e))
        });
    Ok((hi - lo) / (eps.len() - 1) as f64)
}

/// Order-of-magnitude floors `(φ(q)·Δ, φ(q)·Δ²/Σ ε²)` for `A_q` and `P_q`,
/// with `Δ` the mean single-body spacing.
pub fn min_estimates(q: u32, eps: &[f64]) -> Result<(f64, f64)> {
    if q < 2 {
        return Err(Error::invalid("estimates are defined for sectors q > 1"));
    }
    let d = mean_spacing(eps)?;
    let phi = totient(q as u64)? as f64;
    Ok((phi * d, phi * d * d / energy_sum(eps)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    A,
    P,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostTerm {
    pub metric: Metric,
    pub q: u32,
    pub weight: f64,
}

/// A weighted sum of `A_q` and `P_q` terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub terms: Vec<CostTerm>,
}

impl CostSpec {
    pub fn single(metric: Metric, q: u32) -> Self {
        CostSpec {
            terms: vec![CostTerm {
                metric,
                q,
                weight: 1.0,
            }],
        }
    }

    pub fn a(q: u32) -> Self {
        Self::single(Metric::A, q)
    }

    pub fn p(q: u32) -> Self {
        Self::single(Metric::P, q)
    }

    /// The same metric summed over several sectors with unit weights.
    pub fn sum(metric: Metric, qs: &[u32]) -> Self {
        CostSpec {
            terms: qs
                .iter()
                .map(|&q| CostTerm {
                    metric,
                    q,
                    weight: 1.0,
                })
                .collect(),
        }
    }

    pub fn sectors(&self) -> Vec<u32> {
        self.terms.iter().map(|t| t.q).unique().collect()
    }

    pub fn evaluate(&self, eps: &[f64]) -> Result<f64> {
        Ok(CostModel::new(eps, self)?.cost())
    }
}

impl fmt::Display for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|t| {
                let m = match t.metric {
                    Metric::A => "A",
                    Metric::P => "P",
                };
                if t.weight == 1.0 {
                    format!("{m}_{}", t.q)
                } else {
                    format!("{}*{m}_{}", t.weight, t.q)
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// Incrementally maintained transform coefficients for the modes a cost
/// needs, under transpositions of the arrangement.
struct CostModel {
    l: usize,
    /// Single-body energy at each position.
    values: Vec<f64>,
    twiddle: Vec<Complex64>,
    modes: Vec<u32>,
    x: Vec<Complex64>,
    /// Per term: metric, weight, and indices into `modes`.
    terms: Vec<(Metric, f64, Vec<usize>)>,
    power: f64,
}

impl CostModel {
    fn new(eps: &[f64], spec: &CostSpec) -> Result<Self> {
        if eps.is_empty() {
            return Err(Error::invalid("single-body spectrum is empty"));
        }
        if spec.terms.is_empty() {
            return Err(Error::invalid("cost has no terms"));
        }
        let l = eps.len();
        let mut modes: Vec<u32> = Vec::new();
        let mut terms = Vec::new();
        for t in &spec.terms {
            if t.q < 1 {
                return Err(Error::invalid("sector q must be positive"));
            }
            let ells = sector_modes(l as u32, t.q)?;
            let idx = ells
                .iter()
                .map(|e| match modes.iter().position(|m| m == e) {
                    Some(i) => i,
                    None => {
                        modes.push(*e);
                        modes.len() - 1
                    }
                })
                .collect();
            terms.push((t.metric, t.weight, idx));
        }
        let twiddle = (0..l).map(|m| root_value(l as u32, -(m as i64))).collect();
        let mut model = CostModel {
            l,
            values: eps.to_vec(),
            twiddle,
            modes,
            x: Vec::new(),
            terms,
            power: energy_sum(eps),
        };
        model.recompute();
        Ok(model)
    }

    fn recompute(&mut self) {
        let l = self.l;
        self.x = self
            .modes
            .iter()
            .map(|&ell| {
                self.values
                    .iter()
                    .enumerate()
                    .map(|(k, &e)| e * self.twiddle[k * ell as usize % l])
                    .sum()
            })
            .collect();
    }

    fn cost_of(&self, x: &[Complex64]) -> f64 {
        self.terms
            .iter()
            .map(|(metric, w, idx)| {
                let s = match metric {
                    Metric::A => idx.iter().map(|&i| x[i].norm()).sum::<f64>(),
                    Metric::P if self.power > 0.0 => {
                        idx.iter().map(|&i| x[i].norm_sqr()).sum::<f64>()
                            / (self.l as f64 * self.power)
                    }
                    Metric::P => 0.0,
                };
                w * s
            })
            .sum()
    }

    fn cost(&self) -> f64 {
        self.cost_of(&self.x)
    }

    /// Coefficients after swapping positions `i` and `j`, written to `out`.
    fn swapped(&self, i: usize, j: usize, out: &mut Vec<Complex64>) {
        let d = self.values[j] - self.values[i];
        out.clear();
        out.extend(self.modes.iter().zip(&self.x).map(|(&ell, &x)| {
            let ell = ell as usize;
            x + d * (self.twiddle[i * ell % self.l] - self.twiddle[j * ell % self.l])
        }));
    }

    fn apply_swap(&mut self, i: usize, j: usize, x: &[Complex64]) {
        self.values.swap(i, j);
        self.x.clear();
        self.x.extend_from_slice(x);
    }

    /// `A_q` of the current arrangement from the maintained coefficients,
    /// when `q` is one of the cost's sectors.
    fn a_of(&self, q: u32) -> Option<f64> {
        let ells = sector_modes(self.l as u32, q).ok()?;
        ells.iter()
            .map(|e| {
                self.modes
                    .iter()
                    .position(|m| m == e)
                    .map(|i| self.x[i].norm())
            })
            .sum()
    }
}

/// Rearranged energies: position `k` receives `eps[perm[k]]`.
pub fn apply_permutation(eps: &[f64], perm: &[usize]) -> Vec<f64> {
    perm.iter().map(|&i| eps[i]).collect()
}

/// Indices that sort `eps` ascending: the monotonic ordering.
pub fn monotonic_permutation(eps: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..eps.len()).collect();
    idx.sort_by(|&a, &b| eps[a].total_cmp(&eps[b]));
    idx
}

/// Lexicographically smallest arrangement among all cyclic shifts and
/// reversals of `perm`; equal for arrangements with identical scores by
/// symmetry.
pub fn canonical_permutation(perm: &[usize]) -> Vec<usize> {
    let n = perm.len();
    let mut best = perm.to_vec();
    let rev: Vec<usize> = perm.iter().rev().copied().collect();
    for base in [perm, &rev[..]] {
        for s in 0..n {
            let cand: Vec<usize> = (0..n).map(|k| base[(k + s) % n]).collect();
            if cand < best {
                best = cand;
            }
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Geometric cooling factor applied after every temperature step.
    pub alpha: f64,
    /// Proposals per temperature step; `None` means `L²`.
    pub moves_per_temperature: Option<usize>,
    /// Starting temperature; `None` estimates it as the standard deviation of
    /// the cost over 100 random arrangements.
    pub initial_temperature: Option<f64>,
    /// Maximum number of proposals.
    pub budget: u64,
    /// Temperature steps without a new best before reheating to the
    /// starting temperature from the best arrangement.
    pub reheat_patience: usize,
    /// Stop as soon as `A_q < F·φ(q)·Δ` holds for every sector of the cost;
    /// `None` runs the full budget.
    pub stop_factor: Option<f64>,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            alpha: 0.995,
            moves_per_temperature: None,
            initial_temperature: None,
            budget: 100_000,
            reheat_patience: 200,
            stop_factor: Some(1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Criterion,
    Budget,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub evaluations: u64,
    pub temperature: f64,
    pub cost: f64,
    pub best: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealResult {
    /// Best arrangement: position `k` holds `eps[perm[k]]`.
    pub perm: Vec<usize>,
    pub cost: f64,
    pub initial_cost: f64,
    pub evaluations: u64,
    pub stop: StopReason,
    pub seed: u64,
    pub trace: Vec<TracePoint>,
}

/// Coefficients are rebuilt from scratch this often to bound drift from
/// incremental updates.
const RECOMPUTE_EVERY: u64 = 4096;

fn stop_met(model: &CostModel, spec: &CostSpec, factor: Option<f64>, spacing: f64) -> bool {
    let Some(f) = factor else { return false };
    spec.sectors().into_iter().filter(|&q| q > 1).all(|q| {
        let phi = totient(q as u64).unwrap_or(1) as f64;
        model.a_of(q).is_some_and(|a| a < f * phi * spacing)
    })
}

/// Simulated annealing over arrangements with random-transposition moves,
/// starting from the given order of `eps`. Deterministic for a fixed seed.
pub fn anneal(
    eps: &[f64],
    spec: &CostSpec,
    schedule: &Schedule,
    seed: u64,
) -> Result<AnnealResult> {
    let l = eps.len();
    let mut model = CostModel::new(eps, spec)?;
    if !(schedule.alpha > 0.0 && schedule.alpha < 1.0) {
        return Err(Error::invalid("cooling factor must lie in (0, 1)"));
    }
    if let Some(t) = schedule.initial_temperature {
        if !(t > 0.0) {
            return Err(Error::invalid("temperatures must be positive"));
        }
    }
    let spacing = if l >= 2 { mean_spacing(eps)? } else { 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..l).collect();
    let initial_cost = model.cost();
    let mut cost = initial_cost;
    let mut best = (perm.clone(), cost);
    let mut trace = vec![TracePoint {
        evaluations: 0,
        temperature: 0.0,
        cost,
        best: cost,
    }];
    let done = |stop, evaluations, best: (Vec<usize>, f64), trace| {
        Ok(AnnealResult {
            perm: best.0,
            cost: best.1,
            initial_cost,
            evaluations,
            stop,
            seed,
            trace,
        })
    };
    if stop_met(&model, spec, schedule.stop_factor, spacing) {
        return done(StopReason::Criterion, 0, best, trace);
    }
    if l < 2 {
        return done(StopReason::Budget, 0, best, trace);
    }

    let t0 = match schedule.initial_temperature {
        Some(t) => t,
        None => {
            let costs: Vec<f64> = (0..100)
                .map(|_| {
                    let mut p = eps.to_vec();
                    p.shuffle(&mut rng);
                    spec.evaluate(&p)
                })
                .collect::<Result<_>>()?;
            let mean = costs.iter().sum::<f64>() / costs.len() as f64;
            let sd =
                (costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / costs.len() as f64).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        }
    };
    trace[0].temperature = t0;
    let per_step = schedule.moves_per_temperature.unwrap_or(l * l).max(1);
    let mut temperature = t0;
    let mut evaluations = 0u64;
    let mut since_best = 0usize;
    let mut scratch = Vec::new();
    while evaluations < schedule.budget {
        let mut improved = false;
        for _ in 0..per_step {
            if evaluations >= schedule.budget {
                break;
            }
            evaluations += 1;
            let i = rng.gen_range(0..l);
            let mut j = rng.gen_range(0..l - 1);
            if j >= i {
                j += 1;
            }
            model.swapped(i, j, &mut scratch);
            let new_cost = model.cost_of(&scratch);
            let delta = new_cost - cost;
            if delta <= 0.0 || rng.gen::<f64>() < (-delta / temperature).exp() {
                model.apply_swap(i, j, &scratch);
                perm.swap(i, j);
                cost = new_cost;
                if evaluations % RECOMPUTE_EVERY == 0 {
                    model.recompute();
                    cost = model.cost();
                }
                if cost < best.1 {
                    best = (perm.clone(), cost);
                    improved = true;
                    if stop_met(&model, spec, schedule.stop_factor, spacing) {
                        trace.push(TracePoint {
                            evaluations,
                            temperature,
                            cost,
                            best: best.1,
                        });
                        return done(StopReason::Criterion, evaluations, best, trace);
                    }
                }
            }
        }
        trace.push(TracePoint {
            evaluations,
            temperature,
            cost,
            best: best.1,
        });
        since_best = if improved { 0 } else { since_best + 1 };
        if since_best >= schedule.reheat_patience {
            since_best = 0;
            temperature = t0;
            perm = best.0.clone();
            model.values = apply_permutation(eps, &perm);
            model.recompute();
            cost = model.cost();
        } else {
            temperature *= schedule.alpha;
        }
    }
    // Report the best arrangement's cost from a fresh transform.
    let exact = spec.evaluate(&apply_permutation(eps, &best.0))?;
    best.1 = exact;
    done(StopReason::Budget, evaluations, best, trace)
}

/// Independent chains with seeds `seed, seed+1, …` run in parallel; the best
/// result wins, ties going to the lowest seed.
pub fn anneal_restarts(
    eps: &[f64],
    spec: &CostSpec,
    schedule: &Schedule,
    seed: u64,
    restarts: usize,
) -> Result<AnnealResult> {
    let results = (0..restarts.max(1) as u64)
        .into_par_iter()
        .map(|r| anneal(eps, spec, schedule, seed.wrapping_add(r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(results
        .into_iter()
        .reduce(|a, b| if b.cost < a.cost { b } else { a })
        .expect("at least one chain"))
}

/// Largest `L` accepted by [`exhaustive_minimum`].
pub const EXHAUSTIVE_MAX_L: usize = 10;

/// Global minimum over all arrangements, searching one representative per
/// cyclic shift (position 0 fixed). Returns every optimal arrangement in
/// canonical form, within `1e-12` relative of the minimum.
pub fn exhaustive_minimum(eps: &[f64], spec: &CostSpec) -> Result<(f64, Vec<Vec<usize>>)> {
    let l = eps.len();
    if l == 0 || l > EXHAUSTIVE_MAX_L {
        return Err(Error::invalid(format!(
            "exhaustive search supports 1 ≤ L ≤ {EXHAUSTIVE_MAX_L}, got {l}"
        )));
    }
    CostModel::new(eps, spec)?;
    let results: Vec<(f64, Vec<usize>)> = (1..l)
        .permutations(l - 1)
        .par_bridge()
        .map(|rest| {
            let mut perm = Vec::with_capacity(l);
            perm.push(0);
            perm.extend(rest);
            let c = spec
                .evaluate(&apply_permutation(eps, &perm))
                .expect("validated cost");
            (c, perm)
        })
        .collect();
    let min = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * min.abs().max(1e-300);
    let mut optima: Vec<Vec<usize>> = results
        .into_iter()
        .filter(|r| r.0 <= min + tol)
        .map(|r| canonical_permutation(&r.1))
        .collect();
    optima.sort();
    optima.dedup();
    Ok((min, optima))
}
