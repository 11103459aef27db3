//! Brute-force reference: enumerate every occupation vector and evaluate
//! Fourier values, invariants, and energies directly.
//!
//! Enumeration is streaming and lexicographic. Ranks follow the same order,
//! so a caller can split `[0, C_R(L, N))` into chunks and walk each chunk
//! independently with [`ConfigIter::range`].

use std::collections::HashMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::count::Count;
use crate::cyclotomic::{gcd, root_value, transfer_matrix, CycloElement, TransferMatrix};
use crate::error::{Error, Result};
use crate::sectors::fold_config;
use crate::spectrum::WeightedSpectrum;

/// Per-level occupancy restriction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistics {
    Fermion,
    Boson,
    Cap(u32),
}

impl Statistics {
    /// The occupancy cap `R` for `n` particles.
    pub fn cap(self, n: u32) -> u32 {
        match self {
            Statistics::Fermion => 1,
            Statistics::Boson => n,
            Statistics::Cap(r) => r,
        }
    }
}

/// `C_R(L, N)`: vectors of length `l` with entries in `[0, r]` summing to `n`.
pub fn count_configs(l: u32, n: u32, r: u32) -> Count {
    let mut ways = vec![Count::ZERO; n as usize + 1];
    ways[0] = Count::ONE;
    for _ in 0..l {
        let mut next = vec![Count::ZERO; n as usize + 1];
        for (s, w) in ways.iter().enumerate() {
            if w.is_zero() {
                continue;
            }
            for v in 0..=r.min(n - s as u32) {
                next[s + v as usize] += w;
            }
        }
        ways = next;
    }
    ways.swap_remove(n as usize)
}

/// Suffix-count table for ranking: `ways[len][s]` vectors of length `len`
/// summing to `s`.
struct RankTable {
    r: u32,
    ways: Vec<Vec<u128>>,
}

impl RankTable {
    fn new(l: u32, n: u32, r: u32) -> Result<Self> {
        let mut ways = vec![vec![0u128; n as usize + 1]; l as usize + 1];
        ways[0][0] = 1;
        for len in 1..=l as usize {
            for s in 0..=n as usize {
                let mut acc = 0u128;
                for v in 0..=r.min(s as u32) as usize {
                    acc = acc
                        .checked_add(ways[len - 1][s - v])
                        .ok_or(Error::CountOverflow)?;
                }
                ways[len][s] = acc;
            }
        }
        Ok(RankTable { r, ways })
    }

    fn ways(&self, len: usize, s: u32) -> u128 {
        self.ways[len][s as usize]
    }
}

/// Lexicographic rank of `config` among vectors with the same length, sum and cap.
pub fn rank_config(config: &[u32], r: u32) -> Result<u128> {
    let l = config.len();
    let n: u32 = config.iter().sum();
    let table = RankTable::new(l as u32, n, r)?;
    let mut rank = 0u128;
    let mut remaining = n;
    for (i, &c) in config.iter().enumerate() {
        for v in 0..c {
            rank += table.ways(l - i - 1, remaining - v);
        }
        remaining -= c;
    }
    Ok(rank)
}

/// The vector with lexicographic rank `rank`, or `None` past the end.
pub fn unrank_config(l: u32, n: u32, r: u32, rank: u128) -> Result<Option<Vec<u32>>> {
    let table = RankTable::new(l, n, r)?;
    Ok(unrank_with(&table, l, n, rank))
}

fn unrank_with(table: &RankTable, l: u32, n: u32, mut rank: u128) -> Option<Vec<u32>> {
    if rank >= table.ways(l as usize, n) {
        return None;
    }
    let mut out = vec![0u32; l as usize];
    let mut remaining = n;
    for i in 0..l as usize {
        for v in 0..=table.r.min(remaining) {
            let c = table.ways(l as usize - i - 1, remaining - v);
            if rank < c {
                out[i] = v;
                remaining -= v;
                break;
            }
            rank -= c;
        }
    }
    Some(out)
}

fn first_config(l: u32, n: u32, r: u32) -> Option<Vec<u32>> {
    if n as u64 > l as u64 * r as u64 {
        return None;
    }
    let mut out = vec![0u32; l as usize];
    fill_from_right(&mut out, n, r);
    Some(out)
}

fn fill_from_right(slot: &mut [u32], mut amount: u32, r: u32) {
    for x in slot.iter_mut().rev() {
        let v = amount.min(r);
        *x = v;
        amount -= v;
    }
}

/// Step `config` to its lexicographic successor; `false` when it was last.
pub fn advance(config: &mut [u32], r: u32) -> bool {
    let l = config.len();
    let mut suffix = 0u32;
    for i in (0..l).rev() {
        if suffix > 0 && config[i] < r {
            config[i] += 1;
            fill_from_right(&mut config[i + 1..], suffix - 1, r);
            return true;
        }
        suffix += config[i];
    }
    false
}

/// Streaming lexicographic enumeration of occupation vectors.
pub struct ConfigIter {
    r: u32,
    current: Option<Vec<u32>>,
    remaining: Option<u128>,
}

impl ConfigIter {
    pub fn new(l: u32, n: u32, r: u32) -> Self {
        ConfigIter {
            r,
            current: first_config(l, n, r),
            remaining: None,
        }
    }

    /// Items with ranks in `[start, end)`.
    pub fn range(l: u32, n: u32, r: u32, start: u128, end: u128) -> Result<Self> {
        let table = RankTable::new(l, n, r)?;
        let end = end.min(table.ways(l as usize, n));
        Ok(ConfigIter {
            r,
            current: unrank_with(&table, l, n, start),
            remaining: Some(end.saturating_sub(start)),
        })
    }
}

impl Iterator for ConfigIter {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        if let Some(rem) = self.remaining.as_mut() {
            if *rem == 0 {
                return None;
            }
            *rem -= 1;
        }
        let cur = self.current.as_mut()?;
        let out = cur.clone();
        if !advance(cur, self.r) {
            self.current = None;
        }
        Some(out)
    }
}

pub fn enumerate_configs(l: u32, n: u32, r: u32) -> ConfigIter {
    ConfigIter::new(l, n, r)
}

/// Calls `f` on every configuration without allocating per item.
pub fn for_each_config(l: u32, n: u32, r: u32, mut f: impl FnMut(&[u32])) {
    if let Some(mut cur) = first_config(l, n, r) {
        loop {
            f(&cur);
            if !advance(&mut cur, r) {
                break;
            }
        }
    }
}

/// `U^L_ℓ(n) = Σ_k n_k ω_L^{kℓ}` as a complex number.
pub fn u_value(n: &[u32], ell: u32) -> Complex64 {
    let l = n.len() as u32;
    n.iter()
        .enumerate()
        .filter(|(_, &nk)| nk > 0)
        .map(|(k, &nk)| root_value(l, k as i64 * ell as i64) * nk as f64)
        .sum()
}

/// `U^L_ℓ(n)` as an exact element of `Z[ω_q]`, `q = L / gcd(L, ℓ)`,
/// expanded level by level without folding.
pub fn u_element(n: &[u32], ell: u32) -> Result<CycloElement> {
    let l = n.len() as u32;
    let d = gcd(l as u64, ell as u64) as u32;
    let q = l / d;
    let t = transfer_matrix(q)?;
    let step = (ell / d) as i64;
    let mut coords = vec![0i64; t.phi()];
    for (k, &nk) in n.iter().enumerate() {
        for (c, &x) in coords.iter_mut().zip(t.row(k as i64 * step)) {
            *c += nk as i64 * x;
        }
    }
    CycloElement::new(q, coords)
}

/// Invariants `I^q = T_q^⊤ · fold(n, q)`.
pub fn invariants_of(n: &[u32], q: u32) -> Result<Vec<i64>> {
    let folded = fold_config(n, q)?;
    Ok(transfer_matrix(q)?.invariants(&folded.m))
}

fn invariants_with(t: &TransferMatrix, n: &[u32]) -> Vec<i64> {
    let q = t.q() as usize;
    let mut m = vec![0u32; q];
    for (k, &nk) in n.iter().enumerate() {
        m[k % q] += nk;
    }
    t.invariants(&m)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegeneracyClass {
    pub q: u32,
    pub invariants: Vec<i64>,
    pub count: u64,
    pub witness: Vec<u32>,
}

/// Group all `(L, N, R)` configurations by their sector-`q` invariants,
/// sorted by invariant vector.
pub fn degeneracy_classes(l: u32, n: u32, r: u32, q: u32) -> Result<Vec<DegeneracyClass>> {
    if q == 0 || l % q != 0 {
        return Err(Error::NotADivisor { q, l });
    }
    let t = transfer_matrix(q)?;
    let mut classes: HashMap<Vec<i64>, (u64, Vec<u32>)> = HashMap::new();
    for_each_config(l, n, r, |cfg| {
        let inv = invariants_with(&t, cfg);
        classes
            .entry(inv)
            .and_modify(|e| e.0 += 1)
            .or_insert_with(|| (1, cfg.to_vec()));
    });
    let mut out: Vec<_> = classes
        .into_iter()
        .map(|(invariants, (count, witness))| DegeneracyClass {
            q,
            invariants,
            count,
            witness,
        })
        .collect();
    out.sort_by(|a, b| a.invariants.cmp(&b.invariants));
    Ok(out)
}

/// Distinct `U^L_ℓ` values with their multiplicities, grouped exactly.
pub fn u_distribution(l: u32, n: u32, r: u32, ell: u32) -> Result<Vec<(Complex64, u64)>> {
    if ell >= l {
        return Err(Error::invalid(format!("ℓ = {ell} out of [0, {l})")));
    }
    let d = gcd(l as u64, ell as u64) as u32;
    let q = l / d;
    let t = transfer_matrix(q)?;
    let step = (ell / d) as i64;
    let mut classes: HashMap<Vec<i64>, u64> = HashMap::new();
    for_each_config(l, n, r, |cfg| {
        let mut coords = vec![0i64; t.phi()];
        for (k, &nk) in cfg.iter().enumerate() {
            for (c, &x) in coords.iter_mut().zip(t.row(k as i64 * step)) {
                *c += nk as i64 * x;
            }
        }
        *classes.entry(coords).or_default() += 1;
    });
    let mut out: Vec<_> = classes.into_iter().collect();
    out.sort();
    Ok(out
        .into_iter()
        .map(|(coords, c)| (CycloElement::new(q, coords).unwrap().value(), c))
        .collect())
}

pub fn config_energy(cfg: &[u32], eps: &[f64]) -> f64 {
    cfg.iter().zip(eps).map(|(&n, &e)| n as f64 * e).sum()
}

const PARALLEL_CHUNK: u128 = 1 << 15;

/// The exact many-body spectrum `E = F ε`, multiplicities merged on exact
/// float equality of the per-configuration sums.
pub fn exact_mbdos(l: u32, n: u32, r: u32, eps: &[f64]) -> Result<WeightedSpectrum> {
    if eps.len() != l as usize {
        return Err(Error::invalid(format!(
            "expected {l} single-body energies, got {}",
            eps.len()
        )));
    }
    let total = count_configs(l, n, r)
        .to_u128()
        .ok_or(Error::CountOverflow)?;
    let mut energies: Vec<f64> = if total <= PARALLEL_CHUNK {
        let mut v = Vec::with_capacity(total as usize);
        for_each_config(l, n, r, |cfg| v.push(config_energy(cfg, eps)));
        v
    } else {
        let starts: Vec<u128> = (0..total).step_by(PARALLEL_CHUNK as usize).collect();
        let chunks: Result<Vec<Vec<f64>>> = starts
            .into_par_iter()
            .map(|s| {
                Ok(ConfigIter::range(l, n, r, s, s + PARALLEL_CHUNK)?
                    .map(|cfg| config_energy(&cfg, eps))
                    .collect())
            })
            .collect();
        chunks?.into_iter().flatten().collect()
    };
    energies.sort_by(f64::total_cmp);
    let mut entries: Vec<(f64, u128)> = Vec::new();
    for e in energies {
        match entries.last_mut() {
            Some(last) if last.0 == e => last.1 += 1,
            _ => entries.push((e, 1)),
        }
    }
    Ok(WeightedSpectrum::from_entries(entries))
}
