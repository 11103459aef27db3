//! Sparse expansion of the all-sector generating function.
//!
//! The product runs over single-body levels `k`; each factor is the bracket
//!
//! ```text
//! Σ_{n=0}^{R} X^n · Π_{q ∈ S} Π_{k'} Y_{q,k'}^{n · T_q[k mod q][k']}
//! ```
//!
//! and after every multiplication the terms with more than `N_max` particles
//! are dropped. A coefficient counts the configurations that share a particle
//! number and the invariant vectors of every kept sector. With every sector
//! `q > 1` kept, each coefficient is 1; dropping sectors merges classes.
//!
//! A table records the level range it covers. Tables over adjacent ranges
//! combine with [`merge`], and an [`Expander`] resumed from a partial table
//! continues bracket by bracket, so cached prefixes extend to full tables.

mod codec;

use std::ops::Range;

use num_bigint::BigUint;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use codec::{decode_table, encode_table, FORMAT_VERSION, MAGIC};

use crate::count::Count;
use crate::cyclotomic::{totient, transfer_matrix};
use crate::error::{Error, Result};

/// Key of one generating-function term: the power of `X` and the powers of
/// every kept `Y_{q,k'}`, blocks ordered by descending `q`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermKey {
    pub particles: u32,
    pub inv: Box<[i32]>,
}

impl TermKey {
    pub fn new(particles: u32, inv: Vec<i32>) -> Self {
        TermKey {
            particles,
            inv: inv.into_boxed_slice(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub q: u32,
    pub offset: usize,
    pub phi: usize,
}

/// Block layout of invariant vectors for a given `L` and sector set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    l: u32,
    blocks: Vec<Block>,
    width: usize,
}

impl Layout {
    /// Validates that every `q` divides `L` and exceeds 1; sorts descending.
    pub fn new(l: u32, sectors: &[u32]) -> Result<Self> {
        let mut qs = normalize_sectors(l, sectors)?;
        qs.reverse();
        let mut blocks = Vec::with_capacity(qs.len());
        let mut offset = 0;
        for q in qs {
            let phi = totient(q as u64)? as usize;
            blocks.push(Block { q, offset, phi });
            offset += phi;
        }
        Ok(Layout {
            l,
            blocks,
            width: offset,
        })
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn sectors(&self) -> Vec<u32> {
        self.blocks.iter().map(|b| b.q).collect()
    }

    pub fn block(&self, q: u32) -> Option<&Block> {
        self.blocks.iter().find(|b| b.q == q)
    }

    /// Exponent increments contributed by one particle on `level`.
    pub fn level_deltas(&self) -> Result<Vec<Vec<i32>>> {
        let tms = self
            .blocks
            .iter()
            .map(|b| transfer_matrix(b.q))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..self.l as i64)
            .map(|k| {
                tms.iter()
                    .flat_map(|t| t.row(k).iter().map(|&x| x as i32))
                    .collect()
            })
            .collect())
    }
}

fn normalize_sectors(l: u32, sectors: &[u32]) -> Result<Vec<u32>> {
    let mut qs = sectors.to_vec();
    qs.sort_unstable();
    qs.dedup();
    for &q in &qs {
        if q == 0 || l % q != 0 {
            return Err(Error::NotADivisor { q, l });
        }
        if q == 1 {
            return Err(Error::invalid(
                "sector q = 1 carries no invariants beyond the particle count",
            ));
        }
    }
    Ok(qs)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TableParams {
    pub l: u32,
    pub n_max: u32,
    /// Occupancy cap `R`.
    pub cap: u32,
    /// Kept sectors, descending.
    pub sectors: Vec<u32>,
    pub level_start: u32,
    pub level_end: u32,
}

impl TableParams {
    pub fn new(l: u32, n_max: u32, cap: u32, sectors: &[u32], levels: Range<u32>) -> Result<Self> {
        if l == 0 {
            return Err(Error::invalid("L must be at least 1"));
        }
        if levels.start > levels.end || levels.end > l {
            return Err(Error::invalid(format!(
                "level range {levels:?} outside [0, {l})"
            )));
        }
        let layout = Layout::new(l, sectors)?;
        Ok(TableParams {
            l,
            n_max,
            cap,
            sectors: layout.sectors(),
            level_start: levels.start,
            level_end: levels.end,
        })
    }

    pub fn levels(&self) -> Range<u32> {
        self.level_start..self.level_end
    }

    pub fn layout(&self) -> Result<Layout> {
        Layout::new(self.l, &self.sectors)
    }

    pub fn is_complete(&self) -> bool {
        self.level_start == 0 && self.level_end == self.l
    }

    /// Content address of the table these parameters describe.
    pub fn content_hash(&self) -> String {
        let canonical = format!(
            "coeff-table/v{FORMAT_VERSION}/L={}/N={}/R={}/S={:?}/levels={}..{}",
            self.l, self.n_max, self.cap, self.sectors, self.level_start, self.level_end
        );
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    fn same_product(&self, other: &TableParams) -> bool {
        self.l == other.l
            && self.n_max == other.n_max
            && self.cap == other.cap
            && self.sectors == other.sectors
    }
}

/// The expanded generating function: sorted `(key, count)` pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoefficientTable {
    params: TableParams,
    entries: Vec<(TermKey, Count)>,
}

impl CoefficientTable {
    /// The empty product over `levels`: the single term `X^0 → 1`.
    pub fn identity(l: u32, n_max: u32, cap: u32, sectors: &[u32], at: u32) -> Result<Self> {
        let params = TableParams::new(l, n_max, cap, sectors, at..at)?;
        let width = params.layout()?.width();
        Ok(CoefficientTable {
            params,
            entries: vec![(TermKey::new(0, vec![0; width]), Count::ONE)],
        })
    }

    pub(crate) fn from_sorted(params: TableParams, entries: Vec<(TermKey, Count)>) -> Self {
        CoefficientTable { params, entries }
    }

    pub fn params(&self) -> &TableParams {
        &self.params
    }

    pub fn layout(&self) -> Layout {
        self.params
            .layout()
            .expect("table parameters were validated")
    }

    pub fn entries(&self) -> &[(TermKey, Count)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &TermKey) -> Option<&Count> {
        self.entries
            .binary_search_by(|(k, _)| k.cmp(key))
            .ok()
            .map(|i| &self.entries[i].1)
    }

    /// Count for a particle number and per-sector invariant blocks given in
    /// layout order.
    pub fn count_at(&self, particles: u32, inv: &[i32]) -> Count {
        self.get(&TermKey::new(particles, inv.to_vec()))
            .cloned()
            .unwrap_or(Count::ZERO)
    }

    /// Entries with exactly `n` particles.
    pub fn slice(&self, n: u32) -> &[(TermKey, Count)] {
        let lo = self.entries.partition_point(|(k, _)| k.particles < n);
        let hi = self.entries.partition_point(|(k, _)| k.particles <= n);
        &self.entries[lo..hi]
    }

    pub fn total(&self, n: u32) -> Count {
        self.slice(n).iter().map(|(_, c)| c).sum()
    }

    pub fn max_count(&self) -> Count {
        self.entries
            .iter()
            .map(|(_, c)| c)
            .max()
            .cloned()
            .unwrap_or(Count::ZERO)
    }

    /// Re-aggregate onto a subset of the kept sectors by deleting blocks.
    pub fn project(&self, keep: &[u32]) -> Result<CoefficientTable> {
        let layout = self.layout();
        let keep = normalize_sectors(self.params.l, keep)?;
        let mut kept_blocks = Vec::new();
        for q in &keep {
            let b = layout.block(*q).ok_or_else(|| {
                Error::LayoutMismatch(format!("sector {q} is not present in the table"))
            })?;
            kept_blocks.push(*b);
        }
        kept_blocks.sort_by(|a, b| b.q.cmp(&a.q));
        let mut acc: FxHashMap<TermKey, Count> = FxHashMap::default();
        for (k, c) in &self.entries {
            let inv: Vec<i32> = kept_blocks
                .iter()
                .flat_map(|b| k.inv[b.offset..b.offset + b.phi].iter().copied())
                .collect();
            *acc.entry(TermKey::new(k.particles, inv)).or_default() += c;
        }
        let mut params = self.params.clone();
        params.sectors = kept_blocks.iter().map(|b| b.q).collect();
        Ok(CoefficientTable::from_sorted(params, sorted(acc)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_table(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        decode_table(bytes)
    }
}

fn sorted(map: FxHashMap<TermKey, Count>) -> Vec<(TermKey, Count)> {
    let mut v: Vec<_> = map.into_iter().filter(|(_, c)| !c.is_zero()).collect();
    v.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    v
}

/// Work counters for one expansion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExpansionStats {
    /// Monomial products formed across all brackets.
    pub products: u64,
    /// Largest intermediate table.
    pub peak_terms: usize,
    pub brackets: u32,
}

const PARALLEL_THRESHOLD: usize = 1 << 14;

/// Incremental bracket-by-bracket expansion.
pub struct Expander {
    params: TableParams,
    deltas: Vec<Vec<i32>>,
    terms: FxHashMap<TermKey, Count>,
    stats: ExpansionStats,
}

impl Expander {
    /// Starts from the empty product at `start_level`.
    pub fn new(l: u32, n_max: u32, cap: u32, sectors: &[u32], start_level: u32) -> Result<Self> {
        Self::resume(&CoefficientTable::identity(
            l,
            n_max,
            cap,
            sectors,
            start_level,
        )?)
    }

    /// Continues from a partial table.
    pub fn resume(table: &CoefficientTable) -> Result<Self> {
        let deltas = table.params.layout()?.level_deltas()?;
        let terms = table.entries.iter().cloned().collect::<FxHashMap<_, _>>();
        Ok(Expander {
            params: table.params.clone(),
            deltas,
            terms,
            stats: ExpansionStats {
                peak_terms: table.len(),
                ..Default::default()
            },
        })
    }

    pub fn next_level(&self) -> u32 {
        self.params.level_end
    }

    pub fn is_done(&self) -> bool {
        self.params.level_end == self.params.l
    }

    pub fn stats(&self) -> ExpansionStats {
        self.stats
    }

    /// Multiplies in the bracket of the next level.
    pub fn step(&mut self) -> Result<()> {
        if self.is_done() {
            return Err(Error::invalid("all levels already multiplied"));
        }
        let level = self.params.level_end as usize;
        let delta = &self.deltas[level];
        let (n_max, cap) = (self.params.n_max, self.params.cap);
        let terms = std::mem::take(&mut self.terms);
        let (next, products) = if terms.len() >= PARALLEL_THRESHOLD {
            let items: Vec<_> = terms.into_iter().collect();
            items
                .par_chunks(PARALLEL_THRESHOLD / 4)
                .map(|chunk| {
                    let mut local = FxHashMap::default();
                    let p = multiply_bracket(
                        chunk.iter().map(|(k, c)| (k, c)),
                        delta,
                        n_max,
                        cap,
                        &mut local,
                    );
                    (local, p)
                })
                .reduce(
                    || (FxHashMap::default(), 0),
                    |(mut a, pa), (mut b, pb)| {
                        if a.len() < b.len() {
                            std::mem::swap(&mut a, &mut b);
                        }
                        for (k, c) in b {
                            *a.entry(k).or_default() += &c;
                        }
                        (a, pa + pb)
                    },
                )
        } else {
            let mut next = FxHashMap::default();
            let p = multiply_bracket(terms.iter(), delta, n_max, cap, &mut next);
            (next, p)
        };
        self.terms = next;
        self.params.level_end += 1;
        self.stats.products += products;
        self.stats.brackets += 1;
        self.stats.peak_terms = self.stats.peak_terms.max(self.terms.len());
        Ok(())
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(())
    }

    /// A sorted copy of the current partial product; valid as a checkpoint.
    pub fn snapshot(&self) -> CoefficientTable {
        let mut v: Vec<_> = self
            .terms
            .iter()
            .map(|(k, c)| (k.clone(), c.clone()))
            .collect();
        v.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        CoefficientTable::from_sorted(self.params.clone(), v)
    }

    pub fn finish(self) -> CoefficientTable {
        CoefficientTable::from_sorted(self.params, sorted(self.terms))
    }
}

fn multiply_bracket<'a>(
    terms: impl Iterator<Item = (&'a TermKey, &'a Count)>,
    delta: &[i32],
    n_max: u32,
    cap: u32,
    out: &mut FxHashMap<TermKey, Count>,
) -> u64 {
    let mut products = 0;
    for (key, count) in terms {
        let room = cap.min(n_max - key.particles);
        let mut inv = key.inv.to_vec();
        for n in 0..=room {
            if n > 0 {
                for (x, d) in inv.iter_mut().zip(delta) {
                    *x += d;
                }
            }
            products += 1;
            let k = TermKey {
                particles: key.particles + n,
                inv: inv.clone().into_boxed_slice(),
            };
            *out.entry(k).or_default() += count;
        }
    }
    products
}

/// Full expansion over all `L` levels.
pub fn expand(l: u32, n_max: u32, cap: u32, sectors: &[u32]) -> Result<CoefficientTable> {
    Ok(expand_with_stats(l, n_max, cap, sectors, 0..l)?.0)
}

/// Expansion of the brackets in `levels` only.
pub fn expand_levels(
    l: u32,
    n_max: u32,
    cap: u32,
    sectors: &[u32],
    levels: Range<u32>,
) -> Result<CoefficientTable> {
    Ok(expand_with_stats(l, n_max, cap, sectors, levels)?.0)
}

pub fn expand_with_stats(
    l: u32,
    n_max: u32,
    cap: u32,
    sectors: &[u32],
    levels: Range<u32>,
) -> Result<(CoefficientTable, ExpansionStats)> {
    TableParams::new(l, n_max, cap, sectors, levels.clone())?;
    let mut ex = Expander::new(l, n_max, cap, sectors, levels.start)?;
    while ex.next_level() < levels.end {
        ex.step()?;
    }
    let stats = ex.stats();
    Ok((ex.finish(), stats))
}

/// Product of two partial expansions over adjacent level ranges.
pub fn merge(a: &CoefficientTable, b: &CoefficientTable) -> Result<CoefficientTable> {
    if !a.params.same_product(&b.params) {
        return Err(Error::LayoutMismatch(format!(
            "cannot merge tables with parameters {:?} and {:?}",
            a.params, b.params
        )));
    }
    let (ra, rb) = (a.params.levels(), b.params.levels());
    let levels = if ra.is_empty() {
        rb.clone()
    } else if rb.is_empty() {
        ra.clone()
    } else if ra.end == rb.start {
        ra.start..rb.end
    } else if rb.end == ra.start {
        rb.start..ra.end
    } else {
        return Err(Error::LayoutMismatch(format!(
            "level ranges {ra:?} and {rb:?} are not adjacent"
        )));
    };
    let n_max = a.params.n_max;
    let partial: Vec<FxHashMap<TermKey, Count>> = a
        .entries
        .par_chunks(1024)
        .map(|chunk| {
            let mut acc = FxHashMap::default();
            for (ka, ca) in chunk {
                let room = n_max - ka.particles;
                let upto = b.entries.partition_point(|(k, _)| k.particles <= room);
                for (kb, cb) in &b.entries[..upto] {
                    let inv: Box<[i32]> = ka
                        .inv
                        .iter()
                        .zip(kb.inv.iter())
                        .map(|(x, y)| x + y)
                        .collect();
                    let key = TermKey {
                        particles: ka.particles + kb.particles,
                        inv,
                    };
                    *acc.entry(key).or_default() += ca * cb;
                }
            }
            acc
        })
        .collect();
    let mut acc: FxHashMap<TermKey, Count> = FxHashMap::default();
    for part in partial {
        for (k, c) in part {
            *acc.entry(k).or_default() += &c;
        }
    }
    let mut params = a.params.clone();
    params.level_start = levels.start;
    params.level_end = levels.end;
    Ok(CoefficientTable::from_sorted(params, sorted(acc)))
}

/// Expands `chunks` contiguous level ranges in parallel and joins them.
pub fn expand_chunked(
    l: u32,
    n_max: u32,
    cap: u32,
    sectors: &[u32],
    chunks: u32,
) -> Result<CoefficientTable> {
    let chunks = chunks.clamp(1, l.max(1));
    let bounds: Vec<u32> = (0..=chunks).map(|i| i * l / chunks).collect();
    let parts = bounds
        .windows(2)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|w| expand_levels(l, n_max, cap, sectors, w[0]..w[1]))
        .collect::<Result<Vec<_>>>()?;
    let mut it = parts.into_iter();
    let first = it.next().expect("at least one chunk");
    it.try_fold(first, |acc, t| merge(&acc, &t))
}

/// Upper bound on expansion work: `[(Σ_{q∈S} φ(q)) · (R + 1)]^L`.
pub fn term_count_bound(l: u32, cap: u32, sectors: &[u32]) -> Result<BigUint> {
    let qs = normalize_sectors(l, sectors)?;
    let mut invariants = 0u64;
    for q in qs {
        invariants += totient(q as u64)?;
    }
    Ok(BigUint::from(invariants * (cap as u64 + 1)).pow(l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{count_configs, enumerate_configs, invariants_of};
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn key(n: u32, inv: &[i32]) -> TermKey {
        TermKey::new(n, inv.to_vec())
    }

    #[test]
    fn fermion_q6_worked_example() {
        let t = expand(6, 2, 1, &[6]).unwrap();
        assert_eq!(t.get(&key(2, &[0, 0])), Some(&Count::from(3u64)));
        assert_eq!(t.get(&key(2, &[1, 0])), Some(&Count::from(1u64)));
        assert_eq!(t.total(2), Count::from(15u64));
        assert_eq!(t.total(1), Count::from(6u64));
        assert_eq!(t.slice(0), &[(key(0, &[0, 0]), Count::ONE)]);
    }

    #[test]
    fn boson_q3_worked_example() {
        let t = expand(6, 3, 3, &[3]).unwrap();
        let printed: [(&[i32], u64); 10] = [
            (&[3, 0], 4),
            (&[0, 3], 4),
            (&[2, 1], 6),
            (&[1, 2], 6),
            (&[-3, -3], 4),
            (&[1, -1], 6),
            (&[-1, 1], 6),
            (&[0, 0], 8),
            (&[-1, -2], 6),
            (&[-2, -1], 6),
        ];
        for (inv, c) in printed {
            assert_eq!(t.count_at(3, inv), Count::from(c), "{inv:?}");
        }
        assert_eq!(t.slice(3).len(), 10);
    }

    #[test]
    fn all_sectors_give_unit_counts() {
        let t = expand(6, 2, 1, &[6, 3, 2]).unwrap();
        assert_eq!(t.slice(2).len(), 15);
        assert!(t.slice(2).iter().all(|(_, c)| *c == Count::ONE));
    }

    #[test]
    fn rejects_bad_sector_sets() {
        assert!(matches!(
            expand(6, 2, 1, &[4]),
            Err(Error::NotADivisor { q: 4, l: 6 })
        ));
        assert!(expand(6, 2, 1, &[1]).is_err());
    }

    #[test]
    fn empty_sector_set_counts_configurations() {
        let t = expand(7, 4, 2, &[]).unwrap();
        for n in 0..=4 {
            assert_eq!(t.slice(n).len(), 1);
            assert_eq!(t.total(n), count_configs(7, n, 2));
        }
    }

    #[test]
    fn bounds() {
        assert_eq!(
            term_count_bound(6, 1, &[6]).unwrap(),
            BigUint::from(4096u32)
        );
        assert_eq!(
            term_count_bound(6, 3, &[3]).unwrap(),
            BigUint::from(8u32).pow(6)
        );
        assert_eq!(term_count_bound(6, 1, &[]).unwrap(), BigUint::from(0u32));
        let (_, stats) = expand_with_stats(6, 2, 1, &[6], 0..6).unwrap();
        assert!(stats.products <= 4096);
        assert_eq!(stats.brackets, 6);
    }

    #[test]
    fn merge_identity_and_associativity() {
        let full = expand(6, 2, 1, &[6, 3]).unwrap();
        let a = expand_levels(6, 2, 1, &[6, 3], 0..2).unwrap();
        let b = expand_levels(6, 2, 1, &[6, 3], 2..4).unwrap();
        let c = expand_levels(6, 2, 1, &[6, 3], 4..6).unwrap();
        assert_eq!(merge(&merge(&a, &b).unwrap(), &c).unwrap(), full);
        assert_eq!(merge(&a, &merge(&b, &c).unwrap()).unwrap(), full);
        assert_eq!(merge(&c, &merge(&a, &b).unwrap()).unwrap(), full);
        let id = CoefficientTable::identity(6, 2, 1, &[6, 3], 0).unwrap();
        assert_eq!(merge(&full, &id).unwrap(), full);
        assert!(merge(&a, &c).is_err());
        let other = expand_levels(6, 2, 1, &[6], 2..4).unwrap();
        assert!(matches!(merge(&a, &other), Err(Error::LayoutMismatch(_))));
    }

    #[test]
    fn resume_matches_cold_expansion() {
        let cold = expand(12, 4, 4, &[12, 6, 4]).unwrap();
        let mut ex = Expander::new(12, 4, 4, &[12, 6, 4], 0).unwrap();
        for _ in 0..5 {
            ex.step().unwrap();
        }
        let checkpoint = ex.snapshot();
        let mut resumed = Expander::resume(&checkpoint).unwrap();
        resumed.run_to_end().unwrap();
        assert_eq!(resumed.finish(), cold);
        assert!(ex.step().is_ok());
    }

    #[test]
    fn chunked_matches_single_pass() {
        let cold = expand(10, 4, 4, &[10, 5]).unwrap();
        for chunks in 1..=4 {
            assert_eq!(expand_chunked(10, 4, 4, &[10, 5], chunks).unwrap(), cold);
        }
    }

    #[test]
    fn parallel_bracket_path() {
        // Large enough for the intermediate tables to cross the parallel threshold.
        let t = expand(12, 6, 6, &[12, 6, 4, 3, 2]).unwrap();
        assert!(t.len() > PARALLEL_THRESHOLD);
        assert_eq!(t.total(6), count_configs(12, 6, 6));
        assert_eq!(t.max_count(), Count::ONE);
    }

    fn oracle_table(l: u32, n: u32, r: u32, sectors: &[u32]) -> HashMap<Vec<i32>, u64> {
        let layout = Layout::new(l, sectors).unwrap();
        let mut out = HashMap::new();
        for cfg in enumerate_configs(l, n, r) {
            let inv: Vec<i32> = layout
                .blocks()
                .iter()
                .flat_map(|b| invariants_of(&cfg, b.q).unwrap())
                .map(|x| x as i32)
                .collect();
            *out.entry(inv).or_default() += 1;
        }
        out
    }

    #[test]
    fn oracle_equivalence_small_systems() {
        for l in 2..=10u32 {
            let qs: Vec<u32> = crate::cyclotomic::divisors(l as u64)
                .into_iter()
                .map(|q| q as u32)
                .filter(|&q| q > 1)
                .collect();
            // every subset of nontrivial sectors
            for mask in 0..(1u32 << qs.len()) {
                let s: Vec<u32> = qs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, &q)| q)
                    .collect();
                for n in 0..=4u32 {
                    for r in [1, n.max(1)] {
                        let t = expand(l, n, r, &s).unwrap();
                        let expected = oracle_table(l, n, r, &s);
                        let got: HashMap<Vec<i32>, u64> = t
                            .slice(n)
                            .iter()
                            .map(|(k, c)| (k.inv.to_vec(), c.to_u128().unwrap() as u64))
                            .collect();
                        assert_eq!(got, expected, "L={l} N={n} R={r} S={s:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn full_sector_set_is_injective() {
        for l in 2..=10u32 {
            let s: Vec<u32> = crate::cyclotomic::divisors(l as u64)
                .into_iter()
                .map(|q| q as u32)
                .filter(|&q| q > 1)
                .collect();
            let t = expand(l, 5, 5, &s).unwrap();
            assert_eq!(t.max_count(), Count::ONE, "L={l}");
        }
    }

    proptest! {
        #[test]
        fn dropping_a_sector_conserves_mass(l in 2u32..13, n in 0u32..5, fermion in any::<bool>(), pick in any::<u32>()) {
            let r = if fermion { 1 } else { n.max(1) };
            let qs: Vec<u32> = crate::cyclotomic::divisors(l as u64).into_iter().map(|q| q as u32).filter(|&q| q > 1).collect();
            let full = expand(l, n, r, &qs).unwrap();
            let drop = qs[pick as usize % qs.len()];
            let keep: Vec<u32> = qs.iter().copied().filter(|&q| q != drop).collect();
            let coarse = expand(l, n, r, &keep).unwrap();
            prop_assert_eq!(full.project(&keep).unwrap(), coarse);
        }
    }
}
