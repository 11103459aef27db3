//! Partition of the Fourier indices `ℓ ∈ [0, L)` into q-sectors, their Galois
//! groups, and the fold maps that connect sectors.
//!
//! Sector `q` collects every `ℓ` with `L / gcd(L, ℓ) = q`. The indices of a
//! sector are exactly `ℓ = n · L/q` for `n` in the Galois group `G_q`, so the
//! whole sector is generated from its representative `ℓ = L/q`. The `q = 1`
//! sector is kept explicitly; its only member is `ℓ = 0`.

use serde::Serialize;

use crate::cyclotomic::{self, gcd, TransferMatrix};
use crate::error::{Error, Result};

/// `k ∈ [1, q)` with `gcd(k, q) = 1`; the trivial group `[0]` for `q = 1`.
pub fn galois_group(q: u32) -> Vec<u32> {
    if q <= 1 {
        return vec![0];
    }
    (1..q).filter(|&k| gcd(k as u64, q as u64) == 1).collect()
}

#[derive(Clone, Debug)]
pub struct Sector {
    q: u32,
    ells: Vec<u32>,
    galois: Vec<u32>,
    transfer: TransferMatrix,
}

impl Sector {
    pub fn q(&self) -> u32 {
        self.q
    }

    /// Member indices `ℓ`, ascending.
    pub fn ells(&self) -> &[u32] {
        &self.ells
    }

    pub fn galois(&self) -> &[u32] {
        &self.galois
    }

    pub fn phi(&self) -> usize {
        self.transfer.phi()
    }

    pub fn transfer(&self) -> &TransferMatrix {
        &self.transfer
    }
}

/// Fold edge `from → to = from / prime`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FlowEdge {
    pub from: u32,
    pub to: u32,
    pub prime: u32,
}

#[derive(Clone, Debug)]
pub struct SectorFlow {
    l: u32,
    sectors: Vec<Sector>,
    edges: Vec<FlowEdge>,
}

impl SectorFlow {
    pub fn new(l: u32) -> Result<Self> {
        sector_partition(l)
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    /// Sectors ordered by descending `q`.
    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    pub fn edges(&self) -> &[FlowEdge] {
        &self.edges
    }

    pub fn sector(&self, q: u32) -> Result<&Sector> {
        self.sectors
            .iter()
            .find(|s| s.q == q)
            .ok_or(Error::NotADivisor { q, l: self.l })
    }

    /// The sector that contains index `ℓ`.
    pub fn sector_of(&self, ell: u32) -> u32 {
        self.l / gcd(self.l as u64, ell as u64) as u32
    }

    /// Divisors `q > 1` of `L`, descending.
    pub fn nontrivial_qs(&self) -> Vec<u32> {
        self.sectors
            .iter()
            .map(|s| s.q)
            .filter(|&q| q > 1)
            .collect()
    }

    /// Sector set left after discarding the `k` largest nontrivial sectors.
    pub fn drop_top(&self, k: usize) -> Vec<u32> {
        self.nontrivial_qs().into_iter().skip(k).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let sectors: Vec<_> = self
            .sectors
            .iter()
            .map(|s| {
                serde_json::json!({
                    "q": s.q,
                    "phi": s.phi(),
                    "ells": s.ells,
                    "galois": s.galois,
                })
            })
            .collect();
        serde_json::json!({ "L": self.l, "sectors": sectors, "edges": self.edges })
    }
}

pub fn sector_partition(l: u32) -> Result<SectorFlow> {
    if l == 0 {
        return Err(Error::invalid("L must be at least 1"));
    }
    let mut qs: Vec<u32> = cyclotomic::divisors(l as u64)
        .into_iter()
        .map(|d| d as u32)
        .collect();
    qs.reverse();
    let mut sectors = Vec::with_capacity(qs.len());
    for &q in &qs {
        let d = l / q;
        let galois = galois_group(q);
        let mut ells: Vec<u32> = galois.iter().map(|&n| (n * d) % l).collect();
        ells.sort_unstable();
        sectors.push(Sector {
            q,
            ells,
            galois,
            transfer: cyclotomic::transfer_matrix(q)?,
        });
    }
    let mut edges = Vec::new();
    for &q in &qs {
        for p in cyclotomic::prime_factors(q as u64) {
            edges.push(FlowEdge {
                from: q,
                to: q / p as u32,
                prime: p as u32,
            });
        }
    }
    Ok(SectorFlow { l, sectors, edges })
}

/// Occupations folded onto `q` residues: `m_{k'} = Σ_p n_{p·q + k'}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldedConfig {
    pub q: u32,
    pub m: Vec<u32>,
}

pub fn fold_config(n: &[u32], target_q: u32) -> Result<FoldedConfig> {
    let l = n.len() as u32;
    if target_q == 0 || l % target_q != 0 {
        return Err(Error::NotADivisor { q: target_q, l });
    }
    let mut m = vec![0u32; target_q as usize];
    for (k, &nk) in n.iter().enumerate() {
        m[k % target_q as usize] += nk;
    }
    Ok(FoldedConfig { q: target_q, m })
}
