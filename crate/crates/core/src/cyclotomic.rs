//! Exact integer arithmetic on roots of unity.
//!
//! Every value handled here lives in `Z[ω_q]` and is stored by its integer
//! coordinates in the power basis `{1, ω_q, …, ω_q^{φ(q)-1}}`. The transfer
//! matrix `T_q` expands every power `ω_q^p` in that basis; it is the only
//! table needed to fold occupations into invariants or to apply a Frobenius
//! map.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Distinct prime factors of `n`, ascending.
pub fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            out.push(p);
            while n % p == 0 {
                n /= p;
            }
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Euler's totient, computed from the prime factorisation.
pub fn totient(n: u64) -> Result<u64> {
    if n == 0 {
        return Err(Error::invalid("totient of 0 is undefined"));
    }
    Ok(prime_factors(n)
        .into_iter()
        .fold(n, |acc, p| acc / p * (p - 1)))
}

/// All positive divisors of `n`, ascending.
pub fn divisors(n: u64) -> Vec<u64> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1;
    while d * d <= n {
        if n % d == 0 {
            small.push(d);
            if d * d != n {
                large.push(n / d);
            }
        }
        d += 1;
    }
    small.extend(large.into_iter().rev());
    small
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn mobius(n: u64) -> i32 {
    let mut m = n;
    let mut sign = 1;
    let mut p = 2;
    while p * p <= m {
        if m % p == 0 {
            m /= p;
            if m % p == 0 {
                return 0;
            }
            sign = -sign;
        }
        p += 1;
    }
    if m > 1 {
        sign = -sign;
    }
    sign
}

/// `e^{2πi p / q}`.
pub fn root_value(q: u32, p: i64) -> Complex64 {
    let r = p.rem_euclid(q as i64) as f64;
    Complex64::from_polar(1.0, TAU * r / q as f64)
}

/// The monic cyclotomic polynomial `Φ_q`, coefficients indexed by power.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CycloPoly {
    q: u32,
    coeffs: Vec<i64>,
}

impl CycloPoly {
    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn coeffs(&self) -> &[i64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, x: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c as f64)
    }
}

/// `Φ_q(x) = Π_{d|q} (x^{q/d} − 1)^{μ(d)}`, multiplying the positive factors
/// first and then dividing out the negative ones exactly.
pub fn cyclotomic_poly(q: u32) -> Result<CycloPoly> {
    if q == 0 {
        return Err(Error::invalid("cyclotomic polynomial of order 0"));
    }
    let q64 = q as u64;
    let mut poly = vec![1i64];
    let divs = divisors(q64);
    for &d in &divs {
        if mobius(d) == 1 {
            poly = mul_xk_minus_one(&poly, (q64 / d) as usize);
        }
    }
    for &d in &divs {
        if mobius(d) == -1 {
            poly = div_xk_minus_one(&poly, (q64 / d) as usize);
        }
    }
    debug_assert_eq!(poly.len() - 1, totient(q64)? as usize);
    Ok(CycloPoly { q, coeffs: poly })
}

fn mul_xk_minus_one(p: &[i64], k: usize) -> Vec<i64> {
    let mut out = vec![0i64; p.len() + k];
    for (i, &c) in p.iter().enumerate() {
        out[i + k] += c;
        out[i] -= c;
    }
    out
}

fn div_xk_minus_one(p: &[i64], k: usize) -> Vec<i64> {
    // p = (x^k - 1) s  =>  s_i = s_{i-k} - p_i, running from the bottom.
    let deg = p.len() - 1 - k;
    let mut s = vec![0i64; deg + 1];
    for i in 0..=deg {
        let prev = if i >= k { s[i - k] } else { 0 };
        s[i] = prev - p[i];
    }
    debug_assert!({
        let back = mul_xk_minus_one(&s, k);
        back == p
    });
    s
}

/// Integer matrix whose row `p` holds the coordinates of `ω_q^p` in the power
/// basis. The first `φ(q)` rows are the identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransferMatrix {
    q: u32,
    phi: usize,
    data: Vec<i64>,
}

impl TransferMatrix {
    pub fn q(&self) -> u32 {
        self.q
    }

    /// Number of columns, `φ(q)`.
    pub fn phi(&self) -> usize {
        self.phi
    }

    /// Row for `ω_q^p`; `p` is reduced mod `q`.
    pub fn row(&self, p: i64) -> &[i64] {
        let p = p.rem_euclid(self.q as i64) as usize;
        &self.data[p * self.phi..(p + 1) * self.phi]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i64]> {
        self.data.chunks(self.phi)
    }

    pub fn to_rows(&self) -> Vec<Vec<i64>> {
        self.rows().map(<[i64]>::to_vec).collect()
    }

    /// `T_q^⊤ · m`: the invariants of a folded configuration.
    pub fn invariants(&self, folded: &[u32]) -> Vec<i64> {
        assert_eq!(folded.len(), self.q as usize, "folded length must equal q");
        let mut out = vec![0i64; self.phi];
        for (p, &m) in folded.iter().enumerate() {
            if m == 0 {
                continue;
            }
            for (o, &t) in out.iter_mut().zip(self.row(p as i64)) {
                *o += m as i64 * t;
            }
        }
        out
    }

    /// Apply `σ_k : ω_q^j ↦ ω_q^{kj}` to an element, re-expanding in the basis.
    pub fn frobenius(&self, k: i64, x: &CycloElement) -> CycloElement {
        assert_eq!(x.q, self.q, "element and matrix orders differ");
        let mut coords = vec![0i64; self.phi];
        for (j, &c) in x.coords.iter().enumerate() {
            if c == 0 {
                continue;
            }
            for (o, &t) in coords.iter_mut().zip(self.row(k * j as i64)) {
                *o += c * t;
            }
        }
        CycloElement { q: self.q, coords }
    }

    pub fn power(&self, p: i64) -> CycloElement {
        CycloElement {
            q: self.q,
            coords: self.row(p).to_vec(),
        }
    }
}

/// Largest transfer matrix built (512 MiB of coefficients).
pub const MAX_TRANSFER_ENTRIES: usize = 1 << 26;

/// Builds `T_q` by the recurrence seeded with the coefficients `φ_k` of `Φ_q`:
///
/// ```text
/// T[p+1][0] = −φ_0 · T[p][φ(q)−1]
/// T[p+1][k] = T[p][k−1] − φ_k · T[p][φ(q)−1]
/// ```
pub fn transfer_matrix(q: u32) -> Result<TransferMatrix> {
    let phi = totient(q as u64)? as usize;
    let rows = q as usize;
    if rows
        .checked_mul(phi)
        .map_or(true, |n| n > MAX_TRANSFER_ENTRIES)
    {
        return Err(Error::invalid(format!(
            "T_{q} would hold {q} × {phi} entries, more than the supported {MAX_TRANSFER_ENTRIES}"
        )));
    }
    let poly = cyclotomic_poly(q)?;
    let phis = &poly.coeffs()[..phi];
    let mut data = vec![0i64; rows * phi];
    for p in 0..phi.min(rows) {
        data[p * phi + p] = 1;
    }
    for p in phi.saturating_sub(1)..rows.saturating_sub(1) {
        let (head, tail) = data.split_at_mut((p + 1) * phi);
        let cur = &head[p * phi..];
        let next = &mut tail[..phi];
        let top = cur[phi - 1];
        next[0] = -phis[0] * top;
        for k in 1..phi {
            next[k] = cur[k - 1] - phis[k] * top;
        }
    }
    Ok(TransferMatrix { q, phi, data })
}

/// An element of `Z[ω_q]` in power-basis coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CycloElement {
    q: u32,
    coords: Vec<i64>,
}

impl CycloElement {
    pub fn new(q: u32, coords: Vec<i64>) -> Result<Self> {
        let phi = totient(q as u64)? as usize;
        if coords.len() != phi {
            return Err(Error::invalid(format!(
                "element of order {q} needs {phi} coordinates, got {}",
                coords.len()
            )));
        }
        Ok(CycloElement { q, coords })
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    pub fn value(&self) -> Complex64 {
        self.coords
            .iter()
            .enumerate()
            .map(|(k, &c)| root_value(self.q, k as i64) * c as f64)
            .sum()
    }
}

/// Frobenius map on a standalone element.
pub fn frobenius_apply(q: u32, k: u32, x: &CycloElement) -> Result<CycloElement> {
    if x.q != q {
        return Err(Error::invalid(format!(
            "element has order {} but σ acts on order {q}",
            x.q
        )));
    }
    if k >= q.max(1) {
        return Err(Error::invalid(format!(
            "Frobenius index {k} out of [0, {q})"
        )));
    }
    Ok(transfer_matrix(q)?.frobenius(k as i64, x))
}
