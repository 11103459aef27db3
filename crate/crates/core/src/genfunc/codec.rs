//! Binary table format.
//!
//! ```text
//! magic      8 bytes  "MBDOSTAB"
//! version    u32 LE
//! L, N_max, R, level_start, level_end     u32 LE each
//! sectors    u32 LE count, then (q, φ(q)) as u32 LE pairs, q descending
//! records    u64 LE count, then per record:
//!              particles           unsigned varint
//!              invariants          zig-zag varint per coordinate
//!              count               varint byte length + little-endian magnitude
//! trailer    SHA-256 of every preceding byte
//! ```
//!
//! Records are strictly ascending by key, so equal tables encode to equal
//! bytes.

use integer_encoding::VarInt;
use sha2::{Digest, Sha256};

use super::{CoefficientTable, TableParams, TermKey};
use crate::count::Count;
use crate::cyclotomic::totient;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MBDOSTAB";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_var<V: VarInt>(out: &mut Vec<u8>, v: V) {
    let mut buf = [0u8; 10];
    let n = v.encode_var(&mut buf);
    out.extend_from_slice(&buf[..n]);
}

pub fn encode_table(table: &CoefficientTable) -> Vec<u8> {
    let p = table.params();
    let mut out = Vec::with_capacity(64 + table.len() * (p.sectors.len() * 2 + 4));
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    for v in [p.l, p.n_max, p.cap, p.level_start, p.level_end] {
        put_u32(&mut out, v);
    }
    put_u32(&mut out, p.sectors.len() as u32);
    for &q in &p.sectors {
        put_u32(&mut out, q);
        put_u32(&mut out, totient(q as u64).expect("q >= 1") as u32);
    }
    out.extend_from_slice(&(table.len() as u64).to_le_bytes());
    for (k, c) in table.entries() {
        put_var(&mut out, k.particles);
        for &x in k.inv.iter() {
            put_var(&mut out, x);
        }
        let bytes = c.to_bytes_le();
        put_var(&mut out, bytes.len() as u64);
        out.extend_from_slice(&bytes);
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("unexpected end of table data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn var<V: VarInt>(&mut self) -> Result<V> {
        let (v, n) = V::decode_var(&self.buf[self.pos..])
            .ok_or_else(|| Error::Format(format!("bad varint at byte {}", self.pos)))?;
        self.pos += n;
        Ok(v)
    }
}

pub fn decode_table(bytes: &[u8]) -> Result<CoefficientTable> {
    if bytes.len() < MAGIC.len() + 4 + 32 {
        return Err(Error::Format("table data too short".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != trailer {
        return Err(Error::Checksum("coefficient table".into()));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a coefficient table (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let (l, n_max, cap, level_start, level_end) =
        (r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let n_sectors = r.u32()? as usize;
    let mut sectors = Vec::with_capacity(n_sectors);
    let mut width = 0usize;
    for _ in 0..n_sectors {
        let q = r.u32()?;
        let phi = r.u32()?;
        if q == 0 || totient(q as u64)? != phi as u64 {
            return Err(Error::Format(format!(
                "inconsistent totient entry ({q}, {phi})"
            )));
        }
        width += phi as usize;
        sectors.push(q);
    }
    let params = TableParams::new(l, n_max, cap, &sectors, level_start..level_end)?;
    if params.sectors != sectors {
        return Err(Error::Format(
            "sector list is not in canonical order".into(),
        ));
    }
    let n_records = r.u64()?;
    let mut entries: Vec<(TermKey, Count)> = Vec::with_capacity(n_records.min(1 << 24) as usize);
    for _ in 0..n_records {
        let particles: u32 = r.var()?;
        let mut inv = Vec::with_capacity(width);
        for _ in 0..width {
            inv.push(r.var::<i32>()?);
        }
        let len: u64 = r.var()?;
        let count = Count::from_bytes_le(r.take(len as usize)?);
        if count.is_zero() || particles > n_max {
            return Err(Error::Format("invalid record".into()));
        }
        let key = TermKey::new(particles, inv);
        if let Some((prev, _)) = entries.last() {
            if *prev >= key {
                return Err(Error::Format("records are not strictly ascending".into()));
            }
        }
        entries.push((key, count));
    }
    if r.pos != body.len() {
        return Err(Error::Format("trailing bytes after records".into()));
    }
    Ok(CoefficientTable::from_sorted(params, entries))
}
