use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// A many-body spectrum as sorted `(energy, multiplicity)` pairs.
///
/// Energies are not required to be distinct: a truncated spectrum carries one
/// entry per degeneracy class, and two classes may land on the same energy.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightedSpectrum {
    entries: Vec<(f64, u128)>,
}

impl WeightedSpectrum {
    pub fn from_entries(mut entries: Vec<(f64, u128)>) -> Self {
        entries.retain(|&(_, m)| m > 0);
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        WeightedSpectrum { entries }
    }

    /// Collapse entries whose energies are bit-for-bit equal.
    pub fn merged(&self) -> Self {
        let mut out: Vec<(f64, u128)> = Vec::with_capacity(self.entries.len());
        for &(e, m) in &self.entries {
            match out.last_mut() {
                Some(last) if last.0 == e => last.1 += m,
                _ => out.push((e, m)),
            }
        }
        WeightedSpectrum { entries: out }
    }

    pub fn entries(&self) -> &[(f64, u128)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> u128 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn min_energy(&self) -> Option<f64> {
        self.entries.first().map(|e| e.0)
    }

    pub fn max_energy(&self) -> Option<f64> {
        self.entries.last().map(|e| e.0)
    }

    pub fn mean(&self) -> f64 {
        let total = self.total() as f64;
        self.entries.iter().map(|&(e, m)| e * m as f64).sum::<f64>() / total
    }

    /// Shift every energy by `s`.
    pub fn shifted(&self, s: f64) -> Self {
        WeightedSpectrum {
            entries: self.entries.iter().map(|&(e, m)| (e + s, m)).collect(),
        }
    }

    /// Every energy repeated by its multiplicity, ascending.
    pub fn expanded(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total() as usize);
        for &(e, m) in &self.entries {
            out.extend(std::iter::repeat(e).take(m as usize));
        }
        out
    }

    /// Largest element-wise gap between the two sorted, expanded energy
    /// lists. Fails when total multiplicities differ.
    pub fn max_deviation(&self, other: &WeightedSpectrum) -> Result<f64> {
        if self.total() != other.total() {
            return Err(Error::invalid(format!(
                "spectra hold {} and {} states",
                self.total(),
                other.total()
            )));
        }
        let a = self.expanded();
        let b = other.expanded();
        Ok(a.iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "energy,multiplicity")?;
        for &(e, m) in &self.entries {
            writeln!(w, "{e:?},{m}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("energy")) {
                continue;
            }
            let (e, m) = line.split_once(',').ok_or_else(|| {
                Error::Format(format!("line {}: expected energy,multiplicity", i + 1))
            })?;
            let e: f64 = e
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad energy", i + 1)))?;
            let m: u128 = m
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad multiplicity", i + 1)))?;
            entries.push((e, m));
        }
        Ok(WeightedSpectrum::from_entries(entries))
    }
}
