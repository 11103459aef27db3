//! Run configuration and single-body energy sources.
//!
//! A [`RunConfig`] captures everything a pipeline run depends on; its JSON
//! form is canonical, so serializing a parsed config reproduces the input
//! byte for byte.

use std::io::BufRead;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis::{GammaSpec, Truncation, DEFAULT_POINTS};
use crate::error::{Error, Result};
use crate::oracle::Statistics;

/// Where the single-body energies come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EnergySource {
    /// One energy per line; blank lines and `#` comments are skipped, and
    /// only the first comma-separated field of a line is read.
    File {
        path: PathBuf,
    },
    /// Independent normal draws.
    Gaussian {
        mu: f64,
        sigma: f64,
        seed: u64,
    },
    /// Two blocks of `L/2` normal draws with means `0` and `2·N·σ`, so the
    /// block separation exceeds `N·σ`.
    Bimodal {
        sigma: f64,
        seed: u64,
    },
    Inline {
        values: Vec<f64>,
    },
}

impl EnergySource {
    /// The energies for a system of `l` levels and `n` particles.
    pub fn energies(&self, l: u32, n: u32) -> Result<Vec<f64>> {
        let eps = match self {
            EnergySource::File { path } => read_energies(path)?,
            EnergySource::Gaussian { mu, sigma, seed } => gaussian_energies(l, *mu, *sigma, *seed)?,
            EnergySource::Bimodal { sigma, seed } => bimodal_energies(l, n, *sigma, *seed)?,
            EnergySource::Inline { values } => values.clone(),
        };
        if eps.len() != l as usize {
            return Err(Error::invalid(format!(
                "energy source provides {} levels, L = {l}",
                eps.len()
            )));
        }
        if eps.iter().any(|e| !e.is_finite()) {
            return Err(Error::invalid("energies must be finite"));
        }
        Ok(eps)
    }
}

pub fn gaussian_energies(l: u32, mu: f64, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite() && mu.is_finite()) {
        return Err(Error::invalid(format!(
            "normal({mu}, {sigma}) is not a valid distribution"
        )));
    }
    let dist = Normal::new(mu, sigma)
        .map_err(|e| Error::invalid(format!("normal({mu}, {sigma}): {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..l).map(|_| dist.sample(&mut rng)).collect())
}

pub fn bimodal_energies(l: u32, n: u32, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if l % 2 != 0 || l == 0 {
        return Err(Error::invalid(format!(
            "the bimodal preset needs an even L, got {l}"
        )));
    }
    let gap = 2.0 * n.max(1) as f64 * sigma;
    let mut eps = gaussian_energies(l / 2, 0.0, sigma, seed)?;
    eps.extend(gaussian_energies(l / 2, gap, sigma, seed.wrapping_add(1))?);
    Ok(eps)
}

pub fn read_energies(path: &Path) -> Result<Vec<f64>> {
    let f = std::fs::File::open(path)?;
    parse_energies(std::io::BufReader::new(f))
}

pub fn parse_energies<R: BufRead>(r: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let field = line
            .split('#')
            .next()
            .unwrap_or("")
            .split(',')
            .next()
            .unwrap_or("")
            .trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            // A header row is allowed on the first line.
            Err(_) if out.is_empty() && i == 0 => {}
            Err(_) => {
                return Err(Error::Format(format!(
                    "line {}: not a number: {field}",
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub l: u32,
    pub n: u32,
    pub statistics: Statistics,
    pub truncation: Truncation,
    pub energies: EnergySource,
    pub gamma: GammaSpec,
    pub grid_points: usize,
    pub cache_dir: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    /// `L = 20`, `N = 6` bosons, every sector, standard-normal energies with
    /// seed 0, `Γ = 1000Δ` on 1000 grid points, no cache, standard output.
    fn default() -> Self {
        RunConfig {
            l: 20,
            n: 6,
            statistics: Statistics::Boson,
            truncation: Truncation::All,
            energies: EnergySource::Gaussian {
                mu: 0.0,
                sigma: 1.0,
                seed: 0,
            },
            gamma: GammaSpec::TimesSpacing(1000.0),
            grid_points: DEFAULT_POINTS,
            cache_dir: None,
            output: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn cap(&self) -> u32 {
        self.statistics.cap(self.n)
    }

    pub fn sectors(&self) -> Result<Vec<u32>> {
        self.truncation.sectors(self.l)
    }

    pub fn energies(&self) -> Result<Vec<f64>> {
        self.energies.energies(self.l, self.n)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(Error::invalid("L must be at least 1"));
        }
        if let Statistics::Cap(0) = self.statistics {
            return Err(Error::invalid("occupancy cap must be at least 1"));
        }
        if self.grid_points < 2 {
            return Err(Error::invalid("grid needs at least two points"));
        }
        self.sectors()?;
        Ok(())
    }
}
