//! Smoothing, comparison and thermometry of spectra.
//!
//! Spectra are compared after convolution with a Gaussian kernel of width
//! `Γ` ([`kde`]), evaluated on a shared uniform grid, through pointwise `L_p`
//! distances ([`lp_distance`]). The same smoothed densities give occupation
//! numbers: a parent configuration with `n` particles on level `k` is a
//! configuration of the other `L − 1` levels holding `N − n` particles,
//! shifted by `n·ε_k`, so
//!
//! ```text
//! ⟨n_k⟩(E) = Σ_n n · ρ_{L−1,N−n}(E − n ε_k) / Σ_n ρ_{L−1,N−n}(E − n ε_k)
//! ```
//!
//! and the denominator equals the parent density. Three inverse temperatures
//! follow: the log-derivative of the density, the same from a Gaussian fit,
//! and the slope of `ln(1/⟨n_k⟩ + 1)` against `ε_k`.

use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genfunc::expand;
use crate::ordering::{anneal, apply_permutation, CostSpec, Metric, Schedule};
use crate::resummation::truncated_spectrum;
use crate::sectors::sector_partition;
use crate::spectrum::WeightedSpectrum;

/// Kernel contributions beyond this many widths are skipped.
pub const KERNEL_WINDOW: f64 = 8.0;
/// Grids extend this many widths past the outermost level.
pub const GRID_MARGIN: f64 = 5.0;
/// Default number of grid points.
pub const DEFAULT_POINTS: usize = 1000;
/// Densities below this are treated as unreachable.
pub const UNDEFINED_DENSITY: f64 = 1e-300;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Uniform energy grid `start + i·step`, `i < len`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, len: usize) -> Result<Self> {
        if len < 2 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!(
                "grid needs lo < hi and at least two points, got [{lo}, {hi}] with {len}"
            )));
        }
        Ok(Grid {
            start: lo,
            step: (hi - lo) / (len - 1) as f64,
            len,
        })
    }

    /// Grid over `[min E − 5Γ, max E + 5Γ]` across all given spectra.
    pub fn covering(spectra: &[&WeightedSpectrum], gamma: f64, len: usize) -> Result<Self> {
        let (lo, hi) = spectra
            .iter()
            .filter_map(|s| Some((s.min_energy()?, s.max_energy()?)))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (lo, hi)| {
                (a.min(lo), b.max(hi))
            });
        if !lo.is_finite() {
            return Err(Error::invalid("cannot build a grid for empty spectra"));
        }
        Grid::new(lo - GRID_MARGIN * gamma, hi + GRID_MARGIN * gamma, len)
    }

    pub fn point(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.point(i)).collect()
    }

    pub fn end(&self) -> f64 {
        self.point(self.len - 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Unit-area kernels weighted by multiplicity: states per unit energy.
    Counts,
    /// Counts divided by the total number of states; integrates to one.
    Probability,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub gamma: f64,
    pub normalization: Normalization,
}

impl DensityCurve {
    /// Trapezoidal integral over the grid.
    pub fn integral(&self) -> f64 {
        let v = &self.values;
        let inner: f64 = v.iter().sum::<f64>() - 0.5 * (v[0] + v[v.len() - 1]);
        inner * self.grid.step
    }

    /// Linear interpolation; `None` outside the grid.
    pub fn value_at(&self, e: f64) -> Option<f64> {
        let x = (e - self.grid.start) / self.grid.step;
        if x < 0.0 || x > (self.grid.len - 1) as f64 {
            return None;
        }
        let i = (x.floor() as usize).min(self.grid.len - 2);
        let t = x - i as f64;
        Some(self.values[i] * (1.0 - t) + self.values[i + 1] * t)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "energy,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{:?},{:?}", self.grid.point(i), v)?;
        }
        Ok(())
    }
}

/// Energy resolution: absolute, or a multiple of the many-body spacing `Δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum GammaSpec {
    Absolute(f64),
    TimesSpacing(f64),
}

impl GammaSpec {
    pub fn resolve(&self, spectrum: &WeightedSpectrum) -> Result<f64> {
        let g = match *self {
            GammaSpec::Absolute(g) => g,
            GammaSpec::TimesSpacing(f) => f * mean_level_spacing(spectrum)?,
        };
        if !(g > 0.0) {
            return Err(Error::invalid(format!(
                "kernel width must be positive, got {g}"
            )));
        }
        Ok(g)
    }
}

/// `Δ = (E_max − E_min)/(M − 1)` over the `M` states of the spectrum.
pub fn mean_level_spacing(spectrum: &WeightedSpectrum) -> Result<f64> {
    let total = spectrum.total();
    match (spectrum.min_energy(), spectrum.max_energy()) {
        (Some(lo), Some(hi)) if total >= 2 => Ok((hi - lo) / (total - 1) as f64),
        _ => Err(Error::invalid("level spacing needs at least two states")),
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "kernel width must be positive, got {gamma}"
        )))
    }
}

fn kernel(x: f64, gamma: f64) -> f64 {
    let z = x / gamma;
    (-0.5 * z * z).exp() * INV_SQRT_2PI / gamma
}

/// Gaussian kernel density estimate on `grid`, standard deviation `gamma`.
pub fn kde(
    spectrum: &WeightedSpectrum,
    gamma: f64,
    grid: Grid,
    normalization: Normalization,
) -> Result<DensityCurve> {
    check_gamma(gamma)?;
    if spectrum.is_empty() {
        return Err(Error::invalid("cannot smooth an empty spectrum"));
    }
    let reach = KERNEL_WINDOW * gamma;
    let scale = match normalization {
        Normalization::Counts => 1.0,
        Normalization::Probability => 1.0 / spectrum.total() as f64,
    };
    let entries = spectrum.entries();
    let values = (0..grid.len)
        .into_par_iter()
        .map(|i| {
            let e = grid.point(i);
            let lo = entries.partition_point(|x| x.0 < e - reach);
            let hi = entries.partition_point(|x| x.0 <= e + reach);
            // Folding from +0.0 keeps empty windows from printing as -0.
            entries[lo..hi]
                .iter()
                .fold(0.0, |acc, &(x, m)| acc + m as f64 * kernel(e - x, gamma))
                * scale
        })
        .collect();
    Ok(DensityCurve {
        grid,
        values,
        gamma,
        normalization,
    })
}

/// Unnormalized (counts) density at one energy.
pub fn kde_at(spectrum: &WeightedSpectrum, gamma: f64, e: f64) -> f64 {
    let reach = KERNEL_WINDOW * gamma;
    let entries = spectrum.entries();
    let lo = entries.partition_point(|x| x.0 < e - reach);
    let hi = entries.partition_point(|x| x.0 <= e + reach);
    entries[lo..hi]
        .iter()
        .fold(0.0, |acc, &(x, m)| acc + m as f64 * kernel(e - x, gamma))
}

/// `(Σ_i |a_i − b_i|^p)^{1/p}` over a shared grid.
pub fn lp_distance(a: &DensityCurve, b: &DensityCurve, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::invalid(format!("p must be positive, got {p}")));
    }
    if a.grid != b.grid {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", a.grid, b.grid)));
    }
    if a.normalization != b.normalization {
        return Err(Error::GridMismatch(
            "curves use different normalizations".into(),
        ));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p))
}

/// Which sectors a spectrum keeps.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Truncation {
    /// Every sector: the exact spectrum.
    All,
    /// Drop the `k` largest sectors `q > 1`.
    DropTop(usize),
    /// Exactly these sectors.
    Keep(Vec<u32>),
}

impl Truncation {
    pub fn sectors(&self, l: u32) -> Result<Vec<u32>> {
        let flow = sector_partition(l)?;
        Ok(match self {
            Truncation::All => flow.nontrivial_qs(),
            Truncation::DropTop(k) => flow.drop_top(*k),
            Truncation::Keep(qs) => qs.iter().copied().filter(|&q| q > 1).collect(),
        })
    }

    /// The policy for the system with one of the `parent_l` levels removed:
    /// its divisors differ, so the same number of top sectors is dropped.
    pub fn for_subsystem(&self, parent_l: u32) -> Result<Truncation> {
        Ok(match self {
            Truncation::All => Truncation::All,
            Truncation::DropTop(k) => Truncation::DropTop(*k),
            Truncation::Keep(_) => {
                let all = sector_partition(parent_l)?.nontrivial_qs().len();
                Truncation::DropTop(all.saturating_sub(self.sectors(parent_l)?.len()))
            }
        })
    }
}

/// Spectrum of `N` particles on the levels `eps` under a truncation policy.
pub fn system_spectrum(
    eps: &[f64],
    n: u32,
    cap: u32,
    truncation: &Truncation,
) -> Result<WeightedSpectrum> {
    let l = eps.len() as u32;
    let table = expand(l, n, cap, &truncation.sectors(l)?)?;
    truncated_spectrum(&table, eps, n)
}

/// Occupation numbers of a system from the smoothed spectra of its
/// one-level-removed subsystems.
#[derive(Clone, Debug)]
pub struct OccupancyModel {
    eps: Vec<f64>,
    n: u32,
    cap: u32,
    gamma: f64,
    /// `sub[k][m]`: spectrum of `m` particles on every level except `k`.
    sub: Vec<Vec<WeightedSpectrum>>,
}

/// How the levels of each one-level-removed subsystem are ordered before
/// its spectrum is truncated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SubsystemOrdering {
    /// The parent's order with the removed level left out.
    Inherit,
    /// Re-optimized by annealing the power fraction of the subsystem's
    /// dropped sectors, starting from the inherited order.
    Anneal { budget: u64, seed: u64 },
}

impl OccupancyModel {
    /// Subsystem spectra keep the parent's level order with `k` removed and
    /// use [`Truncation::for_subsystem`]. One universal table for `L − 1`
    /// levels serves every `k` and every particle number.
    pub fn new(eps: &[f64], n: u32, cap: u32, truncation: &Truncation, gamma: f64) -> Result<Self> {
        Self::with_ordering(eps, n, cap, truncation, gamma, SubsystemOrdering::Inherit)
    }

    pub fn with_ordering(
        eps: &[f64],
        n: u32,
        cap: u32,
        truncation: &Truncation,
        gamma: f64,
        ordering: SubsystemOrdering,
    ) -> Result<Self> {
        check_gamma(gamma)?;
        if eps.len() < 2 {
            return Err(Error::invalid("occupancies need at least two levels"));
        }
        let l = eps.len() as u32;
        let sub_trunc = truncation.for_subsystem(l)?;
        let kept = sub_trunc.sectors(l - 1)?;
        let dropped: Vec<u32> = sector_partition(l - 1)?
            .nontrivial_qs()
            .into_iter()
            .filter(|q| !kept.contains(q))
            .collect();
        let table = expand(l - 1, n, cap, &kept)?;
        let sub = (0..eps.len())
            .into_par_iter()
            .map(|k| {
                let mut rest: Vec<f64> = eps
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != k)
                    .map(|(_, &e)| e)
                    .collect();
                if let (SubsystemOrdering::Anneal { budget, seed }, false) =
                    (ordering, dropped.is_empty())
                {
                    let schedule = Schedule {
                        budget,
                        stop_factor: None,
                        ..Schedule::default()
                    };
                    let cost = CostSpec::sum(Metric::P, &dropped);
                    let best = anneal(&rest, &cost, &schedule, seed.wrapping_add(k as u64))?;
                    rest = apply_permutation(&rest, &best.perm);
                }
                (0..=n)
                    .map(|m| truncated_spectrum(&table, &rest, m))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OccupancyModel {
            eps: eps.to_vec(),
            n,
            cap,
            gamma,
            sub,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn levels(&self) -> &[f64] {
        &self.eps
    }

    fn terms(&self, e: f64, k: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        (0..=self.n.min(self.cap)).map(move |m| {
            let rest = &self.sub[k][(self.n - m) as usize];
            (m, kde_at(rest, self.gamma, e - m as f64 * self.eps[k]))
        })
    }

    /// `Σ_n ρ_{L−1,N−n}(E − n ε_k)`: the parent density rebuilt from level `k`.
    pub fn denominator(&self, e: f64, k: usize) -> f64 {
        self.terms(e, k).map(|t| t.1).sum()
    }

    /// `⟨n_k⟩(E)`, or `None` where the density vanishes.
    pub fn occupancy(&self, e: f64, k: usize) -> Option<f64> {
        let (num, den) = self
            .terms(e, k)
            .fold((0.0, 0.0), |(a, b), (m, v)| (a + m as f64 * v, b + v));
        (den >= UNDEFINED_DENSITY).then(|| num / den)
    }

    pub fn occupancies(&self, e: f64) -> Vec<Option<f64>> {
        (0..self.eps.len()).map(|k| self.occupancy(e, k)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("linear fit needs two or more paired points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("linear fit needs distinct x values"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(LinearFit {
        slope,
        intercept,
        r2,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mu: f64,
    pub sigma: f64,
    pub amplitude: f64,
}

impl GaussianFit {
    /// `d/dE ln ρ = (μ − E)/σ²`.
    pub fn beta(&self, e: f64) -> f64 {
        (self.mu - e) / (self.sigma * self.sigma)
    }

    pub fn value(&self, e: f64) -> f64 {
        self.amplitude * (-(e - self.mu).powi(2) / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// Relative floor below which curve points are left out of the Gaussian fit.
pub const FIT_FLOOR: f64 = 1e-6;

/// Least-squares parabola through `ln ρ` on points above `1e-6` of the peak.
pub fn fit_gaussian(curve: &DensityCurve) -> Result<GaussianFit> {
    let peak = curve.values.iter().cloned().fold(0.0, f64::max);
    let (xs, ys): (Vec<f64>, Vec<f64>) = curve
        .values
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v > FIT_FLOOR * peak && v > 0.0)
        .map(|(i, &v)| (curve.grid.point(i), v.ln()))
        .unzip();
    if xs.len() < 3 {
        return Err(Error::invalid("too few positive points for a Gaussian fit"));
    }
    // Centre and scale x for conditioning, then solve the 3×3 normal equations.
    let n = xs.len() as f64;
    let c = xs.iter().sum::<f64>() / n;
    let s = xs
        .iter()
        .map(|x| (x - c).abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut m = [[0.0f64; 4]; 3];
    for (&x, &y) in xs.iter().zip(&ys) {
        let t = (x - c) / s;
        let basis = [1.0, t, t * t];
        for r in 0..3 {
            for col in 0..3 {
                m[r][col] += basis[r] * basis[col];
            }
            m[r][3] += basis[r] * y;
        }
    }
    let [a0, a1, a2] = solve3(m).ok_or_else(|| Error::invalid("singular Gaussian fit"))?;
    if !(a2 < 0.0) {
        return Err(Error::invalid(
            "log-density is not concave; no Gaussian fit",
        ));
    }
    // ln ρ = a0 + a1 t + a2 t², t = (E − c)/s.
    let sigma = s * (-1.0 / (2.0 * a2)).sqrt();
    let mu = c - s * a1 / (2.0 * a2);
    let amplitude = (a0 - a1 * a1 / (4.0 * a2)).exp();
    Ok(GaussianFit {
        mu,
        sigma,
        amplitude,
    })
}

fn solve3(mut m: [[f64; 4]; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        for r in 0..3 {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..4 {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaMethod {
    Boltzmann,
    BoltzmannFit,
    Empirical,
}

impl BetaMethod {
    pub fn name(self) -> &'static str {
        match self {
            BetaMethod::Boltzmann => "boltzmann",
            BetaMethod::BoltzmannFit => "boltzmann-fit",
            BetaMethod::Empirical => "empirical",
        }
    }
}

/// Inverse temperatures at a set of energies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub method: BetaMethod,
    pub energies: Vec<f64>,
    pub betas: Vec<Option<f64>>,
    /// Goodness of fit per energy, for the empirical method.
    pub r2: Vec<Option<f64>>,
}

/// Central-difference `d ln ρ/dE` at the interior grid points; masked where
/// a neighbour is not positive.
pub fn beta_boltzmann(curve: &DensityCurve) -> BetaEstimate {
    let v = &curve.values;
    let range: Range<usize> = 1..v.len() - 1;
    let betas = range
        .clone()
        .map(|i| {
            (v[i - 1] > 0.0 && v[i + 1] > 0.0)
                .then(|| (v[i + 1].ln() - v[i - 1].ln()) / (2.0 * curve.grid.step))
        })
        .collect();
    BetaEstimate {
        method: BetaMethod::Boltzmann,
        energies: range.clone().map(|i| curve.grid.point(i)).collect(),
        betas,
        r2: vec![None; range.len()],
    }
}

/// `d ln ρ/dE` at one energy by central difference of the counts density
/// with step `h`.
pub fn beta_boltzmann_at(spectrum: &WeightedSpectrum, gamma: f64, e: f64, h: f64) -> Option<f64> {
    let (lo, hi) = (
        kde_at(spectrum, gamma, e - h),
        kde_at(spectrum, gamma, e + h),
    );
    (lo > 0.0 && hi > 0.0).then(|| (hi.ln() - lo.ln()) / (2.0 * h))
}

/// The Gaussian-fit inverse temperature on the curve's grid.
pub fn beta_boltzmann_fit(curve: &DensityCurve) -> Result<(GaussianFit, BetaEstimate)> {
    let fit = fit_gaussian(curve)?;
    let energies = curve.grid.points();
    let betas = energies.iter().map(|&e| Some(fit.beta(e))).collect();
    Ok((
        fit,
        BetaEstimate {
            method: BetaMethod::BoltzmannFit,
            r2: vec![None; energies.len()],
            energies,
            betas,
        },
    ))
}

/// Line through `(ε_k, ln(1/⟨n_k⟩ + 1))` over the levels with a defined,
/// positive occupancy. For Bose–Einstein occupations the slope is `β`.
pub fn empirical_fit(eps: &[f64], occupancies: &[Option<f64>]) -> Result<LinearFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = eps
        .iter()
        .zip(occupancies)
        .filter_map(|(&e, &o)| o.filter(|&n| n > 0.0).map(|n| (e, (1.0 / n + 1.0).ln())))
        .unzip();
    linear_fit(&xs, &ys)
}

/// Empirical inverse temperature at each energy.
pub fn beta_empirical(model: &OccupancyModel, energies: &[f64]) -> BetaEstimate {
    let fits: Vec<Option<LinearFit>> = energies
        .par_iter()
        .map(|&e| empirical_fit(model.levels(), &model.occupancies(e)).ok())
        .collect();
    BetaEstimate {
        method: BetaMethod::Empirical,
        energies: energies.to_vec(),
        betas: fits.iter().map(|f| f.map(|f| f.slope)).collect(),
        r2: fits.iter().map(|f| f.map(|f| f.r2)).collect(),
    }
}

/// Write estimates as `energy,beta,method[,r2]` rows; undefined values are
/// left empty.
pub fn write_beta_csv<W: Write>(estimates: &[BetaEstimate], mut w: W) -> Result<()> {
    writeln!(w, "energy,beta,method,r2")?;
    for est in estimates {
        for i in 0..est.energies.len() {
            let b = est.betas[i].map(|b| format!("{b:?}")).unwrap_or_default();
            let r = est.r2[i].map(|r| format!("{r:?}")).unwrap_or_default();
            writeln!(w, "{:?},{b},{},{r}", est.energies[i], est.method.name())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::exact_mbdos;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn levels(l: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<f64> = (0..l).map(|_| rng.gen_range(0.0..2.0)).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn single_level_gives_the_kernel() {
        let s = WeightedSpectrum::from_entries(vec![(1.5, 1)]);
        let grid = Grid::covering(&[&s], 0.2, 201).unwrap();
        let c = kde(&s, 0.2, grid, Normalization::Counts).unwrap();
        for (i, v) in c.values.iter().enumerate() {
            assert!((v - kernel(grid.point(i) - 1.5, 0.2)).abs() < 1e-15);
        }
        assert!((c.integral() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn probability_curves_integrate_to_one() {
        let eps = levels(8, 1);
        let s = exact_mbdos(8, 3, 3, &eps).unwrap();
        let gamma = 20.0 * mean_level_spacing(&s).unwrap();
        let grid = Grid::covering(&[&s], gamma, DEFAULT_POINTS).unwrap();
        let c = kde(&s, gamma, grid, Normalization::Probability).unwrap();
        assert!((c.integral() - 1.0).abs() < 1e-6);
        assert!(c.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn shifting_the_spectrum_shifts_the_curve() {
        let s = WeightedSpectrum::from_entries(vec![(0.0, 2), (0.3, 1), (1.1, 4)]);
        let step = 0.01;
        let grid = Grid::new(-1.0, 2.0, 301).unwrap();
        let a = kde(&s, 0.1, grid, Normalization::Counts).unwrap();
        let b = kde(&s.shifted(10.0 * step), 0.1, grid, Normalization::Counts).unwrap();
        for i in 10..301 {
            assert!((b.values[i] - a.values[i - 10]).abs() < 1e-12);
        }
    }

    #[test]
    fn distances() {
        let s = WeightedSpectrum::from_entries(vec![(0.0, 1), (1.0, 1)]);
        let grid = Grid::covering(&[&s], 0.1, 100).unwrap();
        let a = kde(&s, 0.1, grid, Normalization::Probability).unwrap();
        assert_eq!(lp_distance(&a, &a, 3.0).unwrap(), 0.0);
        let other = kde(
            &s,
            0.1,
            Grid::new(0.0, 1.0, 100).unwrap(),
            Normalization::Probability,
        )
        .unwrap();
        assert!(matches!(
            lp_distance(&a, &other, 3.0),
            Err(Error::GridMismatch(_))
        ));
        let mut b = a.clone();
        b.values[0] += 3.0;
        b.values[1] += 4.0;
        assert!((lp_distance(&a, &b, 2.0).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn spacing_and_gamma_spec() {
        let s = WeightedSpectrum::from_entries(vec![(0.0, 2), (3.0, 2)]);
        assert!((mean_level_spacing(&s).unwrap() - 1.0).abs() < 1e-15);
        assert!((GammaSpec::TimesSpacing(2.5).resolve(&s).unwrap() - 2.5).abs() < 1e-15);
        assert!(GammaSpec::Absolute(-1.0).resolve(&s).is_err());
        assert!(mean_level_spacing(&WeightedSpectrum::from_entries(vec![(1.0, 1)])).is_err());
    }

    #[test]
    fn single_particle_two_levels() {
        let eps = [0.0, 5.0];
        let m = OccupancyModel::new(&eps, 1, 1, &Truncation::All, 1e-3).unwrap();
        assert!((m.occupancy(0.0, 0).unwrap() - 1.0).abs() < 1e-12);
        assert!(m.occupancy(0.0, 1).unwrap() < 1e-12);
        assert!(m.occupancy(100.0, 0).is_none());
    }

    #[test]
    fn denominator_rebuilds_the_parent_density() {
        let eps = levels(7, 5);
        for (n, r) in [(3, 1), (4, 4)] {
            let parent = exact_mbdos(7, n, r, &eps).unwrap();
            let gamma = 5.0 * mean_level_spacing(&parent).unwrap();
            let m = OccupancyModel::new(&eps, n, r, &Truncation::All, gamma).unwrap();
            let mid = parent.mean();
            for k in 0..7 {
                for e in [mid - 0.3, mid, mid + 0.2] {
                    let want = kde_at(&parent, gamma, e);
                    assert!((m.denominator(e, k) - want).abs() <= 1e-10 * want);
                }
            }
            let sum: f64 = m.occupancies(mid).into_iter().map(Option::unwrap).sum();
            assert!((sum - n as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn subsystem_policy() {
        assert_eq!(
            Truncation::DropTop(1).sectors(12).unwrap(),
            vec![6, 4, 3, 2]
        );
        assert_eq!(
            Truncation::Keep(vec![1, 6, 3]).for_subsystem(12).unwrap(),
            Truncation::DropTop(3)
        );
    }

    #[test]
    fn gaussian_curve_estimators_agree() {
        let grid = Grid::new(-6.0, 8.0, 1401).unwrap();
        let truth = GaussianFit {
            mu: 1.0,
            sigma: 1.3,
            amplitude: 7.0,
        };
        let curve = DensityCurve {
            grid,
            values: grid.points().iter().map(|&e| truth.value(e)).collect(),
            gamma: 1.0,
            normalization: Normalization::Counts,
        };
        let (fit, fitted) = beta_boltzmann_fit(&curve).unwrap();
        assert!((fit.mu - 1.0).abs() < 1e-9 && (fit.sigma - 1.3).abs() < 1e-9);
        let numeric = beta_boltzmann(&curve);
        for (i, b) in numeric.betas.iter().enumerate() {
            let e = numeric.energies[i];
            assert!((b.unwrap() - fit.beta(e)).abs() < 1e-6);
        }
        // Fitted β is exactly linear in E.
        let b = &fitted.betas;
        for i in 1..b.len() - 1 {
            let second = b[i + 1].unwrap() - 2.0 * b[i].unwrap() + b[i - 1].unwrap();
            assert!(second.abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_spectrum_has_zero_beta_at_centre() {
        let s = WeightedSpectrum::from_entries(vec![(-1.0, 3), (0.0, 5), (1.0, 3)]);
        let grid = Grid::new(-4.0, 4.0, 801).unwrap();
        let c = kde(&s, 0.5, grid, Normalization::Counts).unwrap();
        let b = beta_boltzmann(&c);
        let centre = b.energies.iter().position(|e| e.abs() < 1e-9).unwrap();
        assert!(b.betas[centre].unwrap().abs() < 1e-9);
        assert!(fit_gaussian(&c).unwrap().beta(0.0).abs() < 1e-9);
    }

    #[test]
    fn bose_einstein_occupations_give_their_beta() {
        let eps: Vec<f64> = (0..10).map(|k| 0.3 * k as f64).collect();
        let (beta, mu) = (1.7, -0.4);
        let occ: Vec<Option<f64>> = eps
            .iter()
            .map(|&e| Some(1.0 / ((beta * (e - mu)).exp() - 1.0)))
            .collect();
        let fit = empirical_fit(&eps, &occ).unwrap();
        assert!((fit.slope - beta).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_fit_rejects_degenerate_input() {
        assert!(linear_fit(&[1.0], &[2.0]).is_err());
        assert!(linear_fit(&[1.0, 1.0], &[2.0, 3.0]).is_err());
    }
}
