//! From universal tables to system spectra.
//!
//! A configuration's energy splits over Fourier modes of the single-body
//! spectrum, `E(n) = Σ_ℓ U_ℓ(n) · ε̃_ℓ`. Grouping the modes by sector, the
//! sector-`q` part is fixed by that sector's invariants: Galois element `g`
//! maps the mode `ℓ = L/q` to `ℓ = g·L/q` and the value
//! `Σ_{k'} I_{k'} ω_q^{k'}` to `Σ_{k'} I_{k'} ω_q^{g k'}`. A table key
//! therefore determines one energy, and the table count is its multiplicity.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cyclotomic::root_value;
use crate::error::{Error, Result};
use crate::genfunc::{expand, CoefficientTable, Layout, TermKey};
use crate::sectors::galois_group;
use crate::spectrum::WeightedSpectrum;

/// Relative bound on the imaginary part left over after summing a real
/// energy from complex terms.
pub const RESIDUE_TOLERANCE: f64 = 1e-9;

/// Fourier coefficients `ε̃_ℓ = (1/L) Σ_k ε_k ω_L^{−kℓ}` of a single-body
/// spectrum, normalized so that `Σ_ℓ U_ℓ(n) ε̃_ℓ = Σ_k n_k ε_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveEnergies {
    tilde: Vec<Complex64>,
}

impl EffectiveEnergies {
    pub fn new(eps: &[f64]) -> Result<Self> {
        if eps.is_empty() {
            return Err(Error::invalid("single-body spectrum is empty"));
        }
        let l = eps.len();
        let inv_l = 1.0 / l as f64;
        let tilde = (0..l)
            .map(|ell| {
                eps.iter()
                    .enumerate()
                    .map(|(k, &e)| e * root_value(l as u32, -((k * ell) as i64)))
                    .sum::<Complex64>()
                    * inv_l
            })
            .collect();
        Ok(EffectiveEnergies { tilde })
    }

    pub fn l(&self) -> u32 {
        self.tilde.len() as u32
    }

    pub fn tilde(&self) -> &[Complex64] {
        &self.tilde
    }

    pub fn mode(&self, ell: u32) -> Complex64 {
        self.tilde[ell as usize % self.tilde.len()]
    }

    /// `Σ_ℓ U_ℓ(n) ε̃_ℓ` evaluated mode by mode.
    pub fn reconstruct(&self, config: &[u32]) -> Result<f64> {
        if config.len() != self.tilde.len() {
            return Err(Error::LayoutMismatch(format!(
                "configuration has {} levels, spectrum has {}",
                config.len(),
                self.tilde.len()
            )));
        }
        let l = self.l();
        let z: Complex64 = (0..l)
            .map(|ell| crate::oracle::u_value(config, ell) * self.tilde[ell as usize])
            .sum();
        real_part(z)
    }
}

fn real_part(z: Complex64) -> Result<f64> {
    if z.im.abs() > RESIDUE_TOLERANCE * z.re.abs().max(1.0) {
        return Err(Error::ImaginaryResidue { residue: z.im });
    }
    Ok(z.re)
}

fn check_layout(layout: &Layout, eff: &EffectiveEnergies) -> Result<()> {
    if layout.l() != eff.l() {
        return Err(Error::LayoutMismatch(format!(
            "table is for L = {}, energies have L = {}",
            layout.l(),
            eff.l()
        )));
    }
    Ok(())
}

/// Energy of one table key, summed directly over sectors and Galois
/// elements.
pub fn energy_of_key(key: &TermKey, eff: &EffectiveEnergies, layout: &Layout) -> Result<f64> {
    check_layout(layout, eff)?;
    if key.inv.len() != layout.width() {
        return Err(Error::LayoutMismatch(format!(
            "key has {} invariants, layout expects {}",
            key.inv.len(),
            layout.width()
        )));
    }
    let l = layout.l();
    let mut z = Complex64::new(key.particles as f64, 0.0) * eff.mode(0);
    for b in layout.blocks() {
        let inv = &key.inv[b.offset..b.offset + b.phi];
        let term = |g: u32| -> Complex64 {
            let value: Complex64 = inv
                .iter()
                .enumerate()
                .map(|(k, &c)| c as f64 * root_value(b.q, g as i64 * k as i64))
                .sum();
            value * eff.mode(g * (l / b.q))
        };
        // Galois elements come in conjugate pairs g, q − g; adding each pair
        // together cancels the imaginary parts as early as possible.
        for g in galois_group(b.q).into_iter().filter(|&g| 2 * g <= b.q) {
            z += term(g);
            if 2 * g != b.q {
                z += term(b.q - g);
            }
        }
    }
    real_part(z)
}

/// Real per-invariant energy weights for a fixed layout and spectrum:
/// `E(key) = N ε̃_0 + Σ_i key.inv[i] · weights[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyMap {
    base: f64,
    weights: Vec<f64>,
}

impl EnergyMap {
    pub fn new(eff: &EffectiveEnergies, layout: &Layout) -> Result<Self> {
        check_layout(layout, eff)?;
        let l = layout.l();
        let mut weights = vec![0.0; layout.width()];
        for b in layout.blocks() {
            for (k, w) in weights[b.offset..b.offset + b.phi].iter_mut().enumerate() {
                let z: Complex64 = galois_group(b.q)
                    .into_iter()
                    .map(|g| root_value(b.q, g as i64 * k as i64) * eff.mode(g * (l / b.q)))
                    .sum();
                *w = real_part(z)?;
            }
        }
        Ok(EnergyMap {
            base: real_part(eff.mode(0))?,
            weights,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn energy(&self, key: &TermKey) -> f64 {
        key.particles as f64 * self.base
            + key
                .inv
                .iter()
                .zip(&self.weights)
                .map(|(&i, &w)| i as f64 * w)
                .sum::<f64>()
    }
}

/// The `N`-particle spectrum carried by a complete table: one entry per key.
/// With every sector kept this is the exact spectrum; with sectors dropped,
/// each entry is a degeneracy class at its class energy.
pub fn truncated_spectrum(
    table: &CoefficientTable,
    eps: &[f64],
    n: u32,
) -> Result<WeightedSpectrum> {
    let p = table.params();
    if n > p.n_max {
        return Err(Error::ParticlesOutOfRange {
            requested: n,
            n_max: p.n_max,
        });
    }
    if !p.is_complete() {
        return Err(Error::invalid(format!(
            "table covers levels {:?}, not all of 0..{}",
            p.levels(),
            p.l
        )));
    }
    let eff = EffectiveEnergies::new(eps)?;
    let map = EnergyMap::new(&eff, &table.layout())?;
    let entries = table
        .slice(n)
        .par_iter()
        .map(|(key, count)| {
            let m = count.to_u128().ok_or(Error::CountOverflow)?;
            Ok((map.energy(key), m))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WeightedSpectrum::from_entries(entries))
}

/// Expand the table for `(L, N, R, S)` and resum it in one call.
pub fn truncated_mbdos(eps: &[f64], n: u32, cap: u32, sectors: &[u32]) -> Result<WeightedSpectrum> {
    let table = expand(eps.len() as u32, n, cap, sectors)?;
    truncated_spectrum(&table, eps, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{config_energy, count_configs, enumerate_configs, exact_mbdos};
    use crate::sectors::sector_partition;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_eps(l: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..l).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn assert_spectra_close(a: &WeightedSpectrum, b: &WeightedSpectrum, tol: f64) {
        assert_eq!(a.total(), b.total());
        let dev = a.max_deviation(b).unwrap();
        assert!(dev < tol, "deviation {dev}");
    }

    #[test]
    fn constant_and_two_level_spectra() {
        let eff = EffectiveEnergies::new(&[2.5; 5]).unwrap();
        assert!((eff.tilde()[0] - 2.5).norm() < 1e-15);
        assert!(eff.tilde()[1..].iter().all(|z| z.norm() < 1e-14));

        let (a, b) = (3.0, -1.0);
        let eff = EffectiveEnergies::new(&[a, b]).unwrap();
        assert!((eff.tilde()[0].re - (a + b) / 2.0).abs() < 1e-15);
        assert!((eff.tilde()[1].re - (a - b) / 2.0).abs() < 1e-15);
        assert!((eff.reconstruct(&[1, 1]).unwrap() - (a + b)).abs() < 1e-14);
        assert!(EffectiveEnergies::new(&[]).is_err());
    }

    #[test]
    fn conjugate_symmetry() {
        let eps = random_eps(9, 4);
        let t = EffectiveEnergies::new(&eps).unwrap();
        for ell in 1..9 {
            assert!((t.tilde()[ell] - t.tilde()[9 - ell].conj()).norm() < 1e-14);
        }
    }

    #[test]
    fn mode_sum_reproduces_every_configuration() {
        let eps = random_eps(6, 11);
        let eff = EffectiveEnergies::new(&eps).unwrap();
        for r in [1, 3] {
            for cfg in enumerate_configs(6, 3, r) {
                let e = eff.reconstruct(&cfg).unwrap();
                assert!((e - config_energy(&cfg, &eps)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_invariants_give_the_particle_term() {
        let eps = random_eps(12, 2);
        let eff = EffectiveEnergies::new(&eps).unwrap();
        let layout = Layout::new(12, &[12, 6, 4]).unwrap();
        let key = TermKey::new(5, vec![0; layout.width()]);
        let e = energy_of_key(&key, &eff, &layout).unwrap();
        assert!((e - 5.0 * eff.tilde()[0].re).abs() < 1e-12);
        let bad = TermKey::new(5, vec![0; 3]);
        assert!(matches!(
            energy_of_key(&bad, &eff, &layout),
            Err(Error::LayoutMismatch(_))
        ));
    }

    #[test]
    fn direct_and_weighted_energies_agree() {
        let eps = random_eps(12, 8);
        let eff = EffectiveEnergies::new(&eps).unwrap();
        let table = expand(12, 3, 3, &[12, 6, 4, 3, 2]).unwrap();
        let layout = table.layout();
        let map = EnergyMap::new(&eff, &layout).unwrap();
        for (key, _) in table.entries() {
            let direct = energy_of_key(key, &eff, &layout).unwrap();
            assert!((direct - map.energy(key)).abs() < 1e-12);
        }
    }

    #[test]
    fn all_sectors_reproduce_the_exact_spectrum() {
        for l in 2..=8u32 {
            let all = sector_partition(l).unwrap().nontrivial_qs();
            let eps = random_eps(l as usize, l as u64);
            for n in 0..=4 {
                for r in [1, n.max(1)] {
                    let exact = exact_mbdos(l, n, r, &eps).unwrap();
                    let approx = truncated_mbdos(&eps, n, r, &all).unwrap();
                    assert_spectra_close(&approx, &exact, 1e-9);
                    assert!(approx.entries().iter().all(|&(_, m)| m == 1));
                }
            }
        }
    }

    #[test]
    fn fermion_six_two_has_fifteen_distinct_levels() {
        let eps = random_eps(6, 1);
        let s = truncated_mbdos(&eps, 2, 1, &[6, 3, 2]).unwrap();
        assert_eq!(s.len(), 15);
        assert_spectra_close(&s, &exact_mbdos(6, 2, 1, &eps).unwrap(), 1e-9);
    }

    #[test]
    fn empty_sector_set_collapses_to_one_level() {
        let eps = random_eps(7, 3);
        let s = truncated_mbdos(&eps, 4, 4, &[]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.total(), count_configs(7, 4, 4).to_u128().unwrap());
        let mean: f64 = eps.iter().sum::<f64>() * 4.0 / 7.0;
        assert!((s.entries()[0].0 - mean).abs() < 1e-12);
    }

    #[test]
    fn truncation_conserves_count_and_mean() {
        let eps = random_eps(6, 21);
        let exact = exact_mbdos(6, 2, 1, &eps).unwrap();
        for sectors in [&[6u32][..], &[6, 3], &[2], &[]] {
            let s = truncated_mbdos(&eps, 2, 1, sectors).unwrap();
            assert_eq!(s.total(), 15);
            assert!((s.mean() - exact.mean()).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_requests() {
        let table = expand(6, 2, 2, &[6]).unwrap();
        let eps = random_eps(6, 0);
        assert!(matches!(
            truncated_spectrum(&table, &eps, 3),
            Err(Error::ParticlesOutOfRange {
                requested: 3,
                n_max: 2
            })
        ));
        assert!(matches!(
            truncated_spectrum(&table, &eps[..5], 2),
            Err(Error::LayoutMismatch(_))
        ));
        let partial = crate::genfunc::expand_levels(6, 2, 2, &[6], 0..3).unwrap();
        assert!(truncated_spectrum(&partial, &eps, 2).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn full_spectrum_is_permutation_invariant(seed in 0u64..1000, shift in 1usize..9) {
            let eps = random_eps(9, seed);
            let mut perm = eps.clone();
            perm.rotate_left(shift);
            perm.swap(0, shift % 9);
            let all = [9, 3];
            let a = truncated_mbdos(&eps, 3, 1, &all).unwrap();
            let b = truncated_mbdos(&perm, 3, 1, &all).unwrap();
            prop_assert!(a.max_deviation(&b).unwrap() < 1e-9);
        }
    }
}
