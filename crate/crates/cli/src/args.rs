use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mbdos::analysis::{GammaSpec, Truncation};
use mbdos::cache::CACHE_DIR_ENV;
use mbdos::config::{EnergySource, RunConfig};
use mbdos::oracle::Statistics;
use mbdos::Result;

#[derive(Debug, Parser)]
#[command(
    name = "mbdos",
    version,
    about = "Many-body densities of states from universal generating-function tables"
)]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the q-sectors of L and the folding edges between them.
    Sectors {
        /// Number of levels (also accepted as `--L`).
        #[arg(required_unless_present = "l_flag")]
        l: Option<u32>,
        #[arg(long = "L", conflicts_with = "l")]
        l_flag: Option<u32>,
        #[command(flatten)]
        cache: CacheArgs,
    },
    /// Print the transfer matrix T_q.
    Tmatrix {
        #[arg(long)]
        q: u32,
        /// Print JSON instead of aligned rows.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        cache: CacheArgs,
    },
    /// Expand the generating function into a coefficient table.
    Expand {
        #[command(flatten)]
        system: SystemArgs,
        /// Write the binary table here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cache a checkpoint every this many levels.
        #[arg(long)]
        checkpoint_every: Option<u32>,
        /// Protect the cached table from garbage collection under this run name.
        #[arg(long)]
        pin: Option<String>,
        #[command(flatten)]
        cache: CacheArgs,
    },
    /// Resum a table with single-body energies into a spectrum CSV.
    Spectrum {
        #[command(flatten)]
        system: SystemArgs,
        /// Use this table instead of expanding one.
        #[arg(long)]
        table: Option<PathBuf>,
        #[command(flatten)]
        energies: EnergyArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cache: CacheArgs,
    },
    /// Search orderings of the single-body energies by simulated annealing.
    Optimize {
        #[command(flatten)]
        energies: EnergyArgs,
        /// Number of levels (needed for generated energies).
        #[arg(long = "L")]
        l: u32,
        /// Particle number (used by the bimodal preset).
        #[arg(long = "N", default_value_t = 1)]
        n: u32,
        /// Sectors whose scores are minimized, e.g. `10,5,4,2`.
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        sectors: Vec<u32>,
        #[arg(long, value_enum, default_value_t = CostArg::P)]
        cost: CostArg,
        /// Maximum number of proposed moves per chain.
        #[arg(long, default_value_t = 100_000)]
        budget: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stop factor F in A_q < F·φ(q)·Δ; 0 disables the stop rule.
        #[arg(long = "F", default_value_t = 1.0)]
        f: f64,
        /// Independent chains run in parallel.
        #[arg(long, default_value_t = 1)]
        restarts: usize,
        /// Write the reordered energies here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the cost trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Kernel density estimate of a spectrum.
    Kde {
        /// Spectrum CSV (energy,multiplicity); otherwise computed from the system flags.
        #[arg(long)]
        spectrum: Option<PathBuf>,
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        energies: EnergyArgs,
        #[command(flatten)]
        smoothing: SmoothingArgs,
        #[arg(long, value_enum, default_value_t = NormArg::Probability)]
        normalize: NormArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// L_p distance between the exact and the truncated smoothed spectra.
    Compare {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        energies: EnergyArgs,
        #[command(flatten)]
        smoothing: SmoothingArgs,
        #[arg(long, default_value_t = 3.0)]
        p: f64,
        /// Sort the energies ascending before comparing.
        #[arg(long)]
        monotonic: bool,
        /// Write energy,exact,approx columns here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Occupation numbers of every level at the given energies.
    Occupancy {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        energies: EnergyArgs,
        #[command(flatten)]
        smoothing: SmoothingArgs,
        #[arg(long = "at", num_args = 1.., required = true, allow_negative_numbers = true)]
        at: Vec<f64>,
        /// Re-anneal each subsystem ordering with this budget (0: inherit).
        #[arg(long, default_value_t = 0)]
        reanneal: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inverse-temperature estimates: log-derivative, Gaussian fit, occupancies.
    Beta {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        energies: EnergyArgs,
        #[command(flatten)]
        smoothing: SmoothingArgs,
        /// Energies for the empirical estimator.
        #[arg(long = "at", num_args = 1.., allow_negative_numbers = true)]
        at: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        reanneal: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brute-force reference computations.
    Oracle {
        #[command(subcommand)]
        what: OracleCommand,
    },
    /// Check tables and spectra against the brute-force oracle.
    Validate {
        #[command(flatten)]
        system: SystemArgs,
        /// Number of seeded energy vectors to check.
        #[arg(long, default_value_t = 3)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the run configuration implied by the flags as canonical JSON.
    Config {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        energies: EnergyArgs,
        #[command(flatten)]
        smoothing: SmoothingArgs,
    },
    /// Cache maintenance.
    Cache {
        #[command(subcommand)]
        what: CacheCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Exact spectrum by enumeration.
    Spectrum {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        energies: EnergyArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distribution of U_ℓ over all configurations.
    Udist {
        #[command(flatten)]
        system: SystemArgs,
        /// Fourier index ℓ.
        #[arg(long, visible_alias = "l")]
        ell: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum CacheCommand {
    /// Remove unpinned entries by age and size; quarantine corrupt ones.
    Gc {
        #[command(flatten)]
        cache: CacheArgs,
        #[arg(long)]
        max_age_secs: Option<u64>,
        #[arg(long)]
        max_bytes: Option<u64>,
    },
    /// Verify every checksum; exits with status 3 if any entry is corrupt.
    Verify {
        #[command(flatten)]
        cache: CacheArgs,
    },
    /// List entries.
    List {
        #[command(flatten)]
        cache: CacheArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CostArg {
    /// Σ A_q over the sectors.
    #[value(name = "A", alias = "a")]
    A,
    /// Σ P_q over the sectors.
    #[value(name = "P", alias = "p")]
    P,
    /// Σ (A_q + P_q) with unit weights.
    Mix,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormArg {
    Counts,
    Probability,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Bimodal,
}

#[derive(Debug, Args, Clone)]
pub struct CacheArgs {
    /// Cache directory.
    #[arg(long, env = CACHE_DIR_ENV)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct SystemArgs {
    /// Number of single-body levels.
    #[arg(long = "L")]
    pub l: Option<u32>,
    /// Particle number (table truncation for `expand`).
    #[arg(long = "N")]
    pub n: Option<u32>,
    /// At most one particle per level.
    #[arg(long, conflicts_with_all = ["boson", "cap"])]
    pub fermion: bool,
    /// Up to N particles per level (default).
    #[arg(long, conflicts_with = "cap")]
    pub boson: bool,
    /// Up to R particles per level.
    #[arg(long, visible_alias = "R")]
    pub cap: Option<u32>,
    /// Keep exactly these sectors (q > 1), e.g. `10,5,4,2`.
    #[arg(long, num_args = 0.., value_delimiter = ',', conflicts_with = "drop_top")]
    pub sectors: Option<Vec<u32>>,
    /// Drop the k largest sectors.
    #[arg(long)]
    pub drop_top: Option<usize>,
    /// Read the system from a run configuration JSON; other system, energy
    /// and smoothing flags are then ignored.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct EnergyArgs {
    /// One energy per line.
    #[arg(long, conflicts_with = "preset")]
    pub energies: Option<PathBuf>,
    /// Mean of generated Gaussian energies.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub mu: f64,
    /// Standard deviation of generated energies.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Seed of generated energies.
    #[arg(long = "energy-seed", default_value_t = 0)]
    pub energy_seed: u64,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

#[derive(Debug, Args, Clone)]
pub struct SmoothingArgs {
    /// Absolute kernel width Γ.
    #[arg(long, conflicts_with = "gamma_delta")]
    pub gamma: Option<f64>,
    /// Kernel width as a multiple of the exact spectrum's mean spacing Δ.
    #[arg(long, default_value_t = 1000.0)]
    pub gamma_delta: f64,
    #[arg(long, default_value_t = 1000)]
    pub points: usize,
}

impl EnergyArgs {
    pub fn source(&self) -> EnergySource {
        if let Some(path) = &self.energies {
            EnergySource::File { path: path.clone() }
        } else if let Some(Preset::Bimodal) = self.preset {
            EnergySource::Bimodal {
                sigma: self.sigma,
                seed: self.energy_seed,
            }
        } else {
            EnergySource::Gaussian {
                mu: self.mu,
                sigma: self.sigma,
                seed: self.energy_seed,
            }
        }
    }
}

impl SmoothingArgs {
    pub fn spec(&self) -> GammaSpec {
        match self.gamma {
            Some(g) => GammaSpec::Absolute(g),
            None => GammaSpec::TimesSpacing(self.gamma_delta),
        }
    }
}

impl SystemArgs {
    /// The run configuration these flags describe.
    pub fn config(
        &self,
        energies: Option<&EnergyArgs>,
        smoothing: Option<&SmoothingArgs>,
    ) -> Result<RunConfig> {
        if let Some(path) = &self.config {
            return RunConfig::from_json(&std::fs::read_to_string(path)?);
        }
        let defaults = RunConfig::default();
        let l = self
            .l
            .ok_or_else(|| mbdos::Error::InvalidArgument("--L is required".into()))?;
        let n = self
            .n
            .ok_or_else(|| mbdos::Error::InvalidArgument("--N is required".into()))?;
        let statistics = if self.fermion {
            Statistics::Fermion
        } else if let Some(r) = self.cap {
            Statistics::Cap(r)
        } else {
            Statistics::Boson
        };
        let truncation = match (&self.sectors, self.drop_top) {
            (Some(qs), _) => Truncation::Keep(qs.clone()),
            (None, Some(k)) => Truncation::DropTop(k),
            (None, None) => Truncation::All,
        };
        let config = RunConfig {
            l,
            n,
            statistics,
            truncation,
            energies: energies
                .map(EnergyArgs::source)
                .unwrap_or(defaults.energies),
            gamma: smoothing.map(SmoothingArgs::spec).unwrap_or(defaults.gamma),
            grid_points: smoothing.map(|s| s.points).unwrap_or(defaults.grid_points),
            ..defaults
        };
        config.validate()?;
        Ok(config)
    }
}
