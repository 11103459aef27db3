use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use mbdos::analysis::{
    beta_boltzmann, beta_boltzmann_fit, beta_empirical, kde, lp_distance, system_spectrum,
    write_beta_csv, DensityCurve, GammaSpec, Grid, Normalization, OccupancyModel,
    SubsystemOrdering, Truncation,
};
use mbdos::cache::{Cache, EntryKind, KeepPolicy};
use mbdos::config::{gaussian_energies, RunConfig};
use mbdos::cyclotomic::transfer_matrix;
use mbdos::genfunc::{expand, CoefficientTable};
use mbdos::oracle::{count_configs, exact_mbdos, u_distribution};
use mbdos::ordering::{anneal_restarts, apply_permutation, CostSpec, CostTerm, Metric, Schedule};
use mbdos::resummation::truncated_spectrum;
use mbdos::sectors::SectorFlow;
use mbdos::{Count, WeightedSpectrum};

use crate::args::{
    CacheArgs, CacheCommand, Command, CostArg, EnergyArgs, NormArg, OracleCommand, SmoothingArgs,
    SystemArgs,
};
use crate::Failure;

type Outcome = std::result::Result<(), Failure>;

/// `println!` that reports a closed stdout as an error instead of panicking.
macro_rules! say {
    ($($arg:tt)*) => {
        writeln!(io::stdout(), $($arg)*)?
    };
}

/// Spectra agreeing to this absolute tolerance count as equal.
const SPECTRUM_TOLERANCE: f64 = 1e-9;

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Sectors { l, l_flag, cache } => sectors(l.or(l_flag).unwrap_or_default(), &cache),
        Command::Tmatrix { q, json, cache } => tmatrix(q, json, &cache),
        Command::Expand {
            system,
            out,
            checkpoint_every,
            pin,
            cache,
        } => expand_cmd(&system, out.as_deref(), checkpoint_every, pin, &cache),
        Command::Spectrum {
            system,
            table,
            energies,
            out,
            cache,
        } => spectrum(&system, table.as_deref(), &energies, out.as_deref(), &cache),
        Command::Optimize {
            energies,
            l,
            n,
            sectors,
            cost,
            budget,
            seed,
            f,
            restarts,
            out,
            trace,
        } => {
            let opts = OptimizeOptions {
                l,
                n,
                sectors,
                cost,
                budget,
                seed,
                f,
                restarts,
            };
            optimize(&energies, &opts, out.as_deref(), trace.as_deref())
        }
        Command::Kde {
            spectrum,
            system,
            energies,
            smoothing,
            normalize,
            out,
        } => kde_cmd(
            spectrum.as_deref(),
            &system,
            &energies,
            &smoothing,
            normalize,
            out.as_deref(),
        ),
        Command::Compare {
            system,
            energies,
            smoothing,
            p,
            monotonic,
            out,
        } => compare(&system, &energies, &smoothing, p, monotonic, out.as_deref()),
        Command::Occupancy {
            system,
            energies,
            smoothing,
            at,
            reanneal,
            out,
        } => occupancy(
            &system,
            &energies,
            &smoothing,
            &at,
            reanneal,
            out.as_deref(),
        ),
        Command::Beta {
            system,
            energies,
            smoothing,
            at,
            reanneal,
            out,
        } => beta(
            &system,
            &energies,
            &smoothing,
            &at,
            reanneal,
            out.as_deref(),
        ),
        Command::Oracle { what } => oracle(what),
        Command::Validate {
            system,
            trials,
            seed,
        } => validate(&system, trials, seed),
        Command::Config {
            system,
            energies,
            smoothing,
        } => {
            write!(
                io::stdout(),
                "{}",
                system.config(Some(&energies), Some(&smoothing))?.to_json()
            )?;
            Ok(())
        }
        Command::Cache { what } => cache_cmd(what),
    }
}

/// Runs `f` on the output file, or on standard output when none is given.
fn emit(out: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> mbdos::Result<()>) -> Outcome {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

/// One-line JSON summary: on standard output when the data went to a file,
/// otherwise on standard error so standard output stays plain CSV.
fn report(out: Option<&Path>, summary: Value) -> Outcome {
    if out.is_some() {
        say!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(())
}

fn open_cache(args: &CacheArgs) -> mbdos::Result<Option<Cache>> {
    args.cache.as_ref().map(Cache::open).transpose()
}

fn sectors(l: u32, cache: &CacheArgs) -> Outcome {
    let compute = || Ok(SectorFlow::new(l)?.to_json());
    let value = match open_cache(cache)? {
        Some(mut c) => c.json(EntryKind::SectorFlow, json!({ "L": l }), compute)?,
        None => compute()?,
    };
    say!(
        "{}",
        serde_json::to_string_pretty(&value).map_err(mbdos::Error::from)?
    );
    Ok(())
}

fn tmatrix(q: u32, as_json: bool, cache: &CacheArgs) -> Outcome {
    let compute = || {
        let t = transfer_matrix(q)?;
        Ok(json!({ "q": q, "phi": t.phi(), "rows": t.to_rows() }))
    };
    let value = match open_cache(cache)? {
        Some(mut c) => c.json(EntryKind::Tmatrix, json!({ "q": q }), compute)?,
        None => compute()?,
    };
    if as_json {
        say!("{value}");
        return Ok(());
    }
    let rows: Vec<Vec<i64>> =
        serde_json::from_value(value["rows"].clone()).map_err(mbdos::Error::from)?;
    let width = rows
        .iter()
        .flatten()
        .map(|x| x.to_string().len())
        .max()
        .unwrap_or(1);
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:>width$}")).collect();
        say!("{}", cells.join(" "));
    }
    Ok(())
}

/// The full table for the configuration, through the cache when one is given.
fn table_for(
    cfg: &RunConfig,
    cache: Option<&mut Cache>,
    checkpoint_every: Option<u32>,
) -> mbdos::Result<CoefficientTable> {
    let sectors = cfg.sectors()?;
    match cache {
        Some(c) => c.table(cfg.l, cfg.n, cfg.cap(), &sectors, checkpoint_every),
        None => expand(cfg.l, cfg.n, cfg.cap(), &sectors),
    }
}

fn expand_cmd(
    system: &SystemArgs,
    out: Option<&Path>,
    checkpoint_every: Option<u32>,
    pin: Option<String>,
    cache: &CacheArgs,
) -> Outcome {
    let cfg = system.config(None, None)?;
    let mut cache = open_cache(cache)?;
    if let (Some(c), Some(run)) = (cache.as_mut(), pin) {
        c.pin_as(run);
    }
    let table = table_for(&cfg, cache.as_mut(), checkpoint_every)?;
    if let Some(path) = out {
        std::fs::write(path, table.to_bytes())?;
    }
    let p = table.params();
    let mut summary = json!({
        "L": p.l,
        "N": p.n_max,
        "cap": p.cap,
        "sectors": p.sectors,
        "terms": table.len(),
        "states": table.total(cfg.n).to_string(),
        "hash": p.content_hash(),
    });
    if let Some(c) = &cache {
        summary["cache"] = serde_json::to_value(c.stats()).map_err(mbdos::Error::from)?;
    }
    say!("{summary}");
    Ok(())
}

fn spectrum(
    system: &SystemArgs,
    table: Option<&Path>,
    energies: &EnergyArgs,
    out: Option<&Path>,
    cache: &CacheArgs,
) -> Outcome {
    let (cfg, table) = match table {
        Some(path) => {
            let t = CoefficientTable::from_bytes(&std::fs::read(path)?)?;
            let mut sys = system.clone();
            sys.l.get_or_insert(t.params().l);
            sys.n.get_or_insert(t.params().n_max);
            if sys.cap.is_none() && !sys.fermion {
                sys.cap = Some(t.params().cap);
            }
            sys.sectors = Some(t.params().sectors.clone());
            sys.drop_top = None;
            (sys.config(Some(energies), None)?, t)
        }
        None => {
            let cfg = system.config(Some(energies), None)?;
            let mut cache = open_cache(cache)?;
            let t = table_for(&cfg, cache.as_mut(), None)?;
            (cfg, t)
        }
    };
    let eps = cfg.energies()?;
    let spec = truncated_spectrum(&table, &eps, cfg.n)?;
    emit(out, |w| spec.write_csv(w))?;
    report(
        out,
        json!({
            "L": cfg.l,
            "N": cfg.n,
            "sectors": table.params().sectors,
            "energies": cfg.energies,
            "levels": spec.len(),
            "states": spec.total().to_string(),
        }),
    )?;
    Ok(())
}

struct OptimizeOptions {
    l: u32,
    n: u32,
    sectors: Vec<u32>,
    cost: CostArg,
    budget: u64,
    seed: u64,
    f: f64,
    restarts: usize,
}

fn optimize(
    energies: &EnergyArgs,
    o: &OptimizeOptions,
    out: Option<&Path>,
    trace: Option<&Path>,
) -> Outcome {
    let source = energies.source();
    let eps = source.energies(o.l, o.n)?;
    let spec = match o.cost {
        CostArg::A => CostSpec::sum(Metric::A, &o.sectors),
        CostArg::P => CostSpec::sum(Metric::P, &o.sectors),
        CostArg::Mix => CostSpec {
            terms: o
                .sectors
                .iter()
                .flat_map(|&q| {
                    [Metric::A, Metric::P].map(|metric| CostTerm {
                        metric,
                        q,
                        weight: 1.0,
                    })
                })
                .collect(),
        },
    };
    let schedule = Schedule {
        budget: o.budget,
        stop_factor: (o.f > 0.0).then_some(o.f),
        ..Schedule::default()
    };
    let result = anneal_restarts(&eps, &spec, &schedule, o.seed, o.restarts)?;
    let ordered = apply_permutation(&eps, &result.perm);
    if let Some(path) = trace {
        emit(Some(path), |w| {
            writeln!(w, "evaluations,temperature,cost,best")?;
            for t in &result.trace {
                writeln!(
                    w,
                    "{},{:?},{:?},{:?}",
                    t.evaluations, t.temperature, t.cost, t.best
                )?;
            }
            Ok(())
        })?;
    }
    if let Some(path) = out {
        emit(Some(path), |w| {
            for e in &ordered {
                writeln!(w, "{e:?}")?;
            }
            Ok(())
        })?;
    }
    say!(
        "{}",
        json!({
            "cost_spec": spec.to_string(),
            "energies": source,
            "seed": o.seed,
            "chain_seed": result.seed,
            "restarts": o.restarts,
            "budget": o.budget,
            "permutation": result.perm,
            "initial_cost": result.initial_cost,
            "cost": result.cost,
            "evaluations": result.evaluations,
            "stop": result.stop,
        })
    );
    Ok(())
}

/// Kernel width for a system: `Γ` directly, or a multiple of the exact
/// spectrum's mean level spacing.
fn resolve_gamma(
    cfg: &RunConfig,
    eps: &[f64],
    exact: Option<&WeightedSpectrum>,
) -> mbdos::Result<f64> {
    match (cfg.gamma, exact) {
        (GammaSpec::Absolute(_), _) => cfg.gamma.resolve(&WeightedSpectrum::default()),
        (_, Some(s)) => cfg.gamma.resolve(s),
        (_, None) => cfg
            .gamma
            .resolve(&system_spectrum(eps, cfg.n, cfg.cap(), &Truncation::All)?),
    }
}

fn kde_cmd(
    spectrum: Option<&Path>,
    system: &SystemArgs,
    energies: &EnergyArgs,
    smoothing: &SmoothingArgs,
    normalize: NormArg,
    out: Option<&Path>,
) -> Outcome {
    let norm = match normalize {
        NormArg::Counts => Normalization::Counts,
        NormArg::Probability => Normalization::Probability,
    };
    let (spec, gamma, points, mut summary) = match spectrum {
        Some(path) => {
            let spec = WeightedSpectrum::read_csv(io::BufReader::new(File::open(path)?))?;
            let gamma = smoothing.spec().resolve(&spec)?;
            (spec, gamma, smoothing.points, json!({ "spectrum": path }))
        }
        None => {
            let cfg = system.config(Some(energies), Some(smoothing))?;
            let eps = cfg.energies()?;
            let spec = system_spectrum(&eps, cfg.n, cfg.cap(), &cfg.truncation)?;
            let exact = (cfg.truncation == Truncation::All).then_some(&spec);
            let gamma = resolve_gamma(&cfg, &eps, exact)?;
            let summary = json!({ "L": cfg.l, "N": cfg.n, "sectors": cfg.sectors()?, "energies": cfg.energies });
            (spec, gamma, cfg.grid_points, summary)
        }
    };
    let grid = Grid::covering(&[&spec], gamma, points)?;
    let curve = kde(&spec, gamma, grid, norm)?;
    emit(out, |w| curve.write_csv(w))?;
    summary["gamma"] = json!(gamma);
    summary["integral"] = json!(curve.integral());
    report(out, summary)?;
    Ok(())
}

fn compare(
    system: &SystemArgs,
    energies: &EnergyArgs,
    smoothing: &SmoothingArgs,
    p: f64,
    monotonic: bool,
    out: Option<&Path>,
) -> Outcome {
    let cfg = system.config(Some(energies), Some(smoothing))?;
    let mut eps = cfg.energies()?;
    if monotonic {
        eps.sort_by(f64::total_cmp);
    }
    let exact = system_spectrum(&eps, cfg.n, cfg.cap(), &Truncation::All)?;
    let approx = system_spectrum(&eps, cfg.n, cfg.cap(), &cfg.truncation)?;
    let gamma = resolve_gamma(&cfg, &eps, Some(&exact))?;
    let grid = Grid::covering(&[&exact, &approx], gamma, cfg.grid_points)?;
    let a = kde(&exact, gamma, grid, Normalization::Probability)?;
    let b = kde(&approx, gamma, grid, Normalization::Probability)?;
    let distance = lp_distance(&a, &b, p)?;
    emit(out, |w| write_pair(&a, &b, w))?;
    report(
        out,
        json!({
            "L": cfg.l,
            "N": cfg.n,
            "sectors": cfg.sectors()?,
            "energies": cfg.energies,
            "monotonic": monotonic,
            "gamma": gamma,
            "p": p,
            "distance": distance,
        }),
    )?;
    Ok(())
}

fn write_pair(a: &DensityCurve, b: &DensityCurve, w: &mut dyn Write) -> mbdos::Result<()> {
    writeln!(w, "energy,exact,approx")?;
    for (i, (x, y)) in a.values.iter().zip(&b.values).enumerate() {
        writeln!(w, "{:?},{x:?},{y:?}", a.grid.point(i))?;
    }
    Ok(())
}

fn subsystem_ordering(reanneal: u64, seed: u64) -> SubsystemOrdering {
    if reanneal == 0 {
        SubsystemOrdering::Inherit
    } else {
        SubsystemOrdering::Anneal {
            budget: reanneal,
            seed,
        }
    }
}

fn occupancy(
    system: &SystemArgs,
    energies: &EnergyArgs,
    smoothing: &SmoothingArgs,
    at: &[f64],
    reanneal: u64,
    out: Option<&Path>,
) -> Outcome {
    let cfg = system.config(Some(energies), Some(smoothing))?;
    let eps = cfg.energies()?;
    let gamma = resolve_gamma(&cfg, &eps, None)?;
    let ordering = subsystem_ordering(reanneal, cfg.seed);
    let model =
        OccupancyModel::with_ordering(&eps, cfg.n, cfg.cap(), &cfg.truncation, gamma, ordering)?;
    emit(out, |w| {
        writeln!(w, "energy,level,epsilon,occupancy")?;
        for &e in at {
            for (k, o) in model.occupancies(e).iter().enumerate() {
                let o = o.map(|o| format!("{o:?}")).unwrap_or_default();
                writeln!(w, "{e:?},{k},{:?},{o}", eps[k])?;
            }
        }
        Ok(())
    })?;
    report(
        out,
        json!({
            "L": cfg.l,
            "N": cfg.n,
            "sectors": cfg.sectors()?,
            "energies": cfg.energies,
            "gamma": gamma,
            "subsystems": ordering,
        }),
    )?;
    Ok(())
}

fn beta(
    system: &SystemArgs,
    energies: &EnergyArgs,
    smoothing: &SmoothingArgs,
    at: &[f64],
    reanneal: u64,
    out: Option<&Path>,
) -> Outcome {
    let cfg = system.config(Some(energies), Some(smoothing))?;
    let eps = cfg.energies()?;
    let spec = system_spectrum(&eps, cfg.n, cfg.cap(), &cfg.truncation)?;
    let exact = (cfg.truncation == Truncation::All).then_some(&spec);
    let gamma = resolve_gamma(&cfg, &eps, exact)?;
    let grid = Grid::covering(&[&spec], gamma, cfg.grid_points)?;
    let curve = kde(&spec, gamma, grid, Normalization::Counts)?;
    let mut estimates = vec![beta_boltzmann(&curve)];
    let mut summary = json!({
        "L": cfg.l,
        "N": cfg.n,
        "sectors": cfg.sectors()?,
        "energies": cfg.energies,
        "gamma": gamma,
    });
    match beta_boltzmann_fit(&curve) {
        Ok((fit, est)) => {
            summary["gaussian_fit"] =
                json!({ "mu": fit.mu, "sigma": fit.sigma, "amplitude": fit.amplitude });
            estimates.push(est);
        }
        Err(e) => summary["gaussian_fit"] = json!({ "error": e.to_string() }),
    }
    if !at.is_empty() {
        let ordering = subsystem_ordering(reanneal, cfg.seed);
        let model = OccupancyModel::with_ordering(
            &eps,
            cfg.n,
            cfg.cap(),
            &cfg.truncation,
            gamma,
            ordering,
        )?;
        estimates.push(beta_empirical(&model, at));
        summary["subsystems"] = json!(ordering);
    }
    emit(out, |w| write_beta_csv(&estimates, w))?;
    report(out, summary)?;
    Ok(())
}

fn oracle(what: OracleCommand) -> Outcome {
    match what {
        OracleCommand::Spectrum {
            system,
            energies,
            out,
        } => {
            let cfg = system.config(Some(&energies), None)?;
            let eps = cfg.energies()?;
            let spec = exact_mbdos(cfg.l, cfg.n, cfg.cap(), &eps)?;
            emit(out.as_deref(), |w| spec.write_csv(w))?;
            report(
                out.as_deref(),
                json!({ "L": cfg.l, "N": cfg.n, "cap": cfg.cap(), "energies": cfg.energies, "states": spec.total().to_string() }),
            )?;
        }
        OracleCommand::Udist { system, ell, out } => {
            let cfg = system.config(None, None)?;
            let dist = u_distribution(cfg.l, cfg.n, cfg.cap(), ell)?;
            emit(out.as_deref(), |w| {
                writeln!(w, "re,im,count")?;
                for (z, c) in &dist {
                    writeln!(w, "{:?},{:?},{c}", z.re, z.im)?;
                }
                Ok(())
            })?;
            report(
                out.as_deref(),
                json!({ "L": cfg.l, "N": cfg.n, "cap": cfg.cap(), "ell": ell, "points": dist.len() }),
            )?;
        }
    }
    Ok(())
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Checks the full-sector table and the resummed spectrum against brute
/// force enumeration; a truncated sector set is also checked against the
/// projection of the full table.
fn validate(system: &SystemArgs, trials: u64, seed: u64) -> Outcome {
    let cfg = system.config(None, None)?;
    let (l, n, cap) = (cfg.l, cfg.n, cfg.cap());
    let all = SectorFlow::new(l)?.nontrivial_qs();
    let mut failures = Vec::new();

    say!("validate L={l} N={n} R={cap}");
    let states = count_configs(l, n, cap);
    say!("states: {states}");

    let table = expand(l, n, cap, &all)?;
    let slice = table.slice(n);
    let all_ones = slice.iter().all(|(_, c)| *c == Count::ONE);
    let max = slice
        .iter()
        .map(|(_, c)| c.clone())
        .max()
        .unwrap_or(Count::ZERO);
    say!(
        "table: {} terms at N={n} over sectors {all:?}, {}",
        slice.len(),
        if all_ones {
            "counts all 1".to_string()
        } else {
            format!("max count {max}")
        }
    );
    if !all_ones {
        failures.push("full-sector table has repeated keys");
    }

    let totals_ok = (0..=n).all(|m| table.total(m) == count_configs(l, m, cap));
    say!("totals 0..={n}: {}", pass(totals_ok));
    if !totals_ok {
        failures.push("table totals differ from configuration counts");
    }

    let mut worst = 0.0f64;
    let mut spectra_ok = true;
    for s in seed..seed.saturating_add(trials) {
        let eps = gaussian_energies(l, 0.0, 1.0, s)?;
        let exact = exact_mbdos(l, n, cap, &eps)?;
        match truncated_spectrum(&table, &eps, n)?.max_deviation(&exact) {
            Ok(d) => {
                worst = worst.max(d);
                spectra_ok &= d <= SPECTRUM_TOLERANCE;
            }
            Err(_) => spectra_ok = false,
        }
    }
    say!(
        "spectrum match: {} ({trials} gaussian vectors, seeds {seed}..{}, max deviation {worst:e})",
        pass(spectra_ok),
        seed.saturating_add(trials)
    );
    if !spectra_ok {
        failures.push("resummed spectrum differs from enumeration");
    }

    let kept = cfg.sectors()?;
    if kept != all {
        let direct = expand(l, n, cap, &kept)?;
        let ok = direct == table.project(&kept)?;
        say!("projection onto {kept:?}: {}", pass(ok));
        if !ok {
            failures.push("truncated table differs from the projected full table");
        }
    }

    if failures.is_empty() {
        say!("validate: PASS");
        Ok(())
    } else {
        say!("validate: FAIL");
        Err(Failure::Validation(failures.join("; ")))
    }
}

fn cache_cmd(what: CacheCommand) -> Outcome {
    let dir_of = |args: &CacheArgs| -> mbdos::Result<PathBuf> {
        args.cache.clone().ok_or_else(|| {
            mbdos::Error::InvalidArgument("--cache (or MBDOS_CACHE_DIR) is required".into())
        })
    };
    match what {
        CacheCommand::Gc {
            cache,
            max_age_secs,
            max_bytes,
        } => {
            let mut c = Cache::open(dir_of(&cache)?)?;
            let report = c.gc(&KeepPolicy {
                max_age_secs,
                max_total_bytes: max_bytes,
            })?;
            say!(
                "{}",
                serde_json::to_string(&report).map_err(mbdos::Error::from)?
            );
        }
        CacheCommand::Verify { cache } => {
            let mut c = Cache::open(dir_of(&cache)?)?;
            let bad = c.verify()?;
            say!(
                "{}",
                json!({ "entries": c.manifest().entries.len(), "corrupt": bad })
            );
            if !bad.is_empty() {
                return Err(Failure::Corrupt(format!(
                    "{} corrupt entries quarantined",
                    bad.len()
                )));
            }
        }
        CacheCommand::List { cache } => {
            let c = Cache::open(dir_of(&cache)?)?;
            say!(
                "{}",
                serde_json::to_string_pretty(c.manifest()).map_err(mbdos::Error::from)?
            );
        }
    }
    Ok(())
}
