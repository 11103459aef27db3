//! End-to-end checks across modules through the public API only.

use mbdos::analysis::{kde, lp_distance, GammaSpec, Grid, Normalization};
use mbdos::cache::Cache;
use mbdos::config::gaussian_energies;
use mbdos::genfunc::{expand, expand_chunked, CoefficientTable};
use mbdos::oracle::{count_configs, exact_mbdos};
use mbdos::ordering::{anneal, apply_permutation, CostSpec, Metric, Schedule};
use mbdos::resummation::truncated_spectrum;
use mbdos::sectors::sector_partition;
use mbdos::Statistics;

#[test]
fn full_tables_reproduce_enumeration() {
    for (l, n, stats) in [
        (6, 3, Statistics::Fermion),
        (8, 4, Statistics::Boson),
        (9, 4, Statistics::Cap(2)),
        (10, 5, Statistics::Fermion),
    ] {
        let cap = stats.cap(n);
        let eps = gaussian_energies(l, 0.0, 1.0, u64::from(l)).unwrap();
        let all = sector_partition(l).unwrap().nontrivial_qs();
        let table = expand(l, n, cap, &all).unwrap();
        let exact = exact_mbdos(l, n, cap, &eps).unwrap();
        let resummed = truncated_spectrum(&table, &eps, n).unwrap();
        assert_eq!(resummed.total(), exact.total(), "L={l} N={n}");
        let dev = resummed.max_deviation(&exact).unwrap();
        assert!(dev < 1e-9, "L={l} N={n}: deviation {dev}");
    }
}

#[test]
fn truncation_conserves_configurations() {
    let (l, n, cap) = (12, 4, 2);
    let flow = sector_partition(l).unwrap();
    let expected = count_configs(l, n, cap);
    let mut previous = usize::MAX;
    for k in 0..=flow.nontrivial_qs().len() {
        let table = expand(l, n, cap, &flow.drop_top(k)).unwrap();
        assert_eq!(table.total(n), expected, "dropping {k}");
        let keys = table.slice(n).len();
        assert!(
            keys <= previous,
            "dropping {k}: {keys} keys after {previous}"
        );
        previous = keys;
    }
    assert_eq!(previous, 1);
}

#[test]
fn chunked_expansion_matches_sequential() {
    let sectors = [8, 4, 2];
    let whole = expand(8, 4, 4, &sectors).unwrap();
    for chunks in [2, 3, 8] {
        assert_eq!(
            expand_chunked(8, 4, 4, &sectors, chunks).unwrap(),
            whole,
            "{chunks} chunks"
        );
    }
}

#[test]
fn serialized_tables_detect_corruption() {
    let table = expand(10, 3, 1, &[5, 2]).unwrap();
    let bytes = table.to_bytes();
    assert_eq!(CoefficientTable::from_bytes(&bytes).unwrap(), table);
    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x10;
    let err = CoefficientTable::from_bytes(&flipped).unwrap_err();
    assert_eq!(err.kind(), "checksum");
}

#[test]
fn cached_tables_survive_reopening() {
    let dir = tempfile::tempdir().unwrap();
    let computed = {
        let mut cache = Cache::open(dir.path()).unwrap();
        let t = cache.table(9, 3, 3, &[9, 3], Some(3)).unwrap();
        assert_eq!(cache.stats().misses, 1);
        t
    };
    let mut cache = Cache::open(dir.path()).unwrap();
    let loaded = cache.table(9, 3, 3, &[9, 3], None).unwrap();
    assert_eq!(cache.stats().hits, 1);
    assert_eq!(loaded, computed);
    assert_eq!(loaded, expand(9, 3, 3, &[9, 3]).unwrap());
    assert!(cache.verify().unwrap().is_empty());
}

#[test]
fn annealed_order_improves_truncated_density() {
    let (l, n) = (12, 4);
    let mut eps = gaussian_energies(l, 0.0, 1.0, 11).unwrap();
    eps.sort_by(f64::total_cmp);
    let keep = [4, 3, 2];
    let cost = CostSpec::sum(Metric::P, &[12, 6]);
    let schedule = Schedule {
        budget: 100_000,
        stop_factor: None,
        ..Schedule::default()
    };
    let result = anneal(&eps, &cost, &schedule, 0).unwrap();
    assert!(result.cost < result.initial_cost);
    let annealed_eps = apply_permutation(&eps, &result.perm);

    // Both orders share the exact spectrum; only the truncated one moves.
    let exact = exact_mbdos(l, n, 1, &eps).unwrap();
    let gamma = GammaSpec::TimesSpacing(1000.0).resolve(&exact).unwrap();
    let table = expand(l, n, 1, &keep).unwrap();
    let sorted = truncated_spectrum(&table, &eps, n).unwrap();
    let annealed = truncated_spectrum(&table, &annealed_eps, n).unwrap();
    let grid = Grid::covering(&[&exact, &sorted, &annealed], gamma, 1000).unwrap();
    let curve = |s| kde(s, gamma, grid.clone(), Normalization::Probability).unwrap();
    let reference = curve(&exact);
    let before = lp_distance(&curve(&sorted), &reference, 3.0).unwrap();
    let after = lp_distance(&curve(&annealed), &reference, 3.0).unwrap();
    assert!(after < before, "annealed {after} vs sorted {before}");
}
