//! Exact and controllably truncated many-body densities of states for
//! systems of identical particles.
//!
//! The many-body energies `E_n = Σ_k n_k ε_k` are rewritten as a sum over
//! discrete Fourier modes of the occupation string. The modes group into
//! q-sectors; each sector's values are exact elements of a cyclotomic ring
//! whose coordinates (the *invariants*) label degeneracy classes. A sparse
//! generating function counts configurations per invariant tuple once and for
//! all, independently of the single-body energies, and a cheap re-summation
//! turns those counts into a spectrum. Dropping the largest sectors merges
//! classes and yields a coarser spectrum at combinatorially lower cost.
//!
//! Module map:
//!
//! * [`cyclotomic`]: totients, cyclotomic polynomials, transfer matrices,
//!   Frobenius maps.
//! * [`sectors`]: q-sector partition, Galois groups, sector flow, folding.
//! * [`oracle`]: brute-force enumeration used as ground truth.
//! * [`genfunc`]: generating-function expansion into coefficient tables.
//! * [`resummation`]: tables plus single-body energies to spectra.
//! * [`ordering`]: sector scores and simulated annealing over orderings.
//! * [`analysis`]: KDE, norms, occupancies and inverse temperatures.
//! * [`cache`]: content-addressed persistent table cache.

pub mod analysis;
pub mod cache;
pub mod config;
pub mod count;
pub mod cyclotomic;
pub mod error;
pub mod genfunc;
pub mod oracle;
pub mod ordering;
pub mod resummation;
pub mod sectors;
pub mod spectrum;

pub use count::Count;
pub use error::{Error, Result};
pub use oracle::Statistics;
pub use spectrum::WeightedSpectrum;

// The book's chapters are compiled and run as doctests so that its examples
// stay in sync with the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/sectors.md")]
    mod sectors {}
    #[doc = include_str!("../../../book/src/tables.md")]
    mod tables {}
    #[doc = include_str!("../../../book/src/resummation.md")]
    mod resummation {}
    #[doc = include_str!("../../../book/src/ordering.md")]
    mod ordering {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
    #[doc = include_str!("../../../book/src/caching.md")]
    mod caching {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
