//! A laboratory for the classical criteria implying the central limit
//! theorem and the weak invariance principle for stationary processes:
//! martingale-coboundary decomposition in L1, the projective criterion, and
//! the Maxwell-Woodroffe condition.
//!
//! The model is a parameterized function on a Bernoulli shift, built from
//! Rademacher signs and a family of quasi-invariant sets. Each criterion
//! reduces to the convergence of an explicitly classifiable series, so the
//! crate can decide them symbolically ([`criteria`]), realize the model as an
//! exactly simulatable product space ([`realization`]), and validate the
//! verdicts by Monte Carlo against combinatorial oracles ([`estimator`]).
//!
//! ```
//! use invariance_lab::family::{Preset, SequenceFamily};
//! use invariance_lab::criteria::{criteria_table, theorem_row, Holds};
//!
//! let family = SequenceFamily::preset(Preset::Ce1, 8);
//! let table = criteria_table(&family, Some(&theorem_row(Preset::Ce1))).unwrap();
//! assert_eq!(table[0].holds, Holds::Yes); // square-integrability
//! ```

pub mod cli;
pub mod criteria;
pub mod guide;
pub mod error;
pub mod estimator;
pub mod family;
pub mod realization;
pub mod report;

pub use cli::run;
pub use error::{Error, Result};
