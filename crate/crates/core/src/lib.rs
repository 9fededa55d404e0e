//! Numerical machinery for mixing of piecewise expanding skew products.
//!
//! The toolkit works with maps `F(x, y) = (f(x), y + τ(x))` on the two-torus,
//! where `f` is a piecewise `C^{1+α}` expanding circle map and `τ` a piecewise
//! `C¹` roof. It provides:
//!
//! * branch-level representations of `f` and its inverse branch trees
//!   ([`dynamics`]),
//! * grid densities with the log-modulus / argument regularity functionals
//!   ([`grid`]),
//! * the twisted transfer operators `L_b` acting on vertical Fourier modes
//!   ([`transfer`]),
//! * the standard-pair / standard-family calculus with chopping and weight
//!   bookkeeping ([`families`]),
//! * derivative-cone transversality detection and witness search
//!   ([`transversality`]),
//! * the oscillatory-cancellation weight-reduction engine ([`cancellation`]),
//! * end-to-end correlation experiments and stretched-exponential fits
//!   ([`correlation`]).
//!
//! Everything is deterministic and reentrant: all domain values are immutable
//! after construction and operations are pure.

pub mod cancellation;
pub mod config;
pub mod correlation;
pub mod dynamics;
pub mod error;
pub mod families;
pub mod fit;
pub mod formula;
pub mod grid;
pub mod interval;
pub mod transfer;
pub mod transversality;

pub use error::{Error, Result};
pub use interval::Interval;

/// Complex scalar used throughout.
pub type Complex = num_complex::Complex<f64>;
