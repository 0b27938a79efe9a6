//! Numerical toolkit for random walks and self-avoiding lattice paths pinned
//! by a multi-level potential above a hard wall.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernels`] builds symmetric step distributions (binomial, SOS, tabulated).
//! * [`potentials`] holds pinning sequences and the single-level decoupling.
//! * [`transfer`] evaluates constrained partition functions with a log-scaled
//!   transfer recursion and monitored height truncation.
//! * [`spectral`] produces localization certificates from the symmetrised
//!   transfer operator.
//! * [`certify`] runs the doubling induction for delocalization, threshold
//!   bracketing and phase scans.
//! * [`rw_oracle`] enumerates walk bridges exactly; it is the ground truth the
//!   transfer engine is tested against.
//! * [`saw`] enumerates weighted self-avoiding lattice paths with rigorous
//!   tail certificates.
//!
//! Data-parallel loops go through [`exec::Execution`]; with the default
//! `parallel` feature they run on rayon, otherwise sequentially.

pub mod certify;
pub mod error;
pub mod exec;
pub mod kernels;
pub mod potentials;
pub mod rw_oracle;
pub mod saw;
pub mod specs;
pub mod spectral;
pub mod transfer;

mod numeric;

pub use error::{Error, Result};
pub use exec::Execution;
pub use kernels::WalkKernel;
pub use potentials::PinningPotential;
pub use numeric::Interval;
