//! Training-free data valuation with the complexity-gap (CG) score.
//!
//! For a binary-labelled set of unit-norm inputs, the CG score of instance `i`
//! is the drop in the data-complexity measure `yᵀ H⁻¹ y` when `i` is removed,
//! where `H` is the infinite-width two-layer ReLU Gram matrix. Every
//! leave-one-out inverse is read from a single full inverse through the Schur
//! complement, so scoring all `n` instances costs one `O(n³)` inversion.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`dataset`] | labelled datasets, normalization, CSV I/O, label noise |
//! | [`cgm1`] | CGM1 / CGH1 binary formats |
//! | [`synth`] | Gaussian benchmarks |
//! | [`kernel`] | ReLU arc-cosine kernel and Gram matrices |
//! | [`linalg`] | Cholesky inversion and leave-one-out blocks |
//! | [`scoring`] | CG, CG′, partial scores and diagnostics per instance |
//! | [`multiclass`] | one-vs-rest views and stochastic subsampled scoring |
//! | [`analysis`] | correlations, noise detection, pruning, spectra |
//! | [`report`] | score CSV, JSON sidecar and report schema |
//! | [`cli`] | the `cgscore` command-line tool |

pub mod analysis;
pub mod cgm1;
pub mod cli;
pub mod dataset;
pub mod kernel;
pub mod linalg;
pub mod multiclass;
pub mod report;
pub mod rng;
pub mod scoring;
pub mod synth;

pub use dataset::{Dataset, NoiseMask};
pub use kernel::{BinaryView, GramMatrix};
pub use linalg::InverseGram;
pub use multiclass::{ScoreTable, StochasticConfig};
pub use scoring::ScoreRecord;
