//! Sparse filtering with information-plane instrumentation.
//!
//! The library trains a sparse filtering module `T = l2col(l2row(|WX|))` by
//! minimizing the l1 norm of the doubly l2-normalized representation, and
//! records per-iteration information-theoretic statistics of `T`: the binned
//! mutual information `I[X;T]` and the entropy `H[T]`, both in bits. Batches
//! of repeated runs are aggregated into information-plane trajectories and
//! exported as CSV and SVG.
//!
//! Modules:
//! - [`sf`] — the transform, its l1 objective, and the analytical gradient.
//! - [`infotheory`] — binning estimators for entropy, mutual information and
//!   KL divergence over multivariate samples.
//! - [`optim`] — L-BFGS with strong Wolfe line search, plus fixed-step batch
//!   gradient descent, with a per-iteration observer callback.
//! - [`datagen`] — seeded synthetic Gaussian data for the four simulations.
//! - [`harness`] — instrumented training runs, repetition batches, averaging.
//! - [`report`] — CSV export and SVG rendering of the trajectories.
//!
//! With the default `parallel` feature the repetitions of a batch run on a
//! rayon thread pool; disabling it falls back to a sequential loop with
//! identical results.

pub mod datagen;
pub mod error;
pub mod harness;
pub mod infotheory;
pub mod optim;
pub mod report;
pub mod sf;

pub use error::{Error, Result};
