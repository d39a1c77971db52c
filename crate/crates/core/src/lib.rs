//! Numerical core for linking central-bank statement topics to yield-curve
//! factor moves.
//!
//! The crate is `no_std` (it needs `alloc`) and does no IO. Every stage takes
//! in-memory data and returns in-memory results:
//!
//! - [`textprep`]: tokenization, lemmatization, count matrix, TF-IDF.
//! - [`nmf`]: multiplicative-update NMF.
//! - [`coherence`]: UMass-style coherence and automatic topic-count selection.
//! - [`lda`]: collapsed Gibbs LDA.
//! - [`termstructure`]: Nelson-Siegel loadings, two-step OLS, Kalman filter and
//!   smoother, maximum likelihood.
//! - [`econometrics`]: daily event datasets and OLS with collinearity handling.
//! - [`optim`]: quasi-Newton minimizer with finite-difference gradients.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod coherence;
pub mod econometrics;
pub mod error;
pub mod lda;
pub mod nmf;
pub mod optim;
pub mod termstructure;
pub mod textprep;

pub use error::{Error, Result};
