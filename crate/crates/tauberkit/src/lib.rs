//! Quantitative Tauberian remainders: weight sequences, compactly supported
//! test functions with controlled Fourier decay, sandwich bounds, rate
//! optimization and Berry–Esseen style verification.

pub mod berry_esseen;
pub mod error;
pub mod expr;
pub mod growth;
pub mod numerics;
pub mod rates;
pub mod rule;
pub mod tauber;
pub mod testfn;

pub use error::{Error, ErrorFamily, Result};
