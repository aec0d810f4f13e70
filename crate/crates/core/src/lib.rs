//! Estimation of hidden event counts from occurrence/observation dates.
//!
//! Observation delays are modelled through a time change: every calendar
//! day `s` after occurrence `t` contributes an observation exposure
//! `α_{t,s} = exp(x'_{t,s} γ)`, and the accumulated exposure is fed into a
//! fixed-scale distribution `Ũ`. Fitting the exposures by maximum likelihood
//! on the right-truncated count triangle gives the probability that an event
//! is still unobserved, and hence the number of hidden events.

#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod binning;
pub mod calendar;
pub mod chainladder;
pub mod counts;
pub mod likelihood;
pub mod predict;
pub mod simulate;
pub mod timechange;
