//! Weighted structural-balance analysis of stock correlation networks.
//!
//! The pipeline runs price panel → log-returns → windowed Pearson
//! correlation → signed weighted complete network → Metropolis dynamics
//! over link signs and mean-field self-consistency → critical temperature
//! per window.
//!
//! Every triangle `(i, j, k)` carries the weight
//! `J_ijk = |C_ij| |C_jk| |C_ki|` and the energy
//! `-J_ijk s_ij s_jk s_ki`. Only the signs evolve; weights are quenched.

// `!(x > 0.0)` deliberately rejects NaN; quadrature nodes are quoted in full.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod cli;
pub mod error;
pub mod ingest;
pub mod meanfield;
pub mod network;
pub mod numfmt;
pub mod simulate;

pub use error::{Error, Result};
pub use ingest::{CorrelationMatrix, GaussianFit, PriceTable, ReturnMatrix, SynthSpec, WindowSpec};
pub use meanfield::{FixedPointResult, MeanFieldParams, WeightDist};
pub use network::{EnergyReport, Histogram2D, SignState, SignedWeightedNetwork};
pub use simulate::{InitKind, ObservableTrace, SimConfig, SweepResult};
