//! Diffusive molecular communication channel models for a spherical receiver
//! whose surface is covered by circular absorbing patches.
//!
//! The crate provides three layers:
//!
//! * analytic channel impulse responses (hitting rate and cumulative absorbed
//!   fraction) for point and membrane-fusion transmitters, obtained by
//!   homogenizing the patchy receiver boundary into an effective uniform
//!   reaction rate,
//! * a particle-based Brownian simulator that serves as an independent check
//!   of every analytic curve, and
//! * an ON/OFF-keying transmission layer with a Poisson observation model,
//!   intersymbol interference and threshold detection.
//!
//! All lengths are in micrometres, times in seconds, diffusion coefficients
//! in um^2/s and reaction rates in um/s.

pub mod cir;
pub mod cli;
pub mod comms;
pub mod error;
pub mod geometry;
pub mod homogenization;
pub mod numerics;
pub mod sim;

pub use cir::{ChannelParams, CirSeries, Provenance, TxSpec};
pub use error::McError;
pub use geometry::{Ap, ApLayout};
pub use homogenization::{Capacitance, EffectiveRate};
