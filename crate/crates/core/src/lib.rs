//! Desk-scale pipeline for studying how identification error scales with
//! training resources on port-Hamiltonian benchmark systems.
//!
//! The crate covers the full loop: simulate benchmark dynamics under
//! multisine excitation ([`dynamics`], [`signal`], [`datagen`]), train
//! neural identification models with hand-written reverse mode ([`nn`],
//! [`model`], [`train`]), log every run in an append-only registry
//! ([`registry`], [`sweep`]), and condense the cloud of outcomes into lower
//! envelopes and fitted broken power laws ([`envelope`], [`nslfit`]).

// Numeric kernels index several arrays in lockstep, so plain `for i in 0..n`
// loops stay. Negated float comparisons in validation guards are deliberate:
// `!(x > 0.0)` must fail for NaN, which `x <= 0.0` would let through.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adam;
pub mod datagen;
pub mod dynamics;
pub mod envelope;
pub mod error;
pub mod model;
pub mod nn;
pub mod nslfit;
pub mod registry;
pub mod seed;
pub mod signal;
pub mod sweep;
pub mod train;

pub use error::{Error, Result};
